//! A model written as text in the scenario file: logistic growth observed
//! early, extrapolated to a later time.

use predev::io::{run_pipeline, ScenarioConfig};

const SCENARIO: &str = r#"
name = "logistic"
seed = 7
stages = ["simulate", "fit", "deviate"]

[model]
theta = [0.8, 50.0]
bounds = [{ lower = 0.1, upper = 5.0 }, { lower = 10.0, upper = 500.0 }]

[model.inline]
states = ["n"]
params = ["r", "capacity"]
factors = ["n0"]
rhs = ["r * n * (1 - n / capacity)"]
initial = ["n0"]

[[conditions]]
id = "small"
factors = { n0 = 2.0 }

[[experiments]]
condition = "small"
observe = [{ observable = "n", grid = { start = 0.5, end = 4.0, step = 0.5 } }]

[[predictions]]
condition = "small"
observe = [{ observable = "n", times = [6.0, 8.0, 10.0] }]

[data.truth]
noise = { sigma = 0.5, known_variance = true }
replicates = 2

[solver]
fit_restarts = 5
deviation_restarts = 5
"#;

fn main() -> predev::Result<()> {
    let config = ScenarioConfig::from_toml(SCENARIO)?;
    let report = run_pipeline(&config);
    if let Some(f) = &report.failure {
        eprintln!("stage {} failed: {}", f.stage, f.message);
        std::process::exit(f.exit_code);
    }
    let fit = report.fit.as_ref().expect("fit stage ran");
    println!("theta* = {:?}, z* = {:.3}", fit.theta_star, fit.z_star);
    let dev = report.deviation.as_ref().expect("deviate stage ran");
    println!("deviation {:.3} with z*_u = {:.3}", dev.value, dev.z_upper);
    for p in &dev.trace {
        println!("  n({}) between {:.2} and {:.2}", p.time, p.model_1.min(p.model_2), p.model_1.max(p.model_2));
    }
    Ok(())
}
