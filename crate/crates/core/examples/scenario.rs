//! Run a built-in scenario end to end and write its report and plot tables.
//!
//! `cargo run --release --example scenario -- [decay|lorenz|lotka_volterra|hiv] [out_dir]`

use predev::io::{builtin_scenario, emit_plot_data, run_pipeline};

fn main() -> predev::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "decay".into());
    let out = args.next().unwrap_or_else(|| format!("out/{name}"));

    let config = builtin_scenario(&name)?;
    println!("stages: {:?}", config.stages);
    let report = run_pipeline(&config);
    std::fs::create_dir_all(&out)?;
    report.save(format!("{out}/report.json"))?;
    for path in emit_plot_data(&report, &out)? {
        println!("wrote {}", path.display());
    }
    if let Some(fit) = &report.fit {
        println!("theta* = {:?}", fit.theta_star);
    }
    if let Some(dev) = &report.deviation {
        println!("deviation {:.3}", dev.value);
    }
    if let Some(ranking) = &report.ranking {
        for e in &ranking.entries {
            let value = e.estimate.as_ref().map_or(f64::NAN, |x| x.value);
            println!("  {:<24} {value:>10.3}", e.name);
        }
    }
    if let Some(v) = &report.validation {
        for (dist, r) in &v.lemma1 {
            println!("{dist}: {} violations in {}", r.violations.len(), r.checked);
        }
        if let Some(c) = &v.coverage {
            println!("coverage {:.3} over {} trials", c.coverage, c.trials.len());
        }
        if let Some(p) = &v.proposition {
            println!("closeness bound holds: {}", p.passed());
        }
    }
    if let Some(f) = &report.failure {
        eprintln!("stage {} failed: {}", f.stage, f.message);
        std::process::exit(f.exit_code);
    }
    Ok(())
}
