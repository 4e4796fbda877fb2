use std::path::Path;
use std::process::Command;

fn predev(args: &[&str], out: &Path) -> (i32, String) {
    let output =
        Command::new(env!("CARGO_BIN_EXE_predev")).args(args).arg("--out").arg(out).output().expect("binary runs");
    (output.status.code().unwrap_or(-1), String::from_utf8_lossy(&output.stderr).into_owned())
}

const CONFIG: &str = r#"
name = "decay"
seed = 2

[model]
name = "decay"

[[experiments]]
condition = "x0=1"
observe = [{ observable = "x", times = [0.5, 1.0, 1.5, 2.0] }]

[[predictions]]
condition = "x0=2"
observe = [{ observable = "x", times = [3.0] }]

[data.truth]
noise = { sigma = 0.05, known_variance = true }

[solver]
fit_restarts = 2
deviation_restarts = 2

[bootstrap]
samples = 100
"#;

#[test]
fn simulate_then_fit_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("decay.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let cfg = cfg.to_str().unwrap();

    let (code, err) = predev(&["simulate", "--config", cfg], dir.path());
    assert_eq!(code, 0, "{err}");
    assert!(dir.path().join("data.csv").exists());
    assert!(dir.path().join("report.json").exists());

    let with_file =
        CONFIG.replace("[data.truth]\nnoise = { sigma = 0.05, known_variance = true }", "[data]\nfile = \"data.csv\"");
    std::fs::write(dir.path().join("from_file.toml"), with_file).unwrap();
    let out = dir.path().join("fit");
    let (code, err) = predev(&["fit", "--config", dir.path().join("from_file.toml").to_str().unwrap()], &out);
    assert_eq!(code, 0, "{err}");
    let report = std::fs::read_to_string(out.join("report.json")).unwrap();
    assert!(report.contains("theta_star"));
    assert!(out.join("fit.csv").exists());
}

#[test]
fn global_flags_reach_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("decay.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let (code, err) = predev(
        &["deviate", "--config", cfg.to_str().unwrap(), "--seed", "9", "--restarts", "3", "--bootstrap-samples", "120"],
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
    let report = predev::io::Report::load(dir.path().join("report.json")).unwrap();
    assert_eq!(report.seed, 9);
    assert_eq!(report.config.solver.fit_restarts, 3);
    assert_eq!(report.config.bootstrap.samples, 120);
    assert_eq!(report.fit.unwrap().interval.unwrap().samples.len(), 120);

    let out = dir.path().join("plots");
    let (code, err) = predev(&["report", dir.path().join("report.json").to_str().unwrap()], &out);
    assert_eq!(code, 0, "{err}");
    assert!(out.join("deviation.csv").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // Neither --config nor --scenario.
    assert_eq!(predev(&["fit"], dir.path()).0, 2);
    assert_eq!(predev(&["fit", "--scenario", "no_such"], dir.path()).0, 2);
    assert_eq!(predev(&["fit", "--scenario", "decay", "--eta-multiplier", "3"], dir.path()).0, 2);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, CONFIG.replace("samples = 100", "samples = 100\nbogus = 1")).unwrap();
    assert_eq!(predev(&["fit", "--config", bad.to_str().unwrap()], dir.path()).0, 2);

    let missing = dir.path().join("missing.toml");
    std::fs::write(
        &missing,
        CONFIG.replace("[data.truth]\nnoise = { sigma = 0.05, known_variance = true }", "[data]\nfile = \"none.csv\""),
    )
    .unwrap();
    assert_eq!(predev(&["fit", "--config", missing.to_str().unwrap()], dir.path()).0, 4);

    let garbled = dir.path().join("garbled.csv");
    std::fs::write(&garbled, "condition_id,observable,time,replicate,value\nx0=1,x,0.5,0,abc\n").unwrap();
    let cfg = dir.path().join("garbled.toml");
    std::fs::write(
        &cfg,
        CONFIG
            .replace("[data.truth]\nnoise = { sigma = 0.05, known_variance = true }", "[data]\nfile = \"garbled.csv\""),
    )
    .unwrap();
    let (code, err) = predev(&["fit", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code, 4, "{err}");

    // Every parameter in the box blows up before the last observation.
    std::fs::write(
        dir.path().join("blowup.csv"),
        "condition_id,observable,time,replicate,value,variance\nbase,x,0.5,0,2.0,0.01\nbase,x,1.5,0,5.0,0.01\n",
    )
    .unwrap();
    let blowup = dir.path().join("blowup.toml");
    std::fs::write(&blowup, BLOWUP).unwrap();
    let (code, err) = predev(&["fit", "--config", blowup.to_str().unwrap()], dir.path());
    assert_eq!(code, 3, "{err}");
}

const BLOWUP: &str = r#"
name = "blowup"

[model]
theta = [1.0]
bounds = [{ lower = 0.9, upper = 1.1 }]

[model.inline]
states = ["x"]
params = ["k"]
rhs = ["k * x * x"]
initial = ["1"]

[[conditions]]
id = "base"
factors = {}

[[experiments]]
condition = "base"
observe = [{ observable = "x", times = [0.5, 1.5] }]

[data]
file = "blowup.csv"
"#;
