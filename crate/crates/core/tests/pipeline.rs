use predev::io::{emit_plot_data, load_dataset, run_pipeline, save_dataset, Report, ScenarioConfig, Stage};

const SCENARIO: &str = r#"
name = "chain"
seed = 11
stages = ["simulate", "fit", "deviate", "rank"]

[model]
name = "chain"

[[experiments]]
condition = "x"
observe = [{ observable = "x", times = [0.5, 1.0, 1.5, 2.0] }]

[[predictions]]
condition = "x"
observe = [{ observable = "y", times = [1.0, 2.0, 3.0] }]
scales = { y = 0.2 }

[[candidates]]
name = "y early"
condition = "x"
observe = [{ observable = "y", times = [0.5, 1.0] }]
replicates = 2
scales = { y = 0.2 }

[[candidates]]
name = "x late"
condition = "x"
observe = [{ observable = "x", times = [3.0, 4.0] }]
replicates = 2

[data.truth]
noise = { sigma = 0.2, known_variance = true }
replicates = 2

[solver]
fit_restarts = 3
deviation_restarts = 3

[bootstrap]
samples = 100
"#;

fn config() -> ScenarioConfig {
    ScenarioConfig::from_toml(SCENARIO).unwrap()
}

#[test]
fn runs_are_byte_identical_for_a_seed() {
    let a = run_pipeline(&config());
    assert!(a.failure.is_none(), "{:?}", a.failure);
    let b = run_pipeline(&config());
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());

    let mut other = config();
    other.seed = 12;
    let c = run_pipeline(&other);
    assert_ne!(a.to_json().unwrap(), c.to_json().unwrap());
}

#[test]
fn report_carries_each_requested_stage() {
    let r = run_pipeline(&config());
    let fit = r.fit.as_ref().unwrap();
    let interval = fit.interval.as_ref().unwrap();
    assert!(interval.lower <= interval.upper);
    let dev = r.deviation.as_ref().unwrap();
    assert!(dev.fit_errors.iter().all(|z| *z <= dev.z_upper * (1.0 + 1e-6)));
    let ranking = r.ranking.as_ref().unwrap();
    assert_eq!(ranking.entries.len(), 2);
    // Observing the predicted species narrows the prediction more than more
    // of the already observed one.
    assert_eq!(ranking.best().unwrap().name, "y early");
    for e in &ranking.entries {
        let est = e.estimate.as_ref().unwrap();
        assert!(est.value <= ranking.current_deviation * (1.0 + 1e-6));
        assert!(est.candidate_deviation <= est.eta * (1.0 + 1e-6));
    }
    assert!(r.tables.contains_key("fit"));
    assert!(r.tables.contains_key("deviation"));
    assert!(r.tables.contains_key("impact.y early"));
    assert!(r.dataset.is_some());

    let back = Report::from_json(&r.to_json().unwrap()).unwrap();
    assert_eq!(back.to_json().unwrap(), r.to_json().unwrap());
}

#[test]
fn plot_files_have_a_fixed_schema() {
    let r = run_pipeline(&config());
    let dir = tempfile::tempdir().unwrap();
    let files = emit_plot_data(&r, dir.path()).unwrap();
    let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for expected in ["fit.csv", "deviation.csv", "ranking.csv", "impact.y_early.csv"] {
        assert!(names.iter().any(|n| n == expected), "missing {expected} in {names:?}");
    }
    let mut reader = csv::Reader::from_path(dir.path().join("deviation.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, ["condition_id", "observable", "time", "series", "value"]);
    let series: Vec<String> = reader.records().map(|r| r.unwrap()[3].to_string()).collect();
    assert_eq!(series.iter().filter(|s| *s == "dev1").count(), 3);
    assert_eq!(series.iter().filter(|s| *s == "dev2").count(), 3);

    let mut reader = csv::Reader::from_path(dir.path().join("fit.csv")).unwrap();
    let kinds: std::collections::BTreeSet<String> = reader.records().map(|r| r.unwrap()[3].to_string()).collect();
    assert!(kinds.contains("data") && kinds.contains("best_fit"), "{kinds:?}");
}

#[test]
fn nothing_to_plot_writes_nothing() {
    let mut cfg = config();
    cfg.stages = vec![Stage::Simulate];
    let r = run_pipeline(&cfg);
    assert!(r.failure.is_none());
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plots");
    assert!(emit_plot_data(&r, &out).unwrap().is_empty());
    assert!(!out.exists());
}

#[test]
fn recorded_data_gives_the_same_fit_as_simulated() {
    let mut cfg = config();
    cfg.stages = vec![Stage::Simulate];
    let simulated = run_pipeline(&cfg);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    save_dataset(simulated.dataset.as_ref().unwrap(), &path).unwrap();
    assert_eq!(&load_dataset(&path).unwrap(), simulated.dataset.as_ref().unwrap());

    let mut from_truth = config();
    from_truth.stages = vec![Stage::Fit];
    let mut from_file = from_truth.clone();
    from_file.data.truth = None;
    from_file.data.file = Some(path);
    let a = run_pipeline(&from_truth);
    let b = run_pipeline(&from_file);
    assert_eq!(a.fit.as_ref().unwrap().theta_star, b.fit.as_ref().unwrap().theta_star);
}

#[test]
fn failures_are_recorded_with_exit_codes() {
    let mut cfg = config();
    cfg.data.truth = None;
    cfg.data.file = Some("/nonexistent/data.csv".into());
    let r = run_pipeline(&cfg);
    let f = r.failure.unwrap();
    assert_eq!(f.exit_code, 4);
    assert_eq!(f.stage, "data");

    let mut cfg = config();
    cfg.bootstrap.samples = 10;
    let r = run_pipeline(&cfg);
    let f = r.failure.unwrap();
    assert_eq!(f.exit_code, 2);
    assert!(r.dataset.is_some(), "earlier results stay in the report");

    let mut cfg = config();
    cfg.candidates[0].condition = "nowhere".into();
    assert_eq!(run_pipeline(&cfg).failure.unwrap().exit_code, 2);
}
