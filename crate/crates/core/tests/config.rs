use predev::design::EtaMode;
use predev::io::{builtin_names, builtin_scenario, Overrides, ScenarioConfig};

const INLINE: &str = r#"
name = "inline decay"
seed = 4

[model]
theta = [0.7]
bounds = [{ lower = 0.1, upper = 5.0 }]

[model.inline]
states = ["x"]
params = ["k"]
factors = ["x0"]
rhs = ["-k * x"]
initial = ["x0"]

[[conditions]]
id = "a"
factors = { x0 = 3.0 }

[[experiments]]
condition = "a"
observe = [{ observable = "x", times = [0.5, 1.0, 1.5] }]

[[predictions]]
condition = "a"
observe = [{ observable = "x", times = [3.0] }]
scales = { x = 0.1 }

[data.truth]
noise = { sigma = 0.1, known_variance = true }
"#;

#[test]
fn every_builtin_scenario_resolves_and_round_trips() {
    for name in builtin_names() {
        let cfg = builtin_scenario(name).unwrap();
        let scenario = cfg.resolve().unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(!scenario.experiments.is_empty(), "{name}");
        assert!(!scenario.problems.is_empty(), "{name}");
        let back = ScenarioConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg, "{name}");
    }
}

#[test]
fn hiv_scenario_has_twenty_candidates() {
    let s = builtin_scenario("hiv").unwrap().resolve().unwrap();
    assert_eq!(s.candidates.len(), 20);
    assert!(s.candidates.iter().all(|c| c.replicates == 4));
}

#[test]
fn inline_model_resolves() {
    let cfg = ScenarioConfig::from_toml(INLINE).unwrap();
    let s = cfg.resolve().unwrap();
    assert_eq!(s.model().param_dim(), 1);
    assert_eq!(s.theta_true.as_deref(), Some(&[0.7][..]));
    assert_eq!(s.experiments[0].measurements[0].times, vec![0.5, 1.0, 1.5]);
}

#[test]
fn unknown_fields_and_models_are_config_errors() {
    let bad = INLINE.replace("seed = 4", "seed = 4\nrestart_count = 3");
    let e = ScenarioConfig::from_toml(&bad).unwrap_err();
    assert_eq!(e.exit_code(), 2);

    let mut cfg = builtin_scenario("decay").unwrap();
    cfg.model.name = Some("no_such_model".into());
    assert_eq!(cfg.resolve().unwrap_err().exit_code(), 2);

    assert_eq!(builtin_scenario("nope").unwrap_err().exit_code(), 2);
}

#[test]
fn grid_with_bad_step_is_rejected() {
    let bad = INLINE.replace(
        r#"observe = [{ observable = "x", times = [0.5, 1.0, 1.5] }]"#,
        r#"observe = [{ observable = "x", grid = { start = 0.0, end = 1.0, step = 0.0 } }]"#,
    );
    let cfg = ScenarioConfig::from_toml(&bad).unwrap();
    assert_eq!(cfg.resolve().unwrap_err().exit_code(), 2);
}

#[test]
fn overrides_replace_config_values() {
    let mut cfg = builtin_scenario("lorenz").unwrap();
    cfg.apply(&Overrides {
        seed: Some(99),
        restarts: Some(4),
        alpha: Some(0.1),
        bootstrap_samples: Some(150),
        eta_mode: Some(EtaMode::Fixed),
        eta_value: Some(2.5),
        eta_multiplier: Some(4.0),
    });
    assert_eq!(cfg.seed, 99);
    assert_eq!(cfg.solver.fit_restarts, 4);
    assert_eq!(cfg.solver.deviation_restarts, 4);
    assert_eq!(cfg.bootstrap.alpha, 0.1);
    assert_eq!(cfg.bootstrap.samples, 150);
    assert_eq!(cfg.eta.mode, EtaMode::Fixed);
    assert_eq!(cfg.eta.resolve(10.0, 5, 5).unwrap(), 10.0);

    let untouched = builtin_scenario("lorenz").unwrap();
    let mut same = untouched.clone();
    same.apply(&Overrides::default());
    assert_eq!(same, untouched);
}
