use std::collections::BTreeSet;

use super::config::{Scenario, ScenarioConfig, Stage};
use super::dataset::read_dataset;
use super::report::{pair_rows, PlotRow, Report, SeriesKind, StageFailure, ValidationReport};
use crate::design::{eta_chi2, sequential_design, DataSource, DesignContext, RecordedSource, SimulatedSource};
use crate::error::{Error, Result};
use crate::estimation::{bootstrap_interval, fit, Dataset, Experiment};
use crate::models::{simulate_dataset, NoiseDistribution};
use crate::ode::{integrate, ModelSystem, Tolerances};
use crate::validation::{
    check_fit_error_ordering, check_lemma1, check_proposition, grid, run_coverage_study, CoverageSpec, OrderingSpec,
};

/// All observations the scenario has access to: the data file as is, or
/// data simulated for the completed experiments from the truth.
pub fn load_scenario_data(config: &ScenarioConfig, scenario: &Scenario) -> Result<Dataset> {
    match (&config.data.file, &config.data.truth) {
        (Some(path), _) => {
            let file = std::fs::File::open(path)
                .map_err(|e| Error::Data(format!("cannot open dataset '{}': {e}", path.display())))?;
            read_dataset(file)
        }
        (None, Some(truth)) => simulate_dataset(
            scenario.model(),
            scenario.theta_true.as_ref().expect("truth resolves parameters"),
            &scenario.experiments,
            &truth.noise,
            truth.replicates,
            config.seed,
        ),
        (None, None) => Err(Error::Config("data needs a 'file' or a 'truth' section".into())),
    }
}

fn fit_rows(
    model: &dyn ModelSystem,
    theta: &[f64],
    experiments: &[Experiment],
    data: &Dataset,
) -> Result<Vec<PlotRow>> {
    let mut rows = Vec::new();
    for e in experiments {
        let mut times: Vec<f64> = e.measurements.iter().flat_map(|m| m.times.iter().copied()).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let tr = integrate(model, theta, &e.factors, &times, &Tolerances::fitting())?.into_result()?;
        for m in &e.measurements {
            let series = data.find(e.condition_id(), &m.observable.name);
            for &t in &m.times {
                let k = times.iter().position(|&s| s == t).expect("time collected");
                let row = |series, value| PlotRow {
                    condition_id: e.condition_id().to_string(),
                    observable: m.observable.name.clone(),
                    time: t,
                    series,
                    value,
                };
                rows.push(row(SeriesKind::BestFit, m.observable.apply(tr.state(k))));
                if let Some(s) = series {
                    if let Some(j) = s.time_index(t) {
                        rows.extend(s.replicates[j].iter().map(|&v| row(SeriesKind::Data, v)));
                    }
                }
            }
        }
    }
    Ok(rows)
}

fn validate(config: &ScenarioConfig, scenario: &Scenario) -> Result<ValidationReport> {
    let v = &config.validate;
    let mut out = ValidationReport::default();
    if v.lemma1 {
        let xs = grid(0.0, 3.0, 0.1);
        let shifts = grid(-3.0, 3.0, 0.1);
        for (name, dist) in [
            ("normal", NoiseDistribution::Normal),
            ("uniform", NoiseDistribution::Uniform),
            ("student_t_3", NoiseDistribution::StudentT { dof: 3.0 }),
        ] {
            out.lemma1.push((name.to_string(), check_lemma1(&dist, &xs, &shifts)));
        }
    }
    let truth = || {
        config
            .data
            .truth
            .as_ref()
            .ok_or_else(|| Error::Config("this validation study needs a 'truth' data section".into()))
    };
    let model = scenario.model();
    if let Some(c) = &v.coverage {
        let t = truth()?;
        let mut fit = config.fit_options(scenario);
        let mut deviation = config.deviation_options(scenario);
        fit.restarts = c.fit_restarts.unwrap_or(fit.restarts);
        deviation.restarts = c.deviation_restarts.unwrap_or(deviation.restarts);
        let spec = CoverageSpec {
            theta_true: scenario.theta_true.clone().expect("truth resolves parameters"),
            noise: t.noise.clone(),
            experiments: scenario.experiments.clone(),
            replicates: t.replicates,
            problems: scenario.problems.clone(),
            trials: c.trials,
            fit,
            bootstrap: config.bootstrap.clone(),
            deviation,
            tolerance: 1e-6,
        };
        out.coverage = Some(run_coverage_study(model, &spec, config.seed)?);
    }
    if let Some(p) = &v.proposition {
        let t = truth()?;
        let cand = scenario
            .candidates
            .iter()
            .find(|c| c.name == p.candidate)
            .ok_or_else(|| Error::Config(format!("unknown candidate '{}'", p.candidate)))?;
        let theta = scenario.theta_true.as_ref().expect("truth resolves parameters");
        let seed = crate::rng::derive_seed(config.seed, "proposition", 0);
        let data =
            simulate_dataset(model, theta, std::slice::from_ref(&cand.experiment), &t.noise, cand.replicates, seed)?;
        let eta = match p.eta {
            Some(e) => e,
            None => eta_chi2(cand.observation_count(), config.eta.alpha)?,
        };
        let mut data = data;
        data.estimate_missing_variances(None)?;
        out.proposition = Some(check_proposition(model, &cand.experiment, &data, theta, eta, p.pairs, config.seed)?);
    }
    if let Some(o) = &v.ordering {
        let t = truth()?;
        let spec = OrderingSpec {
            theta_true: scenario.theta_true.clone().expect("truth resolves parameters"),
            theta_star: None,
            noise: t.noise.clone(),
            experiments: scenario.experiments.clone(),
            replicates: t.replicates,
            trials: o.trials,
            thresholds: o.thresholds.clone(),
            fit: config.fit_options(scenario),
        };
        out.ordering = Some(check_fit_error_ordering(model, &spec, config.seed)?);
    }
    Ok(out)
}

fn stage_name(s: Stage) -> String {
    serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn run(config: &ScenarioConfig, report: &mut Report) -> std::result::Result<(), (String, Error)> {
    let stages: BTreeSet<Stage> = config.stages.iter().copied().collect();
    let at = |s: Stage| move |e: Error| (stage_name(s), e);
    let scenario = config.resolve().map_err(|e| ("config".to_string(), e))?;
    let model = scenario.model();
    let seed = config.seed;

    let full = load_scenario_data(config, &scenario).map_err(|e| ("data".to_string(), e))?;
    if stages.contains(&Stage::Simulate) {
        report.dataset = Some(full.clone());
    }
    let needs_context =
        [Stage::Deviate, Stage::Impact, Stage::Rank, Stage::Sequence].iter().any(|s| stages.contains(s));
    if !needs_context && !stages.contains(&Stage::Fit) {
        if stages.contains(&Stage::Validate) {
            report.validation = Some(validate(config, &scenario).map_err(at(Stage::Validate))?);
        }
        return Ok(());
    }
    let mut data = full.subset(&scenario.experiments);
    data.estimate_missing_variances(config.solver.variance_floor).map_err(at(Stage::Fit))?;

    if !needs_context {
        let opts = config.fit_options(&scenario);
        let mut best = fit(model, &scenario.experiments, &data, &opts, seed).map_err(at(Stage::Fit))?;
        let interval =
            bootstrap_interval(model, &scenario.experiments, &data, &best.theta_star, &opts, &config.bootstrap, seed)
                .map_err(at(Stage::Fit))?;
        best.interval = Some(interval);
        let rows = fit_rows(model, &best.theta_star, &scenario.experiments, &data).map_err(at(Stage::Fit))?;
        report.tables.insert("fit".into(), rows);
        report.fit = Some(best);
    } else {
        let mut ctx = DesignContext::new(
            scenario.descriptor.system.clone(),
            scenario.experiments.clone(),
            data,
            scenario.problems.clone(),
            config.design_settings(&scenario),
            seed,
        )
        .map_err(at(Stage::Deviate))?;
        let rows = fit_rows(model, &ctx.fit.theta_star, &ctx.experiments, &ctx.dataset).map_err(at(Stage::Fit))?;
        report.tables.insert("fit".into(), rows);
        report.tables.insert("deviation".into(), pair_rows(&ctx.deviation.trace, SeriesKind::Dev1, SeriesKind::Dev2));
        report.fit = Some(ctx.fit.clone());
        report.deviation = Some(ctx.deviation.clone());

        if stages.contains(&Stage::Impact) || stages.contains(&Stage::Rank) {
            let stage = if stages.contains(&Stage::Rank) { Stage::Rank } else { Stage::Impact };
            let ranking = ctx.rank_candidates(&scenario.candidates, seed).map_err(at(stage))?;
            for e in &ranking.entries {
                if let Some(est) = &e.estimate {
                    let mut rows = pair_rows(&est.detail.trace, SeriesKind::Impact1, SeriesKind::Impact2);
                    rows.extend(pair_rows(&est.detail.candidate_trace, SeriesKind::Impact1, SeriesKind::Impact2));
                    report.tables.insert(format!("impact.{}", e.name), rows);
                }
            }
            report.deviation = Some(ctx.deviation.clone());
            report.ranking = Some(ranking);
        }
        if stages.contains(&Stage::Sequence) {
            let mut source: Box<dyn DataSource> = match &config.data.truth {
                Some(t) => Box::new(SimulatedSource {
                    model: scenario.descriptor.system.clone(),
                    theta_true: scenario.theta_true.clone().expect("truth resolves parameters"),
                    noise: t.noise.clone(),
                    seed,
                }),
                None => Box::new(RecordedSource { dataset: full }),
            };
            let (trace, done) =
                sequential_design(ctx, &scenario.candidates, source.as_mut(), config.sequence.rounds, seed)
                    .map_err(at(Stage::Sequence))?;
            report
                .tables
                .insert("sequence.final".into(), pair_rows(&done.deviation.trace, SeriesKind::Dev1, SeriesKind::Dev2));
            report.design = Some(trace);
        }
    }
    if stages.contains(&Stage::Validate) {
        report.validation = Some(validate(config, &scenario).map_err(at(Stage::Validate))?);
    }
    Ok(())
}

/// Run the config's stages in dependency order. A failing stage leaves the
/// results gathered so far in the report together with a failure record.
pub fn run_pipeline(config: &ScenarioConfig) -> Report {
    let mut report = Report::new(config);
    if let Err((stage, e)) = run(config, &mut report) {
        log::error!("stage '{stage}' failed: {e}");
        report.failure = Some(StageFailure { stage, message: e.to_string(), exit_code: e.exit_code() });
    }
    report
}
