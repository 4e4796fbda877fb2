//! Greedy experiment selection on the interferon/HIV model with synthetic
//! data: start from one experiment, rank the 20 others by worst-case impact
//! on the refractory-cell prediction, and add the best few.
//!
//! `cargo run --release --example hiv_design -- [seed] [restarts] [rounds] [--brute]`

use std::sync::Arc;
use std::time::Instant;

use predev::design::{
    actual_impact, sequential_design, CandidateExperiment, DataSource, DesignContext, DesignSettings, SimulatedSource,
};
use predev::deviation::{DeviationOptions, PredictionProblem};
use predev::estimation::{Experiment, FitOptions};
use predev::models::{hiv_factors, hiv_ifn, ifn_condition, NoiseSpec, IFN_LEVELS};

const OBSERVED: [(&str, f64); 3] = [("C+CI", 5.0), ("CH+CHI", 2.0), ("H", 15.0)];

fn main() -> predev::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let brute = args.iter().any(|a| a == "--brute");
    let mut nums = args.iter().filter_map(|a| a.parse::<u64>().ok());
    let seed = nums.next().unwrap_or(1);
    let restarts = nums.next().unwrap_or(10) as usize;
    let rounds = nums.next().unwrap_or(3) as usize;

    let d = hiv_ifn();
    let model = d.system.clone();
    let times = vec![1.0, 2.0, 3.0];
    let mut noise = NoiseSpec::normal(1.0);
    for (obs, sigma) in OBSERVED {
        noise.per_observable.insert(obs.to_string(), sigma);
    }
    let replicates = 4;

    let first = ifn_condition(0.002);
    let mut initial = None;
    let mut candidates = Vec::new();
    for &level in &IFN_LEVELS {
        for (obs, sigma) in OBSERVED {
            let e = Experiment::new(hiv_factors(level)).measure(d.observable(obs)?, times.clone());
            if obs == "C+CI" && e.condition_id() == first {
                initial = Some(e);
            } else {
                let name = format!("{obs} at {}", e.condition_id());
                candidates.push(CandidateExperiment::new(name, e, replicates).with_scale(obs, sigma));
            }
        }
    }
    let initial = initial.expect("initial experiment is in the grid");
    let mut source = SimulatedSource { model: model.clone(), theta_true: d.default_theta.clone(), noise, seed };
    let data = source.acquire(&CandidateExperiment::new("initial", initial.clone(), replicates))?;

    let predict = PredictionProblem::new(Experiment::new(hiv_factors(0.002)).measure(d.observable("CI")?, times))
        .with_scale("CI", OBSERVED[0].1);
    let mut fit = FitOptions::new(d.parameter_space.clone());
    fit.restarts = restarts;
    let mut dev = DeviationOptions::new(d.parameter_space.clone());
    dev.restarts = restarts;
    let settings = DesignSettings::new(fit, dev);

    let clock = Instant::now();
    let mut ctx = DesignContext::new(model.clone(), vec![initial], data, vec![predict], settings, seed)?;
    println!("initial deviation {:.3}, z*_u {:.3} ({:.1?})", ctx.deviation.value, ctx.z_upper(), clock.elapsed());

    let ranking = ctx.rank_candidates(&candidates, seed)?;
    println!("ranking ({:.1?}, refined: {}):", clock.elapsed(), ranking.refined);
    for e in &ranking.entries {
        match &e.estimate {
            Some(est) => println!(
                "  {:<16} {:>10.3}  reduction {:>6.1}%{}",
                e.name,
                est.value,
                100.0 * e.predicted_reduction.unwrap_or(0.0),
                if e.flagged { "  *" } else { "" }
            ),
            None => println!("  {:<16} failed: {}", e.name, e.error.as_deref().unwrap_or("")),
        }
    }

    if brute {
        println!("actual impact of each candidate:");
        for c in &candidates {
            let new = source.acquire(c)?;
            let after = actual_impact(&ctx, c, &new, seed)?;
            println!("  {:<16} {:>10.3}", c.name, after.value);
        }
        println!("({:.1?})", clock.elapsed());
    }

    let (trace, done) = sequential_design(ctx.clone(), &candidates, &mut source, rounds, seed)?;
    for r in &trace.rounds {
        println!(
            "round {}: {} (predicted {:.3}) deviation {:.3} -> {:.3}",
            r.round, r.chosen, r.predicted_value, r.deviation_before, r.deviation_after
        );
    }
    println!("stopped: {} ({:.1?})", trace.stop_reason, clock.elapsed());

    let mut all = ctx.clone();
    for c in &candidates {
        let new = source.acquire(c)?;
        let mut data = all.dataset.clone();
        data.merge(&new);
        let mut experiments = all.experiments.clone();
        experiments.push(c.experiment.clone());
        all.dataset = data;
        all.experiments = experiments;
    }
    let all = DesignContext::new(Arc::clone(&model), all.experiments, all.dataset, all.problems, all.settings, seed)?;
    println!(
        "all candidates: deviation {:.3}; after {} rounds: {:.3} ({:.0}%) ({:.1?})",
        all.deviation.value,
        trace.rounds.len(),
        done.deviation.value,
        100.0 * done.deviation.value / all.deviation.value,
        clock.elapsed()
    );
    Ok(())
}
