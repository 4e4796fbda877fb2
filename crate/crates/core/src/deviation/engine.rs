use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{
    problem_layout, resolve_scale, DeviationOptions, DeviationResult, PredictionProblem, RestartOutcome, TracePoint,
};
use crate::error::{Error, Result};
use crate::estimation::{Dataset, Experiment};
use crate::objective::{Conditions, DevLayout, FitLayout};
use crate::ode::{ModelSystem, Tolerances, Trajectory};
use crate::optim::{maximize_with_barrier, space::pull_back, ConstrainedEval, ConstrainedProblem, ParamSpace, Scale};
use crate::rng;

/// Extra closeness constraint `z_dev(θ¹, θ²; P′) ≤ η` on a candidate
/// experiment observed with `replicates` replicates.
pub(crate) struct PairConstraint<'a> {
    pub experiment: &'a Experiment,
    pub replicates: usize,
    pub scales: &'a BTreeMap<String, f64>,
    pub eta: f64,
}

/// Problem (fit constraints, prediction layout, optional candidate layout)
/// shared by deviation and impact solves.
pub(crate) struct Engine<'a> {
    model: &'a dyn ModelSystem,
    conditions: Conditions,
    fit: FitLayout,
    dev: DevLayout,
    cand: Option<(DevLayout, f64)>,
    space: ParamSpace,
    z_u: f64,
    bounds: Vec<f64>,
}

struct Stage<'e, 'a> {
    engine: &'e Engine<'a>,
    tol: Tolerances,
}

impl ConstrainedProblem for Stage<'_, '_> {
    fn dim(&self) -> usize {
        2 * self.engine.space.dim()
    }

    fn bounds(&self) -> &[f64] {
        &self.engine.bounds
    }

    fn box_bounds(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let (mut lo, mut hi) = self.engine.space.internal_box();
        lo.extend_from_within(..);
        hi.extend_from_within(..);
        Some((lo, hi))
    }

    fn evaluate(&self, x: &[f64], derivatives: bool) -> Option<ConstrainedEval> {
        let e = self.engine;
        let p = e.space.dim();
        let t1 = e.space.to_theta(&x[..p]);
        let t2 = e.space.to_theta(&x[p..]);
        let a = e.conditions.simulate(e.model, &t1, derivatives, &self.tol)?;
        let b = e.conditions.simulate(e.model, &t2, derivatives, &self.tol)?;
        if !derivatives {
            let mut constraints = vec![e.fit.value(&a), e.fit.value(&b)];
            if let Some((layout, _)) = &e.cand {
                constraints.push(layout.value(&a, &b));
            }
            return Some(ConstrainedEval { objective: e.dev.value(&a, &b), constraints, ..Default::default() });
        }
        let mut diag = e.space.jacobian_diag(&t1);
        diag.extend(e.space.jacobian_diag(&t2));
        let n = 2 * p;
        let pad = |d: crate::objective::Derivatives, offset: usize| {
            let mut g = vec![0.0; n];
            g[offset..offset + p].copy_from_slice(&d.gradient);
            let mut h = vec![0.0; n * n];
            for r in 0..p {
                h[(offset + r) * n + offset..(offset + r) * n + offset + p]
                    .copy_from_slice(&d.curvature[r * p..(r + 1) * p]);
            }
            (d.value, g, h)
        };
        let (f1, mut g1, mut h1) = pad(e.fit.derivatives(&a), 0);
        let (f2, mut g2, mut h2) = pad(e.fit.derivatives(&b), p);
        pull_back(&diag, &mut g1, Some(&mut h1));
        pull_back(&diag, &mut g2, Some(&mut h2));
        let mut d = e.dev.derivatives(&a, &b);
        pull_back(&diag, &mut d.gradient, Some(&mut d.curvature));
        let mut out = ConstrainedEval {
            objective: d.value,
            constraints: vec![f1, f2],
            objective_gradient: d.gradient,
            objective_curvature: d.curvature,
            constraint_gradients: vec![g1, g2],
            constraint_curvatures: vec![h1, h2],
        };
        if let Some((layout, _)) = &e.cand {
            let mut c = layout.derivatives(&a, &b);
            pull_back(&diag, &mut c.gradient, Some(&mut c.curvature));
            out.constraints.push(c.value);
            out.constraint_gradients.push(c.gradient);
            out.constraint_curvatures.push(c.curvature);
        }
        Some(out)
    }
}

fn trace(layout: &DevLayout, a: &[Trajectory], b: &[Trajectory]) -> Vec<TracePoint> {
    layout
        .traces(a, b)
        .into_iter()
        .map(|((condition_id, observable, time), model_1, model_2)| TracePoint {
            condition_id,
            observable,
            time,
            model_1,
            model_2,
        })
        .collect()
}

struct Candidate {
    x: Vec<f64>,
    value: f64,
    constraints: Vec<f64>,
}

impl<'a> Engine<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &'a dyn ModelSystem,
        experiments: &[Experiment],
        dataset: &Dataset,
        problems: &[PredictionProblem],
        candidate: Option<PairConstraint<'_>>,
        z_u: f64,
        space: &ParamSpace,
    ) -> Result<Self> {
        if space.dim() != model.param_dim() {
            return Err(Error::Config(format!(
                "parameter box has {} entries for a {}-parameter model",
                space.dim(),
                model.param_dim()
            )));
        }
        if !(z_u.is_finite() && z_u > 0.0) {
            return Err(Error::Infeasible(format!("fit-error threshold must be positive and finite, got {z_u}")));
        }
        dataset.validate()?;
        // An inactive candidate constraint must not change the integration grid.
        let designs = experiments
            .iter()
            .chain(problems.iter().map(|p| &p.experiment))
            .chain(candidate.as_ref().filter(|c| c.eta.is_finite()).map(|c| c.experiment));
        let conditions = Conditions::from_experiments(designs)?;
        let fit = FitLayout::new(model, experiments, dataset, &conditions)?;
        let dev = problem_layout(model, problems, Some(dataset), &conditions)?;
        let mut bounds = vec![z_u, z_u];
        let cand = match candidate {
            Some(c) if c.eta.is_finite() => {
                if !(c.eta >= 0.0) {
                    return Err(Error::InvalidInput(format!("eta must be non-negative, got {}", c.eta)));
                }
                let layout = DevLayout::new(model, &[c.experiment], &conditions, |e, obs| {
                    Ok((resolve_scale(c.scales, e, obs, Some(dataset))?, c.replicates as f64))
                })?;
                // A zero bound has no strict interior; keep a sliver of room.
                let eta = c.eta.max(1e-12 * z_u);
                bounds.push(eta);
                Some((layout, eta))
            }
            _ => None,
        };
        Ok(Self { model, conditions, fit, dev, cand, space: space.clone(), z_u, bounds })
    }

    fn stage(&self, tol: Tolerances) -> Stage<'_, 'a> {
        Stage { engine: self, tol }
    }

    fn evaluate(&self, x: &[f64], tol: Tolerances) -> Option<Candidate> {
        let e = self.stage(tol).evaluate(x, false)?;
        Some(Candidate { x: x.to_vec(), value: e.objective, constraints: e.constraints })
    }

    fn strictly_feasible(&self, c: &Candidate) -> bool {
        c.value.is_finite() && c.constraints.iter().zip(&self.bounds).all(|(g, b)| g < b)
    }

    fn within_tolerance(&self, c: &Candidate, rel: f64) -> bool {
        c.value.is_finite() && c.constraints.iter().zip(&self.bounds).all(|(g, b)| *g <= b * (1.0 + rel))
    }

    /// Largest step from `anchor` toward `x` that passes `ok`.
    fn pull_toward(
        &self,
        anchor: &[f64],
        x: &[f64],
        tol: Tolerances,
        ok: impl Fn(&Candidate) -> bool,
    ) -> Option<Candidate> {
        let at = |lam: f64| {
            let y: Vec<f64> = anchor.iter().zip(x).map(|(a, b)| a + lam * (b - a)).collect();
            self.evaluate(&y, tol)
        };
        if let Some(c) = at(1.0).filter(|c| ok(c)) {
            return Some(c);
        }
        let mut best = at(0.0).filter(|c| ok(c))?;
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..30 {
            let mid = 0.5 * (lo + hi);
            match at(mid).filter(|c| ok(c)) {
                Some(c) => {
                    lo = mid;
                    best = c;
                }
                None => hi = mid,
            }
            if hi - lo < 1e-6 {
                break;
            }
        }
        Some(best)
    }

    /// Gaussian random walk from `θ*` for both members, rejecting steps that
    /// leave the strictly feasible set.
    fn random_walk<R: Rng>(&self, theta_star: &[f64], opts: &DeviationOptions, rng: &mut R) -> Vec<f64> {
        let p = theta_star.len();
        let tol = opts.barrier_tolerances;
        let step: Vec<f64> = theta_star.iter().map(|t| (opts.walk_scale * t.abs()).max(opts.walk_floor)).collect();
        let mut pair = [theta_star.to_vec(), theta_star.to_vec()];
        let mut trajs: [Option<Vec<Trajectory>>; 2] = [None, None];
        for m in 0..2 {
            let mut shrink = 1.0;
            let mut accepted = 0;
            let mut rejected_in_row = 0;
            let max_proposals = 50 * opts.walk_steps.max(1);
            for _ in 0..max_proposals {
                if accepted >= opts.walk_steps {
                    break;
                }
                let proposal: Vec<f64> = pair[m]
                    .iter()
                    .zip(&step)
                    .map(|(t, s)| {
                        let z: f64 = rng.sample(StandardNormal);
                        t + shrink * s * z
                    })
                    .collect();
                let mut proposal = proposal;
                self.space.clamp(&mut proposal);
                let ok = self
                    .space
                    .ranges
                    .iter()
                    .zip(&proposal)
                    .all(|(r, v)| r.scale == Scale::Linear || *v > 0.0)
                    .then(|| self.conditions.simulate(self.model, &proposal, false, &tol))
                    .flatten()
                    .filter(|tr| self.fit.value(tr) < self.z_u)
                    .filter(|tr| match (&self.cand, m) {
                        (Some((layout, eta)), 1) => {
                            let other = trajs[0].as_ref().expect("first member walked");
                            layout.value(other, tr) < *eta
                        }
                        _ => true,
                    });
                match ok {
                    Some(tr) => {
                        pair[m] = proposal;
                        trajs[m] = Some(tr);
                        accepted += 1;
                        rejected_in_row = 0;
                    }
                    None => {
                        rejected_in_row += 1;
                        if rejected_in_row >= 20 {
                            shrink *= 0.5;
                            rejected_in_row = 0;
                        }
                    }
                }
            }
            if trajs[m].is_none() {
                trajs[m] = self.conditions.simulate(self.model, &pair[m], false, &tol);
            }
        }
        let mut x = self.space.to_internal(&pair[0]).expect("walk keeps log-scaled parameters positive");
        x.extend(self.space.to_internal(&pair[1]).expect("walk keeps log-scaled parameters positive"));
        debug_assert_eq!(x.len(), 2 * p);
        x
    }

    pub fn solve(&self, theta_star: &[f64], opts: &DeviationOptions, seed: u64) -> Result<DeviationResult> {
        self.solve_streams(theta_star, opts, seed, "dev.restart")
    }

    pub fn solve_streams(
        &self,
        theta_star: &[f64],
        opts: &DeviationOptions,
        seed: u64,
        stream: &str,
    ) -> Result<DeviationResult> {
        let p = self.model.param_dim();
        if theta_star.len() != p {
            return Err(Error::InvalidInput(format!(
                "best fit has {} entries, model has {p} parameters",
                theta_star.len()
            )));
        }
        let star = self.space.to_internal(theta_star)?;
        let anchor: Vec<f64> = star.iter().chain(&star).copied().collect();
        let z_star = self
            .conditions
            .simulate(self.model, theta_star, false, &opts.final_tolerances)
            .map(|tr| self.fit.value(&tr))
            .unwrap_or(f64::INFINITY);
        let z_star_barrier =
            self.evaluate(&anchor, opts.barrier_tolerances).map(|c| c.constraints[0]).unwrap_or(f64::INFINITY);
        if !(z_star < self.z_u && z_star_barrier < self.z_u) {
            return Err(Error::Infeasible(format!(
                "fit-error threshold {} does not exceed the best-fit error {z_star}",
                self.z_u
            )));
        }

        let mut starts: Vec<(bool, Option<Vec<f64>>)> = Vec::new();
        for (a, b) in &opts.warm_starts {
            let x = (|| -> Option<Vec<f64>> {
                let mut x = self.space.to_internal(a).ok()?;
                x.extend(self.space.to_internal(b).ok()?);
                let c = self.pull_toward(&anchor, &x, opts.barrier_tolerances, |c| self.strictly_feasible(c))?;
                Some(c.x)
            })();
            starts.push((true, x));
        }
        let random: Vec<(bool, Option<Vec<f64>>)> = (0..opts.restarts)
            .into_par_iter()
            .map(|k| {
                let mut rng = rng::stream(seed, stream, k as u64);
                (false, Some(self.random_walk(theta_star, opts, &mut rng)))
            })
            .collect();
        starts.extend(random);

        let barrier_stage = self.stage(opts.barrier_tolerances);
        let runs: Vec<(RestartOutcome, Option<Candidate>)> = starts
            .into_par_iter()
            .enumerate()
            .map(|(index, (is_warm, x0))| {
                let fail = |start_value| {
                    (
                        RestartOutcome {
                            index,
                            warm: is_warm,
                            start_value,
                            value: f64::NAN,
                            feasible: false,
                            inner_iterations: 0,
                        },
                        None,
                    )
                };
                let Some(x0) = x0 else { return fail(f64::NAN) };
                let start_value = self.evaluate(&x0, opts.barrier_tolerances).map_or(f64::NAN, |c| c.value);
                let Some(out) = maximize_with_barrier(&barrier_stage, &x0, &opts.barrier) else {
                    return fail(start_value);
                };
                let polished = self.pull_toward(&anchor, &out.x, opts.final_tolerances, |c| {
                    self.within_tolerance(c, opts.feasibility_tol)
                });
                let feasible = polished.is_some();
                let value = polished.as_ref().map_or(f64::NAN, |c| c.value);
                log::debug!("deviation restart {index}: start {start_value:.6e} -> {value:.6e}");
                (
                    RestartOutcome {
                        index,
                        warm: is_warm,
                        start_value,
                        value,
                        feasible,
                        inner_iterations: out.inner_iterations,
                    },
                    polished,
                )
            })
            .collect();

        let best = runs
            .iter()
            .filter_map(|(o, c)| c.as_ref().map(|c| (o.index, c)))
            .max_by(|(i, a), (j, b)| a.value.total_cmp(&b.value).then(j.cmp(i)));
        let (x, no_dev) = match best {
            Some((_, c)) if c.value > opts.zero_tol => (c.x.clone(), false),
            Some((_, c)) => (c.x.clone(), true),
            None => (anchor.clone(), true),
        };
        let restarts = runs.into_iter().map(|(o, _)| o).collect();
        self.assemble(&x, no_dev, opts.final_tolerances, restarts)
    }

    fn assemble(
        &self,
        x: &[f64],
        no_dev: bool,
        tol: Tolerances,
        restarts: Vec<RestartOutcome>,
    ) -> Result<DeviationResult> {
        let p = self.space.dim();
        let t1 = self.space.to_theta(&x[..p]);
        let t2 = self.space.to_theta(&x[p..]);
        let fail = || Error::Integration { time: f64::NAN, reason: "deviation pair does not integrate".into() };
        let a = self.conditions.simulate(self.model, &t1, false, &tol).ok_or_else(fail)?;
        let b = self.conditions.simulate(self.model, &t2, false, &tol).ok_or_else(fail)?;
        let fit_errors = [self.fit.value(&a), self.fit.value(&b)];
        let (candidate_deviation, eta, candidate_trace) = match &self.cand {
            Some((layout, eta)) => (Some(layout.value(&a, &b)), Some(*eta), trace(layout, &a, &b)),
            None => (None, None, Vec::new()),
        };
        Ok(DeviationResult {
            theta_bar_1: t1,
            theta_bar_2: t2,
            value: self.dev.value(&a, &b),
            fit_errors,
            feasibility_residuals: fit_errors.map(|f| (f - self.z_u).max(0.0)),
            candidate_deviation,
            eta,
            z_upper: self.z_u,
            no_deviation_found: no_dev,
            trace: trace(&self.dev, &a, &b),
            candidate_trace,
            restarts,
        })
    }

    /// Evaluate a given pair on this problem without optimizing.
    pub fn evaluate_pair(&self, theta1: &[f64], theta2: &[f64], tol: Tolerances) -> Result<DeviationResult> {
        let mut x = self.space.to_internal(theta1)?;
        x.extend(self.space.to_internal(theta2)?);
        self.assemble(&x, false, tol, Vec::new())
    }
}
