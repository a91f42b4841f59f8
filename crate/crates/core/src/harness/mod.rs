//! Monte-Carlo experiment runner: replications with attached inference,
//! metrics, aggregation, sweeps and the first-order baseline.

pub mod config;
pub mod recipes;
pub mod report;

use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kwengine::{newton_step, step, KwRunState, StepInfo};
use crate::models::{make_oracle, oracle_covariance, rm_covariance, LossOracle, ModelOracle};
use crate::numkernel::{dot, norm, spectral_norm, SymMatrix};
use crate::plugin::{normal_ci, plugin_covariance, CiMethod, ConfidenceInterval, GramAccumulator, HessianAccumulator};
use crate::random_scaling::{scaling_ci, ScalingAccumulator};

pub use config::{Algorithm, ExperimentConfig, ResolvedConfig};
pub use report::{Aggregates, CheckpointRow, ExperimentReport, ReplicationRow};

/// Row label used when no inference method is enabled.
pub const ESTIMATE_ONLY: &str = "estimate";

/// Stream of the replication's base seed used by inference randomness
/// (Bernoulli entry sampling), so enabling inference never perturbs the
/// optimizer's data stream.
const INFERENCE_STREAM: u64 = 1;

/// One RM step `θ_n = θ_{n-1} - η_n ∇f(θ_{n-1}; ζ_n)`; one gradient query.
pub fn rm_step<O: LossOracle + ?Sized, R: Rng + ?Sized>(
    state: &mut KwRunState,
    oracle: &O,
    sched: &crate::kwengine::Schedules,
    rng: &mut R,
) -> Result<StepInfo> {
    let next = state.n + 1;
    let point = oracle.sample_point(rng);
    let g = oracle
        .gradient(&state.theta, &point)
        .ok_or_else(|| Error::InvalidParameter("the first-order baseline needs per-sample gradients".into()))?;
    let eta = sched.eta(next);
    let theta_new: Vec<f64> = state.theta.iter().zip(&g).map(|(t, gi)| t - eta * gi).collect();
    let info = StepInfo {
        point,
        spacing: sched.h(next),
        theta_prev: state.theta.clone(),
    };
    state.query_count += 1;
    state.last_gradient = g;
    state.advance(theta_new)?;
    Ok(info)
}

fn is_abort(e: &Error) -> bool {
    matches!(e, Error::Diverged { .. } | Error::NonFiniteLoss { .. })
}

struct Methods {
    hessian: Option<HessianAccumulator>,
    gram: Option<GramAccumulator>,
    scaling: Option<ScalingAccumulator>,
}

/// Inputs shared by every replication of an experiment.
struct Plan<'a> {
    res: &'a ResolvedConfig,
    oracle: &'a ModelOracle,
    target_cov: Option<&'a SymMatrix>,
}

struct Outcome {
    rows: Vec<ReplicationRow>,
    checkpoints: Vec<CheckpointRow>,
}

impl Plan<'_> {
    fn estimator<'s>(&self, state: &'s KwRunState) -> &'s [f64] {
        match self.res.config.algorithm {
            Algorithm::Newton => &state.theta,
            _ => &state.theta_bar,
        }
    }

    fn est_error(&self, theta: &[f64]) -> f64 {
        let star = &self.res.model.theta_star;
        let diff: Vec<f64> = theta.iter().zip(star).map(|(a, b)| a - b).collect();
        norm(&diff) / norm(star)
    }

    fn new_methods(&self) -> Result<Methods> {
        let cfg = &self.res.config;
        let d = self.res.model.dim();
        let hessian = match &cfg.inference.plug_in {
            Some(pc) => Some(HessianAccumulator::new(d, pc.p, pc.kappa1, self.res.kappa2(), pc.subsampling)?),
            None => None,
        };
        Ok(Methods {
            gram: hessian.as_ref().map(|_| GramAccumulator::new(d)),
            hessian,
            scaling: cfg.inference.random_scaling.then(|| ScalingAccumulator::new(d)),
        })
    }

    fn plug_in(&self, m: &Methods, theta: &[f64], n: u64) -> Result<Option<(ConfidenceInterval, SymMatrix)>> {
        let (Some(h), Some(g)) = (&m.hessian, &m.gram) else {
            return Ok(None);
        };
        if n == 0 {
            return Ok(None);
        }
        let cov = plugin_covariance(h, g)?;
        let ci = normal_ci(theta, &cov, &self.res.w, n, self.res.config.level, CiMethod::PlugIn)?;
        Ok(Some((ci, cov)))
    }

    fn random_scaling(&self, m: &Methods, state: &KwRunState) -> Result<Option<ConfidenceInterval>> {
        match &m.scaling {
            Some(acc) if state.n > 0 => {
                let v = acc.assemble(&state.theta_bar)?;
                Ok(Some(scaling_ci(&state.theta_bar, &v, &self.res.w, state.n, self.res.config.level)?))
            }
            _ => Ok(None),
        }
    }

    fn oracle_ci(&self, theta: &[f64], n: u64) -> Result<Option<ConfidenceInterval>> {
        match self.target_cov {
            Some(cov) if self.res.config.inference.oracle && n > 0 => Ok(Some(normal_ci(
                theta,
                cov,
                &self.res.w,
                n,
                self.res.config.level,
                CiMethod::Oracle,
            )?)),
            _ => Ok(None),
        }
    }

    fn checkpoint(&self, r: usize, state: &KwRunState, m: &Methods) -> Result<CheckpointRow> {
        let theta = self.estimator(state);
        let plug = self.plug_in(m, theta, state.n)?;
        Ok(CheckpointRow {
            run_id: self.res.config.run_id.clone(),
            replication: r,
            n: state.n,
            est_error: self.est_error(theta),
            queries: state.query_count,
            plug_in_half_width: plug.as_ref().map(|(ci, _)| ci.half_width),
            cov_spectral_norm: match &plug {
                Some((_, cov)) => Some(spectral_norm(cov)?),
                None => None,
            },
            random_scaling_half_width: self.random_scaling(m, state)?.map(|ci| ci.half_width),
            oracle_half_width: self.oracle_ci(theta, state.n)?.map(|ci| ci.half_width),
        })
    }

    fn drive(&self, r: usize, state: &mut KwRunState, methods: &mut Methods, checkpoints: &mut Vec<CheckpointRow>) -> Result<()> {
        let cfg = &self.res.config;
        let settings = &self.res.settings;
        let seed = cfg.seed.wrapping_add(r as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inf_rng = ChaCha8Rng::seed_from_u64(seed);
        inf_rng.set_stream(INFERENCE_STREAM);

        let mut marks: Vec<u64> = cfg.checkpoints.clone();
        marks.sort_unstable();
        marks.dedup();
        let mut next_mark = 0;

        let refresh = cfg.newton.refresh_every;
        let mut h_inv = SymMatrix::identity(state.dim());
        while state.n < cfg.n {
            let info = match cfg.algorithm {
                Algorithm::Akw => step(state, self.oracle, settings, &mut rng)?,
                Algorithm::Rm => rm_step(state, self.oracle, &settings.sched, &mut rng)?,
                Algorithm::Newton if state.n < cfg.newton.warmup => step(state, self.oracle, settings, &mut rng)?,
                Algorithm::Newton => {
                    if let Some(h) = &methods.hessian {
                        if h.count() > 0 && (state.n - cfg.newton.warmup) % refresh == 0 {
                            h_inv = h.thresholded_inverse()?;
                        }
                    }
                    newton_step(state, self.oracle, settings, &h_inv, &mut rng)?
                }
            };
            if let (Some(h), Some(spacing)) = (methods.hessian.as_mut(), &self.res.hessian_spacing) {
                let evals = h.update(self.oracle, &info.theta_prev, &info.point, spacing.h(state.n), &mut inf_rng)?;
                state.charge_queries(evals);
            }
            if let Some(g) = methods.gram.as_mut() {
                g.update(&state.last_gradient);
            }
            if let Some(s) = methods.scaling.as_mut() {
                s.update(&state.theta_bar, state.n)?;
            }
            if next_mark < marks.len() && marks[next_mark] == state.n {
                checkpoints.push(self.checkpoint(r, state, methods)?);
                next_mark += 1;
            }
        }
        Ok(())
    }

    fn replicate(&self, r: usize) -> Result<Outcome> {
        let cfg = &self.res.config;
        let mut state = KwRunState::new(self.res.theta0.clone());
        let mut methods = self.new_methods()?;
        let mut checkpoints = Vec::new();
        let run_id = cfg.run_id.clone();
        let mut names: Vec<&str> = Vec::new();
        if cfg.inference.plug_in.is_some() {
            names.push(CiMethod::PlugIn.name());
        }
        if cfg.inference.random_scaling {
            names.push(CiMethod::RandomScaling.name());
        }
        if cfg.inference.oracle {
            names.push(CiMethod::Oracle.name());
        }
        if names.is_empty() {
            names.push(ESTIMATE_ONLY);
        }

        if let Err(e) = self.drive(r, &mut state, &mut methods, &mut checkpoints) {
            if !is_abort(&e) {
                return Err(e);
            }
            let rows = names
                .iter()
                .map(|m| ReplicationRow {
                    run_id: run_id.clone(),
                    replication: r,
                    method: m.to_string(),
                    est_error: None,
                    cov_error: None,
                    ci_center: None,
                    ci_length: None,
                    covered: None,
                    queries: state.query_count,
                    aborted: 1,
                })
                .collect();
            return Ok(Outcome { rows, checkpoints });
        }

        let theta = self.estimator(&state);
        let est_error = self.est_error(theta);
        let truth = dot(&self.res.w, &self.res.model.theta_star);
        let row = |method: &str, ci: Option<ConfidenceInterval>, cov_error: Option<f64>| ReplicationRow {
            run_id: run_id.clone(),
            replication: r,
            method: method.to_string(),
            est_error: Some(est_error),
            cov_error,
            ci_center: ci.map(|c| c.center),
            ci_length: ci.map(|c| c.length()),
            covered: ci.map(|c| u8::from(c.contains(truth))),
            queries: state.query_count,
            aborted: 0,
        };
        let mut rows = Vec::new();
        for &m in &names {
            rows.push(match m {
                "plug_in" => match self.plug_in(&methods, theta, state.n)? {
                    Some((ci, cov)) => {
                        let cov_error = match self.target_cov {
                            Some(t) => Some(spectral_norm(&cov.sub(t)?)? / spectral_norm(t)?),
                            None => None,
                        };
                        row(m, Some(ci), cov_error)
                    }
                    None => row(m, None, None),
                },
                "random_scaling" => row(m, self.random_scaling(&methods, &state)?, None),
                "oracle" => row(m, self.oracle_ci(theta, state.n)?, None),
                _ => row(m, None, None),
            });
        }
        Ok(Outcome { rows, checkpoints })
    }
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::InvalidParameter("workers must be at least 1".into()));
        }
        b = b.num_threads(w);
    }
    b.build().map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))
}

/// The asymptotic covariance the run is measured against: `H⁻¹QH⁻¹` for
/// the KW variants, `H⁻¹SH⁻¹` for the first-order baseline.
pub fn target_covariance(res: &ResolvedConfig) -> Result<SymMatrix> {
    match res.config.algorithm {
        Algorithm::Rm => rm_covariance(&res.model),
        _ => oracle_covariance(&res.model, &res.settings.dist, &res.settings.mode),
    }
}

/// Runs every replication of `cfg` (replication `r` uses seed `seed + r`)
/// on `workers` threads (default: available parallelism). Output does not
/// depend on the worker count.
pub fn run_experiment(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentReport> {
    let start = Instant::now();
    let res = cfg.resolve()?;
    let oracle = make_oracle(&res.model)?;
    let need_target = cfg.inference.oracle || cfg.inference.plug_in.is_some();
    let target = if need_target { Some(target_covariance(&res)?) } else { None };
    let plan = Plan {
        res: &res,
        oracle: &oracle,
        target_cov: target.as_ref(),
    };
    let outcomes: Vec<Result<Outcome>> =
        pool(workers)?.install(|| (0..cfg.replications).into_par_iter().map(|r| plan.replicate(r)).collect());
    let mut rows = Vec::new();
    let mut checkpoints = Vec::new();
    for o in outcomes {
        let o = o?;
        rows.extend(o.rows);
        checkpoints.extend(o.checkpoints);
    }
    let oracle_ci_length = match (&target, cfg.n) {
        (Some(t), n) if n > 0 => {
            let var = t.quad_form(&res.w).max(0.0);
            Some(2.0 * crate::stats::two_sided_z(cfg.level) * (var / n as f64).sqrt())
        }
        _ => None,
    };
    Ok(ExperimentReport {
        run_id: cfg.run_id.clone(),
        config: cfg.clone(),
        config_hash: cfg.hash(),
        aggregates: Aggregates::from_rows(&rows),
        rows,
        checkpoints,
        oracle_ci_length,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// The same experiment with exact per-sample gradients in place of finite
/// differences.
pub fn run_rm_baseline(cfg: &ExperimentConfig, workers: Option<usize>) -> Result<ExperimentReport> {
    let mut rm = cfg.clone();
    rm.algorithm = Algorithm::Rm;
    run_experiment(&rm, workers)
}

/// Runs each config in order; run ids must be distinct.
pub fn sweep(cfgs: &[ExperimentConfig], workers: Option<usize>) -> Result<Vec<ExperimentReport>> {
    let mut seen = std::collections::HashSet::new();
    for c in cfgs {
        if !seen.insert(c.run_id.as_str()) {
            return Err(Error::DuplicateRunId(c.run_id.clone()));
        }
    }
    let mut problems = Vec::new();
    for c in cfgs {
        problems.extend(c.problems().into_iter().map(|p| format!("{}: {p}", c.run_id)));
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    cfgs.iter().map(|c| run_experiment(c, workers)).collect()
}
