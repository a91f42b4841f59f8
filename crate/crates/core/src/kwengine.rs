//! Kiefer–Wolfowitz iterations with Polyak–Ruppert averaging, plus the
//! stochastic Newton variant.

use rand::Rng;

use crate::directions::{DirectionDistribution, QueryMode};
use crate::error::{Error, Result};
use crate::models::{DataPoint, LossOracle};
use crate::numkernel::{norm, SymMatrix};

/// Iterates with a larger norm abort the run.
pub const DIVERGENCE_THRESHOLD: f64 = 1e8;

/// `η_n = η₀ n^{-α}` and `h_n = h₀ n^{-γ}`, indexed from `n = 1`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedules {
    pub eta0: f64,
    pub alpha: f64,
    pub h0: f64,
    pub gamma: f64,
}

impl Default for Schedules {
    fn default() -> Self {
        Self {
            eta0: 0.05,
            alpha: 0.501,
            h0: 0.01,
            gamma: 0.75,
        }
    }
}

impl Schedules {
    pub fn new(eta0: f64, alpha: f64, h0: f64, gamma: f64) -> Result<Self> {
        let s = Self::unchecked(eta0, alpha, h0, gamma);
        let problems = s.problems();
        if problems.is_empty() {
            Ok(s)
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }

    /// No range checks. Lets tests use degenerate values such as `η₀ = 0`.
    pub fn unchecked(eta0: f64, alpha: f64, h0: f64, gamma: f64) -> Self {
        Self {
            eta0,
            alpha,
            h0,
            gamma,
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            out.push(format!("eta0 must be positive, got {}", self.eta0));
        }
        if !(self.alpha > 0.5 && self.alpha < 1.0) {
            out.push(format!("alpha must lie in (0.5, 1), got {}", self.alpha));
        }
        if !(self.h0 > 0.0 && self.h0.is_finite()) {
            out.push(format!("h0 must be positive, got {}", self.h0));
        }
        if !(self.gamma > 0.5 && self.gamma < 1.0) {
            out.push(format!("gamma must lie in (0.5, 1), got {}", self.gamma));
        }
        out
    }

    pub fn eta(&self, n: u64) -> f64 {
        self.eta0 * (n as f64).powf(-self.alpha)
    }

    pub fn h(&self, n: u64) -> f64 {
        self.h0 * (n as f64).powf(-self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KwRunState {
    pub n: u64,
    pub theta: Vec<f64>,
    pub theta_bar: Vec<f64>,
    pub last_gradient: Vec<f64>,
    pub query_count: u64,
    /// every iterate `θ_1..θ_n`, kept only when requested
    pub iterate_log: Option<Vec<Vec<f64>>>,
}

impl KwRunState {
    pub fn new(theta0: Vec<f64>) -> Self {
        let d = theta0.len();
        Self {
            n: 0,
            theta_bar: theta0.clone(),
            theta: theta0,
            last_gradient: vec![0.0; d],
            query_count: 0,
            iterate_log: None,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![0.0; dim])
    }

    pub fn with_iterate_log(mut self) -> Self {
        self.iterate_log = Some(Vec::new());
        self
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Adds oracle calls made on this run's behalf outside the optimizer
    /// step, e.g. finite-difference Hessian queries.
    pub fn charge_queries(&mut self, count: u64) {
        self.query_count += count;
    }

    /// Moves to `θ_new`, folds it into the running average and checks the
    /// divergence guard. Steppers other than the ones here use it too.
    pub fn advance(&mut self, theta_new: Vec<f64>) -> Result<()> {
        self.n += 1;
        let inv = 1.0 / self.n as f64;
        if self.n == 1 {
            self.theta_bar.clone_from(&theta_new);
        } else {
            for (b, t) in self.theta_bar.iter_mut().zip(&theta_new) {
                *b += (t - *b) * inv;
            }
        }
        self.theta = theta_new;
        if let Some(log) = self.iterate_log.as_mut() {
            log.push(self.theta.clone());
        }
        let nrm = norm(&self.theta);
        if !nrm.is_finite() || nrm > DIVERGENCE_THRESHOLD {
            return Err(Error::Diverged { step: self.n, norm: nrm });
        }
        Ok(())
    }
}

/// What a step consumed, so inference accumulators can reuse the sample.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub point: DataPoint,
    pub spacing: f64,
    /// the iterate the gradient was evaluated at
    pub theta_prev: Vec<f64>,
}

fn checked_loss<O: LossOracle + ?Sized>(
    oracle: &O,
    theta: &[f64],
    point: &DataPoint,
    h: f64,
    v: &[f64],
) -> Result<f64> {
    let f = oracle.loss(theta, point);
    if f.is_finite() {
        Ok(f)
    } else {
        Err(Error::NonFiniteLoss {
            h,
            theta_norm: norm(theta),
            direction_norm: norm(v),
        })
    }
}

/// `f(θ + hv; ζ)` evaluated through a scratch buffer.
fn shifted_loss<O: LossOracle + ?Sized>(
    oracle: &O,
    theta: &[f64],
    scratch: &mut [f64],
    point: &DataPoint,
    h: f64,
    v: &[f64],
) -> Result<f64> {
    for ((s, t), vi) in scratch.iter_mut().zip(theta).zip(v) {
        *s = t + h * vi;
    }
    checked_loss(oracle, scratch, point, h, v)
}

fn check_spacing(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("spacing h must be positive, got {h}")))
    }
}

/// Two-query estimate `[f(θ+hv; ζ) - f(θ; ζ)]/h · v`.
pub fn kw_gradient<O: LossOracle + ?Sized>(
    oracle: &O,
    theta: &[f64],
    point: &DataPoint,
    h: f64,
    v: &[f64],
) -> Result<Vec<f64>> {
    multi_query_gradient(oracle, theta, point, h, std::slice::from_ref(&v.to_vec()))
}

/// Mean of the per-direction KW estimates over `directions`, sharing one
/// base evaluation: `m + 1` oracle calls in total.
pub fn multi_query_gradient<O: LossOracle + ?Sized>(
    oracle: &O,
    theta: &[f64],
    point: &DataPoint,
    h: f64,
    directions: &[Vec<f64>],
) -> Result<Vec<f64>> {
    check_spacing(h)?;
    if directions.is_empty() {
        return Err(Error::InvalidParameter("direction batch must be non-empty".into()));
    }
    let d = theta.len();
    for v in directions {
        if v.len() != d {
            return Err(Error::DimensionMismatch {
                context: "direction",
                expected: d,
                got: v.len(),
            });
        }
    }
    let base = checked_loss(oracle, theta, point, h, &directions[0])?;
    let mut scratch = vec![0.0; d];
    let mut g = vec![0.0; d];
    let m = directions.len() as f64;
    for v in directions {
        let f = shifted_loss(oracle, theta, &mut scratch, point, h, v)?;
        let c = (f - base) / (h * m);
        for (gi, vi) in g.iter_mut().zip(v) {
            *gi += c * vi;
        }
    }
    Ok(g)
}

/// Optimizer settings shared by every step of a run.
#[derive(Debug, Clone)]
pub struct KwSettings {
    pub dist: DirectionDistribution,
    pub mode: QueryMode,
    pub sched: Schedules,
}

impl KwSettings {
    pub fn new(dist: DirectionDistribution, mode: QueryMode, sched: Schedules) -> Result<Self> {
        mode.validate_for(&dist)?;
        Ok(Self { dist, mode, sched })
    }
}

/// Draws `ζ` and then the direction batch, and returns the gradient at the
/// current iterate with spacing `h_{n+1}`.
fn sample_gradient<O: LossOracle + ?Sized, R: Rng + ?Sized>(
    state: &mut KwRunState,
    oracle: &O,
    settings: &KwSettings,
    rng: &mut R,
) -> Result<(Vec<f64>, StepInfo)> {
    let next = state.n + 1;
    let h = settings.sched.h(next);
    let point = oracle.sample_point(rng);
    let dirs = settings.dist.sample_batch(&settings.mode, rng)?;
    let g = multi_query_gradient(oracle, &state.theta, &point, h, &dirs)?;
    state.query_count += dirs.len() as u64 + 1;
    let info = StepInfo {
        point,
        spacing: h,
        theta_prev: state.theta.clone(),
    };
    Ok((g, info))
}

/// One update `θ_{n+1} = θ_n - η_{n+1} ĝ`.
pub fn step<O: LossOracle + ?Sized, R: Rng + ?Sized>(
    state: &mut KwRunState,
    oracle: &O,
    settings: &KwSettings,
    rng: &mut R,
) -> Result<StepInfo> {
    let (g, info) = sample_gradient(state, oracle, settings, rng)?;
    let eta = settings.sched.eta(state.n + 1);
    let theta_new: Vec<f64> = state.theta.iter().zip(&g).map(|(t, gi)| t - eta * gi).collect();
    state.last_gradient = g;
    state.advance(theta_new)?;
    Ok(info)
}

/// Newton update `θ_{n+1} = θ_n - Ĥ⁻¹ĝ/(n+1)`. The step size schedule in
/// `settings` is ignored; only the spacing is used. The final iterate, not
/// the average, is the estimator for this variant.
pub fn newton_step<O: LossOracle + ?Sized, R: Rng + ?Sized>(
    state: &mut KwRunState,
    oracle: &O,
    settings: &KwSettings,
    hessian_inverse: &SymMatrix,
    rng: &mut R,
) -> Result<StepInfo> {
    if hessian_inverse.dim() != state.dim() {
        return Err(Error::DimensionMismatch {
            context: "hessian inverse",
            expected: state.dim(),
            got: hessian_inverse.dim(),
        });
    }
    let (g, info) = sample_gradient(state, oracle, settings, rng)?;
    let scale = 1.0 / (state.n + 1) as f64;
    let dir = hessian_inverse.mul_vec(&g);
    let theta_new: Vec<f64> = state.theta.iter().zip(&dir).map(|(t, di)| t - scale * di).collect();
    state.last_gradient = g;
    state.advance(theta_new)?;
    Ok(info)
}

/// Snapshot of a run at a configured iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub n: u64,
    pub theta_bar: Vec<f64>,
    pub queries: u64,
}

/// Runs `n_steps` KW steps, calling `observe` after each one, and records
/// checkpoints at the listed iteration counts.
pub fn run_observed<O, R, F>(
    state: &mut KwRunState,
    oracle: &O,
    settings: &KwSettings,
    n_steps: u64,
    checkpoints: &[u64],
    rng: &mut R,
    mut observe: F,
) -> Result<Vec<Checkpoint>>
where
    O: LossOracle + ?Sized,
    R: Rng + ?Sized,
    F: FnMut(&mut KwRunState, &StepInfo) -> Result<()>,
{
    let mut marks: Vec<u64> = checkpoints.to_vec();
    marks.sort_unstable();
    marks.dedup();
    let mut next_mark = marks.iter().peekable();
    let mut out = Vec::new();
    let end = state.n + n_steps;
    while state.n < end {
        let info = step(state, oracle, settings, rng)?;
        observe(state, &info)?;
        while let Some(&&m) = next_mark.peek() {
            if m > state.n {
                break;
            }
            if m == state.n {
                out.push(Checkpoint {
                    n: state.n,
                    theta_bar: state.theta_bar.clone(),
                    queries: state.query_count,
                });
            }
            next_mark.next();
        }
    }
    Ok(out)
}

pub fn run<O: LossOracle + ?Sized, R: Rng + ?Sized>(
    state: &mut KwRunState,
    oracle: &O,
    settings: &KwSettings,
    n_steps: u64,
    checkpoints: &[u64],
    rng: &mut R,
) -> Result<Vec<Checkpoint>> {
    run_observed(state, oracle, settings, n_steps, checkpoints, rng, |_, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_oracle, theta_on_unit_sphere, CovarianceDesign, Family, ModelSpec, QuadraticOracle};
    use crate::numkernel::dot;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::{AtomicU64, Ordering};

    struct Counting<O> {
        inner: O,
        calls: AtomicU64,
    }

    impl<O: LossOracle> LossOracle for Counting<O> {
        fn dim(&self) -> usize {
            self.inner.dim()
        }
        fn loss(&self, theta: &[f64], point: &DataPoint) -> f64 {
            self.calls.fetch_add(1, Ordering::Relaxed);
            self.inner.loss(theta, point)
        }
        fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> DataPoint {
            self.inner.sample_point(rng)
        }
    }

    fn linear(d: usize) -> ModelSpec {
        ModelSpec::new(Family::Linear { noise_var: 0.2 }, theta_on_unit_sphere(d, 11), CovarianceDesign::Identity)
            .unwrap()
    }

    struct NanOracle;
    impl LossOracle for NanOracle {
        fn dim(&self) -> usize {
            1
        }
        fn loss(&self, _: &[f64], _: &DataPoint) -> f64 {
            f64::NAN
        }
        fn sample_point<R: Rng + ?Sized>(&self, _: &mut R) -> DataPoint {
            DataPoint { x: vec![0.0], y: 0.0 }
        }
    }

    #[test]
    fn schedule_ranges() {
        assert!(Schedules::new(0.5, 1.2, 1.0, 0.6).unwrap_err().to_string().contains("alpha must lie in (0.5, 1)"));
        let errs = Schedules::unchecked(0.0, 0.5, -1.0, 1.0).problems();
        assert_eq!(errs.len(), 4);
        let s = Schedules::new(2.0, 0.75, 1.0, 0.6).unwrap();
        assert_eq!(s.eta(1), 2.0);
        assert!((s.eta(16) - 2.0 / 8.0).abs() < 1e-15);
        assert!((s.h(32) - 32f64.powf(-0.6)).abs() < 1e-15);
    }

    #[test]
    fn two_query_linear_example() {
        let o = make_oracle(&linear(2)).unwrap();
        let p = DataPoint { x: vec![1.0, 0.0], y: 0.0 };
        let g = kw_gradient(&o, &[1.0, 0.0], &p, 0.1, &[1.0, 1.0]).unwrap();
        assert!((g[0] - 2.1).abs() < 1e-12 && (g[1] - 2.1).abs() < 1e-12);
        let z = kw_gradient(&o, &[1.0, 0.0], &p, 0.1, &[0.0, 0.0]).unwrap();
        assert_eq!(z, vec![0.0, 0.0]);
        assert!(kw_gradient(&o, &[1.0, 0.0], &p, 0.0, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn two_query_quantile_example() {
        let spec = ModelSpec::new(Family::Quantile { tau: 0.5, noise_var: 0.2 }, vec![0.0], CovarianceDesign::Identity)
            .unwrap();
        let o = make_oracle(&spec).unwrap();
        // y - xᵀθ = 1, xᵀv = 1
        let p = DataPoint { x: vec![1.0], y: 1.0 };
        let g = kw_gradient(&o, &[0.0], &p, 0.5, &[1.0]).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-15);
        // once h|xᵀv| stays below the residual the estimate is the
        // subgradient -vvᵀx(τ - 1{r < 0})
        let v = [0.3];
        let g = kw_gradient(&o, &[0.0], &p, 0.5, &v).unwrap();
        assert!((g[0] + v[0] * v[0] * 1.0 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn linear_finite_difference_identity() {
        let o = make_oracle(&linear(3)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let p = o.sample_point(&mut rng);
            let th: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let v: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let h = rng.random_range(0.001..1.0);
            let g = kw_gradient(&o, &th, &p, h, &v).unwrap();
            let xv = dot(&p.x, &v);
            let c = 2.0 * (dot(&p.x, &th) - p.y) * xv + h * xv * xv;
            for k in 0..3 {
                let want = c * v[k];
                assert!((g[k] - want).abs() <= 1e-10 * want.abs().max(1.0));
            }
        }
    }

    #[test]
    fn multi_query_shares_base_evaluation() {
        let o = Counting {
            inner: make_oracle(&linear(2)).unwrap(),
            calls: AtomicU64::new(0),
        };
        let p = DataPoint { x: vec![1.0, 0.0], y: 0.0 };
        let th = [1.0, 0.0];
        let dirs = vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]];
        let g = multi_query_gradient(&o, &th, &p, 0.1, &dirs).unwrap();
        assert_eq!(o.calls.load(Ordering::Relaxed), 4);
        let single = kw_gradient(&o, &th, &p, 0.1, &[1.0, 1.0]).unwrap();
        for k in 0..2 {
            assert!((g[k] - single[k]).abs() < 1e-14);
        }
        assert!(multi_query_gradient(&o, &th, &p, 0.1, &[]).is_err());

        // orthogonal pair: mean of the two single-direction values
        let e = [vec![2f64.sqrt(), 0.0], vec![0.0, 2f64.sqrt()]];
        let g = multi_query_gradient(&o, &th, &p, 0.1, &e).unwrap();
        let a = kw_gradient(&o, &th, &p, 0.1, &e[0]).unwrap();
        let b = kw_gradient(&o, &th, &p, 0.1, &e[1]).unwrap();
        for k in 0..2 {
            assert!((g[k] - 0.5 * (a[k] + b[k])).abs() < 1e-14);
        }
    }

    #[test]
    fn non_finite_loss_is_reported() {
        let err = kw_gradient(&NanOracle, &[3.0], &DataPoint { x: vec![0.0], y: 0.0 }, 0.5, &[4.0]).unwrap_err();
        match err {
            Error::NonFiniteLoss { h, theta_norm, direction_norm } => {
                assert_eq!((h, theta_norm, direction_norm), (0.5, 3.0, 4.0));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn settings(d: usize) -> KwSettings {
        KwSettings::new(DirectionDistribution::canonical(d).unwrap(), QueryMode::single(), Schedules::default()).unwrap()
    }

    #[test]
    fn zero_step_size_keeps_theta() {
        let o = make_oracle(&linear(3)).unwrap();
        let mut s = settings(3);
        s.sched = Schedules::unchecked(0.0, 0.6, 1.0, 0.6);
        let mut st = KwRunState::new(vec![1.0, 2.0, 3.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..5 {
            step(&mut st, &o, &s, &mut rng).unwrap();
        }
        assert_eq!(st.theta, vec![1.0, 2.0, 3.0]);
        assert_eq!(st.theta_bar, vec![1.0, 2.0, 3.0]);
        assert_eq!(st.n, 5);
    }

    #[test]
    fn replay_is_bit_identical() {
        let o = make_oracle(&linear(4)).unwrap();
        let s = settings(4);
        let go = || {
            let mut st = KwRunState::zeros(4);
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            run(&mut st, &o, &s, 500, &[], &mut rng).unwrap();
            st
        };
        assert_eq!(go(), go());
    }

    #[test]
    fn running_average_and_query_accounting() {
        let o = make_oracle(&linear(3)).unwrap();
        let s = settings(3);
        let mut st = KwRunState::zeros(3).with_iterate_log();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cps = run(&mut st, &o, &s, 2000, &[10, 1000, 10, 5000], &mut rng).unwrap();
        assert_eq!(st.query_count, 4000);
        assert_eq!(cps.iter().map(|c| c.n).collect::<Vec<_>>(), vec![10, 1000]);
        assert_eq!(cps[1].queries, 2000);
        let log = st.iterate_log.as_ref().unwrap();
        for k in 0..3 {
            let mean = log.iter().map(|t| t[k]).sum::<f64>() / log.len() as f64;
            assert!((mean - st.theta_bar[k]).abs() < 1e-12);
        }

        let mut empty = KwRunState::zeros(3);
        run(&mut empty, &o, &s, 0, &[], &mut rng).unwrap();
        assert_eq!(empty, KwRunState::zeros(3));

        let mut multi = s.clone();
        multi.mode = QueryMode::new(3, crate::directions::Replacement::Without).unwrap();
        let mut st = KwRunState::zeros(3);
        run(&mut st, &o, &multi, 100, &[], &mut rng).unwrap();
        assert_eq!(st.query_count, 400);
    }

    #[test]
    fn divergence_guard_aborts() {
        let o = make_oracle(&linear(3)).unwrap();
        let mut s = settings(3);
        s.sched = Schedules::new(1e3, 0.501, 0.01, 0.75).unwrap();
        let mut st = KwRunState::zeros(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = run(&mut st, &o, &s, 10_000, &[], &mut rng).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    #[test]
    fn newton_with_identity_matches_unit_step_kw() {
        let o = make_oracle(&linear(3)).unwrap();
        let mut s = settings(3);
        s.sched = Schedules::unchecked(1.0, 1.0, 0.01, 0.75);
        let mut a = KwRunState::zeros(3);
        let mut b = KwRunState::zeros(3);
        let mut ra = ChaCha8Rng::seed_from_u64(3);
        let mut rb = ChaCha8Rng::seed_from_u64(3);
        let eye = SymMatrix::identity(3);
        for _ in 0..50 {
            step(&mut a, &o, &s, &mut ra).unwrap();
            newton_step(&mut b, &o, &s, &eye, &mut rb).unwrap();
        }
        for k in 0..3 {
            assert!((a.theta[k] - b.theta[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn newton_on_noiseless_quadratic() {
        // one step against its closed form, exact H⁻¹ = (2A)⁻¹
        let a = SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let o = QuadraticOracle::new(a.clone());
        let h_inv = crate::numkernel::spd_inverse(&o.hessian()).unwrap();
        let s = settings(2);
        let mut st = KwRunState::new(vec![1.0, -1.0]);
        st.n = 3;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let info = newton_step(&mut st, &o, &s, &h_inv, &mut rng).unwrap();
        let g = st.last_gradient.clone();
        let dir = h_inv.mul_vec(&g);
        for k in 0..2 {
            assert!((st.theta[k] - (info.theta_prev[k] - dir[k] / 4.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn newton_noise_free_contracts_by_one_over_n() {
        // exact gradient (all coordinates, noiseless) makes Ĥ⁻¹ĝ = θ - θ*
        let a = SymMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let o = QuadraticOracle::new(a);
        let h_inv = crate::numkernel::spd_inverse(&o.hessian()).unwrap();
        let theta = vec![1.0, -1.0];
        let p = DataPoint { x: vec![0.0, 0.0], y: 0.0 };
        let h = 1e-6;
        let dirs: Vec<Vec<f64>> = (0..2)
            .map(|k| {
                let mut e = vec![0.0; 2];
                e[k] = 2f64.sqrt();
                e
            })
            .collect();
        let g = multi_query_gradient(&o, &theta, &p, h, &dirs).unwrap();
        let dir = h_inv.mul_vec(&g);
        let n = 5.0;
        for k in 0..2 {
            let next = theta[k] - dir[k] / n;
            assert!((next - theta[k] * (1.0 - 1.0 / n)).abs() < 1e-5);
        }
    }
}
