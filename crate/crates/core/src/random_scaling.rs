//! Random-scaling (fixed-b) inference from the averaged iterates alone.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numkernel::{dot, SymMatrix};
use crate::plugin::{check_level, projected_variance, CiMethod, ConfidenceInterval};
use crate::scalar::Real;
use crate::stats::quantile_sorted;

/// One-sided `(probability, critical value)` pairs of the limiting law
/// `W₁ / sqrt(∫₀¹ (W_r - r W₁)² dr)`.
pub const QUANTILE_TABLE: [(f64, f64); 4] = [(0.90, 3.875), (0.95, 5.323), (0.975, 6.747), (0.99, 8.613)];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileTable {
    pairs: &'static [(f64, f64)],
}

impl Default for QuantileTable {
    fn default() -> Self {
        Self { pairs: &QUANTILE_TABLE }
    }
}

impl QuantileTable {
    pub fn pairs(&self) -> &'static [(f64, f64)] {
        self.pairs
    }

    /// Tabled one-sided value, exact lookup only.
    pub fn one_sided(&self, prob: f64) -> Option<f64> {
        self.pairs.iter().find(|(p, _)| (p - prob).abs() < 1e-12).map(|&(_, c)| c)
    }

    /// Critical value for a symmetric two-sided interval of coverage `level`,
    /// i.e. the one-sided value at `1 - (1 - level)/2`.
    pub fn two_sided(&self, level: f64) -> Result<f64> {
        self.one_sided(1.0 - (1.0 - level) / 2.0).ok_or(Error::UnsupportedLevel(level))
    }
}

fn kahan_add<T: Real>(sum: &mut T, comp: &mut T, x: T) {
    let y = x - *comp;
    let t = *sum + y;
    *comp = (t - *sum) - y;
    *sum = t;
}

/// Online sums `A = Σ i² δ_i δ_iᵀ`, `b = Σ i² δ_i`, `s = Σ i²` with
/// `δ_i = θ̄_i - θ̄_1`. Working relative to the first average keeps the sums
/// small and makes `V_n` exactly invariant to a common shift.
#[derive(Debug, Clone)]
pub struct ScalingAccumulator<T: Real = f64> {
    dim: usize,
    diagonal_only: bool,
    origin: Option<Vec<T>>,
    /// full row-major `d × d`, or length `d` in diagonal mode
    a: Vec<T>,
    a_comp: Vec<T>,
    b: Vec<T>,
    b_comp: Vec<T>,
    s: T,
    s_comp: T,
    n: u64,
}

impl<T: Real> ScalingAccumulator<T> {
    pub fn new(dim: usize) -> Self {
        Self::build(dim, false)
    }

    /// Tracks only the diagonal of `V_n`, for very large `d`.
    pub fn diagonal(dim: usize) -> Self {
        Self::build(dim, true)
    }

    fn build(dim: usize, diagonal_only: bool) -> Self {
        let cells = if diagonal_only { dim } else { dim * dim };
        Self {
            dim,
            diagonal_only,
            origin: None,
            a: vec![T::zero(); cells],
            a_comp: vec![T::zero(); cells],
            b: vec![T::zero(); dim],
            b_comp: vec![T::zero(); dim],
            s: T::zero(),
            s_comp: T::zero(),
            n: 0,
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal_only
    }

    /// Adds `θ̄_i`; `i` must be exactly one more than the previous index.
    pub fn update(&mut self, theta_bar_i: &[T], i: u64) -> Result<()> {
        if i != self.n + 1 {
            return Err(Error::OutOfOrder { expected: self.n + 1, got: i });
        }
        if theta_bar_i.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "averaged iterate",
                expected: self.dim,
                got: theta_bar_i.len(),
            });
        }
        let origin = self.origin.get_or_insert_with(|| theta_bar_i.to_vec());
        let delta: Vec<T> = theta_bar_i.iter().zip(origin.iter()).map(|(&t, &o)| t - o).collect();
        let w = T::from_count(i as usize) * T::from_count(i as usize);
        let d = self.dim;
        if self.diagonal_only {
            for k in 0..d {
                kahan_add(&mut self.a[k], &mut self.a_comp[k], w * delta[k] * delta[k]);
            }
        } else {
            for k in 0..d {
                let wk = w * delta[k];
                for l in k..d {
                    kahan_add(&mut self.a[k * d + l], &mut self.a_comp[k * d + l], wk * delta[l]);
                }
            }
        }
        for k in 0..d {
            kahan_add(&mut self.b[k], &mut self.b_comp[k], w * delta[k]);
        }
        kahan_add(&mut self.s, &mut self.s_comp, w);
        self.n = i;
        Ok(())
    }

    /// `V_n = (1/n²) Σ i² (θ̄_i - θ̄_n)(θ̄_i - θ̄_n)ᵀ`; diagonal mode returns a
    /// diagonal matrix.
    pub fn assemble(&self, theta_bar_n: &[T]) -> Result<SymMatrix<T>> {
        let d = self.dim;
        if theta_bar_n.len() != d {
            return Err(Error::DimensionMismatch {
                context: "averaged iterate",
                expected: d,
                got: theta_bar_n.len(),
            });
        }
        let Some(origin) = self.origin.as_ref() else {
            return Ok(SymMatrix::zeros(d));
        };
        let c: Vec<T> = theta_bar_n.iter().zip(origin).map(|(&t, &o)| t - o).collect();
        let n = T::from_count(self.n as usize);
        let inv = T::one() / (n * n);
        let cell = |k: usize, l: usize, a: T| (a - c[k] * self.b[l] - self.b[k] * c[l] + self.s * c[k] * c[l]) * inv;
        if self.diagonal_only {
            let diag: Vec<T> = (0..d).map(|k| cell(k, k, self.a[k])).collect();
            Ok(SymMatrix::from_diag(&diag))
        } else {
            Ok(SymMatrix::from_upper_fn(d, |k, l| cell(k, l, self.a[k * d + l])))
        }
    }
}

pub fn scaling_update<T: Real>(acc: &mut ScalingAccumulator<T>, theta_bar_i: &[T], i: u64) -> Result<()> {
    acc.update(theta_bar_i, i)
}

pub fn assemble_v<T: Real>(acc: &ScalingAccumulator<T>, theta_bar_n: &[T]) -> Result<SymMatrix<T>> {
    acc.assemble(theta_bar_n)
}

/// `√n wᵀ(θ̄ - θ_ref) / sqrt(wᵀVw)`
pub fn scaling_statistic(theta_bar: &[f64], theta_ref: &[f64], v: &SymMatrix, w: &[f64], n: u64) -> Result<f64> {
    let var = projected_variance(v, w)?;
    if var <= 1e-14 {
        return Err(Error::DegenerateScaling(var));
    }
    let diff: f64 = dot(w, theta_bar) - dot(w, theta_ref);
    Ok((n as f64).sqrt() * diff / var.sqrt())
}

/// `wᵀθ̄ ± cv · sqrt(wᵀVw / n)` with `cv` from the tabled quantiles. Only
/// tabled levels are accepted. A zero `V` gives a zero-width interval.
pub fn scaling_ci(theta_bar: &[f64], v: &SymMatrix, w: &[f64], n: u64, level: f64) -> Result<ConfidenceInterval> {
    check_level(level)?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let cv = QuantileTable::default().two_sided(level)?;
    let var = projected_variance(v, w)?;
    Ok(ConfidenceInterval {
        center: dot(w, theta_bar),
        half_width: cv * (var / n as f64).sqrt(),
        level,
        method: CiMethod::RandomScaling,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PivotQuantiles {
    pub probabilities: Vec<f64>,
    pub estimates: Vec<f64>,
    pub tabled: Vec<f64>,
    pub median: f64,
    pub paths: usize,
    pub steps: usize,
}

/// Monte-Carlo quantiles of `W₁ / sqrt(∫₀¹ (W_r - r W₁)² dr)` from
/// discretized Brownian paths, at the tabled probabilities.
pub fn simulate_pivot_quantiles<R: Rng + ?Sized>(num_paths: usize, path_steps: usize, rng: &mut R) -> Result<PivotQuantiles> {
    if num_paths == 0 || path_steps == 0 {
        return Err(Error::InvalidParameter("paths and steps must be positive".into()));
    }
    let dt = 1.0 / path_steps as f64;
    let sd = dt.sqrt();
    let mut path = vec![0.0; path_steps];
    let mut stats = Vec::with_capacity(num_paths);
    for _ in 0..num_paths {
        let mut w = 0.0;
        for slot in path.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            w += sd * z;
            *slot = w;
        }
        let w1 = w;
        let integral: f64 = path
            .iter()
            .enumerate()
            .map(|(j, &wr)| {
                let dev = wr - (j + 1) as f64 * dt * w1;
                dev * dev
            })
            .sum::<f64>()
            * dt;
        stats.push(w1 / integral.sqrt());
    }
    stats.sort_by(|a, b| a.total_cmp(b));
    let probabilities: Vec<f64> = QUANTILE_TABLE.iter().map(|p| p.0).collect();
    Ok(PivotQuantiles {
        estimates: probabilities.iter().map(|&p| quantile_sorted(&stats, p)).collect(),
        tabled: QUANTILE_TABLE.iter().map(|p| p.1).collect(),
        probabilities,
        median: quantile_sorted(&stats, 0.5),
        paths: num_paths,
        steps: path_steps,
    })
}
