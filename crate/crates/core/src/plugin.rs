//! Online plug-in inference: finite-difference Hessian accumulation with
//! optional Bernoulli entry subsampling, eigenvalue thresholding, the Gram
//! estimator of the used gradients, and normal confidence intervals.

use rand::Rng;

use crate::error::{Error, Result};
use crate::models::{DataPoint, LossOracle};
use crate::numkernel::{dot, sandwich, sym_eigen, SquareMatrix, SymMatrix};
use crate::scalar::Real;
use crate::stats::two_sided_z;

pub const DEFAULT_KAPPA1: f64 = 1e-3;
pub const DEFAULT_KAPPA2: f64 = 1e3;

/// How entries skipped by Bernoulli subsampling are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subsampling {
    /// sampled entries enter with weight `1/p`, skipped ones contribute 0
    #[default]
    Ipw,
    /// each entry is the mean of the iterations in which it was sampled, so
    /// a skipped entry keeps its previous value
    Inherit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    PlugIn,
    RandomScaling,
    Oracle,
}

impl CiMethod {
    pub fn name(&self) -> &'static str {
        match self {
            CiMethod::PlugIn => "plug_in",
            CiMethod::RandomScaling => "random_scaling",
            CiMethod::Oracle => "oracle",
        }
    }
}

impl std::fmt::Display for CiMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConfidenceInterval {
    pub center: f64,
    pub half_width: f64,
    pub level: f64,
    pub method: CiMethod,
}

impl ConfidenceInterval {
    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }

    pub fn length(&self) -> f64 {
        2.0 * self.half_width
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower() <= x && x <= self.upper()
    }
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("level must lie in (0, 1), got {level}")))
    }
}

/// `wᵀ cov w`, with tiny negative rounding clamped to zero.
pub(crate) fn projected_variance(cov: &SymMatrix, w: &[f64]) -> Result<f64> {
    if w.len() != cov.dim() {
        return Err(Error::DimensionMismatch {
            context: "projection vector",
            expected: cov.dim(),
            got: w.len(),
        });
    }
    let v = cov.quad_form(w);
    if v < -1e-10 {
        return Err(Error::NegativeVariance(v));
    }
    Ok(v.max(0.0))
}

/// `wᵀθ̄ ± z · sqrt(wᵀ cov w / n)`
pub fn normal_ci(theta_bar: &[f64], cov: &SymMatrix, w: &[f64], n: u64, level: f64, method: CiMethod) -> Result<ConfidenceInterval> {
    check_level(level)?;
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let var = projected_variance(cov, w)?;
    Ok(ConfidenceInterval {
        center: dot(w, theta_bar),
        half_width: two_sided_z(level) * (var / n as f64).sqrt(),
        level,
        method,
    })
}

pub fn plugin_ci(theta_bar: &[f64], cov: &SymMatrix, w: &[f64], n: u64, level: f64) -> Result<ConfidenceInterval> {
    normal_ci(theta_bar, cov, w, n, level, CiMethod::PlugIn)
}

/// Sampled entries of one finite-difference Hessian draw.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianBlock {
    pub dim: usize,
    /// `(k, l, G̃_kl)` for every ordered pair that was sampled
    pub entries: Vec<(usize, usize, f64)>,
    /// distinct oracle calls made
    pub evaluations: u64,
}

/// Four-point second differences
/// `G̃_kl = [f(θ+he_k+he_l) - f(θ+he_l) - f(θ+he_k) + f(θ)]/h²`, each ordered
/// pair `(k, l)` sampled independently with probability `p`. Evaluations are
/// cached, so a full draw costs `1 + d + d(d+1)/2` oracle calls.
pub fn hessian_entry_block<O: LossOracle + ?Sized, R: Rng + ?Sized>(
    oracle: &O,
    theta: &[f64],
    point: &DataPoint,
    h: f64,
    p: f64,
    rng: &mut R,
) -> Result<HessianBlock> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidParameter(format!("spacing h must be positive, got {h}")));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidParameter(format!("p must lie in (0, 1], got {p}")));
    }
    let d = theta.len();
    let mut sampled = Vec::with_capacity(d * d);
    for k in 0..d {
        for l in 0..d {
            if p >= 1.0 || rng.random::<f64>() < p {
                sampled.push((k, l));
            }
        }
    }

    let mut evaluations = 0u64;
    let mut scratch = theta.to_vec();
    let mut eval = |x: &[f64]| -> Result<f64> {
        evaluations += 1;
        let f = oracle.loss(x, point);
        if f.is_finite() {
            Ok(f)
        } else {
            Err(Error::NonFiniteLoss {
                h,
                theta_norm: crate::numkernel::norm(theta),
                direction_norm: 1.0,
            })
        }
    };

    let mut base = None;
    let mut single: Vec<Option<f64>> = vec![None; d];
    let mut pair: Vec<Option<f64>> = vec![None; d * d];
    let mut entries = Vec::with_capacity(sampled.len());
    for (k, l) in sampled {
        let (a, b) = if k <= l { (k, l) } else { (l, k) };
        let g = match pair[a * d + b] {
            Some(g) => g,
            None => {
                let f0 = match base {
                    Some(f) => f,
                    None => {
                        let f = eval(theta)?;
                        base = Some(f);
                        f
                    }
                };
                let mut shifted = |i: usize, scratch: &mut Vec<f64>| -> Result<f64> {
                    if let Some(f) = single[i] {
                        return Ok(f);
                    }
                    scratch[i] += h;
                    let f = eval(scratch);
                    scratch[i] = theta[i];
                    let f = f?;
                    single[i] = Some(f);
                    Ok(f)
                };
                let fa = shifted(a, &mut scratch)?;
                let fb = shifted(b, &mut scratch)?;
                scratch[a] += h;
                scratch[b] += h;
                let fab = eval(&scratch);
                scratch[a] = theta[a];
                scratch[b] = theta[b];
                let g = (fab? - fa - fb + f0) / (h * h);
                pair[a * d + b] = Some(g);
                g
            }
        };
        entries.push((k, l, g));
    }
    Ok(HessianBlock {
        dim: d,
        entries,
        evaluations,
    })
}

/// Rank-`m` Hessian estimate from paired random directions,
/// `(1/(m h²)) Σ_j [f(θ+hu_j+hv_j) - f(θ+hu_j) - f(θ+hv_j) + f(θ)] u_j v_jᵀ`.
/// Not symmetric; symmetrize before accumulating.
pub fn naive_hessian_update<O: LossOracle + ?Sized>(
    oracle: &O,
    theta: &[f64],
    point: &DataPoint,
    h: f64,
    u_batch: &[Vec<f64>],
    v_batch: &[Vec<f64>],
) -> Result<SquareMatrix> {
    if u_batch.is_empty() {
        return Err(Error::InvalidParameter("direction batch must be non-empty".into()));
    }
    if u_batch.len() != v_batch.len() {
        return Err(Error::DimensionMismatch {
            context: "naive hessian batches",
            expected: u_batch.len(),
            got: v_batch.len(),
        });
    }
    let d = theta.len();
    let m = u_batch.len() as f64;
    let at = |shift: &[(&[f64], f64)]| -> f64 {
        let mut x = theta.to_vec();
        for (dir, s) in shift {
            for (xi, di) in x.iter_mut().zip(dir.iter()) {
                *xi += s * di;
            }
        }
        oracle.loss(&x, point)
    };
    let f0 = oracle.loss(theta, point);
    let mut out = SquareMatrix::zeros(d);
    for (u, v) in u_batch.iter().zip(v_batch) {
        let second = at(&[(u, h), (v, h)]) - at(&[(u, h)]) - at(&[(v, h)]) + f0;
        let c = second / (m * h * h);
        if !c.is_finite() {
            return Err(Error::NonFiniteLoss {
                h,
                theta_norm: crate::numkernel::norm(theta),
                direction_norm: crate::numkernel::norm(u),
            });
        }
        for i in 0..d {
            for j in 0..d {
                let cur = out.get(i, j);
                out.set(i, j, cur + c * u[i] * v[j]);
            }
        }
    }
    Ok(out)
}

/// Running Hessian estimate `H̃_n` with eigenvalue thresholding on read.
#[derive(Debug, Clone)]
pub struct HessianAccumulator {
    running_sum: SymMatrix,
    /// per ordered entry: sampled-value sums and counts (inherit mode only)
    entry_sum: Vec<f64>,
    entry_count: Vec<u64>,
    count: u64,
    p: f64,
    kappa1: f64,
    kappa2: Option<f64>,
    subsampling: Subsampling,
}

impl HessianAccumulator {
    pub fn new(dim: usize, p: f64, kappa1: f64, kappa2: Option<f64>, subsampling: Subsampling) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidParameter(format!("p must lie in (0, 1], got {p}")));
        }
        if !(kappa1 > 0.0 && kappa1.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa1 must be positive, got {kappa1}")));
        }
        if let Some(k2) = kappa2 {
            if !(k2 > kappa1 && k2.is_finite()) {
                return Err(Error::InvalidParameter(format!("kappa2 must exceed kappa1, got {k2}")));
            }
        }
        let inherit = subsampling == Subsampling::Inherit;
        Ok(Self {
            running_sum: SymMatrix::zeros(dim),
            entry_sum: if inherit { vec![0.0; dim * dim] } else { Vec::new() },
            entry_count: if inherit { vec![0; dim * dim] } else { Vec::new() },
            count: 0,
            p,
            kappa1,
            kappa2,
            subsampling,
        })
    }

    pub fn dim(&self) -> usize {
        self.running_sum.dim()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn kappa1(&self) -> f64 {
        self.kappa1
    }

    pub fn kappa2(&self) -> Option<f64> {
        self.kappa2
    }

    /// Draws a block at `θ` and folds it in; returns the oracle calls made.
    pub fn update<O: LossOracle + ?Sized, R: Rng + ?Sized>(
        &mut self,
        oracle: &O,
        theta: &[f64],
        point: &DataPoint,
        h: f64,
        rng: &mut R,
    ) -> Result<u64> {
        let block = hessian_entry_block(oracle, theta, point, h, self.p, rng)?;
        let evals = block.evaluations;
        self.absorb(&block)?;
        Ok(evals)
    }

    pub fn absorb(&mut self, block: &HessianBlock) -> Result<()> {
        let d = self.dim();
        if block.dim != d {
            return Err(Error::DimensionMismatch {
                context: "hessian block",
                expected: d,
                got: block.dim,
            });
        }
        match self.subsampling {
            Subsampling::Ipw => {
                // symmetrized (B ∘ G̃ + (B ∘ G̃)ᵀ) / 2p
                let w = 0.5 / self.p;
                for &(k, l, g) in &block.entries {
                    if k == l {
                        self.running_sum.add_to_entry(k, k, 2.0 * w * g);
                    } else {
                        self.running_sum.add_to_entry(k, l, w * g);
                    }
                }
            }
            Subsampling::Inherit => {
                for &(k, l, g) in &block.entries {
                    self.entry_sum[k * d + l] += g;
                    self.entry_count[k * d + l] += 1;
                }
            }
        }
        self.count += 1;
        Ok(())
    }

    /// Unthresholded `H̃_n`.
    pub fn mean(&self) -> Result<SymMatrix> {
        if self.count == 0 {
            return Err(Error::InvalidParameter("hessian accumulator is empty".into()));
        }
        match self.subsampling {
            Subsampling::Ipw => Ok(self.running_sum.scale(1.0 / self.count as f64)),
            Subsampling::Inherit => {
                let d = self.dim();
                let entry = |k: usize, l: usize| {
                    let c = self.entry_count[k * d + l];
                    if c == 0 {
                        0.0
                    } else {
                        self.entry_sum[k * d + l] / c as f64
                    }
                };
                Ok(SymMatrix::from_upper_fn(d, |k, l| 0.5 * (entry(k, l) + entry(l, k))))
            }
        }
    }

    fn clamp(&self, lambda: f64) -> f64 {
        let floored = lambda.max(self.kappa1);
        match self.kappa2 {
            Some(k2) => floored.min(k2),
            None => floored,
        }
    }

    /// `Ĥ_n`: eigenvalues floored at `κ₁` (and capped at `κ₂` when set).
    pub fn thresholded(&self) -> Result<SymMatrix> {
        let eig = sym_eigen(&self.mean()?)?;
        Ok(eig.map_eigenvalues(|l| self.clamp(l)))
    }

    /// `Ĥ_n⁻¹` from the same eigendecomposition.
    pub fn thresholded_inverse(&self) -> Result<SymMatrix> {
        let eig = sym_eigen(&self.mean()?)?;
        Ok(eig.map_eigenvalues(|l| 1.0 / self.clamp(l)))
    }
}

pub fn thresholded_hessian(acc: &HessianAccumulator) -> Result<SymMatrix> {
    acc.thresholded()
}

/// `Q̂_n = (1/n) Σ ĝ_i ĝ_iᵀ`, one pass.
#[derive(Debug, Clone)]
pub struct GramAccumulator<T: Real = f64> {
    running_sum: SymMatrix<T>,
    count: u64,
}

impl<T: Real> GramAccumulator<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            running_sum: SymMatrix::zeros(dim),
            count: 0,
        }
    }

    pub fn update(&mut self, g: &[T]) {
        self.running_sum.rank1_update(T::one(), g);
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> Result<SymMatrix<T>> {
        if self.count == 0 {
            return Err(Error::InvalidParameter("gram accumulator is empty".into()));
        }
        Ok(self.running_sum.scale(T::one() / T::from_count(self.count as usize)))
    }
}

pub fn gram_update<T: Real>(acc: &mut GramAccumulator<T>, g: &[T]) {
    acc.update(g);
}

/// `Ĥ⁻¹ Q̂ Ĥ⁻¹`
pub fn plugin_covariance(h_acc: &HessianAccumulator, g_acc: &GramAccumulator) -> Result<SymMatrix> {
    let h_inv = h_acc.thresholded_inverse()?;
    sandwich(&h_inv, &g_acc.mean()?)
}
