//! Loss oracles and data generators for linear, logistic and quantile
//! regression, with their population Hessian `H`, gradient Gram matrix `S`
//! and the resulting oracle covariances.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::directions::{analytic_q_multi, DirectionDistribution, QueryMode};
use crate::error::{Error, Result};
use crate::numkernel::{dot, norm, sandwich, spd_inverse, Cholesky, SymMatrix};
use crate::stats::{normal_pdf, normal_quantile};

/// A data point `ζ = (x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Black-box access to `f(θ; ζ)` plus the data stream it is evaluated on.
pub trait LossOracle: Sync {
    fn dim(&self) -> usize;

    fn loss(&self, theta: &[f64], point: &DataPoint) -> f64;

    fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> DataPoint;

    /// Per-sample (sub)gradient, when the model has one. Only the
    /// first-order baseline uses this; the KW optimizer never does.
    fn gradient(&self, _theta: &[f64], _point: &DataPoint) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// `f = (y - xᵀθ)²`, `y = xᵀθ* + N(0, σ²)`
    Linear { noise_var: f64 },
    /// `f = log(1 + exp(-y xᵀθ))`, `y ∈ {-1, 1}`
    Logistic,
    /// `f = ρ_τ(y - xᵀθ)`, `y = xᵀθ* + ε`, `ε ~ N(-σΦ⁻¹(τ), σ²)`
    Quantile { tau: f64, noise_var: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovarianceDesign {
    Identity,
    /// unit diagonal, `ρ` off the diagonal
    Equicorr { rho: f64 },
}

pub const DEFAULT_EQUICORR_RHO: f64 = 0.2;

impl CovarianceDesign {
    pub fn matrix(&self, dim: usize) -> SymMatrix {
        match *self {
            CovarianceDesign::Identity => SymMatrix::identity(dim),
            CovarianceDesign::Equicorr { rho } => {
                SymMatrix::from_upper_fn(dim, |i, j| if i == j { 1.0 } else { rho })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub theta_star: Vec<f64>,
    pub design: CovarianceDesign,
}

impl ModelSpec {
    pub fn new(family: Family, theta_star: Vec<f64>, design: CovarianceDesign) -> Result<Self> {
        let spec = Self {
            family,
            theta_star,
            design,
        };
        let problems = spec.problems();
        if problems.is_empty() {
            Ok(spec)
        } else {
            Err(Error::InvalidParameter(problems.join("; ")))
        }
    }

    /// Every violated invariant, as readable messages.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let d = self.theta_star.len();
        if d == 0 {
            out.push("theta_star must be non-empty".to_string());
        }
        if !self.theta_star.iter().all(|x| x.is_finite()) {
            out.push("theta_star must be finite".to_string());
        }
        match self.family {
            Family::Linear { noise_var } => {
                if !(noise_var > 0.0 && noise_var.is_finite()) {
                    out.push(format!("noise_var must be positive, got {noise_var}"));
                }
            }
            Family::Logistic => {}
            Family::Quantile { tau, noise_var } => {
                if !(tau > 0.0 && tau < 1.0) {
                    out.push(format!("tau must lie in (0, 1), got {tau}"));
                }
                if !(noise_var > 0.0 && noise_var.is_finite()) {
                    out.push(format!("noise_var must be positive, got {noise_var}"));
                }
            }
        }
        if let CovarianceDesign::Equicorr { rho } = self.design {
            let lower = if d > 1 { -1.0 / (d as f64 - 1.0) } else { -1.0 };
            if !(rho > lower && rho < 1.0) {
                out.push(format!(
                    "equicorrelation rho must lie in ({lower}, 1) for d = {d}, got {rho}"
                ));
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn design_matrix(&self) -> SymMatrix {
        self.design.matrix(self.dim())
    }
}

/// A point drawn uniformly from the unit sphere (normalized seeded Gaussian).
pub fn theta_on_unit_sphere(dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Check loss `ρ_τ(z) = z (τ - 1{z < 0})`.
pub fn check_loss(tau: f64, z: f64) -> f64 {
    if z < 0.0 {
        z * (tau - 1.0)
    } else {
        z * tau
    }
}

/// `log(1 + exp(t))` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Loss oracle for one of the three regression families.
#[derive(Debug, Clone)]
pub struct ModelOracle {
    spec: ModelSpec,
    /// `None` for the identity design
    chol: Option<Cholesky>,
    noise_sd: f64,
    noise_mean: f64,
}

pub fn make_oracle(spec: &ModelSpec) -> Result<ModelOracle> {
    let problems = spec.problems();
    if !problems.is_empty() {
        return Err(Error::InvalidParameter(problems.join("; ")));
    }
    let chol = match spec.design {
        CovarianceDesign::Identity => None,
        _ => Some(Cholesky::new(&spec.design_matrix())?),
    };
    let (noise_sd, noise_mean) = match spec.family {
        Family::Linear { noise_var } => (noise_var.sqrt(), 0.0),
        Family::Logistic => (0.0, 0.0),
        Family::Quantile { tau, noise_var } => {
            let sd = noise_var.sqrt();
            (sd, -sd * normal_quantile(tau))
        }
    };
    Ok(ModelOracle {
        spec: spec.clone(),
        chol,
        noise_sd,
        noise_mean,
    })
}

impl ModelOracle {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }
}

impl LossOracle for ModelOracle {
    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn loss(&self, theta: &[f64], point: &DataPoint) -> f64 {
        let fit = dot(&point.x, theta);
        match self.spec.family {
            Family::Linear { .. } => {
                let r = point.y - fit;
                r * r
            }
            Family::Logistic => softplus(-point.y * fit),
            Family::Quantile { tau, .. } => check_loss(tau, point.y - fit),
        }
    }

    fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> DataPoint {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let x = match &self.chol {
            None => z,
            Some(c) => c.apply(&z),
        };
        let signal = dot(&x, &self.spec.theta_star);
        let y = match self.spec.family {
            Family::Linear { .. } | Family::Quantile { .. } => {
                let e: f64 = rng.sample(StandardNormal);
                signal + self.noise_mean + self.noise_sd * e
            }
            Family::Logistic => {
                let u: f64 = rng.random();
                if u < sigmoid(signal) {
                    1.0
                } else {
                    -1.0
                }
            }
        };
        DataPoint { x, y }
    }

    fn gradient(&self, theta: &[f64], point: &DataPoint) -> Option<Vec<f64>> {
        let fit = dot(&point.x, theta);
        let scale = match self.spec.family {
            Family::Linear { .. } => 2.0 * (fit - point.y),
            Family::Logistic => -point.y * sigmoid(-point.y * fit),
            Family::Quantile { tau, .. } => {
                let r = point.y - fit;
                (if r < 0.0 { 1.0 } else { 0.0 }) - tau
            }
        };
        Some(point.x.iter().map(|&xi| scale * xi).collect())
    }
}

/// `f(θ; ζ) = θᵀAθ - 2 xᵀθ + y` with `x ~ N(0, I)`, `y = 0`. Its Hessian is
/// `2A` for every sample and finite differences of it are exact.
#[derive(Debug, Clone)]
pub struct QuadraticOracle {
    a: SymMatrix,
}

impl QuadraticOracle {
    pub fn new(a: SymMatrix) -> Self {
        Self { a }
    }

    pub fn hessian(&self) -> SymMatrix {
        self.a.scale(2.0)
    }
}

impl LossOracle for QuadraticOracle {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn loss(&self, theta: &[f64], point: &DataPoint) -> f64 {
        self.a.quad_form(theta) - 2.0 * dot(&point.x, theta) + point.y
    }

    fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> DataPoint {
        DataPoint {
            x: (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect(),
            y: 0.0,
        }
    }

    fn gradient(&self, theta: &[f64], point: &DataPoint) -> Option<Vec<f64>> {
        let at = self.a.mul_vec(theta);
        Some(at.iter().zip(&point.x).map(|(a, x)| 2.0 * a - 2.0 * x).collect())
    }
}

/// `E[g(a)]` for `a ~ N(0, s²)` by composite Simpson on ±12 s.
fn gaussian_expectation(s: f64, g: impl Fn(f64) -> f64) -> f64 {
    if s == 0.0 {
        return g(0.0);
    }
    const PANELS: usize = 8000;
    let lim = 12.0;
    let h = 2.0 * lim / PANELS as f64;
    let mut acc = 0.0;
    for i in 0..=PANELS {
        let t = -lim + i as f64 * h;
        let w = if i == 0 || i == PANELS {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * normal_pdf(t) * g(s * t);
    }
    acc * h / 3.0
}

/// Logistic Fisher information `E[xxᵀ σ'(xᵀθ*)]` via Gaussian conditioning
/// on `a = xᵀθ*`: with `s² = θ*ᵀΣθ*` and `β = Σθ*/s²`,
/// `E[w(a) xxᵀ] = E[w](Σ - s²ββᵀ) + E[w(a) a²] ββᵀ`.
fn logistic_information(spec: &ModelSpec) -> SymMatrix {
    let sigma = spec.design_matrix();
    let st = sigma.mul_vec(&spec.theta_star);
    let s2 = dot(&spec.theta_star, &st);
    let weight = |a: f64| {
        let p = sigmoid(a);
        p * (1.0 - p)
    };
    if s2 == 0.0 {
        return sigma.scale(0.25);
    }
    let s = s2.sqrt();
    let ew = gaussian_expectation(s, weight);
    let ewa2 = gaussian_expectation(s, |a| weight(a) * a * a);
    let d = spec.dim();
    SymMatrix::from_upper_fn(d, |i, j| {
        let bb = st[i] * st[j] / (s2 * s2);
        ew * (sigma.get(i, j) - s2 * bb) + ewa2 * bb
    })
}

/// Monte-Carlo estimate of the logistic information with the largest
/// entrywise standard error. Independent of the quadrature route above.
pub fn logistic_information_monte_carlo(spec: &ModelSpec, draws: usize, seed: u64) -> Result<(SymMatrix, f64)> {
    let oracle = make_oracle(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.dim();
    let mut sum = SymMatrix::zeros(d);
    let mut sum_sq = SymMatrix::zeros(d);
    for _ in 0..draws {
        let x = oracle.sample_point(&mut rng).x;
        let p = sigmoid(dot(&x, &spec.theta_star));
        let w = p * (1.0 - p);
        sum.rank1_update(w, &x);
        let x2: Vec<f64> = x.iter().map(|v| v * v).collect();
        sum_sq.rank1_update(w * w, &x2);
    }
    let n = draws as f64;
    let mean = sum.scale(1.0 / n);
    let second = sum_sq.scale(1.0 / n);
    let mut se = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let var = (second.get(i, j) - mean.get(i, j).powi(2)).max(0.0);
            se = se.max((var / n).sqrt());
        }
    }
    Ok((mean, se))
}

/// Population Hessian `H = ∇²F(θ*)`.
pub fn analytic_hessian(spec: &ModelSpec) -> Result<SymMatrix> {
    let sigma = spec.design_matrix();
    Ok(match spec.family {
        Family::Linear { .. } => sigma.scale(2.0),
        Family::Logistic => logistic_information(spec),
        Family::Quantile { tau, noise_var } => {
            sigma.scale(normal_pdf(normal_quantile(tau)) / noise_var.sqrt())
        }
    })
}

/// Gram matrix of the per-sample gradient at the optimum,
/// `S = E[∇f(θ*)∇f(θ*)ᵀ]`.
pub fn analytic_gram(spec: &ModelSpec) -> Result<SymMatrix> {
    let sigma = spec.design_matrix();
    Ok(match spec.family {
        Family::Linear { noise_var } => sigma.scale(4.0 * noise_var),
        Family::Logistic => logistic_information(spec),
        Family::Quantile { tau, .. } => sigma.scale(tau * (1.0 - tau)),
    })
}

/// `H⁻¹ Q_m H⁻¹`, the AKW limiting covariance of `√n(θ̄ - θ*)`.
pub fn oracle_covariance(spec: &ModelSpec, dist: &DirectionDistribution, mode: &QueryMode) -> Result<SymMatrix> {
    let h_inv = spd_inverse(&analytic_hessian(spec)?)?;
    let q = analytic_q_multi(dist, &analytic_gram(spec)?, mode)?;
    sandwich(&h_inv, &q)
}

/// `H⁻¹ S H⁻¹`, the limiting covariance of averaged first-order SGD.
pub fn rm_covariance(spec: &ModelSpec) -> Result<SymMatrix> {
    let h_inv = spd_inverse(&analytic_hessian(spec)?)?;
    sandwich(&h_inv, &analytic_gram(spec)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::directions::Replacement;

    fn linear(d: usize) -> ModelSpec {
        ModelSpec::new(
            Family::Linear { noise_var: 0.2 },
            theta_on_unit_sphere(d, 1),
            CovarianceDesign::Identity,
        )
        .unwrap()
    }

    #[test]
    fn spec_validation() {
        let th = vec![0.0; 3];
        assert!(ModelSpec::new(Family::Linear { noise_var: 0.0 }, th.clone(), CovarianceDesign::Identity).is_err());
        assert!(ModelSpec::new(
            Family::Quantile { tau: 1.0, noise_var: 1.0 },
            th.clone(),
            CovarianceDesign::Identity
        )
        .is_err());
        assert!(ModelSpec::new(Family::Logistic, th.clone(), CovarianceDesign::Equicorr { rho: -0.5 }).is_err());
        assert!(ModelSpec::new(Family::Logistic, th, CovarianceDesign::Equicorr { rho: -0.4 }).is_ok());
    }

    #[test]
    fn theta_star_on_unit_sphere() {
        let t = theta_on_unit_sphere(7, 42);
        assert!((norm(&t) - 1.0).abs() < 1e-15);
        assert_eq!(t, theta_on_unit_sphere(7, 42));
    }

    #[test]
    fn loss_values() {
        let spec = linear(2);
        let o = make_oracle(&spec).unwrap();
        let x = vec![0.3, -1.2];
        let y = dot(&x, &spec.theta_star);
        assert_eq!(o.loss(&spec.theta_star, &DataPoint { x: x.clone(), y }), 0.0);

        let lo = make_oracle(&ModelSpec::new(Family::Logistic, vec![0.5, 0.5], CovarianceDesign::Identity).unwrap())
            .unwrap();
        for yv in [-1.0, 1.0] {
            let f = lo.loss(&[0.0, 0.0], &DataPoint { x: x.clone(), y: yv });
            assert!((f - 2f64.ln()).abs() < 1e-15);
        }
        // large margins do not overflow
        let f = lo.loss(&[1000.0, 0.0], &DataPoint { x: vec![1.0, 0.0], y: -1.0 });
        assert!((f - 1000.0).abs() < 1e-9);

        // τ = 0.5 and y - xᵀθ = -2 gives ρ = 1
        let qo = make_oracle(
            &ModelSpec::new(Family::Quantile { tau: 0.5, noise_var: 0.2 }, vec![0.0], CovarianceDesign::Identity)
                .unwrap(),
        )
        .unwrap();
        assert_eq!(qo.loss(&[1.0], &DataPoint { x: vec![2.0], y: 0.0 }), 1.0);
    }

    #[test]
    fn population_matrices() {
        let d = 4;
        let spec = linear(d);
        assert_eq!(analytic_hessian(&spec).unwrap(), SymMatrix::identity(d).scale(2.0));
        assert!(analytic_gram(&spec).unwrap().max_abs_diff(&SymMatrix::identity(d).scale(0.8)) < 1e-15);

        let q = ModelSpec::new(
            Family::Quantile { tau: 0.5, noise_var: 0.2 },
            vec![0.0; d],
            CovarianceDesign::Identity,
        )
        .unwrap();
        let h = analytic_hessian(&q).unwrap();
        assert!((h.get(0, 0) - 0.892_062).abs() < 1e-6);
        let q1 = ModelSpec::new(
            Family::Quantile { tau: 0.1, noise_var: 0.2 },
            vec![0.0; d],
            CovarianceDesign::Equicorr { rho: 0.2 },
        )
        .unwrap();
        let s = analytic_gram(&q1).unwrap();
        assert!(s.max_abs_diff(&q1.design_matrix().scale(0.09)) < 1e-15);

        let lz = ModelSpec::new(Family::Logistic, vec![0.0; d], CovarianceDesign::Equicorr { rho: 0.2 }).unwrap();
        let quarter = lz.design_matrix().scale(0.25);
        assert!(analytic_hessian(&lz).unwrap().max_abs_diff(&quarter) < 1e-15);
        assert!(analytic_gram(&lz).unwrap().max_abs_diff(&quarter) < 1e-15);
    }

    #[test]
    fn logistic_quadrature_matches_monte_carlo() {
        for design in [CovarianceDesign::Identity, CovarianceDesign::Equicorr { rho: 0.2 }] {
            let spec = ModelSpec::new(Family::Logistic, theta_on_unit_sphere(3, 9), design).unwrap();
            let exact = analytic_hessian(&spec).unwrap();
            let (mc, se) = logistic_information_monte_carlo(&spec, 400_000, 17).unwrap();
            assert!(exact.max_abs_diff(&mc) < 5.0 * se, "{exact:?} vs {mc:?} (se {se})");
        }
    }

    #[test]
    fn oracle_covariance_examples() {
        let d = 5;
        let spec = linear(d);
        let canon = DirectionDistribution::canonical(d).unwrap();
        let cov = oracle_covariance(&spec, &canon, &QueryMode::single()).unwrap();
        assert!(cov.max_abs_diff(&SymMatrix::identity(d).scale(0.2 * d as f64)) < 1e-12);

        let full = QueryMode::new(d, Replacement::Without).unwrap();
        let cov = oracle_covariance(&spec, &canon, &full).unwrap();
        assert!(cov.max_abs_diff(&rm_covariance(&spec).unwrap()) < 1e-12);

        let one = ModelSpec::new(Family::Quantile { tau: 0.3, noise_var: 0.5 }, vec![0.7], CovarianceDesign::Identity)
            .unwrap();
        let h = analytic_hessian(&one).unwrap().get(0, 0);
        let s = analytic_gram(&one).unwrap().get(0, 0);
        let cov = oracle_covariance(&one, &DirectionDistribution::canonical(1).unwrap(), &QueryMode::single()).unwrap();
        assert!((cov.get(0, 0) - s / (h * h)).abs() < 1e-12);
    }

    #[test]
    fn design_sampler_moments() {
        let spec = ModelSpec::new(
            Family::Linear { noise_var: 0.2 },
            theta_on_unit_sphere(4, 3),
            CovarianceDesign::Equicorr { rho: 0.2 },
        )
        .unwrap();
        let o = make_oracle(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut acc = SymMatrix::zeros(4);
        let mut resid = 0.0;
        for _ in 0..n {
            let p = o.sample_point(&mut rng);
            acc.rank1_update(1.0, &p.x);
            resid += (p.y - dot(&p.x, &spec.theta_star)).powi(2);
        }
        assert!(acc.scale(1.0 / n as f64).max_abs_diff(&spec.design_matrix()) < 0.05);
        assert!((resid / n as f64 - 0.2).abs() < 0.01);
    }

    #[test]
    fn quantile_noise_has_requested_level() {
        for tau in [0.1, 0.5, 0.9] {
            let spec = ModelSpec::new(Family::Quantile { tau, noise_var: 0.2 }, vec![0.4, -0.2], CovarianceDesign::Identity)
                .unwrap();
            let o = make_oracle(&spec).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(6);
            let n = 50_000;
            let below = (0..n)
                .filter(|_| {
                    let p = o.sample_point(&mut rng);
                    p.y - dot(&p.x, &spec.theta_star) <= 0.0
                })
                .count();
            assert!((below as f64 / n as f64 - tau).abs() < 0.01);
        }
    }

    #[test]
    fn logistic_labels_follow_the_link() {
        let spec = ModelSpec::new(Family::Logistic, vec![2.0], CovarianceDesign::Identity).unwrap();
        let o = make_oracle(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // E[y x] = E[x (2σ(2x) - 1)] > 0 and labels are ±1
        let mut s = 0.0;
        for _ in 0..20_000 {
            let p = o.sample_point(&mut rng);
            assert!(p.y == 1.0 || p.y == -1.0);
            s += p.y * p.x[0];
        }
        assert!(s > 0.0);
    }

    #[test]
    fn gradients_match_central_differences() {
        let specs = [
            linear(3),
            ModelSpec::new(Family::Logistic, theta_on_unit_sphere(3, 2), CovarianceDesign::Identity).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for spec in specs {
            let o = make_oracle(&spec).unwrap();
            let p = o.sample_point(&mut rng);
            let th = vec![0.1, -0.3, 0.2];
            let g = o.gradient(&th, &p).unwrap();
            for k in 0..3 {
                let mut a = th.clone();
                let mut b = th.clone();
                a[k] += 1e-6;
                b[k] -= 1e-6;
                let fd = (o.loss(&a, &p) - o.loss(&b, &p)) / 2e-6;
                assert!((fd - g[k]).abs() < 1e-6);
            }
        }
    }
}
