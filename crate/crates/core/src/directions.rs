//! Random search directions and the Gram matrices they induce.
//!
//! Every distribution here satisfies `E[v vᵀ] = I`. The closed forms in
//! [`analytic_q`] give `Q = E[v vᵀ S v vᵀ]`, which sets the AKW limiting
//! covariance `H⁻¹ Q H⁻¹`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numkernel::{orthonormalize_columns, sym_eigen, SquareMatrix, SymMatrix};
use crate::scalar::Real;

const ORTHONORMAL_TOLERANCE: f64 = 1e-10;
const PROBABILITY_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum DirectionKind {
    /// `v ~ N(0, I)`
    Gaussian,
    /// uniform on the sphere `‖v‖² = d`
    Spherical,
    /// uniform over `{√d e_k}`
    CanonicalUniform,
    /// uniform over `{√d u_k}` for the columns of an orthonormal `U`
    OrthonormalUniform(SquareMatrix<f64>),
    /// `v = e_k / √p_k` with probability `p_k`
    CoordinateNonUniform(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionDistribution {
    kind: DirectionKind,
    dim: usize,
    /// cumulative probabilities for `CoordinateNonUniform`
    cumulative: Vec<f64>,
}

impl DirectionDistribution {
    fn simple(kind: DirectionKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(Self {
            kind,
            dim,
            cumulative: Vec::new(),
        })
    }

    pub fn gaussian(dim: usize) -> Result<Self> {
        Self::simple(DirectionKind::Gaussian, dim)
    }

    pub fn spherical(dim: usize) -> Result<Self> {
        Self::simple(DirectionKind::Spherical, dim)
    }

    pub fn canonical(dim: usize) -> Result<Self> {
        Self::simple(DirectionKind::CanonicalUniform, dim)
    }

    pub fn orthonormal(u: SquareMatrix<f64>) -> Result<Self> {
        let defect = u.orthonormality_defect();
        if !(defect <= ORTHONORMAL_TOLERANCE) {
            return Err(Error::InvalidParameter(format!(
                "basis is not orthonormal (max |UᵀU - I| = {defect:e})"
            )));
        }
        let dim = u.dim();
        Self::simple(DirectionKind::OrthonormalUniform(u), dim)
    }

    /// Orthonormal basis drawn as the Q factor of a seeded Gaussian matrix.
    pub fn random_orthonormal(dim: usize, seed: u64) -> Result<Self> {
        Self::orthonormal(random_orthonormal_basis(dim, seed)?)
    }

    pub fn nonuniform(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if let Some(bad) = p.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::InvalidParameter(format!(
                "coordinate probabilities must be positive, got {bad}"
            )));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(Error::InvalidParameter(format!(
                "coordinate probabilities must sum to 1, got {total}"
            )));
        }
        let mut acc = 0.0;
        let cumulative = p
            .iter()
            .map(|x| {
                acc += x;
                acc
            })
            .collect();
        Ok(Self {
            dim: p.len(),
            kind: DirectionKind::CoordinateNonUniform(p),
            cumulative,
        })
    }

    pub fn kind(&self) -> &DirectionKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_discrete_basis(&self) -> bool {
        matches!(
            self.kind,
            DirectionKind::CanonicalUniform | DirectionKind::OrthonormalUniform(_)
        )
    }

    /// `√d` times the k-th basis vector of a basis kind.
    fn basis_direction(&self, k: usize) -> Vec<f64> {
        let scale = (self.dim as f64).sqrt();
        match &self.kind {
            DirectionKind::OrthonormalUniform(u) => u.column(k).into_iter().map(|x| scale * x).collect(),
            _ => {
                let mut v = vec![0.0; self.dim];
                v[k] = scale;
                v
            }
        }
    }

    /// One direction draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim;
        match &self.kind {
            DirectionKind::Gaussian => (0..d).map(|_| rng.sample(StandardNormal)).collect(),
            DirectionKind::Spherical => loop {
                let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let nrm = crate::numkernel::norm(&v);
                if nrm > 0.0 {
                    let scale = (d as f64).sqrt() / nrm;
                    v.iter_mut().for_each(|x| *x *= scale);
                    break v;
                }
            },
            DirectionKind::CanonicalUniform | DirectionKind::OrthonormalUniform(_) => {
                self.basis_direction(rng.random_range(0..d))
            }
            DirectionKind::CoordinateNonUniform(p) => {
                let u: f64 = rng.random();
                let k = self
                    .cumulative
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(d - 1);
                let mut v = vec![0.0; d];
                v[k] = (1.0 / p[k]).sqrt();
                v
            }
        }
    }

    /// A batch of `mode.m` directions. Without replacement the basis
    /// indices are a uniformly random ordered m-subset (partial
    /// Fisher–Yates).
    pub fn sample_batch<R: Rng + ?Sized>(&self, mode: &QueryMode, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        mode.validate_for(self)?;
        match mode.replacement {
            Replacement::With => Ok((0..mode.m).map(|_| self.sample(rng)).collect()),
            Replacement::Without => {
                let mut idx: Vec<usize> = (0..self.dim).collect();
                for i in 0..mode.m {
                    let j = rng.random_range(i..self.dim);
                    idx.swap(i, j);
                }
                Ok(idx[..mode.m]
                    .iter()
                    .map(|&k| self.basis_direction(k))
                    .collect())
            }
        }
    }
}

pub fn random_orthonormal_basis(dim: usize, seed: u64) -> Result<SquareMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = SquareMatrix::from_fn(dim, |_, _| rng.sample(StandardNormal));
    orthonormalize_columns(&g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Replacement {
    With,
    Without,
}

/// `m` directions per iteration (`m + 1` function queries).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryMode {
    pub m: usize,
    pub replacement: Replacement,
}

impl QueryMode {
    pub fn new(m: usize, replacement: Replacement) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter(
                "number of directions m must be at least 1".into(),
            ));
        }
        Ok(Self { m, replacement })
    }

    pub fn single() -> Self {
        Self {
            m: 1,
            replacement: Replacement::With,
        }
    }

    pub fn validate_for(&self, dist: &DirectionDistribution) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParameter(
                "number of directions m must be at least 1".into(),
            ));
        }
        if self.replacement == Replacement::Without {
            if !dist.is_discrete_basis() {
                return Err(Error::InvalidParameter(
                    "sampling without replacement requires a canonical or orthonormal basis".into(),
                ));
            }
            if self.m > dist.dim() {
                return Err(Error::InvalidParameter(format!(
                    "without replacement needs m <= d (m = {}, d = {})",
                    self.m,
                    dist.dim()
                )));
            }
        }
        Ok(())
    }
}

/// `Q = E[v vᵀ S v vᵀ]` in closed form.
pub fn analytic_q<T: Real>(dist: &DirectionDistribution, s: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    let d = dist.dim();
    if s.dim() != d {
        return Err(Error::DimensionMismatch {
            context: "analytic_q",
            expected: d,
            got: s.dim(),
        });
    }
    let df = T::from_count(d);
    let q = match dist.kind() {
        DirectionKind::Gaussian => gaussian_q(s),
        DirectionKind::Spherical => gaussian_q(s).scale(df / (df + T::lit(2.0))),
        DirectionKind::CanonicalUniform => {
            SymMatrix::from_diag(&s.diag().into_iter().map(|x| df * x).collect::<Vec<_>>())
        }
        DirectionKind::OrthonormalUniform(u) => {
            let u = SquareMatrix::from_fn(d, |i, j| T::lit(u.get(i, j)));
            let rotated = s.congruence(&u.transpose())?;
            let diag: Vec<T> = rotated.diag().into_iter().map(|x| df * x).collect();
            SymMatrix::from_diag(&diag).congruence(&u)?
        }
        DirectionKind::CoordinateNonUniform(p) => SymMatrix::from_diag(
            &s.diag()
                .into_iter()
                .zip(p)
                .map(|(x, &pk)| x / T::lit(pk))
                .collect::<Vec<_>>(),
        ),
    };
    Ok(q)
}

fn gaussian_q<T: Real>(s: &SymMatrix<T>) -> SymMatrix<T> {
    let tr = s.trace();
    let d = s.dim();
    SymMatrix::from_upper_fn(d, |i, j| {
        let two_s = T::lit(2.0) * s.get(i, j);
        if i == j {
            two_s + tr
        } else {
            two_s
        }
    })
}

/// Noise covariance of the `(m+1)`-query gradient:
/// `Q/m + (m-1)/m · S` with replacement, and
/// `(d-m)/(m(d-1)) · Q + d(m-1)/(m(d-1)) · S` without.
pub fn analytic_q_multi<T: Real>(
    dist: &DirectionDistribution,
    s: &SymMatrix<T>,
    mode: &QueryMode,
) -> Result<SymMatrix<T>> {
    mode.validate_for(dist)?;
    let q = analytic_q(dist, s)?;
    if mode.m == 1 {
        return Ok(q);
    }
    let m = T::from_count(mode.m);
    let one = T::one();
    let (wq, ws) = match mode.replacement {
        Replacement::With => (one / m, (m - one) / m),
        Replacement::Without => {
            let d = T::from_count(dist.dim());
            ((d - m) / (m * (d - one)), d * (m - one) / (m * (d - one)))
        }
    };
    q.scale(wq).add(&s.scale(ws))
}

/// Limiting covariance of the last (non-averaged) iterate scaled by
/// `n^{α/2}`: with `H = P Λ Pᵀ`, returns `P M Pᵀ` where
/// `M_kl = η₀ (PᵀQP)_kl / (Λ_kk + Λ_ll)`.
pub fn nonavg_covariance<T: Real>(q: &SymMatrix<T>, h: &SymMatrix<T>, eta0: T) -> Result<SymMatrix<T>> {
    if q.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            context: "nonavg_covariance",
            expected: h.dim(),
            got: q.dim(),
        });
    }
    let eig = sym_eigen(h)?;
    let min = eig.min_eigenvalue();
    if min <= T::zero() {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min.to_f64().unwrap_or(f64::NAN),
        });
    }
    let p = &eig.eigenvectors;
    let lam = &eig.eigenvalues;
    let rotated = q.congruence(&p.transpose())?;
    let m = SymMatrix::from_upper_fn(q.dim(), |k, l| eta0 * rotated.get(k, l) / (lam[k] + lam[l]));
    m.congruence(p)
}
