//! Strict JSON experiment configuration and its resolution into runtime
//! objects.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::directions::{random_orthonormal_basis, DirectionDistribution, QueryMode, Replacement};
use crate::error::{Error, Result};
use crate::kwengine::{KwSettings, Schedules};
use crate::models::{theta_on_unit_sphere, CovarianceDesign, Family, ModelSpec, DEFAULT_EQUICORR_RHO};
use crate::plugin::{Subsampling, DEFAULT_KAPPA1, DEFAULT_KAPPA2};
use crate::random_scaling::QuantileTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Linear,
    Logistic,
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignName {
    Identity,
    Equicorr,
}

fn default_noise_var() -> f64 {
    0.2
}

fn default_rho() -> f64 {
    DEFAULT_EQUICORR_RHO
}

fn default_theta_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: FamilyName,
    pub dim: usize,
    #[serde(default)]
    pub design: Option<DesignName>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
    /// quantile level, quantile family only
    #[serde(default)]
    pub tau: Option<f64>,
    /// `θ*` is drawn uniformly from the unit sphere with this seed unless
    /// given explicitly
    #[serde(default = "default_theta_seed")]
    pub theta_seed: u64,
    #[serde(default)]
    pub theta_star: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KindName {
    Canonical,
    Spherical,
    Gaussian,
    Orthonormal,
    Nonuniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionConfig {
    pub kind: KindName,
    /// coordinate probabilities, nonuniform kind only
    #[serde(default)]
    pub p: Option<Vec<f64>>,
    /// seed of the random orthonormal basis, orthonormal kind only
    #[serde(default)]
    pub u_seed: Option<u64>,
}

impl Default for DirectionConfig {
    fn default() -> Self {
        Self {
            kind: KindName::Canonical,
            p: None,
            u_seed: None,
        }
    }
}

fn one() -> usize {
    1
}

fn with_replacement() -> Replacement {
    Replacement::With
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryConfig {
    #[serde(default = "one")]
    pub m: usize,
    #[serde(default = "with_replacement")]
    pub replacement: Replacement,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            m: 1,
            replacement: Replacement::With,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// averaged Kiefer–Wolfowitz
    #[default]
    Akw,
    /// averaged first-order SGD with exact per-sample gradients
    Rm,
    /// stochastic Newton with a thresholded plug-in Hessian; the final
    /// iterate is the estimator
    Newton,
}

fn default_p() -> f64 {
    1.0
}

fn default_kappa1() -> f64 {
    DEFAULT_KAPPA1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlugInConfig {
    /// Bernoulli entry probability of the Hessian estimator
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_kappa1")]
    pub kappa1: f64,
    /// upper eigenvalue cap; Newton runs default it to 1e3
    #[serde(default)]
    pub kappa2: Option<f64>,
    #[serde(default)]
    pub subsampling: Subsampling,
    /// Hessian spacing `h0 · n^{-gamma}`; each defaults to the optimizer's
    #[serde(default)]
    pub hessian_h0: Option<f64>,
    #[serde(default)]
    pub hessian_gamma: Option<f64>,
}

impl Default for PlugInConfig {
    fn default() -> Self {
        Self {
            p: 1.0,
            kappa1: DEFAULT_KAPPA1,
            kappa2: None,
            subsampling: Subsampling::Ipw,
            hessian_h0: None,
            hessian_gamma: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    #[serde(default)]
    pub plug_in: Option<PlugInConfig>,
    #[serde(default)]
    pub random_scaling: bool,
    #[serde(default)]
    pub oracle: bool,
}

fn default_newton_refresh() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonConfig {
    /// recompute `Ĥ⁻¹` every this many steps
    #[serde(default = "default_newton_refresh")]
    pub refresh_every: u64,
    /// plain KW steps on the configured schedule before Newton updates
    /// start; the Hessian estimate fills in meanwhile
    #[serde(default = "default_newton_warmup")]
    pub warmup: u64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            refresh_every: 1,
            warmup: default_newton_warmup(),
        }
    }
}

fn default_newton_warmup() -> u64 {
    1000
}

fn default_level() -> f64 {
    0.95
}

fn default_replications() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    #[serde(default)]
    pub description: Option<String>,
    /// informational flag for recipes that take hours at desk scale
    #[serde(default)]
    pub long_running: bool,
    pub model: ModelConfig,
    #[serde(default)]
    pub directions: DirectionConfig,
    #[serde(default)]
    pub query: QueryConfig,
    #[serde(default)]
    pub schedule: Schedules,
    #[serde(default)]
    pub algorithm: Algorithm,
    #[serde(default)]
    pub newton: NewtonConfig,
    pub n: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub inference: InferenceConfig,
    /// projection vector, `(1, …, 1)/√d` when absent
    #[serde(default)]
    pub w: Option<Vec<f64>>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub checkpoints: Vec<u64>,
    #[serde(default)]
    pub theta0: Option<Vec<f64>>,
}

/// Everything a replication needs, validated.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub config: ExperimentConfig,
    pub model: ModelSpec,
    pub settings: KwSettings,
    pub w: Vec<f64>,
    pub theta0: Vec<f64>,
    /// the Hessian spacing schedule, when plug-in inference is on
    pub hessian_spacing: Option<Schedules>,
}

fn valid_run_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) && id != "." && id != ".."
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        Ok(cfg)
    }

    /// Hex SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn build_model(&self) -> std::result::Result<ModelSpec, Vec<String>> {
        let mc = &self.model;
        let mut problems = Vec::new();
        if mc.dim == 0 {
            return Err(vec!["model.dim must be positive".into()]);
        }
        let family = match mc.family {
            FamilyName::Linear => Family::Linear { noise_var: mc.noise_var },
            FamilyName::Logistic => Family::Logistic,
            FamilyName::Quantile => match mc.tau {
                Some(tau) => Family::Quantile { tau, noise_var: mc.noise_var },
                None => {
                    problems.push("model.tau is required for the quantile family".into());
                    Family::Quantile { tau: 0.5, noise_var: mc.noise_var }
                }
            },
        };
        if mc.tau.is_some() && mc.family != FamilyName::Quantile {
            problems.push("model.tau only applies to the quantile family".into());
        }
        let design = match mc.design.unwrap_or(DesignName::Identity) {
            DesignName::Identity => CovarianceDesign::Identity,
            DesignName::Equicorr => CovarianceDesign::Equicorr { rho: mc.rho },
        };
        let theta_star = match &mc.theta_star {
            Some(t) => {
                if t.len() != mc.dim {
                    problems.push(format!("model.theta_star has length {}, expected {}", t.len(), mc.dim));
                }
                if t.iter().all(|x| *x == 0.0) {
                    problems.push("model.theta_star must be non-zero (errors are relative to its norm)".into());
                }
                t.clone()
            }
            None => theta_on_unit_sphere(mc.dim, mc.theta_seed),
        };
        let spec = ModelSpec {
            family,
            theta_star,
            design,
        };
        problems.extend(spec.problems().into_iter().map(|p| format!("model: {p}")));
        if problems.is_empty() {
            Ok(spec)
        } else {
            Err(problems)
        }
    }

    fn build_directions(&self) -> std::result::Result<DirectionDistribution, Vec<String>> {
        let d = self.model.dim;
        let dc = &self.directions;
        let mut problems = Vec::new();
        if dc.p.is_some() && dc.kind != KindName::Nonuniform {
            problems.push("directions.p only applies to the nonuniform kind".into());
        }
        if dc.u_seed.is_some() && dc.kind != KindName::Orthonormal {
            problems.push("directions.u_seed only applies to the orthonormal kind".into());
        }
        let built = match dc.kind {
            KindName::Canonical => DirectionDistribution::canonical(d),
            KindName::Spherical => DirectionDistribution::spherical(d),
            KindName::Gaussian => DirectionDistribution::gaussian(d),
            KindName::Orthonormal => match dc.u_seed {
                Some(seed) => random_orthonormal_basis(d, seed).and_then(DirectionDistribution::orthonormal),
                None => Err(Error::InvalidParameter("directions.u_seed is required for the orthonormal kind".into())),
            },
            KindName::Nonuniform => match &dc.p {
                Some(p) if p.len() == d => DirectionDistribution::nonuniform(p.clone()),
                Some(p) => Err(Error::InvalidParameter(format!(
                    "directions.p has length {}, expected {d}",
                    p.len()
                ))),
                None => Err(Error::InvalidParameter("directions.p is required for the nonuniform kind".into())),
            },
        };
        match built {
            Ok(dist) if problems.is_empty() => Ok(dist),
            Ok(_) => Err(problems),
            Err(e) => {
                problems.push(format!("directions: {}", strip(e)));
                Err(problems)
            }
        }
    }

    /// Every violated invariant; empty when the config is runnable.
    pub fn problems(&self) -> Vec<String> {
        match self.resolve_inner() {
            Ok(_) => Vec::new(),
            Err(p) => p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        self.resolve_inner().map_err(Error::Config)
    }

    fn resolve_inner(&self) -> std::result::Result<ResolvedConfig, Vec<String>> {
        let mut problems = Vec::new();
        if !valid_run_id(&self.run_id) {
            problems.push(format!(
                "run_id {:?} must be non-empty and use only letters, digits, '-', '_' or '.'",
                self.run_id
            ));
        }
        let model = self.build_model().map_err(|p| problems.extend(p)).ok();
        let dist = if self.model.dim > 0 {
            self.build_directions().map_err(|p| problems.extend(p)).ok()
        } else {
            None
        };
        let mode = match QueryMode::new(self.query.m, self.query.replacement) {
            Ok(m) => Some(m),
            Err(e) => {
                problems.push(format!("query: {}", strip(e)));
                None
            }
        };
        if let (Some(dist), Some(mode)) = (&dist, &mode) {
            if let Err(e) = mode.validate_for(dist) {
                problems.push(format!("query: {}", strip(e)));
            }
        }
        for p in self.schedule.problems() {
            problems.push(format!("schedule: {p}"));
        }
        if self.replications == 0 {
            problems.push("replications must be at least 1".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            problems.push(format!("level must lie in (0, 1), got {}", self.level));
        }
        if self.inference.random_scaling && QuantileTable::default().two_sided(self.level).is_err() {
            problems.push(format!(
                "level {} has no tabled random-scaling critical value (use 0.8, 0.9, 0.95 or 0.98)",
                self.level
            ));
        }
        let d = self.model.dim;
        let w = match &self.w {
            Some(w) => {
                if w.len() != d {
                    problems.push(format!("w has length {}, expected {d}", w.len()));
                }
                if w.iter().all(|x| *x == 0.0) || !w.iter().all(|x| x.is_finite()) {
                    problems.push("w must be finite and non-zero".into());
                }
                w.clone()
            }
            None => vec![1.0 / (d.max(1) as f64).sqrt(); d],
        };
        let theta0 = match &self.theta0 {
            Some(t) => {
                if t.len() != d {
                    problems.push(format!("theta0 has length {}, expected {d}", t.len()));
                }
                t.clone()
            }
            None => vec![0.0; d],
        };
        for &c in &self.checkpoints {
            if c == 0 || c > self.n {
                problems.push(format!("checkpoint {c} must lie in [1, n = {}]", self.n));
            }
        }
        let mut hessian_spacing = None;
        if let Some(pc) = &self.inference.plug_in {
            if !(pc.p > 0.0 && pc.p <= 1.0) {
                problems.push(format!("inference.plug_in.p must lie in (0, 1], got {}", pc.p));
            }
            if !(pc.kappa1 > 0.0 && pc.kappa1.is_finite()) {
                problems.push(format!("inference.plug_in.kappa1 must be positive, got {}", pc.kappa1));
            }
            if let Some(k2) = pc.kappa2 {
                if !(k2 > pc.kappa1 && k2.is_finite()) {
                    problems.push(format!("inference.plug_in.kappa2 must exceed kappa1, got {k2}"));
                }
            }
            let hs = Schedules {
                h0: pc.hessian_h0.unwrap_or(self.schedule.h0),
                gamma: pc.hessian_gamma.unwrap_or(self.schedule.gamma),
                ..self.schedule
            };
            for p in hs.problems() {
                if p.starts_with("h0") || p.starts_with("gamma") {
                    problems.push(format!("inference.plug_in.hessian_{p}"));
                }
            }
            hessian_spacing = Some(hs);
        }
        match self.algorithm {
            Algorithm::Akw => {}
            Algorithm::Rm => {}
            Algorithm::Newton => {
                if self.inference.plug_in.is_none() {
                    problems.push("the newton algorithm needs inference.plug_in for its Hessian estimate".into());
                }
                if self.inference.random_scaling {
                    problems.push("random scaling applies to averaged iterates, not the newton algorithm".into());
                }
                if self.newton.refresh_every == 0 {
                    problems.push("newton.refresh_every must be at least 1".into());
                }
            }
        }
        if !problems.is_empty() {
            return Err(problems);
        }
        let (model, dist, mode) = (model.unwrap(), dist.unwrap(), mode.unwrap());
        let settings = KwSettings::new(dist, mode, self.schedule).map_err(|e| vec![strip(e)])?;
        Ok(ResolvedConfig {
            config: self.clone(),
            model,
            settings,
            w,
            theta0,
            hessian_spacing,
        })
    }
}

impl ResolvedConfig {
    /// Upper eigenvalue cap actually used by the Hessian accumulator.
    pub fn kappa2(&self) -> Option<f64> {
        let pc = self.config.inference.plug_in?;
        match self.config.algorithm {
            Algorithm::Newton => Some(pc.kappa2.unwrap_or(DEFAULT_KAPPA2)),
            _ => pc.kappa2,
        }
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::InvalidParameter(s) => s,
        other => other.to_string(),
    }
}

/// Applies a dotted-key override such as `schedule.eta0=0.2` to a JSON
/// config value. The value is parsed as JSON when possible, otherwise taken
/// as a string.
pub fn apply_override(target: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(vec![format!("override {assignment:?} is not of the form key=value")]))?;
    let value: serde_json::Value =
        serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(vec![format!("override key {key:?} is malformed")]));
    }
    let mut cur = target;
    for part in &parts[..parts.len() - 1] {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(vec![format!("override key {key:?}: {part:?} is not inside an object")]))?;
        cur = obj
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    let obj = cur
        .as_object_mut()
        .ok_or_else(|| Error::Config(vec![format!("override key {key:?} does not name an object field")]))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ExperimentConfig {
        ExperimentConfig::from_json(r#"{"run_id": "t", "model": {"family": "linear", "dim": 3}, "n": 10}"#).unwrap()
    }

    fn keys(v: &serde_json::Value) -> Vec<String> {
        let mut k: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
        k.sort();
        k
    }

    #[test]
    fn schema_lists_every_field() {
        let schema: serde_json::Value = serde_json::from_str(include_str!("../../recipes/config.schema.json")).unwrap();
        let mut c = base();
        c.inference.plug_in = Some(PlugInConfig::default());
        let v = serde_json::to_value(&c).unwrap();
        let props = &schema["properties"];
        assert_eq!(keys(&v), keys(props));
        for section in ["model", "directions", "query", "schedule", "newton", "inference"] {
            assert_eq!(keys(&v[section]), keys(&props[section]["properties"]), "{section}");
        }
        assert_eq!(
            keys(&v["inference"]["plug_in"]),
            keys(&props["inference"]["properties"]["plug_in"]["properties"])
        );
        assert_eq!(props["schedule"]["properties"]["eta0"]["default"], v["schedule"]["eta0"]);
    }

    #[test]
    fn defaults_fill_in() {
        let c = base();
        assert_eq!(c.replications, 100);
        assert_eq!(c.level, 0.95);
        assert_eq!(c.directions.kind, KindName::Canonical);
        assert_eq!(c.query, QueryConfig::default());
        let r = c.resolve().unwrap();
        assert!((crate::numkernel::norm(&r.w) - 1.0).abs() < 1e-15);
        assert!((crate::numkernel::norm(&r.model.theta_star) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let e = ExperimentConfig::from_json(r#"{"run_id": "t", "model": {"family": "linear", "dim": 3}, "n": 10, "bogus": 1}"#);
        assert!(e.unwrap_err().to_string().contains("bogus"));
        let e = ExperimentConfig::from_json(r#"{"run_id": "t", "model": {"family": "linear", "dim": 3, "sigma": 1}, "n": 10}"#);
        assert!(e.is_err());
    }

    #[test]
    fn every_problem_is_listed() {
        let mut c = base();
        c.schedule.alpha = 1.2;
        c.directions.kind = KindName::Gaussian;
        c.query = QueryConfig {
            m: 2,
            replacement: Replacement::Without,
        };
        c.replications = 0;
        let p = c.problems();
        assert!(p.iter().any(|s| s.contains("alpha must lie in (0.5, 1)")), "{p:?}");
        assert!(p.iter().any(|s| s.starts_with("query")), "{p:?}");
        assert!(p.iter().any(|s| s.contains("replications")), "{p:?}");
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn model_problems() {
        let mut c = base();
        c.model.family = FamilyName::Quantile;
        assert!(c.problems()[0].contains("tau"));
        c.model.tau = Some(1.5);
        assert!(c.problems()[0].contains("tau"));
        c.model.tau = Some(0.5);
        assert!(c.problems().is_empty());
        c.directions = DirectionConfig {
            kind: KindName::Nonuniform,
            p: Some(vec![0.5, 0.5]),
            u_seed: None,
        };
        assert!(c.problems()[0].contains("length"));
        c.directions.p = Some(vec![0.5, 0.25, 0.25]);
        assert!(c.problems().is_empty());
        c.level = 0.93;
        c.inference.random_scaling = true;
        assert!(c.problems()[0].contains("tabled"));
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = base();
        assert_eq!(a.hash(), base().hash());
        assert_eq!(a.hash().len(), 64);
        let mut b = base();
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn dotted_overrides() {
        let mut v: serde_json::Value = serde_json::from_str(r#"{"run_id": "t", "model": {"family": "linear", "dim": 3}, "n": 10}"#).unwrap();
        apply_override(&mut v, "schedule.eta0=0.3").unwrap();
        apply_override(&mut v, "model.family=logistic").unwrap();
        apply_override(&mut v, "n=20").unwrap();
        let c: ExperimentConfig = serde_json::from_value(v.clone()).unwrap();
        assert_eq!(c.schedule.eta0, 0.3);
        assert_eq!(c.model.family, FamilyName::Logistic);
        assert_eq!(c.n, 20);
        assert!(apply_override(&mut v, "n").is_err());
        assert!(apply_override(&mut v, "n.x=1").is_err());
    }
}
