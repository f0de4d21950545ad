use std::fmt;
use std::path::{Path, PathBuf};

use growth_euler::stability::check_pair_hypotheses;
use growth_euler::GrowthBound;
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    RankineSteady,
    Kirchhoff,
    PairShift,
    PairAmplitude,
    SerfatiResidual,
    GrowthboundAudit,
    MorreySweep,
}

impl Scenario {
    pub fn is_pair(self) -> bool {
        matches!(self, Scenario::PairShift | Scenario::PairAmplitude)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).unwrap();
        write!(f, "{}", s.as_str().unwrap())
    }
}

fn d_h() -> String {
    "const".into()
}
fn d_n() -> usize {
    32
}
fn d_dt() -> f64 {
    0.02
}
fn d_t() -> f64 {
    1.0
}
fn d_lambdas() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}
fn d_eps() -> f64 {
    1e-2
}
fn d_out() -> PathBuf {
    PathBuf::from("out")
}

/// One flat TOML file per run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default = "d_h")]
    pub h: String,
    /// defaults to h
    #[serde(default)]
    pub zeta: Option<String>,
    #[serde(default = "d_n")]
    pub n: usize,
    #[serde(default = "d_dt")]
    pub dt: f64,
    #[serde(rename = "T", default = "d_t")]
    pub t_end: f64,
    #[serde(default = "d_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default = "d_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

/// A validated config with its bounds parsed.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub cfg: ScenarioConfig,
    pub h: GrowthBound,
    pub zeta: GrowthBound,
}

pub fn load(path: &Path) -> Result<Loaded, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
    let cfg: ScenarioConfig =
        toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {}", path.display(), e.message())))?;
    validate(cfg)
}

pub fn validate(mut cfg: ScenarioConfig) -> Result<Loaded, Failure> {
    let bad = |m: String| Err(Failure::Config(m));
    if cfg.n < 2 {
        return bad(format!("n must be at least 2, got {}", cfg.n));
    }
    if !(cfg.dt.is_finite() && cfg.dt > 0.0) {
        return bad(format!("dt must be positive, got {}", cfg.dt));
    }
    if !(cfg.t_end.is_finite() && cfg.t_end > 0.0) {
        return bad(format!("T must be positive, got {}", cfg.t_end));
    }
    if cfg.dt > cfg.t_end {
        return bad(format!("dt = {} exceeds T = {}", cfg.dt, cfg.t_end));
    }
    if cfg.lambdas.is_empty() || cfg.lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return bad(format!("lambdas must be a non-empty list of positive numbers, got {:?}", cfg.lambdas));
    }
    // ε = 0 is allowed: identical pairs are a useful baseline
    if !(cfg.eps.is_finite() && cfg.eps >= 0.0) {
        return bad(format!("eps must be non-negative, got {}", cfg.eps));
    }
    let h = GrowthBound::parse(&cfg.h).map_err(|e| Failure::Config(format!("h: {e}")))?;
    let zeta_id = cfg.zeta.clone().unwrap_or_else(|| cfg.h.clone());
    let zeta = GrowthBound::parse(&zeta_id).map_err(|e| Failure::Config(format!("zeta: {e}")))?;
    cfg.zeta = Some(zeta_id);
    if cfg.scenario.is_pair() {
        check_pair_hypotheses(&h, &zeta).map_err(Failure::from)?;
    }
    Ok(Loaded { cfg, h, zeta })
}
