//! Experiment configuration files: one TOML section per experiment.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PROBLEMS: &[&str] = &[
    "quadratic_game",
    "weak_minty_scalar",
    "global_forsaken",
    "cubic_minmax",
    "sign_power",
    "sinh_gradient",
    "linear_game",
    "policeman_burglar",
    "robust_least_squares",
    "federated_quadratic_game",
];

/// Problems whose instance is a client network rather than a single operator.
pub const NETWORK_PROBLEMS: &[&str] = &["federated_quadratic_game", "robust_least_squares"];

pub const ALGORITHMS: &[&str] = &[
    "gda",
    "eg",
    "speg",
    "polyak_eg",
    "polyak_seg",
    "dec_polyak_seg",
    "eg_l0l1",
    "proxskip_vip",
    "proxskip_l_svrgda",
    "local_gda",
    "local_eg",
];

pub const NETWORK_ALGORITHMS: &[&str] = &["proxskip_vip", "proxskip_l_svrgda", "local_gda", "local_eg"];

pub const POLICIES: &[&str] = &["constant", "switching", "horizon", "weak_minty", "line_search", "theory", "user"];

pub const SCHEMES: &[&str] = &["full", "minibatch", "single_uniform", "single_importance"];

pub const REGIMES: &[&str] = &["strongly_monotone", "monotone", "weak_minty"];

/// One experiment. Unset knobs fall back to problem or algorithm defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: String,
    pub algorithm: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<usize>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eig_a: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eig_b: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eig_c: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpolated: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clients: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    /// CSV file for robust least squares; synthetic data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    /// Fixes the instance across run seeds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem_seed: Option<u64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub same_sample: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critical_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grow: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sync_every: Option<u64>,
    /// Client minibatch size; deterministic local operators when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0_fill: Option<f64>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_oracle_calls: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<u64>,
    pub seeds: Vec<u64>,
    /// Metrics to keep; all when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<String>,
}

/// Experiments keyed by section name.
pub type ConfigFile = BTreeMap<String, ExperimentConfig>;

fn check_id(section: &str, field: &str, value: &str, allowed: &[&str]) -> Result<()> {
    if allowed.contains(&value) {
        Ok(())
    } else {
        Err(Error::config(format!("{section}.{field}"), format!("unknown id `{value}`; expected one of {allowed:?}")))
    }
}

impl ExperimentConfig {
    pub fn is_network(&self) -> bool {
        NETWORK_ALGORITHMS.contains(&self.algorithm.as_str())
    }

    pub fn validate(&self, section: &str) -> Result<()> {
        check_id(section, "problem", &self.problem, PROBLEMS)?;
        check_id(section, "algorithm", &self.algorithm, ALGORITHMS)?;
        if let Some(p) = &self.policy {
            check_id(section, "policy", p, POLICIES)?;
        }
        if let Some(s) = &self.scheme {
            check_id(section, "scheme", s, SCHEMES)?;
        }
        if let Some(r) = &self.regime {
            check_id(section, "regime", r, REGIMES)?;
        }
        let net_problem = NETWORK_PROBLEMS.contains(&self.problem.as_str());
        let single_only = self.problem == "federated_quadratic_game";
        if (self.is_network() && !net_problem) || (!self.is_network() && single_only) {
            return Err(Error::config(
                format!("{section}.algorithm"),
                "network algorithms need a network problem and vice versa",
            ));
        }
        if self.max_iters.is_none() && self.max_oracle_calls.is_none() {
            return Err(Error::config(format!("{section}.max_iters"), "set max_iters or max_oracle_calls"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config(format!("{section}.seeds"), "list at least one seed"));
        }
        if self.record_every == Some(0) {
            return Err(Error::config(format!("{section}.record_every"), "stride must be positive"));
        }
        if self.tau == Some(0) || self.batch == Some(0) {
            return Err(Error::config(format!("{section}.tau"), "batch sizes must be positive"));
        }
        if self.sync_every == Some(0) {
            return Err(Error::config(format!("{section}.sync_every"), "H must be at least 1"));
        }
        for (name, v) in [("gamma", self.gamma), ("omega", self.omega), ("lambda", self.lambda)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::config(format!("{section}.{name}"), "must be positive and finite"));
                }
            }
        }
        Ok(())
    }
}

fn toml_error_path(e: &toml::de::Error, text: &str) -> String {
    let Some(span) = e.span() else { return "config".into() };
    let line_start = text[..span.start].rfind('\n').map_or(0, |i| i + 1);
    let key = text[line_start..].split(['=', '\n']).next().unwrap_or("").trim();
    let section = text[..span.start]
        .lines()
        .rev()
        .find_map(|l| l.trim().strip_prefix('[').and_then(|r| r.strip_suffix(']')))
        .unwrap_or("");
    match (section.is_empty(), key.is_empty() || key.starts_with('[')) {
        (true, _) => key.to_string(),
        (false, true) => section.to_string(),
        (false, false) => format!("{section}.{key}"),
    }
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let cfg: ConfigFile = toml::from_str(text).map_err(|e| Error::config(toml_error_path(&e, text), e.message()))?;
    if cfg.is_empty() {
        return Err(Error::config("config", "no experiment sections"));
    }
    for (name, c) in &cfg {
        c.validate(name)?;
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

pub fn to_toml(cfg: &ConfigFile) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::config("config", e.to_string()))
}
