use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NominalSummary {
    #[serde(rename = "K_lqr")]
    pub k_lqr: Vec<f64>,
    pub care_residual: f64,
    #[serde(rename = "S_nominal")]
    pub s_nominal: f64,
    #[serde(rename = "J_nominal")]
    pub j_nominal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    #[serde(rename = "K0")]
    pub k0: Vec<f64>,
    /// Constant scale factor, or the smallest pointwise factor.
    pub mu0: f64,
    pub sup_residual: f64,
    #[serde(rename = "S_attack")]
    pub s_attack: f64,
    #[serde(rename = "E_attack")]
    pub e_attack: f64,
    #[serde(rename = "J_attack")]
    pub j_attack: f64,
    /// Effort of the attack before stealth scaling.
    #[serde(rename = "E_unscaled")]
    pub e_unscaled: f64,
    /// Mean `‖δ₀(t)‖∞` over the last tenth of the horizon, per channel maximum.
    pub settled_delta: f64,
    pub settled_delta_unscaled: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `None` when the nominal cost is zero.
    #[serde(rename = "percent_S_increase")]
    pub percent_s_increase: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub intervals: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the canonical serialization of the config.
    pub config_hash: String,
    pub seed: u64,
    pub grid: GridInfo,
    pub tool_version: String,
}

impl Provenance {
    pub fn of(config: &ScenarioConfig) -> Self {
        Provenance {
            config_hash: config_hash(config),
            seed: config.gad.seed,
            grid: GridInfo {
                horizon: config.grid.horizon,
                intervals: config.grid.intervals,
                dt: config.grid.horizon / config.grid.intervals as f64,
            },
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub nominal: NominalSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSummary>,
    pub provenance: Provenance,
}

impl SummaryReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn percent_increase(s_attack: f64, s_nominal: f64) -> Option<f64> {
    (s_nominal != 0.0).then(|| 100.0 * (s_attack - s_nominal) / s_nominal)
}

pub fn config_hash(config: &ScenarioConfig) -> String {
    let digest = Sha256::digest(config.to_json().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
