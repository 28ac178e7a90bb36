//! Untrusted instance schema as read from disk.
//!
//! Field names here are the documented JSON schema. Maps are `BTreeMap` so
//! that serialization is canonical: writing a validated instance back out
//! produces the same bytes regardless of input key order.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawInstance {
    pub version: u32,
    pub network: RawNetwork,
    pub generators: Vec<RawGenerator>,
    pub demand: RawDemand,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repdays: Option<RawRepDays>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub series: Option<RawSeries>,
    pub policy: RawPolicy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawNetwork {
    pub nodes: Vec<RawNode>,
    pub lines: Vec<RawLine>,
    /// Interface flow limit into each node from the transmission network, MW.
    #[serde(default)]
    pub interface_limits: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawNode {
    pub id: String,
    pub state: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawLine {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Reactance, ohm.
    pub reactance: f64,
    /// Flow limit, MVA.
    pub capacity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawGenerator {
    pub id: String,
    pub node: String,
    /// "existing" or "candidate".
    pub kind: String,
    /// "renewable" or "controllable".
    pub tech: String,
    #[serde(default)]
    pub fuel: String,
    /// Output bounds for existing units, MW.
    #[serde(default)]
    pub g_min: f64,
    #[serde(default)]
    pub g_max: f64,
    /// Build cap for candidate units, MW.
    #[serde(default)]
    pub max_build: f64,
    /// Ramp limits per interval for controllable units, MW (down is <= 0).
    #[serde(default)]
    pub ramp_down: f64,
    #[serde(default)]
    pub ramp_up: f64,
    /// Minimum output factor for candidate controllable units, in [0, 1].
    #[serde(default)]
    pub min_output_factor: f64,
    /// Incremental cost, $/MWh.
    pub cost_energy: f64,
    /// Capital cost for candidate units, $/MW (total, prorated at validation).
    #[serde(default)]
    pub cost_invest: f64,
    /// Forecast factor rho[day][hour] for renewables (repdays variant).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecast: Option<Vec<Vec<f64>>>,
    /// Normalized forecast error mean and stdev for renewables.
    #[serde(default)]
    pub error_mean: f64,
    #[serde(default)]
    pub error_stdev: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawDemand {
    /// Marginal utility slope N, $/MWh per MW.
    pub slope: f64,
    /// Marginal utility intercept rule M = m_scale * D + m_offset.
    #[serde(default)]
    pub m_scale: f64,
    #[serde(default)]
    pub m_offset: f64,
    /// Inflexible demand D[node][day][hour], MW (repdays variant).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inflexible: Option<BTreeMap<String, Vec<Vec<f64>>>>,
    /// Explicit M[node][day][hour] overriding the rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_values: Option<BTreeMap<String, Vec<Vec<f64>>>>,
    /// Demand-response offset per node and hour, $/MWh.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dr_offset: Option<BTreeMap<String, Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawRepDays {
    pub weights: Vec<f64>,
    pub hours: usize,
    /// Clock labels of the hours, used by the TOU peak window. Defaults to 0..hours.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hour_labels: Option<Vec<u32>>,
}

/// Raw hourly series; `cluster_representative_days` reduces these to repdays.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawSeries {
    pub hours_per_day: usize,
    /// Demand series per node, length a multiple of hours_per_day.
    pub demand: BTreeMap<String, Vec<f64>>,
    /// Forecast factor series per renewable generator id.
    #[serde(default)]
    pub forecast: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawPolicy {
    pub strategic_state: String,
    /// RPS fraction per state.
    pub rps: BTreeMap<String, f64>,
    /// Daily incentive budget per state, $.
    pub budget: BTreeMap<String, f64>,
    /// Hour labels belonging to the on-peak window.
    pub peak_hours: Vec<u32>,
    /// Chance-constraint violation tolerance.
    pub eta: f64,
    /// Relative gap tolerance of the outer loop.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub horizon_years: u32,
    pub discount_rate: f64,
    /// Participation factors alpha[gen][hour]; defaults to uniform over the
    /// strategic state's controllable units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participation: Option<BTreeMap<String, Vec<f64>>>,
}

fn default_epsilon() -> f64 {
    1e-3
}
