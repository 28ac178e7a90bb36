//! Validated instance with dense indices.

use super::raw::RawInstance;
use super::{finance, GenId, NodeId, StateId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GenKind {
    Existing,
    Candidate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tech {
    Renewable,
    Controllable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub state: StateId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Line {
    pub name: String,
    pub from: NodeId,
    pub to: NodeId,
    pub reactance: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Generator {
    pub name: String,
    pub node: NodeId,
    pub state: StateId,
    pub kind: GenKind,
    pub tech: Tech,
    pub fuel: String,
    pub g_min: f64,
    pub g_max: f64,
    pub max_build: f64,
    pub ramp_down: f64,
    pub ramp_up: f64,
    pub min_output_factor: f64,
    pub cost_energy: f64,
    pub cost_invest: f64,
    /// Capital cost prorated to $/MW-day over the policy horizon.
    pub daily_capital: f64,
    /// rho[day][hour]; empty for controllable units.
    pub forecast: Vec<Vec<f64>>,
    pub error_mean: f64,
    pub error_stdev: f64,
}

impl Generator {
    pub fn is_renewable(&self) -> bool {
        self.tech == Tech::Renewable
    }
    pub fn is_controllable(&self) -> bool {
        self.tech == Tech::Controllable
    }
    pub fn is_candidate(&self) -> bool {
        self.kind == GenKind::Candidate
    }
    pub fn is_existing(&self) -> bool {
        self.kind == GenKind::Existing
    }
    /// Forecast factor, zero for controllable units.
    pub fn rho(&self, day: usize, hour: usize) -> f64 {
        if self.forecast.is_empty() {
            0.0
        } else {
            self.forecast[day][hour]
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Demand {
    /// Marginal utility slope N (> 0).
    pub slope: f64,
    /// Inflexible demand D[node][day][hour], MW.
    pub inflexible: Vec<Vec<Vec<f64>>>,
    /// Marginal utility intercept M[node][day][hour], $/MWh.
    pub intercept: Vec<Vec<Vec<f64>>>,
    /// Demand-response offset per node and hour, $/MWh.
    pub dr_offset: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RepDaySet {
    pub weights: Vec<f64>,
    pub hours: usize,
    pub hour_labels: Vec<u32>,
}

impl RepDaySet {
    pub fn num_days(&self) -> usize {
        self.weights.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Policy {
    pub strategic_state: StateId,
    /// RPS fraction per state.
    pub rps: Vec<f64>,
    /// Daily incentive budget per state, $.
    pub budget: Vec<f64>,
    /// Peak flag per hour index.
    pub peak: Vec<bool>,
    pub eta: f64,
    pub epsilon: f64,
    pub horizon_years: u32,
    pub discount_rate: f64,
}

/// Frozen, validated problem instance. Never mutated after
/// [`validate_instance`]; safe to share across threads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instance {
    pub states: Vec<String>,
    pub nodes: Vec<Node>,
    pub lines: Vec<Line>,
    /// Interface flow limit per node, MW.
    pub interface_limit: Vec<f64>,
    pub gens: Vec<Generator>,
    pub demand: Demand,
    pub days: RepDaySet,
    pub policy: Policy,
    /// Participation factor alpha[gen][hour]; zero rows for units that do
    /// not balance forecast errors.
    pub alpha: Vec<Vec<f64>>,
    /// Derived index maps.
    pub node_gens: Vec<Vec<GenId>>,
    pub state_nodes: Vec<Vec<NodeId>>,
    pub state_gens: Vec<Vec<GenId>>,
}

impl Instance {
    pub fn num_t(&self) -> usize {
        self.days.hours
    }
    pub fn num_e(&self) -> usize {
        self.days.num_days()
    }
    pub fn weight(&self, day: usize) -> f64 {
        self.days.weights[day]
    }

    pub fn strategic_state(&self) -> StateId {
        self.policy.strategic_state
    }
    pub fn strategic_nodes(&self) -> &[NodeId] {
        &self.state_nodes[self.policy.strategic_state]
    }
    pub fn is_strategic_node(&self, n: NodeId) -> bool {
        self.nodes[n].state == self.policy.strategic_state
    }
    pub fn is_owned(&self, g: GenId) -> bool {
        self.gens[g].state == self.policy.strategic_state
    }

    /// Generators owned by the strategic utility.
    pub fn owned_gens(&self) -> &[GenId] {
        &self.state_gens[self.policy.strategic_state]
    }
    pub fn owned_controllables(&self) -> Vec<GenId> {
        self.owned_gens()
            .iter()
            .copied()
            .filter(|&g| self.gens[g].is_controllable())
            .collect()
    }
    pub fn owned_renewables(&self) -> Vec<GenId> {
        self.owned_gens()
            .iter()
            .copied()
            .filter(|&g| self.gens[g].is_renewable())
            .collect()
    }
    /// Candidate units (all candidates belong to the strategic state).
    pub fn candidates(&self) -> Vec<GenId> {
        (0..self.gens.len())
            .filter(|&g| self.gens[g].is_candidate())
            .collect()
    }

    /// Fixed offer of a non-strategic unit: full capacity, scaled by the
    /// forecast factor for renewables.
    pub fn nonstrategic_offer(&self, g: GenId, day: usize, hour: usize) -> f64 {
        let gen = &self.gens[g];
        debug_assert!(!self.is_owned(g));
        if gen.is_renewable() {
            gen.rho(day, hour) * gen.g_max
        } else {
            gen.g_max
        }
    }

    /// Marginal utility intercept net of the demand-response offset.
    pub fn net_intercept(&self, n: NodeId, day: usize, hour: usize) -> f64 {
        self.demand.intercept[n][day][hour] - self.demand.dr_offset[n][hour]
    }

    /// Upper bound M/N on flexible demand.
    pub fn demand_cap(&self, n: NodeId, day: usize, hour: usize) -> f64 {
        self.demand.intercept[n][day][hour] / self.demand.slope
    }

    /// Largest incremental cost in the system; used for dual variable boxes.
    pub fn max_cost(&self) -> f64 {
        self.gens
            .iter()
            .map(|g| g.cost_energy)
            .fold(0.0, f64::max)
    }

    /// Total inflexible demand of the strategic state on one day.
    pub fn strategic_inflexible(&self, day: usize) -> f64 {
        self.strategic_nodes()
            .iter()
            .map(|&n| self.demand.inflexible[n][day].iter().sum::<f64>())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationError {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ValidationErrors(pub Vec<ValidationError>);

impl fmt::Display for ValidationErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "instance validation failed ({} errors):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  {}: {}", e.path, e.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationErrors {}

struct Collector(Vec<ValidationError>);

impl Collector {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(ValidationError {
            path: path.into(),
            message: message.into(),
        });
    }
    fn check(&mut self, ok: bool, path: &str, message: impl Into<String>) {
        if !ok {
            self.push(path, message);
        }
    }
}

/// Checks every structural invariant of the raw instance, builds the index
/// maps and returns a frozen [`Instance`]. Every violated invariant is
/// reported, not just the first.
pub fn validate_instance(raw: &RawInstance) -> Result<Instance, ValidationErrors> {
    let mut errs = Collector(Vec::new());

    if raw.version != 1 {
        errs.push("version", format!("unsupported schema version {}", raw.version));
    }

    // States and nodes.
    let mut states: Vec<String> = Vec::new();
    let mut node_index: BTreeMap<String, NodeId> = BTreeMap::new();
    let mut nodes: Vec<Node> = Vec::new();
    for (i, rn) in raw.network.nodes.iter().enumerate() {
        let path = format!("network.nodes[{}]", i);
        if node_index.contains_key(&rn.id) {
            errs.push(&path, format!("duplicate node id '{}'", rn.id));
            continue;
        }
        let state = match states.iter().position(|s| s == &rn.state) {
            Some(s) => s,
            None => {
                states.push(rn.state.clone());
                states.len() - 1
            }
        };
        node_index.insert(rn.id.clone(), nodes.len());
        nodes.push(Node {
            name: rn.id.clone(),
            state,
        });
    }
    if nodes.is_empty() {
        errs.push("network.nodes", "at least one node is required");
    }

    // Lines.
    let mut lines: Vec<Line> = Vec::new();
    for (i, rl) in raw.network.lines.iter().enumerate() {
        let path = format!("network.lines[{}]", i);
        let from = node_index.get(&rl.from).copied();
        let to = node_index.get(&rl.to).copied();
        if from.is_none() {
            errs.push(&path, format!("line '{}' references missing node '{}'", rl.id, rl.from));
        }
        if to.is_none() {
            errs.push(&path, format!("line '{}' references missing node '{}'", rl.id, rl.to));
        }
        errs.check(rl.reactance > 0.0, &path, "reactance must be > 0");
        errs.check(rl.capacity > 0.0, &path, "capacity must be > 0");
        if let (Some(from), Some(to)) = (from, to) {
            errs.check(from != to, &path, format!("line '{}' joins a node to itself", rl.id));
            lines.push(Line {
                name: rl.id.clone(),
                from,
                to,
                reactance: rl.reactance,
                capacity: rl.capacity,
            });
        }
    }

    let mut interface_limit = vec![0.0; nodes.len()];
    for (name, &lim) in &raw.network.interface_limits {
        match node_index.get(name) {
            Some(&n) => {
                if lim < 0.0 {
                    errs.push(
                        format!("network.interface_limits.{}", name),
                        "interface limit must be >= 0",
                    );
                }
                interface_limit[n] = lim;
            }
            None => errs.push(
                format!("network.interface_limits.{}", name),
                "references missing node",
            ),
        }
    }

    // Representative days: exactly one of repdays/series must be present at
    // this point (series instances are reduced by the clustering step first).
    let days = match (&raw.repdays, &raw.series) {
        (Some(rd), None) => {
            let path = "repdays";
            errs.check(!rd.weights.is_empty(), path, "at least one representative day");
            errs.check(rd.hours >= 1, path, "hours must be >= 1");
            let total: f64 = rd.weights.iter().sum();
            errs.check(
                (total - 1.0).abs() <= 1e-9,
                path,
                format!("rep-day weights sum != 1 (got {})", total),
            );
            for (e, &w) in rd.weights.iter().enumerate() {
                errs.check(w > 0.0, path, format!("weight of day {} must be > 0", e));
            }
            let labels = rd
                .hour_labels
                .clone()
                .unwrap_or_else(|| (0..rd.hours as u32).collect());
            errs.check(
                labels.len() == rd.hours,
                path,
                "hour_labels length must equal hours",
            );
            RepDaySet {
                weights: rd.weights.clone(),
                hours: rd.hours,
                hour_labels: labels,
            }
        }
        (None, Some(_)) => {
            errs.push(
                "series",
                "raw series present: reduce to representative days with the cluster command first",
            );
            return Err(ValidationErrors(errs.0));
        }
        (Some(_), Some(_)) => {
            errs.push("repdays", "exactly one of repdays/series may be present");
            return Err(ValidationErrors(errs.0));
        }
        (None, None) => {
            errs.push("repdays", "one of repdays/series is required");
            return Err(ValidationErrors(errs.0));
        }
    };
    let (num_e, num_t) = (days.num_days(), days.hours);

    // Policy (needed before generators for the proration horizon).
    let strategic_state = states.iter().position(|s| s == &raw.policy.strategic_state);
    if strategic_state.is_none() {
        errs.push(
            "policy.strategic_state",
            format!("unknown state '{}'", raw.policy.strategic_state),
        );
    }
    errs.check(
        raw.policy.eta > 0.0 && raw.policy.eta <= 0.5,
        "policy.eta",
        "eta must lie in (0, 0.5]",
    );
    errs.check(raw.policy.epsilon > 0.0, "policy.epsilon", "epsilon must be > 0");
    errs.check(
        raw.policy.horizon_years >= 1,
        "policy.horizon_years",
        "horizon must be >= 1 year",
    );
    errs.check(
        raw.policy.discount_rate >= 0.0,
        "policy.discount_rate",
        "discount rate must be >= 0",
    );
    let mut rps = vec![0.0; states.len()];
    for (name, &k) in &raw.policy.rps {
        match states.iter().position(|s| s == name) {
            Some(s) => {
                errs.check(
                    (0.0..=1.0).contains(&k),
                    format!("policy.rps.{}", name).as_str(),
                    "RPS fraction must lie in [0, 1]",
                );
                rps[s] = k;
            }
            None => errs.push(format!("policy.rps.{}", name), "unknown state"),
        }
    }
    let mut budget = vec![f64::INFINITY; states.len()];
    for (name, &b) in &raw.policy.budget {
        match states.iter().position(|s| s == name) {
            Some(s) => {
                errs.check(
                    b >= 0.0,
                    format!("policy.budget.{}", name).as_str(),
                    "budget must be >= 0",
                );
                budget[s] = b;
            }
            None => errs.push(format!("policy.budget.{}", name), "unknown state"),
        }
    }
    let peak: Vec<bool> = days
        .hour_labels
        .iter()
        .map(|h| raw.policy.peak_hours.contains(h))
        .collect();
    for ph in &raw.policy.peak_hours {
        errs.check(
            days.hour_labels.contains(ph),
            "policy.peak_hours",
            format!("peak hour {} is not one of the modeled hours", ph),
        );
    }

    // Generators.
    let mut gens: Vec<Generator> = Vec::new();
    let mut gen_index: BTreeMap<String, GenId> = BTreeMap::new();
    for (i, rg) in raw.generators.iter().enumerate() {
        let path = format!("generators[{}]", i);
        if gen_index.contains_key(&rg.id) {
            errs.push(&path, format!("duplicate generator id '{}'", rg.id));
            continue;
        }
        let node = match node_index.get(&rg.node) {
            Some(&n) => n,
            None => {
                errs.push(&path, format!("generator '{}' references missing node '{}'", rg.id, rg.node));
                continue;
            }
        };
        let kind = match rg.kind.as_str() {
            "existing" => GenKind::Existing,
            "candidate" => GenKind::Candidate,
            other => {
                errs.push(&path, format!("unknown kind '{}'", other));
                continue;
            }
        };
        let tech = match rg.tech.as_str() {
            "renewable" => Tech::Renewable,
            "controllable" => Tech::Controllable,
            other => {
                errs.push(&path, format!("unknown tech '{}'", other));
                continue;
            }
        };
        errs.check(rg.cost_energy >= 0.0, &path, "cost_energy must be >= 0");
        match kind {
            GenKind::Existing => {
                errs.check(rg.g_max >= 0.0, &path, "g_max must be >= 0");
                errs.check(rg.g_min <= rg.g_max, &path, "g_min must be <= g_max");
                errs.check(rg.g_min >= 0.0, &path, "g_min must be >= 0");
            }
            GenKind::Candidate => {
                errs.check(rg.cost_invest >= 0.0, &path, "cost_invest must be >= 0");
                errs.check(rg.max_build > 0.0, &path, "candidate needs max_build > 0");
            }
        }
        match tech {
            Tech::Renewable => {
                errs.check(rg.error_stdev >= 0.0, &path, "error_stdev must be >= 0");
                errs.check(
                    rg.ramp_up == 0.0 && rg.ramp_down == 0.0,
                    &path,
                    "renewable units carry no ramp limits",
                );
                match &rg.forecast {
                    Some(f) => {
                        let shape_ok = f.len() == num_e && f.iter().all(|d| d.len() == num_t);
                        errs.check(
                            shape_ok,
                            &path,
                            format!("forecast must be [{}][{}]", num_e, num_t),
                        );
                        if shape_ok {
                            for row in f {
                                for &r in row {
                                    errs.check(
                                        (0.0..=1.0).contains(&r),
                                        &path,
                                        "forecast factors must lie in [0, 1]",
                                    );
                                }
                            }
                        }
                    }
                    None => errs.push(&path, "renewable unit needs a forecast"),
                }
            }
            Tech::Controllable => {
                errs.check(
                    rg.error_stdev == 0.0 && rg.error_mean == 0.0,
                    &path,
                    "controllable units carry no forecast-error fields",
                );
                errs.check(rg.ramp_down <= 0.0, &path, "ramp_down must be <= 0");
                errs.check(rg.ramp_up >= 0.0, &path, "ramp_up must be >= 0");
                errs.check(
                    (0.0..=1.0).contains(&rg.min_output_factor),
                    &path,
                    "min_output_factor must lie in [0, 1]",
                );
            }
        }
        let daily_capital = if kind == GenKind::Candidate && raw.policy.horizon_years >= 1 {
            finance::prorate_capital(
                rg.cost_invest,
                raw.policy.horizon_years,
                raw.policy.discount_rate.max(0.0),
            )
        } else {
            0.0
        };
        gen_index.insert(rg.id.clone(), gens.len());
        gens.push(Generator {
            name: rg.id.clone(),
            node,
            state: nodes[node].state,
            kind,
            tech,
            fuel: rg.fuel.clone(),
            g_min: rg.g_min,
            g_max: rg.g_max,
            max_build: rg.max_build,
            ramp_down: rg.ramp_down,
            ramp_up: rg.ramp_up,
            min_output_factor: rg.min_output_factor,
            cost_energy: rg.cost_energy,
            cost_invest: rg.cost_invest,
            daily_capital,
            forecast: rg.forecast.clone().unwrap_or_default(),
            error_mean: rg.error_mean,
            error_stdev: rg.error_stdev,
        });
    }
    if let Some(s) = strategic_state {
        for (i, g) in gens.iter().enumerate() {
            if g.is_candidate() && g.state != s {
                errs.push(
                    format!("generators[{}]", i),
                    "candidate units outside the strategic state enter as exogenous existing capacity",
                );
            }
        }
    }

    // Demand matrices.
    let slope = raw.demand.slope;
    errs.check(slope > 0.0, "demand.slope", "slope N must be > 0");
    let mut inflexible = vec![vec![vec![0.0; num_t]; num_e]; nodes.len()];
    match &raw.demand.inflexible {
        Some(map) => {
            for (name, series) in map {
                match node_index.get(name) {
                    Some(&n) => {
                        let path = format!("demand.inflexible.{}", name);
                        let shape_ok =
                            series.len() == num_e && series.iter().all(|d| d.len() == num_t);
                        errs.check(shape_ok, &path, format!("must be [{}][{}]", num_e, num_t));
                        if shape_ok {
                            for (e, day) in series.iter().enumerate() {
                                for (t, &v) in day.iter().enumerate() {
                                    errs.check(v >= 0.0, &path, "demand must be >= 0");
                                    inflexible[n][e][t] = v;
                                }
                            }
                        }
                    }
                    None => errs.push(format!("demand.inflexible.{}", name), "unknown node"),
                }
            }
        }
        None => errs.push("demand.inflexible", "inflexible demand is required"),
    }
    let mut intercept = vec![vec![vec![0.0; num_t]; num_e]; nodes.len()];
    for n in 0..nodes.len() {
        for e in 0..num_e {
            for t in 0..num_t {
                intercept[n][e][t] =
                    raw.demand.m_scale * inflexible[n][e][t] + raw.demand.m_offset;
            }
        }
    }
    if let Some(map) = &raw.demand.m_values {
        for (name, series) in map {
            match node_index.get(name) {
                Some(&n) => {
                    let path = format!("demand.m_values.{}", name);
                    let shape_ok = series.len() == num_e && series.iter().all(|d| d.len() == num_t);
                    errs.check(shape_ok, &path, format!("must be [{}][{}]", num_e, num_t));
                    if shape_ok {
                        for (e, day) in series.iter().enumerate() {
                            for (t, &v) in day.iter().enumerate() {
                                intercept[n][e][t] = v;
                            }
                        }
                    }
                }
                None => errs.push(format!("demand.m_values.{}", name), "unknown node"),
            }
        }
    }
    let mut dr_offset = vec![vec![0.0; num_t]; nodes.len()];
    if let Some(map) = &raw.demand.dr_offset {
        for (name, series) in map {
            match node_index.get(name) {
                Some(&n) => {
                    let path = format!("demand.dr_offset.{}", name);
                    errs.check(series.len() == num_t, &path, format!("must have {} hours", num_t));
                    if series.len() == num_t {
                        for (t, &v) in series.iter().enumerate() {
                            errs.check(v >= 0.0, &path, "offset must be >= 0");
                            dr_offset[n][t] = v;
                        }
                    }
                }
                None => errs.push(format!("demand.dr_offset.{}", name), "unknown node"),
            }
        }
    }
    // Strategic intercepts must be positive or the demand model is empty.
    if let Some(s) = strategic_state {
        for (n, node) in nodes.iter().enumerate() {
            if node.state != s {
                continue;
            }
            for e in 0..num_e {
                for t in 0..num_t {
                    errs.check(
                        intercept[n][e][t] > 0.0,
                        format!("demand.m.{}", node.name).as_str(),
                        "marginal utility intercept M must be > 0 on strategic nodes",
                    );
                }
            }
        }
    }

    // Participation factors over the strategic state's controllable units.
    let mut alpha = vec![vec![0.0; num_t]; gens.len()];
    if let Some(s) = strategic_state {
        let ctrl: Vec<GenId> = (0..gens.len())
            .filter(|&g| gens[g].state == s && gens[g].is_controllable())
            .collect();
        let has_res = gens.iter().any(|g| g.state == s && g.is_renewable());
        if has_res && ctrl.is_empty() {
            errs.push(
                "generators",
                "strategic state has renewables but no controllable balancer",
            );
        }
        match &raw.policy.participation {
            Some(map) => {
                for (name, factors) in map {
                    match gen_index.get(name) {
                        Some(&g) => {
                            let path = format!("policy.participation.{}", name);
                            errs.check(
                                ctrl.contains(&g),
                                &path,
                                "participation only applies to strategic controllable units",
                            );
                            errs.check(factors.len() == num_t, &path, format!("must have {} hours", num_t));
                            if factors.len() == num_t {
                                for (t, &a) in factors.iter().enumerate() {
                                    errs.check(a >= 0.0, &path, "alpha must be >= 0");
                                    alpha[g][t] = a;
                                }
                            }
                        }
                        None => errs.push(format!("policy.participation.{}", name), "unknown generator"),
                    }
                }
                for t in 0..num_t {
                    let total: f64 = ctrl.iter().map(|&g| alpha[g][t]).sum();
                    errs.check(
                        ctrl.is_empty() || (total - 1.0).abs() <= 1e-9,
                        "policy.participation",
                        format!("alpha must sum to 1 per hour (hour {}: {})", t, total),
                    );
                }
            }
            None => {
                if !ctrl.is_empty() {
                    let a = 1.0 / ctrl.len() as f64;
                    for &g in &ctrl {
                        for t in 0..num_t {
                            alpha[g][t] = a;
                        }
                    }
                }
            }
        }
    }

    if !errs.0.is_empty() {
        return Err(ValidationErrors(errs.0));
    }

    // Index maps.
    let mut node_gens = vec![Vec::new(); nodes.len()];
    let mut state_gens = vec![Vec::new(); states.len()];
    for (g, gen) in gens.iter().enumerate() {
        node_gens[gen.node].push(g);
        state_gens[gen.state].push(g);
    }
    let mut state_nodes = vec![Vec::new(); states.len()];
    for (n, node) in nodes.iter().enumerate() {
        state_nodes[node.state].push(n);
    }

    Ok(Instance {
        states,
        nodes,
        lines,
        interface_limit,
        gens,
        demand: Demand {
            slope,
            inflexible,
            intercept,
            dr_offset,
        },
        days,
        policy: Policy {
            strategic_state: strategic_state.unwrap(),
            rps,
            budget,
            peak,
            eta: raw.policy.eta,
            epsilon: raw.policy.epsilon,
            horizon_years: raw.policy.horizon_years,
            discount_rate: raw.policy.discount_rate,
        },
        alpha,
        node_gens,
        state_nodes,
        state_gens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::raw::*;

    fn two_node_raw() -> RawInstance {
        RawInstance {
            version: 1,
            network: RawNetwork {
                nodes: vec![
                    RawNode { id: "n1".into(), state: "A".into() },
                    RawNode { id: "n2".into(), state: "B".into() },
                ],
                lines: vec![RawLine {
                    id: "l1".into(),
                    from: "n1".into(),
                    to: "n2".into(),
                    reactance: 0.1,
                    capacity: 50.0,
                }],
                interface_limits: [("n2".to_string(), 100.0)].into_iter().collect(),
            },
            generators: vec![
                RawGenerator {
                    id: "g1".into(),
                    node: "n1".into(),
                    kind: "existing".into(),
                    tech: "controllable".into(),
                    fuel: "gas".into(),
                    g_min: 0.0,
                    g_max: 100.0,
                    max_build: 0.0,
                    ramp_down: -100.0,
                    ramp_up: 100.0,
                    min_output_factor: 0.0,
                    cost_energy: 10.0,
                    cost_invest: 0.0,
                    forecast: None,
                    error_mean: 0.0,
                    error_stdev: 0.0,
                },
                RawGenerator {
                    id: "g2".into(),
                    node: "n2".into(),
                    kind: "existing".into(),
                    tech: "controllable".into(),
                    fuel: "gas".into(),
                    g_min: 0.0,
                    g_max: 100.0,
                    max_build: 0.0,
                    ramp_down: -100.0,
                    ramp_up: 100.0,
                    min_output_factor: 0.0,
                    cost_energy: 30.0,
                    cost_invest: 0.0,
                    forecast: None,
                    error_mean: 0.0,
                    error_stdev: 0.0,
                },
            ],
            demand: RawDemand {
                slope: 0.25,
                m_scale: 0.25,
                m_offset: 20.0,
                inflexible: Some(
                    [
                        ("n1".to_string(), vec![vec![0.0, 0.0]]),
                        ("n2".to_string(), vec![vec![100.0, 120.0]]),
                    ]
                    .into_iter()
                    .collect(),
                ),
                m_values: None,
                dr_offset: None,
            },
            repdays: Some(RawRepDays {
                weights: vec![1.0],
                hours: 2,
                hour_labels: Some(vec![10, 14]),
            }),
            series: None,
            policy: RawPolicy {
                strategic_state: "B".into(),
                rps: [("B".to_string(), 0.0)].into_iter().collect(),
                budget: [("B".to_string(), 1e6)].into_iter().collect(),
                peak_hours: vec![14],
                eta: 0.03,
                epsilon: 1e-3,
                horizon_years: 10,
                discount_rate: 0.05,
                participation: None,
            },
        }
    }

    #[test]
    fn well_formed_instance_passes() {
        let inst = validate_instance(&two_node_raw()).unwrap();
        assert_eq!(inst.nodes.len(), 2);
        assert_eq!(inst.strategic_nodes(), &[1]);
        assert_eq!(inst.owned_gens(), &[1]);
        assert_eq!(inst.alpha[1], vec![1.0, 1.0]);
        assert!(inst.policy.peak == vec![false, true]);
        // M = 0.25 * 100 + 20 = 45 in the first hour of node 2.
        assert_eq!(inst.demand.intercept[1][0][0], 45.0);
    }

    #[test]
    fn bad_weights_are_reported() {
        let mut raw = two_node_raw();
        raw.repdays.as_mut().unwrap().weights = vec![0.9];
        let err = validate_instance(&raw).unwrap_err();
        assert!(err.0.iter().any(|e| e.message.contains("weights sum != 1")));
    }

    #[test]
    fn missing_node_reference_names_the_line() {
        let mut raw = two_node_raw();
        raw.network.lines[0].to = "nope".into();
        let err = validate_instance(&raw).unwrap_err();
        assert!(err
            .0
            .iter()
            .any(|e| e.message.contains("'l1'") && e.message.contains("missing node")));
    }

    #[test]
    fn all_violations_are_collected() {
        let mut raw = two_node_raw();
        raw.network.lines[0].reactance = -1.0;
        raw.demand.slope = 0.0;
        raw.policy.eta = 0.9;
        let err = validate_instance(&raw).unwrap_err();
        assert!(err.0.len() >= 3, "{}", ValidationErrors(err.0));
    }
}
