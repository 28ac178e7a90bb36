//! Decision blocks of the three levels.

use super::instance::Instance;
use super::{GenId, NodeId};
use serde::{Deserialize, Serialize};

/// Regulator block: TOU tariffs per strategic node plus the two incentives.
/// Tariffs are stored in the order of [`Instance::strategic_nodes`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegulatorDecision {
    pub pi_on: Vec<f64>,
    pub pi_off: Vec<f64>,
    /// Energy incentive, $/MWh.
    pub tau_e: f64,
    /// Capacity incentive as accepted at the interface, $/kW-day.
    pub tau_c: f64,
}

impl RegulatorDecision {
    pub fn zeros(inst: &Instance) -> Self {
        let k = inst.strategic_nodes().len();
        RegulatorDecision {
            pi_on: vec![0.0; k],
            pi_off: vec![0.0; k],
            tau_e: 0.0,
            tau_c: 0.0,
        }
    }

    /// Capacity incentive in internal units, $/MW-day.
    pub fn tau_c_mw(&self) -> f64 {
        self.tau_c * 1000.0
    }

    /// Tariff of strategic node `n` at hour `t`; `slot` is the node's
    /// position within the strategic node list.
    pub fn pi(&self, inst: &Instance, slot: usize, t: usize) -> f64 {
        if inst.policy.peak[t] {
            self.pi_on[slot]
        } else {
            self.pi_off[slot]
        }
    }

    /// Unweighted mean over hours per node, then demand-weighted over nodes.
    pub fn average_tariff(&self, inst: &Instance) -> f64 {
        let num_t = inst.num_t();
        let mut weighted = 0.0;
        let mut total_w = 0.0;
        for (slot, &n) in inst.strategic_nodes().iter().enumerate() {
            let mean_pi: f64 =
                (0..num_t).map(|t| self.pi(inst, slot, t)).sum::<f64>() / num_t as f64;
            let w: f64 = (0..inst.num_e())
                .map(|e| inst.weight(e) * inst.demand.inflexible[n][e].iter().sum::<f64>())
                .sum();
            weighted += mean_pi * w;
            total_w += w;
        }
        if total_w > 0.0 {
            weighted / total_w
        } else {
            let k = self.pi_on.len().max(1) as f64;
            (self.pi_on.iter().sum::<f64>() + self.pi_off.iter().sum::<f64>()) / (2.0 * k)
        }
    }

    pub fn non_negative(&self) -> bool {
        self.tau_e >= 0.0
            && self.tau_c >= 0.0
            && self.pi_on.iter().chain(self.pi_off.iter()).all(|&p| p >= -1e-12)
    }
}

/// Utility block: build decisions, market offers, interface flows and the
/// flexible demand it serves. Offers are stored densely over all generators
/// with zeros for units the utility does not control.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtilityDecision {
    /// Built capacity per candidate, aligned with [`Instance::candidates`].
    pub g_max: Vec<f64>,
    /// Offers of strategic controllable units, [gen][day][hour].
    pub offers: Vec<Vec<Vec<f64>>>,
    /// Interface flow per strategic node slot, [slot][day][hour].
    pub interface: Vec<Vec<Vec<f64>>>,
    /// Flexible demand per strategic node slot, [slot][day][hour].
    pub demand: Vec<Vec<Vec<f64>>>,
}

impl UtilityDecision {
    pub fn zeros(inst: &Instance) -> Self {
        let (num_e, num_t) = (inst.num_e(), inst.num_t());
        let slots = inst.strategic_nodes().len();
        UtilityDecision {
            g_max: vec![0.0; inst.candidates().len()],
            offers: vec![vec![vec![0.0; num_t]; num_e]; inst.gens.len()],
            interface: vec![vec![vec![0.0; num_t]; num_e]; slots],
            demand: vec![vec![vec![0.0; num_t]; num_e]; slots],
        }
    }

    /// Built capacity of candidate generator `g`, zero for existing units.
    pub fn built(&self, inst: &Instance, g: GenId) -> f64 {
        inst.candidates()
            .iter()
            .position(|&c| c == g)
            .map_or(0.0, |k| self.g_max[k])
    }

    /// Offer ceiling a unit presents to the market: variable offers for
    /// strategic controllables, forecast-scaled capacity for renewables,
    /// full capacity for everything non-strategic.
    pub fn market_offer(&self, inst: &Instance, g: GenId, day: usize, hour: usize) -> f64 {
        let gen = &inst.gens[g];
        if !inst.is_owned(g) {
            inst.nonstrategic_offer(g, day, hour)
        } else if gen.is_renewable() {
            let cap = if gen.is_candidate() {
                self.built(inst, g)
            } else {
                gen.g_max
            };
            gen.rho(day, hour) * cap
        } else {
            self.offers[g][day][hour]
        }
    }
}

/// Wholesale market primal-dual pair for every representative day.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarketOutcome {
    /// Dispatch [gen][day][hour], MW.
    pub dispatch: Vec<Vec<Vec<f64>>>,
    /// Line flows [line][day][hour], MW.
    pub flows: Vec<Vec<Vec<f64>>>,
    /// Voltage angles [node][day][hour], rad.
    pub angles: Vec<Vec<Vec<f64>>>,
    /// Locational marginal prices [node][day][hour], $/MWh.
    pub lmp: Vec<Vec<Vec<f64>>>,
    /// Flow-definition duals [line][day][hour].
    pub xi: Vec<Vec<Vec<f64>>>,
    /// Dispatch bound duals [gen][day][hour], >= 0.
    pub gamma_lo: Vec<Vec<Vec<f64>>>,
    pub gamma_hi: Vec<Vec<Vec<f64>>>,
    /// Flow bound duals [line][day][hour], >= 0.
    pub delta_lo: Vec<Vec<Vec<f64>>>,
    pub delta_hi: Vec<Vec<Vec<f64>>>,
    /// Welfare objective and its dual per day.
    pub obj_primal: Vec<f64>,
    pub obj_dual: Vec<f64>,
}

impl MarketOutcome {
    pub fn zeros(inst: &Instance) -> Self {
        let (num_e, num_t) = (inst.num_e(), inst.num_t());
        let per = |k: usize| vec![vec![vec![0.0; num_t]; num_e]; k];
        MarketOutcome {
            dispatch: per(inst.gens.len()),
            flows: per(inst.lines.len()),
            angles: per(inst.nodes.len()),
            lmp: per(inst.nodes.len()),
            xi: per(inst.lines.len()),
            gamma_lo: per(inst.gens.len()),
            gamma_hi: per(inst.gens.len()),
            delta_lo: per(inst.lines.len()),
            delta_hi: per(inst.lines.len()),
            obj_primal: vec![0.0; num_e],
            obj_dual: vec![0.0; num_e],
        }
    }

    /// Largest per-day duality residual |O^W_e - O^DW_e|.
    pub fn duality_residual(&self) -> f64 {
        self.obj_primal
            .iter()
            .zip(&self.obj_dual)
            .map(|(p, d)| (p - d).abs())
            .fold(0.0, f64::max)
    }
}

/// Expected daily profit of the utility: retail revenue, incentives, market
/// settlement of its own units and demand, investment and running costs.
pub fn utility_profit(
    inst: &Instance,
    reg: &RegulatorDecision,
    util: &UtilityDecision,
    market: &MarketOutcome,
) -> f64 {
    let mut total = 0.0;
    let candidates = inst.candidates();
    for e in 0..inst.num_e() {
        let w = inst.weight(e);
        let mut day = 0.0;
        for (slot, &n) in inst.strategic_nodes().iter().enumerate() {
            for t in 0..inst.num_t() {
                let d = util.demand[slot][e][t];
                day += reg.pi(inst, slot, t) * d - market.lmp[n][e][t] * d;
            }
        }
        for &g in inst.owned_gens() {
            let gen = &inst.gens[g];
            for t in 0..inst.num_t() {
                let gv = market.dispatch[g][e][t];
                day += market.lmp[gen.node][e][t] * gv - gen.cost_energy * gv;
                if gen.is_renewable() {
                    day += reg.tau_e * gv;
                }
            }
        }
        for (k, &g) in candidates.iter().enumerate() {
            let gen = &inst.gens[g];
            day -= gen.daily_capital * util.g_max[k];
            if gen.is_renewable() {
                day += reg.tau_c_mw() * util.g_max[k];
            }
        }
        total += w * day;
    }
    total
}

/// Expected regulator objective: consumer payments on inflexible demand plus
/// incentive outlays.
pub fn regulator_objective(
    inst: &Instance,
    reg: &RegulatorDecision,
    util: &UtilityDecision,
    market: &MarketOutcome,
) -> f64 {
    let mut total = 0.0;
    for e in 0..inst.num_e() {
        let w = inst.weight(e);
        let mut day = 0.0;
        for (slot, &n) in inst.strategic_nodes().iter().enumerate() {
            for t in 0..inst.num_t() {
                day += inst.demand.inflexible[n][e][t] * reg.pi(inst, slot, t);
            }
        }
        for &g in inst.owned_gens() {
            if inst.gens[g].is_renewable() {
                for t in 0..inst.num_t() {
                    day += reg.tau_e * market.dispatch[g][e][t];
                }
            }
        }
        total += w * day;
    }
    for (k, &g) in inst.candidates().iter().enumerate() {
        if inst.gens[g].is_renewable() {
            total += reg.tau_c_mw() * util.g_max[k];
        }
    }
    total
}

/// Renewable energy delivered by the strategic state's units on one day.
pub fn renewable_energy(inst: &Instance, market: &MarketOutcome, day: usize) -> f64 {
    inst.owned_renewables()
        .iter()
        .map(|&g| market.dispatch[g][day].iter().sum::<f64>())
        .sum()
}

/// Incentive outlay on one day: energy payments plus daily capacity payments.
pub fn incentive_outlay(
    inst: &Instance,
    reg: &RegulatorDecision,
    util: &UtilityDecision,
    market: &MarketOutcome,
    day: usize,
) -> f64 {
    let mut total = 0.0;
    for &g in &inst.owned_renewables() {
        total += reg.tau_e * market.dispatch[g][day].iter().sum::<f64>();
    }
    for (k, &g) in inst.candidates().iter().enumerate() {
        if inst.gens[g].is_renewable() {
            total += reg.tau_c_mw() * util.g_max[k];
        }
    }
    total
}

/// Helper to look up the strategic slot of a node, if any.
pub fn strategic_slot(inst: &Instance, n: NodeId) -> Option<usize> {
    inst.strategic_nodes().iter().position(|&m| m == n)
}
