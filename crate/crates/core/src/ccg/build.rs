//! Builders for the subproblem and master bilinear programs.
//!
//! Both share one "live" block: the utility's investment/offer/demand
//! variables, the market primal (dispatch, flows, angles), the market dual
//! (prices and bound duals) and the per-day strong-duality row that pins the
//! primal-dual pair to a true market equilibrium. The master adds the
//! regulator's variables, its constraints, and per past iteration one
//! auxiliary market copy replaying that iteration's offers under the live
//! tariff, tied together by a profit cut.

use super::{CcgConfig, CcgIterate};
use crate::bilinear::{BilinearError, BilinearProgram, Block};
use crate::lp::{LpProblem, RowId, RowSense, Sense, VarId};
use crate::model::{
    demand_from_tariff, strategic_slot, Instance, MarketOutcome, RegulatorDecision,
    UtilityDecision,
};
use crate::stochastic::{deterministic_generation_constraints, ChanceConstraint};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("tariff outside the demand model support: {0}")]
    TariffOutsideSupport(#[from] crate::model::TariffError),
    #[error("chance constraints unavailable: {0}")]
    Chance(String),
    #[error(transparent)]
    Bilinear(#[from] BilinearError),
}

/// How a unit's market offer ceiling enters the model.
#[derive(Debug, Clone, Copy)]
pub enum CapRef {
    /// Fixed offer (non-strategic units, strategic existing renewables).
    Const(f64),
    /// Offer decision variable (strategic controllables).
    Var(VarId),
    /// rho * g_max of a candidate renewable.
    Scaled(VarId, f64),
}

/// Variable handles of one market copy (live or auxiliary).
#[derive(Debug, Clone)]
pub struct MarketBlock {
    pub g: Vec<Vec<Vec<VarId>>>,
    pub f: Vec<Vec<Vec<VarId>>>,
    pub theta: Vec<Vec<Vec<VarId>>>,
    pub lam: Vec<Vec<Vec<VarId>>>,
    pub xi: Vec<Vec<Vec<VarId>>>,
    pub glo: Vec<Vec<Vec<VarId>>>,
    pub ghi: Vec<Vec<Vec<VarId>>>,
    pub dlo: Vec<Vec<Vec<VarId>>>,
    pub dhi: Vec<Vec<Vec<VarId>>>,
    /// Strong-duality row per day.
    pub duality_rows: Vec<RowId>,
}

#[derive(Debug, Clone)]
pub struct Layout {
    /// Regulator variables (master only).
    pub tau_c: Option<VarId>,
    pub tau_e: Option<VarId>,
    pub pi_on: Vec<VarId>,
    pub pi_off: Vec<VarId>,
    /// Fixed tariffs (subproblem only).
    pub fixed_reg: Option<RegulatorDecision>,
    /// ML variables.
    pub gmax: Vec<VarId>,
    pub offer: Vec<Option<Vec<Vec<VarId>>>>,
    pub demand: Vec<Vec<Vec<VarId>>>,
    pub pdown: Vec<Vec<Vec<VarId>>>,
    /// Live market copy.
    pub live: MarketBlock,
    /// Auxiliary market copies, one per cut.
    pub aux: Vec<MarketBlock>,
    /// Cut rows as (history index, day, row).
    pub cut_rows: Vec<(usize, usize, RowId)>,
    pub budget_rows: Vec<RowId>,
    pub rps_rows: Vec<RowId>,
    pub revenue_row: Option<RowId>,
    pub chance_rows: Vec<RowId>,
}

/// Dual-variable boxes derived from cost magnitudes; the LMP of a lossless
/// DC network lies within the cost range absent pathological congestion, so
/// a small multiple is a safe hard bound for the bilinear machinery.
pub struct DualBoxes {
    pub lam: f64,
    pub xi: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl DualBoxes {
    pub fn for_instance(inst: &Instance, scale: f64) -> Self {
        let c = inst.max_cost().max(1.0);
        DualBoxes {
            lam: scale * c,
            xi: 3.0 * scale * c,
            gamma: 2.0 * scale * c,
            delta: 2.0 * scale * c,
        }
    }
}

pub struct Builder<'a> {
    pub inst: &'a Instance,
    pub cfg: &'a CcgConfig,
    pub boxes: DualBoxes,
    pub chance: Vec<ChanceConstraint>,
    /// Tangent points for the stdev linearization, one row per (constraint,
    /// tangent slot); the slot count is fixed so problem sizes do not change
    /// across refreshes.
    pub tangents: Vec<Vec<f64>>,
}

impl<'a> Builder<'a> {
    pub fn new(
        inst: &'a Instance,
        cfg: &'a CcgConfig,
        z: f64,
        tangents: Vec<Vec<f64>>,
    ) -> Result<Self, BuildError> {
        let chance = deterministic_generation_constraints(inst, z).map_err(BuildError::Chance)?;
        Ok(Builder {
            inst,
            cfg,
            boxes: DualBoxes::for_instance(inst, cfg.dual_box_scale),
            chance,
            tangents,
        })
    }

    fn market_cap(&self, layout: &Layout, i: usize, e: usize, t: usize) -> CapRef {
        let inst = self.inst;
        let gen = &inst.gens[i];
        if !inst.is_owned(i) {
            CapRef::Const(inst.nonstrategic_offer(i, e, t))
        } else if gen.is_renewable() {
            if gen.is_candidate() {
                let slot = inst
                    .candidates()
                    .iter()
                    .position(|&c| c == i)
                    .expect("candidate slot");
                CapRef::Scaled(layout.gmax[slot], gen.rho(e, t))
            } else {
                CapRef::Const(gen.rho(e, t) * gen.g_max)
            }
        } else {
            CapRef::Var(layout.offer[i].as_ref().expect("ctrl offer")[e][t])
        }
    }

    /// Emits one full market copy: variables, primal rows, dual rows and the
    /// per-day strong-duality row (with offer-times-dual products).
    #[allow(clippy::too_many_arguments)]
    fn emit_market_block(
        &self,
        bp: &mut BilinearProgram,
        layout: &Layout,
        tag: &str,
        caps: &dyn Fn(usize, usize, usize) -> CapRef,
        demand_of: &dyn Fn(usize, usize, usize) -> DemandRef,
        refs: &[usize],
    ) -> Result<MarketBlock, BuildError> {
        let inst = self.inst;
        let (num_e, num_t) = (inst.num_e(), inst.num_t());
        let bx = &self.boxes;
        let grid = |bp: &mut BilinearProgram,
                    name: &str,
                    k: usize,
                    lo: f64,
                    hi: f64,
                    block: Block|
         -> Vec<Vec<Vec<VarId>>> {
            (0..k)
                .map(|i| {
                    (0..num_e)
                        .map(|e| {
                            (0..num_t)
                                .map(|t| {
                                    let id = bp.lp.add_var(
                                        format!("{tag}{name}_{i}_e{e}t{t}"),
                                        lo,
                                        hi,
                                        0.0,
                                    );
                                    bp.blocks.push(block);
                                    id
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        };

        let ng = inst.gens.len();
        let nl = inst.lines.len();
        let nn = inst.nodes.len();
        let mut g = grid(bp, "g", ng, 0.0, f64::INFINITY, Block::B);
        let f = grid(bp, "f", nl, 0.0, 0.0, Block::B);
        let theta = grid(bp, "th", nn, 0.0, 0.0, Block::B);
        let lam = grid(bp, "lam", nn, -bx.lam, bx.lam, Block::A);
        let xi = grid(bp, "xi", nl, -bx.xi, bx.xi, Block::A);
        let glo = grid(bp, "glo", ng, 0.0, bx.gamma, Block::A);
        let ghi = grid(bp, "ghi", ng, 0.0, bx.gamma, Block::A);
        let dlo = grid(bp, "dlo", nl, 0.0, bx.delta, Block::A);
        let dhi = grid(bp, "dhi", nl, 0.0, bx.delta, Block::A);

        // Bounds: flows and angles.
        for (l, line) in inst.lines.iter().enumerate() {
            for e in 0..num_e {
                for t in 0..num_t {
                    bp.lp.vars[f[l][e][t]].lower = -line.capacity;
                    bp.lp.vars[f[l][e][t]].upper = line.capacity;
                }
            }
        }
        for n in 0..nn {
            let free = !refs.contains(&n);
            for e in 0..num_e {
                for t in 0..num_t {
                    if free {
                        bp.lp.vars[theta[n][e][t]].lower = f64::NEG_INFINITY;
                        bp.lp.vars[theta[n][e][t]].upper = f64::INFINITY;
                    }
                }
            }
        }
        // Dispatch ceilings: constants become bounds, variable caps rows.
        for i in 0..ng {
            for e in 0..num_e {
                for t in 0..num_t {
                    match caps(i, e, t) {
                        CapRef::Const(c) => bp.lp.vars[g[i][e][t]].upper = c.max(0.0),
                        CapRef::Var(v) => {
                            bp.lp.add_row(
                                format!("{tag}cap_{i}_e{e}t{t}"),
                                RowSense::Le,
                                0.0,
                                vec![(g[i][e][t], 1.0), (v, -1.0)],
                            );
                            bp.row_terms.push(Vec::new());
                        }
                        CapRef::Scaled(v, rho) => {
                            bp.lp.add_row(
                                format!("{tag}cap_{i}_e{e}t{t}"),
                                RowSense::Le,
                                0.0,
                                vec![(g[i][e][t], 1.0), (v, -rho)],
                            );
                            bp.row_terms.push(Vec::new());
                        }
                    }
                }
            }
        }
        // Keep sampling boxes finite for dispatch: cap by the largest
        // possible ceiling.
        for i in 0..ng {
            let gen = &inst.gens[i];
            let cap = if gen.is_candidate() { gen.max_build } else { gen.g_max };
            for e in 0..num_e {
                for t in 0..num_t {
                    if bp.lp.vars[g[i][e][t]].upper.is_infinite() {
                        bp.lp.vars[g[i][e][t]].upper = cap;
                    }
                }
            }
        }
        let g_fixed = g.clone();
        g = g_fixed;

        // Primal rows: flow definition and nodal balance.
        for e in 0..num_e {
            for t in 0..num_t {
                for (l, line) in inst.lines.iter().enumerate() {
                    let inv_x = 1.0 / line.reactance;
                    bp.lp.add_row(
                        format!("{tag}fd_{l}_e{e}t{t}"),
                        RowSense::Eq,
                        0.0,
                        vec![
                            (f[l][e][t], 1.0),
                            (theta[line.from][e][t], -inv_x),
                            (theta[line.to][e][t], inv_x),
                        ],
                    );
                    bp.row_terms.push(Vec::new());
                }
                for n in 0..nn {
                    let mut terms: Vec<(VarId, f64)> =
                        inst.node_gens[n].iter().map(|&i| (g[i][e][t], 1.0)).collect();
                    for (l, line) in inst.lines.iter().enumerate() {
                        if line.to == n {
                            terms.push((f[l][e][t], 1.0));
                        }
                        if line.from == n {
                            terms.push((f[l][e][t], -1.0));
                        }
                    }
                    let rhs = match demand_of(n, e, t) {
                        DemandRef::Const(d) => d,
                        DemandRef::Var(v) => {
                            terms.push((v, -1.0));
                            0.0
                        }
                    };
                    bp.lp.add_row(format!("{tag}bal_{n}_e{e}t{t}"), RowSense::Eq, rhs, terms);
                    bp.row_terms.push(Vec::new());
                }
                // Dual feasibility rows.
                for (i, gen) in inst.gens.iter().enumerate() {
                    bp.lp.add_row(
                        format!("{tag}dg_{i}_e{e}t{t}"),
                        RowSense::Eq,
                        -gen.cost_energy,
                        vec![
                            (glo[i][e][t], -1.0),
                            (ghi[i][e][t], 1.0),
                            (lam[gen.node][e][t], -1.0),
                        ],
                    );
                    bp.row_terms.push(Vec::new());
                }
                for (l, line) in inst.lines.iter().enumerate() {
                    bp.lp.add_row(
                        format!("{tag}df_{l}_e{e}t{t}"),
                        RowSense::Eq,
                        0.0,
                        vec![
                            (dlo[l][e][t], -1.0),
                            (dhi[l][e][t], 1.0),
                            (xi[l][e][t], 1.0),
                            (lam[line.to][e][t], -1.0),
                            (lam[line.from][e][t], 1.0),
                        ],
                    );
                    bp.row_terms.push(Vec::new());
                }
                for n in 0..nn {
                    let mut terms = Vec::new();
                    for (l, line) in inst.lines.iter().enumerate() {
                        let inv_x = 1.0 / line.reactance;
                        if line.from == n {
                            terms.push((xi[l][e][t], -inv_x));
                        }
                        if line.to == n {
                            terms.push((xi[l][e][t], inv_x));
                        }
                    }
                    if !terms.is_empty() {
                        bp.lp.add_row(
                            format!("{tag}dth_{n}_e{e}t{t}"),
                            RowSense::Eq,
                            0.0,
                            terms,
                        );
                        bp.row_terms.push(Vec::new());
                    }
                }
            }
        }

        // Strong duality per day: O^W_e - O^DW_e = 0, written as
        //   -sum C g - sum cap*ghi + sum D lam (+ d lam products)
        //   - sum F (dhi + dlo) = 0.
        let mut duality_rows = Vec::with_capacity(num_e);
        for e in 0..num_e {
            let mut terms: Vec<(VarId, f64)> = Vec::new();
            let mut products: Vec<(f64, VarId, VarId)> = Vec::new();
            let mut rhs = 0.0;
            for t in 0..num_t {
                for (i, gen) in inst.gens.iter().enumerate() {
                    if gen.cost_energy != 0.0 {
                        terms.push((g[i][e][t], -gen.cost_energy));
                    }
                    match caps(i, e, t) {
                        CapRef::Const(c) => {
                            if c != 0.0 {
                                terms.push((ghi[i][e][t], -c));
                            }
                        }
                        CapRef::Var(v) => products.push((-1.0, v, ghi[i][e][t])),
                        CapRef::Scaled(v, rho) => {
                            if rho != 0.0 {
                                products.push((-rho, v, ghi[i][e][t]));
                            }
                        }
                    }
                }
                for n in 0..nn {
                    match demand_of(n, e, t) {
                        DemandRef::Const(d) => {
                            if d != 0.0 {
                                terms.push((lam[n][e][t], d));
                            }
                        }
                        DemandRef::Var(v) => products.push((1.0, v, lam[n][e][t])),
                    }
                }
                for (l, line) in inst.lines.iter().enumerate() {
                    terms.push((dhi[l][e][t], -line.capacity));
                    terms.push((dlo[l][e][t], -line.capacity));
                }
                rhs += 0.0;
            }
            let row = bp.lp.add_row(format!("{tag}sd_e{e}"), RowSense::Eq, rhs, terms);
            bp.row_terms.push(Vec::new());
            for (coef, x, y) in products {
                bp.add_row_term(row, coef, x, y)?;
            }
            duality_rows.push(row);
        }
        let _ = layout;
        Ok(MarketBlock {
            g,
            f,
            theta,
            lam,
            xi,
            glo,
            ghi,
            dlo,
            dhi,
            duality_rows,
        })
    }

    /// Emits ML variables and rows shared by master and subproblem:
    /// offers, builds, interface flows, demand variables, the utility supply
    /// balance, ramp limits and linearized chance constraints.
    fn emit_ml(&self, bp: &mut BilinearProgram, layout: &mut Layout) {
        let inst = self.inst;
        let (num_e, num_t) = (inst.num_e(), inst.num_t());
        let candidates = inst.candidates();

        for (k, &i) in candidates.iter().enumerate() {
            let id = bp.lp.add_var(
                format!("gmax_{}", inst.gens[i].name),
                0.0,
                inst.gens[i].max_build,
                0.0,
            );
            bp.blocks.push(Block::B);
            layout.gmax.push(id);
            let _ = k;
        }
        layout.offer = vec![None; inst.gens.len()];
        for &i in &inst.owned_controllables() {
            let gen = &inst.gens[i];
            let hi = if gen.is_candidate() { gen.max_build } else { gen.g_max };
            let grid: Vec<Vec<VarId>> = (0..num_e)
                .map(|e| {
                    (0..num_t)
                        .map(|t| {
                            let id = bp.lp.add_var(
                                format!("offer_{}_e{}t{}", gen.name, e, t),
                                0.0,
                                hi,
                                0.0,
                            );
                            bp.blocks.push(Block::B);
                            id
                        })
                        .collect()
                })
                .collect();
            layout.offer[i] = Some(grid);
        }
        let slots = inst.strategic_nodes().len();
        for slot in 0..slots {
            let n = inst.strategic_nodes()[slot];
            let d_grid: Vec<Vec<VarId>> = (0..num_e)
                .map(|e| {
                    (0..num_t)
                        .map(|t| {
                            let id = bp.lp.add_var(
                                format!("d_{}_e{}t{}", inst.nodes[n].name, e, t),
                                0.0,
                                inst.demand_cap(n, e, t),
                                0.0,
                            );
                            bp.blocks.push(Block::B);
                            id
                        })
                        .collect()
                })
                .collect();
            layout.demand.push(d_grid);
            let p_grid: Vec<Vec<VarId>> = (0..num_e)
                .map(|e| {
                    (0..num_t)
                        .map(|t| {
                            let id = bp.lp.add_var(
                                format!("pdn_{}_e{}t{}", inst.nodes[n].name, e, t),
                                -inst.interface_limit[n],
                                inst.interface_limit[n],
                                0.0,
                            );
                            bp.blocks.push(Block::B);
                            id
                        })
                        .collect()
                })
                .collect();
            layout.pdown.push(p_grid);
        }

        // Utility supply balance per strategic node: own offers at the node
        // plus the interface flow equal the flexible demand.
        for slot in 0..slots {
            let n = inst.strategic_nodes()[slot];
            for e in 0..num_e {
                for t in 0..num_t {
                    let mut terms: Vec<(VarId, f64)> = vec![
                        (layout.pdown[slot][e][t], 1.0),
                        (layout.demand[slot][e][t], -1.0),
                    ];
                    let mut rhs = 0.0;
                    for &i in &inst.node_gens[n] {
                        let gen = &inst.gens[i];
                        if gen.is_controllable() {
                            terms.push((layout.offer[i].as_ref().unwrap()[e][t], 1.0));
                        } else if gen.is_candidate() {
                            let k = candidates.iter().position(|&c| c == i).unwrap();
                            terms.push((layout.gmax[k], gen.rho(e, t)));
                        } else {
                            rhs -= gen.rho(e, t) * gen.g_max;
                        }
                    }
                    bp.lp.add_row(
                        format!("mlbal_{}_e{}t{}", inst.nodes[n].name, e, t),
                        RowSense::Eq,
                        -rhs,
                        terms,
                    );
                    bp.row_terms.push(Vec::new());
                }
            }
        }

        // Ramp limits on controllable offers.
        for &i in &inst.owned_controllables() {
            let gen = &inst.gens[i];
            let grid = layout.offer[i].as_ref().unwrap();
            for e in 0..num_e {
                for t in 1..num_t {
                    bp.lp.add_row(
                        format!("rampup_{}_e{}t{}", gen.name, e, t),
                        RowSense::Le,
                        gen.ramp_up,
                        vec![(grid[e][t], 1.0), (grid[e][t - 1], -1.0)],
                    );
                    bp.row_terms.push(Vec::new());
                    bp.lp.add_row(
                        format!("rampdn_{}_e{}t{}", gen.name, e, t),
                        RowSense::Ge,
                        gen.ramp_down,
                        vec![(grid[e][t], 1.0), (grid[e][t - 1], -1.0)],
                    );
                    bp.row_terms.push(Vec::new());
                }
            }
        }

        // Linearized chance constraints: one row per (constraint, tangent).
        for cc in &self.chance {
            let offer_var = layout.offer[cc.gen].as_ref().unwrap()[cc.day][cc.hour];
            for point in &self.tangents {
                let (s_at, grad) = cc.stdev_tangent(point);
                let tangent_const: f64 =
                    s_at - grad.iter().map(|&(s, gr)| gr * point[s]).sum::<f64>();
                let sign = cc.margin_sign();
                let mut terms: Vec<(VarId, f64)> = vec![(offer_var, 1.0)];
                for &(slot, c) in &cc.mean_coef {
                    terms.push((layout.gmax[slot], c));
                }
                for &(slot, gr) in &grad {
                    terms.push((layout.gmax[slot], sign * cc.z * gr));
                }
                if let Some((slot, c)) = cc.rhs_own {
                    terms.push((layout.gmax[slot], -c));
                }
                let rhs = cc.rhs_const - cc.mean_const - sign * cc.z * tangent_const;
                let sense = if cc.upper { RowSense::Le } else { RowSense::Ge };
                let row = bp.lp.add_row(
                    format!(
                        "cc_{}_{}_e{}t{}_v{}",
                        if cc.upper { "up" } else { "lo" },
                        self.inst.gens[cc.gen].name,
                        cc.day,
                        cc.hour,
                        layout.chance_rows.len()
                    ),
                    sense,
                    rhs,
                    terms,
                );
                bp.row_terms.push(Vec::new());
                layout.chance_rows.push(row);
            }
        }
    }

    /// Linear and product terms of the expected utility profit over the live
    /// block. Price factors are fixed numbers in the subproblem and
    /// variables in the master.
    fn utility_profit_terms(
        &self,
        layout: &Layout,
    ) -> (Vec<(VarId, f64)>, Vec<(f64, VarId, VarId)>, f64) {
        let inst = self.inst;
        let candidates = inst.candidates();
        let mut linear: Vec<(VarId, f64)> = Vec::new();
        let mut products: Vec<(f64, VarId, VarId)> = Vec::new();
        let constant = 0.0;
        for e in 0..inst.num_e() {
            let w = inst.weight(e);
            for (slot, _) in inst.strategic_nodes().iter().enumerate() {
                for t in 0..inst.num_t() {
                    let d = layout.demand[slot][e][t];
                    // Retail revenue pi * d.
                    match &layout.fixed_reg {
                        Some(reg) => linear.push((d, w * reg.pi(inst, slot, t))),
                        None => {
                            let pi = if inst.policy.peak[t] {
                                layout.pi_on[slot]
                            } else {
                                layout.pi_off[slot]
                            };
                            products.push((w, pi, d));
                        }
                    }
                    // Wholesale purchase lambda * d.
                    let n = inst.strategic_nodes()[slot];
                    products.push((-w, layout.live.lam[n][e][t], d));
                }
            }
            for &i in inst.owned_gens() {
                let gen = &inst.gens[i];
                for t in 0..inst.num_t() {
                    let gv = layout.live.g[i][e][t];
                    // Market revenue and running cost of own units.
                    products.push((w, layout.live.lam[gen.node][e][t], gv));
                    if gen.cost_energy != 0.0 {
                        linear.push((gv, -w * gen.cost_energy));
                    }
                    // Energy incentive on renewable production.
                    if gen.is_renewable() {
                        match &layout.fixed_reg {
                            Some(reg) => linear.push((gv, w * reg.tau_e)),
                            None => products.push((w, layout.tau_e.unwrap(), gv)),
                        }
                    }
                }
            }
            for (k, &i) in candidates.iter().enumerate() {
                let gen = &inst.gens[i];
                linear.push((layout.gmax[k], -w * gen.daily_capital));
                if gen.is_renewable() {
                    match &layout.fixed_reg {
                        Some(reg) => linear.push((layout.gmax[k], w * reg.tau_c_mw())),
                        None => products.push((w, layout.tau_c.unwrap(), layout.gmax[k])),
                    }
                }
            }
        }
        (linear, products, constant)
    }
}

enum DemandRef {
    Const(f64),
    Var(VarId),
}

fn empty_layout() -> Layout {
    Layout {
        tau_c: None,
        tau_e: None,
        pi_on: Vec::new(),
        pi_off: Vec::new(),
        fixed_reg: None,
        gmax: Vec::new(),
        offer: Vec::new(),
        demand: Vec::new(),
        pdown: Vec::new(),
        live: MarketBlock {
            g: Vec::new(),
            f: Vec::new(),
            theta: Vec::new(),
            lam: Vec::new(),
            xi: Vec::new(),
            glo: Vec::new(),
            ghi: Vec::new(),
            dlo: Vec::new(),
            dhi: Vec::new(),
            duality_rows: Vec::new(),
        },
        aux: Vec::new(),
        cut_rows: Vec::new(),
        budget_rows: Vec::new(),
        rps_rows: Vec::new(),
        revenue_row: None,
        chance_rows: Vec::new(),
    }
}

/// Builds the subproblem at fixed regulator prices: maximize the utility
/// profit over the joint ML + market-equilibrium feasible set. Its size is
/// independent of the iteration count.
pub fn build_subproblem(
    builder: &Builder,
    reg: &RegulatorDecision,
) -> Result<(BilinearProgram, Layout), BuildError> {
    let inst = builder.inst;
    let mut bp = BilinearProgram::new(LpProblem::new(Sense::Max), Vec::new());
    let mut layout = empty_layout();
    layout.fixed_reg = Some(reg.clone());

    builder.emit_ml(&mut bp, &mut layout);

    // Demand is pinned by the fixed tariff.
    for (slot, &n) in inst.strategic_nodes().iter().enumerate() {
        for e in 0..inst.num_e() {
            for t in 0..inst.num_t() {
                let d = demand_from_tariff(
                    inst.demand.intercept[n][e][t],
                    inst.demand.slope,
                    reg.pi(inst, slot, t),
                    inst.demand.dr_offset[n][t],
                )?;
                bp.lp.vars[layout.demand[slot][e][t]].lower = d;
                bp.lp.vars[layout.demand[slot][e][t]].upper = d;
            }
        }
    }

    let refs = crate::lp::build_ll_primal(inst, &zero_offers(inst), &zero_demand(inst))
        .1
        .balance
        .len();
    let _ = refs;
    let refs = super::build::reference_nodes_of(inst);
    let caps_layout = layout.clone();
    let caps = |i: usize, e: usize, t: usize| builder.market_cap(&caps_layout, i, e, t);
    let demand_of = |n: usize, e: usize, t: usize| match strategic_slot(inst, n) {
        Some(slot) => DemandRef::Var(caps_layout.demand[slot][e][t]),
        None => DemandRef::Const(inst.demand.inflexible[n][e][t]),
    };
    let live = builder.emit_market_block(&mut bp, &caps_layout, "", &caps, &demand_of, &refs)?;
    layout.live = live;

    // Objective: expected utility profit.
    let (linear, products, constant) = builder.utility_profit_terms(&layout);
    for (v, c) in linear {
        bp.lp.vars[v].obj += c;
    }
    for (c, x, y) in products {
        bp.add_obj_term(c, x, y)?;
    }
    bp.lp.obj_offset += constant;
    Ok((bp, layout))
}

pub(crate) fn reference_nodes_of(inst: &Instance) -> Vec<usize> {
    crate::lp::market_reference_nodes(inst)
}

fn zero_offers(inst: &Instance) -> Vec<Vec<Vec<f64>>> {
    vec![vec![vec![0.0; inst.num_t()]; inst.num_e()]; inst.gens.len()]
}
fn zero_demand(inst: &Instance) -> Vec<Vec<Vec<f64>>> {
    vec![vec![vec![0.0; inst.num_t()]; inst.num_e()]; inst.strategic_nodes().len()]
}

/// Builds the master at iteration k: minimize the regulator objective over
/// tariffs, incentives, one live ML + market block, and one auxiliary market
/// copy per stored subproblem solution with its profit cut.
pub fn build_master(
    builder: &Builder,
    history: &[CcgIterate],
) -> Result<(BilinearProgram, Layout), BuildError> {
    let inst = builder.inst;
    let cfg = builder.cfg;
    let mut bp = BilinearProgram::new(LpProblem::new(Sense::Min), Vec::new());
    let mut layout = empty_layout();

    // Regulator variables first: the lexicographic incumbent tie-break then
    // prefers lower tau_c, then tau_e, then lower tariffs.
    let tau_caps = cfg.incentive_caps(inst);
    let tau_c = bp.lp.add_var("tau_c", 0.0, tau_caps.1, 0.0);
    bp.blocks.push(Block::A);
    let tau_e = bp.lp.add_var("tau_e", 0.0, tau_caps.0, 0.0);
    bp.blocks.push(Block::A);
    if let Some(v) = cfg.pin_tau_c {
        bp.lp.fix_var(tau_c, v);
    }
    if let Some(v) = cfg.pin_tau_e {
        bp.lp.fix_var(tau_e, v);
    }
    layout.tau_c = Some(tau_c);
    layout.tau_e = Some(tau_e);
    for &n in inst.strategic_nodes() {
        let cap_on = tariff_cap(inst, n, true);
        let cap_off = tariff_cap(inst, n, false);
        let on = bp
            .lp
            .add_var(format!("pi_on_{}", inst.nodes[n].name), 0.0, cap_on, 0.0);
        bp.blocks.push(Block::A);
        let off = bp
            .lp
            .add_var(format!("pi_off_{}", inst.nodes[n].name), 0.0, cap_off, 0.0);
        bp.blocks.push(Block::A);
        layout.pi_on.push(on);
        layout.pi_off.push(off);
    }

    builder.emit_ml(&mut bp, &mut layout);

    // Demand link: N d + pi = M - dpi per strategic node and hour.
    for (slot, &n) in inst.strategic_nodes().iter().enumerate() {
        for e in 0..inst.num_e() {
            for t in 0..inst.num_t() {
                let pi = if inst.policy.peak[t] {
                    layout.pi_on[slot]
                } else {
                    layout.pi_off[slot]
                };
                bp.lp.add_row(
                    format!("dlink_{}_e{}t{}", inst.nodes[n].name, e, t),
                    RowSense::Eq,
                    inst.net_intercept(n, e, t),
                    vec![(layout.demand[slot][e][t], inst.demand.slope), (pi, 1.0)],
                );
                bp.row_terms.push(Vec::new());
            }
        }
    }

    let refs = reference_nodes_of(inst);
    let caps_layout = layout.clone();
    let caps = |i: usize, e: usize, t: usize| builder.market_cap(&caps_layout, i, e, t);
    let demand_of = |n: usize, e: usize, t: usize| match strategic_slot(inst, n) {
        Some(slot) => DemandRef::Var(caps_layout.demand[slot][e][t]),
        None => DemandRef::Const(inst.demand.inflexible[n][e][t]),
    };
    let live = builder.emit_market_block(&mut bp, &caps_layout, "", &caps, &demand_of, &refs)?;
    layout.live = live;

    // Regulator objective.
    let candidates = inst.candidates();
    for e in 0..inst.num_e() {
        let w = inst.weight(e);
        for (slot, &n) in inst.strategic_nodes().iter().enumerate() {
            for t in 0..inst.num_t() {
                let pi = if inst.policy.peak[t] {
                    layout.pi_on[slot]
                } else {
                    layout.pi_off[slot]
                };
                bp.lp.vars[pi].obj += w * inst.demand.inflexible[n][e][t];
            }
        }
        for &i in &inst.owned_renewables() {
            for t in 0..inst.num_t() {
                bp.add_obj_term(w, tau_e, layout.live.g[i][e][t])?;
            }
        }
    }
    for (k, &i) in candidates.iter().enumerate() {
        if inst.gens[i].is_renewable() {
            // tau_c is stored in $/kW-day; capacities in MW.
            bp.add_obj_term(1000.0, tau_c, layout.gmax[k])?;
        }
    }

    // Budget and RPS per day.
    let s = inst.strategic_state();
    for e in 0..inst.num_e() {
        let budget = inst.policy.budget[s];
        if budget.is_finite() {
            let row = bp
                .lp
                .add_row(format!("budget_e{e}"), RowSense::Le, budget, vec![]);
            bp.row_terms.push(Vec::new());
            for &i in &inst.owned_renewables() {
                for t in 0..inst.num_t() {
                    bp.add_row_term(row, 1.0, tau_e, layout.live.g[i][e][t])?;
                }
            }
            for (k, &i) in candidates.iter().enumerate() {
                if inst.gens[i].is_renewable() {
                    bp.add_row_term(row, 1000.0, tau_c, layout.gmax[k])?;
                }
            }
            layout.budget_rows.push(row);
        }
        let kappa = inst.policy.rps[s];
        if kappa > 0.0 {
            let target = kappa * inst.strategic_inflexible(e);
            let mut terms = Vec::new();
            for &i in &inst.owned_renewables() {
                for t in 0..inst.num_t() {
                    terms.push((layout.live.g[i][e][t], 1.0));
                }
            }
            let row = bp
                .lp
                .add_row(format!("rps_e{e}"), RowSense::Ge, target, terms);
            bp.row_terms.push(Vec::new());
            layout.rps_rows.push(row);
        }
    }

    // Revenue adequacy: the live utility profit must be non-negative.
    {
        let (linear, products, constant) = builder.utility_profit_terms(&layout);
        let row = bp
            .lp
            .add_row("revenue_adequacy", RowSense::Ge, -constant, linear);
        bp.row_terms.push(Vec::new());
        for (c, x, y) in products {
            bp.add_row_term(row, c, x, y)?;
        }
        layout.revenue_row = Some(row);
    }

    // One auxiliary market copy and profit cut per stored iterate.
    for (j, it) in history.iter().enumerate() {
        let tag = format!("x{j}_");
        let caps_hist =
            |i: usize, e: usize, t: usize| CapRef::Const(it.offers[i][e][t].max(0.0));
        let aux = builder.emit_market_block(&mut bp, &caps_layout, &tag, &caps_hist, &demand_of, &refs)?;

        for e in 0..inst.num_e() {
            // Cut: live day-e profit >= replayed day-e profit. Retail
            // revenue pi*d appears on both sides and cancels.
            let mut terms: Vec<(VarId, f64)> = Vec::new();
            let mut products: Vec<(f64, VarId, VarId)> = Vec::new();
            let mut rhs = 0.0;
            for t in 0..inst.num_t() {
                for (slot, &n) in inst.strategic_nodes().iter().enumerate() {
                    let d = layout.demand[slot][e][t];
                    products.push((-1.0, layout.live.lam[n][e][t], d));
                    products.push((1.0, aux.lam[n][e][t], d));
                }
                for &i in inst.owned_gens() {
                    let gen = &inst.gens[i];
                    let live_g = layout.live.g[i][e][t];
                    let aux_g = aux.g[i][e][t];
                    products.push((1.0, layout.live.lam[gen.node][e][t], live_g));
                    products.push((-1.0, aux.lam[gen.node][e][t], aux_g));
                    if gen.cost_energy != 0.0 {
                        terms.push((live_g, -gen.cost_energy));
                        terms.push((aux_g, gen.cost_energy));
                    }
                    if gen.is_renewable() {
                        products.push((1.0, tau_e, live_g));
                        products.push((-1.0, tau_e, aux_g));
                    }
                }
            }
            for (k, &i) in candidates.iter().enumerate() {
                let gen = &inst.gens[i];
                terms.push((layout.gmax[k], -gen.daily_capital));
                rhs -= gen.daily_capital * it.g_max[k];
                if gen.is_renewable() {
                    products.push((1000.0, tau_c, layout.gmax[k]));
                    terms.push((tau_c, -1000.0 * it.g_max[k]));
                }
            }
            let row = bp.lp.add_row(
                format!("cut_{j}_e{e}"),
                RowSense::Ge,
                rhs,
                terms,
            );
            bp.row_terms.push(Vec::new());
            for (c, x, y) in products {
                bp.add_row_term(row, c, x, y)?;
            }
            layout.cut_rows.push((j, e, row));
        }
        layout.aux.push(aux);
    }

    Ok((bp, layout))
}

/// Largest tariff that keeps the demand model in range for the window.
fn tariff_cap(inst: &Instance, n: usize, on_peak: bool) -> f64 {
    let mut cap = f64::INFINITY;
    for e in 0..inst.num_e() {
        for t in 0..inst.num_t() {
            if inst.policy.peak[t] == on_peak {
                cap = cap.min(inst.net_intercept(n, e, t));
            }
        }
    }
    if cap.is_finite() {
        cap.max(0.0)
    } else {
        // No hour in this window; the variable is inert.
        0.0
    }
}

/// Reads the decision blocks out of a solved point.
pub fn extract(
    inst: &Instance,
    layout: &Layout,
    x: &[f64],
) -> (RegulatorDecision, UtilityDecision, MarketOutcome) {
    let reg = match &layout.fixed_reg {
        Some(reg) => reg.clone(),
        None => RegulatorDecision {
            pi_on: layout.pi_on.iter().map(|&v| x[v]).collect(),
            pi_off: layout.pi_off.iter().map(|&v| x[v]).collect(),
            tau_e: x[layout.tau_e.unwrap()],
            tau_c: x[layout.tau_c.unwrap()],
        },
    };
    let mut util = UtilityDecision::zeros(inst);
    util.g_max = layout.gmax.iter().map(|&v| x[v]).collect();
    for i in 0..inst.gens.len() {
        if let Some(grid) = &layout.offer[i] {
            for e in 0..inst.num_e() {
                for t in 0..inst.num_t() {
                    util.offers[i][e][t] = x[grid[e][t]];
                }
            }
        }
    }
    for slot in 0..inst.strategic_nodes().len() {
        for e in 0..inst.num_e() {
            for t in 0..inst.num_t() {
                util.demand[slot][e][t] = x[layout.demand[slot][e][t]];
                util.interface[slot][e][t] = x[layout.pdown[slot][e][t]];
            }
        }
    }
    let mut mk = MarketOutcome::zeros(inst);
    for e in 0..inst.num_e() {
        for t in 0..inst.num_t() {
            for i in 0..inst.gens.len() {
                mk.dispatch[i][e][t] = x[layout.live.g[i][e][t]];
                mk.gamma_lo[i][e][t] = x[layout.live.glo[i][e][t]];
                mk.gamma_hi[i][e][t] = x[layout.live.ghi[i][e][t]];
                mk.obj_primal[e] -= inst.gens[i].cost_energy * mk.dispatch[i][e][t];
            }
            for l in 0..inst.lines.len() {
                mk.flows[l][e][t] = x[layout.live.f[l][e][t]];
                mk.xi[l][e][t] = x[layout.live.xi[l][e][t]];
                mk.delta_lo[l][e][t] = x[layout.live.dlo[l][e][t]];
                mk.delta_hi[l][e][t] = x[layout.live.dhi[l][e][t]];
            }
            for n in 0..inst.nodes.len() {
                mk.angles[n][e][t] = x[layout.live.theta[n][e][t]];
                mk.lmp[n][e][t] = x[layout.live.lam[n][e][t]];
            }
        }
    }
    // Dual objective per day from the extracted certificates.
    for e in 0..inst.num_e() {
        let mut dual = 0.0;
        for t in 0..inst.num_t() {
            for i in 0..inst.gens.len() {
                let cap = market_cap_value(inst, &util, i, e, t);
                dual += cap * mk.gamma_hi[i][e][t];
            }
            for (slot, &n) in inst.strategic_nodes().iter().enumerate() {
                dual -= util.demand[slot][e][t] * mk.lmp[n][e][t];
            }
            for n in 0..inst.nodes.len() {
                if !inst.is_strategic_node(n) {
                    dual -= inst.demand.inflexible[n][e][t] * mk.lmp[n][e][t];
                }
            }
            for (l, line) in inst.lines.iter().enumerate() {
                dual += line.capacity * (mk.delta_hi[l][e][t] + mk.delta_lo[l][e][t]);
            }
        }
        mk.obj_dual[e] = dual;
    }
    (reg, util, mk)
}

/// Offer ceiling value at a decision (the same quantity `CapRef` describes
/// symbolically).
pub fn market_cap_value(
    inst: &Instance,
    util: &UtilityDecision,
    i: usize,
    e: usize,
    t: usize,
) -> f64 {
    util.market_offer(inst, i, e, t).max(0.0)
}
