//! Wholesale market LPs: welfare-maximizing DC-OPF in primal form, its dual,
//! and a per-hour market clearing that extracts the full primal-dual pair.
//!
//! Sign conventions, fixed by the hand-worked two-node cases in the tests:
//! the LMP is the negated solver dual of the nodal balance row, the
//! flow-definition dual carries its solver sign, and the bound duals come
//! from reduced costs split by sign.

use super::{LpError, LpProblem, LpSolution, LpStatus, RowId, RowSense, Sense, VarId};
use crate::model::{strategic_slot, Instance, MarketOutcome};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("market LP infeasible: {0}")]
    Infeasible(String),
    #[error("market LP unbounded: {0}")]
    Unbounded(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Variable and row handles of the full-horizon primal market LP.
pub struct LlPrimalIndex {
    /// [gen][day][hour]
    pub g: Vec<Vec<Vec<VarId>>>,
    /// [line][day][hour]
    pub f: Vec<Vec<Vec<VarId>>>,
    /// [node][day][hour]
    pub theta: Vec<Vec<Vec<VarId>>>,
    /// [node][day][hour], duals are -LMP
    pub balance: Vec<Vec<Vec<RowId>>>,
    /// [line][day][hour]
    pub flow_def: Vec<Vec<Vec<RowId>>>,
}

/// Variable handles of the full-horizon dual market LP.
pub struct LlDualIndex {
    pub lambda: Vec<Vec<Vec<VarId>>>,
    pub xi: Vec<Vec<Vec<VarId>>>,
    pub gamma_lo: Vec<Vec<Vec<VarId>>>,
    pub gamma_hi: Vec<Vec<Vec<VarId>>>,
    pub delta_lo: Vec<Vec<Vec<VarId>>>,
    pub delta_hi: Vec<Vec<Vec<VarId>>>,
}

/// Reference angle nodes: the lowest node id of every connected component.
pub fn reference_nodes(inst: &Instance) -> Vec<usize> {
    let n = inst.nodes.len();
    let mut adj = vec![Vec::new(); n];
    for l in &inst.lines {
        adj[l.from].push(l.to);
        adj[l.to].push(l.from);
    }
    let mut seen = vec![false; n];
    let mut refs = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        refs.push(start);
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    refs
}

/// Demand seen by the market at a node: the flexible decision on strategic
/// nodes, the inflexible parameter elsewhere.
fn market_demand(inst: &Instance, demand_s: &[Vec<Vec<f64>>], n: usize, e: usize, t: usize) -> f64 {
    match strategic_slot(inst, n) {
        Some(slot) => demand_s[slot][e][t],
        None => inst.demand.inflexible[n][e][t],
    }
}

/// Welfare-maximizing DC-OPF over the whole horizon: dispatch, angles and
/// flows per (day, hour), with the nodal balance rows tagged so their duals
/// expose the LMPs. `offers` is the dense offer ceiling per generator;
/// `demand_s` the flexible demand per strategic node slot.
pub fn build_ll_primal(
    inst: &Instance,
    offers: &[Vec<Vec<f64>>],
    demand_s: &[Vec<Vec<f64>>],
) -> (LpProblem, LlPrimalIndex) {
    let (num_e, num_t) = (inst.num_e(), inst.num_t());
    let mut lp = LpProblem::new(Sense::Max);
    let refs = reference_nodes(inst);

    let g: Vec<Vec<Vec<VarId>>> = (0..inst.gens.len())
        .map(|i| {
            (0..num_e)
                .map(|e| {
                    (0..num_t)
                        .map(|t| {
                            lp.add_var(
                                format!("g_{}_e{}t{}", inst.gens[i].name, e, t),
                                0.0,
                                offers[i][e][t].max(0.0),
                                -inst.gens[i].cost_energy,
                            )
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let f: Vec<Vec<Vec<VarId>>> = (0..inst.lines.len())
        .map(|l| {
            (0..num_e)
                .map(|e| {
                    (0..num_t)
                        .map(|t| {
                            lp.add_var(
                                format!("f_{}_e{}t{}", inst.lines[l].name, e, t),
                                -inst.lines[l].capacity,
                                inst.lines[l].capacity,
                                0.0,
                            )
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let theta: Vec<Vec<Vec<VarId>>> = (0..inst.nodes.len())
        .map(|n| {
            (0..num_e)
                .map(|e| {
                    (0..num_t)
                        .map(|t| {
                            let (lo, hi) = if refs.contains(&n) {
                                (0.0, 0.0)
                            } else {
                                (f64::NEG_INFINITY, f64::INFINITY)
                            };
                            lp.add_var(format!("th_{}_e{}t{}", inst.nodes[n].name, e, t), lo, hi, 0.0)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut flow_def = vec![vec![vec![0; num_t]; num_e]; inst.lines.len()];
    let mut balance = vec![vec![vec![0; num_t]; num_e]; inst.nodes.len()];
    for e in 0..num_e {
        for t in 0..num_t {
            for (l, line) in inst.lines.iter().enumerate() {
                let inv_x = 1.0 / line.reactance;
                flow_def[l][e][t] = lp.add_row(
                    format!("fd_{}_e{}t{}", line.name, e, t),
                    RowSense::Eq,
                    0.0,
                    vec![
                        (f[l][e][t], 1.0),
                        (theta[line.from][e][t], -inv_x),
                        (theta[line.to][e][t], inv_x),
                    ],
                );
            }
            for n in 0..inst.nodes.len() {
                let mut terms: Vec<(VarId, f64)> = inst.node_gens[n]
                    .iter()
                    .map(|&i| (g[i][e][t], 1.0))
                    .collect();
                for (l, line) in inst.lines.iter().enumerate() {
                    if line.to == n {
                        terms.push((f[l][e][t], 1.0));
                    }
                    if line.from == n {
                        terms.push((f[l][e][t], -1.0));
                    }
                }
                balance[n][e][t] = lp.add_row(
                    format!("bal_{}_e{}t{}", inst.nodes[n].name, e, t),
                    RowSense::Eq,
                    market_demand(inst, demand_s, n, e, t),
                    terms,
                );
            }
        }
    }
    (
        lp,
        LlPrimalIndex {
            g,
            f,
            theta,
            balance,
            flow_def,
        },
    )
}

/// The market dual over the whole horizon, mirroring `build_ll_primal`.
pub fn build_ll_dual(
    inst: &Instance,
    offers: &[Vec<Vec<f64>>],
    demand_s: &[Vec<Vec<f64>>],
) -> (LpProblem, LlDualIndex) {
    let (num_e, num_t) = (inst.num_e(), inst.num_t());
    let mut lp = LpProblem::new(Sense::Min);
    let free = (f64::NEG_INFINITY, f64::INFINITY);

    let lambda: Vec<Vec<Vec<VarId>>> = (0..inst.nodes.len())
        .map(|n| {
            (0..num_e)
                .map(|e| {
                    (0..num_t)
                        .map(|t| {
                            let d = market_demand(inst, demand_s, n, e, t);
                            lp.add_var(
                                format!("lam_{}_e{}t{}", inst.nodes[n].name, e, t),
                                free.0,
                                free.1,
                                -d,
                            )
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let xi: Vec<Vec<Vec<VarId>>> = (0..inst.lines.len())
        .map(|l| {
            (0..num_e)
                .map(|e| {
                    (0..num_t)
                        .map(|t| {
                            lp.add_var(
                                format!("xi_{}_e{}t{}", inst.lines[l].name, e, t),
                                free.0,
                                free.1,
                                0.0,
                            )
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let mut mk_pos = |tag: &str, name: &str, e: usize, t: usize, obj: f64| {
        lp.add_var(format!("{}_{}_e{}t{}", tag, name, e, t), 0.0, f64::INFINITY, obj)
    };
    let gamma_lo: Vec<Vec<Vec<VarId>>> = (0..inst.gens.len())
        .map(|i| {
            (0..num_e)
                .map(|e| {
                    (0..num_t)
                        .map(|t| mk_pos("glo", &inst.gens[i].name, e, t, 0.0))
                        .collect()
                })
                .collect()
        })
        .collect();
    let gamma_hi: Vec<Vec<Vec<VarId>>> = (0..inst.gens.len())
        .map(|i| {
            (0..num_e)
                .map(|e| {
                    (0..num_t)
                        .map(|t| mk_pos("ghi", &inst.gens[i].name, e, t, offers[i][e][t].max(0.0)))
                        .collect()
                })
                .collect()
        })
        .collect();
    let delta_lo: Vec<Vec<Vec<VarId>>> = (0..inst.lines.len())
        .map(|l| {
            (0..num_e)
                .map(|e| {
                    (0..num_t)
                        .map(|t| mk_pos("dlo", &inst.lines[l].name, e, t, inst.lines[l].capacity))
                        .collect()
                })
                .collect()
        })
        .collect();
    let delta_hi: Vec<Vec<Vec<VarId>>> = (0..inst.lines.len())
        .map(|l| {
            (0..num_e)
                .map(|e| {
                    (0..num_t)
                        .map(|t| mk_pos("dhi", &inst.lines[l].name, e, t, inst.lines[l].capacity))
                        .collect()
                })
                .collect()
        })
        .collect();

    for e in 0..num_e {
        for t in 0..num_t {
            for (i, gen) in inst.gens.iter().enumerate() {
                lp.add_row(
                    format!("dg_{}_e{}t{}", gen.name, e, t),
                    RowSense::Eq,
                    -gen.cost_energy,
                    vec![
                        (gamma_lo[i][e][t], -1.0),
                        (gamma_hi[i][e][t], 1.0),
                        (lambda[gen.node][e][t], -1.0),
                    ],
                );
            }
            for (l, line) in inst.lines.iter().enumerate() {
                lp.add_row(
                    format!("df_{}_e{}t{}", line.name, e, t),
                    RowSense::Eq,
                    0.0,
                    vec![
                        (delta_lo[l][e][t], -1.0),
                        (delta_hi[l][e][t], 1.0),
                        (xi[l][e][t], 1.0),
                        (lambda[line.to][e][t], -1.0),
                        (lambda[line.from][e][t], 1.0),
                    ],
                );
            }
            for n in 0..inst.nodes.len() {
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
                    lp.add_row(
                        format!("dth_{}_e{}t{}", inst.nodes[n].name, e, t),
                        RowSense::Eq,
                        0.0,
                        terms,
                    );
                }
            }
        }
    }
    (
        lp,
        LlDualIndex {
            lambda,
            xi,
            gamma_lo,
            gamma_hi,
            delta_lo,
            delta_hi,
        },
    )
}

/// |O^W - O^DW| of two solved problems.
pub fn strong_duality_gap(primal: &LpSolution, dual: &LpSolution) -> f64 {
    (primal.objective - dual.objective).abs()
}

/// Clears the market hour by hour (the LP is block-diagonal over (day,
/// hour)) and assembles the full primal-dual outcome. The dual objective per
/// day is evaluated from the extracted certificates, so the duality residual
/// in the result is a real check rather than a copy.
pub fn clear_market(
    inst: &Instance,
    offers: &[Vec<Vec<f64>>],
    demand_s: &[Vec<Vec<f64>>],
) -> Result<MarketOutcome, MarketError> {
    let mut out = MarketOutcome::zeros(inst);
    let refs = reference_nodes(inst);
    for e in 0..inst.num_e() {
        for t in 0..inst.num_t() {
            clear_hour(inst, offers, demand_s, e, t, &refs, &mut out)?;
        }
    }
    Ok(out)
}

fn clear_hour(
    inst: &Instance,
    offers: &[Vec<Vec<f64>>],
    demand_s: &[Vec<Vec<f64>>],
    e: usize,
    t: usize,
    refs: &[usize],
    out: &mut MarketOutcome,
) -> Result<(), MarketError> {
    let mut lp = LpProblem::new(Sense::Max);
    let g: Vec<VarId> = inst
        .gens
        .iter()
        .enumerate()
        .map(|(i, gen)| {
            lp.add_var(
                format!("g{}", i),
                0.0,
                offers[i][e][t].max(0.0),
                -gen.cost_energy,
            )
        })
        .collect();
    let f: Vec<VarId> = inst
        .lines
        .iter()
        .enumerate()
        .map(|(l, line)| lp.add_var(format!("f{}", l), -line.capacity, line.capacity, 0.0))
        .collect();
    let theta: Vec<VarId> = (0..inst.nodes.len())
        .map(|n| {
            let (lo, hi) = if refs.contains(&n) {
                (0.0, 0.0)
            } else {
                (f64::NEG_INFINITY, f64::INFINITY)
            };
            lp.add_var(format!("th{}", n), lo, hi, 0.0)
        })
        .collect();
    for (l, line) in inst.lines.iter().enumerate() {
        let inv_x = 1.0 / line.reactance;
        lp.add_row(
            format!("fd{}", l),
            RowSense::Eq,
            0.0,
            vec![
                (f[l], 1.0),
                (theta[line.from], -inv_x),
                (theta[line.to], inv_x),
            ],
        );
    }
    let mut bal_rows = Vec::with_capacity(inst.nodes.len());
    for n in 0..inst.nodes.len() {
        let mut terms: Vec<(VarId, f64)> =
            inst.node_gens[n].iter().map(|&i| (g[i], 1.0)).collect();
        for (l, line) in inst.lines.iter().enumerate() {
            if line.to == n {
                terms.push((f[l], 1.0));
            }
            if line.from == n {
                terms.push((f[l], -1.0));
            }
        }
        bal_rows.push(lp.add_row(
            format!("bal{}", n),
            RowSense::Eq,
            market_demand(inst, demand_s, n, e, t),
            terms,
        ));
    }
    let sol = lp.solve()?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(MarketError::Infeasible(format!(
                "day {} hour {}: demand cannot be met with the given offers",
                e, t
            )))
        }
        LpStatus::Unbounded => {
            return Err(MarketError::Unbounded(format!("day {} hour {}", e, t)))
        }
    }

    let mut dual_obj = 0.0;
    for n in 0..inst.nodes.len() {
        let lam = -sol.duals[bal_rows[n]];
        out.lmp[n][e][t] = lam;
        out.angles[n][e][t] = sol.x[theta[n]];
        dual_obj -= market_demand(inst, demand_s, n, e, t) * lam;
    }
    for (i, _) in inst.gens.iter().enumerate() {
        let gv = sol.x[g[i]];
        out.dispatch[i][e][t] = gv;
        let rc = sol.reduced_costs[g[i]];
        let ghi = rc.max(0.0);
        out.gamma_hi[i][e][t] = ghi;
        out.gamma_lo[i][e][t] = (-rc).max(0.0);
        dual_obj += offers[i][e][t].max(0.0) * ghi;
    }
    for (l, line) in inst.lines.iter().enumerate() {
        out.flows[l][e][t] = sol.x[f[l]];
        out.xi[l][e][t] = sol.duals[l];
        let rc = sol.reduced_costs[f[l]];
        let dhi = rc.max(0.0);
        let dlo = (-rc).max(0.0);
        out.delta_hi[l][e][t] = dhi;
        out.delta_lo[l][e][t] = dlo;
        dual_obj += line.capacity * (dhi + dlo);
    }
    out.obj_primal[e] += sol.objective;
    out.obj_dual[e] += dual_obj;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::fixtures;
    use crate::model::validate_instance;
    use approx::assert_relative_eq;

    fn two_node(capacity: f64) -> Instance {
        let mut raw = fixtures::lp_test_raw();
        raw.network.lines[0].capacity = capacity;
        validate_instance(&raw).unwrap()
    }

    fn fixed_offers(inst: &Instance) -> Vec<Vec<Vec<f64>>> {
        (0..inst.gens.len())
            .map(|i| {
                (0..inst.num_e())
                    .map(|e| {
                        (0..inst.num_t())
                            .map(|t| {
                                if inst.is_owned(i) {
                                    inst.gens[i].g_max
                                } else {
                                    inst.nonstrategic_offer(i, e, t)
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    fn strategic_demand(inst: &Instance, value: f64) -> Vec<Vec<Vec<f64>>> {
        vec![vec![vec![value; inst.num_t()]; inst.num_e()]; inst.strategic_nodes().len()]
    }

    #[test]
    fn congested_two_node_case() {
        // Cheap unit at node 1 (10 $/MWh), expensive at node 2 (30 $/MWh),
        // demand 120 at node 2, line limit 50: the line binds.
        let inst = two_node(50.0);
        let offers = fixed_offers(&inst);
        let d = strategic_demand(&inst, 120.0);
        let out = clear_market(&inst, &offers, &d).unwrap();
        assert_relative_eq!(out.dispatch[0][0][0], 50.0, epsilon = 1e-8);
        assert_relative_eq!(out.dispatch[1][0][0], 70.0, epsilon = 1e-8);
        assert_relative_eq!(out.flows[0][0][0], 50.0, epsilon = 1e-8);
        assert_relative_eq!(out.lmp[0][0][0], 10.0, epsilon = 1e-8);
        assert_relative_eq!(out.lmp[1][0][0], 30.0, epsilon = 1e-8);
        assert_relative_eq!(out.obj_primal[0], -2600.0, epsilon = 1e-7);
        assert!(out.duality_residual() <= 1e-7);
    }

    #[test]
    fn uncongested_marginal_pricing() {
        // With the line wide open the expensive unit is marginal everywhere:
        // both LMPs equal 30 and the cheap unit earns gamma_hi = 20 at cap.
        let inst = two_node(200.0);
        let offers = fixed_offers(&inst);
        let d = strategic_demand(&inst, 120.0);
        let out = clear_market(&inst, &offers, &d).unwrap();
        assert_relative_eq!(out.dispatch[0][0][0], 100.0, epsilon = 1e-8);
        assert_relative_eq!(out.dispatch[1][0][0], 20.0, epsilon = 1e-8);
        assert_relative_eq!(out.lmp[0][0][0], 30.0, epsilon = 1e-8);
        assert_relative_eq!(out.lmp[1][0][0], 30.0, epsilon = 1e-8);
        assert_relative_eq!(out.gamma_hi[0][0][0], 20.0, epsilon = 1e-8);
        // Non-binding line: both flow duals vanish.
        assert_relative_eq!(out.delta_hi[0][0][0], 0.0, epsilon = 1e-9);
        assert_relative_eq!(out.delta_lo[0][0][0], 0.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_demand_clears_to_zero() {
        let inst = two_node(50.0);
        let mut inst = inst;
        for n in 0..inst.nodes.len() {
            for e in 0..inst.num_e() {
                for t in 0..inst.num_t() {
                    inst.demand.inflexible[n][e][t] = 0.0;
                }
            }
        }
        let offers = fixed_offers(&inst);
        let d = strategic_demand(&inst, 0.0);
        let out = clear_market(&inst, &offers, &d).unwrap();
        assert_eq!(out.obj_primal[0], 0.0);
        for i in 0..inst.gens.len() {
            assert_eq!(out.dispatch[i][0][0], 0.0);
        }
    }

    #[test]
    fn primal_and_dual_problems_agree() {
        for cap in [50.0, 200.0] {
            let inst = two_node(cap);
            let offers = fixed_offers(&inst);
            let d = strategic_demand(&inst, 120.0);
            let (plp, _) = build_ll_primal(&inst, &offers, &d);
            let (dlp, _) = build_ll_dual(&inst, &offers, &d);
            let ps = plp.solve().unwrap();
            let ds = dlp.solve().unwrap();
            assert_eq!(ps.status, LpStatus::Optimal);
            assert_eq!(ds.status, LpStatus::Optimal);
            assert!(strong_duality_gap(&ps, &ds) <= 1e-7 * (1.0 + ps.objective.abs()));
        }
    }

    #[test]
    fn duality_gap_detects_mismatched_inputs() {
        // Dual built for a different demand cannot match the primal value.
        let inst = two_node(50.0);
        let offers = fixed_offers(&inst);
        let d = strategic_demand(&inst, 120.0);
        let (plp, _) = build_ll_primal(&inst, &offers, &d);
        let d2 = strategic_demand(&inst, 100.0);
        let (dlp, _) = build_ll_dual(&inst, &offers, &d2);
        let ps = plp.solve().unwrap();
        let ds = dlp.solve().unwrap();
        assert!(strong_duality_gap(&ps, &ds) > 1e-3);
    }

    #[test]
    fn gap_invariant_under_row_scaling() {
        // Scaling the flow-definition rows rescales their duals but not the
        // optimal objectives.
        let inst = two_node(50.0);
        let offers = fixed_offers(&inst);
        let d = strategic_demand(&inst, 120.0);
        let (plp, _) = build_ll_primal(&inst, &offers, &d);
        let mut scaled = plp.clone();
        for row in scaled.rows.iter_mut() {
            if row.name.starts_with("fd_") {
                for term in row.terms.iter_mut() {
                    term.1 *= 7.5;
                }
                row.rhs *= 7.5;
            }
        }
        let a = plp.solve().unwrap();
        let b = scaled.solve().unwrap();
        assert_relative_eq!(a.objective, b.objective, max_relative = 1e-9);
    }

    #[test]
    fn infeasible_demand_reports_hour() {
        let inst = two_node(50.0);
        let offers = fixed_offers(&inst);
        let d = strategic_demand(&inst, 500.0);
        let err = clear_market(&inst, &offers, &d).unwrap_err();
        assert!(matches!(err, MarketError::Infeasible(_)));
    }
}
