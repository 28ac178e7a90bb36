//! Alternating-LP descent from many starting points.
//!
//! Each start fixes block B at sampled (or seeded) values and then
//! alternates exact LP solves over one block with the other pinned. Rows
//! carrying bilinear terms are handled elastically inside the half-steps —
//! phase one minimizes their total violation, phase two optimizes the true
//! objective with the violation budget pinned — so a half-step never fails
//! just because the frozen block is not yet consistent. Incumbents count
//! only when the true constraints hold.

use super::{lexicographically_smaller, BilinearError, BilinearProgram, Block, SolveReport};
use crate::lp::{LpProblem, LpStatus, RowSense, Sense, VarId};
use crate::parallel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct MultistartOptions {
    pub starts: usize,
    pub seed: u64,
    pub max_rounds: usize,
    pub obj_tol: f64,
    pub feas_tol: f64,
    /// Full-length points used as the first starts (block B is taken from
    /// them); the remaining starts sample block B uniformly in its boxes.
    pub seeded: Vec<Vec<f64>>,
}

impl Default for MultistartOptions {
    fn default() -> Self {
        MultistartOptions {
            starts: 300,
            seed: 0,
            max_rounds: 100,
            obj_tol: 1e-8,
            feas_tol: 1e-7,
            seeded: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StartTrajectory {
    pub start: usize,
    pub rounds: usize,
    pub objective: f64,
    pub infeasibility: f64,
    pub feasible: bool,
}

struct StartOutcome {
    point: Vec<f64>,
    objective: f64,
    infeasibility: f64,
    rounds: usize,
    failure: Option<String>,
}

/// Runs the alternating descent from every start and returns the best point
/// that satisfies the true constraints. Errors only when no start reaches
/// feasibility.
pub fn solve_multistart(
    bp: &BilinearProgram,
    opts: &MultistartOptions,
) -> Result<SolveReport, BilinearError> {
    let starts = opts.starts.max(opts.seeded.len()).max(1);
    let feas_tol = opts.feas_tol * bp.scale();

    let outcomes = parallel::map_range(starts, |s| {
        let point = initial_point(bp, opts, s);
        descend(bp, point, opts)
    });

    let mut trajectories = Vec::with_capacity(starts);
    let mut best: Option<&StartOutcome> = None;
    let mut most_feasible: Option<&StartOutcome> = None;
    for (s, o) in outcomes.iter().enumerate() {
        let feasible = o.failure.is_none() && o.infeasibility <= feas_tol;
        trajectories.push(StartTrajectory {
            start: s,
            rounds: o.rounds,
            objective: o.objective,
            infeasibility: o.infeasibility,
            feasible,
        });
        if o.failure.is_none() {
            let better_feas = match most_feasible {
                None => true,
                Some(m) => o.infeasibility < m.infeasibility - 1e-15,
            };
            if better_feas {
                most_feasible = Some(o);
            }
        }
        if feasible {
            let take = match best {
                None => true,
                Some(b) => {
                    let improvement = match bp.lp.sense {
                        Sense::Max => o.objective - b.objective,
                        Sense::Min => b.objective - o.objective,
                    };
                    improvement > 1e-12 * (1.0 + b.objective.abs())
                        || (improvement.abs() <= 1e-12 * (1.0 + b.objective.abs())
                            && lexicographically_smaller(&o.point, &b.point))
                }
            };
            if take {
                best = Some(o);
            }
        }
    }

    match best {
        Some(b) => Ok(SolveReport {
            best_objective: b.objective,
            best_point: b.point.clone(),
            trajectories,
            relaxation_bound: None,
            certified_gap: None,
            converged: true,
        }),
        None => {
            let (residual, detail) = match most_feasible {
                Some(m) => (m.infeasibility, worst_rows(bp, &m.point)),
                None => (
                    f64::INFINITY,
                    outcomes
                        .iter()
                        .find_map(|o| o.failure.clone())
                        .unwrap_or_else(|| "no start produced a point".into()),
                ),
            };
            Err(BilinearError::AllStartsInfeasible {
                starts,
                residual,
                detail,
            })
        }
    }
}

fn worst_rows(bp: &BilinearProgram, x: &[f64]) -> String {
    let mut rows: Vec<(f64, &str)> = (0..bp.lp.num_rows())
        .map(|r| (bp.row_violation(r, x), bp.lp.rows[r].name.as_str()))
        .collect();
    rows.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    rows.iter()
        .take(3)
        .filter(|(v, _)| *v > 0.0)
        .map(|(v, n)| format!("{n}: {v:.3e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn initial_point(bp: &BilinearProgram, opts: &MultistartOptions, s: usize) -> Vec<f64> {
    if s < opts.seeded.len() {
        return opts.seeded[s].clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (0x5851f42d4c957f2d_u64.wrapping_mul(s as u64 + 1)));
    let n = bp.lp.num_vars();
    let mut x = vec![0.0; n];
    for v in 0..n {
        let (lo, hi) = bp.boxed(v);
        x[v] = if lo.is_finite() && hi.is_finite() {
            if hi > lo {
                rng.gen_range(lo..=hi)
            } else {
                lo
            }
        } else if lo.is_finite() {
            lo
        } else if hi.is_finite() {
            hi
        } else {
            0.0
        };
    }
    x
}

fn descend(bp: &BilinearProgram, mut x: Vec<f64>, opts: &MultistartOptions) -> StartOutcome {
    let mut last_obj = f64::NAN;
    let mut last_infeas = f64::INFINITY;
    let mut rounds = 0;
    for round in 0..opts.max_rounds {
        rounds = round + 1;
        // Fix B, solve for A; then fix A, solve for B.
        match half_step(bp, Block::B, &x) {
            Ok(next) => x = next,
            Err(e) => {
                return StartOutcome {
                    point: x,
                    objective: f64::NAN,
                    infeasibility: f64::INFINITY,
                    rounds,
                    failure: Some(e),
                }
            }
        }
        match half_step(bp, Block::A, &x) {
            Ok(next) => x = next,
            Err(e) => {
                return StartOutcome {
                    point: x,
                    objective: f64::NAN,
                    infeasibility: f64::INFINITY,
                    rounds,
                    failure: Some(e),
                }
            }
        }
        let obj = bp.objective_at(&x);
        let infeas = bp.infeasibility(&x);
        let obj_stalled = if last_obj.is_nan() {
            false
        } else {
            (obj - last_obj).abs() <= opts.obj_tol * (1.0 + obj.abs())
        };
        let feas_stalled = (last_infeas - infeas).abs() <= 1e-12 * (1.0 + infeas.abs());
        if obj_stalled && feas_stalled {
            break;
        }
        last_obj = obj;
        last_infeas = infeas;
    }
    StartOutcome {
        objective: bp.objective_at(&x),
        infeasibility: bp.infeasibility(&x),
        point: x,
        rounds,
        failure: None,
    }
}

/// One exact LP over the non-fixed block. Rows that carry bilinear terms
/// get elastic slacks: phase one finds the least total violation, phase two
/// optimizes the true objective subject to that violation budget.
fn half_step(bp: &BilinearProgram, fixed: Block, x: &[f64]) -> Result<Vec<f64>, String> {
    let n = bp.lp.num_vars();
    let coupled = bp.coupled_rows();
    let base = bp.fix_block(fixed, x);

    let mut lp1 = base.clone();
    let slacks = add_elastic_slacks(&mut lp1, &coupled);
    for v in lp1.vars.iter_mut().take(n) {
        v.obj = 0.0;
    }
    lp1.obj_offset = 0.0;
    lp1.sense = Sense::Min;
    for &(s_pos, s_neg) in &slacks {
        lp1.vars[s_pos].obj = 1.0;
        if let Some(s) = s_neg {
            lp1.vars[s].obj = 1.0;
        }
    }
    let sol1 = lp1.solve().map_err(|e| e.to_string())?;
    match sol1.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err("half-step infeasible (hard linear rows)".into()),
        LpStatus::Unbounded => return Err("violation phase unbounded".into()),
    }
    let budget = sol1.objective;

    let mut lp2 = base;
    let slacks2 = add_elastic_slacks(&mut lp2, &coupled);
    let mut budget_terms: Vec<(VarId, f64)> = Vec::new();
    for &(s_pos, s_neg) in &slacks2 {
        budget_terms.push((s_pos, 1.0));
        if let Some(s) = s_neg {
            budget_terms.push((s, 1.0));
        }
    }
    lp2.add_row(
        "elastic_budget",
        RowSense::Le,
        budget + 1e-9 * (1.0 + budget.abs()),
        budget_terms,
    );
    let sol2 = lp2.solve().map_err(|e| e.to_string())?;
    match sol2.status {
        LpStatus::Optimal => Ok(sol2.x[..n].to_vec()),
        LpStatus::Infeasible => Err("objective phase infeasible".into()),
        LpStatus::Unbounded => Err("objective phase unbounded within boxes".into()),
    }
}

/// Appends violation slacks to the named rows: `<=` rows get one slack that
/// relaxes upward, `>=` one downward, `=` both. Returns (positive-side,
/// optional negative-side) slack ids per row.
fn add_elastic_slacks(lp: &mut LpProblem, rows: &[usize]) -> Vec<(VarId, Option<VarId>)> {
    let mut out = Vec::with_capacity(rows.len());
    for &r in rows {
        let name = lp.rows[r].name.clone();
        let sense = lp.rows[r].sense;
        match sense {
            RowSense::Le => {
                let s = lp.add_var(format!("__el_{name}"), 0.0, f64::INFINITY, 0.0);
                lp.rows[r].terms.push((s, -1.0));
                out.push((s, None));
            }
            RowSense::Ge => {
                let s = lp.add_var(format!("__el_{name}"), 0.0, f64::INFINITY, 0.0);
                lp.rows[r].terms.push((s, 1.0));
                out.push((s, None));
            }
            RowSense::Eq => {
                let sp = lp.add_var(format!("__elp_{name}"), 0.0, f64::INFINITY, 0.0);
                let sn = lp.add_var(format!("__eln_{name}"), 0.0, f64::INFINITY, 0.0);
                lp.rows[r].terms.push((sp, -1.0));
                lp.rows[r].terms.push((sn, 1.0));
                out.push((sp, Some(sn)));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::LpProblem;
    use approx::assert_relative_eq;

    fn product_bp(obj_x: f64, obj_y: f64, lo: f64, hi: f64) -> BilinearProgram {
        let mut lp = LpProblem::new(Sense::Max);
        let x = lp.add_var("x", lo, hi, obj_x);
        let y = lp.add_var("y", lo, hi, obj_y);
        let mut bp = BilinearProgram::new(lp, vec![Block::A, Block::B]);
        bp.add_obj_term(1.0, x, y).unwrap();
        bp
    }

    #[test]
    fn degenerates_to_lp_without_products() {
        let mut lp = LpProblem::new(Sense::Max);
        let x = lp.add_var("x", 0.0, 4.0, 2.0);
        lp.add_row("cap", RowSense::Le, 3.0, vec![(x, 1.0)]);
        let direct = lp.solve().unwrap();
        let bp = BilinearProgram::new(lp, vec![Block::A]);
        let rep = solve_multistart(&bp, &MultistartOptions { starts: 3, ..Default::default() })
            .unwrap();
        assert_relative_eq!(rep.best_objective, direct.objective, epsilon = 1e-9);
    }

    #[test]
    fn max_product_on_unit_box() {
        let bp = product_bp(0.0, 0.0, 0.0, 1.0);
        let rep = solve_multistart(
            &bp,
            &MultistartOptions { starts: 8, seed: 42, ..Default::default() },
        )
        .unwrap();
        assert_relative_eq!(rep.best_objective, 1.0, epsilon = 1e-7);
        assert_relative_eq!(rep.best_point[0], 1.0, epsilon = 1e-7);
        assert_relative_eq!(rep.best_point[1], 1.0, epsilon = 1e-7);
    }

    #[test]
    fn saddle_alternation_reports_best_vertex() {
        // max xy - x - y on [0,2]^2: alternation from (0,0) stalls at 0;
        // the multi-start still reports the vertex value 0 as the best
        // feasible incumbent (optimum over the box is 0 at (0,0) or (2,2)).
        let bp = product_bp(-1.0, -1.0, 0.0, 2.0);
        let rep = solve_multistart(
            &bp,
            &MultistartOptions { starts: 16, seed: 7, ..Default::default() },
        )
        .unwrap();
        assert_relative_eq!(rep.best_objective, 0.0, epsilon = 1e-7);
    }

    #[test]
    fn alternation_never_decreases_objective() {
        let bp = product_bp(0.5, -0.25, 0.0, 3.0);
        let opts = MultistartOptions { starts: 1, seed: 3, max_rounds: 1, ..Default::default() };
        // Run the descent round by round and watch the objective.
        let mut x = vec![1.7, 2.9];
        let mut prev = f64::NEG_INFINITY;
        for _ in 0..6 {
            x = half_step(&bp, Block::B, &x).unwrap();
            x = half_step(&bp, Block::A, &x).unwrap();
            let obj = bp.objective_at(&x);
            assert!(obj >= prev - 1e-9, "objective decreased: {prev} -> {obj}");
            prev = obj;
        }
        let _ = opts;
    }

    #[test]
    fn infeasible_when_rows_cannot_hold() {
        // x + y <= -1 with x, y in [0, 1] has no feasible point.
        let mut lp = LpProblem::new(Sense::Max);
        let x = lp.add_var("x", 0.0, 1.0, 1.0);
        let y = lp.add_var("y", 0.0, 1.0, 1.0);
        lp.add_row("bad", RowSense::Le, -1.0, vec![(x, 1.0), (y, 1.0)]);
        let mut bp = BilinearProgram::new(lp, vec![Block::A, Block::B]);
        bp.add_row_term(0, 0.01, x, y).unwrap();
        let err = solve_multistart(
            &bp,
            &MultistartOptions { starts: 4, seed: 1, ..Default::default() },
        )
        .unwrap_err();
        match err {
            BilinearError::AllStartsInfeasible { residual, .. } => {
                assert!(residual > 0.5, "residual {residual}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let bp = product_bp(0.3, -0.2, -1.0, 2.0);
        let opts = MultistartOptions { starts: 12, seed: 99, ..Default::default() };
        let a = solve_multistart(&bp, &opts).unwrap();
        let b = solve_multistart(&bp, &opts).unwrap();
        assert_eq!(a.best_objective.to_bits(), b.best_objective.to_bits());
        assert_eq!(a.best_point, b.best_point);
    }
}
