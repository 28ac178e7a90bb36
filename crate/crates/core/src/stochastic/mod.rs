//! Renewable forecast uncertainty: the Gaussian error model, affine
//! recourse by controllable units, the exact deterministic reformulation of
//! the chance constraints, and a Monte Carlo validator for the reformulated
//! decision.

mod normal;

pub use normal::{erfc, inverse_normal_cdf, normal_cdf, normal_pdf, normal_sf, QuantileError};

use crate::model::{GenId, Instance, UtilityDecision};
use crate::parallel;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct StochasticConfig {
    pub eta: f64,
    /// Cached safety factor z = Phi^-1(1 - eta).
    pub z: f64,
    pub seed: u64,
    pub samples: usize,
}

impl StochasticConfig {
    pub fn new(eta: f64, seed: u64, samples: usize) -> Result<Self, QuantileError> {
        let z = inverse_normal_cdf(1.0 - eta)?;
        Ok(StochasticConfig {
            eta,
            z,
            seed,
            samples,
        })
    }

    pub fn for_instance(inst: &Instance, seed: u64, samples: usize) -> Self {
        Self::new(inst.policy.eta, seed, samples).expect("validated eta lies in (0, 0.5]")
    }
}

/// Aggregate standard deviation absorbed by a unit with participation
/// factor `alpha`: alpha * sqrt(sum_j (cap_j * sigma_j)^2). Errors are
/// independent across hours and days, so no cross terms appear.
pub fn aggregate_stdev(alpha: f64, caps: &[f64], sigmas: &[f64]) -> f64 {
    debug_assert_eq!(caps.len(), sigmas.len());
    let sum_sq: f64 = caps
        .iter()
        .zip(sigmas)
        .map(|(c, s)| (c * s) * (c * s))
        .sum();
    alpha * sum_sq.sqrt()
}

/// One deterministic output-limit constraint for a controllable unit:
///
/// ```text
/// offer + mean_shift(g_max) + margin_sign * z * stdev(g_max)  <=/>=  rhs(g_max)
/// ```
///
/// where `mean_shift = -alpha * (sum_j cap_j * upsilon_j)` and `stdev =
/// alpha * sqrt(k_const + sum_j (g_max_j sigma_j)^2)`. Existing renewables
/// contribute constants; candidate renewables contribute terms in their
/// build variable, indexed by candidate slot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChanceConstraint {
    pub gen: GenId,
    pub day: usize,
    pub hour: usize,
    /// Upper output limit if true, else lower.
    pub upper: bool,
    pub alpha: f64,
    pub z: f64,
    /// Constant part of the mean shift (existing renewables).
    pub mean_const: f64,
    /// Mean-shift coefficient per candidate slot: -alpha * upsilon_j.
    pub mean_coef: Vec<(usize, f64)>,
    /// sum over existing renewables of (G_max * sigma)^2.
    pub k_const: f64,
    /// Candidate slot and sigma entering the stdev.
    pub sigma: Vec<(usize, f64)>,
    /// Constant right-hand side (G_max or G_min for existing units).
    pub rhs_const: f64,
    /// Candidate slot and coefficient when the bound is the unit's own
    /// build variable (1.0 for the upper limit, Gamma for the lower).
    pub rhs_own: Option<(usize, f64)>,
}

impl ChanceConstraint {
    pub fn margin_sign(&self) -> f64 {
        if self.upper {
            1.0
        } else {
            -1.0
        }
    }

    /// Stdev absorbed by this unit at a candidate build vector.
    pub fn stdev(&self, built: &[f64]) -> f64 {
        let mut sum = self.k_const;
        for &(slot, sigma) in &self.sigma {
            let v = built[slot] * sigma;
            sum += v * v;
        }
        self.alpha * sum.sqrt()
    }

    fn mean_shift(&self, built: &[f64]) -> f64 {
        let mut m = self.mean_const;
        for &(slot, c) in &self.mean_coef {
            m += c * built[slot];
        }
        m
    }

    fn rhs(&self, built: &[f64]) -> f64 {
        let mut r = self.rhs_const;
        if let Some((slot, c)) = self.rhs_own {
            r += c * built[slot];
        }
        r
    }

    /// Signed violation of the true (nonlinear) constraint; positive means
    /// violated.
    pub fn violation(&self, offer: f64, built: &[f64]) -> f64 {
        let lhs = offer + self.mean_shift(built) + self.margin_sign() * self.z * self.stdev(built);
        if self.upper {
            lhs - self.rhs(built)
        } else {
            self.rhs(built) - lhs
        }
    }

    /// Tangent of the stdev term at a build vector: value and gradient per
    /// candidate slot. The stdev is convex in the build variables, so the
    /// tangent under-estimates it and the linearized constraint relaxes the
    /// true one.
    pub fn stdev_tangent(&self, at: &[f64]) -> (f64, Vec<(usize, f64)>) {
        let s = self.stdev(at);
        if s <= 0.0 {
            return (0.0, self.sigma.iter().map(|&(slot, _)| (slot, 0.0)).collect());
        }
        let grad = self
            .sigma
            .iter()
            .map(|&(slot, sigma)| {
                (slot, self.alpha * self.alpha * at[slot] * sigma * sigma / s)
            })
            .collect();
        (s, grad)
    }

    /// The exact offer bound implied at a fixed build vector: upper
    /// constraints give a ceiling on the offer, lower ones a floor.
    pub fn offer_bound(&self, built: &[f64]) -> f64 {
        self.rhs(built) - self.mean_shift(built) - self.margin_sign() * self.z * self.stdev(built)
    }

    pub fn id(&self, inst: &Instance) -> String {
        format!(
            "{}/e{}t{}/{}",
            inst.gens[self.gen].name,
            self.day,
            self.hour,
            if self.upper { "max" } else { "min" }
        )
    }
}

/// Emits the deterministic reformulation of every chance constraint of the
/// strategic state: upper and lower output limits per controllable unit,
/// hour and day. Returns an error when the state has renewables without a
/// controllable balancer.
pub fn deterministic_generation_constraints(
    inst: &Instance,
    z: f64,
) -> Result<Vec<ChanceConstraint>, String> {
    let ctrl = inst.owned_controllables();
    let renewables = inst.owned_renewables();
    if ctrl.is_empty() {
        if renewables.is_empty() {
            return Ok(Vec::new());
        }
        return Err("strategic state has renewables but no controllable balancer".into());
    }
    let candidates = inst.candidates();
    let slot_of = |g: GenId| candidates.iter().position(|&c| c == g);

    let mut out = Vec::new();
    for &i in &ctrl {
        let gen = &inst.gens[i];
        for e in 0..inst.num_e() {
            for t in 0..inst.num_t() {
                let alpha = inst.alpha[i][t];
                // Existing renewables enter as constants.
                let mut mean_const = 0.0;
                let mut k_const = 0.0;
                let mut mean_coef = Vec::new();
                let mut sigma = Vec::new();
                for &j in &renewables {
                    let rgen = &inst.gens[j];
                    if rgen.is_existing() {
                        mean_const -= alpha * rgen.g_max * rgen.error_mean;
                        k_const += (rgen.g_max * rgen.error_stdev).powi(2);
                    } else {
                        let slot = slot_of(j).expect("candidate indexed");
                        if rgen.error_mean != 0.0 {
                            mean_coef.push((slot, -alpha * rgen.error_mean));
                        }
                        sigma.push((slot, rgen.error_stdev));
                    }
                }
                let (rhs_const, rhs_own_hi, rhs_own_lo) = if gen.is_existing() {
                    (gen.g_max, None, None)
                } else {
                    let slot = slot_of(i).expect("candidate indexed");
                    (0.0, Some((slot, 1.0)), Some((slot, gen.min_output_factor)))
                };
                out.push(ChanceConstraint {
                    gen: i,
                    day: e,
                    hour: t,
                    upper: true,
                    alpha,
                    z,
                    mean_const,
                    mean_coef: mean_coef.clone(),
                    k_const,
                    sigma: sigma.clone(),
                    rhs_const,
                    rhs_own: rhs_own_hi,
                });
                out.push(ChanceConstraint {
                    gen: i,
                    day: e,
                    hour: t,
                    upper: false,
                    alpha,
                    z,
                    mean_const,
                    mean_coef,
                    k_const,
                    sigma,
                    rhs_const: if gen.is_existing() { gen.g_min } else { 0.0 },
                    rhs_own: rhs_own_lo,
                });
            }
        }
    }
    Ok(out)
}

/// Applies the affine recourse to one hour: renewables deviate by their
/// error, controllable units absorb the state-wide total in proportion to
/// their participation factors. `offers` and `errors` are dense over all
/// generators; the returned dispatch equals the offer outside the strategic
/// state.
pub fn realize_affine(inst: &Instance, hour: usize, offers: &[f64], errors: &[f64]) -> Vec<f64> {
    let total_err: f64 = inst.owned_renewables().iter().map(|&g| errors[g]).sum();
    let mut out = offers.to_vec();
    for &g in inst.owned_gens() {
        if inst.gens[g].is_renewable() {
            out[g] = offers[g] + errors[g];
        } else {
            out[g] = offers[g] - inst.alpha[g][hour] * total_err;
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintRate {
    pub constraint: String,
    pub bound: f64,
    pub violations: usize,
    pub samples: usize,
    pub rate: f64,
    /// Wilson 99% confidence interval on the rate.
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub eta: f64,
    pub samples: usize,
    pub seed: u64,
    pub rates: Vec<ConstraintRate>,
}

impl ValidationReport {
    pub fn max_rate(&self) -> f64 {
        self.rates.iter().map(|r| r.rate).fold(0.0, f64::max)
    }
}

fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Draws Gaussian error vectors, applies the affine recourse and reports the
/// empirical violation rate of every output-limit constraint. Draw `i` uses
/// its own RNG stream derived from the seed, so the result is independent of
/// the thread count.
pub fn monte_carlo_validate(
    inst: &Instance,
    decision: &UtilityDecision,
    cfg: &StochasticConfig,
) -> ValidationReport {
    let constraints =
        deterministic_generation_constraints(inst, cfg.z).expect("validated instance");
    let renewables = inst.owned_renewables();
    // Error scale per renewable: built capacity for candidates.
    let scale: Vec<f64> = (0..inst.gens.len())
        .map(|g| {
            let gen = &inst.gens[g];
            if gen.is_candidate() {
                decision.built(inst, g)
            } else {
                gen.g_max
            }
        })
        .collect();

    let num_gens = inst.gens.len();
    let counts = parallel::map_range(cfg.samples, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(splitmix(i as u64)));
        let mut violated = vec![false; constraints.len()];
        for e in 0..inst.num_e() {
            for t in 0..inst.num_t() {
                let mut errors = vec![0.0; num_gens];
                for &j in &renewables {
                    let gen = &inst.gens[j];
                    let mean = scale[j] * gen.error_mean;
                    let sd = scale[j] * gen.error_stdev;
                    errors[j] = if sd > 0.0 {
                        Normal::new(mean, sd).unwrap().sample(&mut rng)
                    } else {
                        mean
                    };
                }
                let offers: Vec<f64> = (0..num_gens)
                    .map(|g| {
                        if inst.is_owned(g) {
                            decision.market_offer(inst, g, e, t)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let realized = realize_affine(inst, t, &offers, &errors);
                for (ci, c) in constraints.iter().enumerate() {
                    if c.day != e || c.hour != t {
                        continue;
                    }
                    let g = realized[c.gen];
                    let bound =
                        c.rhs_const + c.rhs_own.map_or(0.0, |(s, k)| k * decision.g_max[s]);
                    let bad = if c.upper { g > bound + 1e-9 } else { g < bound - 1e-9 };
                    if bad {
                        violated[ci] = true;
                    }
                }
            }
        }
        violated
    });

    let mut totals = vec![0usize; constraints.len()];
    for v in &counts {
        for (i, &b) in v.iter().enumerate() {
            if b {
                totals[i] += 1;
            }
        }
    }
    let z99 = inverse_normal_cdf(0.995).unwrap();
    let rates = constraints
        .iter()
        .zip(&totals)
        .map(|(c, &k)| {
            let (lo, hi) = wilson_interval(k, cfg.samples, z99);
            let bound = c.rhs_const
                + c.rhs_own
                    .map_or(0.0, |(s, kk)| kk * decision.g_max.get(s).copied().unwrap_or(0.0));
            ConstraintRate {
                constraint: c.id(inst),
                bound,
                violations: k,
                samples: cfg.samples,
                rate: k as f64 / cfg.samples.max(1) as f64,
                ci_low: lo,
                ci_high: hi,
            }
        })
        .collect();
    ValidationReport {
        eta: cfg.eta,
        samples: cfg.samples,
        seed: cfg.seed,
        rates,
    }
}

/// SplitMix64 step; decorrelates per-draw stream seeds.
fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn aggregate_stdev_values() {
        assert_relative_eq!(aggregate_stdev(1.0, &[100.0], &[0.1]), 10.0);
        // 0.5 * sqrt(10^2 + 40^2)
        assert_relative_eq!(
            aggregate_stdev(0.5, &[100.0, 200.0], &[0.1, 0.2]),
            20.615528128088304,
            max_relative = 1e-12
        );
        assert_eq!(aggregate_stdev(0.0, &[123.0], &[0.4]), 0.0);
    }

    #[test]
    fn affine_offsets_split_by_participation() {
        // Two controllables with alpha 0.25/0.75 absorbing a total of -8.
        let raw = crate::io::fixtures::affine_test_raw();
        let inst = crate::model::validate_instance(&raw).unwrap();
        let ng = inst.gens.len();
        let mut offers = vec![0.0; ng];
        let mut errors = vec![0.0; ng];
        for &g in &inst.owned_gens().to_vec() {
            offers[g] = 50.0;
            if inst.gens[g].is_renewable() {
                errors[g] = -8.0;
            }
        }
        let realized = realize_affine(&inst, 0, &offers, &errors);
        let ctrl = inst.owned_controllables();
        let offsets: Vec<f64> = ctrl.iter().map(|&g| realized[g] - offers[g]).collect();
        assert_relative_eq!(offsets[0], 2.0, max_relative = 1e-12);
        assert_relative_eq!(offsets[1], 6.0, max_relative = 1e-12);
        // Aggregate power is conserved for every draw with sum(alpha) = 1.
        let before: f64 = inst.owned_gens().iter().map(|&g| offers[g]).sum();
        let after: f64 = inst.owned_gens().iter().map(|&g| realized[g]).sum();
        assert!((before - after).abs() <= 1e-8 * before.abs().max(1.0));
    }

    #[test]
    fn margin_vanishes_at_eta_half() {
        let cfg = StochasticConfig::new(0.5, 1, 10).unwrap();
        assert!(cfg.z.abs() < 1e-12);
    }
}
