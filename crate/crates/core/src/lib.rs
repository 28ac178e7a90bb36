//! Joint design of renewable-energy incentives and time-of-use retail tariffs.
//!
//! A state regulator picks tariffs and incentives, a profit-maximizing power
//! utility responds with investment and market offers, and a wholesale market
//! clears a DC optimal power flow. The three levels are solved jointly by a
//! column-and-cut-generation loop whose master and subproblem are bilinear
//! quadratic programs (products of prices and quantities across levels).
//!
//! Crate layout:
//!
//! * [`model`] — immutable instance data, decisions, tariff/demand algebra
//! * [`stochastic`] — Gaussian forecast errors, affine recourse, chance
//!   constraint reformulation, Monte Carlo validation
//! * [`lp`] — bounded-variable simplex with dual certificates, wholesale
//!   market builders (primal and dual)
//! * [`bilinear`] — bilinear programs, alternating multi-start solver,
//!   McCormick relaxation, spatial branch and bound
//! * [`ccg`] — the outer column-and-cut-generation loop
//! * [`oracle`] — brute-force grid search over the full tri-level problem
//! * [`io`] — instance files, representative-day clustering, result export
//! * [`runner`] — solve/sweep/retire orchestration shared with the CLI

pub mod bilinear;
pub mod ccg;
pub mod io;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod parallel;
pub mod runner;
pub mod stochastic;
