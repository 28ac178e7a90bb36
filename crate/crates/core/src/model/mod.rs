//! Domain types shared by every other module.
//!
//! [`raw`] holds the serde-facing schema types; [`validate_instance`] turns
//! them into a frozen [`Instance`] with dense indices. Everything downstream
//! works on `Instance` and never mutates it, so instances can be shared
//! across threads freely.

mod decisions;
mod finance;
mod instance;
pub mod raw;

pub use decisions::{
    incentive_outlay, regulator_objective, renewable_energy, strategic_slot, utility_profit,
    MarketOutcome, RegulatorDecision, UtilityDecision,
};
pub use finance::{demand_from_tariff, prorate_capital, TariffError};
pub use instance::{
    validate_instance, Demand, GenKind, Generator, Instance, Line, Node, Policy, RepDaySet, Tech,
    ValidationError, ValidationErrors,
};

pub type NodeId = usize;
pub type LineId = usize;
pub type StateId = usize;
pub type GenId = usize;
