//! Small programmatic instances used by unit tests across the crate. The
//! shipped desk-scale fixtures live as JSON files under `fixtures/` at the
//! repository root.

use crate::model::raw::*;
use std::collections::BTreeMap;

fn gen(
    id: &str,
    node: &str,
    kind: &str,
    tech: &str,
    cost_energy: f64,
) -> RawGenerator {
    RawGenerator {
        id: id.into(),
        node: node.into(),
        kind: kind.into(),
        tech: tech.into(),
        fuel: String::new(),
        g_min: 0.0,
        g_max: 0.0,
        max_build: 0.0,
        ramp_down: 0.0,
        ramp_up: 0.0,
        min_output_factor: 0.0,
        cost_energy,
        cost_invest: 0.0,
        forecast: None,
        error_mean: 0.0,
        error_stdev: 0.0,
    }
}

/// Two nodes, one line, a cheap unit at node 1 and an expensive strategic
/// unit at node 2; used by the market and LP tests.
pub fn lp_test_raw() -> RawInstance {
    let mut cheap = gen("cheap", "n1", "existing", "controllable", 10.0);
    cheap.g_max = 100.0;
    cheap.ramp_down = -100.0;
    cheap.ramp_up = 100.0;
    cheap.fuel = "gas".into();
    let mut dear = gen("dear", "n2", "existing", "controllable", 30.0);
    dear.g_max = 100.0;
    dear.ramp_down = -100.0;
    dear.ramp_up = 100.0;
    dear.fuel = "gas".into();
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
            interface_limits: [("n2".to_string(), 200.0)].into_iter().collect(),
        },
        generators: vec![cheap, dear],
        demand: RawDemand {
            slope: 0.25,
            m_scale: 0.25,
            m_offset: 20.0,
            inflexible: Some(
                [
                    ("n1".to_string(), vec![vec![0.0]]),
                    ("n2".to_string(), vec![vec![120.0]]),
                ]
                .into_iter()
                .collect(),
            ),
            m_values: None,
            dr_offset: None,
        },
        repdays: Some(RawRepDays {
            weights: vec![1.0],
            hours: 1,
            hour_labels: None,
        }),
        series: None,
        policy: RawPolicy {
            strategic_state: "B".into(),
            rps: BTreeMap::new(),
            budget: BTreeMap::new(),
            peak_hours: vec![0],
            eta: 0.03,
            epsilon: 1e-3,
            horizon_years: 10,
            discount_rate: 0.05,
            participation: None,
        },
    }
}

/// One strategic node with a renewable unit and two controllable balancers
/// with participation factors 0.25 and 0.75.
pub fn affine_test_raw() -> RawInstance {
    let mut wind = gen("wind", "n1", "existing", "renewable", 1.1);
    wind.g_max = 100.0;
    wind.error_stdev = 0.1;
    wind.forecast = Some(vec![vec![0.5]]);
    wind.fuel = "wind".into();
    let mut c1 = gen("c1", "n1", "existing", "controllable", 20.0);
    c1.g_max = 150.0;
    c1.ramp_down = -150.0;
    c1.ramp_up = 150.0;
    let mut c2 = gen("c2", "n1", "existing", "controllable", 25.0);
    c2.g_max = 150.0;
    c2.ramp_down = -150.0;
    c2.ramp_up = 150.0;
    RawInstance {
        version: 1,
        network: RawNetwork {
            nodes: vec![RawNode { id: "n1".into(), state: "A".into() }],
            lines: vec![],
            interface_limits: BTreeMap::new(),
        },
        generators: vec![wind, c1, c2],
        demand: RawDemand {
            slope: 0.25,
            m_scale: 0.25,
            m_offset: 20.0,
            inflexible: Some([("n1".to_string(), vec![vec![100.0]])].into_iter().collect()),
            m_values: None,
            dr_offset: None,
        },
        repdays: Some(RawRepDays {
            weights: vec![1.0],
            hours: 1,
            hour_labels: None,
        }),
        series: None,
        policy: RawPolicy {
            strategic_state: "A".into(),
            rps: BTreeMap::new(),
            budget: BTreeMap::new(),
            peak_hours: vec![0],
            eta: 0.03,
            epsilon: 1e-3,
            horizon_years: 10,
            discount_rate: 0.05,
            participation: Some(
                [
                    ("c1".to_string(), vec![0.25]),
                    ("c2".to_string(), vec![0.75]),
                ]
                .into_iter()
                .collect(),
            ),
        },
    }
}

/// Strategic state with one candidate renewable and one controllable unit;
/// exercises chance constraints with a variable build.
pub fn chance_test_raw(eta: f64) -> RawInstance {
    let mut raw = affine_test_raw();
    raw.generators.remove(2);
    raw.policy.participation = None;
    raw.policy.eta = eta;
    let mut wind_new = gen("windnew", "n1", "candidate", "renewable", 1.1);
    wind_new.max_build = 150.0;
    wind_new.cost_invest = 250_000.0;
    wind_new.error_stdev = 0.2;
    wind_new.forecast = Some(vec![vec![0.4]]);
    wind_new.fuel = "wind".into();
    raw.generators.push(wind_new);
    raw
}
