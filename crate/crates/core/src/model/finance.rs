//! Capital proration and the closed-form demand curve.

use thiserror::Error;

/// Prorates a capital cost ($/MW) to a daily charge ($/MW-day): the annual
/// annuity over `years` at `rate`, divided by 365. A zero rate degenerates to
/// straight-line recovery.
pub fn prorate_capital(cost_invest: f64, years: u32, rate: f64) -> f64 {
    assert!(years >= 1, "recovery period must be at least one year");
    assert!(rate >= 0.0, "discount rate must be non-negative");
    let annual = if rate == 0.0 {
        cost_invest / years as f64
    } else {
        cost_invest * rate / (1.0 - (1.0 + rate).powi(-(years as i32)))
    };
    annual / 365.0
}

#[derive(Debug, Error, PartialEq)]
pub enum TariffError {
    #[error("tariff {pi} plus offset {dpi} exceeds the marginal utility intercept {m}")]
    OutsideSupport { m: f64, pi: f64, dpi: f64 },
}

/// Flexible demand induced by a tariff: d = (M - pi - dpi) / N, clamped to
/// [0, M/N]. Errors when the effective price exceeds M, which would request
/// negative demand.
pub fn demand_from_tariff(m: f64, n_slope: f64, pi: f64, dpi: f64) -> Result<f64, TariffError> {
    assert!(n_slope > 0.0, "demand slope must be positive");
    if pi + dpi > m {
        return Err(TariffError::OutsideSupport { m, pi, dpi });
    }
    Ok(((m - pi - dpi) / n_slope).clamp(0.0, m / n_slope))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Independent amortization: present value of a daily payment stream x
    /// over the horizon must recover the principal.
    fn present_value_of_daily(x: f64, years: u32, rate: f64) -> f64 {
        let annual_payment = x * 365.0;
        let mut pv = 0.0;
        for y in 1..=years {
            pv += annual_payment / (1.0 + rate).powi(y as i32);
        }
        pv
    }

    #[test]
    fn wind_capital_table_value() {
        // 1,630,000 $/MW over 10 years at 5%.
        let daily = prorate_capital(1_630_000.0, 10, 0.05);
        assert_relative_eq!(daily, 578.3355, epsilon = 5e-4);
        assert_relative_eq!(
            present_value_of_daily(daily, 10, 0.05),
            1_630_000.0,
            max_relative = 1e-9
        );
    }

    #[test]
    fn gas_capital_table_value() {
        let daily = prorate_capital(895_000.0, 10, 0.05);
        assert_relative_eq!(daily, 317.5524, epsilon = 5e-4);
        assert_relative_eq!(
            present_value_of_daily(daily, 10, 0.05),
            895_000.0,
            max_relative = 1e-9
        );
    }

    #[test]
    fn zero_rate_is_straight_line() {
        assert_relative_eq!(prorate_capital(730.0, 1, 0.0), 2.0);
        let x = 123_456.0;
        assert_relative_eq!(prorate_capital(x, 1, 0.0), x / 365.0);
    }

    #[test]
    fn demand_curve_values() {
        // M derived from M = 0.25 D + 20 with D = 100.
        assert_eq!(demand_from_tariff(45.0, 0.25, 45.0, 0.0).unwrap(), 0.0);
        assert_eq!(demand_from_tariff(45.0, 0.25, 25.0, 0.0).unwrap(), 80.0);
        // Demand-response offset shifts the tariff one-for-one.
        assert_eq!(demand_from_tariff(45.0, 0.25, 20.0, 5.0).unwrap(), 80.0);
        assert!(demand_from_tariff(45.0, 0.25, 50.0, 0.0).is_err());
    }

    #[test]
    fn demand_is_strictly_decreasing_and_caps_at_zero_price() {
        let (m, n) = (45.0, 0.25);
        assert_eq!(demand_from_tariff(m, n, 0.0, 0.0).unwrap(), m / n);
        let mut last = f64::INFINITY;
        for k in 0..=45 {
            let d = demand_from_tariff(m, n, k as f64, 0.0).unwrap();
            assert!(d < last);
            last = d;
        }
    }
}
