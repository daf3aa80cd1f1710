//! Contract terms and the cash-flow rules applied at each anniversary.
//!
//! Everything here is expressed with the benefit base pinned at the premium,
//! which is exact because every cash flow is homogeneous of degree one in
//! (account, benefit base).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::health::HealthState;

/// Surrender charge applied to the excess part of a withdrawal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "values")]
pub enum PenaltySchedule {
    /// `0.01 * max(0, 8 - n)`.
    Declining,
    /// Explicit per-anniversary charges; zero after the last entry.
    Table(Vec<f64>),
}

impl PenaltySchedule {
    pub fn kappa(&self, n: usize) -> f64 {
        match self {
            PenaltySchedule::Declining => 0.01 * (8usize.saturating_sub(n)) as f64,
            PenaltySchedule::Table(v) => v.get(n).copied().unwrap_or(0.0),
        }
    }
}

/// Guaranteed part of the death benefit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeathGuarantee {
    /// `G_tau = g (1 + pi)^tau P`, consistent with the maturity condition.
    #[default]
    Indexed,
    /// `g P` without inflation indexation.
    Unindexed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractParams {
    #[serde(rename = "P")]
    pub premium: f64,
    pub alpha: f64,
    pub beta: f64,
    pub entry_age: u32,
    pub g: f64,
    pub c: f64,
    pub pi: f64,
    #[serde(rename = "b")]
    pub bonus: f64,
    pub penalty: PenaltySchedule,
    pub initial_health: HealthState,
    pub death_guarantee: DeathGuarantee,
}

impl ContractParams {
    /// Reference terms for entry age `x0` and LTC rate `c`: the guaranteed
    /// rate rises 10 bps per year of age above 60 and the bonus is 50 bps
    /// above it.
    pub fn reference(entry_age: u32, c: f64) -> Self {
        let g = 0.03 + (entry_age as f64 - 60.0) * 0.001;
        Self {
            premium: 100.0,
            alpha: 0.0,
            beta: 0.003,
            entry_age,
            g,
            c,
            pi: 0.05,
            bonus: g + 0.005,
            penalty: PenaltySchedule::Declining,
            initial_health: HealthState::Healthy,
            death_guarantee: DeathGuarantee::Indexed,
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        Self {
            alpha,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |field: &'static str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::domain(field, format!("must be non-negative, got {v}")))
            }
        };
        if !(self.premium.is_finite() && self.premium > 0.0) {
            return Err(Error::domain("P", format!("must be positive, got {}", self.premium)));
        }
        nonneg("alpha", self.alpha)?;
        nonneg("beta", self.beta)?;
        nonneg("g", self.g)?;
        nonneg("c", self.c)?;
        nonneg("pi", self.pi)?;
        nonneg("b", self.bonus)?;
        if self.alpha >= 1.0 {
            return Err(Error::domain("alpha", "fee rate must be below 1"));
        }
        if self.entry_age >= crate::health::MAX_AGE {
            return Err(Error::domain("x0", format!("entry age {} reaches the age cap", self.entry_age)));
        }
        if !self.initial_health.is_alive() {
            return Err(Error::domain("M0", "initial health state must be alive"));
        }
        if let PenaltySchedule::Table(v) = &self.penalty {
            if v.iter().any(|k| !(0.0..=1.0).contains(k)) {
                return Err(Error::domain("kappa", "penalties must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        (crate::health::MAX_AGE - self.entry_age) as usize
    }

    pub fn kappa(&self, n: usize) -> f64 {
        self.penalty.kappa(n)
    }

    fn indexation(&self, n: usize) -> f64 {
        (1.0 + self.pi).powi(n as i32)
    }

    /// Account after fees: `max(A - alpha A - beta P, 0)`.
    pub fn fee_step(&self, a_minus: f64) -> f64 {
        (a_minus - self.alpha * a_minus - self.beta * self.premium).max(0.0)
    }

    /// LTC benefit at anniversary `n`; nothing at inception or outside the
    /// covered states.
    pub fn ltc_payment(&self, n: usize, h: HealthState) -> f64 {
        if n == 0 || !h.is_ltc_eligible() {
            0.0
        } else {
            self.c * self.premium * self.indexation(n)
        }
    }

    /// `G_n = g (1 + pi)^n P`.
    pub fn guaranteed_amount(&self, n: usize) -> f64 {
        self.g * self.indexation(n) * self.premium
    }

    /// Guaranteed component of the death benefit paid at anniversary `n`.
    pub fn death_guarantee_amount(&self, n: usize) -> f64 {
        match self.death_guarantee {
            DeathGuarantee::Indexed => self.guaranteed_amount(n),
            DeathGuarantee::Unindexed => self.g * self.premium,
        }
    }
}

/// Result of a withdrawal decision at one anniversary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnniversaryOutcome {
    pub a_after: f64,
    /// Multiplier on the benefit base.
    pub b_factor: f64,
    /// Nominal withdrawal.
    pub w: f64,
    /// Cash received after the surrender charge.
    pub y: f64,
    pub lapsed: bool,
}

/// Applies withdrawal control `gamma` to account `a2` with guaranteed amount
/// `g_n`, surrender charge `kappa` and bonus rate `bonus`.
pub fn apply_withdrawal(gamma: f64, a2: f64, g_n: f64, kappa: f64, bonus: f64) -> Result<AnniversaryOutcome> {
    if !(0.0..=2.0).contains(&gamma) {
        return Err(Error::domain("gamma", format!("must lie in [0, 2], got {gamma}")));
    }
    Ok(if gamma == 0.0 {
        AnniversaryOutcome {
            a_after: a2,
            b_factor: 1.0 + bonus,
            w: 0.0,
            y: 0.0,
            lapsed: false,
        }
    } else if gamma <= 1.0 {
        let w = gamma * g_n;
        AnniversaryOutcome {
            a_after: (a2 - w).max(0.0),
            b_factor: 1.0,
            w,
            y: w,
            lapsed: false,
        }
    } else {
        let w = (2.0 - gamma) * g_n + (gamma - 1.0) * a2;
        let y = g_n + (w - g_n) * (1.0 - kappa);
        let lapsed = gamma == 2.0;
        AnniversaryOutcome {
            a_after: if lapsed { 0.0 } else { (a2 - w).max(0.0) },
            b_factor: 2.0 - gamma,
            w,
            y,
            lapsed,
        }
    })
}

/// `G + max(0, A - G)`.
pub fn death_benefit(a_minus: f64, g_tau: f64) -> f64 {
    g_tau + (a_minus - g_tau).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn h(code: u8) -> HealthState {
        HealthState::from_code(code).unwrap()
    }

    #[test]
    fn fees() {
        let mut p = ContractParams::reference(60, 0.06);
        p.alpha = 0.01;
        assert_abs_diff_eq!(p.fee_step(100.0), 98.7, epsilon = 1e-12);
        assert_eq!(p.fee_step(0.0), 0.0);
        p.alpha = 0.0;
        assert_eq!(p.fee_step(0.2), 0.0);
    }

    #[test]
    fn ltc() {
        let p = ContractParams::reference(60, 0.06);
        assert_abs_diff_eq!(p.ltc_payment(2, h(4)), 6.615, epsilon = 1e-12);
        for n in 0..10 {
            assert_eq!(p.ltc_payment(n, h(2)), 0.0);
            assert_eq!(p.ltc_payment(n, h(7)), 0.0);
        }
        assert_eq!(p.ltc_payment(0, h(5)), 0.0);
        assert_eq!(p.ltc_payment(3, h(6)), p.ltc_payment(3, h(4)));
    }

    #[test]
    fn guarantee_and_reference_terms() {
        let p = ContractParams::reference(60, 0.06);
        assert_abs_diff_eq!(p.guaranteed_amount(1), 3.15, epsilon = 1e-12);
        let flat = ContractParams { pi: 0.0, ..p.clone() };
        assert_eq!(flat.guaranteed_amount(1), flat.guaranteed_amount(30));
        let p70 = ContractParams::reference(70, 0.0);
        assert_abs_diff_eq!(p70.g, 0.04, epsilon = 1e-15);
        assert_abs_diff_eq!(p70.bonus, 0.045, epsilon = 1e-15);
        assert_eq!(p.horizon(), 62);
        assert_abs_diff_eq!(p.kappa(0), 0.08, epsilon = 1e-15);
        assert_abs_diff_eq!(p.kappa(7), 0.01, epsilon = 1e-15);
        assert_eq!(p.kappa(8), 0.0);
        assert_eq!(p.kappa(40), 0.0);
        let unindexed = ContractParams {
            death_guarantee: DeathGuarantee::Unindexed,
            ..p.clone()
        };
        assert_abs_diff_eq!(unindexed.death_guarantee_amount(5), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.death_guarantee_amount(5), p.guaranteed_amount(5), epsilon = 0.0);
    }

    #[test]
    fn withdrawal_examples() {
        let o = apply_withdrawal(1.0, 80.0, 5.0, 0.0, 0.035).unwrap();
        assert_eq!((o.w, o.y, o.a_after, o.b_factor, o.lapsed), (5.0, 5.0, 75.0, 1.0, false));
        let o = apply_withdrawal(2.0, 80.0, 5.0, 0.03, 0.035).unwrap();
        assert_abs_diff_eq!(o.w, 80.0, epsilon = 1e-12);
        assert_abs_diff_eq!(o.y, 77.75, epsilon = 1e-12);
        assert_eq!(o.a_after, 0.0);
        assert_eq!(o.b_factor, 0.0);
        assert!(o.lapsed);
        let o = apply_withdrawal(0.0, 80.0, 5.0, 0.03, 0.035).unwrap();
        assert_eq!((o.y, o.w, o.a_after), (0.0, 0.0, 80.0));
        assert_abs_diff_eq!(o.b_factor, 1.035, epsilon = 1e-15);
        assert!(apply_withdrawal(2.1, 80.0, 5.0, 0.0, 0.0).is_err());
        assert!(apply_withdrawal(-0.1, 80.0, 5.0, 0.0, 0.0).is_err());
        // a shortfall below G is still paid in full
        let o = apply_withdrawal(1.0, 3.0, 5.0, 0.0, 0.0).unwrap();
        assert_eq!((o.y, o.a_after), (5.0, 0.0));
    }

    #[test]
    fn death_benefit_examples() {
        assert_eq!(death_benefit(120.0, 5.0), 120.0);
        assert_eq!(death_benefit(3.0, 5.0), 5.0);
        assert_eq!(death_benefit(5.0, 5.0), 5.0);
    }

    #[test]
    fn validation() {
        assert!(ContractParams::reference(60, 0.06).validate().is_ok());
        let bad = ContractParams {
            beta: -0.1,
            ..ContractParams::reference(60, 0.06)
        };
        assert!(matches!(bad.validate(), Err(Error::Domain { field: "beta", .. })));
        let dead = ContractParams {
            initial_health: HealthState::Dead,
            ..ContractParams::reference(60, 0.06)
        };
        assert!(dead.validate().is_err());
    }

    proptest! {
        #[test]
        fn received_cash_monotone(a2 in 0.0f64..500.0, g in 0.0f64..20.0, kappa in 0.0f64..0.99) {
            let mut prev = f64::NEG_INFINITY;
            for step in 1..=200 {
                let gamma = step as f64 / 100.0;
                let o = apply_withdrawal(gamma, a2, g, kappa, 0.03).unwrap();
                prop_assert!(o.a_after >= 0.0);
                if gamma <= 1.0 {
                    prop_assert_eq!(o.y, o.w);
                }
                // past gamma = 1 cash grows with gamma only while the account covers G
                if gamma <= 1.0 || a2 >= g {
                    prop_assert!(o.y >= prev - 1e-12);
                }
                prev = o.y;
            }
        }

        #[test]
        fn branch_boundary_at_one(a2 in 0.0f64..500.0, g in 0.0f64..20.0, kappa in 0.0f64..1.0) {
            let at_one = apply_withdrawal(1.0, a2, g, kappa, 0.03).unwrap();
            let just_above = apply_withdrawal(1.0 + 1e-12, a2, g, kappa, 0.03).unwrap();
            prop_assert!((at_one.y - just_above.y).abs() < 1e-9);
            prop_assert!((at_one.a_after - just_above.a_after).abs() < 1e-9);
        }

        #[test]
        fn no_penalty_means_full_cash(a2 in 0.0f64..500.0, g in 0.0f64..20.0, gamma in 0.0f64..=2.0) {
            let o = apply_withdrawal(gamma, a2, g, 0.0, 0.03).unwrap();
            prop_assert!((o.y - o.w).abs() < 1e-12);
        }

        #[test]
        fn homogeneous_of_degree_one(a2 in 0.0f64..500.0, g in 0.0f64..20.0, gamma in 0.0f64..=2.0, eta in 0.1f64..10.0) {
            let base = apply_withdrawal(gamma, a2, g, 0.05, 0.03).unwrap();
            let scaled = apply_withdrawal(gamma, eta * a2, eta * g, 0.05, 0.03).unwrap();
            prop_assert!((scaled.w - eta * base.w).abs() < 1e-9 * (1.0 + scaled.w.abs()));
            prop_assert!((scaled.y - eta * base.y).abs() < 1e-9 * (1.0 + scaled.y.abs()));
            prop_assert!((scaled.a_after - eta * base.a_after).abs() < 1e-9 * (1.0 + scaled.a_after));
            prop_assert_eq!(scaled.b_factor, base.b_factor);
        }
    }
}
