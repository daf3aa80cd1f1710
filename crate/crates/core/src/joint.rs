//! Joint transition probabilities of the (account, rate) pair.
//!
//! Given the marginal up-probabilities of both lattices, the four joint
//! probabilities are fixed up to one free parameter `eps`, the deviation from
//! independence. `eps` is chosen so the expected cross product of the moves
//! matches the instantaneous covariance `rho sigma_r sigma_F sqrt(R) A dt`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::AccountGrid;
use crate::rates::{MarketParams, RateLattice};

/// Entries below `-EPS_NEG` signal a regime where the matching system has
/// no admissible solution; smaller violations are rounding noise.
pub const EPS_NEG: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointTransition {
    pub p_dd: f64,
    pub p_du: f64,
    pub p_ud: f64,
    pub p_uu: f64,
}

impl JointTransition {
    /// Independent moves.
    pub fn product(p_a_up: f64, p_r_up: f64) -> Self {
        Self::with_eps(p_a_up, p_r_up, 0.0)
    }

    fn with_eps(p_a_up: f64, p_r_up: f64, eps: f64) -> Self {
        let (pad, prd) = (1.0 - p_a_up, 1.0 - p_r_up);
        Self {
            p_dd: pad * prd + eps,
            p_du: pad * p_r_up - eps,
            p_ud: p_a_up * prd - eps,
            p_uu: p_a_up * p_r_up + eps,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.p_dd, self.p_du, self.p_ud, self.p_uu]
    }

    pub fn min(&self) -> f64 {
        self.as_array().into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// What to do when the matched covariance is not attainable with
/// non-negative probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeMassPolicy {
    /// Fail with the offending node.
    Reject,
    /// Move `eps` to the nearest admissible value. Marginals stay exact; only
    /// the covariance match is relaxed.
    #[default]
    Project,
}

/// Which cross moment is matched.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceMatch {
    /// Moves measured from the current node values (uncentred cross moment).
    #[default]
    Raw,
    /// Moves measured from their conditional means, so `rho = 0` gives
    /// independence exactly.
    Centered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointOptions {
    /// Rates below `theta_star sqrt(dt)` use independent moves.
    pub theta_star: f64,
    pub policy: NegativeMassPolicy,
    pub covariance: CovarianceMatch,
}

impl JointOptions {
    /// `theta_star = min(theta, r0) / 2`.
    pub fn for_market(market: &MarketParams) -> Self {
        Self {
            theta_star: market.theta.min(market.r0) / 2.0,
            policy: NegativeMassPolicy::default(),
            covariance: CovarianceMatch::default(),
        }
    }
}

/// Inputs of one joint solve, with moves expressed relative to the current node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveSet {
    pub p_a_up: f64,
    pub p_r_up: f64,
    pub a_down: f64,
    pub a_up: f64,
    pub r_down: f64,
    pub r_up: f64,
    /// Target cross moment `rho sigma_r sigma_F sqrt(R) A dt`.
    pub target: f64,
}

/// Outcome of a solve that did not need repair, or the most negative entry
/// before repair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solved {
    pub transition: JointTransition,
    pub worst_before_repair: f64,
}

/// Closed-form solution of the moment-matching system.
pub fn solve_moves(m: &MoveSet, covariance: CovarianceMatch) -> Solved {
    let spread = (m.a_up - m.a_down) * (m.r_up - m.r_down);
    if spread == 0.0 || !spread.is_finite() {
        let t = JointTransition::product(m.p_a_up, m.p_r_up);
        return Solved {
            transition: t,
            worst_before_repair: t.min(),
        };
    }
    let eps = match covariance {
        CovarianceMatch::Raw => {
            let ea = (1.0 - m.p_a_up) * m.a_down + m.p_a_up * m.a_up;
            let er = (1.0 - m.p_r_up) * m.r_down + m.p_r_up * m.r_up;
            (m.target - ea * er) / spread
        }
        CovarianceMatch::Centered => m.target / spread,
    };
    let t = JointTransition::with_eps(m.p_a_up, m.p_r_up, eps);
    Solved {
        transition: t,
        worst_before_repair: t.min(),
    }
}

/// Admissible range for `eps` given the marginals.
fn eps_bounds(p_a_up: f64, p_r_up: f64) -> (f64, f64) {
    let (pad, prd) = (1.0 - p_a_up, 1.0 - p_r_up);
    let lo = (-(pad * prd)).max(-(p_a_up * p_r_up));
    let hi = (pad * p_r_up).min(p_a_up * prd);
    (lo, hi)
}

/// Projects a transition with negative entries back onto the admissible set
/// with the same marginals.
pub fn project(t: &JointTransition, p_a_up: f64, p_r_up: f64) -> JointTransition {
    let eps = t.p_dd - (1.0 - p_a_up) * (1.0 - p_r_up);
    let (lo, hi) = eps_bounds(p_a_up, p_r_up);
    let mut out = JointTransition::with_eps(p_a_up, p_r_up, eps.clamp(lo, hi));
    // rounding can leave -1e-17 at a bound
    for p in [&mut out.p_dd, &mut out.p_du, &mut out.p_ud, &mut out.p_uu] {
        if *p < 0.0 {
            *p = 0.0;
        }
    }
    out
}

/// Full pipeline for one node: regime choice, solve, repair or reject.
/// `node` is `(step, rate node, account node)` for error reporting.
pub fn resolve(
    m: &MoveSet,
    near_floor: bool,
    opts: &JointOptions,
    node: (usize, usize, usize),
) -> Result<JointTransition> {
    if near_floor {
        return Ok(JointTransition::product(m.p_a_up, m.p_r_up));
    }
    let solved = solve_moves(m, opts.covariance);
    if solved.worst_before_repair >= 0.0 {
        return Ok(solved.transition);
    }
    if solved.worst_before_repair < -EPS_NEG && opts.policy == NegativeMassPolicy::Reject {
        return Err(Error::NegativeProbability {
            step: node.0,
            rate_node: node.1,
            account_node: node.2,
            value: solved.worst_before_repair,
        });
    }
    Ok(project(&solved.transition, m.p_a_up, m.p_r_up))
}

/// `clamp((A(1 + R dt) - A_d) / (A_u - A_d), 0, 1)`; 1 when `A_u == A_d`.
pub fn account_up_probability(a: f64, a_down: f64, a_up: f64, r: f64, dt: f64) -> f64 {
    if a_up == a_down {
        return 1.0;
    }
    ((a * (1.0 + r * dt) - a_down) / (a_up - a_down)).clamp(0.0, 1.0)
}

/// Joint probabilities over a concrete account grid and rate lattice.
#[derive(Debug, Clone, Copy)]
pub struct JointLattice<'a> {
    pub grid: &'a AccountGrid,
    pub rates: &'a RateLattice,
    pub market: &'a MarketParams,
    pub options: JointOptions,
}

impl<'a> JointLattice<'a> {
    pub fn new(grid: &'a AccountGrid, rates: &'a RateLattice, market: &'a MarketParams) -> Self {
        Self {
            grid,
            rates,
            market,
            options: JointOptions::for_market(market),
        }
    }

    pub fn account_up_probability(&self, j: usize, i: usize, k: usize) -> Result<f64> {
        let r = self.rates.value(i, k);
        let dt = self.rates.dt();
        let (jd, ju) = self.grid.successors(j, r, dt)?;
        Ok(account_up_probability(
            self.grid.value(j),
            self.grid.value(jd),
            self.grid.value(ju),
            r,
            dt,
        ))
    }

    pub fn move_set(&self, j: usize, i: usize, k: usize) -> Result<MoveSet> {
        let dt = self.rates.dt();
        let r = self.rates.value(i, k);
        let (jd, ju) = self.grid.successors(j, r, dt)?;
        let (kd, ku) = self.rates.successors(i, k);
        let a = self.grid.value(j);
        let m = self.market;
        Ok(MoveSet {
            p_a_up: account_up_probability(a, self.grid.value(jd), self.grid.value(ju), r, dt),
            p_r_up: self.rates.up_probability(i, k),
            a_down: self.grid.value(jd) - a,
            a_up: self.grid.value(ju) - a,
            r_down: self.rates.value(i + 1, kd) - r,
            r_up: self.rates.value(i + 1, ku) - r,
            target: m.rho * m.sigma_r * m.sigma_f * r.sqrt() * a * dt,
        })
    }

    pub fn near_floor(&self, i: usize, k: usize) -> bool {
        let r = self.rates.value(i, k);
        self.rates.is_constant() || r == 0.0 || r < self.options.theta_star * self.rates.dt().sqrt()
    }

    pub fn joint_probabilities(&self, j: usize, i: usize, k: usize) -> Result<JointTransition> {
        let m = self.move_set(j, i, k)?;
        resolve(&m, self.near_floor(i, k), &self.options, (i, k, j))
    }

    /// From the empty account only the rate moves: `(p_d^R, p_u^R)`.
    pub fn zero_account_transition(&self, i: usize, k: usize) -> (f64, f64) {
        let p = self.rates.up_probability(i, k);
        (1.0 - p, p)
    }
}
