//! Monte Carlo valuation of the static strategy, with optional control
//! variates, used to cross-check the lattice.
//!
//! Every path draws from its own ChaCha stream selected by the path index,
//! so runs are reproducible for a seed and successive fee evaluations reuse
//! the same scenarios.
//!
//! Under a stochastic rate the fund's log-drift uses the same trapezoidal
//! rate integral as the discount factor. The discounted fund is then a
//! product of independent mean-one lognormals, which makes the control
//! variate means below exact for the simulated scheme, not just in the limit.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::calibrate::secant;
use crate::clock::Stopwatch;
use crate::contract::{death_benefit, ContractParams};
use crate::error::{Error, Result};
use crate::health::{HealthState, Matrix7, TransitionSequence, NUM_STATES};
use crate::rates::{MarketParams, RateMode};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Paths are accumulated in fixed blocks and the block sums added in order,
/// so results do not depend on the thread count.
const BLOCK: usize = 4096;

/// Number of control variates.
const NCV: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    /// Euler steps per year for the rate; ignored with a constant rate,
    /// where the fund is sampled exactly once a year.
    pub steps_per_year: usize,
    pub seed: u64,
}

impl McConfig {
    pub fn new(paths: usize, steps_per_year: usize, seed: u64) -> Self {
        Self {
            paths,
            steps_per_year,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.paths < 2 {
            return Err(Error::domain("paths", "need at least two paths"));
        }
        if self.steps_per_year == 0 {
            return Err(Error::domain("steps_per_year", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation of the per-path estimator.
    pub std_dev: f64,
    /// Half-width of the 95% confidence interval.
    pub half_width: f64,
    pub paths: usize,
    pub seconds: f64,
}

impl McEstimate {
    fn from_moments(mean: f64, variance: f64, paths: usize, seconds: f64) -> Self {
        let std_dev = variance.max(0.0).sqrt();
        Self {
            mean,
            std_dev,
            half_width: Z95 * std_dev / (paths as f64).sqrt(),
            paths,
            seconds,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        (x - self.mean).abs() <= self.half_width
    }
}

/// Plain and control-variate estimates from the same paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McComparison {
    pub plain: McEstimate,
    pub controlled: McEstimate,
    /// Regression coefficients on the four controls.
    pub coefficients: Vec<f64>,
}

/// Per-path outputs: discounted payoff and the raw controls.
#[derive(Debug, Clone, Copy, Default)]
struct PathOutcome {
    payoff: f64,
    controls: [f64; NCV],
}

/// Running sums of the centred vector `(payoff, controls)`.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    sum: [f64; NCV + 1],
    cross: [[f64; NCV + 1]; NCV + 1],
}

impl Moments {
    fn push(&mut self, v: &[f64; NCV + 1]) {
        self.n += 1;
        for i in 0..=NCV {
            self.sum[i] += v[i];
            for j in 0..=i {
                self.cross[i][j] += v[i] * v[j];
            }
        }
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        for i in 0..=NCV {
            self.sum[i] += o.sum[i];
            for j in 0..=i {
                self.cross[i][j] += o.cross[i][j];
            }
        }
    }

    fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.n as f64
    }

    /// Unbiased sample covariance.
    fn cov(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i >= j { (i, j) } else { (j, i) };
        let n = self.n as f64;
        (self.cross[a][b] - self.sum[a] * self.sum[b] / n) / (n - 1.0)
    }
}

/// Simulation inputs that do not change with the fee.
struct Simulator<'a> {
    contract: &'a ContractParams,
    market: &'a MarketParams,
    cfg: McConfig,
    /// Cumulative rows of each year's health matrix.
    cumulative: Vec<Matrix7>,
    /// `P(death in year t)` for `t = 1..=T`, at index `t - 1`.
    death_probs: Vec<f64>,
    /// Exact means of the fee-independent controls.
    control_means: [f64; NCV],
}

impl<'a> Simulator<'a> {
    fn new(contract: &'a ContractParams, market: &'a MarketParams, cfg: McConfig) -> Result<Self> {
        contract.validate()?;
        market.validate()?;
        cfg.validate()?;
        let health = TransitionSequence::standard(contract.entry_age)?;
        let cumulative = health
            .matrices()
            .iter()
            .map(|m| {
                let mut c = *m;
                for row in c.iter_mut() {
                    let mut acc = 0.0;
                    for v in row.iter_mut() {
                        acc += *v;
                        *v = acc;
                    }
                    // guard against rows summing to 1 - 1e-16
                    row[NUM_STATES - 1] = 1.0;
                }
                c
            })
            .collect();
        let mut death_probs = Vec::with_capacity(contract.horizon());
        let mut prev = 0.0;
        for t in 1..=contract.horizon() {
            let dead = health.state_distribution(t, contract.initial_health)?[HealthState::Dead.index()];
            death_probs.push(dead - prev);
            prev = dead;
        }
        let control_means = control_means(contract, &health)?;
        Ok(Self {
            contract,
            market,
            cfg,
            cumulative,
            death_probs,
            control_means,
        })
    }

    /// Simulates one path at fee `alpha`.
    fn path(&self, index: usize, alpha: f64) -> PathOutcome {
        let c = self.contract;
        let m = self.market;
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(index as u64);

        let horizon = c.horizon();
        let cir = m.mode == RateMode::BsCir;
        let n_sub = if cir { self.cfg.steps_per_year } else { 1 };
        let dt = 1.0 / n_sub as f64;
        let sqrt_dt = dt.sqrt();
        let rho_perp = (1.0 - m.rho * m.rho).sqrt();
        let flat = c.beta * c.premium;

        let mut health = c.initial_health.index();
        let mut account = c.premium;
        let mut rate = m.r0;
        // log of the discount factor and of the discounted fund
        let mut log_disc = 0.0;
        let mut log_fund_disc = 0.0;
        let mut payoff = 0.0;
        let mut guaranteed_cash = 0.0;

        // inception: fees only
        account = (account * (1.0 - alpha) - flat).max(0.0);

        for n in 0..horizon {
            // one year of market moves
            let mut year_log_return = 0.0;
            let mut year_rate_integral = 0.0;
            if cir {
                for _ in 0..n_sub {
                    let z_r: f64 = rng.sample(StandardNormal);
                    let z_f: f64 = rng.sample(StandardNormal);
                    let r_pos = rate.max(0.0);
                    let next = rate + m.k_r * (m.theta - r_pos) * dt + m.sigma_r * r_pos.sqrt() * sqrt_dt * z_r;
                    let integral = 0.5 * (r_pos + next.max(0.0)) * dt;
                    let w = m.rho * z_r + rho_perp * z_f;
                    let shock = -0.5 * m.sigma_f * m.sigma_f * dt + m.sigma_f * sqrt_dt * w;
                    year_rate_integral += integral;
                    year_log_return += integral + shock;
                    log_fund_disc += shock;
                    rate = next;
                }
            } else {
                let z: f64 = rng.sample(StandardNormal);
                let shock = -0.5 * m.sigma_f * m.sigma_f + m.sigma_f * z;
                year_rate_integral = m.r0;
                year_log_return = m.r0 + shock;
                log_fund_disc += shock;
            }
            account *= year_log_return.exp();
            log_disc -= year_rate_integral;

            // health move over the year
            let u: f64 = rng.random();
            let row = &self.cumulative[n][health];
            health = row.iter().position(|&cum| u < cum).unwrap_or(NUM_STATES - 1);
            let t = n + 1;

            if health == HealthState::Dead.index() {
                payoff += log_disc.exp() * death_benefit(account, c.death_guarantee_amount(t));
                let fund_disc = log_fund_disc.exp() * c.premium;
                return PathOutcome {
                    payoff,
                    controls: [
                        fund_disc * (1.0 - alpha).powi(t as i32),
                        fund_disc,
                        guaranteed_cash,
                        t as f64,
                    ],
                };
            }

            // anniversary t: fees, then LTC, then the guaranteed withdrawal
            let disc = log_disc.exp();
            let g = c.guaranteed_amount(t);
            let ltc = c.ltc_payment(t, HealthState::ALL[health]);
            payoff += disc * (g + ltc);
            guaranteed_cash += g + ltc;
            account = (account * (1.0 - alpha) - flat).max(0.0);
            account = (account - ltc).max(0.0);
            account = (account - g).max(0.0);
        }
        unreachable!("the last health matrix sends every state to death")
    }

    fn moments(&self, alpha: f64) -> Moments {
        let blocks = self.cfg.paths.div_ceil(BLOCK);
        let shift = self.contract.premium;
        let means = self.control_means_at(alpha);
        let run_block = |b: usize| {
            let mut mo = Moments::default();
            for p in b * BLOCK..((b + 1) * BLOCK).min(self.cfg.paths) {
                let o = self.path(p, alpha);
                let mut v = [0.0; NCV + 1];
                v[0] = o.payoff - shift;
                for k in 0..NCV {
                    v[k + 1] = o.controls[k] - means[k];
                }
                mo.push(&v);
            }
            mo
        };
        #[cfg(feature = "parallel")]
        let parts: Vec<Moments> = {
            use rayon::prelude::*;
            (0..blocks).into_par_iter().map(run_block).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let parts: Vec<Moments> = (0..blocks).map(run_block).collect();
        let mut total = Moments::default();
        for p in &parts {
            total.merge(p);
        }
        total
    }

    /// Control means at fee `alpha`: only the first control depends on it.
    fn control_means_at(&self, alpha: f64) -> [f64; NCV] {
        let mut out = self.control_means;
        out[0] = self.fee_weighted_fund_mean(alpha);
        out
    }

    /// `P E[(1 - alpha)^tau]`: the discounted fund has unit mean given the
    /// death year, which is independent of the market.
    fn fee_weighted_fund_mean(&self, alpha: f64) -> f64 {
        let weighted: f64 = self
            .death_probs
            .iter()
            .enumerate()
            .map(|(i, p)| p * (1.0 - alpha).powi(i as i32 + 1))
            .sum();
        weighted * self.contract.premium
    }

    fn plain(&self, alpha: f64) -> McEstimate {
        let watch = Stopwatch::start();
        let mo = self.moments(alpha);
        McEstimate::from_moments(mo.mean(0) + self.contract.premium, mo.cov(0, 0), mo.n, watch.seconds())
    }

    fn compare(&self, alpha: f64) -> McComparison {
        let watch = Stopwatch::start();
        let mo = self.moments(alpha);
        let secs = watch.seconds();
        let plain = McEstimate::from_moments(mo.mean(0) + self.contract.premium, mo.cov(0, 0), mo.n, secs);

        let sxx = DMatrix::from_fn(NCV, NCV, |i, j| mo.cov(i + 1, j + 1));
        let sxy = DVector::from_fn(NCV, |i, _| mo.cov(i + 1, 0));
        // controls can be collinear (at zero fee the first two coincide)
        let scale = sxx.diagonal().max().max(f64::MIN_POSITIVE);
        let beta = sxx
            .clone()
            .svd(true, true)
            .solve(&sxy, 1e-12 * scale)
            .unwrap_or_else(|_| DVector::zeros(NCV));
        let shift: f64 = (0..NCV).map(|i| beta[i] * mo.mean(i + 1)).sum();
        let explained = beta.dot(&sxy);
        let residual = mo.cov(0, 0) - explained;
        let controlled = McEstimate::from_moments(plain.mean - shift, residual, mo.n, secs);
        McComparison {
            plain,
            controlled,
            coefficients: beta.iter().copied().collect(),
        }
    }
}

/// Exact means of the controls that do not depend on the fee: discounted
/// fund at death, guaranteed cash paid before death, and the death year.
/// Slot 0 is filled per fee.
fn control_means(c: &ContractParams, health: &TransitionSequence) -> Result<[f64; NCV]> {
    let mut fund = 0.0;
    let mut cash = 0.0;
    let mut tau = 0.0;
    let mut prev_dead = 0.0;
    for t in 1..=c.horizon() {
        let dist = health.state_distribution(t, c.initial_health)?;
        let dead = dist[HealthState::Dead.index()];
        let p_death = dead - prev_dead;
        prev_dead = dead;
        fund += p_death * c.premium;
        tau += p_death * t as f64;
        if t < c.horizon() {
            let alive = 1.0 - dead;
            cash += alive * c.guaranteed_amount(t);
            for h in HealthState::ALL.iter().filter(|h| h.is_ltc_eligible()) {
                cash += dist[h.index()] * c.ltc_payment(t, *h);
            }
        }
    }
    Ok([0.0, fund, cash, tau])
}

/// Plain Monte Carlo price of the static strategy.
pub fn simulate_price_static(contract: &ContractParams, market: &MarketParams, cfg: &McConfig) -> Result<McEstimate> {
    Ok(Simulator::new(contract, market, *cfg)?.plain(contract.alpha))
}

/// Plain and control-variate estimates from one set of paths.
pub fn simulate_price_static_cv(
    contract: &ContractParams,
    market: &MarketParams,
    cfg: &McConfig,
) -> Result<McComparison> {
    Ok(Simulator::new(contract, market, *cfg)?.compare(contract.alpha))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McFairFee {
    pub alpha: f64,
    /// 95% half-width on `alpha`, from the price half-width and the slope
    /// of price in the fee.
    pub half_width: f64,
    pub price: McEstimate,
    pub evaluations: usize,
    pub seconds: f64,
}

/// Fair fee of the static strategy by secant iteration on common random
/// numbers. `start` is the first fee tried; a close guess saves passes.
pub fn fair_fee_mc(
    contract: &ContractParams,
    market: &MarketParams,
    cfg: &McConfig,
    control_variates: bool,
    start: Option<f64>,
) -> Result<McFairFee> {
    let watch = Stopwatch::start();
    let sim = Simulator::new(contract, market, *cfg)?;
    let p = contract.premium;
    let estimate = |a: f64| {
        if control_variates {
            sim.compare(a).controlled
        } else {
            sim.plain(a)
        }
    };

    let a0 = start.unwrap_or(0.0);
    let e0 = estimate(a0);
    if a0 == 0.0 && e0.mean < p {
        return Err(Error::InfeasibleFee {
            price_at_zero: e0.mean,
            premium: p,
        });
    }
    let a1 = a0 + 0.0005;
    let mut last = (a1, estimate(a1));
    let mut prev = (a0, e0.mean);
    let mut evaluations = 2;
    let (alpha, _, n) = secant(
        |a| {
            if a != last.0 {
                prev = (last.0, last.1.mean);
                last = (a, estimate(a));
            }
            Ok(last.1.mean - p)
        },
        (a0, e0.mean - p),
        a1,
        1e-3 * crate::calibrate::BPS,
        50,
    )?;
    evaluations += n - 1;
    if alpha < 0.0 {
        let at_zero = estimate(0.0);
        return Err(Error::InfeasibleFee {
            price_at_zero: at_zero.mean,
            premium: p,
        });
    }
    let slope = (last.1.mean - prev.1) / (last.0 - prev.0);
    let half_width = if slope.is_finite() && slope != 0.0 {
        last.1.half_width / slope.abs()
    } else {
        f64::INFINITY
    };
    Ok(McFairFee {
        alpha,
        half_width,
        price: last.1,
        evaluations,
        seconds: watch.seconds(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bs() -> MarketParams {
        MarketParams::reference_bs()
    }

    #[test]
    fn reproducible_for_a_seed() {
        let c = ContractParams::reference(90, 0.06).with_alpha(0.015);
        let cfg = McConfig::new(5000, 1, 7);
        let a = simulate_price_static(&c, &bs(), &cfg).unwrap();
        let b = simulate_price_static(&c, &bs(), &cfg).unwrap();
        assert_eq!(a, McEstimate { seconds: a.seconds, ..b });
        let other = simulate_price_static(&c, &bs(), &McConfig::new(5000, 1, 8)).unwrap();
        assert_ne!(a.mean, other.mean);
    }

    #[test]
    fn controls_have_their_exact_means() {
        // each control on its own is an unbiased estimator of its mean
        let c = ContractParams::reference(80, 0.06).with_alpha(0.01);
        for market in [bs(), MarketParams::reference_cir()] {
            let sim = Simulator::new(&c, &market, McConfig::new(40_000, 12, 3)).unwrap();
            let mo = sim.moments(c.alpha);
            for k in 0..NCV {
                let se = (mo.cov(k + 1, k + 1) / mo.n as f64).sqrt();
                assert!(mo.mean(k + 1).abs() < 4.5 * se, "control {k}: {} vs se {se}", mo.mean(k + 1));
            }
        }
    }

    #[test]
    fn control_variates_shrink_the_interval() {
        let c = ContractParams::reference(75, 0.06).with_alpha(0.015);
        let cmp = simulate_price_static_cv(&c, &bs(), &McConfig::new(20_000, 1, 11)).unwrap();
        assert!(cmp.controlled.half_width < cmp.plain.half_width);
        assert!((cmp.controlled.mean - cmp.plain.mean).abs() < 2.0 * cmp.plain.half_width);
    }

    #[test]
    fn zero_volatility_matches_two_year_value() {
        // entry at 120: death in year one or at the forced date two
        let mut c = ContractParams::reference(120, 0.0).with_alpha(0.01);
        c.beta = 0.0;
        let market = MarketParams {
            sigma_f: 1e-9,
            ..bs()
        };
        let n = 20_000;
        let est = simulate_price_static(&c, &market, &McConfig::new(n, 1, 1)).unwrap();
        let a1 = 100.0 * 0.99 * 0.05f64.exp();
        let g1 = c.guaranteed_amount(1);
        let d1 = (-0.05f64).exp() * a1.max(g1);
        let a2 = (a1 * 0.99 - g1) * 0.05f64.exp();
        let d2 = (-0.05f64).exp() * g1 + (-0.1f64).exp() * a2.max(c.guaranteed_amount(2));
        let p1 = TransitionSequence::standard(120)
            .unwrap()
            .state_distribution(1, HealthState::Healthy)
            .unwrap()[HealthState::Dead.index()];
        let exact = p1 * d1 + (1.0 - p1) * d2;
        let se = (p1 * (1.0 - p1) / n as f64).sqrt() * (d1 - d2).abs();
        assert!((est.mean - exact).abs() < 4.0 * se + 1e-9, "{} vs {exact}", est.mean);
    }

    #[test]
    fn fee_interval_is_positive() {
        let c = ContractParams::reference(85, 0.06);
        let f = fair_fee_mc(&c, &bs(), &McConfig::new(20_000, 1, 5), false, Some(0.015)).unwrap();
        assert!(f.alpha > 0.0 && f.half_width > 0.0 && f.half_width.is_finite());
        // the price at the returned fee is at par within its own error
        let p = simulate_price_static(&c.with_alpha(f.alpha), &bs(), &McConfig::new(20_000, 1, 5)).unwrap();
        assert_abs_diff_eq!(p.mean, 100.0, epsilon = 1e-6);
    }

    #[test]
    fn rejects_bad_config() {
        let c = ContractParams::reference(60, 0.06);
        assert!(simulate_price_static(&c, &bs(), &McConfig::new(1, 1, 0)).is_err());
        assert!(simulate_price_static(&c, &bs(), &McConfig::new(10, 0, 0)).is_err());
    }
}
