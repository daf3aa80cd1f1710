//! Run configuration. Every field has a default, and the defaults are the
//! reference contract and market, so an empty file is a valid config.

use std::fmt;
use std::path::{Path, PathBuf};

use glwb_ltc::{
    CovarianceMatch, ContractParams, DeathGuarantee, Error, FairFeeOptions, HealthState, MarketParams,
    NegativeMassPolicy, Numerics, PenaltySchedule, RateMode, RateSpacing, Strategy, StrategyKind, BPS,
};
use glwb_ltc::montecarlo::McConfig;
use serde::{Deserialize, Serialize};

/// A config problem, reported with the dotted path of the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub contract: ContractSection,
    pub market: MarketSection,
    pub numeric: NumericSection,
    pub mc: McSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractSection {
    /// Premium, also the initial account value and benefit base.
    #[serde(rename = "P")]
    pub premium: f64,
    /// Account-proportional annual fee, in basis points.
    pub alpha_bps: f64,
    /// Flat annual fee as a fraction of the premium.
    pub beta: f64,
    /// Entry age in whole years.
    pub x0: u32,
    /// Guaranteed withdrawal rate; unset means `3% + 0.1%` per year of age above 60.
    pub g: Option<f64>,
    /// Roll-up bonus when no withdrawal is taken; unset means `g + 0.5%`.
    pub b: Option<f64>,
    /// Extra LTC benefit rate paid in the disabled states.
    pub c: f64,
    /// Annual indexation of the guaranteed amounts.
    pub pi: f64,
    /// Health state code at inception, 1 to 6.
    #[serde(rename = "M0")]
    pub initial_health: u8,
    pub death_guarantee: DeathGuarantee,
    /// Surrender charge per anniversary; unset means `max(0, 8 - n)%`.
    pub penalty: Option<Vec<f64>>,
}

impl Default for ContractSection {
    fn default() -> Self {
        Self {
            premium: 100.0,
            alpha_bps: 0.0,
            beta: 0.003,
            x0: 60,
            g: None,
            b: None,
            c: 0.06,
            pi: 0.05,
            initial_health: 1,
            death_guarantee: DeathGuarantee::Indexed,
            penalty: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketSection {
    /// `bs` (constant rate `r0`) or `bs-cir`.
    pub mode: RateMode,
    /// Fund volatility per year.
    #[serde(rename = "sigma_F")]
    pub sigma_f: f64,
    /// Short-rate volatility per year.
    pub sigma_r: f64,
    /// Mean-reversion speed per year.
    pub k_r: f64,
    /// Long-run rate.
    pub theta: f64,
    /// Initial rate, also the constant rate in `bs` mode.
    pub r0: f64,
    /// Correlation of fund and rate shocks.
    pub rho: f64,
}

impl Default for MarketSection {
    fn default() -> Self {
        let m = MarketParams::reference_cir();
        Self {
            mode: m.mode,
            sigma_f: m.sigma_f,
            sigma_r: m.sigma_r,
            k_r: m.k_r,
            theta: m.theta,
            r0: m.r0,
            rho: m.rho,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericSection {
    /// Reference setup `A` to `D`; when set it replaces `N` and `f_A`.
    pub setup: Option<char>,
    /// Lattice steps per year.
    #[serde(rename = "N")]
    pub steps_per_year: usize,
    /// Account grid spans `[P / f_A, P f_A]`.
    #[serde(rename = "f_A")]
    pub f_a: f64,
    pub strategy: StrategyKind,
    /// Withdrawal controls tried by the dynamic strategies; must hold 0, 1 and 2.
    pub gamma_mesh: Vec<f64>,
    /// Fair-fee stopping tolerance, in basis points.
    pub tol_bps: f64,
    pub max_iterations: usize,
    /// Start the fair-fee search on setup `A` before the requested lattice.
    pub coarse_seed: bool,
    pub negative_mass: NegativeMassPolicy,
    pub covariance: CovarianceMatch,
    pub theta_star: Option<f64>,
    pub rate_spacing: RateSpacing,
}

impl Default for NumericSection {
    fn default() -> Self {
        Self {
            setup: None,
            steps_per_year: 100,
            f_a: 100.0,
            strategy: StrategyKind::Static,
            gamma_mesh: vec![0.0, 1.0, 2.0],
            tol_bps: 1e-3,
            max_iterations: 50,
            coarse_seed: true,
            negative_mass: NegativeMassPolicy::default(),
            covariance: CovarianceMatch::default(),
            theta_star: None,
            rate_spacing: RateSpacing::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub paths: usize,
    /// Euler steps per year for the rate (ignored in `bs` mode).
    pub steps_per_year: usize,
    pub seed: u64,
    /// Use the control-variate estimator where it is offered.
    pub cv: bool,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            paths: 1_000_000,
            steps_per_year: 50,
            seed: 1,
            cv: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Core field names to config keys.
fn contract_key(field: &str) -> &str {
    match field {
        "alpha" => "alpha_bps",
        "kappa" => "penalty",
        other => other,
    }
}

fn scoped(section: &str, e: Error) -> ConfigError {
    match e {
        Error::Domain { field, reason } => {
            let key = if section == "contract" { contract_key(field) } else { field };
            ConfigError::new(format!("{section}.{key}"), reason)
        }
        other => ConfigError::new(section, other.to_string()),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::new("config", e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn contract(&self) -> Result<ContractParams, ConfigError> {
        let s = &self.contract;
        let mut c = ContractParams::reference(s.x0, s.c);
        c.premium = s.premium;
        c.alpha = s.alpha_bps * BPS;
        c.beta = s.beta;
        if let Some(g) = s.g {
            c.g = g;
        }
        c.bonus = s.b.unwrap_or(c.g + 0.005);
        c.pi = s.pi;
        c.initial_health = HealthState::try_from(s.initial_health).map_err(|e| scoped("contract", e))?;
        c.death_guarantee = s.death_guarantee;
        if let Some(p) = &s.penalty {
            c.penalty = PenaltySchedule::Table(p.clone());
        }
        c.validate().map_err(|e| scoped("contract", e))?;
        Ok(c)
    }

    pub fn market(&self) -> Result<MarketParams, ConfigError> {
        let s = &self.market;
        let m = MarketParams {
            sigma_f: s.sigma_f,
            sigma_r: s.sigma_r,
            k_r: s.k_r,
            theta: s.theta,
            r0: s.r0,
            rho: s.rho,
            mode: s.mode,
        };
        m.validate().map_err(|e| scoped("market", e))?;
        Ok(m)
    }

    pub fn numerics(&self) -> Result<Numerics, ConfigError> {
        let s = &self.numeric;
        let mut n = match s.setup {
            Some(letter) => Numerics::setup(&self.market()?, letter).map_err(|e| scoped("numeric", e))?,
            None => Numerics::new(s.steps_per_year, s.f_a),
        };
        if n.steps_per_year == 0 {
            return Err(ConfigError::new("numeric.N", "must be at least 1"));
        }
        if !(n.f_a.is_finite() && n.f_a > 1.0) {
            return Err(ConfigError::new("numeric.f_A", format!("must exceed 1, got {}", n.f_a)));
        }
        if let Some(t) = s.theta_star {
            if !(t.is_finite() && t >= 0.0) {
                return Err(ConfigError::new("numeric.theta_star", "must be non-negative"));
            }
        }
        n.negative_mass = s.negative_mass;
        n.covariance = s.covariance;
        n.theta_star = s.theta_star;
        n.rate_spacing = s.rate_spacing;
        Ok(n)
    }

    pub fn strategy(&self) -> Result<Strategy, ConfigError> {
        let s = &self.numeric;
        Strategy::with_mesh(s.strategy, s.gamma_mesh.clone()).map_err(|e| scoped("numeric", e))
    }

    pub fn fair_fee_options(&self) -> Result<FairFeeOptions, ConfigError> {
        let s = &self.numeric;
        if !(s.tol_bps.is_finite() && s.tol_bps > 0.0) {
            return Err(ConfigError::new("numeric.tol_bps", "must be positive"));
        }
        if s.max_iterations == 0 {
            return Err(ConfigError::new("numeric.max_iterations", "must be at least 1"));
        }
        let base = if s.coarse_seed {
            FairFeeOptions::seeded(&self.market()?)
        } else {
            FairFeeOptions::default()
        };
        Ok(FairFeeOptions {
            tol_bps: s.tol_bps,
            max_iterations: s.max_iterations,
            ..base
        })
    }

    pub fn mc_config(&self) -> Result<McConfig, ConfigError> {
        let s = &self.mc;
        if s.paths < 2 {
            return Err(ConfigError::new("mc.paths", "need at least two paths"));
        }
        if s.steps_per_year == 0 {
            return Err(ConfigError::new("mc.steps_per_year", "must be at least 1"));
        }
        Ok(McConfig::new(s.paths, s.steps_per_year, s.seed))
    }

    /// Checks every section up front so a bad key fails before any work.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.contract()?;
        self.market()?;
        self.numerics()?;
        self.strategy()?;
        self.fair_fee_options()?;
        self.mc_config()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_terms() {
        let cfg = RunConfig::parse("").unwrap();
        let c = cfg.contract().unwrap();
        assert_eq!(c, ContractParams::reference(60, 0.06));
        assert_eq!(cfg.market().unwrap(), MarketParams::reference_cir());
        assert_eq!(c.bonus, c.g + 0.005);
    }

    #[test]
    fn errors_name_the_key() {
        let cfg = RunConfig::parse("[market]\nsigma_F = -0.2\n").unwrap();
        assert_eq!(cfg.validate().unwrap_err().field, "market.sigma_F");
        let cfg = RunConfig::parse("[contract]\nalpha_bps = 20000\n").unwrap();
        assert_eq!(cfg.validate().unwrap_err().field, "contract.alpha_bps");
        let cfg = RunConfig::parse("[numeric]\nf_A = 0.5\n").unwrap();
        assert_eq!(cfg.validate().unwrap_err().field, "numeric.f_A");
        assert!(RunConfig::parse("[market]\nsigma = 1\n").is_err());
    }

    #[test]
    fn setup_overrides_resolution() {
        let cfg = RunConfig::parse("[market]\nmode = \"bs\"\n[numeric]\nsetup = 'B'\nN = 7\n").unwrap();
        let n = cfg.numerics().unwrap();
        assert_eq!((n.steps_per_year, n.f_a), (200, 200.0));
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.contract.g = Some(0.04);
        cfg.contract.penalty = Some(vec![0.05, 0.02]);
        let back = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }
}
