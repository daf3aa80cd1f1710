//! Pricing of guaranteed lifetime withdrawal benefits bundled with long-term
//! care cover.
//!
//! The account is invested in a lognormal fund, the short rate is either
//! constant or follows a square-root diffusion, and the policyholder moves
//! through a seven-state health chain. [`pricer`] values the contract by
//! backward induction on a recombining lattice; [`montecarlo`] simulates the
//! static strategy as a cross-check. Fair fees come from [`calibrate`].

pub mod calibrate;
pub mod contract;
pub mod error;
pub mod grid;
pub mod health;
pub mod joint;
pub mod montecarlo;
pub mod pricer;
pub mod rates;

pub use calibrate::{fair_fee, sweep, FairFee, FairFeeOptions, SweepAxis, SweepRow, BPS};
pub use contract::{ContractParams, DeathGuarantee, PenaltySchedule};
pub use error::{Error, Result};
pub use health::{HealthState, IntensityTable, TransitionSequence};
pub use joint::{CovarianceMatch, NegativeMassPolicy};
pub use pricer::{
    optimal_action_map, price, ActionMap, Diagnostics, Numerics, PricingResult, Strategy, StrategyKind,
    TreeModel,
};
pub use rates::{MarketParams, RateLattice, RateMode, RateSpacing};

pub(crate) mod clock {
    /// Wall-clock timer; reads zero where no monotonic clock exists.
    pub struct Stopwatch {
        #[cfg(not(target_arch = "wasm32"))]
        start: std::time::Instant,
    }

    impl Stopwatch {
        pub fn start() -> Self {
            Self {
                #[cfg(not(target_arch = "wasm32"))]
                start: std::time::Instant::now(),
            }
        }

        pub fn seconds(&self) -> f64 {
            #[cfg(not(target_arch = "wasm32"))]
            {
                self.start.elapsed().as_secs_f64()
            }
            #[cfg(target_arch = "wasm32")]
            {
                0.0
            }
        }
    }
}
