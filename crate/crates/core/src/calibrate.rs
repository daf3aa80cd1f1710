//! Fair-fee search and parameter sweeps.

use serde::{Deserialize, Serialize};

use crate::clock::Stopwatch;
use crate::contract::ContractParams;
use crate::error::{Error, Result};
use crate::pricer::{Numerics, Strategy, TreeModel};
use crate::rates::MarketParams;

/// One basis point.
pub const BPS: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairFeeOptions {
    /// Stop once successive fee iterates differ by less than this (in bps).
    pub tol_bps: f64,
    pub max_iterations: usize,
    /// Seed the search on a cheaper lattice first. `None` searches directly
    /// on the requested lattice.
    pub coarse: Option<Numerics>,
}

impl Default for FairFeeOptions {
    fn default() -> Self {
        Self {
            tol_bps: 1e-3,
            max_iterations: 50,
            coarse: None,
        }
    }
}

impl FairFeeOptions {
    /// Default tolerances with the cheapest reference lattice as seed.
    pub fn seeded(market: &MarketParams) -> Self {
        Self {
            coarse: Some(Numerics::coarse_for(market)),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairFee {
    /// Fee rate solving `price(alpha) = P`.
    pub alpha: f64,
    /// `price - P` at the last evaluated fee.
    pub residual: f64,
    /// Contract value at zero fee (only when evaluated, i.e. on the first stage).
    pub price_at_zero: f64,
    /// Pricings on the requested lattice.
    pub evaluations: usize,
    pub seconds: f64,
}

impl FairFee {
    pub fn alpha_bps(&self) -> f64 {
        self.alpha / BPS
    }
}

/// Secant iterations from two evaluated points. Returns the root estimate,
/// the residual at the last evaluation and the evaluation count.
pub fn secant(
    mut f: impl FnMut(f64) -> Result<f64>,
    (mut x0, mut f0): (f64, f64),
    mut x1: f64,
    tol: f64,
    max_iterations: usize,
) -> Result<(f64, f64, usize)> {
    let mut f1 = f(x1)?;
    let mut evals = 1;
    for _ in 0..max_iterations {
        if f1 == 0.0 {
            return Ok((x1, f1, evals));
        }
        if f1 == f0 || !f1.is_finite() {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        if (x2 - x1).abs() < tol {
            return Ok((x2, f1, evals));
        }
        (x0, f0) = (x1, f1);
        x1 = x2;
        f1 = f(x1)?;
        evals += 1;
    }
    Err(Error::NoConvergence {
        iterations: evals,
        alpha: x1,
        residual: f1,
    })
}

/// Fee at which the contract is worth its premium under `strategy`.
pub fn fair_fee(
    contract: &ContractParams,
    market: &MarketParams,
    strategy: &Strategy,
    numerics: &Numerics,
    opts: &FairFeeOptions,
) -> Result<FairFee> {
    let watch = Stopwatch::start();
    let fine = TreeModel::new(contract, market, numerics)?;
    let coarse = match opts.coarse {
        Some(c) if c != *numerics => Some(TreeModel::new(contract, market, &c)?),
        _ => None,
    };
    let mut out = fair_fee_on(&fine, coarse.as_ref(), contract, strategy, opts)?;
    out.seconds = watch.seconds();
    Ok(out)
}

/// Same as [`fair_fee`] with prebuilt lattices.
pub fn fair_fee_on(
    fine: &TreeModel,
    coarse: Option<&TreeModel>,
    contract: &ContractParams,
    strategy: &Strategy,
    opts: &FairFeeOptions,
) -> Result<FairFee> {
    let watch = Stopwatch::start();
    let p = contract.premium;
    let tol = opts.tol_bps * BPS;
    let excess = |m: &TreeModel, a: f64| -> Result<f64> {
        Ok(m.price(&contract.with_alpha(a), strategy)?.price - p)
    };

    let first = coarse.unwrap_or(fine);
    let f_zero = excess(first, 0.0)?;
    if f_zero < 0.0 {
        return Err(Error::InfeasibleFee {
            price_at_zero: f_zero + p,
            premium: p,
        });
    }
    let mut evaluations = usize::from(coarse.is_none());
    let (alpha, residual, n) = secant(|a| excess(first, a), (0.0, f_zero), 0.01, tol, opts.max_iterations)?;
    if coarse.is_none() {
        evaluations += n;
        return Ok(FairFee {
            alpha,
            residual,
            price_at_zero: f_zero + p,
            evaluations,
            seconds: watch.seconds(),
        });
    }

    // the fine lattice moves the root by a fraction of a basis point
    let f_seed = excess(fine, alpha)?;
    let probe = alpha + if f_seed > 0.0 { 0.1 * BPS } else { -0.1 * BPS };
    let (alpha, residual, n) = secant(|a| excess(fine, a), (alpha, f_seed), probe, tol, opts.max_iterations)?;
    Ok(FairFee {
        alpha,
        residual,
        price_at_zero: f_zero + p,
        evaluations: 1 + n,
        seconds: watch.seconds(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Entry age; guaranteed rate and bonus follow the reference age rule.
    EntryAge,
    SigmaR,
    SigmaF,
    Rho,
    /// LTC benefit rate.
    C,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "entry-age" | "x0" => Ok(Self::EntryAge),
            "sigma-r" | "sigma_r" => Ok(Self::SigmaR),
            "sigma-f" | "sigma_F" => Ok(Self::SigmaF),
            "rho" => Ok(Self::Rho),
            "c" => Ok(Self::C),
            other => Err(Error::domain("axis", format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub alpha: Option<f64>,
    pub error: Option<String>,
    pub seconds: f64,
}

fn apply_axis(
    axis: SweepAxis,
    value: f64,
    contract: &ContractParams,
    market: &MarketParams,
) -> Result<(ContractParams, MarketParams)> {
    let mut c = contract.clone();
    let mut m = *market;
    match axis {
        SweepAxis::EntryAge => {
            if value.fract() != 0.0 || value < 0.0 {
                return Err(Error::domain("x0", format!("entry age must be a whole number, got {value}")));
            }
            let r = ContractParams::reference(value as u32, c.c);
            c.entry_age = r.entry_age;
            c.g = r.g;
            c.bonus = r.bonus;
        }
        SweepAxis::SigmaR => m.sigma_r = value,
        SweepAxis::SigmaF => m.sigma_f = value,
        SweepAxis::Rho => m.rho = value,
        SweepAxis::C => c.c = value,
    }
    Ok((c, m))
}

/// Fair fee at each value of one parameter. A failing point is reported in
/// its row and does not stop the sweep.
pub fn sweep(
    axis: SweepAxis,
    values: &[f64],
    contract: &ContractParams,
    market: &MarketParams,
    strategy: &Strategy,
    numerics: &Numerics,
    opts: &FairFeeOptions,
) -> Vec<SweepRow> {
    values
        .iter()
        .map(|&value| {
            let watch = Stopwatch::start();
            let res = apply_axis(axis, value, contract, market)
                .and_then(|(c, m)| fair_fee(&c, &m, strategy, numerics, opts));
            match res {
                Ok(f) => SweepRow {
                    value,
                    alpha: Some(f.alpha),
                    error: None,
                    seconds: watch.seconds(),
                },
                Err(e) => {
                    log::warn!("sweep point {value} failed: {e}");
                    SweepRow {
                        value,
                        alpha: None,
                        error: Some(e.to_string()),
                        seconds: watch.seconds(),
                    }
                }
            }
        })
        .collect()
}
