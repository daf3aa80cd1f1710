//! Backward induction over (account node, rate node, health state).
//!
//! Between anniversaries the six living health states evolve independently
//! on the joint (account, rate) lattice. At each anniversary the withdrawal
//! decision, the LTC payment and the fees are undone in reverse order, then
//! the states are mixed with the annual health transition matrix.
//!
//! Slices are stored as `[k][h][j]`: one contiguous block of six account rows
//! per rate node, so a block shares all its transition parameters.

use serde::{Deserialize, Serialize};

use crate::clock::Stopwatch;
use crate::contract::ContractParams;
use crate::error::{Error, Result};
use crate::grid::AccountGrid;
use crate::health::{HealthState, IntensityTable, TransitionSequence};
use crate::joint::{
    account_up_probability, resolve, solve_moves, CovarianceMatch, EPS_NEG, JointOptions, JointTransition,
    MoveSet, NegativeMassPolicy,
};
use crate::rates::{MarketParams, RateLattice, RateMode, RateSpacing};

const ALIVE: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    /// Always withdraw the guaranteed amount.
    Static,
    /// Guaranteed amount or full surrender at anniversaries.
    Mixed,
    /// Any withdrawal level from the mesh at anniversaries.
    Dynamic,
    /// Dynamic plus surrender at every sub-step between anniversaries.
    FullDynamic,
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Self::Static),
            "mixed" => Ok(Self::Mixed),
            "dynamic" => Ok(Self::Dynamic),
            "full-dynamic" => Ok(Self::FullDynamic),
            other => Err(Error::domain(
                "strategy",
                format!("`{other}` is not one of static, mixed, dynamic, full-dynamic"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    /// Candidate withdrawal controls for the dynamic kinds, ascending.
    pub gamma_mesh: Vec<f64>,
}

impl Strategy {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            gamma_mesh: vec![0.0, 1.0, 2.0],
        }
    }

    /// Dynamic kinds with a custom mesh; the mesh must contain 0, 1 and 2.
    pub fn with_mesh(kind: StrategyKind, mut mesh: Vec<f64>) -> Result<Self> {
        if mesh.iter().any(|g| !(0.0..=2.0).contains(g)) {
            return Err(Error::domain("gamma_mesh", "values must lie in [0, 2]"));
        }
        mesh.sort_by(f64::total_cmp);
        mesh.dedup();
        for must in [0.0, 1.0, 2.0] {
            if !mesh.contains(&must) {
                return Err(Error::domain("gamma_mesh", "mesh must contain 0, 1 and 2"));
            }
        }
        Ok(Self {
            kind,
            gamma_mesh: mesh,
        })
    }

    /// `n + 1` evenly spaced controls on `[0, 2]`.
    pub fn uniform_mesh(kind: StrategyKind, intervals: usize) -> Result<Self> {
        let n = intervals.max(2);
        Self::with_mesh(kind, (0..=n).map(|i| 2.0 * i as f64 / n as f64).collect())
    }

    /// Controls evaluated at each anniversary.
    pub fn candidates(&self) -> &[f64] {
        match self.kind {
            StrategyKind::Static => &[1.0],
            StrategyKind::Mixed => &[1.0, 2.0],
            StrategyKind::Dynamic | StrategyKind::FullDynamic => &self.gamma_mesh,
        }
    }

    pub fn is_dynamic(&self) -> bool {
        matches!(self.kind, StrategyKind::Dynamic | StrategyKind::FullDynamic)
    }
}

/// Lattice resolution and joint-probability knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Numerics {
    /// Time steps per year.
    #[serde(rename = "N")]
    pub steps_per_year: usize,
    /// Account grid spans `[P / f_A, P f_A]`.
    #[serde(rename = "f_A")]
    pub f_a: f64,
    pub negative_mass: NegativeMassPolicy,
    pub covariance: CovarianceMatch,
    /// Near-floor threshold; `None` uses `min(theta, r0) / 2`.
    pub theta_star: Option<f64>,
    pub rate_spacing: RateSpacing,
}

impl Numerics {
    pub fn new(steps_per_year: usize, f_a: f64) -> Self {
        Self {
            steps_per_year,
            f_a,
            negative_mass: NegativeMassPolicy::default(),
            covariance: CovarianceMatch::default(),
            theta_star: None,
            rate_spacing: RateSpacing::default(),
        }
    }

    /// Cheapest of the four reference setups for the given rate model.
    pub fn coarse_for(market: &MarketParams) -> Self {
        match market.mode {
            RateMode::BsConstantRate => Self::new(100, 100.0),
            RateMode::BsCir => Self::new(25, 100.0),
        }
    }

    /// Reference setup `A`..`D` for the given rate model.
    pub fn setup(market: &MarketParams, letter: char) -> Result<Self> {
        let idx = match letter.to_ascii_uppercase() {
            'A' => 0,
            'B' => 1,
            'C' => 2,
            'D' => 3,
            other => return Err(Error::domain("setup", format!("unknown setup `{other}`"))),
        };
        Ok(match market.mode {
            RateMode::BsConstantRate => {
                let n = 100 << idx;
                Self::new(n, n as f64)
            }
            RateMode::BsCir => Self::new(25 << idx, (100 << idx) as f64),
        })
    }

    fn joint_options(&self, market: &MarketParams) -> JointOptions {
        let mut o = JointOptions::for_market(market);
        o.policy = self.negative_mass;
        o.covariance = self.covariance;
        if let Some(t) = self.theta_star {
            o.theta_star = t;
        }
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub time_steps: usize,
    pub account_nodes: usize,
    pub rate_nodes: usize,
    /// Node updates performed, summed over steps and health states.
    pub updates: u64,
    /// Rate nodes whose covariance match was relaxed to keep probabilities
    /// non-negative.
    pub projected_nodes: usize,
    pub seconds: f64,
}

/// Optimal withdrawal control over the `(j, k)` grid for one anniversary and
/// health state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionMap {
    pub anniversary: usize,
    pub health: HealthState,
    /// Account values `A_j`, `j = 0..=j_max`.
    pub account: Vec<f64>,
    /// Rate node indices and values at step `n N`.
    pub rate_index: Vec<usize>,
    pub rate: Vec<f64>,
    /// Chosen control, row-major `[k][j]`.
    pub gamma: Vec<f64>,
}

impl ActionMap {
    pub fn gamma_at(&self, k_pos: usize, j: usize) -> f64 {
        self.gamma[k_pos * self.account.len() + j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingResult {
    pub price: f64,
    pub alpha: f64,
    pub action_maps: Vec<ActionMap>,
    pub diagnostics: Diagnostics,
}

/// Lattices and health matrices for one (market, entry age, premium,
/// numerics) combination; reusable across fees and strategies.
#[derive(Debug, Clone)]
pub struct TreeModel {
    premium: f64,
    entry_age: u32,
    market: MarketParams,
    numerics: Numerics,
    joint: JointOptions,
    health: TransitionSequence,
    rates: RateLattice,
    grid: AccountGrid,
}

/// Per-rate-node transition data for one sub-step.
#[derive(Debug, Clone, Default)]
struct NodeStep {
    disc: f64,
    kd: usize,
    ku: usize,
    p_r_up: f64,
    shift: usize,
    joint: JointTransition,
    projected: bool,
    /// Joint probabilities for nodes whose up successor is capped at `j_max`,
    /// starting at `capped_from`.
    capped_from: usize,
    capped: Vec<JointTransition>,
}

struct Scratch {
    a: Vec<f64>,
    b: Vec<f64>,
    block: Vec<f64>,
}

impl Scratch {
    fn new(len: usize) -> Self {
        Self {
            a: vec![0.0; len],
            b: vec![0.0; len],
            block: vec![0.0; len * ALIVE],
        }
    }
}

/// Runs `f(block_index, block, scratch)` over consecutive blocks.
fn for_each_block<F>(buf: &mut [f64], block_len: usize, row_len: usize, f: F) -> Result<()>
where
    F: Fn(usize, &mut [f64], &mut Scratch) -> Result<()> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        buf.par_chunks_mut(block_len)
            .enumerate()
            .try_for_each_init(|| Scratch::new(row_len), |s, (b, blk)| f(b, blk, s))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut s = Scratch::new(row_len);
        buf.chunks_mut(block_len)
            .enumerate()
            .try_for_each(|(b, blk)| f(b, blk, &mut s))
    }
}

impl TreeModel {
    pub fn new(contract: &ContractParams, market: &MarketParams, numerics: &Numerics) -> Result<Self> {
        let health = TransitionSequence::new(&IntensityTable::standard(), contract.entry_age)?;
        Self::with_health(contract, market, numerics, health)
    }

    /// Uses caller-supplied annual health matrices.
    pub fn with_health(
        contract: &ContractParams,
        market: &MarketParams,
        numerics: &Numerics,
        health: TransitionSequence,
    ) -> Result<Self> {
        contract.validate()?;
        market.validate()?;
        if health.entry_age() != contract.entry_age {
            return Err(Error::domain("x0", "health matrices built for a different entry age"));
        }
        let years = contract.horizon();
        let rates = RateLattice::build_with(market, years, numerics.steps_per_year, numerics.rate_spacing)?;
        let grid = AccountGrid::build(contract.premium, market.sigma_f, rates.dt(), numerics.f_a)?;
        if grid.j_max() < 4 {
            return Err(Error::domain("f_A", "account grid needs at least four positive nodes"));
        }
        Ok(Self {
            premium: contract.premium,
            entry_age: contract.entry_age,
            market: *market,
            numerics: *numerics,
            joint: numerics.joint_options(market),
            health,
            rates,
            grid,
        })
    }

    pub fn grid(&self) -> &AccountGrid {
        &self.grid
    }

    pub fn rates(&self) -> &RateLattice {
        &self.rates
    }

    pub fn health(&self) -> &TransitionSequence {
        &self.health
    }

    pub fn market(&self) -> &MarketParams {
        &self.market
    }

    pub fn numerics(&self) -> &Numerics {
        &self.numerics
    }

    pub fn price(&self, contract: &ContractParams, strategy: &Strategy) -> Result<PricingResult> {
        self.run(contract, strategy, &[])
    }

    /// Prices and records the chosen control at each requested
    /// `(anniversary, health)` pair.
    pub fn price_with_maps(
        &self,
        contract: &ContractParams,
        strategy: &Strategy,
        requests: &[(usize, HealthState)],
    ) -> Result<PricingResult> {
        self.run(contract, strategy, requests)
    }

    fn node_step(&self, i: usize, k: usize) -> Result<NodeStep> {
        let rates = &self.rates;
        let grid = &self.grid;
        let dt = rates.dt();
        let r = rates.value(i, k);
        let (kd, ku) = rates.successors(i, k);
        let k_next = rates.k_min(i + 1);
        let p_r_up = rates.up_probability(i, k);
        let s = grid.log_step();
        let shift = grid.up_shift(r, dt);
        let near_floor = rates.is_constant() || r == 0.0 || r < self.joint.theta_star * dt.sqrt();
        let (r_down, r_up) = (rates.value(i + 1, kd) - r, rates.value(i + 1, ku) - r);
        let cov = self.market.rho * self.market.sigma_r * self.market.sigma_f * r.sqrt() * dt;

        // interior nodes, expressed per unit of account value
        let down = (-s).exp();
        let up = (shift as f64 * s).exp();
        let m = MoveSet {
            p_a_up: account_up_probability(1.0, down, up, r, dt),
            p_r_up,
            a_down: down - 1.0,
            a_up: up - 1.0,
            r_down,
            r_up,
            target: cov,
        };
        let joint = resolve(&m, near_floor, &self.joint, (i, k, grid.j_min()))?;
        let projected = !near_floor && solve_moves(&m, self.joint.covariance).worst_before_repair < -EPS_NEG;

        let j_max = grid.j_max();
        let capped_from = (j_max + 1).saturating_sub(shift).max(2);
        let mut capped = Vec::new();
        for j in capped_from..j_max {
            let a = grid.value(j);
            let (ad, au) = (grid.value(j - 1), grid.value(j_max));
            let m = MoveSet {
                p_a_up: account_up_probability(a, ad, au, r, dt),
                p_r_up,
                a_down: ad - a,
                a_up: au - a,
                r_down,
                r_up,
                target: cov * a,
            };
            capped.push(resolve(&m, near_floor, &self.joint, (i, k, j))?);
        }
        Ok(NodeStep {
            disc: (-r * dt).exp(),
            kd: kd - k_next,
            ku: ku - k_next,
            p_r_up,
            shift,
            joint,
            projected,
            capped_from,
            capped,
        })
    }

    fn run(
        &self,
        contract: &ContractParams,
        strategy: &Strategy,
        requests: &[(usize, HealthState)],
    ) -> Result<PricingResult> {
        contract.validate()?;
        if contract.premium != self.premium || contract.entry_age != self.entry_age {
            return Err(Error::domain(
                "contract",
                "premium and entry age must match the ones the model was built for",
            ));
        }
        if !requests.is_empty() && !strategy.is_dynamic() {
            return Err(Error::domain("strategy", "action maps need a dynamic strategy"));
        }
        let watch = Stopwatch::start();
        let grid = &self.grid;
        let rates = &self.rates;
        let n_per_year = rates.steps_per_year();
        let years = contract.horizon();
        let row = grid.len();
        let block = row * ALIVE;
        let j_max = grid.j_max();
        let cap = (0..=rates.last_step()).map(|i| rates.width(i)).max().unwrap_or(1);

        let mut cur = vec![0.0; cap * block];
        let mut next = vec![0.0; cap * block];
        let mut updates = 0u64;
        let projected = std::sync::atomic::AtomicUsize::new(0);
        let mut maps = Vec::new();

        // values at maturity: everybody has died by now
        let g_t = contract.death_guarantee_amount(years);
        for blk in cur[..rates.width(rates.last_step()) * block].chunks_mut(row) {
            for (v, a) in blk.iter_mut().zip(grid.values()) {
                *v = crate::contract::death_benefit(*a, g_t);
            }
        }

        let extrap_lo = (grid.value(1) - grid.value(2)) / (grid.value(3) - grid.value(2));
        let extrap_hi = (grid.value(j_max) - grid.value(j_max - 1))
            / (grid.value(j_max - 2) - grid.value(j_max - 1));
        let full_dynamic = strategy.kind == StrategyKind::FullDynamic;

        for n in (0..years).rev() {
            let surrender: Vec<f64> = grid
                .values()
                .iter()
                .map(|a| a * (1.0 - contract.kappa(n)))
                .collect();
            for i in (n * n_per_year..(n + 1) * n_per_year).rev() {
                let width = rates.width(i);
                let k_min = rates.k_min(i);
                let src = &cur;
                let surrender = &surrender;
                let projected = &projected;
                for_each_block(&mut next[..width * block], block, row, |ko, out, _| {
                    let node = self.node_step(i, k_min + ko)?;
                    if node.projected {
                        projected.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    }
                    for h in 0..ALIVE {
                        let vd = &src[node.kd * block + h * row..][..row];
                        let vu = &src[node.ku * block + h * row..][..row];
                        let o = &mut out[h * row..(h + 1) * row];
                        step_row(o, vd, vu, &node, extrap_lo, extrap_hi);
                        if full_dynamic {
                            for (v, s) in o.iter_mut().zip(surrender) {
                                if *s > *v {
                                    *v = *s;
                                }
                            }
                        }
                    }
                    Ok(())
                })?;
                updates += (width * block) as u64;
                std::mem::swap(&mut cur, &mut next);
            }

            // anniversary n: undo withdrawal, LTC and fees, then mix
            let i = n * n_per_year;
            let width = rates.width(i);
            let wanted: Vec<HealthState> = requests
                .iter()
                .filter(|(m, _)| *m == n)
                .map(|&(_, h)| h)
                .collect();
            let ctx = Anniversary {
                model: self,
                contract,
                strategy,
                n,
                step: i,
            };
            if wanted.is_empty() {
                for_each_block(&mut cur[..width * block], block, row, |ko, blk, s| {
                    ctx.process(ko, blk, s, &mut |_, _, _| {})
                })?;
            } else {
                let mut grids: Vec<Vec<f64>> = vec![vec![0.0; width * row]; wanted.len()];
                let mut s = Scratch::new(row);
                for (ko, blk) in cur[..width * block].chunks_mut(block).enumerate() {
                    ctx.process(ko, blk, &mut s, &mut |h, j, gamma| {
                        for (w, g) in wanted.iter().zip(grids.iter_mut()) {
                            if w.index() == h {
                                g[ko * row + j] = gamma;
                            }
                        }
                    })?;
                }
                for (h, gamma) in wanted.into_iter().zip(grids) {
                    maps.push(ActionMap {
                        anniversary: n,
                        health: h,
                        account: grid.values().to_vec(),
                        rate_index: (rates.k_min(i)..=rates.k_max(i)).collect(),
                        rate: rates.values(i).to_vec(),
                        gamma,
                    });
                }
            }
        }

        let m0 = contract.initial_health.index();
        let price = cur[m0 * row + grid.j_min()];
        maps.sort_by_key(|m| (m.anniversary, m.health));
        Ok(PricingResult {
            price,
            alpha: contract.alpha,
            action_maps: maps,
            diagnostics: Diagnostics {
                time_steps: rates.last_step(),
                account_nodes: row,
                rate_nodes: rates.node_count(),
                updates,
                projected_nodes: projected.into_inner(),
                seconds: watch.seconds(),
            },
        })
    }
}

/// One backward sub-step for one account row.
fn step_row(
    out: &mut [f64],
    vd: &[f64],
    vu: &[f64],
    node: &NodeStep,
    extrap_lo: f64,
    extrap_hi: f64,
) {
    let j_max = out.len() - 1;
    let d = node.disc;
    out[0] = d * ((1.0 - node.p_r_up) * vd[0] + node.p_r_up * vu[0]);

    let u = node.shift;
    let t = &node.joint;
    let (c_dd, c_du, c_ud, c_uu) = (d * t.p_dd, d * t.p_du, d * t.p_ud, d * t.p_uu);
    // uncapped interior nodes j = 2 ..= last with j + u <= j_max
    let last = (j_max - 1).min(j_max.saturating_sub(u));
    if last >= 2 {
        let len = last - 1;
        let dst = &mut out[2..2 + len];
        let (dd, du) = (&vd[1..1 + len], &vu[1..1 + len]);
        let (ud, uu) = (&vd[2 + u..2 + u + len], &vu[2 + u..2 + u + len]);
        for ((((o, &a), &b), &c), &e) in dst.iter_mut().zip(dd).zip(du).zip(ud).zip(uu) {
            *o = c_dd * a + c_du * b + c_ud * c + c_uu * e;
        }
    }
    for (off, t) in node.capped.iter().enumerate() {
        let j = node.capped_from + off;
        out[j] = d
            * (t.p_dd * vd[j - 1] + t.p_du * vu[j - 1] + t.p_ud * vd[j_max] + t.p_uu * vu[j_max]);
    }
    out[1] = out[2] + extrap_lo * (out[3] - out[2]);
    out[j_max] = out[j_max - 1] + extrap_hi * (out[j_max - 2] - out[j_max - 1]);
}

struct Anniversary<'a> {
    model: &'a TreeModel,
    contract: &'a ContractParams,
    strategy: &'a Strategy,
    n: usize,
    step: usize,
}

impl Anniversary<'_> {
    /// Turns the post-payment values of one rate node into the pre-fee values,
    /// then mixes health states with the previous year's transition matrix.
    fn process(
        &self,
        ko: usize,
        blk: &mut [f64],
        s: &mut Scratch,
        record: &mut dyn FnMut(usize, usize, f64),
    ) -> Result<()> {
        let grid = &self.model.grid;
        let c = self.contract;
        let n = self.n;
        let row = grid.len();
        let values = grid.values();

        for h in 0..ALIVE {
            let v = &mut blk[h * row..(h + 1) * row];
            if n >= 1 {
                self.withdrawal(v, s, h, record);
                let ltc = c.ltc_payment(n, HealthState::ALL[h]);
                if ltc > 0.0 {
                    grid.resample(v, &mut s.a, |j| values[j] - ltc);
                    for (dst, src) in v.iter_mut().zip(&s.a) {
                        *dst = src + ltc;
                    }
                }
            }
            let (keep, flat) = (1.0 - c.alpha, c.beta * c.premium);
            grid.resample(v, &mut s.a, |j| values[j] * keep - flat);
            v.copy_from_slice(&s.a);
            if let Some(j) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    anniversary: n,
                    health: h as u8 + 1,
                    rate_node: self.model.rates.k_min(self.step) + ko,
                    account_node: j,
                });
            }
        }

        if n >= 1 {
            let p = self.model.health.year(n - 1);
            let g_death = c.death_guarantee_amount(n);
            s.block.copy_from_slice(blk);
            for (h, out) in blk.chunks_mut(row).enumerate() {
                let dead = p[h][ALIVE];
                for (j, o) in out.iter_mut().enumerate() {
                    *o = dead * crate::contract::death_benefit(values[j], g_death);
                }
                for (h2, src) in s.block.chunks(row).enumerate() {
                    let w = p[h][h2];
                    if w == 0.0 {
                        continue;
                    }
                    for (o, x) in out.iter_mut().zip(src) {
                        *o += w * x;
                    }
                }
            }
        }
        Ok(())
    }

    /// Replaces the post-withdrawal row `v` by the best value over the
    /// candidate controls, ties going to the smaller control.
    fn withdrawal(&self, v: &mut [f64], s: &mut Scratch, h: usize, record: &mut dyn FnMut(usize, usize, f64)) {
        let grid = &self.model.grid;
        let c = self.contract;
        let values = grid.values();
        let g = c.guaranteed_amount(self.n);
        let kappa = c.kappa(self.n);
        let cands = self.strategy.candidates();
        let post = &mut s.b;
        post.copy_from_slice(v);
        let best = &mut *v;
        let cand = &mut s.a;
        for (idx, &gamma) in cands.iter().enumerate() {
            candidate_row(grid, post, cand, gamma, g, kappa, c.bonus, values);
            if idx == 0 {
                best.copy_from_slice(cand);
                for j in 0..best.len() {
                    record(h, j, gamma);
                }
            } else {
                for (j, (b, x)) in best.iter_mut().zip(cand.iter()).enumerate() {
                    if *x > *b {
                        *b = *x;
                        record(h, j, gamma);
                    }
                }
            }
        }
    }
}

/// Value before withdrawal when control `gamma` is applied at every node.
#[allow(clippy::too_many_arguments)]
fn candidate_row(
    grid: &AccountGrid,
    post: &[f64],
    out: &mut [f64],
    gamma: f64,
    g: f64,
    kappa: f64,
    bonus: f64,
    values: &[f64],
) {
    if gamma == 0.0 {
        let scale = 1.0 + bonus;
        grid.resample(post, out, |j| values[j] / scale);
        out.iter_mut().for_each(|x| *x *= scale);
    } else if gamma <= 1.0 {
        let w = gamma * g;
        grid.resample(post, out, |j| values[j] - w);
        out.iter_mut().for_each(|x| *x += w);
    } else if gamma < 2.0 {
        let keep = 2.0 - gamma;
        grid.resample(post, out, |j| {
            let w = keep * g + (gamma - 1.0) * values[j];
            (values[j] - w).max(0.0) / keep
        });
        for (x, a) in out.iter_mut().zip(values) {
            let w = keep * g + (gamma - 1.0) * a;
            *x = keep * *x + g + (w - g) * (1.0 - kappa);
        }
    } else {
        for (x, a) in out.iter_mut().zip(values) {
            *x = g + (a - g) * (1.0 - kappa);
        }
    }
}

/// One-shot pricing.
pub fn price(
    contract: &ContractParams,
    market: &MarketParams,
    strategy: &Strategy,
    numerics: &Numerics,
) -> Result<PricingResult> {
    TreeModel::new(contract, market, numerics)?.price(contract, strategy)
}

/// Optimal controls at the requested anniversaries and health states.
pub fn optimal_action_map(
    contract: &ContractParams,
    market: &MarketParams,
    strategy: &Strategy,
    numerics: &Numerics,
    anniversaries: &[usize],
    healths: &[HealthState],
) -> Result<Vec<ActionMap>> {
    let model = TreeModel::new(contract, market, numerics)?;
    let horizon = contract.horizon();
    if let Some(&bad) = anniversaries.iter().find(|&&n| n == 0 || n >= horizon) {
        return Err(Error::domain(
            "anniversaries",
            format!("{bad} is not a withdrawal date in 1..{horizon}"),
        ));
    }
    let requests: Vec<(usize, HealthState)> = anniversaries
        .iter()
        .flat_map(|&n| healths.iter().map(move |&h| (n, h)))
        .filter(|(_, h)| h.is_alive())
        .collect();
    Ok(model.price_with_maps(contract, strategy, &requests)?.action_maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::health::{forced_death, Matrix7, MAX_AGE};
    use approx::assert_relative_eq;

    fn identity_health(x0: u32) -> TransitionSequence {
        let mut id: Matrix7 = [[0.0; 7]; 7];
        for (i, r) in id.iter_mut().enumerate() {
            r[i] = 1.0;
        }
        let mut ms = vec![id; (MAX_AGE - x0) as usize];
        *ms.last_mut().unwrap() = forced_death();
        TransitionSequence::from_matrices(x0, ms).unwrap()
    }

    #[test]
    fn strategy_meshes() {
        assert_eq!(Strategy::new(StrategyKind::Static).candidates(), &[1.0]);
        assert_eq!(Strategy::new(StrategyKind::Mixed).candidates(), &[1.0, 2.0]);
        assert_eq!(Strategy::new(StrategyKind::Dynamic).candidates(), &[0.0, 1.0, 2.0]);
        assert!(Strategy::with_mesh(StrategyKind::Dynamic, vec![0.0, 2.0]).is_err());
        assert_eq!(Strategy::uniform_mesh(StrategyKind::Dynamic, 10).unwrap().candidates().len(), 11);
        assert_eq!("full-dynamic".parse::<StrategyKind>().unwrap(), StrategyKind::FullDynamic);
        assert!("greedy".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn setups() {
        let bs = MarketParams::reference_bs();
        let cir = MarketParams::reference_cir();
        assert_eq!(Numerics::setup(&bs, 'C').unwrap().steps_per_year, 400);
        assert_eq!(Numerics::setup(&cir, 'D').unwrap().steps_per_year, 200);
        assert_eq!(Numerics::setup(&cir, 'D').unwrap().f_a, 800.0);
        assert!(Numerics::setup(&cir, 'E').is_err());
    }

    /// Price of a scalar recursion with a nearly deterministic fund and
    /// frozen health: each year the grid factor `(1 + r dt)^N e^{-r}` hits
    /// the account part, and the guarantee pays the shortfall `G (1 - a)`.
    #[test]
    fn deterministic_limit_matches_scalar_recursion() {
        let x0 = 100;
        let mut contract = ContractParams::reference(x0, 0.0);
        contract.pi = 0.0;
        contract.g = 0.001;
        contract.beta = 0.0;
        let market = MarketParams {
            sigma_f: 1e-3,
            ..MarketParams::reference_bs()
        };
        let numerics = Numerics::new(1, 30.0);
        let model = TreeModel::with_health(&contract, &market, &numerics, identity_health(x0)).unwrap();
        let got = model.price(&contract, &Strategy::new(StrategyKind::Static)).unwrap().price;

        // the account drifts on grid exactly by its expected growth
        let r: f64 = 0.05;
        let years = contract.horizon();
        let p = contract.premium;
        let g = contract.g * p;
        // backward: value = a * A + b with A the account at that date
        let (mut a, mut b) = (1.0, 0.0);
        for n in (0..years).rev() {
            // one year of drift and discounting
            a *= (1.0 + r) * (-r).exp();
            b *= (-r).exp();
            if n >= 1 {
                // withdrawal: A -> A - G, cash G
                b += g - a * g;
            }
        }
        let want = a * p + b;
        assert_relative_eq!(got, want, max_relative = 1e-10);
    }

    #[test]
    fn similarity_scaling() {
        let market = MarketParams::reference_bs();
        let numerics = Numerics::new(4, 50.0);
        let c1 = ContractParams::reference(90, 0.06).with_alpha(0.01);
        let c2 = ContractParams {
            premium: 200.0,
            ..c1.clone()
        };
        for kind in [StrategyKind::Static, StrategyKind::Dynamic, StrategyKind::FullDynamic] {
            let s = Strategy::new(kind);
            let p1 = price(&c1, &market, &s, &numerics).unwrap().price;
            let p2 = price(&c2, &market, &s, &numerics).unwrap().price;
            assert_relative_eq!(p2, 2.0 * p1, max_relative = 1e-10);
        }
    }

    #[test]
    fn strategy_dominance_small_case() {
        let market = MarketParams::reference_bs();
        let numerics = Numerics::new(8, 50.0);
        let c = ContractParams::reference(85, 0.06).with_alpha(0.015);
        let prices: Vec<f64> = [
            StrategyKind::Static,
            StrategyKind::Mixed,
            StrategyKind::Dynamic,
            StrategyKind::FullDynamic,
        ]
        .iter()
        .map(|&k| price(&c, &market, &Strategy::new(k), &numerics).unwrap().price)
        .collect();
        for w in prices.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "{prices:?}");
        }
    }

    #[test]
    fn price_decreases_with_fee() {
        let market = MarketParams::reference_bs();
        let numerics = Numerics::new(8, 50.0);
        let c = ContractParams::reference(80, 0.06);
        let s = Strategy::new(StrategyKind::Static);
        let model = TreeModel::new(&c, &market, &numerics).unwrap();
        let lo = model.price(&c.with_alpha(0.0), &s).unwrap().price;
        let hi = model.price(&c.with_alpha(0.02), &s).unwrap().price;
        assert!(lo > hi);
    }

    #[test]
    fn mismatched_contract_rejected() {
        let market = MarketParams::reference_bs();
        let numerics = Numerics::new(2, 20.0);
        let c = ContractParams::reference(110, 0.0);
        let model = TreeModel::new(&c, &market, &numerics).unwrap();
        let other = ContractParams::reference(111, 0.0);
        assert!(model.price(&other, &Strategy::new(StrategyKind::Static)).is_err());
    }

    #[test]
    fn cir_small_case_runs() {
        let market = MarketParams::reference_cir();
        let numerics = Numerics::new(4, 30.0);
        let c = ContractParams::reference(100, 0.06).with_alpha(0.01);
        let r = price(&c, &market, &Strategy::new(StrategyKind::Static), &numerics).unwrap();
        assert!(r.price.is_finite() && r.price > 0.0);
        assert!(r.diagnostics.updates > 0);
    }

    #[test]
    fn action_maps_use_mesh_values() {
        let market = MarketParams::reference_cir();
        let numerics = Numerics::new(4, 30.0);
        let c = ContractParams::reference(100, 0.06).with_alpha(0.01);
        let s = Strategy::new(StrategyKind::Dynamic);
        let maps = optimal_action_map(&c, &market, &s, &numerics, &[1, 5], &[HealthState::Healthy]).unwrap();
        assert_eq!(maps.len(), 2);
        for m in &maps {
            assert_eq!(m.gamma.len(), m.rate.len() * m.account.len());
            assert!(m.gamma.iter().all(|g| [0.0, 1.0, 2.0].contains(g)));
        }
        assert!(optimal_action_map(&c, &market, &s, &numerics, &[0], &[HealthState::Healthy]).is_err());
    }
}
