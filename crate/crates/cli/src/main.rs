//! Command-line front end: prices, fair fees, sweeps, action maps and
//! Monte Carlo cross-checks driven by a TOML config, written as CSV.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use glwb_ltc::montecarlo::{fair_fee_mc, simulate_price_static, simulate_price_static_cv, McEstimate};
use glwb_ltc::{
    fair_fee, optimal_action_map, sweep, ContractParams, FairFeeOptions, HealthState, MarketParams, Numerics,
    RateLattice, RateMode, StrategyKind, SweepAxis, TreeModel, BPS,
};

use config::{ConfigError, RunConfig};
use output::{num, opt_num, Job};

#[derive(Debug, Parser)]
#[command(name = "glwb-ltc", version, about = "Price GLWB contracts with long-term care benefits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Args)]
struct Flags {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Pricing engine.
    #[arg(long, global = true, value_enum, default_value_t = Engine::Tree)]
    engine: Engine,
    /// Withdrawal strategy: static, mixed, dynamic or full-dynamic.
    #[arg(long, global = true)]
    strategy: Option<StrategyKind>,
    /// Lattice steps per year (clears any configured setup).
    #[arg(long = "N", global = true)]
    steps_per_year: Option<usize>,
    /// Account grid width factor (clears any configured setup).
    #[arg(long = "fA", global = true)]
    f_a: Option<f64>,
    /// Monte Carlo paths.
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Monte Carlo seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Engine {
    Tree,
    Mc,
    McCv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Contract value at the configured fee.
    Price,
    /// Fee that makes the contract worth its premium.
    FairFee,
    /// Fair fee along one parameter axis.
    Sweep {
        /// entry-age, sigma-r, sigma-f, rho or c.
        #[arg(long)]
        axis: SweepAxis,
        /// Axis values, comma separated; an empty list does nothing.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "")]
        values: Vec<String>,
        /// Repeat the sweep for each correlation, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        rho: Vec<f64>,
    },
    /// Optimal withdrawal control on the (account, rate) grid.
    ActionMap {
        /// Anniversaries, comma separated.
        #[arg(long = "n", value_delimiter = ',', required = true)]
        anniversaries: Vec<usize>,
        /// Health state codes, comma separated.
        #[arg(long = "h", value_delimiter = ',', default_value = "1")]
        health: Vec<u8>,
        /// Solve for the fair fee of the strategy first and map at that fee.
        #[arg(long)]
        fair: bool,
    },
    /// Tree fair fee checked against a Monte Carlo price at that fee.
    ValidateMc,
    /// Short-rate lattice as `i,k,R,kd,ku,p_up` rows.
    DumpLattice,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Price => "price",
            Command::FairFee => "fair-fee",
            Command::Sweep { .. } => "sweep",
            Command::ActionMap { .. } => "action-map",
            Command::ValidateMc => "validate-mc",
            Command::DumpLattice => "dump-lattice",
        }
    }
}

fn resolve(flags: &Flags) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &flags.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = flags.strategy {
        cfg.numeric.strategy = s;
    }
    if let Some(n) = flags.steps_per_year {
        cfg.numeric.steps_per_year = n;
        cfg.numeric.setup = None;
    }
    if let Some(f) = flags.f_a {
        cfg.numeric.f_a = f;
        cfg.numeric.setup = None;
    }
    if let Some(p) = flags.paths {
        cfg.mc.paths = p;
    }
    if let Some(s) = flags.seed {
        cfg.mc.seed = s;
    }
    if let Some(o) = &flags.out {
        cfg.output.dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Monte Carlo covers the static strategy only, and its control variates
/// are offered with a constant rate only.
fn check_engine(engine: Engine, cfg: &RunConfig) -> Result<(), ConfigError> {
    if engine == Engine::Tree {
        return Ok(());
    }
    if cfg.numeric.strategy != StrategyKind::Static {
        return Err(ConfigError {
            field: "numeric.strategy".into(),
            reason: "Monte Carlo engines price the static strategy only".into(),
        });
    }
    if engine == Engine::McCv && cfg.market.mode == RateMode::BsCir {
        return Err(ConfigError {
            field: "engine".into(),
            reason: "mc-cv needs closed-form control means, offered for the constant-rate model only; use mc".into(),
        });
    }
    Ok(())
}

fn mc_row(id: &str, e: &McEstimate, cfg: &RunConfig) -> Vec<String> {
    vec![
        id.to_string(),
        num(e.mean),
        num(e.half_width),
        e.paths.to_string(),
        cfg.mc.steps_per_year.to_string(),
        cfg.mc.seed.to_string(),
        num(e.seconds),
    ]
}

const MC_HEADER: [&str; 7] = ["config_id", "mean", "half_width", "n_paths", "steps_per_year", "seed", "seconds"];

fn strategy_name(k: StrategyKind) -> &'static str {
    match k {
        StrategyKind::Static => "static",
        StrategyKind::Mixed => "mixed",
        StrategyKind::Dynamic => "dynamic",
        StrategyKind::FullDynamic => "full-dynamic",
    }
}

/// Cheap tree estimate used to start Monte Carlo fee searches.
fn coarse_fee(contract: &ContractParams, market: &MarketParams) -> Result<f64> {
    let strategy = glwb_ltc::Strategy::new(StrategyKind::Static);
    let f = fair_fee(contract, market, &strategy, &Numerics::coarse_for(market), &FairFeeOptions::default())?;
    Ok(f.alpha)
}

fn cmd_price(job: &Job, engine: Engine) -> Result<()> {
    let cfg = job.config;
    let contract = cfg.contract()?;
    let market = cfg.market()?;
    if engine == Engine::Tree {
        let numerics = cfg.numerics()?;
        let strategy = cfg.strategy()?;
        let res = TreeModel::new(&contract, &market, &numerics)?.price(&contract, &strategy)?;
        let d = &res.diagnostics;
        println!(
            "price {:.6} at alpha {} bps ({}, N {}, f_A {})",
            res.price,
            cfg.contract.alpha_bps,
            strategy_name(strategy.kind),
            numerics.steps_per_year,
            numerics.f_a
        );
        println!(
            "lattice: {} steps, {} account nodes, {} rate nodes, {} projected, {:.3}s",
            d.time_steps, d.account_nodes, d.rate_nodes, d.projected_nodes, d.seconds
        );
        let path = job.write_csv(
            "price",
            &[
                "x0", "strategy", "alpha_bps", "price", "time_steps", "account_nodes", "rate_nodes",
                "projected_nodes",
            ],
            &[vec![
                contract.entry_age.to_string(),
                strategy_name(strategy.kind).into(),
                num(cfg.contract.alpha_bps),
                num(res.price),
                d.time_steps.to_string(),
                d.account_nodes.to_string(),
                d.rate_nodes.to_string(),
                d.projected_nodes.to_string(),
            ]],
        )?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    let mc = cfg.mc_config()?;
    let est = if engine == Engine::McCv {
        simulate_price_static_cv(&contract, &market, &mc)?.controlled
    } else {
        simulate_price_static(&contract, &market, &mc)?
    };
    println!("price {:.6} +/- {:.6} ({} paths)", est.mean, est.half_width, est.paths);
    let path = job.write_csv("mc-price", &MC_HEADER, &[mc_row(&job.hash(), &est, cfg)])?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_fair_fee(job: &Job, engine: Engine) -> Result<()> {
    let cfg = job.config;
    let contract = cfg.contract()?;
    let market = cfg.market()?;
    let header = ["engine", "x0", "strategy", "fair_alpha_bps", "half_width_bps", "evaluations"];
    let strategy = cfg.strategy()?;
    let row = if engine == Engine::Tree {
        let f = fair_fee(&contract, &market, &strategy, &cfg.numerics()?, &cfg.fair_fee_options()?)?;
        println!("fair alpha {:.4} bps ({} evaluations, {:.2}s)", f.alpha_bps(), f.evaluations, f.seconds);
        vec![
            "tree".into(),
            contract.entry_age.to_string(),
            strategy_name(strategy.kind).into(),
            num(f.alpha_bps()),
            String::new(),
            f.evaluations.to_string(),
        ]
    } else {
        let start = coarse_fee(&contract, &market)?;
        let cv = engine == Engine::McCv;
        let f = fair_fee_mc(&contract, &market, &cfg.mc_config()?, cv, Some(start))?;
        println!(
            "fair alpha {:.4} +/- {:.4} bps ({} paths, {:.1}s)",
            f.alpha / BPS,
            f.half_width / BPS,
            f.price.paths,
            f.seconds
        );
        vec![
            if cv { "mc-cv" } else { "mc" }.into(),
            contract.entry_age.to_string(),
            "static".into(),
            num(f.alpha / BPS),
            num(f.half_width / BPS),
            f.evaluations.to_string(),
        ]
    };
    let path = job.write_csv("fair-fee", &header, &[row])?;
    println!("wrote {}", path.display());
    Ok(())
}

fn axis_column(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::EntryAge => "x0",
        SweepAxis::SigmaR => "sigma_r",
        SweepAxis::SigmaF => "sigma_F",
        SweepAxis::Rho => "rho_axis",
        SweepAxis::C => "c",
    }
}

fn cmd_sweep(job: &Job, axis: SweepAxis, values: &[String], rhos: &[f64]) -> Result<()> {
    let cfg = job.config;
    let values: Vec<f64> = values
        .iter()
        .filter(|v| !v.trim().is_empty())
        .map(|v| {
            v.trim().parse::<f64>().map_err(|_| ConfigError {
                field: "values".into(),
                reason: format!("`{v}` is not a number"),
            })
        })
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        println!("no sweep values given; nothing to do");
        return Ok(());
    }
    let contract = cfg.contract()?;
    let base = cfg.market()?;
    let numerics = cfg.numerics()?;
    let strategy = cfg.strategy()?;
    let opts = cfg.fair_fee_options()?;
    let rhos = if rhos.is_empty() { vec![base.rho] } else { rhos.to_vec() };
    let axis_name = axis_column(axis);
    let mut rows = Vec::new();
    for rho in rhos {
        let market = MarketParams { rho, ..base };
        for r in sweep(axis, &values, &contract, &market, &strategy, &numerics, &opts) {
            let bps = r.alpha.map(|a| a / BPS);
            match (&bps, &r.error) {
                (Some(a), _) => println!("rho {rho}: {axis_name} {} -> {a:.4} bps", r.value),
                (None, Some(e)) => println!("rho {rho}: {axis_name} {} failed: {e}", r.value),
                _ => {}
            }
            rows.push(vec![
                num(rho),
                num(r.value),
                opt_num(bps),
                r.error.unwrap_or_default(),
            ]);
        }
    }
    let path = job.write_csv(
        &format!("sweep-{axis_name}"),
        &["rho", axis_name, "fair_alpha_bps", "error"],
        &rows,
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_action_map(job: &Job, anniversaries: &[usize], health: &[u8], fair: bool) -> Result<()> {
    let cfg = job.config;
    let mut contract = cfg.contract()?;
    let market = cfg.market()?;
    let numerics = cfg.numerics()?;
    let strategy = cfg.strategy()?;
    let healths = health
        .iter()
        .map(|&h| {
            HealthState::try_from(h).map_err(|e| ConfigError {
                field: "h".into(),
                reason: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if fair {
        let f = fair_fee(&contract, &market, &strategy, &numerics, &cfg.fair_fee_options()?)?;
        println!("mapping at the fair fee {:.4} bps", f.alpha_bps());
        contract = contract.with_alpha(f.alpha);
    }
    let maps = optimal_action_map(&contract, &market, &strategy, &numerics, anniversaries, &healths)?;
    let mut rows = Vec::new();
    for m in &maps {
        let counts = [0.0, 1.0, 2.0].map(|g| m.gamma.iter().filter(|&&x| x == g).count());
        println!(
            "n {} h {}: {} nodes, gamma 0/1/2 on {}/{}/{}",
            m.anniversary,
            m.health.code(),
            m.gamma.len(),
            counts[0],
            counts[1],
            counts[2]
        );
        for (kp, (&k, &r)) in m.rate_index.iter().zip(&m.rate).enumerate() {
            for (j, &a) in m.account.iter().enumerate() {
                rows.push(vec![
                    m.anniversary.to_string(),
                    m.health.code().to_string(),
                    j.to_string(),
                    k.to_string(),
                    num(a),
                    num(r),
                    num(m.gamma_at(kp, j)),
                ]);
            }
        }
    }
    let path = job.write_csv("action-map", &["n", "h", "j", "k", "A", "r", "gamma"], &rows)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// Returns whether the Monte Carlo interval at the tree fee covers the premium.
fn cmd_validate_mc(job: &Job, engine: Engine) -> Result<bool> {
    let cfg = job.config;
    let contract = cfg.contract()?;
    let market = cfg.market()?;
    let strategy = glwb_ltc::Strategy::new(StrategyKind::Static);
    let tree = fair_fee(&contract, &market, &strategy, &cfg.numerics()?, &cfg.fair_fee_options()?)?;
    println!("tree fair alpha {:.4} bps", tree.alpha_bps());
    let at_fee = contract.with_alpha(tree.alpha);
    let mc = cfg.mc_config()?;
    let id = job.hash();
    let mut rows = Vec::new();
    let mut estimates = Vec::new();
    let use_cv = engine == Engine::McCv || (engine == Engine::Tree && cfg.mc.cv && market.mode != RateMode::BsCir);
    if use_cv {
        let cmp = simulate_price_static_cv(&at_fee, &market, &mc)?;
        rows.push(mc_row(&format!("{id}-plain"), &cmp.plain, cfg));
        rows.push(mc_row(&format!("{id}-cv"), &cmp.controlled, cfg));
        estimates.push(("plain", cmp.plain));
        estimates.push(("control variates", cmp.controlled));
    } else {
        let e = simulate_price_static(&at_fee, &market, &mc)?;
        rows.push(mc_row(&format!("{id}-plain"), &e, cfg));
        estimates.push(("plain", e));
    }
    let mut ok = true;
    for (name, e) in &estimates {
        let inside = e.contains(contract.premium);
        ok &= inside;
        println!(
            "{name}: price {:.4} +/- {:.4} at the tree fee; premium {} {}",
            e.mean,
            e.half_width,
            contract.premium,
            if inside { "inside" } else { "outside" }
        );
    }
    let path = job.write_csv("validate-mc", &MC_HEADER, &rows)?;
    println!("wrote {}", path.display());
    Ok(ok)
}

fn cmd_dump_lattice(job: &Job) -> Result<()> {
    let cfg = job.config;
    let contract = cfg.contract()?;
    let market = cfg.market()?;
    let numerics = cfg.numerics()?;
    let lattice = if market.mode == RateMode::BsCir {
        RateLattice::build_with(&market, contract.horizon(), numerics.steps_per_year, numerics.rate_spacing)?
    } else {
        RateLattice::constant(market.r0, contract.horizon(), numerics.steps_per_year)
    };
    let mut body = Vec::new();
    lattice.write_dump(&mut body)?;
    println!("{} nodes, r_bar {:.6}", lattice.node_count(), lattice.r_bar());
    let path = job.write_raw("lattice", &body)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = resolve(&cli.flags)?;
    check_engine(cli.flags.engine, &cfg)?;
    let command = match &cli.command {
        Command::Sweep { axis, values, rho } => format!("sweep {axis:?} {values:?} rho {rho:?}"),
        Command::ActionMap {
            anniversaries,
            health,
            fair,
        } => format!("action-map n {anniversaries:?} h {health:?} fair {fair}"),
        other => format!("{} engine {:?}", other.name(), cli.flags.engine),
    };
    let job = Job { command, config: &cfg };
    log::info!("{} -> {}", cli.command.name(), cfg.output.dir.display());
    match &cli.command {
        Command::Price => cmd_price(&job, cli.flags.engine)?,
        Command::FairFee => cmd_fair_fee(&job, cli.flags.engine)?,
        Command::Sweep { axis, values, rho } => cmd_sweep(&job, *axis, values, rho)?,
        Command::ActionMap {
            anniversaries,
            health,
            fair,
        } => cmd_action_map(&job, anniversaries, health, *fair)?,
        Command::ValidateMc => return cmd_validate_mc(&job, cli.flags.engine),
        Command::DumpLattice => cmd_dump_lattice(&job)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            match e.downcast_ref::<ConfigError>() {
                Some(_) => ExitCode::from(2),
                None => ExitCode::FAILURE,
            }
        }
    }
}
