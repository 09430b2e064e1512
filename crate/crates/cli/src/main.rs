//! Command-line front end: load scenarios, run engines, execute searches,
//! emit traces and reports.
//!
//! Exit codes: 0 on success, 1 on validation or I/O errors, 2 when a search
//! finds witnesses or counterexamples against the batch mechanism (so CI
//! fails loudly if the mechanism ever regresses).

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use batchswap_core::adversary::{
    sandwich_attack, search_arbitrage, search_ic_deviations, search_ic_noshort, EngineKind,
    Scenario, StrategyGrid, STRATEGIC_USER,
};
use batchswap_core::amm::ConstantProduct;
use batchswap_core::mechanism::{run_batch, BatchOutcome, Config, Side};
use batchswap_core::noshort::run_batch_noshort;
use batchswap_core::scenario::{trace_to_jsonl, ScenarioFile};
use batchswap_core::{Error, Rat};

#[derive(Parser)]
#[command(name = "batchswap", version, about = "Batch swap engine and adversary search oracles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for random tie-breaking (overrides the scenario's seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Rounding tolerance for rate-cap bounds, e.g. "1/4294967296".
    #[arg(long)]
    eps: Option<Rat>,
    /// Add display-only decimal columns to trace output.
    #[arg(long)]
    decimal: bool,
}

#[derive(Args)]
struct GridArgs {
    /// Strategic order amounts, comma-separated rationals.
    #[arg(long, value_delimiter = ',')]
    grid_amounts: Option<Vec<Rat>>,
    /// Strategic order rates, comma-separated rationals.
    #[arg(long, value_delimiter = ',')]
    grid_rates: Option<Vec<Rat>>,
    /// Strategic order sides (buy_x, sell_x, buy_y, sell_y).
    #[arg(long, value_delimiter = ',')]
    grid_sides: Option<Vec<String>>,
    /// Maximum number of strategic orders per deviation.
    #[arg(long, default_value_t = 2)]
    max_orders: usize,
    /// Arrival delays added to the strategic player's intrinsic arrival.
    #[arg(long, value_delimiter = ',')]
    arrival_offsets: Option<Vec<Rat>>,
}

impl GridArgs {
    fn build(&self) -> anyhow::Result<StrategyGrid> {
        let sides = match &self.grid_sides {
            None => vec![Side::BuyX, Side::SellX, Side::BuyY, Side::SellY],
            Some(names) => {
                let mut sides = Vec::new();
                for s in names {
                    let side = match s.as_str() {
                        "buy_x" => Side::BuyX,
                        "sell_x" => Side::SellX,
                        "buy_y" => Side::BuyY,
                        "sell_y" => Side::SellY,
                        other => bail!("invalid side {other:?}; expected buy_x, sell_x, buy_y or sell_y"),
                    };
                    sides.push(side);
                }
                sides
            }
        };
        Ok(StrategyGrid {
            amounts: self
                .grid_amounts
                .clone()
                .unwrap_or_else(|| (1..=5).map(Rat::from_int).collect()),
            rates: self.grid_rates.clone().unwrap_or_else(|| {
                vec![Rat::new(1, 2), Rat::one(), Rat::from_int(2), Rat::from_int(4)]
            }),
            sides,
            max_orders: self.max_orders,
            arrival_offsets: self
                .arrival_offsets
                .clone()
                .unwrap_or_else(|| vec![Rat::zero(), Rat::one(), Rat::from_int(2)]),
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Execute a batch scenario (safe execution when a ledger is present)
    /// and write the execution trace.
    Run(CommonArgs),
    /// Execute with per-user balances; the scenario must carry a ledger.
    RunNoshort(CommonArgs),
    /// Execute on the sequential legacy baseline, in arrival order.
    LegacyRun(CommonArgs),
    /// Grid-search a sandwich around the scenario's single buy order on
    /// the legacy baseline.
    DemoSandwich {
        #[command(flatten)]
        common: CommonArgs,
        /// Front-run amounts to evaluate.
        #[arg(long, value_delimiter = ',')]
        grid_amounts: Option<Vec<Rat>>,
    },
    /// Exhaustive arbitrage-witness search over a strategy grid.
    SearchArb {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Engine to attack: "batch" or "legacy".
        #[arg(long, default_value = "batch")]
        engine: String,
    },
    /// Exhaustive deviation search for strategic play that beats the
    /// honest strategy.
    SearchIc {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Engine to test: "batch" or "legacy".
        #[arg(long, default_value = "batch")]
        engine: String,
        /// Belief rate for the total-ordering search (ledgered scenarios).
        #[arg(long)]
        belief: Option<Rat>,
    },
}

fn load_scenario(common: &CommonArgs) -> anyhow::Result<(Scenario, Config)> {
    let text = fs::read_to_string(&common.scenario)
        .with_context(|| format!("reading {}", common.scenario.display()))?;
    let file = ScenarioFile::from_json(&text)?;
    let scenario = file.into_scenario(common.seed)?;
    let mut config = Config::default();
    if let Some(eps) = &common.eps {
        if !eps.is_positive() {
            bail!("--eps must be positive");
        }
        config.eps = eps.clone();
    }
    Ok((scenario, config))
}

fn emit(common: &CommonArgs, payload: &str) -> anyhow::Result<()> {
    match &common.out {
        Some(path) => {
            fs::write(path, payload).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{payload}"),
    }
    Ok(())
}

fn summarize(outcome: &BatchOutcome) -> serde_json::Value {
    serde_json::json!({
        "start_pool": outcome.start_pool,
        "end_pool": outcome.end_pool,
        "dominance": format!("{:?}", outcome.dominance),
        "per_user": outcome.per_user,
        "fills": outcome.fills,
    })
}

fn run_engine_command(common: &CommonArgs, engine: EngineKind, require_ledger: bool) -> anyhow::Result<()> {
    let (scenario, config) = load_scenario(common)?;
    if require_ledger && scenario.ledger.is_none() {
        return Err(Error::validation("ledger", "this command requires a ledger section").into());
    }
    let cp = ConstantProduct;
    let outcome = match engine {
        EngineKind::Batch => match &scenario.ledger {
            Some(ledger) => {
                run_batch_noshort(
                    &cp,
                    &scenario.pool,
                    ledger,
                    &scenario.honest_orders,
                    &scenario.tiebreak,
                    &config,
                )?
                .0
            }
            None => run_batch(&cp, &scenario.pool, &scenario.honest_orders, &scenario.tiebreak, &config)?,
        },
        EngineKind::Legacy => batchswap_core::adversary::execute_engine(
            &cp,
            EngineKind::Legacy,
            &scenario.pool,
            &scenario.honest_orders,
            &scenario.tiebreak,
            None,
            &config,
        )?,
    };
    emit(common, &trace_to_jsonl(&outcome.trace, common.decimal))?;
    let summary = serde_json::to_string_pretty(&summarize(&outcome))?;
    if common.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}

fn parse_engine(s: &str) -> anyhow::Result<EngineKind> {
    match s {
        "batch" => Ok(EngineKind::Batch),
        "legacy" => Ok(EngineKind::Legacy),
        other => bail!("invalid engine {other:?}; expected \"batch\" or \"legacy\""),
    }
}

/// Ok(true) means findings against the batch mechanism: exit 2.
fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run(common) => {
            run_engine_command(&common, EngineKind::Batch, false)?;
            Ok(false)
        }
        Command::RunNoshort(common) => {
            run_engine_command(&common, EngineKind::Batch, true)?;
            Ok(false)
        }
        Command::LegacyRun(common) => {
            run_engine_command(&common, EngineKind::Legacy, false)?;
            Ok(false)
        }
        Command::DemoSandwich { common, grid_amounts } => {
            let (scenario, config) = load_scenario(&common)?;
            let victim = match scenario.honest_orders.as_slice() {
                [only] if only.side == Side::BuyX => only.clone(),
                _ => {
                    return Err(Error::validation(
                        "orders",
                        "demo-sandwich expects exactly one honest buy_x order as the victim",
                    )
                    .into())
                }
            };
            let amounts = grid_amounts.unwrap_or_else(|| (1..=40).map(Rat::from_int).collect());
            let cp = ConstantProduct;
            let report = sandwich_attack(&cp, &scenario.pool, &victim, &amounts, &config)?;
            eprintln!(
                "sandwich: best front-run {} for profit {}",
                report.best_front, report.best_profit
            );
            emit(&common, &serde_json::to_string_pretty(&report)?)?;
            Ok(false)
        }
        Command::SearchArb { common, grid, engine } => {
            let (scenario, config) = load_scenario(&common)?;
            let engine = parse_engine(&engine)?;
            let grid = grid.build()?;
            let cp = ConstantProduct;
            let started = Instant::now();
            let report = search_arbitrage(&cp, &scenario, &grid, engine, &config)?;
            eprintln!(
                "search-arb: {} runs in {:?}, {} witness(es)",
                report.runs,
                started.elapsed(),
                report.witnesses.len()
            );
            let hit = engine == EngineKind::Batch && !report.witnesses.is_empty();
            emit(&common, &serde_json::to_string_pretty(&report)?)?;
            Ok(hit)
        }
        Command::SearchIc { common, grid, engine, belief } => {
            let (scenario, config) = load_scenario(&common)?;
            let engine = parse_engine(&engine)?;
            let grid = grid.build()?;
            let cp = ConstantProduct;
            let started = Instant::now();
            let report = if let Some(ledger) = &scenario.ledger {
                let belief = belief.ok_or_else(|| {
                    anyhow!("--belief is required for ledgered scenarios (total-ordering search)")
                })?;
                if engine != EngineKind::Batch {
                    bail!("the total-ordering search runs on the batch engine");
                }
                if ledger.get(STRATEGIC_USER).is_none() {
                    return Err(Error::validation(
                        "ledger",
                        format!("search-ic needs a {STRATEGIC_USER} position in the ledger"),
                    )
                    .into());
                }
                search_ic_noshort(&cp, &scenario, &belief, &grid, &config)?
            } else {
                let user_type = scenario.adversary.clone().ok_or_else(|| {
                    Error::validation("adversary", "search-ic needs an adversary type in the scenario")
                })?;
                search_ic_deviations(&cp, &scenario, &user_type, &grid, engine, &config)?
            };
            eprintln!(
                "search-ic: {} runs in {:?}, {} counterexample(s)",
                report.runs,
                started.elapsed(),
                report.counterexamples.len()
            );
            let hit = engine == EngineKind::Batch && !report.counterexamples.is_empty();
            emit(&common, &serde_json::to_string_pretty(&report)?)?;
            Ok(hit)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("findings against the batch mechanism; failing loudly");
            ExitCode::from(2)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
