//! Adversary oracles and baselines.
//!
//! This module provides the machinery that *tests* the batch mechanism
//! rather than implementing it: a legacy sequential AMM baseline (the
//! first-come-first-serve model that sandwich attacks exploit), exhaustive
//! grid searches for arbitrage witnesses and profitable deviations, and
//! the converter that turns any arbitrage witness into a scenario whose
//! incentive search must flag a violation.
//!
//! Searches are exhaustive over declared finite grids, never sampled, so an
//! empty witness list is a checkable statement about the grid. Grid
//! membership is part of every report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amm::{self, PoolState, Potential};
use crate::error::{Error, Result};
use crate::mechanism::{
    self, aggregate_outcome, exec_against_pool, run_batch, BatchOutcome, Config, Order, OrderId,
    Side, TieBreak,
};
use crate::noshort::{run_batch_noshort, Ledger};
use crate::numerics::Rat;
use crate::ordering::{compare, refutes_dominance, total_value, Comparison, Outcome, UserType};

/// Reserved user id for the strategic player in searches.
pub const STRATEGIC_USER: &str = "@strategic";

/// Hard cap on fills considered by subset enumeration (2^12 subsets).
pub const SUBSET_FILL_LIMIT: usize = 12;

/// Honest-order count up to which Plain-model censorship enumerates all
/// subsets.
pub const CENSOR_ENUM_LIMIT: usize = 6;

/// Who controls inclusion and sequencing.
///
/// In `Plain`, a single block producer may inject orders with arbitrary
/// arrival metadata and censor honest orders. In `WeakFairSequencing`, a
/// decentralized sequencer fixes ordering by arrival time: the strategic
/// player may delay (α ≥ α*) but never backdate, censor, or alter honest
/// orders — front-running by being faster is still possible.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Plain,
    WeakFairSequencing,
}

/// Which execution engine a search drives.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    /// The two-phase batch mechanism (with safe execution when the
    /// scenario carries a ledger).
    Batch,
    /// Sequential maximal execution in arrival order.
    Legacy,
}

impl EngineKind {
    pub fn id(self, with_ledger: bool) -> &'static str {
        match (self, with_ledger) {
            (EngineKind::Batch, false) => "batch",
            (EngineKind::Batch, true) => "batch_noshort",
            (EngineKind::Legacy, _) => "legacy",
        }
    }
}

/// A complete search setup: a pool, the honest order flow, the strategic
/// player's intrinsic type, and the execution environment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub pool: PoolState,
    pub honest_orders: Vec<Order>,
    pub adversary: Option<UserType>,
    pub model: Model,
    pub tiebreak: TieBreak,
    pub ledger: Option<Ledger>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let mut ids = std::collections::BTreeSet::new();
        for (i, order) in self.honest_orders.iter().enumerate() {
            order.validate()?;
            if order.user.starts_with('@') {
                return Err(Error::validation(
                    format!("orders[{i}].user"),
                    "user names starting with '@' are reserved for the searcher",
                ));
            }
            if !ids.insert(order.id) {
                return Err(Error::validation(
                    format!("orders[{i}].id"),
                    format!("duplicate order id {}", order.id),
                ));
            }
        }
        if let Some(ledger) = &self.ledger {
            for (user, pos) in &ledger.0 {
                if pos.x.is_negative() || pos.y.is_negative() {
                    return Err(Error::validation(
                        format!("ledger.{user}"),
                        format!("negative position ({}, {})", pos.x, pos.y),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The strategic player's intrinsic arrival time: the declared type's,
    /// or just ahead of every honest order (a fast network can front-run).
    pub fn adversary_arrival(&self) -> Rat {
        if let Some(t) = &self.adversary {
            return t.arrival.clone();
        }
        self.honest_orders
            .iter()
            .map(|o| &o.arrival)
            .min()
            .map(|a| a - &Rat::one())
            .unwrap_or_else(Rat::zero)
    }

    pub fn adversary_type(&self) -> UserType {
        self.adversary.clone().unwrap_or_else(|| {
            UserType::new(Side::BuyX, Rat::zero(), Rat::one(), self.adversary_arrival())
        })
    }
}

/// Runs the selected engine over one assembled order vector.
pub fn execute_engine<P: Potential>(
    potential: &P,
    engine: EngineKind,
    pool: &PoolState,
    orders: &[Order],
    tiebreak: &TieBreak,
    ledger: Option<&Ledger>,
    config: &Config,
) -> Result<BatchOutcome> {
    match (engine, ledger) {
        (EngineKind::Batch, None) => run_batch(potential, pool, orders, tiebreak, config),
        (EngineKind::Batch, Some(ledger)) => {
            run_batch_noshort(potential, pool, ledger, orders, tiebreak, config).map(|(o, _)| o)
        }
        (EngineKind::Legacy, None) => {
            let mut seq = orders.to_vec();
            seq.sort_by(|a, b| (&a.arrival, a.submit_index).cmp(&(&b.arrival, b.submit_index)));
            legacy_sequential_run(potential, pool, &seq, config)
        }
        (EngineKind::Legacy, Some(_)) => Err(Error::validation(
            "engine",
            "the legacy baseline does not support ledgers",
        )),
    }
}

/// The first-come-first-serve baseline: each order in sequence fills
/// maximally subject to its own rate limit, with the potential maintained
/// after every order. No filtering, no netting — position in the block is
/// everything, which is exactly what sandwich attacks exploit.
pub fn legacy_sequential_run<P: Potential>(
    potential: &P,
    pool: &PoolState,
    sequence: &[Order],
    config: &Config,
) -> Result<BatchOutcome> {
    mechanism::validate_batch(sequence)?;
    let r0 = amm::rate(potential, pool);
    let mut current = pool.clone();
    let mut parts = Vec::with_capacity(sequence.len());
    for order in sequence {
        let (part, next) = exec_against_pool(potential, &current, order, &order.amount, &config.eps)?;
        parts.push(part);
        current = next;
    }
    let dominance = mechanism::classify_dominance(sequence, &r0);
    Ok(aggregate_outcome(
        sequence,
        &[],
        parts,
        pool.clone(),
        current,
        dominance,
        None,
    ))
}

/// A risk-free gain: a subset of fills whose aggregate gains in both assets
/// are non-negative with at least one strictly positive.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArbWitness {
    /// Orders the strategic player injected in the witnessing run.
    pub injected: Vec<Order>,
    /// Honest orders censored in the witnessing run (Plain model only).
    pub censored: Vec<OrderId>,
    /// The profitable subset of fills, by order id.
    pub subset: Vec<OrderId>,
    pub dx: Rat,
    pub dy: Rat,
}

/// Exhaustively checks subsets of fills for a risk-free gain.
///
/// With `strategic_user` set, only that user's fills are considered;
/// otherwise every executed fill participates. Refuses (rather than
/// samples) when the subset space exceeds the hard limit.
pub fn find_arbitrage(outcome: &BatchOutcome, strategic_user: Option<&str>) -> Result<Option<ArbWitness>> {
    let fills: Vec<_> = outcome
        .fills
        .iter()
        .filter(|f| strategic_user.is_none_or(|u| f.user == u))
        .filter(|f| !f.net_x.is_zero() || !f.net_y.is_zero())
        .collect();
    if fills.len() > SUBSET_FILL_LIMIT {
        return Err(Error::SubsetLimit {
            fills: fills.len(),
            limit: SUBSET_FILL_LIMIT,
        });
    }
    for mask in 1u32..(1u32 << fills.len()) {
        let mut dx = Rat::zero();
        let mut dy = Rat::zero();
        for (i, fill) in fills.iter().enumerate() {
            if mask & (1 << i) != 0 {
                dx = dx + &fill.net_x;
                dy = dy + &fill.net_y;
            }
        }
        if !dx.is_negative() && !dy.is_negative() && (dx.is_positive() || dy.is_positive()) {
            let subset = fills
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, f)| f.order_id)
                .collect();
            return Ok(Some(ArbWitness {
                injected: Vec::new(),
                censored: Vec::new(),
                subset,
                dx,
                dy,
            }));
        }
    }
    Ok(None)
}

/// Result of grid-searching sandwich front-run sizes against the legacy
/// baseline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SandwichReport {
    pub victim: Order,
    pub evaluated: Vec<Rat>,
    /// Front-run amount maximizing attacker profit, with that profit.
    pub best_front: Rat,
    pub best_profit: Rat,
    /// The witnessing three-order block at the optimum.
    pub witness: Option<ArbWitness>,
}

/// Grid-searches the classic front-run/back-run envelope around a victim
/// buy order on the legacy baseline. The attacker's limits are computed
/// exactly so its own orders never bind.
pub fn sandwich_attack<P: Potential>(
    potential: &P,
    pool: &PoolState,
    victim: &Order,
    amounts: &[Rat],
    config: &Config,
) -> Result<SandwichReport> {
    if victim.side != Side::BuyX {
        return Err(Error::validation(
            "victim",
            format!("sandwich demo expects a buy_x victim, got {}", victim.side),
        ));
    }
    let level = potential.phi(pool.x(), pool.y());
    let mut best_front = Rat::zero();
    let mut best_profit = Rat::zero();
    let mut best_witness = None;
    for a in amounts {
        if !a.is_positive() || a >= pool.x() {
            continue;
        }
        // Front-run limit: exactly the rate after buying `a`, so the buy
        // fills completely.
        let x_after_buy = pool.x() - a;
        let y_after_buy = potential.y_of_x(&x_after_buy, &level)?;
        let front_limit = potential.rate(&x_after_buy, &y_after_buy);
        let front = Order {
            id: OrderId(1000),
            user: STRATEGIC_USER.into(),
            side: Side::BuyX,
            amount: a.clone(),
            limit_rate: front_limit,
            arrival: &victim.arrival - &Rat::one(),
            submit_index: 1000,
        };
        // Discover the pool after the victim executes, then pick the
        // back-run floor exactly at the post-sale rate.
        let probe = legacy_sequential_run(potential, pool, &[front.clone(), victim.clone()], config)?;
        let x_after_victim = probe.end_pool.x();
        let x_after_back = x_after_victim + a;
        let y_after_back = potential.y_of_x(&x_after_back, &level)?;
        let back_limit = potential.rate(&x_after_back, &y_after_back);
        let back = Order {
            id: OrderId(1001),
            user: STRATEGIC_USER.into(),
            side: Side::SellX,
            amount: a.clone(),
            limit_rate: back_limit,
            arrival: &victim.arrival + &Rat::one(),
            submit_index: 1001,
        };
        let outcome = legacy_sequential_run(
            potential,
            pool,
            &[front.clone(), victim.clone(), back.clone()],
            config,
        )?;
        let attacker = &outcome.per_user[STRATEGIC_USER];
        if !attacker.dx.is_zero() {
            return Err(Error::InvariantViolation(format!(
                "sandwich legs must net to zero X, got {}",
                attacker.dx
            )));
        }
        let profit = attacker.dy.clone();
        if profit > best_profit {
            best_profit = profit;
            best_front = a.clone();
            let mut witness = find_arbitrage(&outcome, Some(STRATEGIC_USER))?.ok_or_else(|| {
                Error::InvariantViolation("profitable sandwich must yield a witness".into())
            })?;
            witness.injected = vec![front, back];
            best_witness = Some(witness);
        }
    }
    Ok(SandwichReport {
        victim: victim.clone(),
        evaluated: amounts.to_vec(),
        best_front,
        best_profit,
        witness: best_witness,
    })
}

/// Finite discretization of the strategic order space.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StrategyGrid {
    pub amounts: Vec<Rat>,
    pub rates: Vec<Rat>,
    pub sides: Vec<Side>,
    pub max_orders: usize,
    /// Non-negative delays added to the strategic player's intrinsic
    /// arrival time (weak fair-sequencing searches).
    pub arrival_offsets: Vec<Rat>,
}

impl StrategyGrid {
    /// The grid spanned by a concrete set of orders, relative to a base
    /// arrival time. Used to replay witnesses through the deviation search.
    pub fn covering(orders: &[Order], base_arrival: &Rat) -> Self {
        let mut amounts: Vec<Rat> = orders.iter().map(|o| o.amount.clone()).collect();
        let mut rates: Vec<Rat> = orders.iter().map(|o| o.limit_rate.clone()).collect();
        let mut sides: Vec<Side> = orders.iter().map(|o| o.side).collect();
        let mut offsets: Vec<Rat> = orders.iter().map(|o| &o.arrival - base_arrival).collect();
        amounts.sort();
        amounts.dedup();
        rates.sort();
        rates.dedup();
        sides.sort_by_key(|s| format!("{s}"));
        sides.dedup();
        offsets.sort();
        offsets.dedup();
        StrategyGrid {
            amounts,
            rates,
            sides,
            max_orders: orders.len(),
            arrival_offsets: offsets,
        }
    }

    fn decorated(&self, arrivals: &[Rat]) -> Vec<(Side, Rat, Rat, Rat)> {
        let mut out = Vec::new();
        for side in &self.sides {
            for amount in &self.amounts {
                for rate in &self.rates {
                    for arrival in arrivals {
                        out.push((*side, amount.clone(), rate.clone(), arrival.clone()));
                    }
                }
            }
        }
        out
    }

    pub fn len_description(&self) -> String {
        format!(
            "{} sides x {} amounts x {} rates, up to {} orders",
            self.sides.len(),
            self.amounts.len(),
            self.rates.len(),
            self.max_orders
        )
    }
}

/// Arrival times the strategic player can occupy, given the model.
///
/// Under arrival-stable ordering the player can never win a tie against an
/// honest order (submission index breaks ties), so the distinct effective
/// slots are: before everyone, or immediately after each honest arrival.
/// Under random tie-breaking arrival is ignored and a single slot suffices.
pub fn arrival_candidates(scenario: &Scenario, grid: &StrategyGrid) -> Vec<Rat> {
    if matches!(scenario.tiebreak, TieBreak::Random { .. }) {
        return vec![scenario.adversary_arrival()];
    }
    match scenario.model {
        Model::WeakFairSequencing => {
            let base = scenario.adversary_arrival();
            let mut v: Vec<Rat> = grid.arrival_offsets.iter().map(|o| &base + o).collect();
            v.sort();
            v.dedup();
            v
        }
        Model::Plain => {
            let mut v: Vec<Rat> = scenario.honest_orders.iter().map(|o| o.arrival.clone()).collect();
            let before = v
                .iter()
                .min()
                .map(|m| m - &Rat::one())
                .unwrap_or_else(Rat::zero);
            v.push(before);
            v.sort();
            v.dedup();
            v
        }
    }
}

fn censor_subsets(scenario: &Scenario) -> Vec<Vec<bool>> {
    let n = scenario.honest_orders.len();
    match scenario.model {
        Model::WeakFairSequencing => vec![vec![true; n]],
        Model::Plain => {
            if n > CENSOR_ENUM_LIMIT {
                return vec![vec![true; n]];
            }
            (0..(1u32 << n))
                .map(|mask| (0..n).map(|i| mask & (1 << i) != 0).collect())
                .collect()
        }
    }
}

fn instantiate(
    scenario: &Scenario,
    keep: &[bool],
    picks: &[usize],
    decorated: &[(Side, Rat, Rat, Rat)],
) -> Vec<Order> {
    let mut orders: Vec<Order> = scenario
        .honest_orders
        .iter()
        .zip(keep)
        .filter(|(_, k)| **k)
        .map(|(o, _)| o.clone())
        .collect();
    let base = scenario
        .honest_orders
        .iter()
        .map(|o| o.id.0)
        .max()
        .map_or(0, |m| m + 1);
    for (n, &i) in picks.iter().enumerate() {
        let (side, amount, rate, arrival) = decorated[i].clone();
        orders.push(Order {
            id: OrderId(base + n as u32),
            user: STRATEGIC_USER.into(),
            side,
            amount,
            limit_rate: rate,
            arrival,
            submit_index: base + n as u32,
        });
    }
    orders
}

fn visit_multisets<F: FnMut(&[usize])>(n: usize, remaining: usize, start: usize, stack: &mut Vec<usize>, f: &mut F) {
    if remaining == 0 {
        f(stack);
        return;
    }
    for i in start..n {
        stack.push(i);
        visit_multisets(n, remaining - 1, i, stack, f);
        stack.pop();
    }
}

/// Runs `eval` over every multiset of up to `max_k` indices below `n`,
/// in parallel, preserving deterministic result order.
fn scan_multisets<T: Send, F>(n: usize, max_k: usize, eval: F) -> (u64, Vec<T>)
where
    F: Fn(&[usize]) -> Option<T> + Sync,
{
    let mut runs = 0u64;
    let mut hits = Vec::new();
    if let Some(t) = eval(&[]) {
        hits.push(t);
    }
    runs += 1;
    for k in 1..=max_k {
        let per_first: Vec<(u64, Vec<T>)> = (0..n)
            .into_par_iter()
            .map(|first| {
                let mut local_runs = 0u64;
                let mut local_hits = Vec::new();
                let mut stack = vec![first];
                visit_multisets(n, k - 1, first, &mut stack, &mut |picks| {
                    local_runs += 1;
                    if let Some(t) = eval(picks) {
                        local_hits.push(t);
                    }
                });
                stack.pop();
                (local_runs, local_hits)
            })
            .collect();
        for (r, h) in per_first {
            runs += r;
            hits.extend(h);
        }
    }
    (runs, hits)
}

/// Search report for arbitrage witnesses.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArbReport {
    pub engine: String,
    pub model: Model,
    pub tiebreak: TieBreak,
    pub grid: StrategyGrid,
    pub arrival_candidates: Vec<Rat>,
    pub censorship_subsets: usize,
    pub runs: u64,
    pub witnesses: Vec<ArbWitness>,
}

/// Enumerates every strategic order multiset over the grid (plus, in the
/// Plain model, every censorship subset of the honest orders), runs the
/// engine, and collects all risk-free-gain witnesses over all fill subsets.
pub fn search_arbitrage<P: Potential>(
    potential: &P,
    scenario: &Scenario,
    grid: &StrategyGrid,
    engine: EngineKind,
    config: &Config,
) -> Result<ArbReport> {
    scenario.validate()?;
    if let Some(ledger) = &scenario.ledger {
        if ledger.get(STRATEGIC_USER).is_none() {
            return Err(Error::validation(
                "ledger",
                format!("searches with a ledger need a {STRATEGIC_USER} position"),
            ));
        }
    }
    // Every run's fill count is bounded by honest + injected orders; refuse
    // up front rather than panicking mid-search.
    let worst_case_fills = scenario.honest_orders.len() + grid.max_orders;
    if worst_case_fills > SUBSET_FILL_LIMIT {
        return Err(Error::SubsetLimit {
            fills: worst_case_fills,
            limit: SUBSET_FILL_LIMIT,
        });
    }
    let arrivals = arrival_candidates(scenario, grid);
    let decorated = grid.decorated(&arrivals);
    let censors = censor_subsets(scenario);

    let mut runs = 0u64;
    let mut witnesses = Vec::new();
    for keep in &censors {
        let censored: Vec<OrderId> = scenario
            .honest_orders
            .iter()
            .zip(keep)
            .filter(|(_, k)| !**k)
            .map(|(o, _)| o.id)
            .collect();
        let (r, hits) = scan_multisets(decorated.len(), grid.max_orders, |picks| {
            let orders = instantiate(scenario, keep, picks, &decorated);
            let outcome = execute_engine(
                potential,
                engine,
                &scenario.pool,
                &orders,
                &scenario.tiebreak,
                scenario.ledger.as_ref(),
                config,
            )
            .expect("engine must not fail on grid inputs");
            match find_arbitrage(&outcome, None).expect("fill count bounded by grid") {
                Some(mut w) => {
                    w.injected = orders
                        .iter()
                        .filter(|o| o.user == STRATEGIC_USER)
                        .cloned()
                        .collect();
                    w.censored = censored.clone();
                    Some(w)
                }
                None => None,
            }
        });
        runs += r;
        witnesses.extend(hits);
    }
    Ok(ArbReport {
        engine: engine.id(scenario.ledger.is_some()).to_string(),
        model: scenario.model,
        tiebreak: scenario.tiebreak,
        grid: grid.clone(),
        arrival_candidates: arrivals,
        censorship_subsets: censors.len(),
        runs,
        witnesses,
    })
}

/// A deviation that beat the honest strategy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IcCounterexample {
    pub deviation: Vec<Order>,
    pub honest_outcome: Outcome,
    pub deviant_outcome: Outcome,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IcReport {
    pub engine: String,
    pub model: Model,
    pub tiebreak: TieBreak,
    pub user_type: UserType,
    pub grid: StrategyGrid,
    pub runs: u64,
    pub counterexamples: Vec<IcCounterexample>,
}

/// Exhaustively checks whether any grid deviation produces a strictly
/// better outcome than the honest single truthful order.
///
/// Deviations are multisets of up to `min(max_orders, 2)` orders with
/// arrivals `α* + offset` (delays only, per weak fair sequencing), plus
/// the empty deviation. A counterexample is flagged iff the deviant
/// outcome compares strictly better under the user's partial order.
pub fn search_ic_deviations<P: Potential>(
    potential: &P,
    scenario: &Scenario,
    user_type: &UserType,
    grid: &StrategyGrid,
    engine: EngineKind,
    config: &Config,
) -> Result<IcReport> {
    scenario.validate()?;
    if scenario.model != Model::WeakFairSequencing {
        return Err(Error::validation(
            "model",
            "incentive searches are defined in the weak fair-sequencing model",
        ));
    }
    if scenario.tiebreak != TieBreak::ArrivalStable {
        return Err(Error::validation(
            "tiebreak",
            "incentive searches require arrival-stable tie-breaking",
        ));
    }
    if scenario.ledger.is_some() {
        return Err(Error::validation(
            "ledger",
            "use the total-ordering search for ledgered scenarios",
        ));
    }

    let honest_outcome = {
        let orders = with_strategic_orders(scenario, &[strategic_from_type(scenario, user_type)]);
        let outcome = execute_engine(
            potential,
            engine,
            &scenario.pool,
            &orders,
            &scenario.tiebreak,
            None,
            config,
        )?;
        user_outcome(&outcome)
    };

    let base = user_type.arrival.clone();
    let arrivals: Vec<Rat> = {
        let mut v: Vec<Rat> = grid.arrival_offsets.iter().map(|o| &base + o).collect();
        v.sort();
        v.dedup();
        v
    };
    let decorated = grid.decorated(&arrivals);
    let max_k = grid.max_orders.min(2);

    let (runs, counterexamples) = scan_multisets(decorated.len(), max_k, |picks| {
        let keep = vec![true; scenario.honest_orders.len()];
        let orders = instantiate(scenario, &keep, picks, &decorated);
        let outcome = execute_engine(
            potential,
            engine,
            &scenario.pool,
            &orders,
            &scenario.tiebreak,
            None,
            config,
        )
        .expect("engine must not fail on grid inputs");
        let deviant = user_outcome(&outcome);
        let verdict = compare(user_type, &deviant, &honest_outcome);
        // The refutation certificates must never contradict the comparison.
        debug_assert!(
            !(refutes_dominance(user_type, &honest_outcome, &deviant) && verdict == Comparison::Better),
            "refutation certificate contradicts a Better verdict"
        );
        if verdict == Comparison::Better {
            Some(IcCounterexample {
                deviation: orders.iter().filter(|o| o.user == STRATEGIC_USER).cloned().collect(),
                honest_outcome: honest_outcome.clone(),
                deviant_outcome: deviant,
            })
        } else {
            None
        }
    });

    Ok(IcReport {
        engine: engine.id(false).to_string(),
        model: scenario.model,
        tiebreak: scenario.tiebreak,
        user_type: user_type.clone(),
        grid: grid.clone(),
        runs,
        counterexamples,
    })
}

/// Total-ordering incentive search for the no-short-selling variant: the
/// honest strategy sells the overvalued asset in full; a counterexample is
/// any deviation with strictly higher position value at the belief rate.
pub fn search_ic_noshort<P: Potential>(
    potential: &P,
    scenario: &Scenario,
    belief_rate: &Rat,
    grid: &StrategyGrid,
    config: &Config,
) -> Result<IcReport> {
    scenario.validate()?;
    let Some(ledger) = &scenario.ledger else {
        return Err(Error::validation("ledger", "the total-ordering search needs a ledger"));
    };
    let Some(position) = ledger.get(STRATEGIC_USER) else {
        return Err(Error::validation(
            "ledger",
            format!("missing {STRATEGIC_USER} position"),
        ));
    };
    if scenario.model != Model::WeakFairSequencing || scenario.tiebreak != TieBreak::ArrivalStable {
        return Err(Error::validation(
            "model",
            "the total-ordering search runs under weak fair sequencing with arrival-stable ties",
        ));
    }

    let r0 = amm::rate(potential, &scenario.pool);
    let base = scenario.adversary_arrival();
    let honest_type = crate::noshort::honest_strategy_noshort(belief_rate, position, &r0, &base);
    let honest_value = {
        let orders = with_strategic_orders(scenario, &[strategic_from_type(scenario, &honest_type)]);
        let outcome = execute_engine(
            potential,
            EngineKind::Batch,
            &scenario.pool,
            &orders,
            &scenario.tiebreak,
            Some(ledger),
            config,
        )?;
        total_value(belief_rate, &user_outcome(&outcome))
    };

    let arrivals: Vec<Rat> = {
        let mut v: Vec<Rat> = grid.arrival_offsets.iter().map(|o| &base + o).collect();
        v.sort();
        v.dedup();
        v
    };
    let decorated = grid.decorated(&arrivals);
    let max_k = grid.max_orders.min(2);

    let (runs, counterexamples) = scan_multisets(decorated.len(), max_k, |picks| {
        let keep = vec![true; scenario.honest_orders.len()];
        let orders = instantiate(scenario, &keep, picks, &decorated);
        let outcome = execute_engine(
            potential,
            EngineKind::Batch,
            &scenario.pool,
            &orders,
            &scenario.tiebreak,
            Some(ledger),
            config,
        )
        .expect("engine must not fail on grid inputs");
        let deviant = user_outcome(&outcome);
        let value = total_value(belief_rate, &deviant);
        if value > honest_value {
            Some(IcCounterexample {
                deviation: orders.iter().filter(|o| o.user == STRATEGIC_USER).cloned().collect(),
                honest_outcome: Outcome::zero(),
                deviant_outcome: deviant,
            })
        } else {
            None
        }
    });

    Ok(IcReport {
        engine: "batch_noshort".to_string(),
        model: scenario.model,
        tiebreak: scenario.tiebreak,
        user_type: honest_type,
        grid: grid.clone(),
        runs,
        counterexamples,
    })
}

fn strategic_from_type(scenario: &Scenario, t: &UserType) -> Order {
    let base = scenario
        .honest_orders
        .iter()
        .map(|o| o.id.0)
        .max()
        .map_or(0, |m| m + 1);
    mechanism::honest_order(t, STRATEGIC_USER.into(), OrderId(base), base)
}

fn with_strategic_orders(scenario: &Scenario, strategic: &[Order]) -> Vec<Order> {
    let mut orders = scenario.honest_orders.clone();
    orders.extend(strategic.iter().cloned());
    orders
}

fn user_outcome(outcome: &BatchOutcome) -> Outcome {
    outcome
        .per_user
        .get(STRATEGIC_USER)
        .cloned()
        .unwrap_or_else(Outcome::zero)
}

/// The converted scenario produced from an arbitrage witness, plus the
/// deviation grid that is guaranteed to contain the witnessing orders.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvertedIc {
    pub scenario: Scenario,
    pub adversary_type: UserType,
    pub grid: StrategyGrid,
}

/// Turns an arbitrage witness into an incentive-compatibility violation
/// scenario: the profitable fill subset becomes the injected orders of a
/// zero-demand strategic user, and everything else stays honest. Running
/// the deviation search over the returned grid must flag a counterexample.
pub fn arbitrage_to_ic_violation(witness: &ArbWitness, scenario: &Scenario) -> Result<ConvertedIc> {
    if witness.subset.is_empty() {
        return Err(Error::validation("witness", "empty fill subset"));
    }
    // The witnessing run's full order list: honest minus censored, plus the
    // injected strategic orders.
    let mut run_orders: Vec<Order> = scenario
        .honest_orders
        .iter()
        .filter(|o| !witness.censored.contains(&o.id))
        .cloned()
        .collect();
    run_orders.extend(witness.injected.iter().cloned());
    let mut profitable = Vec::new();
    for id in &witness.subset {
        let order = run_orders
            .iter()
            .find(|o| o.id == *id)
            .ok_or_else(|| Error::validation("witness", format!("subset order {id} not in the run")))?;
        profitable.push(order.clone());
    }
    let base_arrival = profitable
        .iter()
        .map(|o| o.arrival.clone())
        .min()
        .expect("nonempty");

    // Renumber: the kept honest orders first, the injected set becomes the
    // deviation space.
    let honest: Vec<Order> = run_orders
        .iter()
        .filter(|o| !witness.subset.contains(&o.id))
        .enumerate()
        .map(|(i, o)| {
            let mut o = o.clone();
            o.id = OrderId(i as u32);
            o.submit_index = i as u32;
            if o.user.starts_with('@') {
                o.user = format!("user{i}");
            }
            o
        })
        .collect();

    let adversary_type = UserType::new(Side::BuyX, Rat::zero(), Rat::one(), base_arrival.clone());
    let grid = StrategyGrid::covering(&profitable, &base_arrival);
    let converted = Scenario {
        pool: scenario.pool.clone(),
        honest_orders: honest,
        adversary: Some(adversary_type.clone()),
        model: Model::WeakFairSequencing,
        tiebreak: TieBreak::ArrivalStable,
        ledger: scenario.ledger.clone(),
    };
    Ok(ConvertedIc {
        scenario: converted,
        adversary_type,
        grid,
    })
}
