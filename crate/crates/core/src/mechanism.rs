//! The two-phase batch swap pipeline.
//!
//! A batch is processed as: eligibility filter against the opening rate,
//! net-demand classification, a two-group sort with tie-breaking, an exact
//! split so a prefix nets to zero, fixed-rate matching of that prefix
//! (Phase 1, pool untouched), then sequential rate-capped execution of the
//! remaining one-sided orders against the curve (Phase 2).
//!
//! The whole pipeline is a pure function of `(pool, orders, tiebreak)`;
//! outputs are deterministic and the pool potential is conserved exactly.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::amm::{self, PoolState, Potential};
use crate::error::{Error, Result};
use crate::numerics::Rat;
use crate::ordering::{Outcome, UserType};

/// Stable identifier of a submitted order. Split halves share the parent id.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct OrderId(pub u32);

impl fmt::Display for OrderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type UserId = String;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    BuyX,
    SellX,
    BuyY,
    SellY,
}

impl Side {
    /// True for the Buy(X)/Sell(Y) group — orders that take X out of the
    /// pool when executed.
    pub fn takes_x(self) -> bool {
        matches!(self, Side::BuyX | Side::SellY)
    }

    /// True when the order amount is denominated in Y.
    pub fn prime_is_y(self) -> bool {
        matches!(self, Side::BuyY | Side::SellY)
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Side::BuyX => "buy_x",
            Side::SellX => "sell_x",
            Side::BuyY => "buy_y",
            Side::SellY => "sell_y",
        };
        f.write_str(s)
    }
}

/// A submitted order: trade up to `amount` units of the prime asset at
/// `limit_rate` (always quoted as Y per unit of X) or better.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub id: OrderId,
    pub user: UserId,
    pub side: Side,
    pub amount: Rat,
    pub limit_rate: Rat,
    pub arrival: Rat,
    pub submit_index: u32,
}

impl Order {
    pub fn validate(&self) -> Result<()> {
        if self.amount.is_negative() {
            return Err(Error::validation(
                format!("order {}", self.id),
                format!("amount must be non-negative, got {}", self.amount),
            ));
        }
        if !self.limit_rate.is_positive() {
            return Err(Error::validation(
                format!("order {}", self.id),
                format!("limit rate must be positive, got {}", self.limit_rate),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    One,
    Two,
    Skipped,
}

/// Per-order execution summary. `fulfilled` is in prime-asset units and the
/// average rate is always quoted as Y per X. `net_x`/`net_y` are the user's
/// net gains from this order, so subsets of fills can be audited directly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderFill {
    pub order_id: OrderId,
    pub user: UserId,
    pub side: Side,
    pub fulfilled: Rat,
    pub avg_rate: Rat,
    pub phase: Phase,
    pub net_x: Rat,
    pub net_y: Rat,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Dominance {
    BuyXDominant,
    BuyYDominant,
}

/// Tie-breaking regime for the sort step. `Random` permutes each side
/// group uniformly from the seed (which stands in for randomness provided
/// by the consensus layer and is always an input); `ArrivalStable` orders
/// each group by `(arrival, submit_index)`.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TieBreak {
    Random { seed: u64 },
    ArrivalStable,
}

/// One executed (sub)order: how the pool moved and what the user got.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub order_id: OrderId,
    pub user: UserId,
    pub side: Side,
    pub phase: Phase,
    pub pool_before: PoolState,
    pub pool_after: PoolState,
    pub dx: Rat,
    pub dy: Rat,
}

/// The boundary order that was split, and the two half amounts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub order_id: OrderId,
    pub first: Rat,
    pub second: Rat,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub fills: Vec<OrderFill>,
    pub per_user: BTreeMap<UserId, Outcome>,
    pub start_pool: PoolState,
    pub end_pool: PoolState,
    pub trace: Vec<TraceRecord>,
    pub dominance: Dominance,
    pub split: Option<SplitInfo>,
}

/// Engine parameters. `eps` bounds the under-fulfillment introduced by
/// directed rounding at the rate-cap boundary.
#[derive(Clone, Debug)]
pub struct Config {
    pub eps: Rat,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            eps: Rat::two_pow_neg(64),
        }
    }
}

/// Field and id validation for a whole batch. Fills aggregate by order id,
/// so ids must be unique within a batch.
pub(crate) fn validate_batch(orders: &[Order]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for order in orders {
        order.validate()?;
        if !seen.insert(order.id) {
            return Err(Error::validation(
                format!("order {}", order.id),
                "duplicate order id in batch",
            ));
        }
    }
    Ok(())
}

/// Net demand for X (in X units) if the order were executed at rate `r0`.
pub fn beta(order: &Order, r0: &Rat) -> Rat {
    match order.side {
        Side::BuyX => order.amount.clone(),
        Side::SellX => -&order.amount,
        Side::BuyY => -&(&order.amount / r0),
        Side::SellY => &order.amount / r0,
    }
}

/// Drops orders whose limit cannot be met even at the opening rate.
/// Comparisons are strict, so a limit exactly at `r0` is kept.
pub fn filter_eligible(orders: &[Order], r0: &Rat) -> (Vec<Order>, Vec<Order>) {
    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for o in orders {
        let eligible = if o.side.takes_x() {
            o.limit_rate >= *r0
        } else {
            o.limit_rate <= *r0
        };
        if eligible {
            kept.push(o.clone());
        } else {
            skipped.push(o.clone());
        }
    }
    (kept, skipped)
}

/// Dominance from the sign of an aggregate net X demand.
pub(crate) fn classify_dominance_sign(sigma: &Rat) -> Dominance {
    if sigma.is_negative() {
        Dominance::BuyYDominant
    } else {
        Dominance::BuyXDominant
    }
}

/// Sign of the aggregate net demand at the opening rate.
pub fn classify_dominance(orders: &[Order], r0: &Rat) -> Dominance {
    let sigma: Rat = orders.iter().map(|o| beta(o, r0)).sum();
    classify_dominance_sign(&sigma)
}

fn order_group(orders: Vec<Order>, tiebreak: &TieBreak, rng: &mut rand_chacha::ChaCha12Rng) -> Vec<Order> {
    let mut group = orders;
    match tiebreak {
        TieBreak::ArrivalStable => {
            group.sort_by(|a, b| (&a.arrival, a.submit_index).cmp(&(&b.arrival, b.submit_index)));
        }
        TieBreak::Random { .. } => {
            group.shuffle(rng);
        }
    }
    group
}

/// Two-group sort: minority side first, each group ordered by the
/// tie-breaking regime. The cross-group order is fixed by dominance; only
/// ties within a group are free.
pub(crate) fn sorted_groups(eligible: Vec<Order>, dominance: Dominance, tiebreak: &TieBreak) -> Vec<Order> {
    let majority_takes_x = matches!(dominance, Dominance::BuyXDominant);
    let (minority, majority): (Vec<Order>, Vec<Order>) = eligible
        .into_iter()
        .partition(|o| o.side.takes_x() != majority_takes_x);

    let seed = match tiebreak {
        TieBreak::Random { seed } => *seed,
        TieBreak::ArrivalStable => 0,
    };
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut sorted = order_group(minority, tiebreak, &mut rng);
    sorted.extend(order_group(majority, tiebreak, &mut rng));
    sorted
}

/// Two-group sort (minority side first), then locate and split the boundary
/// order so the first `j` entries have a beta-sum of exactly zero.
///
/// Returns the executable list, `j`, and the split if one was needed.
pub fn sort_and_split(
    eligible: Vec<Order>,
    dominance: Dominance,
    tiebreak: &TieBreak,
    r0: &Rat,
) -> (Vec<Order>, usize, Option<SplitInfo>) {
    let majority_takes_x = matches!(dominance, Dominance::BuyXDominant);
    let mut sorted = sorted_groups(eligible, dominance, tiebreak);

    // Signed so the majority side always contributes positively.
    let sign = if majority_takes_x { Rat::one() } else { -Rat::one() };
    let mut acc = Rat::zero();
    for (k, order) in sorted.iter().enumerate() {
        acc = acc + &sign * beta(order, r0);
        if acc.is_positive() {
            let excess = acc.clone();
            let amount_x = if order.side.prime_is_y() {
                &order.amount / r0
            } else {
                order.amount.clone()
            };
            let first_x = &amount_x - &excess;
            debug_assert!(!first_x.is_negative());
            if first_x.is_zero() {
                // Degenerate split: the prefix was already balanced.
                return (sorted, k, None);
            }
            let (first, second) = if order.side.prime_is_y() {
                (&first_x * r0, &excess * r0)
            } else {
                (first_x.clone(), excess.clone())
            };
            let split = SplitInfo {
                order_id: order.id,
                first: first.clone(),
                second: second.clone(),
            };
            let mut head = sorted[k].clone();
            head.amount = first;
            let mut tail = sorted[k].clone();
            tail.amount = second;
            sorted.splice(k..=k, [head, tail]);
            return (sorted, k + 1, Some(split));
        }
    }
    // No positive prefix: the whole batch nets to zero and Phase 2 is empty.
    debug_assert!(acc.is_zero());
    let j = sorted.len();
    (sorted, j, None)
}

/// A single executed piece of an order, before aggregation into
/// per-order fills.
#[derive(Clone, Debug)]
pub struct PartFill {
    pub order_id: OrderId,
    pub user: UserId,
    pub side: Side,
    pub phase: Phase,
    pub fulfilled: Rat,
    pub dx: Rat,
    pub dy: Rat,
    pub pool_before: PoolState,
    pub pool_after: PoolState,
}

/// Fully executes the balanced prefix at the fixed rate `r0`. The pool is
/// untouched; an imbalance here is an internal bug.
pub fn execute_phase1(pool: &PoolState, prefix: &[Order], r0: &Rat) -> Result<Vec<PartFill>> {
    let mut parts = Vec::with_capacity(prefix.len());
    let mut net_x = Rat::zero();
    let mut net_y = Rat::zero();
    for order in prefix {
        let (dx, dy) = match order.side {
            Side::BuyX => (order.amount.clone(), -&(&order.amount * r0)),
            Side::SellX => (-&order.amount, &order.amount * r0),
            Side::BuyY => (-&(&order.amount / r0), order.amount.clone()),
            Side::SellY => (&order.amount / r0, -&order.amount),
        };
        net_x = net_x + &dx;
        net_y = net_y + &dy;
        parts.push(PartFill {
            order_id: order.id,
            user: order.user.clone(),
            side: order.side,
            phase: Phase::One,
            fulfilled: order.amount.clone(),
            dx,
            dy,
            pool_before: pool.clone(),
            pool_after: pool.clone(),
        });
    }
    if !net_x.is_zero() || !net_y.is_zero() {
        return Err(Error::InvariantViolation(format!(
            "phase 1 must net to zero, got ({net_x}, {net_y})"
        )));
    }
    Ok(parts)
}

/// Executes one order against the live pool, maximally subject to its rate
/// limit and an optional payment bound on the prime asset for Y-denominated
/// sides. Returns the part fill and the updated pool.
pub(crate) fn exec_against_pool<P: Potential>(
    potential: &P,
    pool: &PoolState,
    order: &Order,
    remaining: &Rat,
    eps: &Rat,
) -> Result<(PartFill, PoolState)> {
    let level = potential.phi(pool.x(), pool.y());
    let zero_part = |pool: &PoolState| PartFill {
        order_id: order.id,
        user: order.user.clone(),
        side: order.side,
        phase: Phase::Two,
        fulfilled: Rat::zero(),
        dx: Rat::zero(),
        dy: Rat::zero(),
        pool_before: pool.clone(),
        pool_after: pool.clone(),
    };
    if !remaining.is_positive() {
        return Ok((zero_part(pool), pool.clone()));
    }
    let (fulfilled, dx, dy) = match order.side {
        Side::BuyX => {
            let cap = potential.max_buy_for_rate_cap(pool, &order.limit_rate, eps)?;
            let dx = remaining.clone().min(cap);
            if !dx.is_positive() {
                return Ok((zero_part(pool), pool.clone()));
            }
            let pay = amm::trade_cost(potential, pool, &dx)?;
            (dx.clone(), dx, -pay)
        }
        Side::SellX => {
            let cap = potential.max_sell_for_rate_floor(pool, &order.limit_rate, eps)?;
            let s = remaining.clone().min(cap);
            if !s.is_positive() {
                return Ok((zero_part(pool), pool.clone()));
            }
            let cost = amm::trade_cost(potential, pool, &-&s)?;
            (s.clone(), -s, -cost)
        }
        Side::SellY => {
            // Sell Y for X: pay at most `remaining` units of Y while the
            // rate stays at or below the limit.
            let cap_dx = potential.max_buy_for_rate_cap(pool, &order.limit_rate, eps)?;
            if !cap_dx.is_positive() {
                return Ok((zero_part(pool), pool.clone()));
            }
            let max_pay = amm::trade_cost(potential, pool, &cap_dx)?;
            let pay = remaining.clone().min(max_pay);
            if !pay.is_positive() {
                return Ok((zero_part(pool), pool.clone()));
            }
            let new_x = potential.x_of_y(&(pool.y() + &pay), &level)?;
            let dx = pool.x() - &new_x;
            (pay.clone(), dx, -pay)
        }
        Side::BuyY => {
            // Buy Y with X: receive at most `remaining` units of Y while the
            // rate stays at or above the limit.
            let cap_s = potential.max_sell_for_rate_floor(pool, &order.limit_rate, eps)?;
            if !cap_s.is_positive() {
                return Ok((zero_part(pool), pool.clone()));
            }
            let max_recv = -amm::trade_cost(potential, pool, &-&cap_s)?;
            let recv = remaining.clone().min(max_recv);
            if !recv.is_positive() {
                return Ok((zero_part(pool), pool.clone()));
            }
            let new_x = potential.x_of_y(&(pool.y() - &recv), &level)?;
            let paid_x = &new_x - pool.x();
            (recv.clone(), -paid_x, recv)
        }
    };
    let new_pool = amm::apply_trade(potential, pool, &dx, &-&dy)?;
    let part = PartFill {
        order_id: order.id,
        user: order.user.clone(),
        side: order.side,
        phase: Phase::Two,
        fulfilled,
        dx,
        dy,
        pool_before: pool.clone(),
        pool_after: new_pool.clone(),
    };
    Ok((part, new_pool))
}

/// Sequential rate-capped execution of the majority-side remainder.
pub fn execute_phase2<P: Potential>(
    potential: &P,
    pool: &PoolState,
    suffix: &[Order],
    eps: &Rat,
) -> Result<(Vec<PartFill>, PoolState)> {
    let mut parts = Vec::with_capacity(suffix.len());
    let mut current = pool.clone();
    for order in suffix {
        let (part, next) = exec_against_pool(potential, &current, order, &order.amount, eps)?;
        parts.push(part);
        current = next;
    }
    Ok((parts, current))
}

pub(crate) fn aggregate_outcome(
    orders: &[Order],
    skipped: &[Order],
    parts: Vec<PartFill>,
    start_pool: PoolState,
    end_pool: PoolState,
    dominance: Dominance,
    split: Option<SplitInfo>,
) -> BatchOutcome {
    struct Acc {
        fulfilled: Rat,
        net_x: Rat,
        net_y: Rat,
        any_phase2: bool,
    }
    let mut by_order: BTreeMap<OrderId, Acc> = BTreeMap::new();
    let mut trace = Vec::new();
    for part in parts {
        let acc = by_order.entry(part.order_id).or_insert_with(|| Acc {
            fulfilled: Rat::zero(),
            net_x: Rat::zero(),
            net_y: Rat::zero(),
            any_phase2: false,
        });
        acc.fulfilled = &acc.fulfilled + &part.fulfilled;
        acc.net_x = &acc.net_x + &part.dx;
        acc.net_y = &acc.net_y + &part.dy;
        if part.phase == Phase::Two && !part.fulfilled.is_zero() {
            acc.any_phase2 = true;
        }
        if !part.dx.is_zero() || !part.dy.is_zero() {
            trace.push(TraceRecord {
                order_id: part.order_id,
                user: part.user,
                side: part.side,
                phase: part.phase,
                pool_before: part.pool_before,
                pool_after: part.pool_after,
                dx: part.dx,
                dy: part.dy,
            });
        }
    }

    let skipped_ids: std::collections::BTreeSet<OrderId> = skipped.iter().map(|o| o.id).collect();
    let mut fills = Vec::with_capacity(orders.len());
    let mut per_user: BTreeMap<UserId, Outcome> = BTreeMap::new();
    for order in orders {
        let entry = per_user.entry(order.user.clone()).or_insert_with(Outcome::zero);
        if skipped_ids.contains(&order.id) {
            fills.push(OrderFill {
                order_id: order.id,
                user: order.user.clone(),
                side: order.side,
                fulfilled: Rat::zero(),
                avg_rate: order.limit_rate.clone(),
                phase: Phase::Skipped,
                net_x: Rat::zero(),
                net_y: Rat::zero(),
            });
            continue;
        }
        let (fulfilled, net_x, net_y, any_phase2) = match by_order.get(&order.id) {
            Some(acc) => (
                acc.fulfilled.clone(),
                acc.net_x.clone(),
                acc.net_y.clone(),
                acc.any_phase2,
            ),
            None => (Rat::zero(), Rat::zero(), Rat::zero(), false),
        };
        let avg_rate = if net_x.is_zero() {
            order.limit_rate.clone()
        } else {
            (&net_y / &net_x).abs()
        };
        entry.dx = &entry.dx + &net_x;
        entry.dy = &entry.dy + &net_y;
        fills.push(OrderFill {
            order_id: order.id,
            user: order.user.clone(),
            side: order.side,
            fulfilled,
            avg_rate,
            phase: if any_phase2 { Phase::Two } else { Phase::One },
            net_x,
            net_y,
        });
    }

    BatchOutcome {
        fills,
        per_user,
        start_pool,
        end_pool,
        trace,
        dominance,
        split,
    }
}

/// Runs the whole pipeline over one batch of orders.
pub fn run_batch<P: Potential>(
    potential: &P,
    start_pool: &PoolState,
    orders: &[Order],
    tiebreak: &TieBreak,
    config: &Config,
) -> Result<BatchOutcome> {
    validate_batch(orders)?;
    let r0 = amm::rate(potential, start_pool);
    let (kept, skipped) = filter_eligible(orders, &r0);
    let dominance = classify_dominance(&kept, &r0);
    let (sorted, j, split) = sort_and_split(kept, dominance, tiebreak, &r0);
    let mut parts = execute_phase1(start_pool, &sorted[..j], &r0)?;
    let (phase2, end_pool) = execute_phase2(potential, start_pool, &sorted[j..], &config.eps)?;
    parts.extend(phase2);

    let before = potential.phi(start_pool.x(), start_pool.y());
    let after = potential.phi(end_pool.x(), end_pool.y());
    if before != after {
        return Err(Error::InvariantViolation(format!(
            "batch changed the potential: {before} -> {after}"
        )));
    }
    Ok(aggregate_outcome(
        orders,
        &skipped,
        parts,
        start_pool.clone(),
        end_pool,
        dominance,
        split,
    ))
}

/// The honest strategy: submit the intrinsic type verbatim as one order.
pub fn honest_order(t: &UserType, user: UserId, id: OrderId, submit_index: u32) -> Order {
    Order {
        id,
        user,
        side: t.side,
        amount: t.demand.clone(),
        limit_rate: t.rate.clone(),
        arrival: t.arrival.clone(),
        submit_index,
    }
}
