//! Batch execution with per-user balances and no short-selling.
//!
//! Every trade is *safe-executed*: capped so the user's position never goes
//! negative in either asset. Classification and the balanced-prefix split
//! work on trial safe-executions against scratch state; the real phases
//! then re-derive the caps against live state, which reproduces the trial
//! fills exactly because Phase 1 runs at the same fixed rate from the same
//! starting ledger.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::amm::{self, PoolState, Potential};
use crate::error::{Error, Result};
use crate::mechanism::{
    aggregate_outcome, classify_dominance_sign, exec_against_pool, BatchOutcome, Config, Dominance,
    Order, OrderFill, PartFill, Phase, Side, SplitInfo, TieBreak, UserId,
};
use crate::numerics::Rat;

/// A user's balances. Never negative at any point of any trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Position {
    pub x: Rat,
    pub y: Rat,
}

impl Position {
    pub fn new(x: Rat, y: Rat) -> Result<Self> {
        if x.is_negative() || y.is_negative() {
            return Err(Error::Domain(format!(
                "positions must be non-negative, got ({x}, {y})"
            )));
        }
        Ok(Position { x, y })
    }

    pub fn zero() -> Self {
        Position {
            x: Rat::zero(),
            y: Rat::zero(),
        }
    }

    fn is_valid(&self) -> bool {
        !self.x.is_negative() && !self.y.is_negative()
    }
}

/// Balances for every user allowed to trade. Users absent from the ledger
/// cannot trade.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger(pub BTreeMap<UserId, Position>);

impl Ledger {
    pub fn new() -> Self {
        Ledger(BTreeMap::new())
    }

    pub fn with(mut self, user: impl Into<UserId>, x: Rat, y: Rat) -> Self {
        self.0.insert(user.into(), Position { x, y });
        self
    }

    pub fn get(&self, user: &str) -> Option<&Position> {
        self.0.get(user)
    }
}

/// Fill amounts of one safe execution: prime-asset units plus the user's
/// net deltas.
fn safe_fill_phase1(order: &Order, r0: &Rat, ledger: &mut Ledger) -> (Rat, Rat, Rat) {
    let Some(pos) = ledger.0.get_mut(&order.user) else {
        return (Rat::zero(), Rat::zero(), Rat::zero());
    };
    let (fulfilled, dx, dy) = match order.side {
        Side::BuyX => {
            let cap = &pos.y / r0;
            let v = order.amount.clone().min(cap);
            (v.clone(), v.clone(), -&(&v * r0))
        }
        Side::SellX => {
            let v = order.amount.clone().min(pos.x.clone());
            (v.clone(), -&v, &v * r0)
        }
        Side::BuyY => {
            let cap = &pos.x * r0;
            let v = order.amount.clone().min(cap);
            (v.clone(), -&(&v / r0), v.clone())
        }
        Side::SellY => {
            let v = order.amount.clone().min(pos.y.clone());
            (v.clone(), &v / r0, -&v)
        }
    };
    pos.x = &pos.x + &dx;
    pos.y = &pos.y + &dy;
    debug_assert!(pos.is_valid());
    (fulfilled, dx, dy)
}

/// Safe execution at the fixed rate `r0`: the fill is capped by the user's
/// balance of the asset being paid. Unknown users fill nothing.
pub fn safe_execute_phase1(order: &Order, r0: &Rat, ledger: &mut Ledger) -> OrderFill {
    let known = ledger.0.contains_key(&order.user);
    let (fulfilled, dx, dy) = safe_fill_phase1(order, r0, ledger);
    OrderFill {
        order_id: order.id,
        user: order.user.clone(),
        side: order.side,
        fulfilled,
        avg_rate: r0.clone(),
        phase: if known { Phase::One } else { Phase::Skipped },
        net_x: dx,
        net_y: dy,
    }
}

/// Largest executable amount in Phase 2 given the pool, the order's rate
/// limit, and the user's balance; all bounds round toward less execution.
fn safe_part_phase2<P: Potential>(
    potential: &P,
    pool: &PoolState,
    order: &Order,
    ledger: &mut Ledger,
    eps: &Rat,
) -> Result<(PartFill, PoolState)> {
    let Some(pos) = ledger.0.get(&order.user).cloned() else {
        let part = PartFill {
            order_id: order.id,
            user: order.user.clone(),
            side: order.side,
            phase: Phase::Skipped,
            fulfilled: Rat::zero(),
            dx: Rat::zero(),
            dy: Rat::zero(),
            pool_before: pool.clone(),
            pool_after: pool.clone(),
        };
        return Ok((part, pool.clone()));
    };
    let level = potential.phi(pool.x(), pool.y());
    // Balance cap expressed in the order's prime asset.
    let budget = match order.side {
        // Paying Y: the largest buy whose cost is the whole Y balance.
        Side::BuyX => pool.x() - &potential.x_of_y(&(pool.y() + &pos.y), &level)?,
        // Paying X directly.
        Side::SellX => pos.x.clone(),
        // Paying X: the most Y obtainable by selling the whole X balance.
        Side::BuyY => pool.y() - &potential.y_of_x(&(pool.x() + &pos.x), &level)?,
        // Paying Y directly.
        Side::SellY => pos.y.clone(),
    };
    let remaining = order.amount.clone().min(budget);
    let (part, new_pool) = exec_against_pool(potential, pool, order, &remaining, eps)?;
    let entry = ledger.0.get_mut(&order.user).expect("checked above");
    entry.x = &entry.x + &part.dx;
    entry.y = &entry.y + &part.dy;
    if !entry.is_valid() {
        return Err(Error::InvariantViolation(format!(
            "safe execution left user {} with negative position ({}, {})",
            order.user, entry.x, entry.y
        )));
    }
    Ok((part, new_pool))
}

/// Safe execution against the live curve: fills up to the rate limit and
/// the user's balance, whichever binds first.
pub fn safe_execute_phase2<P: Potential>(
    potential: &P,
    order: &Order,
    pool: &PoolState,
    ledger: &mut Ledger,
    eps: &Rat,
) -> Result<(OrderFill, PoolState)> {
    let (part, new_pool) = safe_part_phase2(potential, pool, order, ledger, eps)?;
    let avg_rate = if part.dx.is_zero() {
        order.limit_rate.clone()
    } else {
        (&part.dy / &part.dx).abs()
    };
    let fill = OrderFill {
        order_id: part.order_id,
        user: part.user,
        side: part.side,
        fulfilled: part.fulfilled,
        avg_rate,
        phase: part.phase,
        net_x: part.dx,
        net_y: part.dy,
    };
    Ok((fill, new_pool))
}

/// Trial-classifies, sorts, splits on trial net gains, then runs both
/// phases with safe execution. Returns the outcome and the updated ledger.
pub fn run_batch_noshort<P: Potential>(
    potential: &P,
    start_pool: &PoolState,
    ledger: &Ledger,
    orders: &[Order],
    tiebreak: &TieBreak,
    config: &Config,
) -> Result<(BatchOutcome, Ledger)> {
    crate::mechanism::validate_batch(orders)?;
    let r0 = amm::rate(potential, start_pool);
    let (kept, mut skipped) = crate::mechanism::filter_eligible(orders, &r0);
    // Unknown users cannot trade; their orders are rejected outright.
    let (kept, unknown): (Vec<Order>, Vec<Order>) = kept
        .into_iter()
        .partition(|o| ledger.0.contains_key(&o.user));
    skipped.extend(unknown);

    // Trial classification: safe-execute everything at r0 against scratch
    // state, in submission order, and read off the sign of the net X gain.
    let mut scratch = ledger.clone();
    let mut sigma = Rat::zero();
    for order in &kept {
        let (_, dx, _) = safe_fill_phase1(order, &r0, &mut scratch);
        sigma = sigma + dx;
    }
    let dominance = classify_dominance_sign(&sigma);

    let sorted = crate::mechanism::sorted_groups(kept, dominance, tiebreak);

    // Trial the sorted list to find the balanced prefix on capped fills.
    let sign = match dominance {
        Dominance::BuyXDominant => Rat::one(),
        Dominance::BuyYDominant => -Rat::one(),
    };
    let mut scratch = ledger.clone();
    let mut acc = Rat::zero();
    let mut sorted = sorted;
    let mut j = sorted.len();
    let mut split = None;
    for k in 0..sorted.len() {
        let (_, dx, _) = safe_fill_phase1(&sorted[k], &r0, &mut scratch);
        acc = acc + &sign * &dx;
        if acc.is_positive() {
            let excess = acc.clone();
            let trial_x = dx.abs();
            let keep_x = &trial_x - &excess;
            debug_assert!(!keep_x.is_negative());
            if keep_x.is_zero() {
                j = k;
                break;
            }
            let (first, second) = if sorted[k].side.prime_is_y() {
                (&keep_x * &r0, &sorted[k].amount - &(&keep_x * &r0))
            } else {
                (keep_x.clone(), &sorted[k].amount - &keep_x)
            };
            split = Some(SplitInfo {
                order_id: sorted[k].id,
                first: first.clone(),
                second: second.clone(),
            });
            let mut head = sorted[k].clone();
            head.amount = first;
            let mut tail = sorted[k].clone();
            tail.amount = second;
            sorted.splice(k..=k, [head, tail]);
            j = k + 1;
            break;
        }
    }

    // Phase 1 against live state: reproduces the trial prefix exactly.
    let mut live = ledger.clone();
    let mut parts: Vec<PartFill> = Vec::with_capacity(sorted.len());
    let mut net_x = Rat::zero();
    let mut net_y = Rat::zero();
    for order in &sorted[..j] {
        let (fulfilled, dx, dy) = safe_fill_phase1(order, &r0, &mut live);
        net_x = net_x + &dx;
        net_y = net_y + &dy;
        parts.push(PartFill {
            order_id: order.id,
            user: order.user.clone(),
            side: order.side,
            phase: Phase::One,
            fulfilled,
            dx,
            dy,
            pool_before: start_pool.clone(),
            pool_after: start_pool.clone(),
        });
    }
    if !net_x.is_zero() || !net_y.is_zero() {
        return Err(Error::InvariantViolation(format!(
            "safe phase 1 must net to zero, got ({net_x}, {net_y})"
        )));
    }

    // Phase 2: safe execution against the evolving pool.
    let mut pool = start_pool.clone();
    for order in &sorted[j..] {
        let (part, next) = safe_part_phase2(potential, &pool, order, &mut live, &config.eps)?;
        parts.push(part);
        pool = next;
    }

    let before = potential.phi(start_pool.x(), start_pool.y());
    let after = potential.phi(pool.x(), pool.y());
    if before != after {
        return Err(Error::InvariantViolation(format!(
            "batch changed the potential: {before} -> {after}"
        )));
    }
    let outcome = aggregate_outcome(
        orders,
        &skipped,
        parts,
        start_pool.clone(),
        pool,
        dominance,
        split,
    );
    Ok((outcome, live))
}

/// The honest strategy with balances: sell whichever asset the belief says
/// is overvalued at the current rate, in full. At `belief_rate == r0` there
/// is no profitable direction; a zero-amount sell keeps the strategy total.
pub fn honest_strategy_noshort(
    belief_rate: &Rat,
    position: &Position,
    r0: &Rat,
    arrival: &Rat,
) -> crate::ordering::UserType {
    let (side, amount) = if belief_rate > r0 {
        (Side::SellY, position.y.clone())
    } else if belief_rate < r0 {
        (Side::SellX, position.x.clone())
    } else {
        (Side::SellX, Rat::zero())
    };
    crate::ordering::UserType::new(side, amount, belief_rate.clone(), arrival.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amm::ConstantProduct;
    use crate::mechanism::OrderId;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rat {
        Rat::new(n, d)
    }

    fn pool(x: i64, y: i64) -> PoolState {
        PoolState::new(Rat::from_int(x), Rat::from_int(y)).unwrap()
    }

    fn order(id: u32, user: &str, side: Side, amount: Rat, rate: Rat, arrival: i64) -> Order {
        Order {
            id: OrderId(id),
            user: user.to_string(),
            side,
            amount,
            limit_rate: rate,
            arrival: Rat::from_int(arrival),
            submit_index: id,
        }
    }

    #[test]
    fn phase1_balance_caps() {
        let r0 = r(1, 1);
        let mut ledger = Ledger::new().with("u", r(3, 1), Rat::zero());
        let fill = safe_execute_phase1(&order(0, "u", Side::SellX, r(5, 1), r(1, 2), 0), &r0, &mut ledger);
        assert_eq!(fill.fulfilled, r(3, 1));
        assert_eq!(ledger.get("u").unwrap().x, Rat::zero());

        let r0 = r(2, 1);
        let mut ledger = Ledger::new().with("u", Rat::zero(), r(10, 1));
        let fill = safe_execute_phase1(&order(0, "u", Side::BuyX, r(10, 1), r(3, 1), 0), &r0, &mut ledger);
        assert_eq!(fill.fulfilled, r(5, 1));
        assert_eq!(ledger.get("u").unwrap().y, Rat::zero());

        let r0 = r(1, 1);
        let mut ledger = Ledger::new().with("u", Rat::zero(), r(100, 1));
        let fill = safe_execute_phase1(&order(0, "u", Side::BuyX, r(4, 1), r(1, 1), 0), &r0, &mut ledger);
        assert_eq!(fill.fulfilled, r(4, 1));

        // Unknown user: rejected.
        let mut ledger = Ledger::new();
        let fill = safe_execute_phase1(&order(0, "ghost", Side::SellX, r(5, 1), r(1, 2), 0), &r0, &mut ledger);
        assert!(fill.fulfilled.is_zero());
        assert_eq!(fill.phase, Phase::Skipped);
    }

    #[test]
    fn phase2_budget_caps() {
        let cp = ConstantProduct;
        let eps = Config::default().eps;
        // Budget binds: the largest buy affordable with 60 Y is 37.5 X.
        let mut ledger = Ledger::new().with("u", Rat::zero(), r(60, 1));
        let (fill, end) = safe_execute_phase2(
            &cp,
            &order(0, "u", Side::BuyX, r(80, 1), r(4, 1), 0),
            &pool(100, 100),
            &mut ledger,
            &eps,
        )
        .unwrap();
        assert_eq!(fill.fulfilled, r(75, 2));
        assert_eq!(fill.net_y, r(-60, 1));
        assert_eq!(ledger.get("u").unwrap().y, Rat::zero());
        assert_eq!(end, PoolState::new(r(125, 2), r(160, 1)).unwrap());

        // Ample budget: the rate cap binds at 50.
        let mut ledger = Ledger::new().with("u", Rat::zero(), r(1_000_000, 1));
        let (fill, end) = safe_execute_phase2(
            &cp,
            &order(0, "u", Side::BuyX, r(80, 1), r(4, 1), 0),
            &pool(100, 100),
            &mut ledger,
            &eps,
        )
        .unwrap();
        assert_eq!(fill.fulfilled, r(50, 1));
        assert_eq!(amm::rate(&cp, &end), r(4, 1));

        // Cap at the current rate: nothing fills.
        let mut ledger = Ledger::new().with("u", r(100, 1), r(100, 1));
        let (fill, _) = safe_execute_phase2(
            &cp,
            &order(0, "u", Side::BuyX, r(5, 1), r(1, 1), 0),
            &pool(100, 100),
            &mut ledger,
            &eps,
        )
        .unwrap();
        assert!(fill.fulfilled.is_zero());
    }

    #[test]
    fn run_matches_unconstrained_engine_when_balances_are_ample() {
        let cp = ConstantProduct;
        let cfg = Config::default();
        let orders = vec![
            order(0, "seller", Side::SellX, r(4, 1), r(1, 2), 1),
            order(1, "buyer", Side::BuyX, r(10, 1), r(2, 1), 2),
        ];
        let ledger = Ledger::new()
            .with("seller", r(1000, 1), r(1000, 1))
            .with("buyer", r(1000, 1), r(1000, 1));
        let (out, end_ledger) = run_batch_noshort(
            &cp,
            &pool(100, 100),
            &ledger,
            &orders,
            &TieBreak::ArrivalStable,
            &cfg,
        )
        .unwrap();
        let unconstrained =
            crate::mechanism::run_batch(&cp, &pool(100, 100), &orders, &TieBreak::ArrivalStable, &cfg).unwrap();
        assert_eq!(out.per_user, unconstrained.per_user);
        assert_eq!(out.end_pool, unconstrained.end_pool);
        assert_eq!(end_ledger.get("buyer").unwrap().x, r(1010, 1));
    }

    #[test]
    fn trial_classification_uses_capped_amounts() {
        // A seller holding 2 X posting a 4-unit sell classifies by the cap.
        let cp = ConstantProduct;
        let cfg = Config::default();
        let orders = vec![
            order(0, "s", Side::SellX, r(4, 1), r(1, 2), 0),
            order(1, "b", Side::BuyX, r(3, 1), r(2, 1), 1),
        ];
        let ledger = Ledger::new()
            .with("s", r(2, 1), Rat::zero())
            .with("b", Rat::zero(), r(100, 1));
        let (out, _) = run_batch_noshort(
            &cp,
            &pool(100, 100),
            &ledger,
            &orders,
            &TieBreak::ArrivalStable,
            &cfg,
        )
        .unwrap();
        // Raw beta sum would be -1 (sell-dominant); capped it is +1.
        assert_eq!(out.dominance, Dominance::BuyXDominant);
        // The seller's fill is the cap, executed at exactly r0 in phase 1.
        let seller = &out.fills[0];
        assert_eq!(seller.fulfilled, r(2, 1));
        assert_eq!(seller.avg_rate, r(1, 1));
    }

    #[test]
    fn empty_position_fills_nothing() {
        let cp = ConstantProduct;
        let cfg = Config::default();
        let orders = vec![
            order(0, "u", Side::BuyX, r(5, 1), r(2, 1), 0),
            order(1, "u", Side::SellX, r(5, 1), r(1, 2), 1),
        ];
        let ledger = Ledger::new().with("u", Rat::zero(), Rat::zero());
        let (out, end_ledger) = run_batch_noshort(
            &cp,
            &pool(100, 100),
            &ledger,
            &orders,
            &TieBreak::ArrivalStable,
            &cfg,
        )
        .unwrap();
        assert!(out.fills.iter().all(|f| f.fulfilled.is_zero()));
        assert_eq!(out.start_pool, out.end_pool);
        assert_eq!(end_ledger.get("u").unwrap(), &Position::zero());
    }

    #[test]
    fn honest_strategy_direction() {
        let pos = Position::new(r(10, 1), r(40, 1)).unwrap();
        let r0 = r(1, 1);
        let t = honest_strategy_noshort(&r(2, 1), &pos, &r0, &Rat::zero());
        assert_eq!((t.side, t.demand, t.rate), (Side::SellY, r(40, 1), r(2, 1)));
        let t = honest_strategy_noshort(&r(1, 2), &pos, &r0, &Rat::zero());
        assert_eq!((t.side, t.demand, t.rate), (Side::SellX, r(10, 1), r(1, 2)));
        let t = honest_strategy_noshort(&r0, &pos, &r0, &Rat::zero());
        assert_eq!((t.side, t.demand), (Side::SellX, Rat::zero()));
    }

    prop_compose! {
        fn arb_order(id: u32)(
            side in prop::sample::select(vec![Side::BuyX, Side::SellX, Side::BuyY, Side::SellY]),
            amount in 0i64..30,
            rn in 1i64..9,
            rd in 1i64..5,
            arrival in 0i64..6,
        ) -> Order {
            Order {
                id: OrderId(id),
                user: format!("u{}", id % 3),
                side,
                amount: Rat::from_int(amount),
                limit_rate: Rat::new(rn, rd),
                arrival: Rat::from_int(arrival),
                submit_index: id,
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 150, ..ProptestConfig::default() })]

        #[test]
        fn fuzzed_noshort_batches_hold_invariants(
            x in 1i64..2000, y in 1i64..2000,
            o0 in arb_order(0), o1 in arb_order(1), o2 in arb_order(2), o3 in arb_order(3),
            bx0 in 0i64..50, by0 in 0i64..50,
            bx1 in 0i64..50, by1 in 0i64..50,
            bx2 in 0i64..50, by2 in 0i64..50,
            seed in 0u64..50,
            use_random in proptest::bool::ANY,
        ) {
            let cp = ConstantProduct;
            let p = PoolState::new(Rat::from_int(x), Rat::from_int(y)).unwrap();
            let orders = vec![o0, o1, o2, o3];
            let ledger = Ledger::new()
                .with("u0", Rat::from_int(bx0), Rat::from_int(by0))
                .with("u1", Rat::from_int(bx1), Rat::from_int(by1))
                .with("u2", Rat::from_int(bx2), Rat::from_int(by2));
            let tb = if use_random { TieBreak::Random { seed } } else { TieBreak::ArrivalStable };
            let (out, end_ledger) = run_batch_noshort(&cp, &p, &ledger, &orders, &tb, &Config::default()).unwrap();

            // Exact potential conservation.
            prop_assert_eq!(
                cp.phi(out.start_pool.x(), out.start_pool.y()),
                cp.phi(out.end_pool.x(), out.end_pool.y())
            );

            // Ledger nonnegativity at every trace step: replay the deltas.
            let mut replay = ledger.clone();
            for rec in &out.trace {
                let pos = replay.0.get_mut(&rec.user).unwrap();
                pos.x = &pos.x + &rec.dx;
                pos.y = &pos.y + &rec.dy;
                prop_assert!(!pos.x.is_negative() && !pos.y.is_negative(),
                    "negative position mid-trace for {}", rec.user);
            }
            prop_assert_eq!(&replay, &end_ledger);

            // Conservation: user gains mirror the pool deltas.
            let total_dx: Rat = out.per_user.values().map(|o| o.dx.clone()).sum();
            let total_dy: Rat = out.per_user.values().map(|o| o.dy.clone()).sum();
            prop_assert_eq!(total_dx, out.start_pool.x() - out.end_pool.x());
            prop_assert_eq!(total_dy, out.start_pool.y() - out.end_pool.y());
        }
    }
}
