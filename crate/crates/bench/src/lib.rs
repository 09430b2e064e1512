//! Benchmark fixtures shared by the criterion targets.

use batchswap_core::adversary::{Model, Scenario, StrategyGrid};
use batchswap_core::amm::PoolState;
use batchswap_core::mechanism::{Order, OrderId, Side, TieBreak};
use batchswap_core::numerics::Rat;

pub fn rat(n: i64, d: i64) -> Rat {
    Rat::new(n, d)
}

pub fn standard_pool() -> PoolState {
    PoolState::new(Rat::from_int(100), Rat::from_int(100)).unwrap()
}

pub fn order(id: u32, user: &str, side: Side, amount: Rat, rate: Rat, arrival: i64) -> Order {
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

/// A mixed eight-order batch shaped like the fuzz corpus.
pub fn mixed_batch() -> Vec<Order> {
    let sides = [
        Side::BuyX,
        Side::SellX,
        Side::SellY,
        Side::BuyY,
        Side::BuyX,
        Side::SellX,
        Side::BuyX,
        Side::SellY,
    ];
    sides
        .iter()
        .enumerate()
        .map(|(i, side)| {
            let rate = match side {
                Side::BuyX | Side::SellY => rat(2 + i as i64 % 3, 1),
                Side::SellX | Side::BuyY => rat(1, 1 + i as i64 % 3),
            };
            order(i as u32, &format!("u{}", i % 4), *side, rat(1 + i as i64, 2), rate, i as i64)
        })
        .collect()
}

pub fn search_scenario() -> Scenario {
    Scenario {
        pool: standard_pool(),
        honest_orders: vec![
            order(0, "seller", Side::SellX, rat(4, 1), rat(1, 2), 1),
            order(1, "buyer", Side::BuyX, rat(10, 1), rat(2, 1), 2),
        ],
        adversary: None,
        model: Model::WeakFairSequencing,
        tiebreak: TieBreak::ArrivalStable,
        ledger: None,
    }
}

pub fn small_grid() -> StrategyGrid {
    StrategyGrid {
        amounts: vec![rat(1, 1), rat(3, 1)],
        rates: vec![rat(1, 2), rat(2, 1)],
        sides: vec![Side::BuyX, Side::SellX],
        max_orders: 2,
        arrival_offsets: vec![Rat::zero(), Rat::one()],
    }
}
