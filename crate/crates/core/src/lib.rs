//! Batch swap engine for constant-potential AMMs.
//!
//! Orders submitted within one block are cleared as a batch: a balanced
//! prefix is matched internally at the opening rate, and the one-sided
//! remainder walks the pool curve under per-order rate limits. The pool
//! potential is conserved exactly — all arithmetic is rational.
//!
//! The crate also ships the machinery used to test the design: a legacy
//! sequential baseline vulnerable to sandwich attacks, exhaustive searches
//! for arbitrage witnesses and profitable deviations, outcome orderings,
//! and a no-short-selling variant with per-user balances.

pub mod adversary;
pub mod amm;
pub mod error;
pub mod mechanism;
pub mod noshort;
pub mod numerics;
pub mod ordering;
pub mod scenario;

pub use amm::{ConstantProduct, PoolState, Potential};
pub use error::{Error, Result};
pub use mechanism::{
    BatchOutcome, Config, Dominance, Order, OrderFill, OrderId, Phase, Side, TieBreak, TraceRecord,
    UserId,
};
pub use noshort::{Ledger, Position};
pub use numerics::Rat;
pub use ordering::{Comparison, Outcome, UserType};
