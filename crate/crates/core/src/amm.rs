//! Pool state, the potential-function abstraction, and trade math.
//!
//! A pool holds reserves `(x, y)` of two assets and prices trades so that a
//! potential `Φ(x, y)` is conserved exactly across execution. Only the
//! constant-product potential ships, but the engine is written against the
//! [`Potential`] trait so other concave increasing potentials can slot in.
//!
//! Rounding convention: the max-trade operations round toward *less*
//! execution, so a returned amount never violates its rate bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sqrt_lower, sqrt_upper, Rat};

/// Reserves of the two pool assets. Strictly positive by construction:
/// a pool at the boundary has no defined marginal rate.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawPool")]
pub struct PoolState {
    x: Rat,
    y: Rat,
}

#[derive(Deserialize)]
struct RawPool {
    x: Rat,
    y: Rat,
}

impl TryFrom<RawPool> for PoolState {
    type Error = Error;

    fn try_from(raw: RawPool) -> Result<Self> {
        PoolState::new(raw.x, raw.y)
    }
}

impl PoolState {
    pub fn new(x: Rat, y: Rat) -> Result<Self> {
        if !x.is_positive() || !y.is_positive() {
            return Err(Error::Domain(format!(
                "pool reserves must be strictly positive, got ({x}, {y})"
            )));
        }
        Ok(PoolState { x, y })
    }

    pub fn x(&self) -> &Rat {
        &self.x
    }

    pub fn y(&self) -> &Rat {
        &self.y
    }
}

/// A concave, increasing, differentiable potential over pool reserves.
///
/// Implementations must make `phi(x, y_of_x(x, c)) = c` hold exactly and
/// must round the max-trade bounds toward less execution.
pub trait Potential: Sync {
    /// Φ(x, y).
    fn phi(&self, x: &Rat, y: &Rat) -> Rat;

    /// Marginal price of X in Y: (∂Φ/∂x)/(∂Φ/∂y) at (x, y).
    fn rate(&self, x: &Rat, y: &Rat) -> Rat;

    /// The decreasing curve h with Φ(x, h(x)) = level.
    fn y_of_x(&self, x: &Rat, level: &Rat) -> Result<Rat>;

    /// Mirror curve: the x with Φ(x, y) = level.
    fn x_of_y(&self, y: &Rat, level: &Rat) -> Result<Rat>;

    /// Largest `dx ≥ 0` (within `eps`, rounded down) such that buying `dx`
    /// leaves the market rate at or below `cap`. Zero when `cap` does not
    /// exceed the current rate.
    fn max_buy_for_rate_cap(&self, pool: &PoolState, cap: &Rat, eps: &Rat) -> Result<Rat>;

    /// Largest sellable `dx ≥ 0` (rounded down) such that selling leaves the
    /// market rate at or above `floor`. Zero when `floor` is not below the
    /// current rate.
    fn max_sell_for_rate_floor(&self, pool: &PoolState, floor: &Rat, eps: &Rat) -> Result<Rat>;
}

/// Constant-product potential Φ(x, y) = x·y.
#[derive(Clone, Copy, Debug, Default)]
pub struct ConstantProduct;

impl Potential for ConstantProduct {
    fn phi(&self, x: &Rat, y: &Rat) -> Rat {
        x * y
    }

    fn rate(&self, x: &Rat, y: &Rat) -> Rat {
        y / x
    }

    fn y_of_x(&self, x: &Rat, level: &Rat) -> Result<Rat> {
        if !x.is_positive() {
            return Err(Error::Domain(format!("curve undefined at x={x}")));
        }
        Ok(level / x)
    }

    fn x_of_y(&self, y: &Rat, level: &Rat) -> Result<Rat> {
        if !y.is_positive() {
            return Err(Error::Domain(format!("curve undefined at y={y}")));
        }
        Ok(level / y)
    }

    fn max_buy_for_rate_cap(&self, pool: &PoolState, cap: &Rat, eps: &Rat) -> Result<Rat> {
        let current = self.rate(pool.x(), pool.y());
        if *cap <= current {
            return Ok(Rat::zero());
        }
        // Post-trade rate C/(x-dx)² ≤ cap  ⇔  x - dx ≥ √(C/cap).
        let level = self.phi(pool.x(), pool.y());
        let reserve_floor = sqrt_upper(&(&level / cap), eps)?;
        let dx = pool.x() - &reserve_floor;
        Ok(dx.max(Rat::zero()))
    }

    fn max_sell_for_rate_floor(&self, pool: &PoolState, floor: &Rat, eps: &Rat) -> Result<Rat> {
        let current = self.rate(pool.x(), pool.y());
        if *floor >= current {
            return Ok(Rat::zero());
        }
        if !floor.is_positive() {
            return Err(Error::Domain(format!("rate floor must be positive, got {floor}")));
        }
        // Post-trade rate C/(x+dx)² ≥ floor  ⇔  x + dx ≤ √(C/floor).
        let level = self.phi(pool.x(), pool.y());
        let reserve_cap = sqrt_lower(&(&level / floor), eps)?;
        let dx = &reserve_cap - pool.x();
        Ok(dx.max(Rat::zero()))
    }
}

/// Current market exchange rate of the pool (Y per unit of X).
pub fn rate<P: Potential>(potential: &P, pool: &PoolState) -> Rat {
    potential.rate(pool.x(), pool.y())
}

/// The Y the user pays to move the pool by `dx` along the potential level.
///
/// Positive `dx` is a buy of X (positive payment); negative `dx` is a sell
/// (negative payment, i.e. the user receives Y). Exact: the resulting pool
/// `(x - dx, y + cost)` sits on the same potential level.
pub fn trade_cost<P: Potential>(potential: &P, pool: &PoolState, dx: &Rat) -> Result<Rat> {
    if dx >= pool.x() {
        return Err(Error::PoolDrain(Box::new((dx.clone(), pool.x().clone()))));
    }
    let level = potential.phi(pool.x(), pool.y());
    let new_x = pool.x() - dx;
    let new_y = potential.y_of_x(&new_x, &level)?;
    if !new_y.is_positive() {
        return Err(Error::Domain(format!("trade leaves non-positive reserve y={new_y}")));
    }
    Ok(&new_y - pool.y())
}

/// Applies a balanced trade, guarding the potential invariant exactly.
pub fn apply_trade<P: Potential>(
    potential: &P,
    pool: &PoolState,
    dx: &Rat,
    dy: &Rat,
) -> Result<PoolState> {
    let new_x = pool.x() - dx;
    let new_y = pool.y() + dy;
    if !new_x.is_positive() || !new_y.is_positive() {
        return Err(Error::Domain(format!(
            "trade leaves non-positive reserves ({new_x}, {new_y})"
        )));
    }
    let before = potential.phi(pool.x(), pool.y());
    let after = potential.phi(&new_x, &new_y);
    if before != after {
        return Err(Error::InvariantViolation(format!(
            "potential changed by trade: {before} -> {after}"
        )));
    }
    PoolState::new(new_x, new_y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rat {
        Rat::new(n, d)
    }

    fn pool(x: i64, y: i64) -> PoolState {
        PoolState::new(Rat::from_int(x), Rat::from_int(y)).unwrap()
    }

    fn eps() -> Rat {
        Rat::two_pow_neg(64)
    }

    #[test]
    fn rejects_degenerate_pools() {
        assert!(PoolState::new(Rat::zero(), Rat::from_int(5)).is_err());
        assert!(PoolState::new(Rat::from_int(5), Rat::from_int(-1)).is_err());
    }

    #[test]
    fn rate_examples() {
        let cp = ConstantProduct;
        assert_eq!(rate(&cp, &pool(100, 100)), r(1, 1));
        assert_eq!(rate(&cp, &pool(100, 400)), r(4, 1));
        assert_eq!(rate(&cp, &pool(50, 200)), rate(&cp, &pool(100, 400)));
    }

    #[test]
    fn trade_cost_examples() {
        let cp = ConstantProduct;
        let p = pool(100, 100);
        assert_eq!(trade_cost(&cp, &p, &r(50, 1)).unwrap(), r(100, 1));
        assert_eq!(trade_cost(&cp, &p, &Rat::zero()).unwrap(), Rat::zero());
        // Buying 6 against (100, 100): pay 10000/94 - 100 = 300/47.
        assert_eq!(trade_cost(&cp, &p, &r(6, 1)).unwrap(), r(300, 47));
        // Sells are negative dx; user receives Y.
        assert_eq!(trade_cost(&cp, &p, &r(-100, 1)).unwrap(), r(-50, 1));
        assert!(matches!(
            trade_cost(&cp, &p, &r(100, 1)),
            Err(Error::PoolDrain(_))
        ));
    }

    #[test]
    fn max_buy_examples() {
        let cp = ConstantProduct;
        let p = pool(100, 100);
        assert_eq!(cp.max_buy_for_rate_cap(&p, &r(4, 1), &eps()).unwrap(), r(50, 1));
        assert_eq!(cp.max_buy_for_rate_cap(&p, &r(1, 1), &eps()).unwrap(), Rat::zero());
        assert_eq!(cp.max_buy_for_rate_cap(&p, &r(1, 2), &eps()).unwrap(), Rat::zero());

        // cap = 2: dx = 100 - √5000 rounded down; post-rate must respect the cap
        // and dx + eps must overshoot it.
        let cap = r(2, 1);
        let dx = cp.max_buy_for_rate_cap(&p, &cap, &eps()).unwrap();
        assert!(dx.is_positive());
        let level = cp.phi(p.x(), p.y());
        let post = |d: &Rat| {
            let nx = p.x() - d;
            let ny = cp.y_of_x(&nx, &level).unwrap();
            cp.rate(&nx, &ny)
        };
        assert!(post(&dx) <= cap);
        assert!(post(&(&dx + &eps())) > cap);
    }

    #[test]
    fn max_sell_examples() {
        let cp = ConstantProduct;
        assert_eq!(
            cp.max_sell_for_rate_floor(&pool(100, 100), &r(1, 4), &eps()).unwrap(),
            r(100, 1)
        );
        assert_eq!(
            cp.max_sell_for_rate_floor(&pool(100, 100), &r(1, 1), &eps()).unwrap(),
            Rat::zero()
        );
        assert_eq!(
            cp.max_sell_for_rate_floor(&pool(50, 200), &r(1, 1), &eps()).unwrap(),
            r(50, 1)
        );
    }

    #[test]
    fn apply_trade_guards_potential() {
        let cp = ConstantProduct;
        let p = pool(100, 100);
        let next = apply_trade(&cp, &p, &r(50, 1), &r(100, 1)).unwrap();
        assert_eq!(next, pool(50, 200));
        assert_eq!(apply_trade(&cp, &p, &Rat::zero(), &Rat::zero()).unwrap(), p);
        // (94, 5000/47) stays on the level set of 10000.
        let worked = PoolState::new(r(94, 1), r(5000, 47)).unwrap();
        assert_eq!(cp.phi(worked.x(), worked.y()), r(10000, 1));
        assert!(matches!(
            apply_trade(&cp, &p, &r(10, 1), &r(10, 1)),
            Err(Error::InvariantViolation(_))
        ));
    }

    #[test]
    fn constant_product_shape_spot_checks() {
        // Increasing in both arguments, concave along axis mixes.
        let cp = ConstantProduct;
        let samples = [(1i64, 1i64), (3, 7), (10, 2), (100, 100), (250, 13)];
        for (x, y) in samples {
            let (x, y) = (Rat::from_int(x), Rat::from_int(y));
            let bump = r(1, 3);
            assert!(cp.phi(&(&x + &bump), &y) > cp.phi(&x, &y));
            assert!(cp.phi(&x, &(&y + &bump)) > cp.phi(&x, &y));
        }
        // Midpoint concavity of Φ between two points.
        let (a, b) = ((r(2, 1), r(8, 1)), (r(8, 1), r(2, 1)));
        let mid = (
            (&a.0 + &b.0) * r(1, 2),
            (&a.1 + &b.1) * r(1, 2),
        );
        let phi_mid = cp.phi(&mid.0, &mid.1);
        let avg = (cp.phi(&a.0, &a.1) + cp.phi(&b.0, &b.1)) * r(1, 2);
        assert!(phi_mid >= avg);
    }

    proptest! {
        #[test]
        fn buy_then_sell_is_lossless_on_curve(x in 1i64..500, y in 1i64..500, num in 0i64..400, den in 1i64..9) {
            // Potential conservation: cost computed from the curve keeps Φ exact.
            let cp = ConstantProduct;
            let p = PoolState::new(Rat::from_int(x), Rat::from_int(y)).unwrap();
            let dx = Rat::new(num, den * 4);
            prop_assume!(&dx < p.x());
            let dy = trade_cost(&cp, &p, &dx).unwrap();
            let next = apply_trade(&cp, &p, &dx, &dy).unwrap();
            prop_assert_eq!(cp.phi(next.x(), next.y()), cp.phi(p.x(), p.y()));
        }

        #[test]
        fn increasing_marginal_cost(x in 1i64..1000, y in 1i64..1000, xp_num in 1i64..1000, xp_den in 1i64..20) {
            // Same level set, less X in the pool => rate at least as high.
            let cp = ConstantProduct;
            let p = PoolState::new(Rat::from_int(x), Rat::from_int(y)).unwrap();
            let level = cp.phi(p.x(), p.y());
            let xp = Rat::new(xp_num, xp_den);
            prop_assume!(xp <= *p.x());
            let yp = cp.y_of_x(&xp, &level).unwrap();
            let p2 = PoolState::new(xp, yp).unwrap();
            prop_assert!(rate(&cp, &p) <= rate(&cp, &p2));
        }

        #[test]
        fn trade_cost_is_strictly_convex_in_dx(x in 2i64..500, y in 1i64..500, a in 0i64..100, h in 1i64..50) {
            let cp = ConstantProduct;
            let p = PoolState::new(Rat::from_int(x), Rat::from_int(y)).unwrap();
            let dx = Rat::new(a * x, 400);
            let step = Rat::new(h * x, 400);
            prop_assume!(&(&dx + &(&step + &step)) < p.x());
            let c0 = trade_cost(&cp, &p, &dx).unwrap();
            let c1 = trade_cost(&cp, &p, &(&dx + &step)).unwrap();
            let c2 = trade_cost(&cp, &p, &(&dx + &(&step + &step))).unwrap();
            prop_assert!(&c1 - &c0 < &c2 - &c1);
        }

        #[test]
        fn max_buy_respects_cap(x in 1i64..500, y in 1i64..500, cn in 1i64..40, cd in 1i64..12) {
            let cp = ConstantProduct;
            let p = PoolState::new(Rat::from_int(x), Rat::from_int(y)).unwrap();
            let cap = Rat::new(cn, cd);
            let e = Rat::two_pow_neg(40);
            let dx = cp.max_buy_for_rate_cap(&p, &cap, &e).unwrap();
            prop_assert!(!dx.is_negative());
            if dx.is_positive() {
                let dy = trade_cost(&cp, &p, &dx).unwrap();
                let next = apply_trade(&cp, &p, &dx, &dy).unwrap();
                prop_assert!(rate(&cp, &next) <= cap);
            } else {
                prop_assert!(cap <= rate(&cp, &p) || dx.is_zero());
            }
        }
    }
}
