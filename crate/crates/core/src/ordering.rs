//! Ranking of trade outcomes against a user's intrinsic demand.
//!
//! A user who wants to trade `v*` units at rate `r*` ranks outcomes
//! `(δx, δy)` by a partial order: more of both assets is better; within the
//! demand, the natural utility `r*·δx + δy` decides; progress toward the
//! demand bought at marginal rate `r*` or better is an improvement.
//! Outcomes that overshoot the demand at a price better than `r*` stay
//! incomparable — there is no way to value the unplanned surplus.
//!
//! Y-denominated demand is ranked by the same rules with the axes swapped
//! and the rate inverted.
//!
//! [`refutes_dominance`] provides the complementary certificates: quick
//! sufficient conditions under which a strategic outcome provably does
//! *not* dominate the honest one. They are used by the incentive searches
//! as a cross-check and never as a dominance claim.

use serde::{Deserialize, Serialize};

use crate::mechanism::Side;
use crate::numerics::Rat;

/// A user's intrinsic demand: trade up to `demand` units of the order's
/// prime asset at rate `rate` or better, arriving at `arrival`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserType {
    pub side: Side,
    pub demand: Rat,
    pub rate: Rat,
    pub arrival: Rat,
}

impl UserType {
    pub fn new(side: Side, demand: Rat, rate: Rat, arrival: Rat) -> Self {
        UserType {
            side,
            demand,
            rate,
            arrival,
        }
    }
}

/// Net gain of a user over a batch: positive values are gains.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub dx: Rat,
    pub dy: Rat,
}

impl Outcome {
    pub fn new(dx: Rat, dy: Rat) -> Self {
        Outcome { dx, dy }
    }

    pub fn zero() -> Self {
        Outcome::new(Rat::zero(), Rat::zero())
    }
}

/// Result of comparing two outcomes under a user's partial order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    Better,
    Worse,
    Equal,
    Incomparable,
}

/// An outcome in prime-asset view: `a` is the gain in the prime asset,
/// `b` the gain in the other, `goal` the signed demand, `rate` the limit
/// price of the prime asset in units of the other.
struct View {
    goal: Rat,
    rate: Rat,
}

impl View {
    fn of(t: &UserType) -> Self {
        match t.side {
            Side::BuyX => View {
                goal: t.demand.clone(),
                rate: t.rate.clone(),
            },
            Side::SellX => View {
                goal: -&t.demand,
                rate: t.rate.clone(),
            },
            // Y-denominated demand: swap axes, invert the rate.
            Side::BuyY => View {
                goal: t.demand.clone(),
                rate: t.rate.recip(),
            },
            Side::SellY => View {
                goal: -&t.demand,
                rate: t.rate.recip(),
            },
        }
    }

    fn project(&self, t: &UserType, o: &Outcome) -> (Rat, Rat) {
        match t.side {
            Side::BuyX | Side::SellX => (o.dx.clone(), o.dy.clone()),
            Side::BuyY | Side::SellY => (o.dy.clone(), o.dx.clone()),
        }
    }

    fn utility(&self, a: &(Rat, Rat)) -> Rat {
        &self.rate * &a.0 + &a.1
    }

    /// Between zero and the goal, inclusive.
    fn within_demand(&self, a: &(Rat, Rat)) -> bool {
        !(&a.0 * (&a.0 - &self.goal)).is_positive()
    }

    fn same_side(&self, a: &(Rat, Rat), b: &(Rat, Rat)) -> bool {
        !((&a.0 - &self.goal) * (&b.0 - &self.goal)).is_negative()
    }

    fn dist(&self, a: &(Rat, Rat)) -> Rat {
        (&a.0 - &self.goal).abs()
    }

    /// Rules 1-3 applied directly (no transitive closure).
    fn dominates_direct(&self, a: &(Rat, Rat), b: &(Rat, Rat)) -> bool {
        // Rule 1: no less in either asset.
        if a.0 >= b.0 && a.1 >= b.1 {
            return true;
        }
        // Rule 2: both within the demand; the natural utility decides.
        // Kept strict so distinct equal-utility outcomes never dominate
        // each other both ways.
        if self.within_demand(a) && self.within_demand(b) && self.utility(a) > self.utility(b) {
            return true;
        }
        // Rule 3: same side of the goal, `a` at least as close, and the
        // progress from b to a priced at the limit rate or better.
        if self.same_side(a, b)
            && self.dist(a) <= self.dist(b)
            && &b.1 - &a.1 <= &self.rate * (&a.0 - &b.0)
        {
            return true;
        }
        false
    }

    /// Clamp an outcome onto the goal at marginal rate `rate`. The clamped
    /// outcome always dominates the original (rule 3 with equality), which
    /// makes it the canonical intermediate for one transitivity step.
    fn clamp_to_goal(&self, b: &(Rat, Rat)) -> (Rat, Rat) {
        let adj = &b.1 + &(&self.rate * (&b.0 - &self.goal));
        (self.goal.clone(), adj)
    }

    fn dominates(&self, a: &(Rat, Rat), b: &(Rat, Rat)) -> bool {
        if a == b || self.dominates_direct(a, b) {
            return true;
        }
        let mid = self.clamp_to_goal(b);
        if mid != *b && self.dominates_direct(a, &mid) {
            return true;
        }
        false
    }
}

/// True iff `o0` is at least as good as `o1` for a user of type `t`,
/// derivable from the ranking rules directly or through the canonical
/// clamped intermediate.
pub fn base_dominates(t: &UserType, o0: &Outcome, o1: &Outcome) -> bool {
    let view = View::of(t);
    let a = view.project(t, o0);
    let b = view.project(t, o1);
    view.dominates(&a, &b)
}

/// Full comparison: `Equal` only for identical outcomes, `Better`/`Worse`
/// from one-sided dominance, `Incomparable` otherwise.
pub fn compare(t: &UserType, o0: &Outcome, o1: &Outcome) -> Comparison {
    if o0 == o1 {
        return Comparison::Equal;
    }
    match (base_dominates(t, o0, o1), base_dominates(t, o1, o0)) {
        (true, false) => Comparison::Better,
        (false, true) => Comparison::Worse,
        _ => Comparison::Incomparable,
    }
}

/// Sound non-dominance certificate: true only if the strategic outcome
/// `o_s` provably does not dominate the honest outcome `o_h`.
///
/// The three certificates share a common core — the honest outcome keeps
/// at least the strategic utility — plus a side condition that rules out
/// every dominance rule:
/// - R1: same side, honest at least as close, and the two outcomes trade
///   off against each other (one asset up, the other down).
/// - R2: the strategic outcome made strictly more progress but paid a
///   marginal price strictly worse than the limit rate.
/// - R3: the outcomes straddle the goal and the strategic detour is priced
///   at the limit rate or worse.
pub fn refutes_dominance(t: &UserType, o_h: &Outcome, o_s: &Outcome) -> bool {
    let view = View::of(t);
    let h = view.project(t, o_h);
    let s = view.project(t, o_s);
    let u_h = view.utility(&h);
    let u_s = view.utility(&s);
    if view.same_side(&h, &s) {
        // R1
        if view.dist(&h) <= view.dist(&s)
            && ((&h.0 - &s.0) * (&h.1 - &s.1)).is_negative()
            && u_h >= u_s
        {
            return true;
        }
        // R2
        if view.dist(&s) < view.dist(&h) && u_h > u_s {
            return true;
        }
        false
    } else {
        // R3
        u_h >= u_s
    }
}

/// Value of an outcome under a belief about the exchange rate; the total
/// ordering used by the no-short-selling variant.
pub fn total_value(belief_rate: &Rat, o: &Outcome) -> Rat {
    belief_rate * &o.dx + &o.dy
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rat {
        Rat::new(n, d)
    }

    fn out(dx: i64, dy: i64) -> Outcome {
        Outcome::new(Rat::from_int(dx), Rat::from_int(dy))
    }

    /// The 7-unit buyer used in the worked comparisons.
    fn seven_buyer() -> UserType {
        UserType::new(Side::BuyX, Rat::from_int(7), Rat::from_int(20), Rat::zero())
    }

    #[test]
    fn worked_comparisons() {
        let t = seven_buyer();
        // 6 units at average 11 beats 5 units at average 10.
        assert!(base_dominates(&t, &out(6, -66), &out(5, -50)));
        assert_eq!(compare(&t, &out(6, -66), &out(5, -50)), Comparison::Better);
        // 7 at 10 beats 8 at 12: the extra unit cost 26 > 20.
        assert!(base_dominates(&t, &out(7, -70), &out(8, -96)));
        assert_eq!(compare(&t, &out(7, -70), &out(8, -96)), Comparison::Better);
        // 7 at 10 vs 8 at 11: the extra unit cost 18 < 20 — incomparable.
        assert!(!base_dominates(&t, &out(8, -88), &out(7, -70)));
        assert!(!base_dominates(&t, &out(7, -70), &out(8, -88)));
        assert_eq!(compare(&t, &out(8, -88), &out(7, -70)), Comparison::Incomparable);
    }

    #[test]
    fn equal_outcomes_compare_equal() {
        let t = seven_buyer();
        assert_eq!(compare(&t, &out(5, -50), &out(5, -50)), Comparison::Equal);
    }

    #[test]
    fn sell_side_mirrors_buy_side() {
        // A seller of 5 units at floor 2: selling an extra unit at 3 is good.
        let t = UserType::new(Side::SellX, Rat::from_int(5), Rat::from_int(2), Rat::zero());
        assert!(base_dominates(&t, &out(-3, 7), &out(-2, 4)));
        assert_eq!(compare(&t, &out(-3, 7), &out(-2, 4)), Comparison::Better);
        // Selling an extra unit below the floor is not an improvement.
        assert!(!base_dominates(&t, &out(-3, 5), &out(-2, 4)));
    }

    #[test]
    fn y_side_swaps_axes_and_inverts_rate() {
        // Buying 10 Y at up to 1/4 Y-per-X, i.e. at least 4 X per unit of Y
        // is too expensive... rate r means X is worth r units of Y, so a
        // BuyY user with rate 4 pays at most 1/4 X per Y.
        let t = UserType::new(Side::BuyY, Rat::from_int(10), Rat::from_int(4), Rat::zero());
        // Gain 6 Y for 1 X vs gain 4 Y for 1/2 X: marginal 2 extra Y cost
        // 1/2 X, i.e. 1/4 X per Y, exactly the limit: dominated.
        let o0 = Outcome::new(r(-1, 1), r(6, 1));
        let o1 = Outcome::new(r(-1, 2), r(4, 1));
        assert!(base_dominates(&t, &o0, &o1));
        // Paying more than 1/4 X per extra Y is not derivable.
        let o2 = Outcome::new(r(-11, 10), r(6, 1));
        assert!(!base_dominates(&t, &o2, &o1));
    }

    #[test]
    fn transitive_step_through_clamp() {
        // o1 overshoots the goal; o0 under-fills it. Neither rule applies
        // directly, but clamping o1 back to the goal at the limit rate
        // exposes the dominance.
        let t = seven_buyer();
        let o0 = out(6, -50);
        let o1 = out(9, -130);
        assert!(base_dominates(&t, &o0, &o1));
    }

    #[test]
    fn refutation_examples() {
        let t = seven_buyer();
        // R1: same side, honest at least as close, trade-off present.
        assert!(refutes_dominance(&t, &out(4, -40), &out(2, -30)));
        // R2: deviant bought one extra unit for 30 > 20.
        assert!(refutes_dominance(&t, &out(5, -50), &out(6, -80)));
        // Extra unit for 16 < 20: hypotheses fail, no certificate.
        assert!(!refutes_dominance(&t, &out(5, -50), &out(6, -66)));
    }

    #[test]
    fn total_value_examples() {
        let r20 = Rat::from_int(20);
        assert_eq!(total_value(&r20, &out(8, -88)), Rat::from_int(72));
        assert_eq!(total_value(&r20, &out(7, -70)), Rat::from_int(70));
        assert_eq!(total_value(&r20, &Outcome::zero()), Rat::zero());
    }

    /// Exhaustive grid of outcomes for property checks.
    fn grid() -> Vec<Outcome> {
        let mut v = Vec::new();
        for dx in -4i64..=8 {
            for dy in [-96, -70, -50, -40, -20, -10, 0, 10, 40, 80] {
                v.push(out(dx, dy));
            }
        }
        v
    }

    fn types() -> Vec<UserType> {
        vec![
            seven_buyer(),
            UserType::new(Side::BuyX, Rat::from_int(3), r(21, 2), Rat::zero()),
            UserType::new(Side::SellX, Rat::from_int(5), Rat::from_int(8), Rat::zero()),
            UserType::new(Side::BuyY, Rat::from_int(40), r(1, 3), Rat::zero()),
            UserType::new(Side::SellY, Rat::from_int(60), Rat::from_int(5), Rat::zero()),
            UserType::new(Side::BuyX, Rat::zero(), Rat::from_int(2), Rat::zero()),
        ]
    }

    #[test]
    fn rule1_monotonicity_on_grid() {
        for t in types() {
            for a in grid() {
                for b in grid() {
                    if a.dx >= b.dx && a.dy >= b.dy {
                        assert!(base_dominates(&t, &a, &b), "type {t:?}: {a:?} !>= {b:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn antisymmetry_on_grid() {
        for t in types() {
            for a in grid() {
                for b in grid() {
                    let ab = compare(&t, &a, &b);
                    let ba = compare(&t, &b, &a);
                    let expected = match ab {
                        Comparison::Better => Comparison::Worse,
                        Comparison::Worse => Comparison::Better,
                        Comparison::Equal => Comparison::Equal,
                        Comparison::Incomparable => Comparison::Incomparable,
                    };
                    assert_eq!(ba, expected, "type {t:?}: {a:?} vs {b:?}");
                }
            }
        }
    }

    #[test]
    fn refutation_soundness_on_grid() {
        for t in types() {
            for h in grid() {
                for s in grid() {
                    if refutes_dominance(&t, &h, &s) {
                        assert!(
                            !base_dominates(&t, &s, &h),
                            "type {t:?}: refuted but {s:?} dominates {h:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn dominance_refines_total_value_on_grid() {
        // When the belief equals the limit rate, dominance implies at least
        // as much total value (prime-asset view).
        for t in types() {
            let view_rate = match t.side {
                Side::BuyX | Side::SellX => t.rate.clone(),
                Side::BuyY | Side::SellY => t.rate.recip(),
            };
            for a in grid() {
                for b in grid() {
                    if base_dominates(&t, &a, &b) {
                        let (pa, pb) = match t.side {
                            Side::BuyX | Side::SellX => (a.clone(), b.clone()),
                            Side::BuyY | Side::SellY => (
                                Outcome::new(a.dy.clone(), a.dx.clone()),
                                Outcome::new(b.dy.clone(), b.dx.clone()),
                            ),
                        };
                        assert!(
                            total_value(&view_rate, &pa) >= total_value(&view_rate, &pb),
                            "type {t:?}: {a:?} >= {b:?} but total value disagrees"
                        );
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn reflexive_and_antisymmetric(
            dx0 in -50i64..50, dy0 in -50i64..50,
            dx1 in -50i64..50, dy1 in -50i64..50,
            demand in 0i64..10, rn in 1i64..30, rd in 1i64..6,
        ) {
            let t = UserType::new(Side::BuyX, Rat::from_int(demand), Rat::new(rn, rd), Rat::zero());
            let a = out(dx0, dy0);
            let b = out(dx1, dy1);
            prop_assert_eq!(compare(&t, &a, &a), Comparison::Equal);
            let ab = compare(&t, &a, &b);
            let ba = compare(&t, &b, &a);
            prop_assert_eq!(ab == Comparison::Better, ba == Comparison::Worse);
        }
    }
}
