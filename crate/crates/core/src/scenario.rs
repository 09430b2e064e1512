//! Scenario and trace file formats.
//!
//! Scenarios are JSON documents: a pool, a potential name, the order flow,
//! a tie-breaking choice, and optionally a ledger (which selects the
//! no-short-selling engine), a model, and a strategic user type for the
//! searches. All rationals are strings — `"p/q"` or decimal — so files are
//! exact. Traces are JSON lines, one record per executed (sub)order.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::adversary::{Model, Scenario};
use crate::amm::PoolState;
use crate::error::{Error, Result};
use crate::mechanism::{Order, OrderId, Side, TieBreak, TraceRecord};
use crate::noshort::{Ledger, Position};
use crate::numerics::Rat;
use crate::ordering::UserType;

fn default_potential() -> String {
    "constant_product".to_string()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct OrderEntry {
    user: String,
    side: Side,
    amount: Rat,
    rate: Rat,
    arrival: Rat,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TieBreakEntry {
    mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PositionEntry {
    x: Rat,
    y: Rat,
}

/// The on-disk scenario document.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub pool: PoolState,
    #[serde(default = "default_potential")]
    pub potential: String,
    orders: Vec<OrderEntry>,
    tiebreak: TieBreakEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ledger: Option<BTreeMap<String, PositionEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model: Option<Model>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    adversary: Option<UserType>,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::validation("scenario", e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario files always serialize")
    }

    /// Validates the document and builds the domain scenario.
    ///
    /// `seed_override` satisfies (or replaces) the seed required by random
    /// tie-breaking.
    pub fn into_scenario(self, seed_override: Option<u64>) -> Result<Scenario> {
        if self.potential != "constant_product" {
            return Err(Error::validation(
                "potential",
                format!(
                    "unknown potential {:?}; only \"constant_product\" is available",
                    self.potential
                ),
            ));
        }
        let tiebreak = match self.tiebreak.mode.as_str() {
            "arrival_stable" => TieBreak::ArrivalStable,
            "random" => {
                let seed = seed_override.or(self.tiebreak.seed).ok_or_else(|| {
                    Error::validation("tiebreak.seed", "random tie-breaking requires a seed")
                })?;
                TieBreak::Random { seed }
            }
            other => {
                return Err(Error::validation(
                    "tiebreak.mode",
                    format!("unknown mode {other:?}; expected \"random\" or \"arrival_stable\""),
                ))
            }
        };
        let mut orders = Vec::with_capacity(self.orders.len());
        for (i, entry) in self.orders.into_iter().enumerate() {
            if entry.user.is_empty() {
                return Err(Error::validation(format!("orders[{i}].user"), "empty user name"));
            }
            let order = Order {
                id: OrderId(i as u32),
                user: entry.user,
                side: entry.side,
                amount: entry.amount,
                limit_rate: entry.rate,
                arrival: entry.arrival,
                submit_index: i as u32,
            };
            order.validate().map_err(|e| match e {
                Error::Validation { msg, .. } => Error::validation(format!("orders[{i}]"), msg),
                other => other,
            })?;
            orders.push(order);
        }
        let ledger = match self.ledger {
            None => None,
            Some(entries) => {
                let mut ledger = Ledger::new();
                for (user, pos) in entries {
                    let position = Position::new(pos.x, pos.y).map_err(|e| {
                        Error::validation(format!("ledger.{user}"), e.to_string())
                    })?;
                    ledger.0.insert(user, position);
                }
                Some(ledger)
            }
        };
        let scenario = Scenario {
            pool: self.pool,
            honest_orders: orders,
            adversary: self.adversary,
            model: self.model.unwrap_or(Model::WeakFairSequencing),
            tiebreak,
            ledger,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Builds a scenario document from domain values (useful for tests and for
/// emitting converted scenarios).
pub fn scenario_to_file(scenario: &Scenario) -> ScenarioFile {
    ScenarioFile {
        pool: scenario.pool.clone(),
        potential: default_potential(),
        orders: scenario
            .honest_orders
            .iter()
            .map(|o| OrderEntry {
                user: o.user.clone(),
                side: o.side,
                amount: o.amount.clone(),
                rate: o.limit_rate.clone(),
                arrival: o.arrival.clone(),
            })
            .collect(),
        tiebreak: match scenario.tiebreak {
            TieBreak::ArrivalStable => TieBreakEntry {
                mode: "arrival_stable".into(),
                seed: None,
            },
            TieBreak::Random { seed } => TieBreakEntry {
                mode: "random".into(),
                seed: Some(seed),
            },
        },
        ledger: scenario.ledger.as_ref().map(|l| {
            l.0.iter()
                .map(|(u, p)| {
                    (
                        u.clone(),
                        PositionEntry {
                            x: p.x.clone(),
                            y: p.y.clone(),
                        },
                    )
                })
                .collect()
        }),
        model: Some(scenario.model),
        adversary: scenario.adversary.clone(),
    }
}

/// One trace line. `decimal` columns are display-only approximations.
#[derive(Serialize)]
struct TraceLine<'a> {
    order_id: OrderId,
    user: &'a str,
    side: Side,
    phase: &'a crate::mechanism::Phase,
    pool_before: &'a PoolState,
    pool_after: &'a PoolState,
    dx: &'a Rat,
    dy: &'a Rat,
    #[serde(skip_serializing_if = "Option::is_none")]
    dx_decimal: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dy_decimal: Option<String>,
}

/// Renders a trace as JSON lines, one record per executed (sub)order.
pub fn trace_to_jsonl(trace: &[TraceRecord], decimal: bool) -> String {
    let mut out = String::new();
    for rec in trace {
        let line = TraceLine {
            order_id: rec.order_id,
            user: &rec.user,
            side: rec.side,
            phase: &rec.phase,
            pool_before: &rec.pool_before,
            pool_after: &rec.pool_after,
            dx: &rec.dx,
            dy: &rec.dy,
            dx_decimal: decimal.then(|| format!("{:.6}", rec.dx.to_f64())),
            dy_decimal: decimal.then(|| format!("{:.6}", rec.dy.to_f64())),
        };
        out.push_str(&serde_json::to_string(&line).expect("trace lines always serialize"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const WORKED: &str = r#"{
        "pool": {"x": "100", "y": "100"},
        "potential": "constant_product",
        "orders": [
            {"user": "seller", "side": "sell_x", "amount": "4", "rate": "1/2", "arrival": "1"},
            {"user": "buyer", "side": "buy_x", "amount": "10", "rate": "2", "arrival": "2"}
        ],
        "tiebreak": {"mode": "arrival_stable"}
    }"#;

    #[test]
    fn parses_the_worked_scenario() {
        let file = ScenarioFile::from_json(WORKED).unwrap();
        let scenario = file.into_scenario(None).unwrap();
        assert_eq!(scenario.honest_orders.len(), 2);
        assert_eq!(scenario.honest_orders[0].side, Side::SellX);
        assert_eq!(scenario.honest_orders[0].limit_rate, Rat::new(1, 2));
        assert_eq!(scenario.tiebreak, TieBreak::ArrivalStable);
        assert!(scenario.ledger.is_none());
    }

    #[test]
    fn validation_errors_name_the_field() {
        let bad = WORKED.replace("\"4\"", "\"-4\"");
        let err = ScenarioFile::from_json(&bad).unwrap().into_scenario(None).unwrap_err();
        assert!(err.to_string().contains("orders[0]"), "got: {err}");

        let bad = WORKED.replace("constant_product", "weighted");
        let err = ScenarioFile::from_json(&bad).unwrap().into_scenario(None).unwrap_err();
        assert!(err.to_string().contains("potential"), "got: {err}");

        let bad = WORKED.replace("arrival_stable", "random");
        let err = ScenarioFile::from_json(&bad).unwrap().into_scenario(None).unwrap_err();
        assert!(err.to_string().contains("seed"), "got: {err}");

        // Degenerate pools are rejected at parse time.
        let bad = WORKED.replace("\"x\": \"100\"", "\"x\": \"0\"");
        assert!(ScenarioFile::from_json(&bad).is_err());
    }

    #[test]
    fn seed_override_enables_random_mode() {
        let text = WORKED.replace("arrival_stable", "random");
        let scenario = ScenarioFile::from_json(&text).unwrap().into_scenario(Some(9)).unwrap();
        assert_eq!(scenario.tiebreak, TieBreak::Random { seed: 9 });
    }

    #[test]
    fn ledger_section_roundtrips() {
        let text = r#"{
            "pool": {"x": "100", "y": "100"},
            "orders": [{"user": "u", "side": "sell_x", "amount": "4", "rate": "1/2", "arrival": "0"}],
            "tiebreak": {"mode": "arrival_stable"},
            "ledger": {"u": {"x": "10", "y": "2.5"}}
        }"#;
        let scenario = ScenarioFile::from_json(text).unwrap().into_scenario(None).unwrap();
        let ledger = scenario.ledger.as_ref().unwrap();
        assert_eq!(ledger.get("u").unwrap().y, Rat::new(5, 2));
        let back = scenario_to_file(&scenario).to_json();
        let reparsed = ScenarioFile::from_json(&back).unwrap().into_scenario(None).unwrap();
        assert_eq!(reparsed.ledger, scenario.ledger);
    }

    #[test]
    fn trace_rendering_is_line_oriented() {
        use crate::amm::ConstantProduct;
        use crate::mechanism::{run_batch, Config};
        let file = ScenarioFile::from_json(WORKED).unwrap();
        let scenario = file.into_scenario(None).unwrap();
        let out = run_batch(
            &ConstantProduct,
            &scenario.pool,
            &scenario.honest_orders,
            &scenario.tiebreak,
            &Config::default(),
        )
        .unwrap();
        let jsonl = trace_to_jsonl(&out.trace, false);
        let lines: Vec<&str> = jsonl.lines().collect();
        assert_eq!(lines.len(), out.trace.len());
        for line in lines {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(v.get("pool_before").is_some());
            assert!(v.get("dx_decimal").is_none());
        }
        let with_dec = trace_to_jsonl(&out.trace, true);
        assert!(with_dec.contains("dx_decimal"));
    }
}
