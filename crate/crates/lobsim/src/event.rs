//! Market events: the single replay currency shared by data, experiments and strategies.

use serde::{Deserialize, Serialize};

use crate::book::{Price, Qty, Side};

/// Timestamp in integer microseconds since the epoch.
pub type Ts = i64;

pub const MICROS_PER_SEC: Ts = 1_000_000;

/// Converts seconds to microseconds, rounding to the nearest microsecond.
pub fn secs(s: f64) -> Ts {
    (s * MICROS_PER_SEC as f64).round() as Ts
}

/// Absolute external total at one price level; zero deletes the level.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthEvent {
    pub side: Side,
    pub price: Price,
    pub new_total: Qty,
}

/// A maker fill as published by the venue: (maker order id, quantity).
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MakerFill {
    pub maker_id: u64,
    pub qty: Qty,
}

/// One taker execution at a single price with its maker-fill burst.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeEvent {
    pub aggressor: Side,
    pub price: Price,
    pub qty: Qty,
    pub fills: Vec<MakerFill>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventBody {
    Depth(DepthEvent),
    Trade(TradeEvent),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketEvent {
    pub ts: Ts,
    pub body: EventBody,
}

impl MarketEvent {
    pub fn depth(ts: Ts, side: Side, price: i64, total: u64) -> Self {
        MarketEvent {
            ts,
            body: EventBody::Depth(DepthEvent {
                side,
                price: Price(price),
                new_total: Qty(total),
            }),
        }
    }

    /// A trade whose burst is a single anonymous fill of the full quantity.
    pub fn trade(ts: Ts, aggressor: Side, price: i64, qty: u64) -> Self {
        MarketEvent {
            ts,
            body: EventBody::Trade(TradeEvent {
                aggressor,
                price: Price(price),
                qty: Qty(qty),
                fills: vec![MakerFill {
                    maker_id: 0,
                    qty: Qty(qty),
                }],
            }),
        }
    }

    pub fn is_trade(&self) -> bool {
        matches!(self.body, EventBody::Trade(_))
    }
}
