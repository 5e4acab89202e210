//! Canonical JSONL event log: one header line followed by one event per line.
//!
//! ```text
//! {"v":1,"tick_usd":0.1,"unit_usd":100.0,"rng":"chacha12","seed":7}
//! {"ts":1000,"t":"d","s":"b","p":10000,"q":12}
//! {"ts":1250,"t":"x","s":"a","p":10000,"q":3,"f":[[41,2],[42,1]]}
//! ```
//!
//! For trades `s` is the aggressor side: `"b"` for a buyer lifting the ask,
//! `"a"` for a seller hitting the bid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{Price, Qty, Side};
use crate::event::{DepthEvent, EventBody, MakerFill, MarketEvent, TradeEvent, Ts};

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: timestamp {ts} precedes {prev}")]
    NonMonotonicTs { line: usize, ts: Ts, prev: Ts },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamHeader {
    pub v: u32,
    pub tick_usd: f64,
    pub unit_usd: f64,
    pub rng: String,
    pub seed: Option<u64>,
}

impl Default for StreamHeader {
    fn default() -> Self {
        StreamHeader {
            v: 1,
            tick_usd: 0.1,
            unit_usd: 100.0,
            rng: "none".into(),
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParsedStream {
    pub header: Option<StreamHeader>,
    pub events: Vec<MarketEvent>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    ts: i64,
    t: String,
    s: String,
    p: i64,
    q: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    f: Option<Vec<(u64, u64)>>,
}

fn side_code(s: &str) -> Option<Side> {
    match s {
        "b" => Some(Side::Bid),
        "a" => Some(Side::Ask),
        _ => None,
    }
}

fn to_event(l: Line, line: usize) -> Result<MarketEvent, DataError> {
    let err = |msg: String| DataError::Parse { line, msg };
    let side = side_code(&l.s).ok_or_else(|| err(format!("bad side {:?}", l.s)))?;
    if l.p <= 0 {
        return Err(err(format!("non-positive price {}", l.p)));
    }
    let body = match l.t.as_str() {
        "d" => {
            if l.f.is_some() {
                return Err(err("depth line carries fills".into()));
            }
            EventBody::Depth(DepthEvent {
                side,
                price: Price(l.p),
                new_total: Qty(l.q),
            })
        }
        "x" => {
            let f = l.f.ok_or_else(|| err("trade line without fills".into()))?;
            if l.q == 0 {
                return Err(err("zero-quantity trade".into()));
            }
            let sum: u64 = f.iter().map(|x| x.1).sum();
            if sum != l.q {
                return Err(err(format!("fills sum to {sum}, trade quantity {}", l.q)));
            }
            EventBody::Trade(TradeEvent {
                aggressor: side,
                price: Price(l.p),
                qty: Qty(l.q),
                fills: f
                    .into_iter()
                    .map(|(id, q)| MakerFill {
                        maker_id: id,
                        qty: Qty(q),
                    })
                    .collect(),
            })
        }
        other => return Err(err(format!("unknown event type {other:?}"))),
    };
    Ok(MarketEvent { ts: l.ts, body })
}

/// Parses a JSONL event log. The header line is optional; blank lines are skipped.
pub fn parse_stream(bytes: &[u8]) -> Result<ParsedStream, DataError> {
    let text = std::str::from_utf8(bytes).map_err(|e| DataError::Parse {
        line: 0,
        msg: e.to_string(),
    })?;
    let mut header = None;
    let mut events = Vec::new();
    let mut prev: Option<Ts> = None;
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        if first {
            first = false;
            if let Ok(h) = serde_json::from_str::<StreamHeader>(raw) {
                header = Some(h);
                continue;
            }
        }
        let l: Line = serde_json::from_str(raw).map_err(|e| DataError::Parse {
            line,
            msg: e.to_string(),
        })?;
        let ev = to_event(l, line)?;
        if let Some(p) = prev {
            if ev.ts < p {
                return Err(DataError::NonMonotonicTs {
                    line,
                    ts: ev.ts,
                    prev: p,
                });
            }
        }
        prev = Some(ev.ts);
        events.push(ev);
    }
    Ok(ParsedStream { header, events })
}

fn to_line(ev: &MarketEvent) -> Line {
    match &ev.body {
        EventBody::Depth(d) => Line {
            ts: ev.ts,
            t: "d".into(),
            s: d.side.as_char().to_string(),
            p: d.price.0,
            q: d.new_total.0,
            f: None,
        },
        EventBody::Trade(t) => Line {
            ts: ev.ts,
            t: "x".into(),
            s: t.aggressor.as_char().to_string(),
            p: t.price.0,
            q: t.qty.0,
            f: Some(t.fills.iter().map(|f| (f.maker_id, f.qty.0)).collect()),
        },
    }
}

/// Appends one event as a JSONL line.
pub fn write_event(out: &mut Vec<u8>, ev: &MarketEvent) {
    serde_json::to_writer(&mut *out, &to_line(ev)).expect("in-memory serialization");
    out.push(b'\n');
}

/// Serializes events without a header; an empty list yields empty output.
pub fn write_stream(events: &[MarketEvent]) -> Vec<u8> {
    let mut out = Vec::with_capacity(events.len() * 48);
    for ev in events {
        write_event(&mut out, ev);
    }
    out
}

pub fn write_stream_with_header(header: &StreamHeader, events: &[MarketEvent]) -> Vec<u8> {
    let mut out = serde_json::to_vec(header).expect("in-memory serialization");
    out.push(b'\n');
    out.extend(write_stream(events));
    out
}
