//! Replay venue: a book driven by market events plus shadow-order management.

use thiserror::Error;

use crate::book::{infer_qp_from_burst, BookError, BookState, OrderId, Price, Qty, QueueStats, Side};
use crate::event::{EventBody, MarketEvent, Ts};

#[derive(Debug, Error, PartialEq)]
pub enum ReplayError {
    #[error("event {seq}: {source}")]
    Book {
        seq: u64,
        #[source]
        source: BookError,
    },
}

/// A shadow order's execution, with the queue picture just before it.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct OwnFill {
    pub id: OrderId,
    pub side: Side,
    pub price: Price,
    pub qty: Qty,
    pub ts: Ts,
    pub seq: u64,
    /// Queue position inferred from the fill burst.
    pub qp: f64,
    /// LA/LB read from the L3 state before the matching event.
    pub queue: QueueStats,
    /// External touch totals on the order's side and the other side before the event.
    pub qnear: Qty,
    pub qopp: Qty,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Step {
    pub fills: Vec<OwnFill>,
    /// The event was rejected as a crossed update and skipped.
    pub skipped: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Venue {
    book: BookState,
    seq: u64,
    skipped: u64,
    own: Vec<(OrderId, Side)>,
}

impl Venue {
    pub fn new() -> Self {
        Venue {
            book: BookState::new(),
            ..Default::default()
        }
    }

    pub fn book(&self) -> &BookState {
        &self.book
    }

    /// Number of events applied so far (skipped ones included).
    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn skipped_crossed(&self) -> u64 {
        self.skipped
    }

    pub fn live_orders(&self) -> &[(OrderId, Side)] {
        &self.own
    }

    fn snapshot(&self, side: Side) -> (Qty, Qty, Vec<(OrderId, QueueStats)>) {
        let near = self.book.top(side).map_or(Qty::ZERO, |t| t.1);
        let opp = self.book.top(side.opposite()).map_or(Qty::ZERO, |t| t.1);
        let stats = self
            .own
            .iter()
            .filter(|(_, s)| *s == side)
            .filter_map(|(id, _)| self.book.queue_stats(*id).ok().map(|q| (*id, q)))
            .collect();
        (near, opp, stats)
    }

    pub fn apply(&mut self, ev: &MarketEvent) -> Result<Step, ReplayError> {
        let seq = self.seq;
        self.seq += 1;
        let touched = match &ev.body {
            EventBody::Depth(d) => d.side.opposite(),
            EventBody::Trade(t) => t.aggressor.opposite(),
        };
        let has_own = self.own.iter().any(|(_, s)| *s == touched);
        let (qnear, qopp, stats) = if has_own {
            self.snapshot(touched)
        } else {
            (Qty::ZERO, Qty::ZERO, Vec::new())
        };
        let result = match &ev.body {
            EventBody::Depth(d) => self.book.apply_depth(ev.ts, d),
            EventBody::Trade(t) => self.book.apply_trade(ev.ts, t),
        };
        let burst = match result {
            Ok(b) => b,
            Err(BookError::CrossedBook { .. }) => {
                self.skipped += 1;
                return Ok(Step {
                    fills: Vec::new(),
                    skipped: true,
                });
            }
            Err(source) => return Err(ReplayError::Book { seq, source }),
        };
        let mut fills = Vec::new();
        for f in burst.iter().filter(|f| f.own) {
            let queue = stats
                .iter()
                .find(|s| s.0 == f.id)
                .map_or(QueueStats::new(Qty::ZERO, Qty::ZERO), |s| s.1);
            let prior = Qty(queue.la.0 + queue.lb.0 + f.qty.0);
            let qp = infer_qp_from_burst(&burst, f.id, prior)
                .map_err(|source| ReplayError::Book { seq, source })?;
            fills.push(OwnFill {
                id: f.id,
                side: touched,
                price: f.price,
                qty: f.qty,
                ts: ev.ts,
                seq,
                qp,
                queue,
                qnear,
                qopp,
            });
            self.own.retain(|(id, _)| *id != f.id);
        }
        Ok(Step {
            fills,
            skipped: false,
        })
    }

    /// Posts a one-unit shadow order at the current external touch of `side`.
    pub fn post_at_touch(&mut self, side: Side) -> Option<(OrderId, Price)> {
        let price = self.book.top_price(side)?;
        let id = self.book.add_own(side, price, Qty(1)).ok()?;
        self.own.push((id, side));
        Some((id, price))
    }

    pub fn cancel(&mut self, id: OrderId) -> Result<(), BookError> {
        self.book.cancel_own(id)?;
        self.own.retain(|(o, _)| *o != id);
        Ok(())
    }

    /// True while no external level is strictly better than the order's price.
    pub fn at_touch(&self, id: OrderId) -> bool {
        let Some((side, price)) = self.book.locate(id) else {
            return false;
        };
        match self.book.top_price(side) {
            Some(top) => !side.better(top, price),
            None => true,
        }
    }
}
