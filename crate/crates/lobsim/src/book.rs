//! Two-sided limit order book at L3 resolution.
//!
//! The book holds two kinds of resting orders. Orders reconstructed from the
//! feed ("external" liquidity) follow the feed's stated level totals. Orders
//! posted by the experiment or a strategy are *shadow* orders: they occupy a
//! queue position and can be filled, but they never consume the liquidity that
//! the feed reports. Depth events therefore state the external total of a
//! level, and trades consume external quantity only. For a book without
//! shadow orders both notions coincide with plain L2/L3 semantics.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{DepthEvent, TradeEvent, Ts};

/// Price in integer exchange ticks.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Price(pub i64);

impl Price {
    pub fn ticks(self) -> i64 {
        self.0
    }

    pub fn to_usd(self, tick_usd: f64) -> f64 {
        self.0 as f64 * tick_usd
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Quantity in minimum order units.
#[derive(
    Copy, Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Qty(pub u64);

impl Qty {
    pub const ZERO: Qty = Qty(0);

    pub fn units(self) -> u64 {
        self.0
    }

    pub fn to_usd(self, unit_usd: f64) -> f64 {
        self.0 as f64 * unit_usd
    }
}

impl fmt::Display for Qty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }

    /// +1 for buys (bid side), -1 for sells (ask side).
    pub fn sign(self) -> i64 {
        match self {
            Side::Bid => 1,
            Side::Ask => -1,
        }
    }

    pub fn signf(self) -> f64 {
        self.sign() as f64
    }

    /// True when `a` is a strictly better price than `b` for a resting order on this side.
    pub fn better(self, a: Price, b: Price) -> bool {
        match self {
            Side::Bid => a > b,
            Side::Ask => a < b,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Side::Bid => 'b',
            Side::Ask => 'a',
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OrderId(pub u64);

impl fmt::Display for OrderId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct RestingOrder {
    pub id: OrderId,
    pub qty: Qty,
    pub own: bool,
}

/// One price level: orders in arrival order plus cached totals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BookLevel {
    pub price: Price,
    orders: VecDeque<RestingOrder>,
    total: u64,
    own: u64,
}

impl BookLevel {
    fn new(price: Price) -> Self {
        BookLevel {
            price,
            orders: VecDeque::new(),
            total: 0,
            own: 0,
        }
    }

    pub fn orders(&self) -> impl ExactSizeIterator<Item = &RestingOrder> + '_ {
        self.orders.iter()
    }

    /// Sum of all resting quantity, shadow orders included.
    pub fn total(&self) -> Qty {
        Qty(self.total)
    }

    /// Quantity reported by the feed (shadow orders excluded).
    pub fn external(&self) -> Qty {
        Qty(self.total - self.own)
    }

    fn push(&mut self, o: RestingOrder) {
        self.total += o.qty.0;
        if o.own {
            self.own += o.qty.0;
        }
        self.orders.push_back(o);
    }

    /// Removes `amount` external units starting at the back of the queue.
    fn shrink_from_back(&mut self, mut amount: u64) {
        let mut i = self.orders.len();
        while amount > 0 && i > 0 {
            i -= 1;
            let o = &mut self.orders[i];
            if o.own {
                continue;
            }
            let take = o.qty.0.min(amount);
            o.qty.0 -= take;
            amount -= take;
            self.total -= take;
        }
        self.orders.retain(|o| o.qty.0 > 0);
    }

    fn remove(&mut self, id: OrderId) -> Option<RestingOrder> {
        let pos = self.orders.iter().position(|o| o.id == id)?;
        let o = self.orders.remove(pos)?;
        self.total -= o.qty.0;
        if o.own {
            self.own -= o.qty.0;
        }
        Some(o)
    }
}

/// Liquidity ahead, liquidity behind and queue position of one order.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct QueueStats {
    pub la: Qty,
    pub lb: Qty,
    pub qp: f64,
}

impl QueueStats {
    pub fn new(la: Qty, lb: Qty) -> Self {
        let denom = la.0 + lb.0;
        let qp = if denom == 0 {
            0.0
        } else {
            la.0 as f64 / denom as f64
        };
        QueueStats { la, lb, qp }
    }
}

/// One maker fill produced by matching, in execution priority.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Fill {
    pub id: OrderId,
    pub price: Price,
    pub qty: Qty,
    pub own: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BookError {
    #[error("book has no level on the {0:?} side")]
    EmptyBook(Side),
    #[error("unknown order {0}")]
    UnknownOrder(OrderId),
    #[error("update {side:?}@{price} would cross the book")]
    CrossedBook { side: Side, price: Price },
    #[error("event at {ts} precedes book time {book_ts}")]
    StaleEvent { ts: Ts, book_ts: Ts },
    #[error("trade at {price} does not match contra top {top:?}")]
    InconsistentTrade { price: Price, top: Option<Price> },
    #[error("order {0} is absent from the fill burst")]
    OwnFillAbsent(OrderId),
}

type Touch = (Price, Qty);

/// L3 book; bids sorted descending, asks ascending.
#[derive(Clone, Debug, Default)]
pub struct BookState {
    bids: Vec<BookLevel>,
    asks: Vec<BookLevel>,
    ts: Ts,
    next_id: u64,
    own_index: Vec<(OrderId, Side, Price)>,
}

impl BookState {
    pub fn new() -> Self {
        BookState {
            next_id: 1,
            ..Default::default()
        }
    }

    pub fn ts(&self) -> Ts {
        self.ts
    }

    pub fn levels(&self, side: Side) -> &[BookLevel] {
        match side {
            Side::Bid => &self.bids,
            Side::Ask => &self.asks,
        }
    }

    fn levels_mut(&mut self, side: Side) -> &mut Vec<BookLevel> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    /// Best level with external liquidity, with its external total.
    pub fn top(&self, side: Side) -> Option<(Price, Qty)> {
        self.levels(side)
            .iter()
            .find(|l| l.external().0 > 0)
            .map(|l| (l.price, l.external()))
    }

    pub fn top_price(&self, side: Side) -> Option<Price> {
        self.top(side).map(|t| t.0)
    }

    fn tops(&self) -> Result<(Touch, Touch), BookError> {
        let b = self.top(Side::Bid).ok_or(BookError::EmptyBook(Side::Bid))?;
        let a = self.top(Side::Ask).ok_or(BookError::EmptyBook(Side::Ask))?;
        Ok((b, a))
    }

    /// (B - A) / (B + A) over the top external totals.
    pub fn imbalance(&self) -> Result<f64, BookError> {
        let ((_, b), (_, a)) = self.tops()?;
        Ok((b.0 as f64 - a.0 as f64) / (b.0 + a.0) as f64)
    }

    /// Quantity-weighted top price, in ticks.
    pub fn microprice(&self) -> Result<f64, BookError> {
        let ((pb, b), (pa, a)) = self.tops()?;
        let (b, a) = (b.0 as f64, a.0 as f64);
        Ok((b * pa.0 as f64 + a * pb.0 as f64) / (b + a))
    }

    /// Average of top bid and ask, in ticks.
    pub fn midprice(&self) -> Result<f64, BookError> {
        let ((pb, _), (pa, _)) = self.tops()?;
        Ok((pb.0 + pa.0) as f64 / 2.0)
    }

    /// Twice the midprice, exact in integer ticks.
    pub fn mid2(&self) -> Result<i64, BookError> {
        let ((pb, _), (pa, _)) = self.tops()?;
        Ok(pb.0 + pa.0)
    }

    fn find(&self, id: OrderId) -> Option<(Side, usize)> {
        if let Some(&(_, side, price)) = self.own_index.iter().find(|e| e.0 == id) {
            let idx = self.level_index(side, price).ok()?;
            return Some((side, idx));
        }
        for side in [Side::Bid, Side::Ask] {
            for (i, l) in self.levels(side).iter().enumerate() {
                if l.orders.iter().any(|o| o.id == id) {
                    return Some((side, i));
                }
            }
        }
        None
    }

    /// Side and price of a resting order.
    pub fn locate(&self, id: OrderId) -> Option<(Side, Price)> {
        self.find(id).map(|(s, i)| (s, self.levels(s)[i].price))
    }

    /// LA/LB/QP of a resting order. Other shadow orders are not counted
    /// since they do not compete for external liquidity.
    pub fn queue_stats(&self, id: OrderId) -> Result<QueueStats, BookError> {
        let (side, idx) = self.find(id).ok_or(BookError::UnknownOrder(id))?;
        let level = &self.levels(side)[idx];
        let (mut la, mut lb, mut seen) = (0u64, 0u64, false);
        for o in &level.orders {
            if o.id == id {
                seen = true;
            } else if !o.own {
                if seen {
                    lb += o.qty.0;
                } else {
                    la += o.qty.0;
                }
            }
        }
        Ok(QueueStats::new(Qty(la), Qty(lb)))
    }

    /// Binary search for a level; `Err` carries the insertion point.
    fn level_index(&self, side: Side, price: Price) -> Result<usize, usize> {
        let levels = self.levels(side);
        match side {
            Side::Bid => levels.binary_search_by(|l| price.cmp(&l.price)),
            Side::Ask => levels.binary_search_by(|l| l.price.cmp(&price)),
        }
    }

    fn alloc_id(&mut self) -> OrderId {
        let id = OrderId(self.next_id.max(1));
        self.next_id = id.0 + 1;
        id
    }

    fn check_ts(&self, ts: Ts) -> Result<(), BookError> {
        if ts < self.ts {
            return Err(BookError::StaleEvent {
                ts,
                book_ts: self.ts,
            });
        }
        Ok(())
    }

    /// Applies an L2 update. A total increase appends one order of the delta;
    /// a decrease removes external quantity from the back of the queue, never
    /// touching shadow orders. Returns shadow orders executed because the new
    /// level trades through them (only possible when they sit alone beyond
    /// the external touch).
    pub fn apply_depth(&mut self, ts: Ts, ev: &DepthEvent) -> Result<Vec<Fill>, BookError> {
        self.check_ts(ts)?;
        let side = ev.side;
        if ev.new_total.0 > 0 {
            if let Some(contra) = self.top_price(side.opposite()) {
                if !side.better(contra, ev.price) {
                    return Err(BookError::CrossedBook {
                        side,
                        price: ev.price,
                    });
                }
            }
        }
        self.ts = ts;
        match self.level_index(side, ev.price) {
            Ok(i) => {
                let id = if ev.new_total.0 > self.levels(side)[i].external().0 {
                    Some(self.alloc_id())
                } else {
                    None
                };
                let level = &mut self.levels_mut(side)[i];
                let ext = level.external().0;
                if ev.new_total.0 > ext {
                    level.push(RestingOrder {
                        id: id.expect("allocated above"),
                        qty: Qty(ev.new_total.0 - ext),
                        own: false,
                    });
                } else if ev.new_total.0 < ext {
                    level.shrink_from_back(ext - ev.new_total.0);
                }
                if level.total == 0 {
                    self.levels_mut(side).remove(i);
                }
            }
            Err(i) => {
                if ev.new_total.0 > 0 {
                    let id = self.alloc_id();
                    let mut level = BookLevel::new(ev.price);
                    level.push(RestingOrder {
                        id,
                        qty: ev.new_total,
                        own: false,
                    });
                    self.levels_mut(side).insert(i, level);
                }
            }
        }
        Ok(self.execute_crossed_shadows(side.opposite()))
    }

    /// Shadow orders on `side` that the external contra touch now reaches.
    fn execute_crossed_shadows(&mut self, side: Side) -> Vec<Fill> {
        let Some(contra) = self.top_price(side.opposite()) else {
            return Vec::new();
        };
        let mut fills = Vec::new();
        while let Some(level) = self.levels(side).first() {
            if side.better(contra, level.price) {
                break;
            }
            let level = self.levels_mut(side).remove(0);
            for o in level.orders {
                debug_assert!(o.own, "external liquidity cannot cross the external book");
                fills.push(Fill {
                    id: o.id,
                    price: level.price,
                    qty: o.qty,
                    own: o.own,
                });
            }
        }
        for f in &fills {
            self.own_index.retain(|e| e.0 != f.id);
        }
        fills
    }

    /// Matches a trade against the contra touch, front to back. Shadow
    /// orders at the traded level fill when the trade reaches past the
    /// external quantity ahead of them or exhausts the level; shadow orders
    /// resting at strictly better prices are traded through.
    pub fn apply_trade(&mut self, ts: Ts, ev: &TradeEvent) -> Result<Vec<Fill>, BookError> {
        self.check_ts(ts)?;
        let contra = ev.aggressor.opposite();
        let top = self.top_price(contra);
        if top != Some(ev.price) {
            return Err(BookError::InconsistentTrade {
                price: ev.price,
                top,
            });
        }
        self.ts = ts;
        let mut fills = Vec::new();
        while self.levels(contra)[0].price != ev.price {
            let level = self.levels_mut(contra).remove(0);
            for o in level.orders {
                fills.push(Fill {
                    id: o.id,
                    price: level.price,
                    qty: o.qty,
                    own: o.own,
                });
            }
        }
        let q = ev.qty.0;
        let level = &mut self.levels_mut(contra)[0];
        let ext_total = level.external().0;
        let mut remaining = q;
        let mut ahead = 0u64;
        for o in level.orders.iter_mut() {
            if o.own {
                if ahead < q || q >= ext_total {
                    fills.push(Fill {
                        id: o.id,
                        price: ev.price,
                        qty: o.qty,
                        own: true,
                    });
                    o.qty = Qty::ZERO;
                }
                continue;
            }
            ahead += o.qty.0;
            let take = o.qty.0.min(remaining);
            if take > 0 {
                fills.push(Fill {
                    id: o.id,
                    price: ev.price,
                    qty: Qty(take),
                    own: false,
                });
                o.qty.0 -= take;
                remaining -= take;
            }
        }
        let consumed = q - remaining;
        let own_filled: u64 = fills
            .iter()
            .filter(|f| f.own && f.price == ev.price)
            .map(|f| f.qty.0)
            .sum();
        level.total -= consumed + own_filled;
        level.own -= own_filled;
        level.orders.retain(|o| o.qty.0 > 0);
        if level.total == 0 {
            self.levels_mut(contra).remove(0);
        }
        for f in fills.iter().filter(|f| f.own) {
            self.own_index.retain(|e| e.0 != f.id);
        }
        Ok(fills)
    }

    /// Posts a shadow order at the back of its level.
    pub fn add_own(&mut self, side: Side, price: Price, qty: Qty) -> Result<OrderId, BookError> {
        if let Some(contra) = self.top_price(side.opposite()) {
            if !side.better(contra, price) {
                return Err(BookError::CrossedBook { side, price });
            }
        }
        let id = self.alloc_id();
        let order = RestingOrder { id, qty, own: true };
        match self.level_index(side, price) {
            Ok(i) => self.levels_mut(side)[i].push(order),
            Err(i) => {
                let mut level = BookLevel::new(price);
                level.push(order);
                self.levels_mut(side).insert(i, level);
            }
        }
        self.own_index.push((id, side, price));
        Ok(id)
    }

    /// Removes a shadow order.
    pub fn cancel_own(&mut self, id: OrderId) -> Result<RestingOrder, BookError> {
        let (side, idx) = self.find(id).ok_or(BookError::UnknownOrder(id))?;
        let level = &mut self.levels_mut(side)[idx];
        let o = level.remove(id).ok_or(BookError::UnknownOrder(id))?;
        if level.total == 0 {
            self.levels_mut(side).remove(idx);
        }
        self.own_index.retain(|e| e.0 != id);
        Ok(o)
    }

    /// Verifies level conservation, ordering and the one-tick minimum spread.
    pub fn check_invariants(&self) -> Result<(), String> {
        for side in [Side::Bid, Side::Ask] {
            let levels = self.levels(side);
            for w in levels.windows(2) {
                if !side.better(w[0].price, w[1].price) {
                    return Err(format!("{side:?} levels out of order at {}", w[1].price));
                }
            }
            for l in levels {
                let sum: u64 = l.orders.iter().map(|o| o.qty.0).sum();
                let own: u64 = l.orders.iter().filter(|o| o.own).map(|o| o.qty.0).sum();
                if sum != l.total || own != l.own {
                    return Err(format!("level {} total {} != sum {}", l.price, l.total, sum));
                }
                if l.total == 0 || l.orders.iter().any(|o| o.qty.0 == 0) {
                    return Err(format!("empty entry at level {}", l.price));
                }
            }
        }
        if let (Some(b), Some(a)) = (self.top_price(Side::Bid), self.top_price(Side::Ask)) {
            if b >= a {
                return Err(format!("crossed book {b} >= {a}"));
            }
        }
        Ok(())
    }
}

/// Queue position implied by a fill burst: quantity filled ahead of the
/// order divided by the competing queue. `prior_queue_total` is the level
/// total before the trade, counting the order itself.
pub fn infer_qp_from_burst(
    burst: &[Fill],
    own_id: OrderId,
    prior_queue_total: Qty,
) -> Result<f64, BookError> {
    let pos = burst
        .iter()
        .position(|f| f.id == own_id)
        .ok_or(BookError::OwnFillAbsent(own_id))?;
    let ahead: u64 = burst[..pos]
        .iter()
        .filter(|f| !f.own)
        .map(|f| f.qty.0)
        .sum();
    let denom = prior_queue_total.0.saturating_sub(burst[pos].qty.0);
    if denom == 0 {
        return Ok(0.0);
    }
    Ok(ahead as f64 / denom as f64)
}
