//! Minimum-size maker-order experiments replayed over an event stream.
//!
//! Every order rests at its side's touch until it fills or an external level
//! appears at a better price, at which point it is canceled. Horizon
//! quantities (drift, markouts, forward returns) read the last book state at
//! or before the horizon.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{BookState, OrderId, Price, Qty, Side};
use crate::event::{secs, MarketEvent, Ts};
use crate::reversal::features::{extract_features, FeatureConfig, FeatureVector, MarketHistory};
use crate::venue::{ReplayError, Venue};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum QuotingMode {
    Continuous,
    Periodic { interval_s: f64 },
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Terminal {
    Filled {
        ts: Ts,
        seq: u64,
        qp: f64,
        la: Qty,
        lb: Qty,
        qnear: Qty,
        qopp: Qty,
    },
    Canceled {
        ts: Ts,
        seq: u64,
    },
}

impl Terminal {
    pub fn ts(&self) -> Ts {
        match *self {
            Terminal::Filled { ts, .. } | Terminal::Canceled { ts, .. } => ts,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackedOrder {
    pub id: OrderId,
    pub side: Side,
    pub limit_price: Price,
    pub qty: Qty,
    pub t0: Ts,
    /// Index of the first event the order was exposed to.
    pub seq0: u64,
    pub qnear0: Qty,
    pub qopp0: Qty,
    pub imb0: f64,
    pub terminal: Terminal,
    /// Signed mid change across the terminal event, in half ticks.
    pub mid_move: i64,
    pub drift_instant: Option<f64>,
    /// Aligned with `OutcomeDataset::drift_horizons_s`.
    pub drift_tau: Vec<Option<f64>>,
    pub markout_1s: Option<f64>,
    /// On-paper return from the terminal time to the forward horizon.
    pub forward_ret: Option<f64>,
    /// Return to the near-side top at the first mid change after a fill.
    pub reversal_ret: Option<f64>,
    pub features: Option<FeatureVector>,
}

impl TrackedOrder {
    pub fn is_filled(&self) -> bool {
        matches!(self.terminal, Terminal::Filled { .. })
    }

    pub fn qp(&self) -> Option<f64> {
        match self.terminal {
            Terminal::Filled { qp, .. } => Some(qp),
            Terminal::Canceled { .. } => None,
        }
    }

    pub fn sgn(&self) -> f64 {
        self.side.signf()
    }

    /// Signed bp return of `price` (in ticks) against the limit price.
    pub fn ret_bp(&self, price: f64) -> f64 {
        self.sgn() * (price / self.limit_price.0 as f64 - 1.0) * 1e4
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDataset {
    pub mode: QuotingMode,
    pub drift_horizons_s: Vec<f64>,
    pub orders: Vec<TrackedOrder>,
    /// Orders that reached a terminal state; equals filled + canceled.
    pub submitted: u64,
    pub filled: u64,
    pub canceled: u64,
    /// Orders still resting when the stream ended; excluded from `orders`.
    pub open_at_end: u64,
    pub skipped_events: u64,
}

impl OutcomeDataset {
    pub fn fill_rate(&self) -> f64 {
        self.filled as f64 / self.submitted.max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub mode: QuotingMode,
    pub drift_horizons_s: Vec<f64>,
    pub markout_s: f64,
    pub forward_s: f64,
    pub features: Option<FeatureConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: QuotingMode::Continuous,
            drift_horizons_s: vec![1.0, 5.0, 10.0],
            markout_s: 1.0,
            forward_s: 5.0,
            features: None,
        }
    }
}

impl ExperimentConfig {
    pub fn with_mode(mode: QuotingMode) -> Self {
        ExperimentConfig {
            mode,
            ..Default::default()
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("periodic interval must be positive, got {0}")]
    BadInterval(f64),
    #[error("order is not filled")]
    NotFilled,
    #[error("horizon lies beyond the end of the stream")]
    HorizonBeyondStream,
}

/// Instantaneous drift of a filled order from the book right after its fill.
pub fn drift_instant(
    order: &TrackedOrder,
    book_at_fill: &BookState,
    book_at_t0: &BookState,
) -> Result<f64, ExperimentError> {
    if !order.is_filled() {
        return Err(ExperimentError::NotFilled);
    }
    let (Ok(m0), Ok(m1)) = (book_at_t0.mid2(), book_at_fill.mid2()) else {
        return Err(ExperimentError::HorizonBeyondStream);
    };
    Ok(drift_from(order, book_at_fill, m0 == m1))
}

fn drift_from(order: &TrackedOrder, book: &BookState, mid_unchanged: bool) -> f64 {
    let price = if mid_unchanged {
        book.microprice()
    } else {
        book.midprice()
    };
    price.map_or(f64::NAN, |p| order.ret_bp(p))
}

/// Drift after `tau_s` seconds, with `book` the state at or before `t0 + tau_s`.
pub fn drift_tau(order: &TrackedOrder, book: &BookState, tau_s: f64) -> Result<f64, ExperimentError> {
    if !order.is_filled() || order.t0 + secs(tau_s) < order.terminal.ts() {
        return Err(ExperimentError::NotFilled);
    }
    if book.ts() > order.t0 + secs(tau_s) {
        return Err(ExperimentError::HorizonBeyondStream);
    }
    let micro = book.microprice().map_err(|_| ExperimentError::HorizonBeyondStream)?;
    Ok(order.ret_bp(micro))
}

/// Markout of a filled order against the mid one second after the fill.
pub fn markout_1s(order: &TrackedOrder, book: &BookState) -> Result<f64, ExperimentError> {
    if !order.is_filled() {
        return Err(ExperimentError::NotFilled);
    }
    let mid = book.midprice().map_err(|_| ExperimentError::HorizonBeyondStream)?;
    Ok(order.ret_bp(mid))
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Probe {
    Drift(usize),
    Markout,
    Forward,
}

struct Engine {
    cfg: ExperimentConfig,
    venue: Venue,
    history: Option<MarketHistory>,
    orders: Vec<Option<TrackedOrder>>,
    drafts: Vec<Draft>,
    live: Vec<(OrderId, usize)>,
    probes: BinaryHeap<Reverse<(Ts, u64, usize, Probe)>>,
    probe_seq: u64,
    /// (order index, mid2 at the end of the fill's timestamp group).
    watch: Vec<(usize, Option<i64>)>,
}

/// An order still resting: the parts of TrackedOrder known at submission.
struct Draft {
    id: OrderId,
    side: Side,
    limit: Price,
    t0: Ts,
    seq0: u64,
    qnear0: Qty,
    qopp0: Qty,
    imb0: f64,
    mid2_t0: i64,
    features: Option<FeatureVector>,
}

impl Engine {
    fn submit(&mut self, side: Side, t0: Ts) {
        let book = self.venue.book();
        let (Some(near), Some(opp), Ok(mid2)) = (book.top(side), book.top(side.opposite()), book.mid2()) else {
            return;
        };
        let imb0 = book.imbalance().unwrap_or(0.0) * side.signf();
        let features = match (&self.cfg.features, &self.history) {
            (Some(fc), Some(h)) => extract_features(h, book, t0, side, fc).ok(),
            _ => None,
        };
        let seq0 = self.venue.seq();
        let Some((id, limit)) = self.venue.post_at_touch(side) else {
            return;
        };
        self.drafts.push(Draft {
            id,
            side,
            limit,
            t0,
            seq0,
            qnear0: near.1,
            qopp0: opp.1,
            imb0,
            mid2_t0: mid2,
            features,
        });
        self.orders.push(None);
        self.live.push((id, self.drafts.len() - 1));
    }

    fn schedule(&mut self, at: Ts, idx: usize, probe: Probe) {
        self.probe_seq += 1;
        self.probes.push(Reverse((at, self.probe_seq, idx, probe)));
    }

    fn finish(&mut self, idx: usize, terminal: Terminal, mid_move: i64) {
        let d = &mut self.drafts[idx];
        let n_h = self.cfg.drift_horizons_s.len();
        self.orders[idx] = Some(TrackedOrder {
            id: d.id,
            side: d.side,
            limit_price: d.limit,
            qty: Qty(1),
            t0: d.t0,
            seq0: d.seq0,
            qnear0: d.qnear0,
            qopp0: d.qopp0,
            imb0: d.imb0,
            terminal,
            mid_move,
            drift_instant: None,
            drift_tau: vec![None; n_h],
            markout_1s: None,
            forward_ret: None,
            reversal_ret: None,
            features: d.features.take(),
        });
        let t = terminal.ts();
        self.schedule(t + secs(self.cfg.forward_s), idx, Probe::Forward);
        if let Terminal::Filled { .. } = terminal {
            let book = self.venue.book();
            let unchanged = book.mid2().ok() == Some(self.drafts[idx].mid2_t0);
            let o = self.orders[idx].as_mut().expect("just set");
            o.drift_instant = Some(drift_from(o, book, unchanged));
            let t0 = o.t0;
            self.schedule(t + secs(self.cfg.markout_s), idx, Probe::Markout);
            for h in 0..n_h {
                let at = t0 + secs(self.cfg.drift_horizons_s[h]);
                if at >= t {
                    self.schedule(at, idx, Probe::Drift(h));
                }
            }
            self.watch.push((idx, None));
        }
    }

    /// Resolves probes whose horizon is strictly before `next_ts` (or at or
    /// before it when `inclusive`).
    fn flush_probes(&mut self, next_ts: Ts, inclusive: bool) {
        let book = self.venue.book();
        while let Some(Reverse((at, _, idx, probe))) = self.probes.peek().copied() {
            if at > next_ts || (at == next_ts && !inclusive) {
                break;
            }
            self.probes.pop();
            let Some(o) = self.orders[idx].as_mut() else {
                continue;
            };
            match probe {
                Probe::Drift(h) => o.drift_tau[h] = book.microprice().ok().map(|p| o.ret_bp(p)),
                Probe::Markout => o.markout_1s = book.midprice().ok().map(|p| o.ret_bp(p)),
                Probe::Forward => o.forward_ret = book.midprice().ok().map(|p| o.ret_bp(p)),
            }
        }
    }

    /// Called once all events of a timestamp have been applied.
    fn end_of_group(&mut self) {
        let book = self.venue.book();
        let mid = book.mid2().ok();
        let orders = &mut self.orders;
        self.watch.retain_mut(|(idx, reference)| match reference {
            None => {
                *reference = mid;
                true
            }
            Some(r) if mid.is_some() && mid != Some(*r) => {
                let o = orders[*idx].as_mut().expect("filled order");
                o.reversal_ret = book.top_price(o.side).map(|p| o.ret_bp(p.0 as f64));
                false
            }
            _ => true,
        });
    }

    fn step(&mut self, ev: &MarketEvent) -> Result<(), ExperimentError> {
        let before = self.venue.book().mid2().ok();
        let step = self.venue.apply(ev)?;
        if step.skipped {
            return Ok(());
        }
        if let Some(h) = self.history.as_mut() {
            h.record(ev, self.venue.book());
        }
        let after = self.venue.book().mid2().ok();
        let delta = match (before, after) {
            (Some(b), Some(a)) => a - b,
            _ => 0,
        };
        for f in &step.fills {
            let pos = self.live.iter().position(|l| l.0 == f.id).expect("live own order");
            let (_, idx) = self.live.remove(pos);
            let terminal = Terminal::Filled {
                ts: f.ts,
                seq: f.seq,
                qp: f.qp,
                la: f.queue.la,
                lb: f.queue.lb,
                qnear: f.qnear,
                qopp: f.qopp,
            };
            self.finish(idx, terminal, f.side.sign() * delta);
        }
        let seq = self.venue.seq() - 1;
        let stale: Vec<(OrderId, usize)> = self
            .live
            .iter()
            .copied()
            .filter(|(id, _)| !self.venue.at_touch(*id))
            .collect();
        for (id, idx) in stale {
            self.venue.cancel(id).expect("live own order");
            self.live.retain(|l| l.0 != id);
            let side = self.drafts[idx].side;
            self.finish(idx, Terminal::Canceled { ts: ev.ts, seq }, side.sign() * delta);
        }
        if self.cfg.mode == QuotingMode::Continuous {
            for side in [Side::Bid, Side::Ask] {
                if !self.live.iter().any(|(_, i)| self.drafts[*i].side == side) {
                    self.submit(side, ev.ts);
                }
            }
        }
        Ok(())
    }
}

/// Replays `events` under the configured quoting mode and records every order.
pub fn run_experiment(events: &[MarketEvent], cfg: &ExperimentConfig) -> Result<OutcomeDataset, ExperimentError> {
    let interval = match cfg.mode {
        QuotingMode::Periodic { interval_s } if interval_s.is_nan() || interval_s <= 0.0 => {
            return Err(ExperimentError::BadInterval(interval_s))
        }
        QuotingMode::Periodic { interval_s } => Some(secs(interval_s).max(1)),
        QuotingMode::Continuous => None,
    };
    let mut eng = Engine {
        cfg: cfg.clone(),
        venue: Venue::new(),
        history: cfg.features.as_ref().map(MarketHistory::new),
        orders: Vec::new(),
        drafts: Vec::new(),
        live: Vec::new(),
        probes: BinaryHeap::new(),
        probe_seq: 0,
        watch: Vec::new(),
    };
    let mut next_submit = interval.and_then(|iv| events.first().map(|e| e.ts + iv));
    let mut group: Option<Ts> = None;
    for ev in events {
        if group.is_some_and(|g| ev.ts > g) {
            eng.end_of_group();
            if let (Some(iv), Some(t)) = (interval, next_submit.as_mut()) {
                while *t < ev.ts {
                    let at = *t;
                    eng.submit(Side::Bid, at);
                    eng.submit(Side::Ask, at);
                    *t += iv;
                }
            }
        }
        eng.flush_probes(ev.ts, false);
        group = Some(ev.ts);
        eng.step(ev)?;
    }
    if let Some(g) = group {
        eng.end_of_group();
        eng.flush_probes(g, true);
    }
    let open_at_end = eng.live.len() as u64;
    let orders: Vec<TrackedOrder> = eng.orders.into_iter().flatten().collect();
    let filled = orders.iter().filter(|o| o.is_filled()).count() as u64;
    Ok(OutcomeDataset {
        mode: cfg.mode,
        drift_horizons_s: cfg.drift_horizons_s.clone(),
        submitted: orders.len() as u64,
        filled,
        canceled: orders.len() as u64 - filled,
        orders,
        open_at_end,
        skipped_events: eng.venue.skipped_crossed(),
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{:.6}", x + 0.0))
}

/// One CSV row per order; empty cells mark undefined values.
pub fn outcomes_csv(ds: &OutcomeDataset) -> String {
    let mut s = String::from(
        "id,side,limit_price,qty,t0,seq0,qnear0,qopp0,imb0,status,t_end,seq_end,qp,la_t,lb_t,qnear_t,qopp_t,mid_move_half_ticks,drift_instant",
    );
    for h in &ds.drift_horizons_s {
        let _ = write!(s, ",drift_{h}s");
    }
    s.push_str(",markout_1s,forward_ret,reversal_ret\n");
    for o in &ds.orders {
        let (status, t_end, seq_end, qp, la, lb, qn, qo) = match o.terminal {
            Terminal::Filled {
                ts,
                seq,
                qp,
                la,
                lb,
                qnear,
                qopp,
            } => (
                "filled",
                ts,
                seq,
                format!("{qp:.6}"),
                la.0.to_string(),
                lb.0.to_string(),
                qnear.0.to_string(),
                qopp.0.to_string(),
            ),
            Terminal::Canceled { ts, seq } => {
                ("canceled", ts, seq, String::new(), String::new(), String::new(), String::new(), String::new())
            }
        };
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{:.6},{status},{t_end},{seq_end},{qp},{la},{lb},{qn},{qo},{},{}",
            o.id,
            o.side.as_char(),
            o.limit_price,
            o.qty,
            o.t0,
            o.seq0,
            o.qnear0,
            o.qopp0,
            o.imb0 + 0.0,
            o.mid_move,
            opt(o.drift_instant)
        );
        for d in &o.drift_tau {
            let _ = write!(s, ",{}", opt(*d));
        }
        let _ = writeln!(s, ",{},{},{}", opt(o.markout_1s), opt(o.forward_ret), opt(o.reversal_ret));
    }
    s
}
