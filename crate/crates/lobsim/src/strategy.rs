//! Buy-and-rebalance strategies with inventory in {-1, 0, +1}.
//!
//! The maker strategies share one loop: quote both touches while flat and
//! only the rebalancing side otherwise, cancel any quote that falls behind
//! the touch, and repost after every event. They differ only in the gate
//! that decides whether a quote may be posted or kept.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{BookState, OrderId, Price, Side};
use crate::event::{secs, MarketEvent, Ts, MICROS_PER_SEC};
use crate::experiment::TrackedOrder;
use crate::reversal::features::{extract_features, FeatureConfig, MarketHistory};
use crate::reversal::{two_sample_t, ModelFile, TTestResult};
use crate::stats::{mean, std_dev};
use crate::venue::{ReplayError, Venue};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeeSchedule {
    /// Negative values are rebates.
    pub maker_bp: f64,
    pub taker_bp: f64,
}

impl Default for FeeSchedule {
    fn default() -> Self {
        FeeSchedule {
            maker_bp: -0.5,
            taker_bp: 1.5,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum StrategyKind {
    BasicMM,
    ImbMaker { post_thr: f64, cancel_thr: Option<f64> },
    ImbTaker { thr: f64 },
    ReversalUndirectional { p: f64 },
    ReversalBalanced { p: f64 },
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub fees: FeeSchedule,
}

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("need at least two hourly buckets with nonzero variance")]
    DegenerateVariance,
    #[error("no contra liquidity for a taker order at ts {0}")]
    NoLiquidity(Ts),
    #[error("threshold {0} outside [0, 1)")]
    BadThreshold(f64),
}

/// One execution of a strategy order.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub ts: Ts,
    pub side: Side,
    pub price: Price,
    /// Twice the mid at the moment the leg was decided, in ticks.
    pub mid2: i64,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roundtrip {
    pub open: Leg,
    pub close: Leg,
    /// Signed price return of the two fills.
    pub gross_bp: f64,
    /// Sum of both legs' fees (negative for rebates).
    pub fees_bp: f64,
    /// `gross_bp - fees_bp`.
    pub realized_bp: f64,
    /// Mid-to-mid return; equals `gross_bp` for maker strategies.
    pub pre_fee_bp: f64,
    /// Cost of crossing the spread on both legs; zero for maker strategies.
    pub spread_cost_bp: f64,
    pub holding_s: f64,
}

fn maker_roundtrip(open: Leg, close: Leg, fees: &FeeSchedule) -> Roundtrip {
    let gross = open.side.signf() * (close.price.0 as f64 / open.price.0 as f64 - 1.0) * 1e4;
    let fees_bp = 2.0 * fees.maker_bp;
    Roundtrip {
        open,
        close,
        gross_bp: gross,
        fees_bp,
        realized_bp: gross - fees_bp,
        pre_fee_bp: gross,
        spread_cost_bp: 0.0,
        holding_s: (close.ts - open.ts) as f64 / MICROS_PER_SEC as f64,
    }
}

/// Taker returns share the entry mid as denominator so that
/// `gross = pre_fee - spread_cost` holds term by term.
fn taker_roundtrip(open: Leg, close: Leg, fees: &FeeSchedule) -> Roundtrip {
    let sgn = open.side.sign();
    let m0 = open.mid2 as f64;
    let pre = (sgn * (close.mid2 - open.mid2)) as f64 / m0 * 1e4;
    let spread = (sgn * (2 * open.price.0 - open.mid2) + sgn * (close.mid2 - 2 * close.price.0)) as f64 / m0 * 1e4;
    let gross = pre - spread;
    let fees_bp = 2.0 * fees.taker_bp;
    Roundtrip {
        open,
        close,
        gross_bp: gross,
        fees_bp,
        realized_bp: gross - fees_bp,
        pre_fee_bp: pre,
        spread_cost_bp: spread,
        holding_s: (close.ts - open.ts) as f64 / MICROS_PER_SEC as f64,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub name: String,
    pub roundtrips: Vec<Roundtrip>,
    /// Fills inside completed roundtrips.
    pub trades: usize,
    pub mean_ret_bp: f64,
    pub std_ret_bp: f64,
    pub mean_pre_fee_bp: f64,
    pub avg_holding_s: f64,
    pub sharpe_annualized: Option<f64>,
    /// A position was still open when the stream ended; it is not counted.
    pub open_at_end: bool,
    /// Cumulative realized bp after each roundtrip close.
    pub cum_pnl: Vec<(Ts, f64)>,
}

/// Annualized Sharpe ratio of hourly returns, sqrt(24 * 365) scaling.
pub fn sharpe_annualized(hourly: &[f64]) -> Result<f64, StrategyError> {
    if hourly.len() < 2 {
        return Err(StrategyError::DegenerateVariance);
    }
    let sd = std_dev(hourly);
    if sd.is_nan() || sd <= 0.0 {
        return Err(StrategyError::DegenerateVariance);
    }
    Ok(mean(hourly) / sd * (24.0f64 * 365.0).sqrt())
}

/// Realized bp summed per hour since `start`; hours without closes count as 0.
pub fn hourly_returns(rts: &[Roundtrip], start: Ts, end: Ts) -> Vec<f64> {
    let hour = 3600 * MICROS_PER_SEC;
    let n = ((end - start) / hour + 1).max(1) as usize;
    let mut out = vec![0.0; n];
    for r in rts {
        let k = (((r.close.ts - start) / hour).max(0) as usize).min(n - 1);
        out[k] += r.realized_bp;
    }
    out
}

fn report(name: &str, rts: Vec<Roundtrip>, open_at_end: bool, span: Option<(Ts, Ts)>) -> StrategyReport {
    let net: Vec<f64> = rts.iter().map(|r| r.realized_bp).collect();
    let pre: Vec<f64> = rts.iter().map(|r| r.pre_fee_bp).collect();
    let hold: Vec<f64> = rts.iter().map(|r| r.holding_s).collect();
    let mut cum = 0.0;
    let cum_pnl = rts
        .iter()
        .map(|r| {
            cum += r.realized_bp;
            (r.close.ts, cum)
        })
        .collect();
    let sharpe = span.and_then(|(s, e)| sharpe_annualized(&hourly_returns(&rts, s, e)).ok());
    StrategyReport {
        name: name.to_string(),
        trades: 2 * rts.len(),
        mean_ret_bp: mean(&net),
        std_ret_bp: std_dev(&net),
        mean_pre_fee_bp: mean(&pre),
        avg_holding_s: mean(&hold),
        sharpe_annualized: sharpe,
        open_at_end,
        cum_pnl,
        roundtrips: rts,
    }
}

fn span(events: &[MarketEvent]) -> Option<(Ts, Ts)> {
    Some((events.first()?.ts, events.last()?.ts))
}

/// What a gate may look at: the book after the current event.
pub struct View<'a> {
    pub book: &'a BookState,
    pub history: Option<&'a MarketHistory>,
    pub ts: Ts,
}

pub trait Gate {
    fn needs_history(&self) -> bool {
        false
    }
    /// May a new quote on `side` be posted now?
    fn post(&mut self, view: &View, side: Side) -> bool;
    /// May a live quote on `side` stay?
    fn keep(&mut self, _view: &View, _side: Side) -> bool {
        true
    }
}

pub struct Always;

impl Gate for Always {
    fn post(&mut self, _: &View, _: Side) -> bool {
        true
    }
}

/// Posts when the side-adjusted imbalance exceeds `post_thr`; optionally
/// cancels when it drops below `cancel_thr`.
pub struct ImbalanceGate {
    pub post_thr: f64,
    pub cancel_thr: Option<f64>,
}

fn signed_imb(book: &BookState, side: Side) -> Option<f64> {
    book.imbalance().ok().map(|i| side.signf() * i)
}

impl Gate for ImbalanceGate {
    fn post(&mut self, v: &View, side: Side) -> bool {
        signed_imb(v.book, side).is_some_and(|i| i > self.post_thr)
    }

    fn keep(&mut self, v: &View, side: Side) -> bool {
        match self.cancel_thr {
            Some(c) => signed_imb(v.book, side).is_some_and(|i| i >= c),
            None => true,
        }
    }
}

/// Posts when the reversal model's probability for an order on `side`
/// exceeds `p`.
pub struct ModelGate<'m> {
    pub model: &'m ModelFile,
    pub features: FeatureConfig,
    pub p: f64,
}

impl ModelGate<'_> {
    pub fn prob(&self, v: &View, side: Side) -> Option<f64> {
        let h = v.history?;
        let f = extract_features(h, v.book, v.ts, side, &self.features).ok()?;
        Some(self.model.predict(&f.values))
    }
}

impl Gate for ModelGate<'_> {
    fn needs_history(&self) -> bool {
        true
    }

    fn post(&mut self, v: &View, side: Side) -> bool {
        self.prob(v, side).is_some_and(|q| q > self.p)
    }
}

fn slot(side: Side) -> usize {
    match side {
        Side::Bid => 0,
        Side::Ask => 1,
    }
}

/// The shared maker loop.
pub fn run_maker_loop<G: Gate>(
    name: &str,
    events: &[MarketEvent],
    gate: &mut G,
    fees: &FeeSchedule,
    history_cfg: Option<&FeatureConfig>,
) -> Result<StrategyReport, StrategyError> {
    let mut venue = Venue::new();
    let mut history = if gate.needs_history() {
        Some(MarketHistory::new(&history_cfg.cloned().unwrap_or_default()))
    } else {
        None
    };
    let mut quotes: [Option<OrderId>; 2] = [None, None];
    let mut inv: i64 = 0;
    let mut open: Option<Leg> = None;
    let mut rts = Vec::new();
    for ev in events {
        let mid_before = venue.book().mid2().unwrap_or(0);
        let step = venue.apply(ev)?;
        if step.skipped {
            continue;
        }
        if let Some(h) = history.as_mut() {
            h.record(ev, venue.book());
        }
        for f in &step.fills {
            quotes[slot(f.side)] = None;
            let leg = Leg {
                ts: f.ts,
                side: f.side,
                price: f.price,
                mid2: mid_before,
            };
            match open.take() {
                None => {
                    inv = f.side.sign();
                    open = Some(leg);
                }
                Some(o) => {
                    inv = 0;
                    rts.push(maker_roundtrip(o, leg, fees));
                }
            }
        }
        for side in [Side::Bid, Side::Ask] {
            let Some(id) = quotes[slot(side)] else { continue };
            let view = View {
                book: venue.book(),
                history: history.as_ref(),
                ts: ev.ts,
            };
            let unwanted = inv == side.sign();
            if unwanted || !venue.at_touch(id) || !gate.keep(&view, side) {
                venue.cancel(id).expect("live quote");
                quotes[slot(side)] = None;
            }
        }
        for side in [Side::Bid, Side::Ask] {
            let wanted = inv == 0 || inv == -side.sign();
            if !wanted || quotes[slot(side)].is_some() {
                continue;
            }
            let view = View {
                book: venue.book(),
                history: history.as_ref(),
                ts: ev.ts,
            };
            if gate.post(&view, side) {
                quotes[slot(side)] = venue.post_at_touch(side).map(|q| q.0);
            }
        }
    }
    Ok(report(name, rts, open.is_some(), span(events)))
}

pub fn run_basic_mm(events: &[MarketEvent], fees: &FeeSchedule) -> Result<StrategyReport, StrategyError> {
    run_maker_loop("basic_mm", events, &mut Always, fees, None)
}

pub fn run_imbalance_maker(
    events: &[MarketEvent],
    post_thr: f64,
    cancel_thr: Option<f64>,
    fees: &FeeSchedule,
) -> Result<StrategyReport, StrategyError> {
    if !(0.0..1.0).contains(&post_thr) {
        return Err(StrategyError::BadThreshold(post_thr));
    }
    let name = if cancel_thr.is_some() {
        "imbalance_maker_cancel"
    } else {
        "imbalance_maker"
    };
    let mut gate = ImbalanceGate { post_thr, cancel_thr };
    run_maker_loop(name, events, &mut gate, fees, None)
}

pub fn run_reversal_balanced(
    events: &[MarketEvent],
    model: &ModelFile,
    features: &FeatureConfig,
    p: f64,
    fees: &FeeSchedule,
) -> Result<StrategyReport, StrategyError> {
    let mut gate = ModelGate {
        model,
        features: features.clone(),
        p,
    };
    run_maker_loop("reversal_balanced", events, &mut gate, fees, Some(features))
}

/// Enters with a taker order in the direction of the imbalance once its
/// magnitude exceeds `thr`, and exits the same way when it flips past `-thr`.
pub fn run_imbalance_taker(events: &[MarketEvent], thr: f64, fees: &FeeSchedule) -> Result<StrategyReport, StrategyError> {
    if !(0.0..1.0).contains(&thr) {
        return Err(StrategyError::BadThreshold(thr));
    }
    let mut venue = Venue::new();
    let mut open: Option<Leg> = None;
    let mut rts = Vec::new();
    for ev in events {
        if venue.apply(ev)?.skipped {
            continue;
        }
        let book = venue.book();
        let Ok(imb) = book.imbalance() else { continue };
        let side = match open {
            None if imb > thr => Side::Bid,
            None if imb < -thr => Side::Ask,
            Some(o) if o.side.opposite().signf() * imb > thr => o.side.opposite(),
            _ => continue,
        };
        let price = book.top_price(side.opposite()).ok_or(StrategyError::NoLiquidity(ev.ts))?;
        let leg = Leg {
            ts: ev.ts,
            side,
            price,
            mid2: book.mid2().expect("two-sided book"),
        };
        match open.take() {
            None => open = Some(leg),
            Some(o) => rts.push(taker_roundtrip(o, leg, fees)),
        }
    }
    Ok(report("imbalance_taker", rts, open.is_some(), span(events)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UndirectionalRow {
    pub p: f64,
    pub orders: usize,
    pub orders_per_day: f64,
    pub fill_prob: f64,
    /// Mean forward return of the gated filled orders.
    pub mean_ret_bp: f64,
    pub std_ret_bp: f64,
    /// Gated filled returns against all filled returns of the population.
    pub ttest: Option<TTestResult>,
}

/// Reversal-gated quoting without inventory limits, evaluated on already
/// replayed candidate orders: an order is taken iff its predicted reversal
/// probability exceeds `p`.
pub fn run_reversal_undirectional(
    candidates: &[&TrackedOrder],
    model: &ModelFile,
    p: f64,
    days: f64,
) -> UndirectionalRow {
    let scored: Vec<(&TrackedOrder, f64)> = candidates
        .iter()
        .filter_map(|o| o.features.as_ref().map(|f| (*o, model.predict(&f.values))))
        .collect();
    let baseline: Vec<f64> = scored
        .iter()
        .filter(|(o, _)| o.is_filled())
        .filter_map(|(o, _)| o.forward_ret)
        .collect();
    let gated: Vec<&TrackedOrder> = scored.iter().filter(|(_, q)| *q > p).map(|(o, _)| *o).collect();
    let rets: Vec<f64> = gated
        .iter()
        .filter(|o| o.is_filled())
        .filter_map(|o| o.forward_ret)
        .collect();
    let filled = gated.iter().filter(|o| o.is_filled()).count();
    let ttest = (rets.len() >= 2 && baseline.len() >= 2).then(|| two_sample_t(&rets, &baseline));
    UndirectionalRow {
        p,
        orders: gated.len(),
        orders_per_day: gated.len() as f64 / days.max(f64::MIN_POSITIVE),
        fill_prob: if gated.is_empty() {
            f64::NAN
        } else {
            filled as f64 / gated.len() as f64
        },
        mean_ret_bp: mean(&rets),
        std_ret_bp: std_dev(&rets),
        ttest,
    }
}

/// `threshold | orders/day | fill prob | return | std | p-value`.
pub fn format_undirectional_row(r: &UndirectionalRow) -> String {
    format!(
        "{:.2} | {:.0} | {:.4} | {:.2} | {:.2} | {:.4}",
        r.p,
        r.orders_per_day,
        r.fill_prob,
        r.mean_ret_bp,
        r.std_ret_bp,
        r.ttest.map_or(f64::NAN, |t| t.p_value)
    )
}

/// Rows of a balanced-strategy sweep with holding times under ten minutes.
pub fn reportable(rows: &[(f64, StrategyReport)]) -> Vec<&(f64, StrategyReport)> {
    rows.iter().filter(|(_, r)| r.avg_holding_s < 600.0).collect()
}

/// Trade blotter: one line per roundtrip.
pub fn blotter_csv(r: &StrategyReport) -> String {
    let mut s = String::from(
        "open_ts,open_side,open_price,close_ts,close_side,close_price,gross_bp,fees_bp,realized_bp,pre_fee_bp,spread_cost_bp,holding_s\n",
    );
    for t in &r.roundtrips {
        s.push_str(&format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            t.open.ts,
            t.open.side.as_char(),
            t.open.price,
            t.close.ts,
            t.close.side.as_char(),
            t.close.price,
            t.gross_bp,
            t.fees_bp,
            t.realized_bp,
            t.pre_fee_bp,
            t.spread_cost_bp,
            t.holding_s
        ));
    }
    s
}

/// Duration of `events` in days.
pub fn stream_days(events: &[MarketEvent]) -> f64 {
    span(events).map_or(0.0, |(a, b)| (b - a) as f64 / secs(86_400.0) as f64)
}
