//! The 173-feature reversal input, computed from data at or before `t0`.
//!
//! Feature names follow a buy order's point of view: `buy_*` counts
//! same-direction trades, `ob_bid_liq` is the near-side touch and so on.
//! For a sell order the sides are swapped and sign-bearing features are
//! multiplied by -1, so buys and sells share one model.
//!
//! Returns are tick differences divided by the mid at `t0` and expressed in
//! basis points. Using a single reference price keeps every feature exactly
//! invariant under a price reflection about the mid.

use std::collections::VecDeque;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::{BookError, BookState, Side};
use crate::event::{secs, EventBody, MarketEvent, Ts, MICROS_PER_SEC};

pub const N_FEATURES: usize = 173;

pub const SCALES: [(&str, Ts); 5] = [
    ("100ms", 100_000),
    ("1s", 1_000_000),
    ("5s", 5_000_000),
    ("30s", 30_000_000),
    ("300s", 300_000_000),
];

pub const WINDOW_FEATURES: [&str; 11] = [
    "amplitude",
    "ret_vwap",
    "max_size",
    "avg_size",
    "buy_count",
    "sell_count",
    "total_buy",
    "total_sell",
    "ret_autocov",
    "ret_sum",
    "trade_intensity",
];

pub const BOOK_FEATURES: [&str; 8] = [
    "stdev_100",
    "stdev_500",
    "ob_bid_liq",
    "ob_ask_liq",
    "ob_half",
    "ob_other_half",
    "totb_mean",
    "age",
];

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureGroup {
    Momentum,
    OrderBook,
    PriceDynamics,
    TradeVolume,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 4] = [
        FeatureGroup::Momentum,
        FeatureGroup::OrderBook,
        FeatureGroup::PriceDynamics,
        FeatureGroup::TradeVolume,
    ];

    pub fn label(self) -> &'static str {
        match self {
            FeatureGroup::Momentum => "Momentum",
            FeatureGroup::OrderBook => "Order Book",
            FeatureGroup::PriceDynamics => "Price Dynamics",
            FeatureGroup::TradeVolume => "Trade Volume Patterns",
        }
    }
}

/// Index of a windowed feature in the flat vector.
pub fn window_index(scale: usize, feature: usize, window: usize) -> usize {
    (scale * WINDOW_FEATURES.len() + feature) * 3 + window
}

pub fn feature_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut names = Vec::with_capacity(N_FEATURES);
        for (scale, _) in SCALES {
            for f in WINDOW_FEATURES {
                for w in 0..3 {
                    names.push(format!("{f}_{scale}_w{w}"));
                }
            }
        }
        names.extend(BOOK_FEATURES.iter().map(|s| s.to_string()));
        assert_eq!(names.len(), N_FEATURES);
        names
    })
}

pub fn feature_group(index: usize) -> FeatureGroup {
    let name = &feature_names()[index];
    let stem = |p: &str| name.starts_with(p);
    if stem("ret_autocov") || stem("ret_sum") || stem("trade_intensity") {
        FeatureGroup::Momentum
    } else if stem("amplitude") || stem("ret_vwap") || stem("stdev") {
        FeatureGroup::PriceDynamics
    } else if stem("ob_") || stem("totb") || stem("age") {
        FeatureGroup::OrderBook
    } else {
        FeatureGroup::TradeVolume
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlagReason {
    /// Lookback reaches before the first recorded event.
    PartialHistory,
    /// No trades (or too few) in the window; a sentinel value was used.
    EmptyWindow,
    /// The book side could not absorb the full notional.
    ShallowBook,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub flagged: Vec<(u16, FlagReason)>,
}

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("no touch to reference: {0}")]
    Book(#[from] BookError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureConfig {
    pub notional_usd: f64,
    pub unit_usd: f64,
    pub tob_lookback_s: f64,
    pub sample_interval_s: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            notional_usd: 500_000.0,
            unit_usd: 100.0,
            tob_lookback_s: 600.0,
            sample_interval_s: 10.0,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct TradePrint {
    pub ts: Ts,
    pub price: i64,
    pub qty: u64,
    pub aggressor: Side,
}

/// Rolling record of trades, last-trade samples and touch changes.
#[derive(Clone, Debug)]
pub struct MarketHistory {
    /// Trades from `head` on are live; older ones await compaction.
    trades: Vec<TradePrint>,
    head: usize,
    /// (ts, bid, ask) whenever the touch prices change; changes within one
    /// timestamp are collapsed into one.
    tob: VecDeque<(Ts, i64, i64)>,
    /// (grid index, last trade price at or before that grid time).
    samples: VecDeque<(i64, i64)>,
    first_ts: Option<Ts>,
    first_trade_ts: Option<Ts>,
    retention: Option<Ts>,
    grid: Ts,
}

const MAX_SAMPLES: usize = 501;

impl MarketHistory {
    /// History that prunes data older than the longest lookback.
    pub fn new(cfg: &FeatureConfig) -> Self {
        let longest = (3 * SCALES[4].1).max(secs(cfg.tob_lookback_s)) + MICROS_PER_SEC;
        Self::with_retention(cfg, Some(longest))
    }

    /// History that keeps everything; for offline queries at arbitrary `t0`.
    pub fn unbounded(cfg: &FeatureConfig) -> Self {
        Self::with_retention(cfg, None)
    }

    fn with_retention(cfg: &FeatureConfig, retention: Option<Ts>) -> Self {
        MarketHistory {
            trades: Vec::new(),
            head: 0,
            tob: VecDeque::new(),
            samples: VecDeque::new(),
            first_ts: None,
            first_trade_ts: None,
            retention,
            grid: secs(cfg.sample_interval_s).max(1),
        }
    }

    /// Records an event; `book` is the state right after applying it.
    pub fn record(&mut self, ev: &MarketEvent, book: &BookState) {
        self.first_ts.get_or_insert(ev.ts);
        if let EventBody::Trade(t) = &ev.body {
            self.first_trade_ts.get_or_insert(ev.ts);
            if let Some(last) = self.trades.last().copied() {
                let from = last.ts.div_euclid(self.grid) + if last.ts.rem_euclid(self.grid) == 0 { 0 } else { 1 };
                let to = (ev.ts - 1).div_euclid(self.grid);
                let from = from.max(to - MAX_SAMPLES as i64 + 1);
                for j in from..=to {
                    self.samples.push_back((j, last.price));
                }
                while self.samples.len() > MAX_SAMPLES && self.retention.is_some() {
                    self.samples.pop_front();
                }
            }
            self.trades.push(TradePrint {
                ts: ev.ts,
                price: t.price.0,
                qty: t.qty.0,
                aggressor: t.aggressor,
            });
        }
        if let (Some(b), Some(a)) = (book.top_price(Side::Bid), book.top_price(Side::Ask)) {
            let pair = (b.0, a.0);
            match self.tob.back().copied() {
                Some((ts, pb, pa)) if (pb, pa) != pair => {
                    if ts == ev.ts {
                        self.tob.pop_back();
                        let revert = self.tob.back().is_some_and(|&(_, b0, a0)| (b0, a0) == pair);
                        if !revert {
                            self.tob.push_back((ev.ts, pair.0, pair.1));
                        }
                    } else {
                        self.tob.push_back((ev.ts, pair.0, pair.1));
                    }
                }
                None => self.tob.push_back((ev.ts, pair.0, pair.1)),
                _ => {}
            }
        }
        if let Some(keep) = self.retention {
            let horizon = ev.ts - keep;
            while self.head + 1 < self.trades.len() && self.trades[self.head].ts < horizon {
                self.head += 1;
            }
            if self.head > 4096 && self.head * 2 > self.trades.len() {
                self.trades.drain(..self.head);
                self.head = 0;
            }
            while self.tob.len() > 1 && self.tob[1].0 < horizon {
                self.tob.pop_front();
            }
        }
    }

    pub fn trades(&self) -> &[TradePrint] {
        &self.trades[self.head..]
    }

    /// Last-trade prices on the sampling grid up to `t0`, oldest first.
    fn grid_prices(&self, t0: Ts, want: usize) -> Vec<i64> {
        let trades = self.trades();
        let end = trades.partition_point(|t| t.ts <= t0);
        if end == 0 {
            return Vec::new();
        }
        let last = trades[end - 1];
        let first_grid = {
            let f = self.first_trade_ts.unwrap_or(trades[0].ts);
            f.div_euclid(self.grid) + if f.rem_euclid(self.grid) == 0 { 0 } else { 1 }
        };
        let top = t0.div_euclid(self.grid);
        let mut out: Vec<i64> = Vec::with_capacity(want);
        // Grid points after the last trade at or before t0 carry its price.
        let last_grid_of_last = last.ts.div_euclid(self.grid)
            + if last.ts.rem_euclid(self.grid) == 0 { 0 } else { 1 };
        let mut j = top;
        while j >= last_grid_of_last && j >= first_grid && out.len() < want {
            out.push(last.price);
            j -= 1;
        }
        let cut = self.samples.partition_point(|s| s.0 <= j);
        for s in self.samples.range(..cut).rev() {
            if out.len() >= want || s.0 < first_grid {
                break;
            }
            out.push(s.1);
        }
        out.reverse();
        out
    }
}

struct WindowStats {
    values: [f64; 11],
    empty: bool,
}

fn window_stats(
    trades: &[TradePrint],
    len_s: f64,
    near_top: i64,
    p_ref: f64,
    side: Side,
) -> WindowStats {
    let mut v = [0.0; 11];
    if trades.is_empty() {
        v[10] = len_s;
        return WindowStats {
            values: v,
            empty: true,
        };
    }
    let sgn = side.signf();
    let (mut lo, mut hi) = (i64::MAX, i64::MIN);
    let (mut vol, mut dev) = (0u64, 0i128);
    let (mut max_q, mut same_n, mut opp_n, mut same_v, mut opp_v) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for t in trades {
        lo = lo.min(t.price);
        hi = hi.max(t.price);
        vol += t.qty;
        dev += (t.price - near_top) as i128 * t.qty as i128;
        max_q = max_q.max(t.qty);
        if t.aggressor == side {
            same_n += 1;
            same_v += t.qty;
        } else {
            opp_n += 1;
            opp_v += t.qty;
        }
    }
    v[0] = (hi - lo) as f64 / p_ref * 1e4;
    v[1] = sgn * (dev as f64 / vol as f64) / p_ref * 1e4;
    v[2] = max_q as f64;
    v[3] = vol as f64 / trades.len() as f64;
    v[4] = same_n as f64;
    v[5] = opp_n as f64;
    v[6] = same_v as f64;
    v[7] = opp_v as f64;
    let rets: Vec<f64> = trades
        .windows(2)
        .map(|w| (w[1].price - w[0].price) as f64 / p_ref * 1e4)
        .collect();
    if rets.len() >= 2 {
        let m = rets.iter().sum::<f64>() / rets.len() as f64;
        let s: f64 = rets.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        v[8] = s / (rets.len() - 1) as f64;
    }
    v[9] = sgn * rets.iter().sum::<f64>();
    v[10] = if trades.len() >= 2 {
        let span = (trades[trades.len() - 1].ts - trades[0].ts) as f64 / MICROS_PER_SEC as f64;
        span / (trades.len() - 1) as f64
    } else {
        len_s
    };
    WindowStats {
        values: v,
        empty: trades.len() < 2,
    }
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Distance in bp from the touch to the VWAP of sweeping `units` on `side`.
fn sweep_distance(book: &BookState, side: Side, units: u64, p_ref: f64) -> (f64, bool) {
    let levels = book.levels(side);
    let Some(top) = book.top_price(side) else {
        return (0.0, true);
    };
    let (mut left, mut got, mut dev) = (units, 0u64, 0i128);
    for l in levels {
        let q = l.external().0.min(left);
        if q == 0 {
            continue;
        }
        dev += (l.price.0 - top.0).abs() as i128 * q as i128;
        got += q;
        left -= q;
        if left == 0 {
            break;
        }
    }
    if got == 0 {
        return (0.0, true);
    }
    (dev as f64 / got as f64 / p_ref * 1e4, left > 0)
}

/// Extracts the feature vector for an order on `side` posted at `t0`, with
/// `book` the state at `t0`. Events in `history` after `t0` are ignored.
pub fn extract_features(
    history: &MarketHistory,
    book: &BookState,
    t0: Ts,
    side: Side,
    cfg: &FeatureConfig,
) -> Result<FeatureVector, FeatureError> {
    let p_ref = book.midprice()?;
    let near_top = book.top_price(side).ok_or(BookError::EmptyBook(side))?.0;
    let mut values = vec![0.0; N_FEATURES];
    let mut flagged = Vec::new();
    let lookback = 3 * SCALES[SCALES.len() - 1].1;
    let all = history.trades();
    let end = all.partition_point(|t| t.ts <= t0);
    let start = all.partition_point(|t| t.ts <= t0 - lookback);
    let trades = &all[start..end];
    let first_ts = history.first_ts.unwrap_or(t0);
    for (si, &(_, len)) in SCALES.iter().enumerate() {
        let len_s = len as f64 / MICROS_PER_SEC as f64;
        for w in 0..3 {
            let hi = t0 - w as Ts * len;
            let lo = hi - len;
            let i0 = trades.partition_point(|t| t.ts <= lo);
            let i1 = trades.partition_point(|t| t.ts <= hi);
            let ws = window_stats(&trades[i0..i1], len_s, near_top, p_ref, side);
            for (f, val) in ws.values.iter().enumerate() {
                values[window_index(si, f, w)] = *val;
            }
            let partial = lo < first_ts;
            if partial || ws.empty {
                let reason = if partial {
                    FlagReason::PartialHistory
                } else {
                    FlagReason::EmptyWindow
                };
                for f in [1usize, 8, 10] {
                    flagged.push((window_index(si, f, w) as u16, reason));
                }
            }
        }
    }
    let base = SCALES.len() * WINDOW_FEATURES.len() * 3;
    let prices = history.grid_prices(t0, MAX_SAMPLES);
    for (k, n) in [(0usize, 100usize), (1, 500)] {
        let start = prices.len().saturating_sub(n + 1);
        let rets: Vec<f64> = prices[start..]
            .windows(2)
            .map(|w| (w[1] - w[0]) as f64 / p_ref * 1e4)
            .collect();
        values[base + k] = sample_std(&rets);
        if rets.len() < n {
            flagged.push(((base + k) as u16, FlagReason::PartialHistory));
        }
    }
    values[base + 2] = book.top(side).map_or(0.0, |t| t.1 .0 as f64);
    values[base + 3] = book.top(side.opposite()).map_or(0.0, |t| t.1 .0 as f64);
    let units = (cfg.notional_usd / cfg.unit_usd).ceil().max(1.0) as u64;
    for (k, s) in [(4usize, side), (5, side.opposite())] {
        let (d, shallow) = sweep_distance(book, s, units, p_ref);
        values[base + k] = d;
        if shallow {
            flagged.push(((base + k) as u16, FlagReason::ShallowBook));
        }
    }
    let tend = history.tob.partition_point(|c| c.0 <= t0);
    let changes: Vec<Ts> = history.tob.range(..tend).map(|c| c.0).collect();
    let tob_lookback = secs(cfg.tob_lookback_s);
    let lives: Vec<f64> = changes
        .windows(2)
        .filter(|w| w[1] >= t0 - tob_lookback)
        .map(|w| (w[1] - w[0]) as f64 / MICROS_PER_SEC as f64)
        .collect();
    let last_change = changes.last().copied().unwrap_or(first_ts);
    let age = (t0 - last_change) as f64 / MICROS_PER_SEC as f64;
    values[base + 6] = if lives.is_empty() {
        flagged.push(((base + 6) as u16, FlagReason::PartialHistory));
        age
    } else {
        lives.iter().sum::<f64>() / lives.len() as f64
    };
    values[base + 7] = age;
    // -0.0 from sign flips becomes +0.0 so mirrored books agree bit for bit
    values.iter_mut().for_each(|v| *v += 0.0);
    Ok(FeatureVector { values, flagged })
}
