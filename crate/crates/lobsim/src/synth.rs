//! Zero-intelligence order flow with an imbalance-coupled taker direction.
//!
//! The generator keeps a true L3 book of `depth_levels` contiguous price
//! levels per side with a one-tick spread. Three Poisson processes act on it:
//!
//! * takers, whose size is geometric on {1, 2, ...} and who trade only at the
//!   touch (a taker larger than the touch clears it and stops);
//! * maker posts, appended at the back of the touch or of a deeper level;
//! * cancels of whole orders at a constant per-order hazard, which never
//!   remove the last order of a level.
//!
//! A taker buys with probability `(1 + coupling * imb) / 2`. When the touch
//! is cleared the spread is restored at once by a new level on the
//! aggressor's side at the cleared price, so every price move is one tick.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1, Geometric};
use thiserror::Error;

use crate::book::{Price, Qty, Side};
use crate::data::StreamHeader;
use crate::event::{DepthEvent, EventBody, MakerFill, MarketEvent, TradeEvent, Ts};

/// Identifier written to stream headers for the generator's random source.
pub const RNG_ID: &str = "chacha12/seed_from_u64";

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic flow config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthFlowConfig {
    pub seed: u64,
    pub duration_s: f64,
    /// Taker arrivals per second per side.
    pub taker_rate: f64,
    /// Mean of the geometric taker size, in units (>= 1).
    pub taker_size_mean: f64,
    /// Maker posts per second per side.
    pub maker_post_rate: f64,
    pub maker_size_mean: f64,
    /// Share of maker posts that join the touch.
    pub touch_post_share: f64,
    /// Cancel hazard per resting order, per second.
    pub cancel_rate: f64,
    pub imbalance_coupling: f64,
    pub depth_levels: usize,
    /// Mean size of a new deep level.
    pub level_size_mean: f64,
    /// Mean size of the level formed at a just-cleared price.
    pub refill_size_mean: f64,
    pub initial_price: i64,
    pub start_ts: Ts,
    pub tick_usd: f64,
    pub unit_usd: f64,
}

impl Default for SynthFlowConfig {
    fn default() -> Self {
        SynthFlowConfig {
            seed: 1,
            duration_s: 60.0,
            taker_rate: 2.0,
            taker_size_mean: 4.0,
            maker_post_rate: 3.0,
            maker_size_mean: 3.0,
            touch_post_share: 0.5,
            cancel_rate: 1.5,
            imbalance_coupling: 0.8,
            depth_levels: 10,
            level_size_mean: 12.0,
            refill_size_mean: 12.0,
            initial_price: 10_000,
            start_ts: 1_700_000_000_000_000,
            tick_usd: 0.1,
            unit_usd: 100.0,
        }
    }
}

impl SynthFlowConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Invalid(m.into()));
        let rates = [self.taker_rate, self.maker_post_rate, self.cancel_rate];
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return bad("rates must be finite and non-negative");
        }
        if rates.iter().sum::<f64>() <= 0.0 {
            return bad("at least one rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.imbalance_coupling) {
            return bad("imbalance_coupling must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.touch_post_share) {
            return bad("touch_post_share must lie in [0, 1]");
        }
        for (name, m) in [
            ("taker_size_mean", self.taker_size_mean),
            ("maker_size_mean", self.maker_size_mean),
            ("level_size_mean", self.level_size_mean),
            ("refill_size_mean", self.refill_size_mean),
        ] {
            if !(m >= 1.0 && m.is_finite()) {
                return Err(SynthError::Invalid(format!("{name} must be >= 1")));
            }
        }
        if self.depth_levels < 2 {
            return bad("depth_levels must be >= 2");
        }
        if self.initial_price <= 10 * self.depth_levels as i64 {
            return bad("initial_price too close to zero for the book depth");
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return bad("duration_s must be non-negative");
        }
        if !(self.tick_usd > 0.0 && self.unit_usd > 0.0) {
            return bad("tick_usd and unit_usd must be positive");
        }
        Ok(())
    }

    pub fn header(&self) -> StreamHeader {
        StreamHeader {
            v: 1,
            tick_usd: self.tick_usd,
            unit_usd: self.unit_usd,
            rng: RNG_ID.into(),
            seed: Some(self.seed),
        }
    }
}

struct Level {
    price: i64,
    orders: VecDeque<(u64, u64)>,
    total: u64,
}

/// Streaming generator; yields events in timestamp order.
pub struct SynthFlow {
    cfg: SynthFlowConfig,
    rng: ChaCha12Rng,
    taker_size: Geometric,
    maker_size: Geometric,
    level_size: Geometric,
    refill_size: Geometric,
    bids: VecDeque<Level>,
    asks: VecDeque<Level>,
    t: f64,
    end_ts: Ts,
    last_ts: Ts,
    next_id: u64,
    pending: VecDeque<MarketEvent>,
    started: bool,
}

fn geometric(mean: f64) -> Geometric {
    Geometric::new(1.0 / mean).expect("mean validated >= 1")
}

impl SynthFlow {
    pub fn new(cfg: SynthFlowConfig) -> Result<Self, SynthError> {
        cfg.validate()?;
        let end_ts = cfg.start_ts + crate::event::secs(cfg.duration_s);
        Ok(SynthFlow {
            rng: ChaCha12Rng::seed_from_u64(cfg.seed),
            taker_size: geometric(cfg.taker_size_mean),
            maker_size: geometric(cfg.maker_size_mean),
            level_size: geometric(cfg.level_size_mean),
            refill_size: geometric(cfg.refill_size_mean),
            bids: VecDeque::new(),
            asks: VecDeque::new(),
            t: 0.0,
            end_ts,
            last_ts: cfg.start_ts,
            next_id: 1,
            pending: VecDeque::new(),
            started: false,
            cfg,
        })
    }

    pub fn config(&self) -> &SynthFlowConfig {
        &self.cfg
    }

    fn draw(&mut self, which: u8) -> u64 {
        let d = match which {
            0 => &self.taker_size,
            1 => &self.maker_size,
            2 => &self.level_size,
            _ => &self.refill_size,
        };
        d.sample(&mut self.rng) + 1
    }

    fn new_level(&mut self, price: i64, size: u64) -> Level {
        let id = self.next_id;
        self.next_id += 1;
        Level {
            price,
            orders: VecDeque::from([(id, size)]),
            total: size,
        }
    }

    fn depth(&mut self, ts: Ts, side: Side, price: i64, total: u64) {
        self.pending.push_back(MarketEvent {
            ts,
            body: EventBody::Depth(DepthEvent {
                side,
                price: Price(price),
                new_total: Qty(total),
            }),
        });
    }

    fn side_mut(&mut self, side: Side) -> &mut VecDeque<Level> {
        match side {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    fn bootstrap(&mut self) {
        let ts = self.cfg.start_ts;
        let p0 = self.cfg.initial_price;
        for k in 0..self.cfg.depth_levels as i64 {
            let size = self.draw(2);
            let l = self.new_level(p0 - 1 - k, size);
            self.bids.push_back(l);
            let size = self.draw(2);
            let l = self.new_level(p0 + k, size);
            self.asks.push_back(l);
        }
        for k in 0..self.cfg.depth_levels {
            let (p, q) = (self.bids[k].price, self.bids[k].total);
            self.depth(ts, Side::Bid, p, q);
            let (p, q) = (self.asks[k].price, self.asks[k].total);
            self.depth(ts, Side::Ask, p, q);
        }
    }

    fn imbalance(&self) -> f64 {
        let (b, a) = (self.bids[0].total as f64, self.asks[0].total as f64);
        (b - a) / (b + a)
    }

    fn taker(&mut self, ts: Ts) {
        let p_buy = 0.5 * (1.0 + self.cfg.imbalance_coupling * self.imbalance());
        let aggressor = if self.rng.gen::<f64>() < p_buy {
            Side::Bid
        } else {
            Side::Ask
        };
        let contra = aggressor.opposite();
        let size = self.draw(0);
        let level = &mut self.side_mut(contra)[0];
        let price = level.price;
        let qty = size.min(level.total);
        let mut left = qty;
        let mut fills = Vec::new();
        while left > 0 {
            let front = level.orders.front_mut().expect("level total covers qty");
            let take = front.1.min(left);
            fills.push(MakerFill {
                maker_id: front.0,
                qty: Qty(take),
            });
            front.1 -= take;
            left -= take;
            if front.1 == 0 {
                level.orders.pop_front();
            }
        }
        level.total -= qty;
        let remaining = level.total;
        self.pending.push_back(MarketEvent {
            ts,
            body: EventBody::Trade(TradeEvent {
                aggressor,
                price: Price(price),
                qty: Qty(qty),
                fills,
            }),
        });
        self.depth(ts, contra, price, remaining);
        if remaining == 0 {
            self.shift(ts, aggressor, price);
        }
    }

    /// Restores a one-tick spread after the `aggressor`'s contra touch at
    /// `cleared` emptied, then trims/extends both sides back to full depth.
    fn shift(&mut self, ts: Ts, aggressor: Side, cleared: i64) {
        let contra = aggressor.opposite();
        self.side_mut(contra).pop_front();
        let size = self.draw(3);
        let l = self.new_level(cleared, size);
        self.side_mut(aggressor).push_front(l);
        self.depth(ts, aggressor, cleared, size);
        let n = self.cfg.depth_levels;
        if self.side_mut(aggressor).len() > n {
            let gone = self.side_mut(aggressor).pop_back().expect("non-empty");
            self.depth(ts, aggressor, gone.price, 0);
        }
        while self.side_mut(contra).len() < n {
            let last = self.side_mut(contra).back().expect("non-empty").price;
            let price = last - contra.sign();
            let size = self.draw(2);
            let l = self.new_level(price, size);
            self.side_mut(contra).push_back(l);
            self.depth(ts, contra, price, size);
        }
    }

    fn post(&mut self, ts: Ts) {
        let side = if self.rng.gen::<bool>() {
            Side::Bid
        } else {
            Side::Ask
        };
        let idx = if self.rng.gen::<f64>() < self.cfg.touch_post_share {
            0
        } else {
            self.rng.gen_range(1..self.cfg.depth_levels)
        };
        let size = self.draw(1);
        let id = self.next_id;
        self.next_id += 1;
        let level = &mut self.side_mut(side)[idx];
        level.orders.push_back((id, size));
        level.total += size;
        let (p, q) = (level.price, level.total);
        self.depth(ts, side, p, q);
    }

    /// Orders that may be canceled: all but one per level.
    fn cancelable(&self) -> u64 {
        self.bids
            .iter()
            .chain(self.asks.iter())
            .map(|l| l.orders.len().saturating_sub(1) as u64)
            .sum()
    }

    fn cancel(&mut self, ts: Ts, mut k: u64) {
        for side in [Side::Bid, Side::Ask] {
            for idx in 0..self.cfg.depth_levels {
                let n = self.side_mut(side)[idx].orders.len() as u64;
                let slots = n.saturating_sub(1);
                if k >= slots {
                    k -= slots;
                    continue;
                }
                let pick = self.rng.gen_range(0..n) as usize;
                let level = &mut self.side_mut(side)[idx];
                let (_, q) = level.orders.remove(pick).expect("index in range");
                level.total -= q;
                let (p, t) = (level.price, level.total);
                self.depth(ts, side, p, t);
                return;
            }
        }
    }

    fn step(&mut self) -> bool {
        let cancelable = self.cancelable();
        let rates = [
            2.0 * self.cfg.taker_rate,
            2.0 * self.cfg.maker_post_rate,
            self.cfg.cancel_rate * cancelable as f64,
        ];
        let total: f64 = rates.iter().sum();
        if total <= 0.0 {
            return false;
        }
        let e: f64 = Exp1.sample(&mut self.rng);
        self.t += e / total;
        let ts = (self.cfg.start_ts + crate::event::secs(self.t)).max(self.last_ts);
        if ts > self.end_ts {
            return false;
        }
        self.last_ts = ts;
        let u = self.rng.gen::<f64>() * total;
        if u < rates[0] {
            self.taker(ts);
        } else if u < rates[0] + rates[1] {
            self.post(ts);
        } else {
            let k = self.rng.gen_range(0..cancelable);
            self.cancel(ts, k);
        }
        true
    }
}

impl Iterator for SynthFlow {
    type Item = MarketEvent;

    fn next(&mut self) -> Option<MarketEvent> {
        if !self.started {
            self.started = true;
            self.bootstrap();
        }
        loop {
            if let Some(ev) = self.pending.pop_front() {
                return Some(ev);
            }
            if !self.step() {
                return None;
            }
        }
    }
}

/// Generates the full stream for `cfg`.
pub fn generate_synth_flow(cfg: &SynthFlowConfig) -> Result<Vec<MarketEvent>, SynthError> {
    Ok(SynthFlow::new(cfg.clone())?.collect())
}
