//! Straight-line L3 replay of an experiment, kept deliberately naive, used as
//! the reference for queue positions at fill.

use std::collections::BTreeMap;

use lobsim::book::Side;
use lobsim::event::{EventBody, MarketEvent};
use lobsim::experiment::{OutcomeDataset, Terminal};

#[derive(Clone, Copy, Debug)]
struct Entry {
    id: u64,
    qty: u64,
    own: bool,
}

#[derive(Default)]
struct NaiveBook {
    bids: BTreeMap<i64, Vec<Entry>>,
    asks: BTreeMap<i64, Vec<Entry>>,
    next_ext: u64,
}

fn external(q: &[Entry]) -> u64 {
    q.iter().filter(|e| !e.own).map(|e| e.qty).sum()
}

impl NaiveBook {
    fn side(&mut self, s: Side) -> &mut BTreeMap<i64, Vec<Entry>> {
        match s {
            Side::Bid => &mut self.bids,
            Side::Ask => &mut self.asks,
        }
    }

    fn external_top(&self, s: Side) -> Option<i64> {
        match s {
            Side::Bid => self.bids.iter().rev().find(|(_, q)| external(q) > 0).map(|(p, _)| *p),
            Side::Ask => self.asks.iter().find(|(_, q)| external(q) > 0).map(|(p, _)| *p),
        }
    }

    fn depth(&mut self, s: Side, price: i64, total: u64) {
        self.next_ext += 1;
        let id = u64::MAX - self.next_ext;
        let q = self.side(s).entry(price).or_default();
        let ext = external(q);
        if total > ext {
            q.push(Entry {
                id,
                qty: total - ext,
                own: false,
            });
        } else {
            let mut rem = ext - total;
            for e in q.iter_mut().rev() {
                if rem == 0 {
                    break;
                }
                if e.own {
                    continue;
                }
                let t = e.qty.min(rem);
                e.qty -= t;
                rem -= t;
            }
            q.retain(|e| e.qty > 0);
        }
        if q.is_empty() {
            self.side(s).remove(&price);
        }
    }

    /// Own orders on `s` that the external contra touch has reached.
    fn sweep_crossed(&mut self, s: Side) -> Vec<u64> {
        let Some(contra) = self.external_top(s.opposite()) else {
            return Vec::new();
        };
        let crossed: Vec<i64> = self
            .side(s)
            .keys()
            .copied()
            .filter(|&p| match s {
                Side::Bid => p >= contra,
                Side::Ask => p <= contra,
            })
            .collect();
        let mut out = Vec::new();
        for p in crossed {
            for e in self.side(s).remove(&p).unwrap() {
                assert!(e.own);
                out.push(e.id);
            }
        }
        out
    }

    fn trade(&mut self, aggressor: Side, price: i64, qty: u64) -> Vec<u64> {
        let contra = aggressor.opposite();
        let mut filled = Vec::new();
        let better: Vec<i64> = self
            .side(contra)
            .keys()
            .copied()
            .filter(|&p| match contra {
                Side::Bid => p > price,
                Side::Ask => p < price,
            })
            .collect();
        for p in better {
            for e in self.side(contra).remove(&p).unwrap() {
                filled.push(e.id);
            }
        }
        let q = self.side(contra).get_mut(&price).expect("traded level exists");
        let ext = external(q);
        let (mut ahead, mut remaining) = (0, qty);
        for e in q.iter_mut() {
            if e.own {
                if ahead < qty || qty >= ext {
                    filled.push(e.id);
                    e.qty = 0;
                }
                continue;
            }
            ahead += e.qty;
            let t = e.qty.min(remaining);
            e.qty -= t;
            remaining -= t;
        }
        q.retain(|e| e.qty > 0);
        if q.is_empty() {
            self.side(contra).remove(&price);
        }
        filled
    }

    fn post(&mut self, s: Side, price: i64, id: u64) {
        self.side(s).entry(price).or_default().push(Entry { id, qty: 1, own: true });
    }

    fn cancel(&mut self, s: Side, price: i64, id: u64) {
        let q = self.side(s).get_mut(&price).expect("level of a live order");
        q.retain(|e| e.id != id);
        if q.is_empty() {
            self.side(s).remove(&price);
        }
    }

    fn la_lb(&mut self, s: Side, price: i64, id: u64) -> (u64, u64) {
        let q = &self.side(s)[&price];
        let pos = q.iter().position(|e| e.id == id).expect("order rests");
        let la = q[..pos].iter().filter(|e| !e.own).map(|e| e.qty).sum();
        let lb = q[pos + 1..].iter().filter(|e| !e.own).map(|e| e.qty).sum();
        (la, lb)
    }
}

#[derive(Debug, Default)]
pub struct OracleReport {
    pub fills_checked: usize,
    pub qp_mismatches: usize,
    /// Fills the oracle and the engine disagree about (event or order).
    pub fill_set_mismatches: usize,
}

/// Replays `events` with the dataset's orders posted and removed at the
/// recorded event indices, and compares each fill's queue position with
/// LA/(LA+LB) read from the naive book just before the filling event.
pub fn check_queue_positions(events: &[MarketEvent], ds: &OutcomeDataset) -> OracleReport {
    let mut posts: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    let mut ends: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (k, o) in ds.orders.iter().enumerate() {
        posts.entry(o.seq0).or_default().push(k);
        let seq = match o.terminal {
            Terminal::Filled { seq, .. } | Terminal::Canceled { seq, .. } => seq,
        };
        ends.entry(seq).or_default().push(k);
    }
    let mut book = NaiveBook::default();
    let mut r = OracleReport::default();
    for (i, ev) in events.iter().enumerate() {
        let i = i as u64;
        for &k in posts.get(&i).into_iter().flatten() {
            let o = &ds.orders[k];
            book.post(o.side, o.limit_price.0, o.id.0);
        }
        let mut expected: Vec<u64> = Vec::new();
        for &k in ends.get(&i).into_iter().flatten() {
            let o = &ds.orders[k];
            if let Terminal::Filled { qp, .. } = o.terminal {
                let (la, lb) = book.la_lb(o.side, o.limit_price.0, o.id.0);
                let oracle = if la + lb == 0 { 0.0 } else { la as f64 / (la + lb) as f64 };
                r.fills_checked += 1;
                if oracle != qp {
                    r.qp_mismatches += 1;
                }
                expected.push(o.id.0);
            }
        }
        let mut got = match &ev.body {
            EventBody::Depth(d) => {
                book.depth(d.side, d.price.0, d.new_total.0);
                book.sweep_crossed(d.side.opposite())
            }
            EventBody::Trade(t) => book.trade(t.aggressor, t.price.0, t.qty.0),
        };
        got.sort_unstable();
        expected.sort_unstable();
        if got != expected {
            r.fill_set_mismatches += 1;
        }
        for &k in ends.get(&i).into_iter().flatten() {
            let o = &ds.orders[k];
            if !o.is_filled() {
                book.cancel(o.side, o.limit_price.0, o.id.0);
            }
        }
    }
    r
}
