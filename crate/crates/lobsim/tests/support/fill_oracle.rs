//! Exact fill probability of a shadow order at the touch when the touch only
//! changes through takers: geometric sizes with mean `m`, buy probability
//! (1 + c * imb) / 2, and a taker larger than the touch clearing it.
//!
//! State (b, a): external size at the order's own touch and at the opposite
//! touch. A taker against the own touch fills the order iff its size reaches
//! b; one against the opposite touch that clears it moves the mid in the
//! order's favor, so the order is canceled.

use lobsim::experiment::OutcomeDataset;
use lobsim::fill_prob::{FillSurface, BINS};
use lobsim::stats::{binomial_interval, spearman};

pub struct FillOracle {
    f: Vec<Vec<f64>>,
}

impl FillOracle {
    pub fn new(max_b: usize, max_a: usize, coupling: f64, taker_mean: f64) -> Self {
        let pi = 1.0 / taker_mean;
        let mut f = vec![vec![0.0; max_a + 1]; max_b + 1];
        // h[b][a]: P(fill | a taker hits the own touch in state (b, a))
        // k[b][a]: P(fill | a taker hits the opposite touch in state (b, a))
        let mut h = vec![vec![0.0; max_a + 1]; max_b + 1];
        let mut k = vec![vec![0.0; max_a + 1]; max_b + 1];
        for b in 1..=max_b {
            for a in 1..=max_a {
                h[b][a] = if b == 1 { 1.0 } else { pi * f[b - 1][a] + (1.0 - pi) * h[b - 1][a] };
                k[b][a] = if a == 1 { 0.0 } else { pi * f[b][a - 1] + (1.0 - pi) * k[b][a - 1] };
                let imb = (b as f64 - a as f64) / (b + a) as f64;
                // the own side is hit when the flow trades against it
                let p_own = 0.5 * (1.0 - coupling * imb);
                f[b][a] = p_own * h[b][a] + (1.0 - p_own) * k[b][a];
            }
        }
        FillOracle { f }
    }

    pub fn prob(&self, b: u64, a: u64) -> f64 {
        self.f[b as usize][a as usize]
    }
}

#[derive(Debug)]
pub struct SurfaceCheck {
    pub populated: usize,
    pub within: usize,
    pub spearman_near: f64,
    pub spearman_opp: f64,
}

/// Compares each populated cell's fill count with the 99% binomial interval
/// around the mean oracle probability of the orders in it.
pub fn check_surface(ds: &OutcomeDataset, s: &FillSurface, oracle: &FillOracle) -> SurfaceCheck {
    let mut expected = vec![vec![0.0; BINS]; BINS];
    for o in &ds.orders {
        let (i, j) = s.grid.cell(o.qnear0.0 as f64, o.qopp0.0 as f64);
        expected[i][j] += oracle.prob(o.qnear0.0, o.qopp0.0);
    }
    let (mut populated, mut within) = (0, 0);
    let (mut probs, mut near, mut opp) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..BINS {
        for j in 0..BINS {
            let n = s.grid.counts[i][j];
            if n == 0 {
                continue;
            }
            populated += 1;
            let (lo, hi) = binomial_interval(n, expected[i][j] / n as f64, 0.99);
            let k = s.grid.fills[i][j];
            within += usize::from(lo <= k && k <= hi);
            probs.push(k as f64 / n as f64);
            near.push(i as f64);
            opp.push(j as f64);
        }
    }
    SurfaceCheck {
        populated,
        within,
        spearman_near: spearman(&probs, &near),
        spearman_opp: spearman(&probs, &opp),
    }
}
