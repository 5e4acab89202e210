//! Empirical fill-probability surface over (near, opposite) touch sizes at
//! submission, its planar OLS summary and interpolated queries.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::book::Qty;
use crate::experiment::OutcomeDataset;
use crate::stats::{quantile, t_upper_tail};

pub const BINS: usize = 20;

/// Cells with fewer observations are reported as low confidence.
pub const LOW_COUNT: u64 = 30;

#[derive(Debug, Error, PartialEq)]
pub enum SurfaceError {
    #[error("need at least {need} orders, got {got}")]
    InsufficientData { need: usize, got: usize },
    #[error("need at least {need} defined cells, got {got}")]
    TooFewCells { need: usize, got: usize },
    #[error("design matrix has rank {0} < 4")]
    RankDeficient(usize),
    #[error("no defined cell around the query")]
    Undefined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub edges_near: Vec<f64>,
    pub edges_opp: Vec<f64>,
    pub counts: Vec<Vec<u64>>,
    pub fills: Vec<Vec<u64>>,
}

fn edges(xs: &[f64]) -> Vec<f64> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = quantile(xs, 0.99);
    if hi <= lo {
        hi = lo + BINS as f64;
    }
    let w = (hi - lo) / BINS as f64;
    (0..=BINS).map(|i| lo + w * i as f64).collect()
}

fn bin_of(edges: &[f64], x: f64) -> usize {
    let w = edges[1] - edges[0];
    (((x - edges[0]) / w).floor().max(0.0) as usize).min(BINS - 1)
}

fn center(edges: &[f64], i: usize) -> f64 {
    0.5 * (edges[i] + edges[i + 1])
}

impl BinGrid {
    pub fn empty(edges_near: Vec<f64>, edges_opp: Vec<f64>) -> Self {
        BinGrid {
            edges_near,
            edges_opp,
            counts: vec![vec![0; BINS]; BINS],
            fills: vec![vec![0; BINS]; BINS],
        }
    }

    pub fn cell(&self, qnear: f64, qopp: f64) -> (usize, usize) {
        (bin_of(&self.edges_near, qnear), bin_of(&self.edges_opp, qopp))
    }

    pub fn center_near(&self, i: usize) -> f64 {
        center(&self.edges_near, i)
    }

    pub fn center_opp(&self, j: usize) -> f64 {
        center(&self.edges_opp, j)
    }

    pub fn bin_width_near(&self) -> f64 {
        self.edges_near[1] - self.edges_near[0]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FillSurface {
    pub grid: BinGrid,
    /// `probs[i][j]` for near bin `i`, opposite bin `j`; None where empty.
    pub probs: Vec<Vec<Option<f64>>>,
    /// 99th percentiles of near and opposite sizes, used to normalize the fit.
    pub p99_near: f64,
    pub p99_opp: f64,
}

impl FillSurface {
    pub fn defined_cells(&self) -> usize {
        self.probs.iter().flatten().filter(|p| p.is_some()).count()
    }

    /// Rebuilds `probs` from the grid's counts.
    pub fn refresh(&mut self) {
        for i in 0..BINS {
            for j in 0..BINS {
                let n = self.grid.counts[i][j];
                self.probs[i][j] = (n > 0).then(|| self.grid.fills[i][j] as f64 / n as f64);
            }
        }
    }
}

/// Bins every order by its touch sizes at submission.
pub fn build_surface(ds: &OutcomeDataset) -> Result<FillSurface, SurfaceError> {
    const MIN_ORDERS: usize = 20;
    if ds.orders.len() < MIN_ORDERS {
        return Err(SurfaceError::InsufficientData {
            need: MIN_ORDERS,
            got: ds.orders.len(),
        });
    }
    let near: Vec<f64> = ds.orders.iter().map(|o| o.qnear0.0 as f64).collect();
    let opp: Vec<f64> = ds.orders.iter().map(|o| o.qopp0.0 as f64).collect();
    let mut grid = BinGrid::empty(edges(&near), edges(&opp));
    for o in &ds.orders {
        let (i, j) = grid.cell(o.qnear0.0 as f64, o.qopp0.0 as f64);
        grid.counts[i][j] += 1;
        grid.fills[i][j] += u64::from(o.is_filled());
    }
    let mut s = FillSurface {
        grid,
        probs: vec![vec![None; BINS]; BINS],
        p99_near: quantile(&near, 0.99).max(1.0),
        p99_opp: quantile(&opp, 0.99).max(1.0),
    };
    s.refresh();
    Ok(s)
}

/// Bracketing bin-center indices and weight for the upper one.
fn bracket(edges: &[f64], x: f64) -> (usize, usize, f64) {
    let c0 = center(edges, 0);
    let w = edges[1] - edges[0];
    let pos = (x - c0) / w;
    if pos <= 0.0 {
        return (0, 0, 0.0);
    }
    if pos >= (BINS - 1) as f64 {
        return (BINS - 1, BINS - 1, 0.0);
    }
    let i = pos.floor() as usize;
    (i, i + 1, pos - i as f64)
}

/// Bilinear interpolation between bin centers, renormalized over defined
/// cells and clamped to [0, 1]. Constant beyond the outermost centers.
pub fn interpolate(s: &FillSurface, qnear: Qty, qopp: Qty) -> Result<f64, SurfaceError> {
    interpolate_f(s, qnear.0 as f64, qopp.0 as f64)
}

pub fn interpolate_f(s: &FillSurface, qnear: f64, qopp: f64) -> Result<f64, SurfaceError> {
    let (i0, i1, u) = bracket(&s.grid.edges_near, qnear);
    let (j0, j1, v) = bracket(&s.grid.edges_opp, qopp);
    let corners = [
        (i0, j0, (1.0 - u) * (1.0 - v)),
        (i1, j0, u * (1.0 - v)),
        (i0, j1, (1.0 - u) * v),
        (i1, j1, u * v),
    ];
    let (mut acc, mut wsum) = (0.0, 0.0);
    for (i, j, w) in corners {
        if let Some(p) = s.probs[i][j] {
            if w > 0.0 {
                acc += w * p;
                wsum += w;
            }
        }
    }
    if wsum == 0.0 {
        return Err(SurfaceError::Undefined);
    }
    Ok((acc / wsum).clamp(0.0, 1.0))
}

/// Fill probability of a fresh order facing `la_t` ahead and `qopp_t`
/// opposite. Bounds the resting order's probability from above.
pub fn intermediate_upper_bound(s: &FillSurface, la_t: Qty, qopp_t: Qty) -> Result<f64, SurfaceError> {
    interpolate(s, la_t, qopp_t)
}

/// A `q`-unit order fills completely iff a minimum-size order placed
/// behind it would fill.
pub fn larger_order_fill_prob(s: &FillSurface, la0: Qty, qopp0: Qty, q: Qty) -> Result<f64, SurfaceError> {
    interpolate(s, Qty(la0.0 + q.0), qopp0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    /// Intercept, near size, opposite size, imbalance.
    pub beta: [f64; 4],
    pub r2: f64,
    /// True when the response had zero variance and `r2` was set to 0.
    pub r2_degenerate: bool,
    pub pvalues: [f64; 4],
    pub std_errors: [f64; 4],
    pub p99_near: f64,
    pub p99_opp: f64,
    pub n_cells: usize,
    pub low_count_cells: usize,
}

impl OlsFit {
    pub fn predict(&self, qn: f64, qo: f64) -> f64 {
        let b = &self.beta;
        b[0] + b[1] * qn + b[2] * qo + b[3] * imb_regressor(qn, qo)
    }
}

/// Imbalance of normalized sizes; 0 when both are zero.
pub fn imb_regressor(qn: f64, qo: f64) -> f64 {
    if qn + qo == 0.0 {
        0.0
    } else {
        (qn - qo) / (qn + qo)
    }
}

/// Least squares of z on (1, qn, qo, imb) over (qn, qo, z) points.
pub fn fit_ols_points(points: &[(f64, f64, f64)]) -> Result<OlsFit, SurfaceError> {
    const MIN_CELLS: usize = 5;
    let n = points.len();
    if n < MIN_CELLS {
        return Err(SurfaceError::TooFewCells { need: MIN_CELLS, got: n });
    }
    let x = DMatrix::from_fn(n, 4, |r, c| {
        let (qn, qo, _) = points[r];
        match c {
            0 => 1.0,
            1 => qn,
            2 => qo,
            _ => imb_regressor(qn, qo),
        }
    });
    let y = DVector::from_iterator(n, points.iter().map(|p| p.2));
    let svd = x.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > smax * 1e-12 * n as f64)
        .count();
    if rank < 4 {
        return Err(SurfaceError::RankDeficient(rank));
    }
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * &y;
    let beta = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or(SurfaceError::RankDeficient(rank))?;
    let resid = &y - &x * &beta;
    let rss = resid.norm_squared();
    let ybar = y.mean();
    let tss: f64 = y.iter().map(|v| (v - ybar) * (v - ybar)).sum();
    let constant = y.iter().all(|&v| v == y[0]);
    let (r2, r2_degenerate) = if constant || tss == 0.0 {
        (0.0, true)
    } else {
        ((1.0 - rss / tss).clamp(0.0, 1.0), false)
    };
    let df = (n - 4) as f64;
    let xtx_inv = (x.transpose() * &x).try_inverse().ok_or(SurfaceError::RankDeficient(rank))?;
    let sigma2 = rss / df;
    let mut pvalues = [f64::NAN; 4];
    let mut std_errors = [f64::NAN; 4];
    for k in 0..4 {
        let se = (sigma2 * xtx_inv[(k, k)]).sqrt();
        std_errors[k] = se;
        pvalues[k] = if se == 0.0 {
            if beta[k] == 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            (2.0 * t_upper_tail((beta[k] / se).abs(), df)).min(1.0)
        };
    }
    Ok(OlsFit {
        beta: [beta[0], beta[1], beta[2], beta[3]],
        r2,
        r2_degenerate,
        pvalues,
        std_errors,
        p99_near: 1.0,
        p99_opp: 1.0,
        n_cells: n,
        low_count_cells: 0,
    })
}

/// Unweighted fit over defined cells, sizes at bin centers divided by
/// their 99th percentiles.
pub fn fit_ols(s: &FillSurface) -> Result<OlsFit, SurfaceError> {
    let mut points = Vec::new();
    let mut low = 0;
    for i in 0..BINS {
        for j in 0..BINS {
            if let Some(p) = s.probs[i][j] {
                points.push((s.grid.center_near(i) / s.p99_near, s.grid.center_opp(j) / s.p99_opp, p));
                low += usize::from(s.grid.counts[i][j] < LOW_COUNT);
            }
        }
    }
    let mut fit = fit_ols_points(&points)?;
    fit.p99_near = s.p99_near;
    fit.p99_opp = s.p99_opp;
    fit.low_count_cells = low;
    Ok(fit)
}

/// Cell matrix as CSV: one row per populated cell.
pub fn surface_csv(s: &FillSurface) -> String {
    let mut out = String::from("near_bin,opp_bin,near_lo,near_hi,opp_lo,opp_hi,count,fills,prob,low_count\n");
    for i in 0..BINS {
        for j in 0..BINS {
            let n = s.grid.counts[i][j];
            if n == 0 {
                continue;
            }
            out.push_str(&format!(
                "{i},{j},{:.4},{:.4},{:.4},{:.4},{n},{},{:.6},{}\n",
                s.grid.edges_near[i],
                s.grid.edges_near[i + 1],
                s.grid.edges_opp[j],
                s.grid.edges_opp[j + 1],
                s.grid.fills[i][j],
                s.probs[i][j].unwrap_or(f64::NAN),
                n < LOW_COUNT
            ));
        }
    }
    out
}

/// Fixed-width summary line in the layout used for reports.
pub fn format_fit(f: &OlsFit) -> String {
    format!(
        "b0 = {:.4}, b1 = {:.4}, b2 = {:.4}, b3 = {:.4}; R2 = {:.3}; p = [{:.3}, {:.3}, {:.3}, {:.3}]",
        f.beta[0], f.beta[1], f.beta[2], f.beta[3], f.r2, f.pvalues[0], f.pvalues[1], f.pvalues[2], f.pvalues[3]
    )
}
