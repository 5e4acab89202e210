//! Conditional one-second markouts of filled orders, and fill frequency as a
//! function of the forward return.

use serde::{Deserialize, Serialize};

use crate::experiment::{OutcomeDataset, Terminal, TrackedOrder};
use crate::stats::{quantile, spearman};

pub const HIST_LO: f64 = -35.0;
pub const HIST_HI: f64 = 25.0;
pub const HIST_WIDTH: f64 = 0.25;
pub const HIST_BINS: usize = 240;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizeBin {
    Small,
    Medium,
    Large,
}

impl SizeBin {
    pub const ALL: [SizeBin; 3] = [SizeBin::Small, SizeBin::Medium, SizeBin::Large];

    pub fn label(self) -> &'static str {
        match self {
            SizeBin::Small => "small",
            SizeBin::Medium => "medium",
            SizeBin::Large => "large",
        }
    }
}

/// Two breakpoints splitting sizes into small / medium / large.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeCuts {
    pub lo: f64,
    pub hi: f64,
}

impl SizeCuts {
    pub fn terciles(xs: &[f64]) -> Self {
        SizeCuts {
            lo: quantile(xs, 1.0 / 3.0),
            hi: quantile(xs, 2.0 / 3.0),
        }
    }

    pub fn bin(&self, x: f64) -> SizeBin {
        if x <= self.lo {
            SizeBin::Small
        } else if x <= self.hi {
            SizeBin::Medium
        } else {
            SizeBin::Large
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QpBin {
    Front,
    Early,
    Late,
    Back,
}

impl QpBin {
    pub const ALL: [QpBin; 4] = [QpBin::Front, QpBin::Early, QpBin::Late, QpBin::Back];

    pub fn of(qp: f64) -> QpBin {
        if qp < 0.1 {
            QpBin::Front
        } else if qp < 0.4 {
            QpBin::Early
        } else if qp < 0.75 {
            QpBin::Late
        } else {
            QpBin::Back
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            QpBin::Front => "0-0.1",
            QpBin::Early => "0.1-0.4",
            QpBin::Late => "0.4-0.75",
            QpBin::Back => "0.75-1",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkoutCell {
    pub n: u64,
    pub avg_bp: f64,
    pub min_bp: f64,
    pub max_bp: f64,
    pub std_bp: f64,
    /// Counts over [HIST_LO, HIST_HI) in HIST_WIDTH steps; outliers land in the end bins.
    pub histogram: Vec<u64>,
    #[serde(skip)]
    values: Vec<f64>,
}

impl Default for MarkoutCell {
    fn default() -> Self {
        MarkoutCell {
            n: 0,
            avg_bp: f64::NAN,
            min_bp: f64::NAN,
            max_bp: f64::NAN,
            std_bp: f64::NAN,
            histogram: vec![0; HIST_BINS],
            values: Vec::new(),
        }
    }
}

pub fn hist_bin(x: f64) -> usize {
    (((x - HIST_LO) / HIST_WIDTH).floor().max(0.0) as usize).min(HIST_BINS - 1)
}

impl MarkoutCell {
    fn push(&mut self, x: f64) {
        self.values.push(x);
        self.histogram[hist_bin(x)] += 1;
    }

    fn close(&mut self) {
        let v = &self.values;
        self.n = v.len() as u64;
        if v.is_empty() {
            return;
        }
        let n = v.len() as f64;
        self.avg_bp = v.iter().sum::<f64>() / n;
        self.min_bp = v.iter().copied().fold(f64::INFINITY, f64::min);
        self.max_bp = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.std_bp = if v.len() < 2 {
            0.0
        } else {
            (v.iter().map(|x| (x - self.avg_bp).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        // Rounding can push the mean a hair outside a constant sample's range.
        self.avg_bp = self.avg_bp.clamp(self.min_bp, self.max_bp);
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkoutTable {
    pub near_cuts: SizeCuts,
    pub opp_cuts: SizeCuts,
    /// `cells[near][opp][qp]`.
    pub cells: Vec<Vec<Vec<MarkoutCell>>>,
}

impl MarkoutTable {
    pub fn cell(&self, near: SizeBin, opp: SizeBin, qp: QpBin) -> &MarkoutCell {
        &self.cells[near as usize][opp as usize][qp.index()]
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().flatten().map(|c| c.n).sum()
    }
}

/// Near and opposite sizes and queue position of a filled order with a markout.
fn fill_point(o: &TrackedOrder) -> Option<(f64, f64, f64, f64)> {
    match (o.terminal, o.markout_1s) {
        (Terminal::Filled { qp, qnear, qopp, .. }, Some(m)) => Some((qnear.0 as f64, qopp.0 as f64, qp, m)),
        _ => None,
    }
}

/// Buckets filled orders by touch sizes at the fill and queue position.
/// Size breakpoints are terciles taken separately for near and opposite sizes.
pub fn summarize_markouts(ds: &OutcomeDataset) -> MarkoutTable {
    let pts: Vec<_> = ds.orders.iter().filter_map(fill_point).collect();
    let near: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let opp: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let near_cuts = SizeCuts::terciles(&near);
    let opp_cuts = SizeCuts::terciles(&opp);
    let mut cells = vec![vec![vec![MarkoutCell::default(); 4]; 3]; 3];
    for &(n, o, qp, m) in &pts {
        cells[near_cuts.bin(n) as usize][opp_cuts.bin(o) as usize][QpBin::of(qp).index()].push(m);
    }
    cells.iter_mut().flatten().flatten().for_each(MarkoutCell::close);
    MarkoutTable {
        near_cuts,
        opp_cuts,
        cells,
    }
}

pub fn markout_table_csv(t: &MarkoutTable) -> String {
    let mut s = String::from("near,opp,qp,n,avg_bp,min_bp,max_bp,std_bp\n");
    for near in SizeBin::ALL {
        for opp in SizeBin::ALL {
            for qp in QpBin::ALL {
                let c = t.cell(near, opp, qp);
                s.push_str(&format!(
                    "{},{},{},{},{:.3},{:.3},{:.3},{:.3}\n",
                    near.label(),
                    opp.label(),
                    qp.label(),
                    c.n,
                    c.avg_bp,
                    c.min_bp,
                    c.max_bp,
                    c.std_bp
                ));
            }
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub lo_bp: f64,
    pub hi_bp: f64,
    pub n: u64,
    pub fills: u64,
    pub fill_freq: f64,
}

impl CurvePoint {
    pub fn center(&self) -> f64 {
        0.5 * (self.lo_bp + self.hi_bp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FillReturnCurve {
    pub bin_bp: f64,
    pub points: Vec<CurvePoint>,
    /// Mean forward return over filled orders.
    pub filled_mean_ret: f64,
}

impl FillReturnCurve {
    /// Spearman correlation of fill frequency against return, over bins
    /// holding at least `min_n` orders.
    pub fn spearman(&self, min_n: u64) -> f64 {
        let pts: Vec<&CurvePoint> = self.points.iter().filter(|p| p.n >= min_n).collect();
        let x: Vec<f64> = pts.iter().map(|p| p.center()).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.fill_freq).collect();
        spearman(&x, &y)
    }
}

/// Fill frequency per forward-return bin across filled and canceled orders.
pub fn fillprob_vs_forward_return(orders: &[TrackedOrder], return_bin_bp: f64) -> FillReturnCurve {
    let mut bins: std::collections::BTreeMap<i64, (u64, u64)> = Default::default();
    let mut filled = Vec::new();
    for o in orders {
        let Some(r) = o.forward_ret else { continue };
        let e = bins.entry((r / return_bin_bp).floor() as i64).or_default();
        e.0 += 1;
        if o.is_filled() {
            e.1 += 1;
            filled.push(r);
        }
    }
    let points = bins
        .into_iter()
        .map(|(k, (n, f))| CurvePoint {
            lo_bp: k as f64 * return_bin_bp,
            hi_bp: (k + 1) as f64 * return_bin_bp,
            n,
            fills: f,
            fill_freq: f as f64 / n as f64,
        })
        .collect();
    FillReturnCurve {
        bin_bp: return_bin_bp,
        points,
        filled_mean_ret: crate::stats::mean(&filled),
    }
}

pub fn curve_csv(c: &FillReturnCurve) -> String {
    let mut s = String::from("ret_lo_bp,ret_hi_bp,n,fills,fill_freq\n");
    for p in &c.points {
        s.push_str(&format!("{:.3},{:.3},{},{},{:.6}\n", p.lo_bp, p.hi_bp, p.n, p.fills, p.fill_freq));
    }
    s
}
