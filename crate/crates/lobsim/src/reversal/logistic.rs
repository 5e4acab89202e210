//! Standardized logistic regression trained by monotone gradient ascent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("no training rows")]
    Empty,
    #[error("did not converge: gradient max-norm {grad_norm:.3e} after {iterations} iterations")]
    NonConvergence {
        grad_norm: f64,
        iterations: usize,
        model: Box<LogisticModel>,
    },
}

/// Per-column mean and standard deviation from the training rows. Columns
/// with zero spread are dropped from the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Indices of the columns kept by the model.
    pub kept: Vec<usize>,
}

impl Standardizer {
    /// Population (1/n) moments, so transformed training columns have unit variance.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for k in 0..d {
                var[k] += (r[k] - mean[k]).powi(2);
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
        let kept = (0..d)
            .filter(|&k| std[k] > 1e-12 * mean[k].abs().max(1.0))
            .collect();
        Standardizer { mean, std, kept }
    }

    /// Standardized kept columns of one raw row.
    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        self.kept.iter().map(|&k| (row[k] - self.mean[k]) / self.std[k]).collect()
    }

    pub fn transform_all(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.transform(r)).collect()
    }

    pub fn dropped(&self) -> Vec<usize> {
        (0..self.mean.len()).filter(|k| !self.kept.contains(k)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub alpha0: f64,
    /// One coefficient per standardized input column.
    pub alphas: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticModel {
    pub fn zeros(d: usize) -> Self {
        LogisticModel {
            alpha0: 0.0,
            alphas: vec![0.0; d],
        }
    }

    pub fn linear(&self, x: &[f64]) -> f64 {
        self.alpha0 + self.alphas.iter().zip(x).map(|(a, v)| a * v).sum::<f64>()
    }

    /// P(reversal) for an already standardized row.
    pub fn prob(&self, x: &[f64]) -> f64 {
        sigmoid(self.linear(x))
    }

    fn params(&self) -> Vec<f64> {
        std::iter::once(self.alpha0).chain(self.alphas.iter().copied()).collect()
    }

    fn from_params(p: &[f64]) -> Self {
        LogisticModel {
            alpha0: p[0],
            alphas: p[1..].to_vec(),
        }
    }
}

/// Probability for a raw feature row.
pub fn predict(model: &LogisticModel, st: &Standardizer, row: &[f64]) -> f64 {
    model.prob(&st.transform(row))
}

/// Mean log-likelihood with an optional L2 penalty on the slopes.
pub fn log_likelihood(model: &LogisticModel, x: &[Vec<f64>], y: &[u8], l2: f64) -> f64 {
    let ll: f64 = x
        .iter()
        .zip(y)
        .map(|(row, &t)| {
            let z = model.linear(row);
            if t == 1 {
                -softplus(-z)
            } else {
                -softplus(z)
            }
        })
        .sum();
    ll / x.len() as f64 - 0.5 * l2 * model.alphas.iter().map(|a| a * a).sum::<f64>()
}

/// Gradient of `log_likelihood`, intercept first.
pub fn gradient(model: &LogisticModel, x: &[Vec<f64>], y: &[u8], l2: f64) -> Vec<f64> {
    let d = model.alphas.len();
    let mut g = vec![0.0; d + 1];
    for (row, &t) in x.iter().zip(y) {
        let r = f64::from(t) - model.prob(row);
        g[0] += r;
        for k in 0..d {
            g[k + 1] += r * row[k];
        }
    }
    let n = x.len() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    for k in 0..d {
        g[k + 1] -= l2 * model.alphas[k];
    }
    g
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub initial_step: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l2: 0.0,
            max_iter: 10_000,
            tol: 1e-6,
            initial_step: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: LogisticModel,
    pub iterations: usize,
    /// Log-likelihood after each accepted step, starting from the zero model.
    pub trace: Vec<f64>,
}

/// Gradient ascent on the mean log-likelihood. A step is accepted only if it
/// does not lower the objective; the step grows after an acceptance and is
/// halved after a rejection.
pub fn train_logistic(x: &[Vec<f64>], y: &[u8], cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    if x.is_empty() {
        return Err(TrainError::Empty);
    }
    let pos = y.iter().filter(|&&t| t == 1).count();
    if pos == 0 || pos == y.len() {
        return Err(TrainError::SingleClass);
    }
    let d = x[0].len();
    let mut model = LogisticModel::zeros(d);
    let mut ll = log_likelihood(&model, x, y, cfg.l2);
    let mut trace = vec![ll];
    let mut step = cfg.initial_step;
    let mut grad = gradient(&model, x, y, cfg.l2);
    let max_norm = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut it = 0;
    while it < cfg.max_iter && max_norm(&grad) >= cfg.tol {
        it += 1;
        let p = model.params();
        let cand: Vec<f64> = p.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
        let cm = LogisticModel::from_params(&cand);
        let cll = log_likelihood(&cm, x, y, cfg.l2);
        if cll >= ll {
            model = cm;
            ll = cll;
            trace.push(ll);
            grad = gradient(&model, x, y, cfg.l2);
            step *= 1.5;
        } else {
            step *= 0.5;
            if step < 1e-300 {
                break;
            }
        }
    }
    let g = max_norm(&grad);
    if g >= cfg.tol {
        return Err(TrainError::NonConvergence {
            grad_norm: g,
            iterations: it,
            model: Box::new(model),
        });
    }
    Ok(TrainOutcome {
        model,
        iterations: it,
        trace,
    })
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_stat: f64,
    pub df: f64,
    /// One-sided p-value for mean(a) > mean(b).
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
}

/// Welch's t-test with a one-sided alternative mean(a) > mean(b).
pub fn two_sample_t(a: &[f64], b: &[f64]) -> TTestResult {
    let w = crate::stats::welch(a, b);
    TTestResult {
        t_stat: w.t,
        df: w.df,
        p_value: crate::stats::t_upper_tail(w.t, w.df),
        n_a: w.n_a,
        n_b: w.n_b,
    }
}

/// One-sided p-value of a t statistic under the large-sample normal limit.
pub fn one_sided_normal_p(t: f64) -> f64 {
    crate::stats::normal_upper_tail(t)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImportanceMetric {
    LogLoss,
    Accuracy,
}

fn loss(model: &LogisticModel, x: &[Vec<f64>], y: &[u8], metric: ImportanceMetric) -> f64 {
    match metric {
        ImportanceMetric::LogLoss => -log_likelihood(model, x, y, 0.0),
        ImportanceMetric::Accuracy => {
            let wrong = x
                .iter()
                .zip(y)
                .filter(|(r, &t)| (model.prob(r) >= 0.5) != (t == 1))
                .count();
            wrong as f64 / x.len() as f64
        }
    }
}

/// Mean loss increase from shuffling each standardized column, divided by
/// the largest such increase. Index `k` refers to column `k` of `x`.
pub fn permutation_importance(
    model: &LogisticModel,
    x: &[Vec<f64>],
    y: &[u8],
    metric: ImportanceMetric,
    seed: u64,
    repeats: usize,
) -> Vec<f64> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let d = model.alphas.len();
    let base = loss(model, x, y, metric);
    let mut scores = vec![0.0; d];
    let mut work: Vec<Vec<f64>> = x.to_vec();
    for k in 0..d {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut col: Vec<f64> = x.iter().map(|r| r[k]).collect();
        let mut acc = 0.0;
        for _ in 0..repeats.max(1) {
            col.shuffle(&mut rng);
            for (r, v) in work.iter_mut().zip(&col) {
                r[k] = *v;
            }
            acc += loss(model, &work, y, metric) - base;
        }
        for (r, orig) in work.iter_mut().zip(x) {
            r[k] = orig[k];
        }
        scores[k] = acc / repeats.max(1) as f64;
    }
    let max = scores.iter().copied().fold(0.0f64, f64::max);
    if max > 0.0 {
        scores.iter_mut().for_each(|s| *s /= max);
    }
    scores
}
