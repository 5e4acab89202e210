//! Post-fill price reversal: features, labels and a logistic classifier.
//!
//! A reversal is a filled order whose near-side touch, at the first mid
//! change after the fill, sits on the favorable side of its limit price.

pub mod features;
pub mod logistic;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::experiment::{OutcomeDataset, TrackedOrder};
use crate::fill_prob::{interpolate, FillSurface};

pub use features::{
    extract_features, feature_group, feature_names, FeatureConfig, FeatureGroup, FeatureVector, MarketHistory,
    N_FEATURES,
};
pub use logistic::{
    permutation_importance, predict, train_logistic, two_sample_t, ImportanceMetric, LogisticModel, Standardizer,
    TTestResult, TrainConfig, TrainError,
};

/// 1 iff the order filled and the first post-fill price change favored it.
pub fn label(order: &TrackedOrder) -> u8 {
    u8::from(order.is_filled() && order.reversal_ret.is_some_and(|r| r > 0.0))
}

/// Orders whose interpolated fill probability at submission exceeds
/// `threshold`, in submission order. A threshold of zero keeps everything.
pub fn select_candidates<'a>(ds: &'a OutcomeDataset, surface: &FillSurface, threshold: f64) -> Vec<&'a TrackedOrder> {
    let mut out: Vec<&TrackedOrder> = ds
        .orders
        .iter()
        .filter(|o| {
            threshold <= 0.0 || interpolate(surface, o.qnear0, o.qopp0).is_ok_and(|p| p > threshold)
        })
        .collect();
    out.sort_by_key(|o| (o.t0, o.id));
    out
}

/// First half for training, second half for testing, by submission time.
pub fn chronological_split<T: Copy>(orders: &[T]) -> (Vec<T>, Vec<T>) {
    let mid = orders.len() / 2;
    (orders[..mid].to_vec(), orders[mid..].to_vec())
}

/// Feature rows and labels of the orders that carry features.
pub fn design(orders: &[&TrackedOrder]) -> (Vec<Vec<f64>>, Vec<u8>) {
    orders
        .iter()
        .filter_map(|o| o.features.as_ref().map(|f| (f.values.clone(), label(o))))
        .unzip()
}

/// SHA-256 over the little-endian bytes of every row and label.
pub fn data_hash(x: &[Vec<f64>], y: &[u8]) -> String {
    let mut h = Sha256::new();
    for (row, t) in x.iter().zip(y) {
        for v in row {
            h.update(v.to_le_bytes());
        }
        h.update([*t]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub standardizer: Standardizer,
    pub alpha0: f64,
    /// Coefficients of the kept features, by name.
    pub alphas: Vec<(String, f64)>,
    pub dropped: Vec<String>,
    pub training: TrainConfig,
    pub iterations: usize,
    pub converged: bool,
    pub n_train: usize,
    pub data_hash: String,
}

impl ModelFile {
    pub fn new(
        st: &Standardizer,
        model: &LogisticModel,
        training: &TrainConfig,
        iterations: usize,
        converged: bool,
        x: &[Vec<f64>],
        y: &[u8],
    ) -> Self {
        let names = feature_names();
        ModelFile {
            standardizer: st.clone(),
            alpha0: model.alpha0,
            alphas: st.kept.iter().zip(&model.alphas).map(|(&k, &a)| (names[k].clone(), a)).collect(),
            dropped: st.dropped().into_iter().map(|k| names[k].clone()).collect(),
            training: training.clone(),
            iterations,
            converged,
            n_train: x.len(),
            data_hash: data_hash(x, y),
        }
    }

    pub fn model(&self) -> LogisticModel {
        LogisticModel {
            alpha0: self.alpha0,
            alphas: self.alphas.iter().map(|a| a.1).collect(),
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        predict(&self.model(), &self.standardizer, row)
    }
}

/// Coefficients grouped by feature family, largest magnitude first within a group.
pub fn coefficient_csv(st: &Standardizer, model: &LogisticModel) -> String {
    let names = feature_names();
    let mut s = String::from("group,feature,coef\n");
    for g in FeatureGroup::ALL {
        let mut rows: Vec<(usize, f64)> = st
            .kept
            .iter()
            .zip(&model.alphas)
            .filter(|(&k, _)| feature_group(k) == g)
            .map(|(&k, &a)| (k, a))
            .collect();
        rows.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
        for (k, a) in rows {
            s.push_str(&format!("{},{},{:.6}\n", g.label(), names[k], a));
        }
    }
    s
}
