//! `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are dotted by
//! component (`synth.taker_rate`, `fees.maker_bp`, ...). Unknown keys are
//! rejected so a typo never silently falls back to a default.

use std::path::{Path, PathBuf};

use lobsim::experiment::QuotingMode;
use lobsim::reversal::FeatureConfig;
use lobsim::strategy::FeeSchedule;
use lobsim::synth::SynthFlowConfig;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: bad value for `{key}`: {msg}")]
    Value { line: usize, key: String, msg: String },
    #[error("`{key}` refers to missing path {path}")]
    MissingPath { key: String, path: PathBuf },
}

/// Component tags for deriving per-component seeds from the master seed.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Component {
    Synth = 1,
    Importance = 2,
}

/// Seed for one component: the first word of ChaCha12 seeded with the
/// master seed, on the stream numbered by the component tag.
pub fn component_seed(master: u64, c: Component) -> u64 {
    let mut rng = ChaCha12Rng::seed_from_u64(master);
    rng.set_stream(c as u64);
    rng.next_u64()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// External event log to use instead of the synthetic one.
    pub input: Option<PathBuf>,
    pub synth: SynthFlowConfig,
    pub mode: QuotingMode,
    pub features: bool,
    pub fees: FeeSchedule,
    pub candidate_threshold: f64,
    pub return_bin_bp: f64,
    pub imb_post_thr: f64,
    pub imb_cancel_thr: f64,
    pub taker_thr: f64,
    pub l2: f64,
    pub max_iter: usize,
    pub importance_repeats: usize,
    pub thresholds: Vec<f64>,
    pub notional_usd: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            input: None,
            synth: SynthFlowConfig::default(),
            mode: QuotingMode::Continuous,
            features: true,
            fees: FeeSchedule::default(),
            candidate_threshold: 0.8,
            return_bin_bp: 1.0,
            imb_post_thr: 0.5,
            imb_cancel_thr: 0.0,
            taker_thr: 0.5,
            l2: 0.0,
            max_iter: 10_000,
            importance_repeats: 5,
            thresholds: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            notional_usd: 500_000.0,
        }
    }
}

impl RunConfig {
    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            notional_usd: self.notional_usd,
            unit_usd: self.synth.unit_usd,
            ..FeatureConfig::default()
        }
    }

    /// Synthetic flow settings with the derived generator seed.
    pub fn synth_config(&self) -> SynthFlowConfig {
        SynthFlowConfig {
            seed: component_seed(self.seed, Component::Synth),
            ..self.synth.clone()
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|_| ConfigError::MissingPath {
            key: "--config".into(),
            path: path.to_path_buf(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        let mut interval: Option<f64> = None;
        let mut mode = "continuous".to_string();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let (k, v) = s.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (k, v) = (k.trim(), v.trim());
            let bad = |msg: String| ConfigError::Value {
                line,
                key: k.to_string(),
                msg,
            };
            let f = || v.parse::<f64>().map_err(|e| bad(e.to_string()));
            let u = || v.parse::<u64>().map_err(|e| bad(e.to_string()));
            let b = || v.parse::<bool>().map_err(|e| bad(e.to_string()));
            let sy = &mut c.synth;
            match k {
                "seed" => c.seed = u()?,
                "input" => {
                    let p = base.join(v);
                    if !p.exists() {
                        return Err(ConfigError::MissingPath { key: k.into(), path: p });
                    }
                    c.input = Some(p);
                }
                "synth.duration_s" => sy.duration_s = f()?,
                "synth.taker_rate" => sy.taker_rate = f()?,
                "synth.taker_size_mean" => sy.taker_size_mean = f()?,
                "synth.maker_post_rate" => sy.maker_post_rate = f()?,
                "synth.maker_size_mean" => sy.maker_size_mean = f()?,
                "synth.touch_post_share" => sy.touch_post_share = f()?,
                "synth.cancel_rate" => sy.cancel_rate = f()?,
                "synth.imbalance_coupling" => sy.imbalance_coupling = f()?,
                "synth.depth_levels" => sy.depth_levels = u()? as usize,
                "synth.level_size_mean" => sy.level_size_mean = f()?,
                "synth.refill_size_mean" => sy.refill_size_mean = f()?,
                "synth.initial_price" => sy.initial_price = u()? as i64,
                "synth.start_ts" => sy.start_ts = u()? as i64,
                "synth.tick_usd" => sy.tick_usd = f()?,
                "synth.unit_usd" => sy.unit_usd = f()?,
                "experiment.mode" => mode = v.to_string(),
                "experiment.interval_s" => interval = Some(f()?),
                "experiment.features" => c.features = b()?,
                "fees.maker_bp" => c.fees.maker_bp = f()?,
                "fees.taker_bp" => c.fees.taker_bp = f()?,
                "surface.candidate_threshold" => c.candidate_threshold = f()?,
                "markouts.return_bin_bp" => c.return_bin_bp = f()?,
                "strategy.imb_post_thr" => c.imb_post_thr = f()?,
                "strategy.imb_cancel_thr" => c.imb_cancel_thr = f()?,
                "strategy.taker_thr" => c.taker_thr = f()?,
                "features.notional_usd" => c.notional_usd = f()?,
                "train.l2" => c.l2 = f()?,
                "train.max_iter" => c.max_iter = u()? as usize,
                "train.importance_repeats" => c.importance_repeats = u()? as usize,
                "sweep.thresholds" => {
                    c.thresholds = v
                        .split(',')
                        .map(|t| t.trim().parse::<f64>().map_err(|e| bad(e.to_string())))
                        .collect::<Result<_, _>>()?
                }
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: k.to_string(),
                    })
                }
            }
        }
        c.mode = match (mode.as_str(), interval) {
            ("continuous", _) => QuotingMode::Continuous,
            ("periodic", i) => QuotingMode::Periodic {
                interval_s: i.unwrap_or(10.0),
            },
            (other, _) => {
                return Err(ConfigError::Value {
                    line: 0,
                    key: "experiment.mode".into(),
                    msg: format!("expected continuous or periodic, got {other}"),
                })
            }
        };
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::parse("seed = 3\nsynth.takerrate = 2\n", Path::new(".")).unwrap_err();
        assert_eq!(
            e,
            ConfigError::UnknownKey {
                line: 2,
                key: "synth.takerrate".into()
            }
        );
        assert!(e.to_string().contains("synth.takerrate"));
    }

    #[test]
    fn parses_values_and_comments() {
        let c = RunConfig::parse(
            "# fixture\nseed = 9\nexperiment.mode = periodic\nexperiment.interval_s = 5\nsweep.thresholds = 0.1, 0.2\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.mode, QuotingMode::Periodic { interval_s: 5.0 });
        assert_eq!(c.thresholds, vec![0.1, 0.2]);
    }

    #[test]
    fn missing_input_path_rejected() {
        let e = RunConfig::parse("input = no/such/file.jsonl\n", Path::new("/nonexistent")).unwrap_err();
        assert!(matches!(e, ConfigError::MissingPath { .. }));
    }

    #[test]
    fn component_seeds_differ_and_are_stable() {
        let a = component_seed(7, Component::Synth);
        let b = component_seed(7, Component::Importance);
        assert_ne!(a, b);
        assert_eq!(a, component_seed(7, Component::Synth));
    }
}
