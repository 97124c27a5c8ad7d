//! Readouts over the current state concatenated with a delayed copy of it
//! ("virtual nodes"): `y_out = W_out · (x_{n+1}, x_{n+1+τ_T})`.
//!
//! The delay touches only the readout; the network evolves exactly as the
//! plain reservoir does.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::embedding::{delay_embed, EmbeddingSpec};
use crate::reservoir::{
    drive_batch_keep, map_networks, predict_closed_loop_with_history, prepare_sequences, run_trial, summarize,
    BenchmarkConfig, FeatureSpec, Prediction, ReadoutModel, Reservoir, ReservoirParams, RunOutcome, StateMatrix,
};
use crate::signals::TimeSeries;
use crate::stats::{mean, sample_std_dev};
use crate::takens::{cca_profile, interstate_distances, bounds_from_distances, EpsilonBounds, EpsilonMode, DEFAULT_MAX_LAG};
use crate::{Error, Result};

/// A network plus the readout delay.
#[derive(Debug, Clone)]
pub struct TrrnnSpec {
    /// Readout delay in steps; negative reaches into the past, 0 duplicates the state.
    pub tau_t: i64,
    pub base: Reservoir,
}

impl TrrnnSpec {
    pub fn new(base: Reservoir, tau_t: i64) -> Result<Self> {
        if tau_t > 0 {
            return Err(Error::Parameter(format!("tau_T must be ≤ 0, got {tau_t}")));
        }
        Ok(Self { tau_t, base })
    }

    pub fn depth(&self) -> usize {
        self.tau_t.unsigned_abs() as usize
    }

    pub fn feature_spec(&self) -> FeatureSpec {
        FeatureSpec::Delayed { tau_t: self.tau_t }
    }
}

/// Training features `(x_k, x_{k+τ_T})`, one row per retained input index `k`.
#[derive(Debug, Clone)]
pub struct AugmentedStateMatrix {
    features: Mat<f64>,
    states: StateMatrix,
    depth: usize,
    washout: usize,
}

impl AugmentedStateMatrix {
    pub fn as_mat(&self) -> faer::MatRef<'_, f64> {
        self.features.as_ref()
    }

    pub fn rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn cols(&self) -> usize {
        self.features.ncols()
    }

    /// Ring-buffer depth `|τ_T|`.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Input index of row 0.
    pub fn first_index(&self) -> usize {
        self.washout
    }

    /// Underlying plain states, starting `depth` steps before row 0.
    pub fn states(&self) -> &StateMatrix {
        &self.states
    }

    /// The `max(1, |τ_T|)` most recent states, oldest first, as the closed loop expects.
    pub fn history(&self) -> Vec<Vec<f64>> {
        let rows = self.states.rows();
        (rows - self.depth.max(1)..rows).map(|r| self.states.row(r)).collect()
    }
}

/// Teacher-forces the network and pairs every retained state with the one
/// `|τ_T|` steps earlier. The washout must cover the delay.
pub fn drive_augmented(spec: &TrrnnSpec, input: &[f64], washout: usize) -> Result<AugmentedStateMatrix> {
    let depth = spec.depth();
    if washout < depth {
        return Err(Error::Parameter(format!("washout {washout} must be at least |tau_T| = {depth}")));
    }
    if input.len() < washout + 1 {
        return Err(Error::Parameter(format!(
            "input of length {} is shorter than washout + 1 = {}",
            input.len(),
            washout + 1
        )));
    }
    let states = drive_batch_keep(&spec.base, &[input], None, washout - depth, washout)?.pop().expect("one sequence");
    let features = spec.feature_spec().feature_matrix(&states, washout)?;
    Ok(AugmentedStateMatrix { features, states, depth, washout })
}

/// Free run for a delayed readout; `history` holds the most recent
/// teacher-forced states, oldest first.
pub fn trrnn_predict_closed_loop(
    spec: &TrrnnSpec,
    model: &ReadoutModel,
    history: &[Vec<f64>],
    y_start: f64,
    horizon: usize,
) -> Result<Prediction> {
    if model.feature_spec != spec.feature_spec() {
        return Err(Error::Parameter("readout was trained for a different delay".into()));
    }
    predict_closed_loop_with_history(&spec.base, model, history, y_start, horizon, |_, _, _| {})
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DelayScanConfig {
    pub bench: BenchmarkConfig,
    pub taus: Vec<i64>,
    pub embedding: EmbeddingSpec,
    pub max_lag: usize,
    pub eps_mode: EpsilonMode,
}

impl Default for DelayScanConfig {
    fn default() -> Self {
        Self {
            bench: BenchmarkConfig {
                reservoir: ReservoirParams { m: 350, mu: 0.1, ..ReservoirParams::default() },
                ..BenchmarkConfig::default()
            },
            taus: (-20..=0).collect(),
            embedding: EmbeddingSpec { tau0: -12, m: 4 },
            max_lag: DEFAULT_MAX_LAG,
            eps_mode: EpsilonMode::MeanDistance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayScanRow {
    pub tau_t: i64,
    pub mean_nmse: f64,
    pub std_nmse: f64,
    pub divergence_pct: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps1_std: f64,
    pub eps2_std: f64,
    pub h: f64,
    pub l_min: i64,
    pub l_max: i64,
}

/// Prediction quality and distortion bounds of the augmented readout for each delay.
pub fn delay_scan(cfg: &DelayScanConfig) -> Result<Vec<DelayScanRow>> {
    let b = &cfg.bench;
    if let Some(&bad) = cfg.taus.iter().find(|&&t| t > 0) {
        return Err(Error::Parameter(format!("tau_T must be ≤ 0, got {bad}")));
    }
    cfg.embedding.validate()?;
    let max_depth = cfg.taus.iter().map(|t| t.unsigned_abs() as usize).max().unwrap_or(0);
    let sequences = prepare_sequences(b)?;
    let embeds = sequences
        .iter()
        .map(|s| delay_embed(&TimeSeries::new(s.input[..b.train_len].to_vec(), 1.0)?, cfg.embedding))
        .collect::<Result<Vec<_>>>()?;
    let per_net = map_networks(b, &sequences, max_depth, |i, res, driven| {
        let mut out = Vec::with_capacity(driven.len());
        for d in driven {
            let input = &d.sequence.input[b.washout..b.train_len];
            let mut per_tau = Vec::with_capacity(cfg.taus.len());
            for &tau in &cfg.taus {
                let spec = FeatureSpec::Delayed { tau_t: tau };
                let outcome = run_trial(res, d, &spec, b)?;
                let feats = spec.feature_matrix(&d.states, b.washout)?;
                let profile = cca_profile(feats.as_ref(), input, cfg.max_lag)?;
                let nodes = profile.lagged_nodes();
                let eps = if nodes.is_empty() {
                    None
                } else {
                    interstate_distances(&embeds[d.sequence.id], feats.as_ref(), b.washout, &nodes)
                        .and_then(|dist| bounds_from_distances(&dist, cfg.eps_mode))
                        .ok()
                };
                per_tau.push((outcome, eps, profile.l_min, profile.l_max));
            }
            log::info!("delay scan: network {i}, sequence {} done", d.sequence.id);
            out.push(per_tau);
        }
        Ok(out)
    })?;
    let runs: Vec<Vec<(RunOutcome, Option<EpsilonBounds>, i64, i64)>> = per_net.into_iter().flatten().collect();
    Ok(cfg
        .taus
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            let s = summarize(&runs.iter().map(|r| r[k].0).collect::<Vec<_>>());
            let bounds: Vec<EpsilonBounds> = runs.iter().filter_map(|r| r[k].1).collect();
            let e1: Vec<f64> = bounds.iter().map(|b| b.eps1).collect();
            let e2: Vec<f64> = bounds.iter().map(|b| b.eps2).collect();
            let h: Vec<f64> = bounds.iter().map(|b| b.h as f64).collect();
            DelayScanRow {
                tau_t: tau,
                mean_nmse: s.mean_nmse,
                std_nmse: s.std_nmse,
                divergence_pct: s.divergence_pct,
                eps1: mean(&e1),
                eps2: mean(&e2),
                eps1_std: sample_std_dev(&e1),
                eps2_std: sample_std_dev(&e2),
                h: mean(&h),
                l_min: runs.iter().map(|r| r[k].2).min().unwrap_or(0),
                l_max: runs.iter().map(|r| r[k].3).max().unwrap_or(0),
            }
        })
        .collect())
}
