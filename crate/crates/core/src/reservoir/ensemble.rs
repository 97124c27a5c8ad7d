//! Seeded network × sequence sweeps of the train / free-run / score pipeline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{nmse_with, NmseNorm, DIVERGENCE_CAP};
use super::readout::{predict_closed_loop_with_history, train_readout, FeatureSpec};
use super::{drive_batch_keep, Reservoir, ReservoirParams, StateMatrix};
use crate::linalg::DEFAULT_PINV_CUTOFF;
use crate::seeds::{derive, Role};
use crate::signals::{gen_mackey_glass, History, MgParams};
use crate::{Error, Result};

/// Everything an ensemble of prediction runs depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub reservoir: ReservoirParams,
    pub signal: MgParams,
    pub history: History,
    /// Teacher-forced inputs per run.
    pub train_len: usize,
    /// Leading states excluded from training.
    pub washout: usize,
    /// Free-running steps scored per run.
    pub horizon: usize,
    pub n_networks: usize,
    pub n_sequences: usize,
    pub base_seed: u64,
    pub pinv_cutoff: f64,
    pub norm: NmseNorm,
    /// Concurrent networks; 0 lets the thread pool decide.
    pub workers: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            reservoir: ReservoirParams::default(),
            signal: MgParams::default(),
            history: History::default(),
            train_len: 3000,
            washout: 1000,
            horizon: 300,
            n_networks: 5,
            n_sequences: 5,
            base_seed: 0,
            pinv_cutoff: DEFAULT_PINV_CUTOFF,
            norm: NmseNorm::Variance,
            workers: 0,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        self.reservoir.validate()?;
        self.signal.delay_steps()?;
        if self.washout >= self.train_len {
            return Err(Error::Parameter(format!(
                "washout {} must be shorter than train_len {}",
                self.washout, self.train_len
            )));
        }
        if self.train_len - self.washout < 2 {
            return Err(Error::Parameter("need at least two training rows after the washout".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Parameter("horizon must be at least 1".into()));
        }
        if self.n_networks == 0 || self.n_sequences == 0 {
            return Err(Error::Parameter("ensemble sizes must be at least 1".into()));
        }
        Ok(())
    }

    /// Samples each run consumes: training inputs, the first free-run input and the scored horizon.
    pub fn sequence_len(&self) -> usize {
        self.train_len + 1 + self.horizon
    }
}

/// One mean-subtracted input realisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub id: usize,
    pub seed: u64,
    /// Input with the training-segment mean removed.
    pub input: Vec<f64>,
    pub mean: f64,
}

/// Generates the `n_sequences` inputs of an ensemble.
pub fn prepare_sequences(cfg: &BenchmarkConfig) -> Result<Vec<Sequence>> {
    (0..cfg.n_sequences)
        .map(|j| {
            let seed = derive(cfg.base_seed, Role::Sequence, j as u32);
            let raw = gen_mackey_glass(&cfg.signal, cfg.sequence_len(), cfg.history, seed)?;
            Ok(Sequence::from_raw(j, seed, raw.values(), cfg.train_len))
        })
        .collect()
}

impl Sequence {
    /// Centres `raw` on the mean of its first `train_len` samples, so nothing
    /// from the scored horizon leaks into preprocessing.
    pub fn from_raw(id: usize, seed: u64, raw: &[f64], train_len: usize) -> Self {
        let mean = crate::stats::mean(&raw[..train_len.min(raw.len())]);
        Self { id, seed, input: raw.iter().map(|v| v - mean).collect(), mean }
    }
}

/// A sequence together with the states it produced during training.
#[derive(Debug, Clone)]
pub struct DrivenSequence<'a> {
    pub sequence: &'a Sequence,
    pub states: StateMatrix,
}

/// Teacher-forces `res` with the training part of each sequence, keeping
/// `extra_rows` states before the washout for delayed readouts.
pub fn drive_sequences<'a>(
    res: &Reservoir,
    sequences: &'a [Sequence],
    train_len: usize,
    washout: usize,
    extra_rows: usize,
) -> Result<Vec<DrivenSequence<'a>>> {
    if extra_rows > washout {
        return Err(Error::Parameter(format!(
            "washout {washout} must cover the readout delay {extra_rows}"
        )));
    }
    let inputs: Vec<&[f64]> = sequences.iter().map(|s| &s.input[..train_len]).collect();
    let states = drive_batch_keep(res, &inputs, None, washout - extra_rows, washout)?;
    Ok(sequences.iter().zip(states).map(|(sequence, states)| DrivenSequence { sequence, states }).collect())
}

/// Scored result of one train + free-run cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    /// NMSE capped at [`DIVERGENCE_CAP`].
    pub nmse: f64,
    pub divergent: bool,
    pub train_nmse: f64,
    pub n_features: usize,
}

impl RunOutcome {
    pub fn from_raw_nmse(raw: f64, train_nmse: f64, n_features: usize) -> Self {
        let nmse = if raw.is_finite() { raw.min(DIVERGENCE_CAP) } else { DIVERGENCE_CAP };
        Self { nmse, divergent: !(raw <= 1.0), train_nmse, n_features }
    }
}

/// Trains a readout with `spec` on a driven sequence and scores its free run.
///
/// The state after input `k` is trained to output input `k+1`. The free run
/// starts from the final training state, is fed the true input at
/// `train_len`, and is scored on the following `horizon` samples against the
/// spread of the training teacher.
pub fn run_trial(
    res: &Reservoir,
    driven: &DrivenSequence<'_>,
    spec: &FeatureSpec,
    cfg: &BenchmarkConfig,
) -> Result<RunOutcome> {
    let u = &driven.sequence.input;
    let n = cfg.train_len;
    if u.len() < n + 1 + cfg.horizon {
        return Err(Error::Parameter("sequence too short for training and horizon".into()));
    }
    let teacher = &u[cfg.washout + 1..=n];
    let model = train_readout(&driven.states, teacher, spec.clone(), cfg.pinv_cutoff)?;
    let depth = spec.depth().max(1);
    let rows = driven.states.rows();
    let history: Vec<Vec<f64>> = (rows - depth..rows).map(|r| driven.states.row(r)).collect();
    let pred = predict_closed_loop_with_history(res, &model, &history, u[n], cfg.horizon, |_, _, _| {})?;
    let target = &u[n + 1..=n + cfg.horizon];
    let raw = if pred.divergent {
        f64::INFINITY
    } else {
        nmse_with(&pred.values, target, teacher, cfg.norm)?
    };
    Ok(RunOutcome::from_raw_nmse(raw, model.train_nmse, model.w_out.len()))
}

/// Ensemble statistics over run outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub runs: usize,
    pub mean_nmse: f64,
    /// Sample standard deviation of the (capped) NMSE.
    pub std_nmse: f64,
    pub median_nmse: f64,
    /// Percentage of runs with NMSE > 1.
    pub divergence_pct: f64,
    pub mean_features: f64,
}

pub fn summarize(outcomes: &[RunOutcome]) -> EnsembleSummary {
    let v: Vec<f64> = outcomes.iter().map(|o| o.nmse).collect();
    let mut sorted = v.clone();
    sorted.sort_by(f64::total_cmp);
    let median = match sorted.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => sorted[n / 2],
        n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    };
    let div = outcomes.iter().filter(|o| o.divergent).count();
    let feats: Vec<f64> = outcomes.iter().map(|o| o.n_features as f64).collect();
    EnsembleSummary {
        runs: outcomes.len(),
        mean_nmse: crate::stats::mean(&v),
        std_nmse: crate::stats::sample_std_dev(&v),
        median_nmse: median,
        divergence_pct: if outcomes.is_empty() { f64::NAN } else { 100.0 * div as f64 / outcomes.len() as f64 },
        mean_features: crate::stats::mean(&feats),
    }
}

/// Builds each network of the ensemble, drives every sequence through it and
/// hands both to `f`. Networks run concurrently on up to `cfg.workers`
/// threads; results come back in network order.
pub fn map_networks<R, F>(cfg: &BenchmarkConfig, sequences: &[Sequence], extra_rows: usize, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(usize, &Reservoir, &[DrivenSequence<'_>]) -> Result<R> + Sync,
{
    cfg.validate()?;
    let job = |i: usize| -> Result<R> {
        let seed = derive(cfg.base_seed, Role::Network, i as u32);
        let res = Reservoir::build(cfg.reservoir, seed)?;
        let driven = drive_sequences(&res, sequences, cfg.train_len, cfg.washout, extra_rows)?;
        log::debug!("network {i} (seed {seed:#x}) driven with {} sequences", driven.len());
        f(i, &res, &driven)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))?;
    pool.install(|| (0..cfg.n_networks).into_par_iter().map(job).collect())
}

/// One row of the benchmark table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub run_id: usize,
    pub network: usize,
    pub sequence: usize,
    pub nmse: f64,
    pub divergent: bool,
    pub train_nmse: f64,
}

/// Full-readout prediction benchmark over every (network, sequence) pair.
pub fn ensemble_benchmark(cfg: &BenchmarkConfig) -> Result<(Vec<RunRow>, EnsembleSummary)> {
    ensemble_with_features(cfg, &FeatureSpec::AllNodes)
}

/// Benchmark with a fixed feature spec for every run.
pub fn ensemble_with_features(cfg: &BenchmarkConfig, spec: &FeatureSpec) -> Result<(Vec<RunRow>, EnsembleSummary)> {
    cfg.validate()?;
    let sequences = prepare_sequences(cfg)?;
    let per_net = map_networks(cfg, &sequences, spec.depth(), |_, res, driven| {
        driven.iter().map(|d| run_trial(res, d, spec, cfg)).collect::<Result<Vec<_>>>()
    })?;
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for (i, runs) in per_net.into_iter().enumerate() {
        for (j, o) in runs.into_iter().enumerate() {
            rows.push(RunRow {
                run_id: rows.len(),
                network: i,
                sequence: j,
                nmse: o.nmse,
                divergent: o.divergent,
                train_nmse: o.train_nmse,
            });
            outcomes.push(o);
        }
    }
    Ok((rows, summarize(&outcomes)))
}
