//! Ensemble sweeps over the lag-window spacing and over the network gain μ.

use serde::{Deserialize, Serialize};

use super::bounds::{epsilon_bounds, EpsilonBounds, EpsilonMode};
use super::cca::{cca_profile, CcaProfile, DEFAULT_MAX_LAG};
use super::filter::{distinct, window_filter, WindowFilterSpec};
use crate::embedding::{delay_embed, EmbeddingSpec};
use crate::reservoir::{
    drive_sequences, map_networks, prepare_sequences, run_trial, summarize, BenchmarkConfig, DrivenSequence,
    EnsembleSummary, FeatureSpec, Reservoir, RunOutcome,
};
use crate::seeds::{derive, Role};
use crate::signals::TimeSeries;
use crate::stats::{mean, sample_std_dev};
use crate::Result;

/// CCA profile of one driven sequence over its training rows.
pub fn training_profile(driven: &DrivenSequence<'_>, washout: usize, train_len: usize, max_lag: usize) -> Result<CcaProfile> {
    let states = driven.states.from_index(washout);
    cca_profile(states, &driven.sequence.input[washout..train_len], max_lag)
}

/// Profiles of every (network, sequence) run, network-major.
pub fn cca_ensemble(cfg: &BenchmarkConfig, max_lag: usize) -> Result<Vec<CcaProfile>> {
    let sequences = prepare_sequences(cfg)?;
    let per_net = map_networks(cfg, &sequences, 0, |_, _, driven| {
        driven.iter().map(|d| training_profile(d, cfg.washout, cfg.train_len, max_lag)).collect::<Result<Vec<_>>>()
    })?;
    Ok(per_net.into_iter().flatten().collect())
}

/// Extreme lags over a set of profiles.
pub fn lag_spread(profiles: &[CcaProfile]) -> (i64, i64) {
    let lo = profiles.iter().map(|p| p.l_min).min().unwrap_or(0);
    let hi = profiles.iter().map(|p| p.l_max).max().unwrap_or(0);
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TauScanConfig {
    pub bench: BenchmarkConfig,
    /// Window spacings to evaluate.
    pub taus: Vec<i64>,
    pub delta: i64,
    /// Window index bound.
    #[serde(rename = "M")]
    pub m: usize,
    pub max_lag: usize,
}

impl Default for TauScanConfig {
    fn default() -> Self {
        Self { bench: BenchmarkConfig::default(), taus: (-25..=-1).collect(), delta: 3, m: 4, max_lag: DEFAULT_MAX_LAG }
    }
}

/// One spacing of the window scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauScanRow {
    pub tau0_net: i64,
    pub mean_nmse: f64,
    pub std_nmse: f64,
    pub divergence_pct: f64,
    /// Readout columns, counting a node once per window it falls in.
    pub mean_nodes: f64,
    pub mean_distinct_nodes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauScanResult {
    pub baseline: EnsembleSummary,
    pub rows: Vec<TauScanRow>,
}

/// Readout restricted to lag-window nodes, for each spacing; the network
/// itself always evolves with all nodes.
pub fn tau_scan(cfg: &TauScanConfig) -> Result<TauScanResult> {
    let b = &cfg.bench;
    let sequences = prepare_sequences(b)?;
    struct Run {
        baseline: RunOutcome,
        filtered: Vec<(RunOutcome, usize)>,
    }
    let per_net = map_networks(b, &sequences, 0, |i, res, driven| {
        let mut runs = Vec::with_capacity(driven.len());
        for d in driven {
            let profile = training_profile(d, b.washout, b.train_len, cfg.max_lag)?;
            let baseline = run_trial(res, d, &FeatureSpec::AllNodes, b)?;
            let mut filtered = Vec::with_capacity(cfg.taus.len());
            for &tau in &cfg.taus {
                let nodes = window_filter(&profile, &WindowFilterSpec { tau0_net: tau, delta: cfg.delta, m: cfg.m })?;
                let n_distinct = distinct(&nodes).len();
                let o = run_trial(res, d, &FeatureSpec::Masked { nodes }, b)?;
                filtered.push((o, n_distinct));
            }
            log::info!("tau scan: network {i}, sequence {} done", d.sequence.id);
            runs.push(Run { baseline, filtered });
        }
        Ok(runs)
    })?;
    let runs: Vec<Run> = per_net.into_iter().flatten().collect();
    let baseline = summarize(&runs.iter().map(|r| r.baseline).collect::<Vec<_>>());
    let rows = cfg
        .taus
        .iter()
        .enumerate()
        .map(|(k, &tau)| {
            let outs: Vec<RunOutcome> = runs.iter().map(|r| r.filtered[k].0).collect();
            let s = summarize(&outs);
            let distinct_counts: Vec<f64> = runs.iter().map(|r| r.filtered[k].1 as f64).collect();
            TauScanRow {
                tau0_net: tau,
                mean_nmse: s.mean_nmse,
                std_nmse: s.std_nmse,
                divergence_pct: s.divergence_pct,
                mean_nodes: s.mean_features,
                mean_distinct_nodes: mean(&distinct_counts),
            }
        })
        .collect();
    Ok(TauScanResult { baseline, rows })
}

/// Which nodes span the projected space for the distortion bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionNodes {
    /// The distinct nodes kept by the lag-window filter.
    #[default]
    Filtered,
    /// Every node with a defined lag in `[l_min, l_max]`.
    AllLagged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MuScanConfig {
    pub bench: BenchmarkConfig,
    pub mus: Vec<f64>,
    pub filter: WindowFilterSpec,
    /// Takens embedding of the input the projection is compared against.
    pub embedding: EmbeddingSpec,
    pub max_lag: usize,
    pub eps_mode: EpsilonMode,
    pub projection: ProjectionNodes,
    /// Also score the unfiltered readout at each μ.
    pub unfiltered: bool,
}

impl Default for MuScanConfig {
    fn default() -> Self {
        Self {
            bench: BenchmarkConfig::default(),
            mus: (1..=15).map(|k| k as f64 / 10.0).collect(),
            filter: WindowFilterSpec::default(),
            embedding: EmbeddingSpec { tau0: -12, m: 4 },
            max_lag: DEFAULT_MAX_LAG,
            eps_mode: EpsilonMode::MeanDistance,
            projection: ProjectionNodes::Filtered,
            unfiltered: true,
        }
    }
}

/// One μ of the scan; ε values are ensemble means over runs where they were computable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MuScanRow {
    pub mu: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps1_std: f64,
    pub eps2_std: f64,
    pub h: f64,
    pub l_min: i64,
    pub l_max: i64,
    /// Filtered readout.
    pub mean_nmse: f64,
    pub std_nmse: f64,
    pub divergence_pct: f64,
    /// Full readout; NaN when not requested.
    pub mean_nmse_all: f64,
    pub divergence_pct_all: f64,
}

/// Per-run pieces shared by the μ and delay scans.
pub(crate) fn average_bounds(bounds: &[EpsilonBounds]) -> (f64, f64, f64, f64, f64) {
    let e1: Vec<f64> = bounds.iter().map(|b| b.eps1).collect();
    let e2: Vec<f64> = bounds.iter().map(|b| b.eps2).collect();
    let h: Vec<f64> = bounds.iter().map(|b| b.h as f64).collect();
    (mean(&e1), mean(&e2), sample_std_dev(&e1), sample_std_dev(&e2), mean(&h))
}

/// Distortion bounds and prediction quality as μ varies. Each network keeps
/// its weights across the grid; only the run-time gain changes.
pub fn mu_scan(cfg: &MuScanConfig) -> Result<Vec<MuScanRow>> {
    let b = &cfg.bench;
    b.validate()?;
    cfg.filter.validate()?;
    cfg.embedding.validate()?;
    let sequences = prepare_sequences(b)?;
    let embeds = sequences
        .iter()
        .map(|s| delay_embed(&TimeSeries::new(s.input[..b.train_len].to_vec(), 1.0)?, cfg.embedding))
        .collect::<Result<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(b.workers)
        .build()
        .map_err(|e| crate::Error::Parameter(format!("cannot start worker pool: {e}")))?;
    let networks: Vec<Reservoir> = pool.install(|| {
        use rayon::prelude::*;
        (0..b.n_networks)
            .into_par_iter()
            .map(|i| Reservoir::build(b.reservoir, derive(b.base_seed, Role::Network, i as u32)))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut rows = Vec::with_capacity(cfg.mus.len());
    for &mu in &cfg.mus {
        let per_net: Vec<Vec<(RunOutcome, Option<RunOutcome>, Option<EpsilonBounds>, i64, i64)>> = pool.install(|| {
            use rayon::prelude::*;
            networks
                .par_iter()
                .map(|base| {
                    let p = base.params();
                    let res = base.with_runtime(mu, p.alpha, p.b);
                    let driven = drive_sequences(&res, &sequences, b.train_len, b.washout, 0)?;
                    driven
                        .iter()
                        .zip(&embeds)
                        .map(|(d, emb)| {
                            let profile = training_profile(d, b.washout, b.train_len, cfg.max_lag)?;
                            let nodes = window_filter(&profile, &cfg.filter)?;
                            let filtered = run_trial(&res, d, &FeatureSpec::Masked { nodes: nodes.clone() }, b)?;
                            let all = if cfg.unfiltered { Some(run_trial(&res, d, &FeatureSpec::AllNodes, b)?) } else { None };
                            let proj = match cfg.projection {
                                ProjectionNodes::Filtered => distinct(&nodes),
                                ProjectionNodes::AllLagged => profile.lagged_nodes(),
                            };
                            let eps = if proj.is_empty() {
                                None
                            } else {
                                epsilon_bounds(emb, &d.states, &proj, cfg.eps_mode).ok()
                            };
                            Ok((filtered, all, eps, profile.l_min, profile.l_max))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let runs: Vec<_> = per_net.into_iter().flatten().collect();
        let filtered = summarize(&runs.iter().map(|r| r.0).collect::<Vec<_>>());
        let all: Vec<RunOutcome> = runs.iter().filter_map(|r| r.1).collect();
        let all_s = if all.is_empty() { None } else { Some(summarize(&all)) };
        let bounds: Vec<EpsilonBounds> = runs.iter().filter_map(|r| r.2).collect();
        let (eps1, eps2, eps1_std, eps2_std, h) = average_bounds(&bounds);
        let row = MuScanRow {
            mu,
            eps1,
            eps2,
            eps1_std,
            eps2_std,
            h,
            l_min: runs.iter().map(|r| r.3).min().unwrap_or(0),
            l_max: runs.iter().map(|r| r.4).max().unwrap_or(0),
            mean_nmse: filtered.mean_nmse,
            std_nmse: filtered.std_nmse,
            divergence_pct: filtered.divergence_pct,
            mean_nmse_all: all_s.map_or(f64::NAN, |s| s.mean_nmse),
            divergence_pct_all: all_s.map_or(f64::NAN, |s| s.divergence_pct),
        };
        log::info!("mu scan: mu = {mu} -> {row:?}");
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::ReservoirParams;

    fn tiny() -> BenchmarkConfig {
        BenchmarkConfig {
            reservoir: ReservoirParams { m: 30, ..ReservoirParams::default() },
            train_len: 500,
            washout: 150,
            horizon: 20,
            n_networks: 1,
            n_sequences: 2,
            workers: 1,
            ..BenchmarkConfig::default()
        }
    }

    #[test]
    fn tau_scan_shapes() {
        let cfg = TauScanConfig { bench: tiny(), taus: vec![-12, -3], max_lag: 30, ..TauScanConfig::default() };
        let r = tau_scan(&cfg).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.baseline.runs, 2);
        assert_eq!(r.baseline.mean_features, 30.0);
        // overlapping windows at −3 reuse nodes
        assert!(r.rows[1].mean_nodes >= r.rows[1].mean_distinct_nodes);
    }

    #[test]
    fn mu_scan_rows() {
        let cfg = MuScanConfig { bench: tiny(), mus: vec![0.5, 1.1], max_lag: 30, ..MuScanConfig::default() };
        let rows = mu_scan(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.l_min <= r.l_max && r.eps1 <= 1.0));
        assert_eq!(mu_scan(&cfg).unwrap(), rows);
    }
}
