//! Stabilising a noisy FitzHugh-Nagumo neuron with a network-predicted voltage.
//!
//! The control law is demand pacing: a pulse is added to the neuron's drive
//! whenever the *predicted* voltage has not spiked for `target_isi` samples
//! (a pulse restarts that interval, so an ineffective pulse is not repeated
//! every sample).
//! The target defaults to the fixed point of the uncontrolled ISI return map.

mod spikes;

pub use spikes::{detect_spikes, fit_return_map, ReturnMap, SpikeDetector, SpikeTrain};

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::reservoir::{
    drive_batch_keep, fit_readout, FeatureSpec, ReadoutModel, Reservoir, ReservoirParams,
};
use crate::seeds::{derive, Role};
use crate::signals::{FhnIntegrator, FhnParams, FhnState};
use crate::stats::{coefficient_of_variation, mean};
use crate::{Error, Result};

/// Detection refractory used before the target interval is known.
pub const PROVISIONAL_REFRACTORY: usize = 100;

/// ISI coefficient of variation below which a run counts as stabilised.
pub const STABLE_CV: f64 = 0.05;

/// Fraction of late measured spikes the predictor must have anticipated for
/// a run to count as stabilised. A predictor that never predicts a spike
/// turns the controller into a blind fixed-rate pacer; that regularises the
/// neuron without any reconstruction of `v` and is not credited.
pub const MIN_TRACKING: f64 = 0.9;

/// Pacing and detection settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerSpec {
    pub v_threshold: f64,
    /// Minimum samples between detected spikes; `None` is half the target.
    pub refractory: Option<usize>,
    /// Pacing interval in samples; `None` fits the return-map fixed point.
    pub target_isi: Option<f64>,
    pub pulse_amplitude: f64,
    pub pulse_width: usize,
    /// Intervals used by the return-map fit (0 = all).
    pub fit_window: usize,
    /// A measured spike counts as tracked when a predicted spike lies
    /// within this many samples of it.
    pub track_tolerance: usize,
}

impl Default for ControllerSpec {
    fn default() -> Self {
        Self { v_threshold: 0.6, refractory: None, target_isi: None, pulse_amplitude: 0.3, pulse_width: 10, fit_window: 0, track_tolerance: 20 }
    }
}

/// When the predictor sees the measured voltage instead of its own output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyncMode {
    /// Never after training.
    FreeRun,
    /// The first `length` steps of every `every`-step block are teacher-forced.
    Periodic { every: usize, length: usize },
}

impl Default for SyncMode {
    fn default() -> Self {
        SyncMode::Periodic { every: 1000, length: 1 }
    }
}

impl SyncMode {
    fn syncing(&self, t: usize) -> bool {
        match *self {
            SyncMode::FreeRun => false,
            SyncMode::Periodic { every, length } => every > 0 && t % every < length,
        }
    }
}

/// Readout architecture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Rrnn,
    Trrnn,
}

/// Source of the voltage the controller watches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorSpec {
    /// The measured voltage itself.
    Oracle,
    Network {
        reservoir: ReservoirParams,
        architecture: Architecture,
        /// Readout delay for [`Architecture::Trrnn`].
        tau_t: i64,
        sync: SyncMode,
        seed: u64,
        /// Relative singular-value cutoff of the readout fit.
        #[serde(default = "default_cutoff")]
        pinv_cutoff: f64,
    },
}

fn default_cutoff() -> f64 {
    crate::linalg::DEFAULT_PINV_CUTOFF
}

impl PredictorSpec {
    fn nodes(&self) -> usize {
        match self {
            PredictorSpec::Oracle => 0,
            PredictorSpec::Network { reservoir, .. } => reservoir.m,
        }
    }
}

/// Simulation lengths, all in integration steps (= samples).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlLengths {
    /// Discarded start-up of the neuron.
    pub warmup: usize,
    /// Uncontrolled samples the predictor is trained on.
    pub train_len: usize,
    pub washout: usize,
    /// Controlled phase.
    pub run_len: usize,
}

impl Default for ControlLengths {
    fn default() -> Self {
        Self { warmup: 10_000, train_len: 100_000, washout: 1_000, run_len: 1_000_000 }
    }
}

/// Outcome of one controlled run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRunReport {
    pub nodes: usize,
    pub controlled_isi: SpikeTrain,
    pub controlled_mean_isi: f64,
    pub uncontrolled_mean_isi: f64,
    pub uncontrolled_isi_cv: f64,
    pub normalized_mean_isi: f64,
    /// CV over intervals ending in the second half of the run.
    pub isi_cv: f64,
    pub stabilized: bool,
    pub divergent: bool,
    pub target_isi: f64,
    pub refractory: usize,
    pub pulses: usize,
    /// Spikes in the predicted voltage during the controlled phase.
    pub predicted_spikes: usize,
    /// Fraction of second-half measured spikes matched by a predicted spike.
    pub tracking: f64,
    /// Training error of the predictor (0 for the oracle).
    pub train_nmse: f64,
}

/// Trained network predictor in its free-running state.
struct NetworkPredictor {
    res: Reservoir,
    model: ReadoutModel,
    ring: VecDeque<Vec<f64>>,
    x: Vec<f64>,
    mean: f64,
    sync: SyncMode,
    y: f64,
    feats: Vec<f64>,
}

impl NetworkPredictor {
    fn train(spec: &PredictorSpec, v: &[f64], washout: usize) -> Result<Self> {
        let PredictorSpec::Network { reservoir, architecture, tau_t, sync, seed, pinv_cutoff } = spec else {
            unreachable!("oracle has no network");
        };
        let res = Reservoir::build(*reservoir, *seed)?;
        let features = match architecture {
            Architecture::Rrnn => FeatureSpec::AllNodes,
            Architecture::Trrnn => FeatureSpec::Delayed { tau_t: *tau_t },
        };
        let depth = features.depth();
        if washout < depth || washout + 2 > v.len() {
            return Err(Error::Parameter(format!(
                "washout {washout} must cover the delay {depth} and leave training rows in {} samples",
                v.len()
            )));
        }
        let mean = crate::stats::mean(v);
        let u: Vec<f64> = v.iter().map(|x| x - mean).collect();
        let n = u.len() - 1;
        let states = drive_batch_keep(&res, &[&u[..n]], None, washout - depth, washout)?.pop().expect("one sequence");
        let x = features.feature_matrix(&states, washout)?;
        let model = fit_readout(x.as_ref(), &u[washout + 1..=n], features.clone(), *pinv_cutoff)?;
        let rows = states.rows();
        let ring = (rows - depth..rows).map(|r| states.row(r)).collect();
        Ok(Self {
            x: states.final_state().to_vec(),
            res,
            model,
            ring,
            mean,
            sync: *sync,
            y: u[n],
            feats: Vec::new(),
        })
    }

    /// Advances one step; `measured` is the latest true voltage. Returns the
    /// predicted voltage in the original units.
    fn step(&mut self, t: usize, measured: f64) -> Option<f64> {
        let input = if self.sync.syncing(t) { measured - self.mean } else { self.y };
        self.x = self.res.step(&self.x, input);
        let delayed = match &self.model.feature_spec {
            FeatureSpec::Delayed { .. } => Some(self.ring.front().map_or(self.x.as_slice(), |v| v.as_slice())),
            _ => None,
        };
        self.model.feature_spec.features_into(&self.x, delayed, &mut self.feats);
        let out = self.model.apply(&self.feats);
        if !self.ring.is_empty() {
            self.ring.pop_front();
            self.ring.push_back(self.x.clone());
        }
        if !out.is_finite() || out.abs() > 1e3 {
            return None;
        }
        self.y = out;
        Some(out + self.mean)
    }
}

/// Trains the predictor on uncontrolled voltage, then runs the neuron under
/// demand pacing driven by the predicted voltage. An identical uncontrolled
/// copy of the neuron (same noise) gives the reference statistics.
pub fn run_controlled(
    fhn: &FhnParams,
    predictor: &PredictorSpec,
    ctrl: &ControllerSpec,
    lengths: &ControlLengths,
    seed: u64,
) -> Result<ControlRunReport> {
    if ctrl.pulse_width == 0 {
        return Err(Error::Parameter("pulse_width must be at least 1".into()));
    }
    if lengths.run_len < 2 || lengths.train_len < 2 {
        return Err(Error::Parameter("run and training lengths must be at least 2".into()));
    }
    let mut neuron = FhnIntegrator::new(*fhn, FhnState::default(), seed)?;
    for _ in 0..lengths.warmup {
        neuron.step(0.0)?;
    }
    let mut train_v = Vec::with_capacity(lengths.train_len);
    for _ in 0..lengths.train_len {
        train_v.push(neuron.step(0.0)?.v);
    }
    let (target, refractory) = resolve_targets(ctrl, &train_v)?;
    if target <= refractory as f64 {
        return Err(Error::Parameter(format!("target ISI {target} must exceed the refractory {refractory}")));
    }

    // reference: same neuron, same noise, no control
    let mut reference = neuron.clone();
    let mut ref_v = Vec::with_capacity(lengths.run_len);
    for _ in 0..lengths.run_len {
        ref_v.push(reference.step(0.0)?.v);
    }
    let uncontrolled = detect_spikes(&ref_v, ctrl.v_threshold, refractory);

    let mut net = match predictor {
        PredictorSpec::Oracle => None,
        spec => Some(NetworkPredictor::train(spec, &train_v, lengths.washout)?),
    };
    let train_nmse = net.as_ref().map_or(0.0, |n| n.model.train_nmse);
    let mut watch = SpikeDetector::new(ctrl.v_threshold, refractory);
    let mut measured = *train_v.last().expect("non-empty training");
    let mut last_predicted = 0usize;
    let mut pulse_left = 0usize;
    let mut pulses = 0usize;
    let mut predicted_spikes = Vec::new();
    let mut divergent = false;
    let mut v = Vec::with_capacity(lengths.run_len);
    for t in 0..lengths.run_len {
        let predicted = match net.as_mut() {
            None => Some(measured),
            Some(n) if !divergent => n.step(t, measured),
            Some(_) => None,
        };
        match predicted {
            Some(p) => {
                if watch.push(t, p) {
                    last_predicted = t;
                    predicted_spikes.push(t);
                }
                // a pulse restarts the escape interval, like a detected spike
                if pulse_left == 0 && (t - last_predicted) as f64 >= target {
                    pulse_left = ctrl.pulse_width;
                    pulses += 1;
                    last_predicted = t;
                }
            }
            None => divergent = true,
        }
        let drive = if pulse_left > 0 {
            pulse_left -= 1;
            ctrl.pulse_amplitude
        } else {
            0.0
        };
        measured = neuron.step(drive)?.v;
        v.push(measured);
    }
    let controlled = detect_spikes(&v, ctrl.v_threshold, refractory);
    let controlled_mean = mean(&controlled.isi_f64());
    let uncontrolled_mean = mean(&uncontrolled.isi_f64());
    let late = controlled.isi_after(lengths.run_len / 2);
    let isi_cv = if late.len() >= 2 { coefficient_of_variation(&late) } else { f64::NAN };
    let tracking = tracking_fraction(&controlled.spike_indices, &predicted_spikes, lengths.run_len / 2, ctrl.track_tolerance);
    let stabilized = !divergent && late.len() >= 10 && isi_cv < STABLE_CV && tracking >= MIN_TRACKING;
    Ok(ControlRunReport {
        nodes: predictor.nodes(),
        controlled_mean_isi: controlled_mean,
        uncontrolled_mean_isi: uncontrolled_mean,
        uncontrolled_isi_cv: coefficient_of_variation(&uncontrolled.isi_f64()),
        normalized_mean_isi: controlled_mean / uncontrolled_mean,
        controlled_isi: controlled,
        isi_cv,
        stabilized,
        divergent,
        target_isi: target,
        refractory,
        pulses,
        predicted_spikes: predicted_spikes.len(),
        tracking,
        train_nmse,
    })
}

/// Fraction of `actual` spikes at or after `from` with a `predicted` spike
/// within `tolerance` samples. Both slices are increasing.
fn tracking_fraction(actual: &[usize], predicted: &[usize], from: usize, tolerance: usize) -> f64 {
    let late: Vec<usize> = actual.iter().copied().filter(|&a| a >= from).collect();
    if late.is_empty() {
        return 0.0;
    }
    let hits = late
        .iter()
        .filter(|&&a| {
            let k = predicted.partition_point(|&p| p + tolerance < a);
            predicted.get(k).is_some_and(|&p| p <= a + tolerance)
        })
        .count();
    hits as f64 / late.len() as f64
}

fn resolve_targets(ctrl: &ControllerSpec, train_v: &[f64]) -> Result<(f64, usize)> {
    let target = match ctrl.target_isi {
        Some(t) => t,
        None => {
            let det = ctrl.refractory.unwrap_or(PROVISIONAL_REFRACTORY);
            let train = detect_spikes(train_v, ctrl.v_threshold, det);
            fit_return_map(&train.isi_f64(), ctrl.fit_window)?.fixed_point
        }
    };
    let refractory = ctrl.refractory.unwrap_or((0.5 * target).round().max(1.0) as usize);
    Ok((target, refractory))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NodeSweepConfig {
    pub fhn: FhnParams,
    pub controller: ControllerSpec,
    pub lengths: ControlLengths,
    pub nodes: Vec<usize>,
    pub architectures: Vec<Architecture>,
    /// Network template; `m` and `mu` are set per run.
    pub reservoir: ReservoirParams,
    /// Bifurcation parameter of the classical networks.
    pub mu_rrnn: f64,
    /// Bifurcation parameter of the delayed-readout networks.
    pub mu_trrnn: f64,
    pub tau_t: i64,
    pub sync: SyncMode,
    pub pinv_cutoff: f64,
    pub base_seed: u64,
    pub workers: usize,
}

impl Default for NodeSweepConfig {
    fn default() -> Self {
        Self {
            fhn: FhnParams::default(),
            controller: ControllerSpec::default(),
            lengths: ControlLengths::default(),
            nodes: vec![11, 12, 15, 20, 30, 50, 80, 120, 200, 250, 340],
            architectures: vec![Architecture::Rrnn, Architecture::Trrnn],
            reservoir: ReservoirParams { m: 12, ..ReservoirParams::default() },
            mu_rrnn: 1.1,
            mu_trrnn: 0.1,
            tau_t: -166,
            sync: SyncMode::default(),
            pinv_cutoff: default_cutoff(),
            base_seed: 0,
            workers: 0,
        }
    }
}

impl NodeSweepConfig {
    pub fn mu_for(&self, architecture: Architecture) -> f64 {
        match architecture {
            Architecture::Rrnn => self.mu_rrnn,
            Architecture::Trrnn => self.mu_trrnn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeSweepRow {
    pub nodes: usize,
    pub architecture: Architecture,
    pub normalized_mean_isi: f64,
    pub isi_cv: f64,
    pub stabilized: bool,
    pub divergent: bool,
    pub pulses: usize,
    pub predicted_spikes: usize,
    pub tracking: f64,
    pub train_nmse: f64,
}

/// Controlled runs for every (architecture, node count). All runs share one
/// neuron realisation; network `k` of the grid is seeded by its position.
pub fn node_sweep(cfg: &NodeSweepConfig) -> Result<Vec<NodeSweepRow>> {
    use rayon::prelude::*;
    let neuron_seed = derive(cfg.base_seed, Role::Neuron, 0);
    let jobs: Vec<(Architecture, usize, u64)> = cfg
        .architectures
        .iter()
        .flat_map(|&a| cfg.nodes.iter().map(move |&m| (a, m)))
        .enumerate()
        .map(|(k, (a, m))| (a, m, derive(cfg.base_seed, Role::Network, k as u32)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|&(architecture, m, seed)| {
                let predictor = PredictorSpec::Network {
                    reservoir: ReservoirParams { m, mu: cfg.mu_for(architecture), ..cfg.reservoir },
                    architecture,
                    tau_t: cfg.tau_t,
                    sync: cfg.sync,
                    seed,
                    pinv_cutoff: cfg.pinv_cutoff,
                };
                let r = run_controlled(&cfg.fhn, &predictor, &cfg.controller, &cfg.lengths, neuron_seed)?;
                log::info!("node sweep: {architecture:?} m={m} cv={:.4} stabilized={}", r.isi_cv, r.stabilized);
                Ok(NodeSweepRow {
                    nodes: m,
                    architecture,
                    normalized_mean_isi: r.normalized_mean_isi,
                    isi_cv: r.isi_cv,
                    stabilized: r.stabilized,
                    divergent: r.divergent,
                    pulses: r.pulses,
                    predicted_spikes: r.predicted_spikes,
                    tracking: r.tracking,
                    train_nmse: r.train_nmse,
                })
            })
            .collect()
    })
}

/// Smallest node count of `architecture` that stabilised.
pub fn smallest_stabilizing(rows: &[NodeSweepRow], architecture: Architecture) -> Option<usize> {
    rows.iter().filter(|r| r.architecture == architecture && r.stabilized).map(|r| r.nodes).min()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> FhnParams {
        FhnParams { noise_sigma: 0.0, ..FhnParams::default() }
    }

    fn short() -> ControlLengths {
        ControlLengths { warmup: 2000, train_len: 20_000, washout: 500, run_len: 40_000 }
    }

    #[test]
    fn noise_free_neuron_fires_regularly() {
        let (v, _) = crate::signals::gen_fhn(&quiet(), 50_000, FhnState::default(), 0).unwrap();
        let t = detect_spikes(&v.values()[5000..], 0.6, 100);
        let (lo, hi) = (t.isi.iter().min().unwrap(), t.isi.iter().max().unwrap());
        assert!(hi - lo <= 1, "{lo}..{hi}");
    }

    #[test]
    fn zero_amplitude_reproduces_uncontrolled_run() {
        let fhn = FhnParams { noise_sigma: 0.002, ..FhnParams::default() };
        let ctrl = ControllerSpec { target_isi: Some(150.0), pulse_amplitude: 0.0, refractory: Some(100), ..ControllerSpec::default() };
        let r = run_controlled(&fhn, &PredictorSpec::Oracle, &ctrl, &short(), 3).unwrap();
        assert!(r.pulses > 0);
        assert_eq!(r.controlled_mean_isi, r.uncontrolled_mean_isi);
        assert_eq!(r.normalized_mean_isi, 1.0);
    }

    #[test]
    fn oracle_control_never_worsens_deterministic_neuron() {
        // the noise-free neuron fires every ~690 samples; pace faster than that
        let ctrl = ControllerSpec { target_isi: Some(400.0), pulse_amplitude: 2.0, refractory: Some(200), ..ControllerSpec::default() };
        let r = run_controlled(&quiet(), &PredictorSpec::Oracle, &ctrl, &short(), 0).unwrap();
        let var = |cv: f64, m: f64| (cv * m).powi(2);
        assert!(r.controlled_mean_isi < r.uncontrolled_mean_isi, "{r:?}");
        assert!(var(r.isi_cv, r.controlled_mean_isi) <= var(r.uncontrolled_isi_cv, r.uncontrolled_mean_isi) + 1.0);
        assert!((r.normalized_mean_isi * r.uncontrolled_mean_isi - r.controlled_mean_isi).abs() <= 1e-12 * r.controlled_mean_isi);
    }

    #[test]
    fn fitted_target_lies_in_observed_range() {
        let fhn = FhnParams { noise_sigma: 0.002, ..FhnParams::default() };
        let (v, _) = crate::signals::gen_fhn(&fhn, 200_000, FhnState::default(), 8).unwrap();
        let t = detect_spikes(v.values(), 0.6, PROVISIONAL_REFRACTORY);
        let isi = t.isi_f64();
        let f = fit_return_map(&isi, 0).unwrap();
        let (lo, hi) = isi.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
        assert!(lo <= f.fixed_point && f.fixed_point <= hi, "{lo} {} {hi}", f.fixed_point);
    }

    #[test]
    fn tracking_counts_matches_within_tolerance() {
        let actual = [100, 200, 300, 400];
        assert_eq!(tracking_fraction(&actual, &[95, 230, 401], 0, 5), 0.5);
        assert_eq!(tracking_fraction(&actual, &[95, 230, 401], 250, 5), 0.5);
        assert_eq!(tracking_fraction(&actual, &[], 0, 5), 0.0);
        assert_eq!(tracking_fraction(&[], &[1], 0, 5), 0.0);
    }

    #[test]
    fn blind_pacing_is_not_credited() {
        let fhn = FhnParams { noise_sigma: 0.002, ..FhnParams::default() };
        let ctrl = ControllerSpec { target_isi: Some(150.0), pulse_amplitude: 2.0, pulse_width: 20, refractory: Some(100), ..ControllerSpec::default() };
        // a network with no memory of spikes predicts a flat voltage
        let flat = PredictorSpec::Network {
            reservoir: ReservoirParams { m: 1, mu: 0.1, alpha: 0.0, ..ReservoirParams::default() },
            architecture: Architecture::Rrnn,
            tau_t: 0,
            sync: SyncMode::FreeRun,
            seed: 0,
            pinv_cutoff: default_cutoff(),
        };
        let r = run_controlled(&fhn, &flat, &ctrl, &short(), 3).unwrap();
        assert!(r.isi_cv < STABLE_CV, "pacing alone regularises: {}", r.isi_cv);
        assert_eq!(r.predicted_spikes, 0);
        assert!(!r.stabilized);
        let o = run_controlled(&fhn, &PredictorSpec::Oracle, &ctrl, &short(), 3).unwrap();
        assert!(o.stabilized && o.tracking == 1.0, "{} {}", o.isi_cv, o.tracking);
    }

    #[test]
    fn rejects_bad_specs() {
        let ctrl = ControllerSpec { pulse_width: 0, ..ControllerSpec::default() };
        assert!(run_controlled(&quiet(), &PredictorSpec::Oracle, &ctrl, &short(), 0).is_err());
        let ctrl = ControllerSpec { target_isi: Some(50.0), refractory: Some(60), ..ControllerSpec::default() };
        assert!(run_controlled(&quiet(), &PredictorSpec::Oracle, &ctrl, &short(), 0).is_err());
    }
}
