//! Reproducible experiment orchestration: versioned JSON configs with
//! desk/paper presets, dispatch to the library pipelines, atomic result files
//! and a run record carrying the config hash.
//!
//! Every result file is a pure function of the resolved config; only
//! `record.json` carries wall-clock timestamps.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::control::{
    node_sweep, run_controlled, smallest_stabilizing, Architecture, ControlLengths, ControllerSpec, NodeSweepConfig,
    PredictorSpec, SyncMode,
};
use crate::embedding::{acf, delay_embed, false_nearest_neighbors, select_tau0, EmbeddingSpec, FnnOptions, LagRule};
use crate::hybrid::{delay_scan, DelayScanConfig};
use crate::persist::{write_csv_atomic, write_json_atomic};
use crate::reservoir::{ensemble_benchmark, ensemble_with_features, BenchmarkConfig, FeatureSpec, ReservoirParams};
use crate::seeds::{derive, Role};
use crate::signals::{gen_fhn, gen_mackey_glass, read_series_csv, write_series, FhnParams, FhnState};
use crate::takens::{
    cca_ensemble, lag_spread, mu_scan, tau_scan, EpsilonMode, MuScanConfig, ProjectionNodes, TauScanConfig,
    WindowFilterSpec,
};
use crate::{Error, Result};

pub use crate::seeds::{seed_schedule, RunSeeds};

/// Version of the config layout understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Percentage of divergent runs above which a result is divergence-dominated.
pub const DIVERGENCE_DOMINATED_PCT: f64 = 90.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Ensemble free-run benchmark of the classical readout.
    Predict,
    /// Lag-window filtered readouts over candidate spacings.
    ScanTau,
    /// Distortion bounds and prediction quality over μ.
    ScanMu,
    /// Ensemble benchmark of the delayed readout at one τ_T.
    Trrnn,
    /// Delayed readout over the τ_T grid.
    ScanDelay,
    /// One controlled neuron run.
    FhnControl,
    /// Controlled runs over node counts and architectures.
    NodeSweep,
    /// Node lag profiles of the ensemble.
    Cca,
    /// Distortion bounds at the configured μ.
    Bounds,
    /// Writes a generated series.
    Gen,
    /// ACF, false nearest neighbours and the delay matrix of a series.
    Embed,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::Predict,
        Experiment::ScanTau,
        Experiment::ScanMu,
        Experiment::Trrnn,
        Experiment::ScanDelay,
        Experiment::FhnControl,
        Experiment::NodeSweep,
        Experiment::Cca,
        Experiment::Bounds,
        Experiment::Gen,
        Experiment::Embed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Predict => "predict",
            Experiment::ScanTau => "scan-tau",
            Experiment::ScanMu => "scan-mu",
            Experiment::Trrnn => "trrnn",
            Experiment::ScanDelay => "scan-delay",
            Experiment::FhnControl => "fhn-control",
            Experiment::NodeSweep => "node-sweep",
            Experiment::Cca => "cca",
            Experiment::Bounds => "bounds",
            Experiment::Gen => "gen",
            Experiment::Embed => "embed",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    /// 5 × 5 ensembles, 10⁶-step control runs.
    #[default]
    Desk,
    /// 20 × 20 ensembles, 4·10⁶-step control runs.
    Paper,
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(Error::Config(format!("unknown scale `{other}` (expected desk or paper)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TauScanSection {
    pub taus: Vec<i64>,
    pub delta: i64,
    #[serde(rename = "M")]
    pub m: usize,
    pub max_lag: usize,
}

impl Default for TauScanSection {
    fn default() -> Self {
        let d = TauScanConfig::default();
        Self { taus: d.taus, delta: d.delta, m: d.m, max_lag: d.max_lag }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MuScanSection {
    pub mus: Vec<f64>,
    pub filter: WindowFilterSpec,
    pub embedding: EmbeddingSpec,
    pub max_lag: usize,
    pub eps_mode: EpsilonMode,
    pub projection: ProjectionNodes,
    pub unfiltered: bool,
}

impl Default for MuScanSection {
    fn default() -> Self {
        let d = MuScanConfig::default();
        Self {
            mus: d.mus,
            filter: d.filter,
            embedding: d.embedding,
            max_lag: d.max_lag,
            eps_mode: d.eps_mode,
            projection: d.projection,
            unfiltered: d.unfiltered,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridSection {
    /// Readout delay of the `trrnn` experiment.
    #[serde(rename = "tau_T")]
    pub tau_t: i64,
    /// Grid of the `scan-delay` experiment.
    pub taus: Vec<i64>,
    pub embedding: EmbeddingSpec,
    pub max_lag: usize,
    pub eps_mode: EpsilonMode,
}

impl Default for HybridSection {
    fn default() -> Self {
        let d = DelayScanConfig::default();
        Self { tau_t: -12, taus: d.taus, embedding: d.embedding, max_lag: d.max_lag, eps_mode: d.eps_mode }
    }
}

/// Predictor of the single `fhn-control` run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Oracle,
    Rrnn,
    Trrnn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub fhn: FhnParams,
    pub controller: ControllerSpec,
    pub lengths: ControlLengths,
    pub predictor: PredictorKind,
    /// Network size of the single run.
    pub m: usize,
    /// Network template (α, b, activation); `m` comes from the run or sweep.
    pub reservoir: ReservoirParams,
    pub mu_rrnn: f64,
    pub mu_trrnn: f64,
    #[serde(rename = "tau_T")]
    pub tau_t: i64,
    pub sync: SyncMode,
    pub pinv_cutoff: f64,
    pub nodes: Vec<usize>,
    pub architectures: Vec<Architecture>,
}

impl Default for ControlSection {
    fn default() -> Self {
        let d = NodeSweepConfig::default();
        Self {
            // the weak-noise regime leaves room for pacing to regularise the ISIs
            fhn: FhnParams { noise_sigma: 0.002, ..FhnParams::default() },
            // validated with the oracle predictor: it pins the ISI to the target
            controller: ControllerSpec {
                target_isi: Some(150.0),
                refractory: Some(100),
                pulse_amplitude: 2.0,
                pulse_width: 20,
                ..ControllerSpec::default()
            },
            lengths: d.lengths,
            predictor: PredictorKind::Trrnn,
            m: 12,
            reservoir: d.reservoir,
            mu_rrnn: d.mu_rrnn,
            mu_trrnn: d.mu_trrnn,
            tau_t: d.tau_t,
            sync: d.sync,
            pinv_cutoff: d.pinv_cutoff,
            nodes: d.nodes,
            architectures: d.architectures,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GenSignal {
    MackeyGlass,
    Fhn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    pub signal: GenSignal,
    /// Samples (Mackey-Glass) or integration steps (FitzHugh-Nagumo).
    pub n: usize,
}

impl Default for GenSection {
    fn default() -> Self {
        Self { signal: GenSignal::MackeyGlass, n: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedMode {
    /// ACF and false nearest neighbours.
    #[default]
    All,
    Acf,
    Fnn,
    /// Writes the delay matrix.
    Embed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub mode: EmbedMode,
    /// Series CSV to analyse; a generated Mackey-Glass series when absent.
    pub input: Option<PathBuf>,
    /// Generated samples when no input is given.
    pub n: usize,
    pub max_lag: usize,
    pub rule: LagRule,
    pub m_max: usize,
    pub fnn: FnnOptions,
    /// Embedding of the delay matrix; the selected lag and M_min when absent.
    pub spec: Option<EmbeddingSpec>,
}

impl Default for EmbedSection {
    fn default() -> Self {
        Self {
            mode: EmbedMode::All,
            input: None,
            n: 10_000,
            max_lag: 100,
            rule: LagRule::default(),
            m_max: 10,
            fnn: FnnOptions::default(),
            spec: None,
        }
    }
}

/// A complete, self-describing experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub scale: Scale,
    /// Network, signal, ensemble sizes, seed and horizon shared by all
    /// network experiments. The default horizon of 300 steps is the inverse
    /// of the largest Lyapunov exponent of the Mackey-Glass attractor.
    pub bench: BenchmarkConfig,
    #[serde(default)]
    pub tau_scan: TauScanSection,
    #[serde(default)]
    pub mu_scan: MuScanSection,
    #[serde(default)]
    pub hybrid: HybridSection,
    #[serde(default)]
    pub control: ControlSection,
    #[serde(default)]
    pub gen: GenSection,
    #[serde(default)]
    pub embed: EmbedSection,
    /// Result directory; the CLI's `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// The ready-to-run configuration of `experiment` at `scale`.
    pub fn preset(experiment: Experiment, scale: Scale) -> Self {
        let (n_networks, n_sequences) = match scale {
            Scale::Desk => (5, 5),
            Scale::Paper => (20, 20),
        };
        let mut bench = BenchmarkConfig { n_networks, n_sequences, ..BenchmarkConfig::default() };
        if matches!(experiment, Experiment::Trrnn | Experiment::ScanDelay) {
            bench.reservoir = DelayScanConfig::default().bench.reservoir;
        }
        let mut control = ControlSection::default();
        if scale == Scale::Paper {
            control.lengths.run_len = 4_000_000;
        }
        Self {
            schema_version: SCHEMA_VERSION,
            experiment,
            scale,
            bench,
            tau_scan: TauScanSection::default(),
            mu_scan: MuScanSection::default(),
            hybrid: HybridSection::default(),
            control,
            gen: GenSection::default(),
            embed: EmbedSection::default(),
            output: None,
        }
    }

    /// Resolves a user config: the file's fields are merged over the preset
    /// of its experiment and scale. `experiment` and `scale` override the
    /// file when given.
    pub fn resolve(user: Option<Value>, experiment: Option<Experiment>, scale: Option<Scale>) -> Result<Self> {
        let user = user.unwrap_or_else(|| Value::Object(Default::default()));
        let Value::Object(map) = &user else {
            return Err(Error::Config("config must be a JSON object".into()));
        };
        if let Some(v) = map.get("schema_version") {
            if v.as_u64() != Some(SCHEMA_VERSION as u64) {
                return Err(Error::Config(format!("unsupported schema_version {v} (this build reads {SCHEMA_VERSION})")));
            }
        }
        let from_file = |key: &str| map.get(key).and_then(Value::as_str).map(str::to_string);
        let experiment = match (experiment, from_file("experiment")) {
            (Some(e), _) => e,
            (None, Some(name)) => name.parse()?,
            (None, None) => return Err(Error::Config("no experiment named".into())),
        };
        let scale = match (scale, from_file("scale")) {
            (Some(s), _) => s,
            (None, Some(name)) => name.parse()?,
            (None, None) => Scale::Desk,
        };
        let mut merged = serde_json::to_value(Self::preset(experiment, scale))?;
        merge(&mut merged, user);
        merged["experiment"] = Value::String(experiment.name().into());
        merged["scale"] = serde_json::to_value(scale)?;
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and resolves a config file.
    pub fn load(path: &Path, experiment: Option<Experiment>, scale: Option<Scale>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let value: Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::resolve(Some(value), experiment, scale)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| match e {
            Error::Parameter(msg) => Error::Config(msg),
            other => other,
        };
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported schema_version {}", self.schema_version)));
        }
        match self.experiment {
            Experiment::FhnControl | Experiment::NodeSweep => {
                self.control.fhn.validate().map_err(wrap)?;
                let c = &self.control.controller;
                if c.pulse_width == 0 {
                    return Err(Error::Config("controller.pulse_width must be at least 1".into()));
                }
                if let (Some(t), Some(r)) = (c.target_isi, c.refractory) {
                    if t <= r as f64 {
                        return Err(Error::Config(format!("target_isi {t} must exceed refractory {r}")));
                    }
                }
                if self.experiment == Experiment::NodeSweep && self.control.nodes.is_empty() {
                    return Err(Error::Config("control.nodes is empty".into()));
                }
            }
            Experiment::Gen => {
                if self.gen.n == 0 {
                    return Err(Error::Config("gen.n must be at least 1".into()));
                }
            }
            Experiment::Embed => {
                if self.embed.m_max == 0 {
                    return Err(Error::Config("embed.m_max must be at least 1".into()));
                }
            }
            _ => self.bench.validate().map_err(wrap)?,
        }
        Ok(())
    }

    /// SHA-256 of the canonical (key-sorted, compact) JSON form of the
    /// config with `output` removed, so neither field order in the source
    /// file nor the destination affects it.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serialises");
        if let Value::Object(map) = &mut v {
            map.remove("output");
        }
        hex::encode(Sha256::digest(canonical_json(&v).as_bytes()))
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.bench.base_seed = seed;
    }

    pub fn set_workers(&mut self, workers: usize) {
        self.bench.workers = workers;
    }

    fn tau_scan_config(&self) -> TauScanConfig {
        let s = &self.tau_scan;
        TauScanConfig { bench: self.bench.clone(), taus: s.taus.clone(), delta: s.delta, m: s.m, max_lag: s.max_lag }
    }

    fn mu_scan_config(&self, mus: Vec<f64>) -> MuScanConfig {
        let s = &self.mu_scan;
        MuScanConfig {
            bench: self.bench.clone(),
            mus,
            filter: s.filter,
            embedding: s.embedding,
            max_lag: s.max_lag,
            eps_mode: s.eps_mode,
            projection: s.projection,
            unfiltered: s.unfiltered,
        }
    }

    fn delay_scan_config(&self) -> DelayScanConfig {
        let s = &self.hybrid;
        DelayScanConfig {
            bench: self.bench.clone(),
            taus: s.taus.clone(),
            embedding: s.embedding,
            max_lag: s.max_lag,
            eps_mode: s.eps_mode,
        }
    }

    fn node_sweep_config(&self) -> NodeSweepConfig {
        let c = &self.control;
        NodeSweepConfig {
            fhn: c.fhn,
            controller: c.controller,
            lengths: c.lengths,
            nodes: c.nodes.clone(),
            architectures: c.architectures.clone(),
            reservoir: c.reservoir,
            mu_rrnn: c.mu_rrnn,
            mu_trrnn: c.mu_trrnn,
            tau_t: c.tau_t,
            sync: c.sync,
            pinv_cutoff: c.pinv_cutoff,
            base_seed: self.bench.base_seed,
            workers: self.bench.workers,
        }
    }
}

/// Recursively overlays `patch` onto `base`; objects merge, everything else replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Compact JSON with object keys in byte order at every level.
pub fn canonical_json(v: &Value) -> String {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let body: Vec<String> = keys
                .into_iter()
                .map(|k| format!("{}:{}", Value::String(k.clone()), canonical_json(&map[k])))
                .collect();
            format!("{{{}}}", body.join(","))
        }
        Value::Array(items) => format!("[{}]", items.iter().map(canonical_json).collect::<Vec<_>>().join(",")),
        other => other.to_string(),
    }
}

/// Headline numbers of a finished experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: Experiment,
    /// Result files written, relative to the output directory.
    pub files: Vec<String>,
    /// Percentage of divergent runs across the experiment, where runs exist.
    pub divergence_pct: Option<f64>,
    /// Experiment-specific metrics.
    pub metrics: Value,
}

impl RunSummary {
    pub fn divergence_dominated(&self) -> bool {
        self.divergence_pct.is_some_and(|p| p > DIVERGENCE_DOMINATED_PCT)
    }
}

/// Provenance of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub software_version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub summary: RunSummary,
}

/// File holding the [`RunRecord`]; the only output that is not byte-reproducible.
pub const RECORD_FILE: &str = "record.json";

fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

/// Runs the configured experiment, writing `config.json`, its result files
/// and `record.json` into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<RunRecord> {
    cfg.validate()?;
    let started = now_ms();
    std::fs::create_dir_all(out)?;
    write_json_atomic(&out.join("config.json"), cfg)?;
    let mut w = Writer { out, files: vec!["config.json".into()] };
    log::info!("running {} ({:?} scale) into {}", cfg.experiment, cfg.scale, out.display());
    let (divergence_pct, metrics) = match cfg.experiment {
        Experiment::Predict => run_predict(cfg, &mut w)?,
        Experiment::ScanTau => run_scan_tau(cfg, &mut w)?,
        Experiment::ScanMu => run_scan_mu(cfg, cfg.mu_scan.mus.clone(), "mu_scan.csv", &mut w)?,
        Experiment::Bounds => run_scan_mu(cfg, vec![cfg.bench.reservoir.mu], "bounds.csv", &mut w)?,
        Experiment::Trrnn => run_trrnn(cfg, &mut w)?,
        Experiment::ScanDelay => run_scan_delay(cfg, &mut w)?,
        Experiment::FhnControl => run_fhn_control(cfg, &mut w)?,
        Experiment::NodeSweep => run_node_sweep(cfg, &mut w)?,
        Experiment::Cca => run_cca(cfg, &mut w)?,
        Experiment::Gen => run_gen(cfg, &mut w)?,
        Experiment::Embed => run_embed(cfg, &mut w)?,
    };
    let summary = RunSummary { experiment: cfg.experiment, files: w.files, divergence_pct, metrics };
    write_json_atomic(&out.join("summary.json"), &summary)?;
    let mut summary = summary;
    summary.files.push("summary.json".into());
    let record = RunRecord {
        config_hash: cfg.hash(),
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        summary,
    };
    write_json_atomic(&out.join(RECORD_FILE), &record)?;
    Ok(record)
}

struct Writer<'a> {
    out: &'a Path,
    files: Vec<String>,
}

impl Writer<'_> {
    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        write_csv_atomic(&self.out.join(name), rows)?;
        self.files.push(name.into());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        write_json_atomic(&self.out.join(name), value)?;
        self.files.push(name.into());
        Ok(())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.into());
        self.out.join(name)
    }
}

type Outcome = (Option<f64>, Value);

fn run_predict(cfg: &ExperimentConfig, w: &mut Writer<'_>) -> Result<Outcome> {
    let (rows, summary) = ensemble_benchmark(&cfg.bench)?;
    w.csv("runs.csv", &rows)?;
    Ok((Some(summary.divergence_pct), serde_json::to_value(summary)?))
}

fn run_trrnn(cfg: &ExperimentConfig, w: &mut Writer<'_>) -> Result<Outcome> {
    let spec = FeatureSpec::Delayed { tau_t: cfg.hybrid.tau_t };
    let (rows, summary) = ensemble_with_features(&cfg.bench, &spec)?;
    w.csv("runs.csv", &rows)?;
    Ok((Some(summary.divergence_pct), serde_json::to_value(summary)?))
}

fn run_scan_tau(cfg: &ExperimentConfig, w: &mut Writer<'_>) -> Result<Outcome> {
    let result = tau_scan(&cfg.tau_scan_config())?;
    w.csv("tau_scan.csv", &result.rows)?;
    let pct = mean_pct(result.rows.iter().map(|r| r.divergence_pct));
    Ok((pct, serde_json::json!({ "baseline": result.baseline })))
}

fn run_scan_mu(cfg: &ExperimentConfig, mus: Vec<f64>, file: &str, w: &mut Writer<'_>) -> Result<Outcome> {
    let rows = mu_scan(&cfg.mu_scan_config(mus))?;
    w.csv(file, &rows)?;
    let pct = mean_pct(rows.iter().map(|r| r.divergence_pct));
    let best = rows.iter().filter(|r| r.mean_nmse.is_finite()).min_by(|a, b| a.mean_nmse.total_cmp(&b.mean_nmse));
    Ok((pct, serde_json::json!({ "best_mu": best.map(|r| r.mu), "best_nmse": best.map(|r| r.mean_nmse) })))
}

fn run_scan_delay(cfg: &ExperimentConfig, w: &mut Writer<'_>) -> Result<Outcome> {
    let rows = delay_scan(&cfg.delay_scan_config())?;
    w.csv("delay_scan.csv", &rows)?;
    let pct = mean_pct(rows.iter().map(|r| r.divergence_pct));
    let best = rows.iter().min_by(|a, b| a.mean_nmse.total_cmp(&b.mean_nmse));
    Ok((pct, serde_json::json!({ "best_tau_T": best.map(|r| r.tau_t), "best_nmse": best.map(|r| r.mean_nmse) })))
}

#[derive(Serialize)]
struct IsiRow {
    spike_index: usize,
    isi: Option<usize>,
}

fn run_fhn_control(cfg: &ExperimentConfig, w: &mut Writer<'_>) -> Result<Outcome> {
    let c = &cfg.control;
    let architecture = match c.predictor {
        PredictorKind::Trrnn => Architecture::Trrnn,
        _ => Architecture::Rrnn,
    };
    let mu = cfg.node_sweep_config().mu_for(architecture);
    let predictor = match c.predictor {
        PredictorKind::Oracle => PredictorSpec::Oracle,
        _ => PredictorSpec::Network {
            reservoir: ReservoirParams { m: c.m, mu, ..c.reservoir },
            architecture,
            tau_t: c.tau_t,
            sync: c.sync,
            seed: derive(cfg.bench.base_seed, Role::Network, 0),
            pinv_cutoff: c.pinv_cutoff,
        },
    };
    let neuron_seed = derive(cfg.bench.base_seed, Role::Neuron, 0);
    let report = run_controlled(&c.fhn, &predictor, &c.controller, &c.lengths, neuron_seed)?;
    let train = &report.controlled_isi;
    let rows: Vec<IsiRow> = train
        .spike_indices
        .iter()
        .enumerate()
        .map(|(k, &spike_index)| IsiRow { spike_index, isi: train.isi.get(k).copied() })
        .collect();
    w.csv("isi.csv", &rows)?;
    let mut brief = serde_json::to_value(&report)?;
    if let Value::Object(map) = &mut brief {
        map.remove("controlled_isi");
    }
    w.json("report.json", &brief)?;
    Ok((Some(if report.divergent { 100.0 } else { 0.0 }), brief))
}

fn run_node_sweep(cfg: &ExperimentConfig, w: &mut Writer<'_>) -> Result<Outcome> {
    let rows = node_sweep(&cfg.node_sweep_config())?;
    w.csv("node_sweep.csv", &rows)?;
    let divergent = rows.iter().filter(|r| r.divergent).count();
    let pct = 100.0 * divergent as f64 / rows.len().max(1) as f64;
    let t = smallest_stabilizing(&rows, Architecture::Trrnn);
    let r = smallest_stabilizing(&rows, Architecture::Rrnn);
    Ok((Some(pct), serde_json::json!({ "smallest_stabilizing_trrnn": t, "smallest_stabilizing_rrnn": r })))
}

#[derive(Serialize)]
struct CcaRow {
    run_id: usize,
    node: usize,
    best_lag: i64,
    cc_max: f64,
    constant: bool,
}

fn run_cca(cfg: &ExperimentConfig, w: &mut Writer<'_>) -> Result<Outcome> {
    let profiles = cca_ensemble(&cfg.bench, cfg.mu_scan.max_lag)?;
    let rows: Vec<CcaRow> = profiles
        .iter()
        .enumerate()
        .flat_map(|(run_id, p)| {
            (0..p.len()).map(move |node| CcaRow {
                run_id,
                node,
                best_lag: p.best_lag[node],
                cc_max: p.cc_max[node],
                constant: p.constant[node],
            })
        })
        .collect();
    w.csv("cca.csv", &rows)?;
    let (lo, hi) = lag_spread(&profiles);
    Ok((None, serde_json::json!({ "l_min": lo, "l_max": hi, "runs": profiles.len() })))
}

fn run_gen(cfg: &ExperimentConfig, w: &mut Writer<'_>) -> Result<Outcome> {
    let seed = derive(cfg.bench.base_seed, Role::Sequence, 0);
    match cfg.gen.signal {
        GenSignal::MackeyGlass => {
            let s = gen_mackey_glass(&cfg.bench.signal, cfg.gen.n, cfg.bench.history, seed)?;
            write_series(&w.path("series.csv"), &s, Some(seed), serde_json::to_value(cfg.bench.signal)?)?;
            w.files.push("series.csv.json".into());
        }
        GenSignal::Fhn => {
            let (v, wv) = gen_fhn(&cfg.control.fhn, cfg.gen.n, FhnState::default(), seed)?;
            let params = serde_json::to_value(cfg.control.fhn)?;
            write_series(&w.path("v.csv"), &v, Some(seed), params.clone())?;
            write_series(&w.path("w.csv"), &wv, Some(seed), params)?;
            w.files.extend(["v.csv.json".into(), "w.csv.json".into()]);
        }
    }
    Ok((None, serde_json::json!({ "seed": seed, "n": cfg.gen.n })))
}

#[derive(Serialize)]
struct AcfRow {
    lag: usize,
    acf: f64,
}

#[derive(Serialize)]
struct FnnRow {
    #[serde(rename = "M")]
    m: usize,
    false_fraction: f64,
}

fn run_embed(cfg: &ExperimentConfig, w: &mut Writer<'_>) -> Result<Outcome> {
    let e = &cfg.embed;
    let series = match &e.input {
        Some(path) => read_series_csv(path)?.0,
        None => {
            let seed = derive(cfg.bench.base_seed, Role::Sequence, 0);
            gen_mackey_glass(&cfg.bench.signal, e.n, cfg.bench.history, seed)?
        }
    };
    let rho = acf(&series, e.max_lag)?;
    let tau0 = select_tau0(&rho, e.rule)?;
    let mut metrics = serde_json::json!({ "tau0": tau0 });
    if matches!(e.mode, EmbedMode::All | EmbedMode::Acf) {
        let rows: Vec<AcfRow> = rho.iter().enumerate().map(|(lag, &acf)| AcfRow { lag, acf }).collect();
        w.csv("acf.csv", &rows)?;
    }
    let mut m_min = None;
    if matches!(e.mode, EmbedMode::All | EmbedMode::Fnn) || (e.mode == EmbedMode::Embed && e.spec.is_none()) {
        let fnn = false_nearest_neighbors(&series, tau0, e.m_max, &e.fnn)?;
        m_min = fnn.m_min;
        metrics["M_min"] = serde_json::to_value(fnn.m_min)?;
        if e.mode != EmbedMode::Embed {
            let rows: Vec<FnnRow> =
                fnn.fractions.iter().map(|&(m, false_fraction)| FnnRow { m, false_fraction }).collect();
            w.csv("fnn.csv", &rows)?;
        }
    }
    if e.mode == EmbedMode::Embed {
        let spec = match e.spec {
            Some(s) => s,
            None => EmbeddingSpec::new(tau0, m_min.ok_or_else(|| Error::NotFound("no M_min for the delay matrix".into()))?)?,
        };
        let dm = delay_embed(&series, spec)?;
        let mut out = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["time_index".to_string()];
        header.extend((0..dm.cols()).map(|c| format!("y{c}")));
        out.write_record(&header)?;
        for r in 0..dm.rows() {
            let mut rec = vec![dm.time_index(r).to_string()];
            rec.extend(dm.row(r).iter().map(|v| format!("{v:?}")));
            out.write_record(&rec)?;
        }
        let bytes = out.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        crate::persist::write_atomic(&w.path("delay_matrix.csv"), &bytes)?;
        metrics["embedding"] = serde_json::to_value(spec)?;
    }
    Ok((None, metrics))
}

fn mean_pct(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| crate::stats::mean(&v))
}

/// Default worker count: `TAKRES_WORKERS` if set, else 0 (all cores).
pub fn default_workers() -> usize {
    std::env::var("TAKRES_WORKERS").ok().and_then(|s| s.parse().ok()).unwrap_or(0)
}
