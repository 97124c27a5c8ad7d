//! The random recurrent network: construction, teacher-forced driving,
//! pseudo-inverse readout training and free-running prediction.
//!
//! Update rule: `x_{n+1} = f(μ W x_n + α W_in y_{n+1} + b W_off)`.

mod ensemble;
mod metrics;
mod readout;

pub use ensemble::{
    drive_sequences, ensemble_benchmark, ensemble_with_features, map_networks, prepare_sequences, run_trial,
    summarize, BenchmarkConfig, DrivenSequence, EnsembleSummary, RunOutcome, RunRow, Sequence,
};
pub use metrics::{nmse, nmse_with, NmseNorm, DIVERGENCE_CAP};
pub use readout::{
    fit_readout, predict_closed_loop, predict_closed_loop_with_history, train_readout, FeatureSpec, Prediction,
    ReadoutModel,
};

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Node nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    /// `1 / (1 + e^{-z})`, range (0, 1).
    Logistic,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Logistic => 1.0 / (1.0 + (-z).exp()),
        }
    }
}

/// Hyper-parameters of a network; the weights come from the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReservoirParams {
    pub m: usize,
    pub mu: f64,
    pub alpha: f64,
    pub b: f64,
    pub activation: Activation,
}

impl Default for ReservoirParams {
    fn default() -> Self {
        Self { m: 1000, mu: 1.1, alpha: 0.8, b: 0.2, activation: Activation::Tanh }
    }
}

impl ReservoirParams {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Parameter("network needs at least one node".into()));
        }
        for (name, v) in [("mu", self.mu), ("alpha", self.alpha), ("b", self.b)] {
            if !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// A fully connected random network with fixed weights.
#[derive(Debug, Clone)]
pub struct Reservoir {
    params: ReservoirParams,
    w: Mat<f64>,
    w_in: Vec<f64>,
    w_off: Vec<f64>,
    seed: u64,
    raw_radius: f64,
}

impl Reservoir {
    /// Draws `W`, then `W_in`, then `W_off` (all uniform on [−1, 1], `W` in
    /// column-major order) from a ChaCha8 stream, and divides `W` by its
    /// spectral radius.
    pub fn build(params: ReservoirParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let m = params.m;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Mat::<f64>::zeros(m, m);
        for j in 0..m {
            for i in 0..m {
                w[(i, j)] = rng.random_range(-1.0..=1.0);
            }
        }
        let w_in: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let w_off: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let raw_radius = crate::linalg::spectral_radius(w.as_ref())?;
        if !(raw_radius > 0.0 && raw_radius.is_finite()) {
            return Err(Error::Linalg(format!("cannot normalize by spectral radius {raw_radius}")));
        }
        if m == 1 {
            w[(0, 0)] = w[(0, 0)].signum();
        } else {
            w = w * faer::Scale(1.0 / raw_radius);
        }
        Ok(Self { params, w, w_in, w_off, seed, raw_radius })
    }

    /// Same weights, different hyper-parameters that act at run time (μ, α, b, f).
    pub fn with_runtime(&self, mu: f64, alpha: f64, b: f64) -> Self {
        let mut out = self.clone();
        out.params.mu = mu;
        out.params.alpha = alpha;
        out.params.b = b;
        out
    }

    pub fn params(&self) -> &ReservoirParams {
        &self.params
    }

    pub fn m(&self) -> usize {
        self.params.m
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn w(&self) -> MatRef<'_, f64> {
        self.w.as_ref()
    }

    pub fn w_in(&self) -> &[f64] {
        &self.w_in
    }

    pub fn w_off(&self) -> &[f64] {
        &self.w_off
    }

    /// Spectral radius of the weight draw before normalization.
    pub fn raw_radius(&self) -> f64 {
        self.raw_radius
    }

    /// Advances `k` independent states (columns of `x`) by one step with
    /// inputs `u[j]`. All single- and multi-sequence paths go through here.
    pub fn step_batch(&self, x: MatRef<'_, f64>, u: &[f64]) -> Mat<f64> {
        let m = self.m();
        let k = x.ncols();
        debug_assert_eq!(u.len(), k);
        let mut z = Mat::<f64>::zeros(m, k);
        matmul(z.as_mut(), Accum::Replace, self.w.as_ref(), x, self.params.mu, Par::Seq);
        let p = &self.params;
        for j in 0..k {
            let uj = p.alpha * u[j];
            let col = z.col_mut(j).try_as_col_major_mut().expect("fresh matrix is contiguous").as_slice_mut();
            for ((zi, wi), oi) in col.iter_mut().zip(&self.w_in).zip(&self.w_off) {
                *zi = p.activation.apply(*zi + uj * wi + p.b * oi);
            }
        }
        z
    }

    /// Single-state step.
    pub fn step(&self, x: &[f64], u: f64) -> Vec<f64> {
        let xm = MatRef::from_column_major_slice(x, x.len(), 1);
        let next = self.step_batch(xm, &[u]);
        next.col(0).iter().copied().collect()
    }
}

/// Node responses, one row per time step (`T × m`).
#[derive(Debug, Clone)]
pub struct StateMatrix {
    states: Mat<f64>,
    first_index: usize,
    washout: usize,
    final_state: Vec<f64>,
}

impl StateMatrix {
    pub fn rows(&self) -> usize {
        self.states.nrows()
    }

    pub fn m(&self) -> usize {
        self.states.ncols()
    }

    pub fn as_mat(&self) -> MatRef<'_, f64> {
        self.states.as_ref()
    }

    /// Input index whose state occupies row 0.
    pub fn first_index(&self) -> usize {
        self.first_index
    }

    pub fn washout(&self) -> usize {
        self.washout
    }

    /// State after the last input; closed-loop prediction continues from here.
    pub fn final_state(&self) -> &[f64] {
        &self.final_state
    }

    /// Response of node `i` over time (contiguous).
    pub fn node(&self, i: usize) -> &[f64] {
        self.states.col(i).try_as_col_major().expect("owned matrix is contiguous").as_slice()
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.states.row(r).iter().copied().collect()
    }

    /// Rows whose input index is at least `index`.
    pub fn from_index(&self, index: usize) -> MatRef<'_, f64> {
        let skip = index.saturating_sub(self.first_index).min(self.rows());
        self.states.as_ref().subrows(skip, self.rows() - skip)
    }
}

/// Teacher-forces the network with `input` from `x0` (zero when `None`).
///
/// Row `r` of the result is the state produced by input `washout + r`; the
/// leading `washout` states are discarded.
pub fn drive(res: &Reservoir, input: &[f64], x0: Option<&[f64]>, washout: usize) -> Result<StateMatrix> {
    let mut out = drive_batch(res, &[input], x0, washout)?;
    Ok(out.pop().expect("one sequence in, one out"))
}

/// [`drive`] for several equally long sequences at once. Each column matches
/// the single-sequence result to rounding and is itself fully deterministic.
pub fn drive_batch(res: &Reservoir, inputs: &[&[f64]], x0: Option<&[f64]>, washout: usize) -> Result<Vec<StateMatrix>> {
    drive_batch_keep(res, inputs, x0, washout, washout)
}

/// Like [`drive_batch`] but retains states from input `keep_from ≤ washout`
/// onwards, so delayed readouts find their partners for the first trained row.
pub fn drive_batch_keep(
    res: &Reservoir,
    inputs: &[&[f64]],
    x0: Option<&[f64]>,
    keep_from: usize,
    washout: usize,
) -> Result<Vec<StateMatrix>> {
    let m = res.m();
    if keep_from > washout {
        return Err(Error::Parameter(format!("keep_from {keep_from} exceeds washout {washout}")));
    }
    let Some(len) = inputs.first().map(|s| s.len()) else {
        return Ok(Vec::new());
    };
    if inputs.iter().any(|s| s.len() != len) {
        return Err(Error::Parameter("batched inputs must share a length".into()));
    }
    if washout >= len {
        return Err(Error::Parameter(format!("washout {washout} must be shorter than the input ({len})")));
    }
    if let Some(x0) = x0 {
        if x0.len() != m {
            return Err(Error::Parameter(format!("initial state has {} entries, network has {m}", x0.len())));
        }
    }
    let k = inputs.len();
    let mut x = Mat::<f64>::from_fn(m, k, |i, _| x0.map_or(0.0, |x0| x0[i]));
    let mut states: Vec<Mat<f64>> = (0..k).map(|_| Mat::zeros(len - keep_from, m)).collect();
    let mut u = vec![0.0; k];
    for t in 0..len {
        for (j, s) in inputs.iter().enumerate() {
            u[j] = s[t];
        }
        x = res.step_batch(x.as_ref(), &u);
        if t >= keep_from {
            for (j, st) in states.iter_mut().enumerate() {
                for i in 0..m {
                    st[(t - keep_from, i)] = x[(i, j)];
                }
            }
        }
    }
    Ok(states
        .into_iter()
        .enumerate()
        .map(|(j, s)| StateMatrix {
            states: s,
            first_index: keep_from,
            washout,
            final_state: x.col(j).iter().copied().collect(),
        })
        .collect())
}
