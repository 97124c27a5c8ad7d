use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::{Error, Result};

/// Parameters of the discrete-time Mackey-Glass map
/// `y[n+1] = y[n] + δ (ϑ y[n−d] / (1 + y[n−d]^ν) − ψ y[n])`, `d = τ_m / δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MgParams {
    pub theta: f64,
    pub nu: f64,
    pub psi: f64,
    pub tau_m: f64,
    pub delta: f64,
    /// Only every `subsample`-th iterate is emitted.
    pub subsample: usize,
    /// Decimated samples discarded before emission.
    pub transient: usize,
}

impl Default for MgParams {
    fn default() -> Self {
        Self { theta: 0.2, nu: 10.0, psi: 0.1, tau_m: 17.0, delta: 0.1, subsample: 10, transient: 1000 }
    }
}

impl MgParams {
    /// History length `τ_m / δ`, which must be a positive integer.
    pub fn delay_steps(&self) -> Result<usize> {
        if !(self.delta > 0.0) {
            return Err(Error::Parameter(format!("delta must be positive, got {}", self.delta)));
        }
        if self.subsample == 0 {
            return Err(Error::Parameter("subsample must be at least 1".into()));
        }
        let ratio = self.tau_m / self.delta;
        let rounded = ratio.round();
        if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 * ratio.abs().max(1.0) {
            return Err(Error::Parameter(format!(
                "tau_m/delta = {ratio} is not a positive integer"
            )));
        }
        Ok(rounded as usize)
    }

    pub fn sample_interval(&self) -> f64 {
        self.delta * self.subsample as f64
    }
}

/// Initial history of the delay buffer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum History {
    Constant(f64),
    /// Seeded uniform values on `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
}

impl Default for History {
    fn default() -> Self {
        History::Uniform { lo: 0.1, hi: 1.3 }
    }
}

/// Iterates the map and returns `n_out` decimated samples.
///
/// The delay buffer holds `τ_m/δ + 1` values; the emitted series starts with
/// the `subsample`-th iterate after the transient.
pub fn gen_mackey_glass(params: &MgParams, n_out: usize, history: History, seed: u64) -> Result<TimeSeries> {
    let delay = params.delay_steps()?;
    if n_out == 0 {
        return Err(Error::Parameter("n_out must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // ring buffer of the last delay+1 iterates; `head` points at y[n-delay]
    let mut buf: Vec<f64> = match history {
        History::Constant(c) => vec![c; delay + 1],
        History::Uniform { lo, hi } => {
            if !(hi > lo) {
                return Err(Error::Parameter(format!("empty history range [{lo}, {hi})")));
            }
            (0..=delay).map(|_| rng.random_range(lo..hi)).collect()
        }
    };
    let mut head = 0usize;
    let mut current = buf[delay];
    let total = (n_out + params.transient) * params.subsample;
    let mut out = Vec::with_capacity(n_out);
    for step in 0..total {
        let lagged = buf[head];
        let next = current
            + params.delta * (params.theta * lagged / (1.0 + lagged.powf(params.nu)) - params.psi * current);
        if !next.is_finite() || next.abs() > 1e12 {
            return Err(Error::Generation { step, reason: format!("iterate became {next}") });
        }
        buf[head] = next;
        head = (head + 1) % (delay + 1);
        current = next;
        if (step + 1) % params.subsample == 0 {
            let k = (step + 1) / params.subsample - 1;
            if k >= params.transient {
                out.push(next);
            }
        }
    }
    TimeSeries::with_origin(out, params.sample_interval(), params.transient as i64)
}
