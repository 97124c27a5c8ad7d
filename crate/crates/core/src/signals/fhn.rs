use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TimeSeries;
use crate::{Error, Result};

/// How the white-noise increment enters the voltage equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseScaling {
    /// Noise sits inside the ε-scaled equation and is divided by ε.
    #[default]
    InverseEpsilon,
    /// Noise is added to `dv` without the 1/ε factor.
    Unit,
}

/// FitzHugh-Nagumo neuron
/// `ε dv = [v(v−g)(1−v) − w + I] dt + σ dW`, `dw = (v − D w − H) dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FhnParams {
    pub epsilon: f64,
    pub g: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "I")]
    pub i: f64,
    pub noise_sigma: f64,
    pub dt: f64,
    pub noise_scaling: NoiseScaling,
    /// Integration aborts once `|v|` exceeds this bound.
    pub divergence_bound: f64,
}

impl Default for FhnParams {
    fn default() -> Self {
        Self {
            epsilon: 0.005,
            g: 0.5,
            d: 1.0,
            h: 0.15,
            i: 0.3,
            noise_sigma: 0.02,
            dt: 0.001,
            noise_scaling: NoiseScaling::InverseEpsilon,
            divergence_bound: 1e3,
        }
    }
}

impl FhnParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Parameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Parameter(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Parameter(format!("noise_sigma must be non-negative, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FhnState {
    pub v: f64,
    pub w: f64,
}

impl Default for FhnState {
    fn default() -> Self {
        FhnState { v: 0.0, w: 0.0 }
    }
}

/// Euler-Maruyama stepper with its own seeded noise stream.
///
/// The noise stream is consumed once per step whatever the external drive,
/// so a controlled and an uncontrolled run with the same seed see identical noise.
#[derive(Debug, Clone)]
pub struct FhnIntegrator {
    params: FhnParams,
    state: FhnState,
    rng: ChaCha8Rng,
    steps: usize,
    last_increment: f64,
}

impl FhnIntegrator {
    pub fn new(params: FhnParams, initial: FhnState, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, state: initial, rng: ChaCha8Rng::seed_from_u64(seed), steps: 0, last_increment: 0.0 })
    }

    pub fn state(&self) -> FhnState {
        self.state
    }

    pub fn params(&self) -> &FhnParams {
        &self.params
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    /// Raw Wiener increment `σ √dt ξ` of the last step, before any 1/ε scaling.
    pub fn last_increment(&self) -> f64 {
        self.last_increment
    }

    /// Advances one step with `extra_drive` added to the tonic current `I`.
    pub fn step(&mut self, extra_drive: f64) -> Result<FhnState> {
        let p = &self.params;
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let increment = p.noise_sigma * p.dt.sqrt() * z;
        let FhnState { v, w } = self.state;
        let drift_v = v * (v - p.g) * (1.0 - v) - w + p.i + extra_drive;
        let noise = match p.noise_scaling {
            NoiseScaling::InverseEpsilon => increment / p.epsilon,
            NoiseScaling::Unit => increment,
        };
        let v_next = v + p.dt / p.epsilon * drift_v + noise;
        let w_next = w + p.dt * (v - p.d * w - p.h);
        if !v_next.is_finite() || v_next.abs() > p.divergence_bound || !w_next.is_finite() {
            return Err(Error::Generation {
                step: self.steps,
                reason: format!("voltage left the bound ±{} (v = {v_next})", p.divergence_bound),
            });
        }
        self.state = FhnState { v: v_next, w: w_next };
        self.steps += 1;
        self.last_increment = increment;
        Ok(self.state)
    }
}

/// Integrates `n_steps` steps and returns the voltage and recovery traces.
pub fn gen_fhn(params: &FhnParams, n_steps: usize, initial: FhnState, seed: u64) -> Result<(TimeSeries, TimeSeries)> {
    if n_steps == 0 {
        return Err(Error::Parameter("n_steps must be at least 1".into()));
    }
    let mut integ = FhnIntegrator::new(*params, initial, seed)?;
    let mut v = Vec::with_capacity(n_steps);
    let mut w = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let s = integ.step(0.0)?;
        v.push(s.v);
        w.push(s.w);
    }
    Ok((TimeSeries::new(v, params.dt)?, TimeSeries::new(w, params.dt)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rest state for `I = 0`: bisection on the cubic nullcline intersection.
    fn rest_state(p: &FhnParams) -> FhnState {
        let f = |v: f64| v * (v - p.g) * (1.0 - v) - (v - p.h) / p.d + p.i;
        let (mut lo, mut hi) = (-0.5, 0.2);
        assert!(f(lo) * f(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let v = 0.5 * (lo + hi);
        FhnState { v, w: (v - p.h) / p.d }
    }

    #[test]
    fn rest_equilibrium_is_stationary() {
        let p = FhnParams { i: 0.0, noise_sigma: 0.0, ..FhnParams::default() };
        let rest = rest_state(&p);
        let (v, w) = gen_fhn(&p, 20_000, rest, 0).unwrap();
        for (a, b) in v.values().iter().zip(w.values()) {
            assert!((a - rest.v).abs() < 1e-9 && (b - rest.w).abs() < 1e-9);
        }
    }

    #[test]
    fn same_seed_bit_identical_and_seeds_differ() {
        let p = FhnParams::default();
        let a = gen_fhn(&p, 5000, FhnState::default(), 11).unwrap();
        let b = gen_fhn(&p, 5000, FhnState::default(), 11).unwrap();
        let c = gen_fhn(&p, 5000, FhnState::default(), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn halving_dt_scales_increments_by_inverse_sqrt_two() {
        let p = FhnParams::default();
        let half = FhnParams { dt: p.dt / 2.0, ..p };
        let mut a = FhnIntegrator::new(p, FhnState::default(), 3).unwrap();
        let mut b = FhnIntegrator::new(half, FhnState::default(), 3).unwrap();
        for _ in 0..1000 {
            a.step(0.0).unwrap();
            b.step(0.0).unwrap();
            let ratio = b.last_increment() / a.last_increment();
            assert!((ratio - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let p = FhnParams { i: 1e6, noise_sigma: 0.0, ..FhnParams::default() };
        assert!(matches!(gen_fhn(&p, 100, FhnState::default(), 0), Err(Error::Generation { .. })));
    }

    #[test]
    fn unit_scaling_is_quieter() {
        let scaled = FhnParams { i: 0.0, ..FhnParams::default() };
        let unit = FhnParams { noise_scaling: NoiseScaling::Unit, ..scaled };
        let rest = rest_state(&scaled);
        let (a, _) = gen_fhn(&scaled, 2000, rest, 5).unwrap();
        let (b, _) = gen_fhn(&unit, 2000, rest, 5).unwrap();
        let spread = |s: &TimeSeries| crate::stats::std_dev(s.values());
        assert!(spread(&a) > 10.0 * spread(&b));
    }
}
