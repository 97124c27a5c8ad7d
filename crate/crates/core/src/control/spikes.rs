use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Spike times and the intervals between them, in samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SpikeTrain {
    pub spike_indices: Vec<usize>,
    pub isi: Vec<usize>,
}

impl SpikeTrain {
    pub fn from_indices(spike_indices: Vec<usize>) -> Self {
        let isi = spike_indices.windows(2).map(|w| w[1] - w[0]).collect();
        Self { spike_indices, isi }
    }

    pub fn isi_f64(&self) -> Vec<f64> {
        self.isi.iter().map(|&v| v as f64).collect()
    }

    /// Intervals whose closing spike falls at or after `index`.
    pub fn isi_after(&self, index: usize) -> Vec<f64> {
        self.spike_indices
            .windows(2)
            .filter(|w| w[1] >= index)
            .map(|w| (w[1] - w[0]) as f64)
            .collect()
    }
}

/// Online upward-crossing detector with a refractory period.
#[derive(Debug, Clone)]
pub struct SpikeDetector {
    threshold: f64,
    refractory: usize,
    prev: Option<f64>,
    last: Option<usize>,
}

impl SpikeDetector {
    pub fn new(threshold: f64, refractory: usize) -> Self {
        Self { threshold, refractory, prev: None, last: None }
    }

    /// Feeds sample `index`; returns true when it starts a spike.
    pub fn push(&mut self, index: usize, v: f64) -> bool {
        let crossed = matches!(self.prev, Some(p) if p < self.threshold) && v >= self.threshold;
        self.prev = Some(v);
        if crossed && self.last.is_none_or(|l| index - l >= self.refractory) {
            self.last = Some(index);
            true
        } else {
            false
        }
    }

    pub fn last_spike(&self) -> Option<usize> {
        self.last
    }
}

/// Spikes at upward crossings of `v_threshold` at least `refractory` samples apart.
pub fn detect_spikes(v: &[f64], v_threshold: f64, refractory: usize) -> SpikeTrain {
    let mut det = SpikeDetector::new(v_threshold, refractory);
    let idx = v.iter().enumerate().filter_map(|(i, &x)| det.push(i, x).then_some(i)).collect();
    SpikeTrain::from_indices(idx)
}

/// Least-squares line through the ISI return map `I_{n+1} = a I_n + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReturnMap {
    /// `I* = c / (1 − a)`.
    pub fixed_point: f64,
    /// Slope `a` (the local eigenvalue λ_u).
    pub slope: f64,
    pub intercept: f64,
    pub pairs: usize,
}

/// Fits the return map over the first `fit_window` intervals (all when 0).
pub fn fit_return_map(isi: &[f64], fit_window: usize) -> Result<ReturnMap> {
    let window = if fit_window == 0 { isi.len() } else { fit_window.min(isi.len()) };
    if window < 10 {
        return Err(Error::Parameter(format!("return-map fit needs at least 10 intervals, got {window}")));
    }
    let s = &isi[..window];
    let x = &s[..window - 1];
    let y = &s[1..];
    let mx = crate::stats::mean(x);
    let my = crate::stats::mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    if (1.0 - slope).abs() < 1e-6 {
        return Err(Error::NoFixedPoint { slope });
    }
    Ok(ReturnMap { fixed_point: intercept / (1.0 - slope), slope, intercept, pairs: x.len() })
}
