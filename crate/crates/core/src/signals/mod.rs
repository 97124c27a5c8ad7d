//! Benchmark signal generators and the [`TimeSeries`] container they emit.

mod fhn;
mod io;
mod mackey_glass;

pub use fhn::{gen_fhn, FhnIntegrator, FhnParams, FhnState, NoiseScaling};
pub use io::{read_series_csv, write_series, SeriesMeta};
pub use mackey_glass::{gen_mackey_glass, History, MgParams};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Uniformly sampled scalar sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    dt: f64,
    origin_index: i64,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, dt: f64) -> Result<Self> {
        Self::with_origin(values, dt, 0)
    }

    pub fn with_origin(values: Vec<f64>, dt: f64, origin_index: i64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Parameter(format!("sample interval must be positive, got {dt}")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite sample at index {i}")));
        }
        Ok(Self { values, dt, origin_index })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn origin_index(&self) -> i64 {
        self.origin_index
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sub-series `[start, end)` keeping `dt` and shifting the origin.
    pub fn slice(&self, start: usize, end: usize) -> TimeSeries {
        TimeSeries {
            values: self.values[start..end].to_vec(),
            dt: self.dt,
            origin_index: self.origin_index + start as i64,
        }
    }

    /// Multiplies every sample by `factor`.
    pub fn scaled(&self, factor: f64) -> TimeSeries {
        TimeSeries {
            values: self.values.iter().map(|v| v * factor).collect(),
            dt: self.dt,
            origin_index: self.origin_index,
        }
    }
}

/// Removes the sample mean; returns the centred series and the removed mean.
pub fn mean_subtract(series: &TimeSeries) -> (TimeSeries, f64) {
    let mean = crate::stats::mean(series.values());
    let values = series.values().iter().map(|v| v - mean).collect();
    (TimeSeries { values, dt: series.dt, origin_index: series.origin_index }, mean)
}
