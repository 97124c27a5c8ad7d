use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// NMSE values above this (or non-finite) are capped here and the run is
/// counted as divergent.
pub const DIVERGENCE_CAP: f64 = 1e6;

/// Denominator of the normalized error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NmseNorm {
    /// Mean squared error over variance: the mean predictor scores exactly 1.
    #[default]
    Variance,
    /// Mean squared error over standard deviation.
    StdDev,
}

/// Mean squared error of `prediction` against `target`, normalized by the
/// variance of `target`.
pub fn nmse(prediction: &[f64], target: &[f64]) -> Result<f64> {
    nmse_with(prediction, target, target, NmseNorm::Variance)
}

/// Mean squared error normalized by the spread of `reference`, typically the
/// training teacher, so that even a single-sample horizon is scored.
pub fn nmse_with(prediction: &[f64], target: &[f64], reference: &[f64], norm: NmseNorm) -> Result<f64> {
    if prediction.len() != target.len() || target.is_empty() {
        return Err(Error::Parameter(format!(
            "prediction ({}) and target ({}) must be non-empty and equally long",
            prediction.len(),
            target.len()
        )));
    }
    if reference.len() < 2 {
        return Err(Error::Parameter("normalization needs at least two reference samples".into()));
    }
    let var = crate::stats::variance(reference);
    if !(var > 0.0) {
        return Err(Error::Degenerate("normalizing signal is constant".into()));
    }
    let mse = prediction.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / target.len() as f64;
    Ok(match norm {
        NmseNorm::Variance => mse / var,
        NmseNorm::StdDev => mse / var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_mean_predictors() {
        let t = [1.0, 3.0, 2.0, 6.0];
        assert_eq!(nmse(&t, &t).unwrap(), 0.0);
        let m = crate::stats::mean(&t);
        assert!((nmse(&[m; 4], &t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shifting_both_keeps_error_but_shifting_one_does_not() {
        let t = [1.0, 3.0, 2.0, 6.0];
        let p = [1.5, 2.5, 2.0, 5.0];
        let base = nmse(&p, &t).unwrap();
        let tp: Vec<f64> = t.iter().map(|v| v + 10.0).collect();
        let pp: Vec<f64> = p.iter().map(|v| v + 10.0).collect();
        assert!((nmse(&pp, &tp).unwrap() - base).abs() < 1e-12);
        assert!(nmse(&pp, &t).unwrap() > base);
    }

    #[test]
    fn constant_target_rejected() {
        assert!(matches!(nmse(&[1.0, 2.0], &[3.0, 3.0]), Err(Error::Degenerate(_))));
        assert!(nmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn stdev_mode() {
        let t = [0.0, 4.0];
        let p = [1.0, 3.0];
        assert!((nmse_with(&p, &t, &t, NmseNorm::StdDev).unwrap() - 0.5).abs() < 1e-12);
    }
}
