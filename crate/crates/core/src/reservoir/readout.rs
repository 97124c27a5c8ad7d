use std::collections::VecDeque;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use super::{Reservoir, StateMatrix};
use crate::linalg::lstsq_pinv;
use crate::{Error, Result};

/// Which state components the readout sees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    /// Every node.
    #[default]
    AllNodes,
    /// The listed nodes in order; a node listed twice contributes two identical columns.
    Masked { nodes: Vec<usize> },
    /// The current state followed by the state `|tau_t|` steps earlier.
    Delayed { tau_t: i64 },
}

impl FeatureSpec {
    pub fn n_features(&self, m: usize) -> usize {
        match self {
            FeatureSpec::AllNodes => m,
            FeatureSpec::Masked { nodes } => nodes.len(),
            FeatureSpec::Delayed { .. } => 2 * m,
        }
    }

    /// Number of past states the features reach back.
    pub fn depth(&self) -> usize {
        match self {
            FeatureSpec::Delayed { tau_t } => tau_t.unsigned_abs() as usize,
            _ => 0,
        }
    }

    fn validate(&self, m: usize) -> Result<()> {
        match self {
            FeatureSpec::Masked { nodes } => {
                if let Some(&bad) = nodes.iter().find(|&&i| i >= m) {
                    return Err(Error::Parameter(format!("masked node {bad} out of range for {m} nodes")));
                }
            }
            FeatureSpec::Delayed { tau_t } if *tau_t > 0 => {
                return Err(Error::Parameter(format!("delay tau_T must be ≤ 0 (past states), got {tau_t}")));
            }
            _ => {}
        }
        Ok(())
    }

    /// Features for one time step; `delayed` is required for [`FeatureSpec::Delayed`].
    pub fn features_into(&self, current: &[f64], delayed: Option<&[f64]>, out: &mut Vec<f64>) {
        out.clear();
        match self {
            FeatureSpec::AllNodes => out.extend_from_slice(current),
            FeatureSpec::Masked { nodes } => out.extend(nodes.iter().map(|&i| current[i])),
            FeatureSpec::Delayed { .. } => {
                out.extend_from_slice(current);
                out.extend_from_slice(delayed.expect("delayed features need the earlier state"));
            }
        }
    }

    /// Feature matrix for all rows of `states` whose input index is ≥ `start`.
    pub fn feature_matrix(&self, states: &StateMatrix, start: usize) -> Result<Mat<f64>> {
        let m = states.m();
        self.validate(m)?;
        if start < states.first_index() + self.depth() {
            return Err(Error::Parameter(format!(
                "features from input {start} need states from {}, matrix starts at {}",
                start.saturating_sub(self.depth()),
                states.first_index()
            )));
        }
        let cur = states.from_index(start);
        Ok(match self {
            FeatureSpec::AllNodes => cur.to_owned(),
            FeatureSpec::Masked { nodes } => Mat::from_fn(cur.nrows(), nodes.len(), |r, c| cur[(r, nodes[c])]),
            FeatureSpec::Delayed { .. } => {
                let past = states.from_index(start - self.depth());
                Mat::from_fn(cur.nrows(), 2 * m, |r, c| if c < m { cur[(r, c)] } else { past[(r, c - m)] })
            }
        })
    }
}

/// Trained linear readout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutModel {
    pub w_out: Vec<f64>,
    pub feature_spec: FeatureSpec,
    pub train_nmse: f64,
    /// Singular values kept by the pseudo-inverse.
    pub rank: usize,
    /// Variance of the teacher, used to normalize prediction errors.
    pub teacher_variance: f64,
}

impl ReadoutModel {
    pub fn apply(&self, features: &[f64]) -> f64 {
        self.w_out.iter().zip(features).map(|(w, x)| w * x).sum()
    }
}

/// Least-squares readout over an explicit feature matrix.
pub fn fit_readout(features: MatRef<'_, f64>, teacher: &[f64], spec: FeatureSpec, cutoff: f64) -> Result<ReadoutModel> {
    if features.nrows() != teacher.len() {
        return Err(Error::Parameter(format!(
            "{} feature rows but {} teacher samples",
            features.nrows(),
            teacher.len()
        )));
    }
    if features.ncols() >= features.nrows() {
        log::warn!(
            "readout has {} features for {} samples; the system is rank-deficient and the pseudo-inverse picks the minimum-norm fit",
            features.ncols(),
            features.nrows()
        );
    }
    let sol = lstsq_pinv(features, teacher, cutoff)?;
    let fitted = crate::linalg::mat_vec(features, &sol.x);
    let mse = fitted.iter().zip(teacher).map(|(f, t)| (f - t) * (f - t)).sum::<f64>() / teacher.len().max(1) as f64;
    let var = crate::stats::variance(teacher);
    let train_nmse = if var > 0.0 {
        mse / var
    } else if mse == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(ReadoutModel { w_out: sol.x, feature_spec: spec, train_nmse, rank: sol.rank, teacher_variance: var })
}

/// Fits the readout to `teacher`, aligned with the rows of `states` whose
/// input index is at least the washout.
pub fn train_readout(states: &StateMatrix, teacher: &[f64], spec: FeatureSpec, cutoff: f64) -> Result<ReadoutModel> {
    let x = spec.feature_matrix(states, states.washout())?;
    fit_readout(x.as_ref(), teacher, spec, cutoff)
}

/// Free-running output.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub values: Vec<f64>,
    /// A non-finite output occurred; `values` stops just before it.
    pub divergent: bool,
}

/// Free-runs the network from `x_start`, first feeding `y_start`, then each
/// output back as the next input.
pub fn predict_closed_loop(
    res: &Reservoir,
    model: &ReadoutModel,
    x_start: &[f64],
    y_start: f64,
    horizon: usize,
) -> Result<Prediction> {
    if model.feature_spec.depth() > 0 {
        return Err(Error::Parameter("delayed readout needs the recent state history".into()));
    }
    predict_closed_loop_with_history(res, model, &[x_start.to_vec()], y_start, horizon, |_, _, _| {})
}

/// Closed loop for readouts over delayed states. `history` lists the most
/// recent teacher-forced states, oldest first, ending with the start state;
/// it must hold at least `max(1, |τ_T|)` states. `observe(step, current,
/// delayed)` sees every state pair the readout uses.
pub fn predict_closed_loop_with_history<F>(
    res: &Reservoir,
    model: &ReadoutModel,
    history: &[Vec<f64>],
    y_start: f64,
    horizon: usize,
    mut observe: F,
) -> Result<Prediction>
where
    F: FnMut(usize, &[f64], Option<&[f64]>),
{
    if horizon == 0 {
        return Err(Error::Parameter("horizon must be at least 1".into()));
    }
    let spec = &model.feature_spec;
    spec.validate(res.m())?;
    if model.w_out.len() != spec.n_features(res.m()) {
        return Err(Error::Parameter("readout length does not match its feature spec".into()));
    }
    let depth = spec.depth();
    if history.len() < depth.max(1) || history.iter().any(|h| h.len() != res.m()) {
        return Err(Error::Parameter(format!("need {} history states of length {}", depth.max(1), res.m())));
    }
    // ring holds the `depth` states preceding the one about to be produced
    let mut ring: VecDeque<Vec<f64>> = history[history.len() - depth..].iter().cloned().collect();
    let mut x = history.last().expect("non-empty history").clone();
    let mut y = y_start;
    let mut values = Vec::with_capacity(horizon);
    let mut feats = Vec::with_capacity(model.w_out.len());
    let is_delayed = matches!(spec, FeatureSpec::Delayed { .. });
    for step in 0..horizon {
        x = res.step(&x, y);
        let delayed: Option<&[f64]> = if !is_delayed {
            None
        } else if depth == 0 {
            Some(&x)
        } else {
            Some(ring.front().expect("ring has depth entries"))
        };
        observe(step, &x, delayed);
        spec.features_into(&x, delayed, &mut feats);
        let out = model.apply(&feats);
        if !out.is_finite() {
            return Ok(Prediction { values, divergent: true });
        }
        values.push(out);
        y = out;
        if depth > 0 {
            ring.pop_front();
            ring.push_back(x.clone());
        }
    }
    Ok(Prediction { values, divergent: false })
}

#[cfg(test)]
mod tests {
    use super::super::{drive, ReservoirParams};
    use super::*;
    use crate::linalg::DEFAULT_PINV_CUTOFF;

    fn net(m: usize) -> Reservoir {
        Reservoir::build(ReservoirParams { m, mu: 0.9, ..ReservoirParams::default() }, 5).unwrap()
    }

    fn sine(n: usize) -> Vec<f64> {
        (0..n).map(|k| (k as f64 * 0.21).sin() * 0.5).collect()
    }

    #[test]
    fn exact_linear_teacher_is_fit() {
        let r = net(30);
        let s = drive(&r, &sine(400), None, 50).unwrap();
        let teacher: Vec<f64> = (0..s.rows()).map(|t| 2.0 * s.node(3)[t] - s.node(7)[t]).collect();
        let model = train_readout(&s, &teacher, FeatureSpec::AllNodes, DEFAULT_PINV_CUTOFF).unwrap();
        assert!(model.train_nmse < 1e-10, "{}", model.train_nmse);
    }

    #[test]
    fn orthogonal_teacher_gives_zero_weights() {
        // two features with disjoint support, teacher on a third coordinate
        let x = faer::mat![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]];
        let t = [0.0, 0.0, 1.0, -1.0];
        let model = fit_readout(x.as_ref(), &t, FeatureSpec::AllNodes, DEFAULT_PINV_CUTOFF).unwrap();
        assert!(model.w_out.iter().all(|w| w.abs() < 1e-15));
        assert!((model.train_nmse - 1.0).abs() < 1e-12);
    }

    #[test]
    fn masked_features_allow_duplicates() {
        let r = net(10);
        let s = drive(&r, &sine(200), None, 20).unwrap();
        let spec = FeatureSpec::Masked { nodes: vec![1, 1, 4] };
        let x = spec.feature_matrix(&s, 20).unwrap();
        assert_eq!(x.ncols(), 3);
        assert_eq!(x.col(0), x.col(1));
        assert!(FeatureSpec::Masked { nodes: vec![10] }.feature_matrix(&s, 20).is_err());
    }

    #[test]
    fn constant_teacher_holds_in_closed_loop() {
        let r = net(50);
        let c = 0.4;
        let input = vec![c; 600];
        let s = drive(&r, &input, None, 100).unwrap();
        let teacher = vec![c; s.rows()];
        let model = train_readout(&s, &teacher, FeatureSpec::AllNodes, DEFAULT_PINV_CUTOFF).unwrap();
        let p = predict_closed_loop(&r, &model, s.final_state(), c, 300).unwrap();
        assert!(!p.divergent);
        assert!(p.values.iter().all(|v| (v - c).abs() < 0.01 * c), "{:?}", &p.values[..5]);
    }

    #[test]
    fn horizon_rules() {
        let r = net(10);
        let s = drive(&r, &sine(200), None, 20).unwrap();
        let teacher: Vec<f64> = sine(201)[21..].to_vec();
        let model = train_readout(&s, &teacher, FeatureSpec::AllNodes, DEFAULT_PINV_CUTOFF).unwrap();
        assert!(predict_closed_loop(&r, &model, s.final_state(), 0.0, 0).is_err());
        let one = predict_closed_loop(&r, &model, s.final_state(), 0.3, 1).unwrap();
        let x1 = r.step(s.final_state(), 0.3);
        assert_eq!(one.values, vec![model.apply(&x1)]);
    }

    #[test]
    fn closed_loop_continues_teacher_forcing() {
        let r = net(20);
        let s = drive(&r, &sine(300), None, 30).unwrap();
        let teacher: Vec<f64> = sine(301)[31..].to_vec();
        let model = train_readout(&s, &teacher, FeatureSpec::AllNodes, DEFAULT_PINV_CUTOFF).unwrap();
        let mut seen = Vec::new();
        let p = predict_closed_loop_with_history(&r, &model, &[s.final_state().to_vec()], 0.1, 5, |_, x, _| {
            seen.push(x.to_vec())
        })
        .unwrap();
        let x1 = r.step(s.final_state(), 0.1);
        let x2 = r.step(&x1, p.values[0]);
        assert_eq!(seen[0], x1);
        assert_eq!(seen[1], x2);
    }

    #[test]
    fn non_finite_output_flags_divergence() {
        let r = net(5);
        let model = ReadoutModel {
            w_out: vec![f64::INFINITY; 5],
            feature_spec: FeatureSpec::AllNodes,
            train_nmse: 0.0,
            rank: 5,
            teacher_variance: 1.0,
        };
        let p = predict_closed_loop(&r, &model, &[0.1; 5], 0.0, 10).unwrap();
        assert!(p.divergent && p.values.is_empty());
    }
}
