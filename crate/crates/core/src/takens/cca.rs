use serde::{Deserialize, Serialize};

use faer::MatRef;

use crate::{Error, Result};

/// Default lag grid half-width.
pub const DEFAULT_MAX_LAG: usize = 60;

/// Pearson correlation of `x_n` with `y_{n+lag}` over the overlapping samples.
///
/// Returns `None` when either overlap segment has zero variance.
pub fn lagged_correlation(x: &[f64], y: &[f64], lag: i64) -> Option<f64> {
    let len = x.len().min(y.len()) as i64;
    let start = (-lag).max(0);
    let end = (len - lag).min(len);
    if end - start < 2 {
        return None;
    }
    let (s, e) = (start as usize, end as usize);
    let xs = &x[s..e];
    let ys = &y[(s as i64 + lag) as usize..(e as i64 + lag) as usize];
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in xs.iter().zip(ys) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Normalized cross-correlation for every lag in `lags`.
///
/// Lag `k` pairs `x_n` with `y_{n+k}`: a response that copies the input from
/// five steps ago peaks at `k = −5`.
pub fn cross_correlation(x: &[f64], y: &[f64], lags: std::ops::RangeInclusive<i64>) -> Result<Vec<(i64, f64)>> {
    if x.len() != y.len() {
        return Err(Error::Parameter(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    if crate::stats::variance(x) <= 0.0 || crate::stats::variance(y) <= 0.0 {
        return Err(Error::Degenerate("cross-correlation of a constant series".into()));
    }
    Ok(lags.map(|k| (k, lagged_correlation(x, y, k).unwrap_or(0.0))).collect())
}

/// Lags in tie-break preference order: 0, −1, 1, −2, 2, …
fn preference_order(max_lag: usize) -> impl Iterator<Item = i64> {
    std::iter::once(0).chain((1..=max_lag as i64).flat_map(|k| [-k, k]))
}

/// Per-node lag of the strongest cross-correlation with the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcaProfile {
    pub best_lag: Vec<i64>,
    pub cc_max: Vec<f64>,
    /// Nodes whose response was constant; they carry `best_lag = 0, cc_max = 0`.
    pub constant: Vec<bool>,
    /// Extreme best lags over non-constant nodes.
    pub l_min: i64,
    pub l_max: i64,
    pub max_lag: usize,
}

impl CcaProfile {
    pub fn len(&self) -> usize {
        self.best_lag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.best_lag.is_empty()
    }

    /// Nodes with a defined lag, sorted by lag (then index).
    pub fn lagged_nodes(&self) -> Vec<usize> {
        let mut nodes: Vec<usize> = (0..self.len()).filter(|&i| !self.constant[i]).collect();
        nodes.sort_by_key(|&i| (self.best_lag[i], i));
        nodes
    }

    /// Fraction of non-constant nodes whose lag lies within `tol` of any of `centres`.
    pub fn fraction_near(&self, centres: &[i64], tol: i64) -> f64 {
        let nodes = self.lagged_nodes();
        if nodes.is_empty() {
            return 0.0;
        }
        let hit = nodes.iter().filter(|&&i| centres.iter().any(|c| (self.best_lag[i] - c).abs() <= tol)).count();
        hit as f64 / nodes.len() as f64
    }
}

/// Cross-correlation profile of every node (column of `states`) against `input`.
///
/// Ties in `|CC|` go to the lag of smaller magnitude, then to the negative lag.
pub fn cca_profile(states: MatRef<'_, f64>, input: &[f64], max_lag: usize) -> Result<CcaProfile> {
    if states.nrows() != input.len() {
        return Err(Error::Parameter(format!(
            "{} state rows but {} input samples",
            states.nrows(),
            input.len()
        )));
    }
    if 2 * max_lag + 2 > input.len() {
        return Err(Error::Parameter(format!("lag grid ±{max_lag} too wide for {} samples", input.len())));
    }
    if crate::stats::variance(input) <= 0.0 {
        return Err(Error::Degenerate("input is constant".into()));
    }
    let m = states.ncols();
    let mut best_lag = vec![0; m];
    let mut cc_max = vec![0.0; m];
    let mut constant = vec![false; m];
    let mut col = Vec::with_capacity(input.len());
    for i in 0..m {
        col.clear();
        col.extend(states.col(i).iter().copied());
        if col.iter().all(|&v| v == col[0]) {
            constant[i] = true;
            continue;
        }
        let mut best = (0i64, -1.0f64);
        for k in preference_order(max_lag) {
            let c = lagged_correlation(&col, input, k).map_or(0.0, f64::abs);
            if c > best.1 {
                best = (k, c);
            }
        }
        best_lag[i] = best.0;
        cc_max[i] = best.1.max(0.0);
    }
    let defined = best_lag.iter().zip(&constant).filter(|(_, &c)| !c).map(|(&l, _)| l);
    let l_min = defined.clone().min().unwrap_or(0);
    let l_max = defined.max().unwrap_or(0);
    Ok(CcaProfile { best_lag, cc_max, constant, l_min, l_max, max_lag })
}
