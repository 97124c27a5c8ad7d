//! Classical delay-embedding diagnostics: autocorrelation, embedding-lag
//! selection, false nearest neighbours and delay-coordinate matrices.
//!
//! Lags follow the past-is-negative convention: `tau0 = -12` means each row
//! holds `[y_n, y_{n-12}, y_{n-24}, ...]`, newest coordinate first.

use serde::{Deserialize, Serialize};

use crate::signals::TimeSeries;
use crate::{Error, Result};

/// Normalized, biased autocorrelation `ρ(k)` for `k = 0..=max_lag`.
///
/// The series is mean-subtracted; every lag is divided by `n · var`, so
/// `ρ(0) = 1` exactly and `|ρ(k)| ≤ 1`.
pub fn acf(series: &TimeSeries, max_lag: usize) -> Result<Vec<f64>> {
    let y = series.values();
    let n = y.len();
    if n < 2 || 2 * max_lag >= n {
        return Err(Error::Parameter(format!("max_lag {max_lag} must be below half the series length {n}")));
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    if c0 <= f64::MIN_POSITIVE * n as f64 {
        return Err(Error::Degenerate("autocorrelation of a constant series".into()));
    }
    let mut out = Vec::with_capacity(max_lag + 1);
    out.push(1.0);
    for k in 1..=max_lag {
        let s: f64 = c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum();
        out.push((s / c0).clamp(-1.0, 1.0));
    }
    Ok(out)
}

/// Rule for turning an ACF into an embedding lag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LagRule {
    /// First local minimum of `|ρ|`.
    #[default]
    FirstMinimum,
    /// First local minimum of the signed `ρ`.
    FirstMinimumSigned,
    /// First lag at which `ρ` reaches or crosses zero.
    FirstZero,
}

/// Embedding lag from ACF values, returned with the negative (past) sign.
pub fn select_tau0(acf_values: &[f64], rule: LagRule) -> Result<i64> {
    let not_found = || {
        Error::NotFound(format!(
            "no {rule:?} found within {} lags; increase max_lag",
            acf_values.len().saturating_sub(1)
        ))
    };
    let local_min = |f: &dyn Fn(f64) -> f64| {
        (1..acf_values.len().saturating_sub(1))
            .find(|&k| f(acf_values[k - 1]) > f(acf_values[k]) && f(acf_values[k]) < f(acf_values[k + 1]))
    };
    let k = match rule {
        LagRule::FirstMinimum => local_min(&f64::abs),
        LagRule::FirstMinimumSigned => local_min(&|v| v),
        LagRule::FirstZero => (1..acf_values.len()).find(|&k| acf_values[k] <= 0.0),
    };
    k.map(|k| -(k as i64)).ok_or_else(not_found)
}

/// Delay lag and embedding dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub tau0: i64,
    #[serde(rename = "M")]
    pub m: usize,
}

impl EmbeddingSpec {
    pub fn new(tau0: i64, m: usize) -> Result<Self> {
        let spec = Self { tau0, m };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau0 == 0 {
            return Err(Error::Parameter("tau0 must be non-zero".into()));
        }
        if self.m == 0 {
            return Err(Error::Parameter("embedding dimension must be at least 1".into()));
        }
        Ok(())
    }

    /// Samples spanned by one reconstructed state beyond its first: `(M−1)·|τ₀|`.
    pub fn span(&self) -> usize {
        (self.m - 1) * self.tau0.unsigned_abs() as usize
    }

    /// Series index of the newest coordinate (column 0) of row `r`.
    fn base(&self, r: usize) -> usize {
        if self.tau0 < 0 {
            r + self.span()
        } else {
            r
        }
    }
}

/// Row-major matrix of reconstructed states, one row per time step.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayMatrix {
    rows: usize,
    data: Vec<f64>,
    spec: EmbeddingSpec,
    origin_index: i64,
}

impl DelayMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.spec.m
    }

    pub fn spec(&self) -> EmbeddingSpec {
        self.spec
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.spec.m..(r + 1) * self.spec.m]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.spec.m + c]
    }

    /// Absolute time index (in the source series' frame) of row `r`'s column 0.
    pub fn time_index(&self, r: usize) -> i64 {
        self.origin_index + self.spec.base(r) as i64
    }

    /// Offset of row 0's column 0 within the source series.
    pub fn first_index(&self) -> usize {
        self.spec.base(0)
    }
}

/// Builds the delay-coordinate matrix: entry `(r, c) = y[base(r) + c·τ₀]`.
pub fn delay_embed(series: &TimeSeries, spec: EmbeddingSpec) -> Result<DelayMatrix> {
    spec.validate()?;
    let y = series.values();
    if y.len() <= spec.span() {
        return Err(Error::Parameter(format!(
            "series of length {} is too short for a {}-dimensional embedding at lag {}",
            y.len(),
            spec.m,
            spec.tau0
        )));
    }
    let rows = y.len() - spec.span();
    let mut data = Vec::with_capacity(rows * spec.m);
    for r in 0..rows {
        let base = spec.base(r) as i64;
        for c in 0..spec.m as i64 {
            data.push(y[(base + c * spec.tau0) as usize]);
        }
    }
    Ok(DelayMatrix { rows, data, spec, origin_index: series.origin_index() })
}

/// Tuning for [`false_nearest_neighbors`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FnnOptions {
    /// A neighbour is false when the added coordinate separates it by more
    /// than `r_tol` times its distance in the lower dimension.
    pub r_tol: f64,
    /// Second test: the added-dimension distance exceeds `a_tol` times the
    /// series standard deviation. `None` disables it.
    pub a_tol: Option<f64>,
    /// `M_min` is the first dimension whose false fraction drops below this.
    pub fraction_threshold: f64,
    /// Pairs closer than this many samples in time are not neighbours;
    /// `None` uses `|τ₀|`.
    pub theiler: Option<usize>,
}

impl Default for FnnOptions {
    fn default() -> Self {
        Self { r_tol: 10.0, a_tol: Some(2.0), fraction_threshold: 0.01, theiler: None }
    }
}

/// False-neighbour fractions for `M = 1..=M_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FnnResult {
    /// `(M, fraction)` pairs.
    pub fractions: Vec<(usize, f64)>,
    pub m_min: Option<usize>,
}

impl FnnResult {
    pub fn require_m_min(&self) -> Result<usize> {
        self.m_min.ok_or_else(|| {
            Error::NotFound(format!(
                "false-neighbour fraction never fell below threshold up to M = {}",
                self.fractions.len()
            ))
        })
    }
}

/// False nearest neighbours (Kennel-style) on delay embeddings of `series`.
pub fn false_nearest_neighbors(series: &TimeSeries, tau0: i64, m_max: usize, opts: &FnnOptions) -> Result<FnnResult> {
    if m_max < 2 {
        return Err(Error::Parameter("M_max must be at least 2".into()));
    }
    if tau0 == 0 {
        return Err(Error::Parameter("tau0 must be non-zero".into()));
    }
    let lag = tau0.unsigned_abs() as usize;
    let needed = m_max * lag + 2 * (opts.theiler.unwrap_or(lag) + 2);
    if series.len() <= needed {
        return Err(Error::Parameter(format!(
            "need more than {needed} samples for M_max = {m_max} at lag {tau0}, got {}",
            series.len()
        )));
    }
    let theiler = opts.theiler.unwrap_or(lag);
    let sd = crate::stats::std_dev(series.values());
    // pairs closer than this are duplicates up to rounding, not neighbours
    let floor = (1e-12 * sd).powi(2);
    let mut fractions = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        // one extra column supplies the (M+1)-th coordinate
        let emb = delay_embed(series, EmbeddingSpec { tau0, m: m + 1 })?;
        fractions.push((m, fnn_fraction(&emb, m, theiler, opts, sd, floor)));
    }
    let m_min = fractions.iter().find(|(_, f)| *f < opts.fraction_threshold).map(|(m, _)| *m);
    Ok(FnnResult { fractions, m_min })
}

fn fnn_fraction(emb: &DelayMatrix, m: usize, theiler: usize, opts: &FnnOptions, sd: f64, floor: f64) -> f64 {
    let n = emb.rows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| emb.get(a, 0).total_cmp(&emb.get(b, 0)));
    let mut rank = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        rank[i] = pos;
    }
    let dist2 = |a: usize, b: usize| -> f64 {
        let (ra, rb) = (emb.row(a), emb.row(b));
        ra[..m].iter().zip(&rb[..m]).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let mut tested = 0usize;
    let mut false_count = 0usize;
    for i in 0..n {
        let x0 = emb.get(i, 0);
        let mut best = f64::INFINITY;
        let mut best_j = usize::MAX;
        // scan outward in first-coordinate order; stop once that gap alone exceeds the best distance
        for dir in [-1i64, 1] {
            let mut pos = rank[i] as i64 + dir;
            while pos >= 0 && (pos as usize) < n {
                let j = order[pos as usize];
                let gap = emb.get(j, 0) - x0;
                if gap * gap >= best {
                    break;
                }
                if i.abs_diff(j) > theiler {
                    let d = dist2(i, j);
                    if d > floor && d < best {
                        best = d;
                        best_j = j;
                    }
                }
                pos += dir;
            }
        }
        if best_j == usize::MAX {
            continue;
        }
        tested += 1;
        let extra = (emb.get(i, m) - emb.get(best_j, m)).abs();
        let r_m = best.sqrt();
        let mut is_false = extra > opts.r_tol * r_m;
        if let Some(a_tol) = opts.a_tol {
            let r_next = (best + extra * extra).sqrt();
            is_false |= sd > 0.0 && r_next / sd > a_tol;
        }
        if is_false {
            false_count += 1;
        }
    }
    if tested == 0 {
        1.0
    } else {
        false_count as f64 / tested as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(v: Vec<f64>) -> TimeSeries {
        TimeSeries::new(v, 1.0).unwrap()
    }

    #[test]
    fn cosine_acf_zero_and_trough() {
        let s = ts((0..2400).map(|n| (2.0 * std::f64::consts::PI * n as f64 / 24.0).cos()).collect());
        let r = acf(&s, 40).unwrap();
        assert_eq!(r[0], 1.0);
        assert!(r[6].abs() < 0.01);
        assert!((r[12] + 1.0).abs() < 0.01);
        assert_eq!(select_tau0(&r, LagRule::FirstMinimumSigned).unwrap(), -12);
        assert_eq!(select_tau0(&r, LagRule::FirstMinimum).unwrap(), -6);
    }

    #[test]
    fn tau0_from_definition() {
        let r = [1.0, 0.8, 0.5, 0.3, 0.4, 0.2];
        assert_eq!(select_tau0(&r, LagRule::FirstMinimum).unwrap(), -3);
        assert!(matches!(select_tau0(&[1.0, 0.9, 0.8], LagRule::FirstMinimum), Err(Error::NotFound(_))));
        assert_eq!(select_tau0(&[1.0, 0.5, -0.1], LagRule::FirstZero).unwrap(), -2);
    }

    #[test]
    fn constant_series_is_degenerate() {
        assert!(matches!(acf(&ts(vec![3.0; 50]), 5), Err(Error::Degenerate(_))));
    }

    #[test]
    fn embed_index_bookkeeping() {
        let s = ts(vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let d = delay_embed(&s, EmbeddingSpec::new(-1, 2).unwrap()).unwrap();
        assert_eq!(d.rows(), 4);
        let rows: Vec<_> = (0..4).map(|r| d.row(r).to_vec()).collect();
        assert_eq!(rows, vec![vec![1.0, 0.0], vec![2.0, 1.0], vec![3.0, 2.0], vec![4.0, 3.0]]);
        assert_eq!(d.time_index(0), 1);
        let fwd = delay_embed(&s, EmbeddingSpec::new(2, 2).unwrap()).unwrap();
        assert_eq!(fwd.row(0), &[0.0, 2.0]);
        let id = delay_embed(&s, EmbeddingSpec::new(-3, 1).unwrap()).unwrap();
        assert_eq!(id.rows(), 5);
        assert_eq!(id.get(4, 0), 4.0);
        assert_eq!(delay_embed(&s, EmbeddingSpec::new(-2, 3).unwrap()).unwrap().row(0), &[4.0, 2.0, 0.0]);
        assert!(delay_embed(&s, EmbeddingSpec::new(-2, 4).unwrap()).is_err());
    }

    #[test]
    fn sine_needs_two_dimensions() {
        // incommensurate period, so no two samples coincide exactly
        let period = 12.0 * std::f64::consts::PI;
        let s = ts((0..4000).map(|n| (2.0 * std::f64::consts::PI * n as f64 / period).sin()).collect());
        let res = false_nearest_neighbors(&s, -9, 4, &FnnOptions::default()).unwrap();
        assert_eq!(res.m_min, Some(2), "{:?}", res.fractions);
    }

    #[test]
    fn white_noise_never_embeds() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let s = ts((0..2000).map(|_| StandardNormal.sample(&mut rng)).collect());
        let res = false_nearest_neighbors(&s, -1, 6, &FnnOptions::default()).unwrap();
        assert_eq!(res.m_min, None, "{:?}", res.fractions);
        assert!(matches!(res.require_m_min(), Err(Error::NotFound(_))));
    }

    proptest! {
        #[test]
        fn embed_shape(len in 1usize..200, m in 1usize..6, lag in 1i64..10, past in any::<bool>()) {
            let tau0 = if past { -lag } else { lag };
            let s = ts((0..len).map(|i| i as f64).collect());
            let spec = EmbeddingSpec::new(tau0, m).unwrap();
            match delay_embed(&s, spec) {
                Ok(d) => {
                    prop_assert_eq!(d.rows(), len - (m - 1) * lag as usize);
                    prop_assert_eq!(d.cols(), m);
                    for r in 0..d.rows() {
                        for c in 0..m {
                            prop_assert_eq!(d.get(r, c), (d.time_index(r) + c as i64 * tau0) as f64);
                        }
                    }
                }
                Err(_) => prop_assert!(len <= (m - 1) * lag as usize),
            }
        }

        #[test]
        fn acf_bounded_and_scale_invariant(v in prop::collection::vec(-10.0f64..10.0, 20..120), exp in -6i32..7) {
            let s = ts(v.clone());
            if let Ok(r) = acf(&s, 9) {
                prop_assert_eq!(r[0], 1.0);
                prop_assert!(r.iter().all(|x| (-1.0..=1.0).contains(x)));
                // power-of-two scaling is exact in floating point
                let scale = 2f64.powi(exp);
                let scaled = acf(&ts(v.iter().map(|x| x * scale).collect()), 9).unwrap();
                prop_assert_eq!(
                    select_tau0(&r, LagRule::FirstMinimum).ok(),
                    select_tau0(&scaled, LagRule::FirstMinimum).ok()
                );
            }
        }
    }
}
