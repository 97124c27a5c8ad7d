use faer::MatRef;
use serde::{Deserialize, Serialize};

use crate::embedding::DelayMatrix;
use crate::reservoir::StateMatrix;
use crate::{Error, Result};

/// How the time-dependent Takens-space distance enters the scalar bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EpsilonMode {
    /// Componentwise min/max numerators over the time-mean Takens distance.
    #[default]
    MeanDistance,
    /// Extremes over time of the per-pair distance ratio.
    PerPairRatio,
}

/// Distortion limits of the map from Takens space to node space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBounds {
    pub eps1: f64,
    pub eps2: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    /// Node-space dimensionality.
    pub h: usize,
    pub pairs: usize,
    pub mode: EpsilonMode,
    /// `sqrt(Σ_g min_n Δφ_g²)` and `sqrt(Σ_g max_n Δφ_g²)`.
    pub norm_min: f64,
    pub norm_max: f64,
    pub mean_takens_distance: f64,
}

/// Consecutive-step distances in both spaces, aligned in time.
#[derive(Debug, Clone, PartialEq)]
pub struct InterstateDistances {
    /// `‖y_{n+1} − y_n‖` in Takens space.
    pub takens: Vec<f64>,
    /// `‖φ(y_{n+1}) − φ(y_n)‖` in node space.
    pub projected: Vec<f64>,
    pub norm_min: f64,
    pub norm_max: f64,
    pub h: usize,
}

/// Pairs Takens rows with the node responses at the same input index and
/// measures every consecutive step. `phi(r)` is node-space row `r` of `states`.
pub fn interstate_distances(embed: &DelayMatrix, states: MatRef<'_, f64>, first_index: usize, nodes: &[usize]) -> Result<InterstateDistances> {
    if nodes.is_empty() {
        return Err(Error::Parameter("projection needs at least one node".into()));
    }
    let last_state = first_index + states.nrows();
    // Takens rows whose time index has a state
    let rows: Vec<(usize, usize)> = (0..embed.rows())
        .filter_map(|r| {
            let t = embed.time_index(r);
            (t >= first_index as i64 && (t as usize) < last_state).then(|| (r, t as usize - first_index))
        })
        .collect();
    if rows.len() < 2 {
        return Err(Error::Parameter("fewer than two time-aligned rows between embedding and states".into()));
    }
    let h = nodes.len();
    let mut dmin = vec![f64::INFINITY; h];
    let mut dmax = vec![0.0f64; h];
    let mut takens = Vec::with_capacity(rows.len() - 1);
    let mut projected = Vec::with_capacity(rows.len() - 1);
    for w in rows.windows(2) {
        let ((r0, s0), (r1, s1)) = (w[0], w[1]);
        let dy: f64 = embed.row(r1).iter().zip(embed.row(r0)).map(|(a, b)| (a - b) * (a - b)).sum();
        let mut dphi = 0.0;
        for (g, &node) in nodes.iter().enumerate() {
            let d = states[(s1, node)] - states[(s0, node)];
            let d2 = d * d;
            dphi += d2;
            dmin[g] = dmin[g].min(d2);
            dmax[g] = dmax[g].max(d2);
        }
        takens.push(dy.sqrt());
        projected.push(dphi.sqrt());
    }
    Ok(InterstateDistances {
        takens,
        projected,
        norm_min: dmin.iter().sum::<f64>().sqrt(),
        norm_max: dmax.iter().sum::<f64>().sqrt(),
        h,
    })
}

/// Distortion bounds `ε₁ = 1 − ε_min`, `ε₂ = ε_max − 1` of the projection onto `nodes`.
pub fn epsilon_bounds(embed: &DelayMatrix, states: &StateMatrix, nodes: &[usize], mode: EpsilonMode) -> Result<EpsilonBounds> {
    let d = interstate_distances(embed, states.as_mat(), states.first_index(), nodes)?;
    bounds_from_distances(&d, mode)
}

pub fn bounds_from_distances(d: &InterstateDistances, mode: EpsilonMode) -> Result<EpsilonBounds> {
    let mean_takens = crate::stats::mean(&d.takens);
    let (eps_min, eps_max) = match mode {
        EpsilonMode::MeanDistance => {
            if !(mean_takens > 0.0) {
                return Err(Error::Degenerate("Takens trajectory does not move".into()));
            }
            (d.norm_min / mean_takens, d.norm_max / mean_takens)
        }
        EpsilonMode::PerPairRatio => {
            let ratios: Vec<f64> =
                d.takens.iter().zip(&d.projected).filter(|(t, _)| **t > 0.0).map(|(t, p)| p / t).collect();
            if ratios.is_empty() {
                return Err(Error::Degenerate("Takens trajectory does not move".into()));
            }
            (ratios.iter().copied().fold(f64::INFINITY, f64::min), ratios.iter().copied().fold(0.0, f64::max))
        }
    };
    Ok(EpsilonBounds {
        eps1: 1.0 - eps_min,
        eps2: eps_max - 1.0,
        eps_min,
        eps_max,
        h: d.h,
        pairs: d.takens.len(),
        mode,
        norm_min: d.norm_min,
        norm_max: d.norm_max,
        mean_takens_distance: mean_takens,
    })
}
