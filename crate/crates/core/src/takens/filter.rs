use serde::{Deserialize, Serialize};

use super::CcaProfile;
use crate::{Error, Result};

/// Lag windows `[n·τ₀ − δ, n·τ₀ + δ]` for `n = −M..=M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowFilterSpec {
    pub tau0_net: i64,
    pub delta: i64,
    #[serde(rename = "M")]
    pub m: usize,
}

impl Default for WindowFilterSpec {
    fn default() -> Self {
        Self { tau0_net: -12, delta: 3, m: 4 }
    }
}

impl WindowFilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.delta < 0 {
            return Err(Error::Parameter(format!("window half-width must be ≥ 0, got {}", self.delta)));
        }
        if self.m == 0 {
            return Err(Error::Parameter("window index bound M must be at least 1".into()));
        }
        Ok(())
    }
}

/// Nodes whose best lag falls in a window, listed once per window that
/// contains them (window-major, then node order). Nodes with a constant
/// response never qualify.
pub fn window_filter(profile: &CcaProfile, spec: &WindowFilterSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let m = spec.m as i64;
    let mut out = Vec::new();
    for n in -m..=m {
        let centre = n * spec.tau0_net;
        for (i, &lag) in profile.best_lag.iter().enumerate() {
            if !profile.constant[i] && (lag - centre).abs() <= spec.delta {
                out.push(i);
            }
        }
    }
    Ok(out)
}

/// Distinct nodes selected by [`window_filter`], ascending.
pub fn distinct(nodes: &[usize]) -> Vec<usize> {
    let mut v = nodes.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}
