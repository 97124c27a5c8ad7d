//! Node responses read as delay coordinates: per-node cross-correlation
//! profiles against the input, lag-window readout filters, the distortion
//! bounds of the implicit random projection, and the sweeps built on them.

mod bounds;
mod cca;
mod filter;
mod scan;

pub use bounds::{bounds_from_distances, epsilon_bounds, interstate_distances, EpsilonBounds, EpsilonMode, InterstateDistances};
pub use cca::{cca_profile, cross_correlation, lagged_correlation, CcaProfile, DEFAULT_MAX_LAG};
pub use filter::{distinct, window_filter, WindowFilterSpec};
pub use scan::{
    cca_ensemble, lag_spread, mu_scan, tau_scan, training_profile, MuScanConfig, MuScanRow, ProjectionNodes,
    TauScanConfig, TauScanResult, TauScanRow,
};
