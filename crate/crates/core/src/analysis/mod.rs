//! Deterministic performance analysis: MMSE functions, S-transforms and
//! VTFs, fixed points, rate integrals, user-rate suprema and the capacity
//! region.

pub mod capacity;
pub mod gap;
pub mod mmse;
pub mod rate;
pub mod transform;

pub use capacity::{
    align_path, capacity_region, limit_snr, subset_bound, user_rate_supremum, user_rate_supremum_vtf,
    CapacityRegion,
};
pub use gap::{coding_gap, fixed_point_forward, fixed_point_mse, xi_grid, GapReport, DEFAULT_XI_FLOOR};
pub use mmse::{
    asymptotic_mmse_inverse, gaussian_mmse, gaussian_mmse_inv, gaussian_prior_mmse_mc, signal_mmse_asymptotic,
    signal_mmse_curve, transition_points, SectionMmseTable, SignalMmse,
};
pub use rate::{asymptotic_rate_closed_form, rate_from_mmse, MmseModel};
pub use transform::{s_transform, UserTransform, VariancePath, VtfCurve, DEFAULT_SIC_KAPPA};
