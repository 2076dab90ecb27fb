//! Scalar numerics shared by the analysis, design and decoding modules:
//! bracketed root finding, adaptive quadrature, Gauss-Hermite rules,
//! tabulated monotone curves and a few special functions.

pub mod bisect;
pub mod hermite;
pub mod monotone;
pub mod quadrature;
pub mod special;

pub use bisect::{bisect, find_root_expanding};
pub use hermite::GaussHermite;
pub use monotone::{Direction, MonotoneCurve};
pub use quadrature::{integrate, integrate_with_breaks, Integral};
