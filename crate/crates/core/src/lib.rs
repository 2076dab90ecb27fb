//! Sparse regression codes over MIMO multiple-access channels.
//!
//! The crate covers the whole chain: block-fading channel generation with
//! compressed Gram algebra ([`channel`]), position-modulated code
//! construction and randomized dictionaries ([`sparc`]), the MA-OAMP
//! iterative receiver with its state evolution ([`ma_oamp`]), capacity
//! region and user-rate analysis ([`analysis`]), power allocation design
//! ([`pa_design`]) and the Monte Carlo experiment harness ([`harness`]).

pub mod analysis;
pub mod channel;
pub mod error;
pub mod harness;
pub mod ma_oamp;
pub mod numeric;
pub mod pa_design;
pub mod sparc;

pub use error::{Error, Result};
