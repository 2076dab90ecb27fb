//! Tapped-delay-line profiles and the OFDM frequency-domain channel
//! generator.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BlockFadingChannel, ChipBlock};
use crate::error::{Error, Result};

/// Normalized delays and powers (dB) of the 23-tap TDL-A model.
pub const TDL_A_TABLE: [(f64, f64); 23] = [
    (0.0000, -13.4),
    (0.3819, 0.0),
    (0.4025, -2.2),
    (0.5868, -4.0),
    (0.4610, -6.0),
    (0.5375, -8.2),
    (0.6708, -9.9),
    (0.5750, -10.5),
    (0.7618, -7.5),
    (1.5375, -15.9),
    (1.8978, -6.6),
    (2.2242, -16.7),
    (2.1718, -12.4),
    (2.4942, -15.2),
    (2.5119, -10.8),
    (3.0582, -11.3),
    (4.0810, -12.7),
    (4.4579, -16.2),
    (4.5695, -18.3),
    (4.7966, -18.9),
    (5.0066, -16.6),
    (5.3043, -19.9),
    (9.6586, -29.7),
];

/// Default RMS delay spread used to scale the normalized TDL-A table.
pub const DEFAULT_DELAY_SPREAD_S: f64 = 100e-9;

/// A power-delay profile together with the OFDM numerology it is sampled
/// on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapProfile {
    #[serde(default)]
    pub name: String,
    pub delays_s: Vec<f64>,
    pub powers_db: Vec<f64>,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
}

impl TapProfile {
    /// TDL-A with the given delay spread, 40 MHz bandwidth at 4 GHz.
    pub fn tdl_a(delay_spread_s: f64) -> Self {
        Self {
            name: "TDL-A".into(),
            delays_s: TDL_A_TABLE.iter().map(|(d, _)| d * delay_spread_s).collect(),
            powers_db: TDL_A_TABLE.iter().map(|(_, p)| *p).collect(),
            bandwidth_hz: 40e6,
            carrier_hz: 4e9,
        }
    }

    /// One tap at zero delay and 0 dB: a frequency-flat channel.
    pub fn flat() -> Self {
        Self {
            name: "flat".into(),
            delays_s: vec![0.0],
            powers_db: vec![0.0],
            bandwidth_hz: 40e6,
            carrier_hz: 4e9,
        }
    }

    pub fn num_taps(&self) -> usize {
        self.delays_s.len()
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let p: Self = toml::from_str(s)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.delays_s.len() != self.powers_db.len() {
            return Err(Error::Dimension(format!(
                "profile has {} delays and {} powers",
                self.delays_s.len(),
                self.powers_db.len()
            )));
        }
        if self.delays_s.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::InvalidArgument("tap delays must be finite and >= 0".into()));
        }
        if self.powers_db.iter().any(|p| p.is_nan() || *p == f64::INFINITY) {
            return Err(Error::InvalidArgument("tap powers must be finite dB or -inf".into()));
        }
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz.is_finite()) {
            return Err(Error::InvalidArgument("bandwidth must be positive".into()));
        }
        if !self.carrier_hz.is_finite() {
            return Err(Error::NonFinite("carrier frequency"));
        }
        Ok(())
    }

    /// Linear tap powers normalized to unit sum.
    fn normalized_powers(&self) -> Result<Vec<f64>> {
        let lin: Vec<f64> = self.powers_db.iter().map(|p| 10f64.powf(p / 10.0)).collect();
        let total: f64 = lin.iter().sum();
        if self.delays_s.is_empty() || !(total > 0.0) {
            return Err(Error::DegenerateChannel("profile carries zero power".into()));
        }
        Ok(lin.into_iter().map(|p| p / total).collect())
    }
}

/// Draw a block-fading OFDM channel from a tap profile.
///
/// Every antenna pair shares the tap delays and powers and gets its own
/// independent uniform phase per tap; `user_id` selects an independent RNG
/// stream under the same seed. Block `(r, t)` is diagonal with the
/// frequency response at `m` subcarriers spaced `W / m` around `f_c`.
#[allow(clippy::too_many_arguments)]
pub fn generate_tdla_channel(
    seed: u64,
    profile: &TapProfile,
    user_id: usize,
    m: usize,
    n_blocks: usize,
    mr: usize,
    mt: usize,
    power_gain_db: f64,
) -> Result<BlockFadingChannel> {
    if m == 0 || n_blocks == 0 || mr == 0 || mt == 0 {
        return Err(Error::Dimension(format!(
            "channel dimensions must be >= 1 (m={m}, n_blocks={n_blocks}, mr={mr}, mt={mt})"
        )));
    }
    profile.validate()?;
    let powers = profile.normalized_powers()?;
    let scale = 10f64.powf(power_gain_db / 20.0);
    let spacing = profile.bandwidth_hz / m as f64;
    let freqs: Vec<f64> = (0..m)
        .map(|i| profile.carrier_hz + (i as f64 - (m / 2) as f64) * spacing)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user_id as u64);
    let mut blocks = Vec::with_capacity(mr * mt);
    for _r in 0..mr {
        for _t in 0..mt {
            let taps: Vec<Complex64> = powers
                .iter()
                .map(|&p| {
                    let theta = rng.random::<f64>() * 2.0 * PI;
                    Complex64::from_polar(p.sqrt() * scale, theta)
                })
                .collect();
            let response: Vec<Complex64> = freqs
                .iter()
                .map(|&f| {
                    taps.iter()
                        .zip(&profile.delays_s)
                        .map(|(g, &tau)| {
                            // reduce the phase modulo one turn before scaling by 2 pi
                            let turns = (f * tau).fract();
                            g * Complex64::from_polar(1.0, -2.0 * PI * turns)
                        })
                        .sum()
                })
                .collect();
            blocks.push(ChipBlock::Diagonal(response));
        }
    }
    BlockFadingChannel::new(user_id, m, n_blocks, mr, mt, blocks, power_gain_db)
}
