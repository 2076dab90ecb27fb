use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{generate_tdla_channel, BlockFadingChannel, MacChannelSet, TapProfile};
use crate::error::{Error, Result};
use crate::ma_oamp::DecodeOptions;
use crate::pa_design::{PaScheme, DEFAULT_DELTA};
use crate::sparc::{CodeParams, DictionaryKind};

/// Channel model selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    TdlA,
    /// Single-tap profile with random per-antenna phases.
    Flat,
    /// Identity chip blocks on the antenna diagonal.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub profile: ProfileKind,
    /// Optional TOML tap profile overriding the built-in table for `tdl-a`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_path: Option<String>,
    #[serde(default = "default_delay_spread_ns")]
    pub delay_spread_ns: f64,
    pub m: usize,
    pub n_blocks: usize,
    pub mr: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub mt: usize,
    #[serde(default)]
    pub power_gain_db: f64,
    pub b: usize,
    pub l: usize,
    pub pa: PaScheme,
    pub dictionary: DictionaryKind,
    pub dictionary_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverSpec {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_v_tol")]
    pub v_tol: f64,
    #[serde(default)]
    pub damping: f64,
    #[serde(default)]
    pub empirical_xi: bool,
}

impl Default for ReceiverSpec {
    fn default() -> Self {
        Self { max_iters: default_max_iters(), v_tol: default_v_tol(), damping: 0.0, empirical_xi: false }
    }
}

impl ReceiverSpec {
    pub fn options(&self) -> DecodeOptions {
        DecodeOptions {
            max_iters: self.max_iters,
            v_tol: self.v_tol,
            damping: self.damping,
            empirical_xi: self.empirical_xi,
        }
    }
}

/// How the per-user variance path is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    /// Solve for the path whose rate suprema equal the target rates.
    Aligned,
    Uniform,
    /// Successive cancellation in `sic_order`.
    Sic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_offset")]
    pub target_snr_offset_db: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_path")]
    pub path: PathKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sic_order: Option<Vec<usize>>,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
}

impl Default for DesignSpec {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            target_snr_offset_db: default_offset(),
            budget: default_budget(),
            path: default_path(),
            sic_order: None,
            kappa: default_kappa(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Operating points in dB, absolute or relative to the limit SNR.
    pub snr_db: Vec<f64>,
    #[serde(default = "default_true")]
    pub relative_to_limit: bool,
    pub trials: usize,
    pub seed: u64,
    /// Target rates in bits per received block symbol; defaults to the code rates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_rates_bits: Option<Vec<f64>>,
    /// Expected limit SNR, checked against the computed one by `sweep`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_limit_snr_db: Option<f64>,
}

/// Complete experiment description. Every seed is explicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub channel: ChannelSpec,
    #[serde(rename = "user")]
    pub users: Vec<UserSpec>,
    #[serde(default)]
    pub receiver: ReceiverSpec,
    #[serde(default)]
    pub design: DesignSpec,
    pub experiment: ExperimentSpec,
}

fn default_delay_spread_ns() -> f64 {
    100.0
}
fn default_max_iters() -> usize {
    100
}
fn default_v_tol() -> f64 {
    1e-8
}
fn default_delta() -> f64 {
    DEFAULT_DELTA
}
fn default_offset() -> f64 {
    3.0
}
fn default_budget() -> usize {
    60
}
fn default_path() -> PathKind {
    PathKind::Aligned
}
fn default_kappa() -> f64 {
    1e6
}
fn default_true() -> bool {
    true
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Canonical TOML with every default written out.
    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml_string()?.as_bytes());
        Ok(hex::encode(&digest[..8]))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let ch = &self.channel;
        if ch.m == 0 || ch.n_blocks == 0 || ch.mr == 0 {
            return bad("channel m, n_blocks and mr must be >= 1".into());
        }
        if !(ch.delay_spread_ns > 0.0 && ch.delay_spread_ns.is_finite()) {
            return bad(format!("delay spread must be positive, got {}", ch.delay_spread_ns));
        }
        if self.users.is_empty() {
            return bad("at least one [[user]] is required".into());
        }
        for (u, spec) in self.users.iter().enumerate() {
            if spec.mt == 0 {
                return bad(format!("user {u}: mt must be >= 1"));
            }
            if !spec.power_gain_db.is_finite() {
                return bad(format!("user {u}: power gain must be finite"));
            }
            self.code_params(u).map_err(|e| Error::Config(format!("user {u}: {e}")))?;
        }
        let r = &self.receiver;
        if r.max_iters == 0 {
            return bad("receiver max_iters must be >= 1".into());
        }
        if !(r.v_tol >= 0.0) || !(0.0..1.0).contains(&r.damping) {
            return bad("receiver needs v_tol >= 0 and damping in [0, 1)".into());
        }
        let d = &self.design;
        if !(d.delta > 0.0 && d.delta.is_finite()) {
            return bad(format!("design delta must be positive, got {}", d.delta));
        }
        if !(0.0..=6.0).contains(&d.target_snr_offset_db) {
            return bad(format!("target SNR offset must lie in [0, 6] dB, got {}", d.target_snr_offset_db));
        }
        if !(d.kappa > 1.0 && d.kappa.is_finite()) {
            return bad(format!("kappa must exceed 1, got {}", d.kappa));
        }
        if d.path == PathKind::Sic {
            let order = d.sic_order.as_ref().ok_or_else(|| Error::Config("sic path needs sic_order".into()))?;
            let mut seen = vec![false; self.users.len()];
            if order.len() != seen.len() || order.iter().any(|&k| k >= seen.len() || std::mem::replace(&mut seen[k], true)) {
                return bad(format!("sic_order {order:?} is not a permutation of the users"));
            }
        }
        let e = &self.experiment;
        if e.snr_db.is_empty() {
            return bad("experiment snr_db list is empty".into());
        }
        if e.snr_db.iter().any(|x| !x.is_finite()) {
            return bad("experiment snr_db entries must be finite".into());
        }
        if e.trials == 0 {
            return bad("experiment trials must be >= 1".into());
        }
        if let Some(rates) = &e.target_rates_bits {
            if rates.len() != self.users.len() || rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
                return bad("target_rates_bits needs one positive rate per user".into());
            }
        }
        Ok(())
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn m_bar(&self) -> usize {
        self.channel.m * self.channel.n_blocks
    }

    pub fn code_params(&self, u: usize) -> Result<CodeParams> {
        let spec = &self.users[u];
        CodeParams::new(spec.b, spec.l, spec.mt * self.m_bar(), self.m_bar())
    }

    /// Target rates in nats per received block symbol.
    pub fn target_rates(&self) -> Result<Vec<f64>> {
        match &self.experiment.target_rates_bits {
            Some(r) => Ok(r.iter().map(|x| x * std::f64::consts::LN_2).collect()),
            None => (0..self.num_users()).map(|u| Ok(self.code_params(u)?.rate_nats)).collect(),
        }
    }

    /// Tap profile for the random channel kinds.
    pub fn tap_profile(&self) -> Result<TapProfile> {
        match (&self.channel.profile, &self.channel.profile_path) {
            (ProfileKind::TdlA, Some(p)) => TapProfile::load(p),
            (ProfileKind::TdlA, None) => Ok(TapProfile::tdl_a(self.channel.delay_spread_ns / 1e9)),
            _ => Ok(TapProfile::flat()),
        }
    }

    /// Channel set at unit noise variance.
    pub fn channel_set(&self) -> Result<MacChannelSet> {
        let ch = &self.channel;
        let profile = self.tap_profile()?;
        let users = self
            .users
            .iter()
            .enumerate()
            .map(|(u, spec)| match ch.profile {
                ProfileKind::Identity => {
                    let base = BlockFadingChannel::identity(u, ch.m, ch.n_blocks, ch.mr, spec.mt)?;
                    Ok(base.scaled(10f64.powf(spec.power_gain_db / 20.0)))
                }
                _ => generate_tdla_channel(ch.seed, &profile, u, ch.m, ch.n_blocks, ch.mr, spec.mt, spec.power_gain_db),
            })
            .collect::<Result<Vec<_>>>()?;
        MacChannelSet::new(users, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
[channel]
profile = "tdl-a"
m = 4
n_blocks = 2
mr = 2
seed = 3

[[user]]
mt = 2
b = 8
l = 4
pa = "average"
dictionary = "fast-transform"
dictionary_seed = 11

[experiment]
snr_db = [0.0, 3.0]
trials = 2
seed = 5
"#;

    #[test]
    fn defaults_are_written_back() {
        let cfg = SimConfig::from_toml_str(TINY).unwrap();
        assert_eq!(cfg.receiver.max_iters, 100);
        assert_eq!(cfg.design.path, PathKind::Aligned);
        let text = cfg.to_toml_string().unwrap();
        assert!(text.contains("max_iters = 100"));
        assert!(text.contains("target_snr_offset_db = 3.0"));
        let again = SimConfig::from_toml_str(&text).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn hash_tracks_content() {
        let a = SimConfig::from_toml_str(TINY).unwrap();
        let mut b = a.clone();
        b.experiment.seed += 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 16);
    }

    #[test]
    fn rejects_bad_experiments() {
        let empty = TINY.replace("snr_db = [0.0, 3.0]", "snr_db = []");
        assert!(matches!(SimConfig::from_toml_str(&empty), Err(Error::Config(_))));
        let zero = TINY.replace("trials = 2", "trials = 0");
        assert!(matches!(SimConfig::from_toml_str(&zero), Err(Error::Config(_))));
        let unknown = TINY.replace("seed = 5", "seed = 5\nsnr = 1");
        assert!(matches!(SimConfig::from_toml_str(&unknown), Err(Error::Config(_))));
        let oversized = TINY.replace("l = 4", "l = 1");
        assert!(matches!(SimConfig::from_toml_str(&oversized), Err(Error::Config(_))));
    }

    #[test]
    fn channel_users_are_independent() {
        let text = TINY.replace(
            "[experiment]",
            "[[user]]\nmt = 2\nb = 8\nl = 4\npa = \"average\"\ndictionary = \"fast-transform\"\ndictionary_seed = 12\n\n[experiment]",
        );
        let cfg = SimConfig::from_toml_str(&text).unwrap();
        let set = cfg.channel_set().unwrap();
        let a = set.representative(0);
        let b = set.representative(1);
        assert!((a - b).norm() > 1e-3);
    }
}
