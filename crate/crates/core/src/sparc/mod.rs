//! Sparse regression code construction: code geometry, power allocations,
//! messages, position modulation and dictionary encoding.

mod dictionary;

pub use dictionary::{DictionaryKind, DictionaryOp, PARTIAL_HAAR_MAX_N};

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of one user's code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeParams {
    /// Section size `B`.
    pub b: usize,
    /// Number of sections `L`.
    pub l: usize,
    /// Sparse signal length `N = B L`.
    pub n_len: usize,
    /// Codeword length `M_u`.
    pub m_len: usize,
    /// Symbols per antenna `m n` used for rate normalization.
    pub m_bar: usize,
    /// `L log(B) / m_bar`, nats per received block symbol.
    pub rate_nats: f64,
}

impl CodeParams {
    pub fn new(b: usize, l: usize, m_len: usize, m_bar: usize) -> Result<Self> {
        if b < 2 {
            return Err(Error::InvalidArgument(format!("section size must be >= 2, got {b}")));
        }
        if l == 0 {
            return Err(Error::InvalidArgument("code needs at least one section".into()));
        }
        if m_bar == 0 || m_len == 0 {
            return Err(Error::Dimension("codeword length and m_bar must be positive".into()));
        }
        let n_len = b * l;
        if m_len > n_len {
            return Err(Error::Dimension(format!(
                "codeword length {m_len} exceeds sparse length {n_len}"
            )));
        }
        let rate_nats = l as f64 * (b as f64).ln() / m_bar as f64;
        Ok(Self { b, l, n_len, m_len, m_bar, rate_nats })
    }

    /// Aspect ratio `M_u / N_u`.
    pub fn beta(&self) -> f64 {
        self.m_len as f64 / self.n_len as f64
    }

    pub fn rate_bits(&self) -> f64 {
        self.rate_nats / std::f64::consts::LN_2
    }

    pub fn validate(&self) -> Result<()> {
        let fresh = Self::new(self.b, self.l, self.m_len, self.m_bar)?;
        if fresh.n_len != self.n_len || (fresh.rate_nats - self.rate_nats).abs() > 1e-12 {
            return Err(Error::InvalidArgument("stored code parameters are inconsistent".into()));
        }
        Ok(())
    }
}

/// Per-section squared amplitudes, nonincreasing and summing to `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    p: Vec<f64>,
}

impl PowerAllocation {
    const SUM_TOL: f64 = 1e-9;

    /// Validate an allocation exactly as given.
    pub fn new(p: Vec<f64>, n_len: usize) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidArgument("empty power allocation".into()));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("power allocation"));
        }
        if p.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidArgument("section powers must be nonnegative".into()));
        }
        if p.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidArgument("section powers must be nonincreasing".into()));
        }
        let sum: f64 = p.iter().sum();
        let n = n_len as f64;
        if ((sum - n) / n).abs() > Self::SUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "section powers sum to {sum}, expected {n}"
            )));
        }
        Ok(Self { p })
    }

    /// Project an arbitrary nonnegative profile onto the feasible set:
    /// nonincreasing (pool-adjacent-violators) and rescaled to sum `N`.
    pub fn project(raw: &[f64], n_len: usize) -> Result<Self> {
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("power profile"));
        }
        let clipped: Vec<f64> = raw.iter().map(|&x| x.max(0.0)).collect();
        let mut p = isotonic_nonincreasing(&clipped);
        let sum: f64 = p.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidArgument("power profile has zero total power".into()));
        }
        let scale = n_len as f64 / sum;
        p.iter_mut().for_each(|x| *x *= scale);
        // rounding can leave tiny upward steps after scaling
        for k in 1..p.len() {
            if p[k] > p[k - 1] {
                p[k] = p[k - 1];
            }
        }
        Self::new(p, n_len)
    }

    /// `p_l = N / L` for every section.
    pub fn flat(params: &CodeParams) -> Self {
        Self { p: vec![params.n_len as f64 / params.l as f64; params.l] }
    }

    pub fn powers(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Residual powers `P_l = sum_{k >= l} p_k / N`.
    pub fn residual_powers(&self, n_len: usize) -> Vec<f64> {
        let n = n_len as f64;
        let mut out = vec![0.0; self.p.len()];
        let mut acc = 0.0;
        for k in (0..self.p.len()).rev() {
            acc += self.p[k];
            out[k] = acc / n;
        }
        out
    }

    pub fn check_against(&self, params: &CodeParams) -> Result<()> {
        if self.p.len() != params.l {
            return Err(Error::Dimension(format!(
                "power allocation has {} sections, code has {}",
                self.p.len(),
                params.l
            )));
        }
        Ok(())
    }
}

fn isotonic_nonincreasing(x: &[f64]) -> Vec<f64> {
    // blocks of (sum, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(x.len());
    for &v in x {
        blocks.push((v, 1));
        while blocks.len() >= 2 {
            let (s1, c1) = blocks[blocks.len() - 2];
            let (s2, c2) = blocks[blocks.len() - 1];
            if s2 / c2 as f64 > s1 / c1 as f64 {
                blocks.pop();
                blocks.pop();
                blocks.push((s1 + s2, c1 + c2));
            } else {
                break;
            }
        }
    }
    blocks
        .into_iter()
        .flat_map(|(s, c)| std::iter::repeat_n(s / c as f64, c))
        .collect()
}

/// Selected position in each section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub indices: Vec<usize>,
}

impl Message {
    pub fn new(indices: Vec<usize>, params: &CodeParams) -> Result<Self> {
        let m = Self { indices };
        m.check(params)?;
        Ok(m)
    }

    pub fn check(&self, params: &CodeParams) -> Result<()> {
        if self.indices.len() != params.l {
            return Err(Error::Dimension(format!(
                "message has {} sections, code has {}",
                self.indices.len(),
                params.l
            )));
        }
        if let Some(&bad) = self.indices.iter().find(|&&i| i >= params.b) {
            return Err(Error::InvalidArgument(format!(
                "section index {bad} out of range for B = {}",
                params.b
            )));
        }
        Ok(())
    }

    /// Number of sections where `self` and `other` differ.
    pub fn section_errors(&self, other: &Message) -> usize {
        self.indices.iter().zip(&other.indices).filter(|(a, b)| a != b).count()
    }
}

/// Uniform i.i.d. section indices, deterministic in `seed`.
pub fn sample_message(params: &CodeParams, seed: u64) -> Message {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_message_with(params, &mut rng)
}

pub fn sample_message_with<R: Rng + ?Sized>(params: &CodeParams, rng: &mut R) -> Message {
    Message { indices: (0..params.l).map(|_| rng.random_range(0..params.b)).collect() }
}

/// Position modulation: section `l` carries `sqrt(p_l)` at `indices[l]`.
pub fn modulate(msg: &Message, pa: &PowerAllocation, params: &CodeParams) -> Result<Vec<Complex64>> {
    msg.check(params)?;
    pa.check_against(params)?;
    let mut s = vec![Complex64::new(0.0, 0.0); params.n_len];
    for (l, (&idx, &p)) in msg.indices.iter().zip(pa.powers()).enumerate() {
        s[l * params.b + idx] = Complex64::new(p.sqrt(), 0.0);
    }
    Ok(s)
}

/// Codeword `x = Xi s`.
pub fn encode(s: &[Complex64], dict: &DictionaryOp) -> Result<Vec<Complex64>> {
    dict.forward(s)
}

/// Write `index,re,im` rows for debugging dumps.
pub fn write_signal_csv<W: Write>(mut w: W, signal: &[Complex64]) -> Result<()> {
    writeln!(w, "index,re,im")?;
    for (i, z) in signal.iter().enumerate() {
        writeln!(w, "{i},{:e},{:e}", z.re, z.im)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rate_and_beta() {
        let p = CodeParams::new(32, 64, 64, 32).unwrap();
        assert_eq!(p.n_len, 2048);
        assert!((p.rate_nats - 64.0 * 32f64.ln() / 32.0).abs() < 1e-12);
        assert!((p.beta() - 1.0 / 32.0).abs() < 1e-15);
        p.validate().unwrap();
    }

    #[test]
    fn zero_sections_rejected() {
        assert!(CodeParams::new(2, 0, 1, 1).is_err());
        assert!(CodeParams::new(1, 4, 1, 1).is_err());
        assert!(CodeParams::new(2, 2, 5, 1).is_err());
    }

    #[test]
    fn power_allocation_invariants() {
        assert!(PowerAllocation::new(vec![1.0, 2.0], 3).is_err());
        assert!(PowerAllocation::new(vec![2.0, 1.0], 4).is_err());
        let pa = PowerAllocation::new(vec![3.0, 1.0], 4).unwrap();
        assert_eq!(pa.residual_powers(4), vec![1.0, 0.25]);
    }

    #[test]
    fn message_is_deterministic() {
        let p = CodeParams::new(2, 4, 8, 4).unwrap();
        assert_eq!(sample_message(&p, 77), sample_message(&p, 77));
    }

    #[test]
    fn message_indices_are_uniform() {
        let p = CodeParams::new(4, 100_000, 4, 1).unwrap();
        let msg = sample_message(&p, 2024);
        let mut counts = [0usize; 4];
        msg.indices.iter().for_each(|&i| counts[i] += 1);
        for c in counts {
            let f = c as f64 / 1e5;
            assert!((f - 0.25).abs() < 0.01, "{counts:?}");
        }
    }

    #[test]
    fn modulate_examples() {
        let p = CodeParams::new(2, 1, 1, 1).unwrap();
        let pa = PowerAllocation::new(vec![2.0], 2).unwrap();
        let s = modulate(&Message::new(vec![1], &p).unwrap(), &pa, &p).unwrap();
        assert_eq!(s[0], Complex64::new(0.0, 0.0));
        assert!((s[1].re - 2f64.sqrt()).abs() < 1e-15);

        let p = CodeParams::new(8, 5, 8, 1).unwrap();
        let s = modulate(&sample_message(&p, 3), &PowerAllocation::flat(&p), &p).unwrap();
        for z in s.iter().filter(|z| z.norm() > 0.0) {
            assert!((z.re - 8f64.sqrt()).abs() < 1e-12);
        }
        let bad = Message { indices: vec![8, 0, 0, 0, 0] };
        assert!(modulate(&bad, &PowerAllocation::flat(&p), &p).is_err());
    }

    proptest! {
        #[test]
        fn modulated_energy_equals_n(
            b in 2usize..9, l in 1usize..12, seed in any::<u64>(),
            raw in proptest::collection::vec(0.01f64..10.0, 12),
        ) {
            let params = CodeParams::new(b, l, 1, 1).unwrap();
            let pa = PowerAllocation::project(&raw[..l], params.n_len).unwrap();
            let s = modulate(&sample_message(&params, seed), &pa, &params).unwrap();
            let e: f64 = s.iter().map(|z| z.norm_sqr()).sum();
            prop_assert!((e - params.n_len as f64).abs() < 1e-9 * params.n_len as f64);
        }

        #[test]
        fn projection_is_feasible(raw in proptest::collection::vec(0.0f64..5.0, 1..50)) {
            prop_assume!(raw.iter().sum::<f64>() > 1e-6);
            let n = 7 * raw.len();
            let pa = PowerAllocation::project(&raw, n).unwrap();
            prop_assert!(pa.powers().windows(2).all(|w| w[1] <= w[0]));
            prop_assert!((pa.powers().iter().sum::<f64>() - n as f64).abs() < 1e-9 * n as f64);
        }
    }
}
