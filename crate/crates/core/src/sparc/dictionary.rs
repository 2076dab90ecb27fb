//! Random semi-unitary dictionaries `Xi` (`M x N`, orthonormal rows).

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `N` for which the dense partial-Haar construction is allowed.
pub const PARTIAL_HAAR_MAX_N: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DictionaryKind {
    PartialHaar,
    FastTransform,
}

enum Inner {
    Haar(DMatrix<Complex64>),
    Fast {
        perm: Vec<usize>,
        phases: Vec<Complex64>,
        select: Vec<usize>,
        fft: Arc<dyn Fft<f64>>,
        ifft: Arc<dyn Fft<f64>>,
    },
}

/// Seeded semi-unitary operator with forward and adjoint application.
///
/// The fast variant is `Xi = S F D P`: a random permutation `P`, random
/// unit-modulus diagonal `D`, unitary DFT `F` and a random row selection `S`.
pub struct DictionaryOp {
    kind: DictionaryKind,
    seed: u64,
    m_len: usize,
    n_len: usize,
    inner: Inner,
}

impl fmt::Debug for DictionaryOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DictionaryOp")
            .field("kind", &self.kind)
            .field("seed", &self.seed)
            .field("m_len", &self.m_len)
            .field("n_len", &self.n_len)
            .finish()
    }
}

impl DictionaryOp {
    pub fn build(kind: DictionaryKind, seed: u64, m_len: usize, n_len: usize) -> Result<Self> {
        if m_len == 0 || m_len > n_len {
            return Err(Error::Dimension(format!(
                "dictionary needs 1 <= M <= N, got M = {m_len}, N = {n_len}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = match kind {
            DictionaryKind::PartialHaar => {
                if n_len > PARTIAL_HAAR_MAX_N {
                    return Err(Error::SizeCap(format!(
                        "partial-haar dictionaries are limited to N <= {PARTIAL_HAAR_MAX_N} (got {n_len}); use fast-transform"
                    )));
                }
                let g = DMatrix::<Complex64>::from_fn(n_len, m_len, |_, _| {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    Complex64::new(re, im)
                });
                let q = g.qr().q();
                Inner::Haar(q.adjoint())
            }
            DictionaryKind::FastTransform => {
                let mut perm: Vec<usize> = (0..n_len).collect();
                for i in (1..n_len).rev() {
                    let j = rng.random_range(0..=i);
                    perm.swap(i, j);
                }
                let phases = (0..n_len)
                    .map(|_| {
                        let th = rng.random::<f64>() * std::f64::consts::TAU;
                        Complex64::from_polar(1.0, th)
                    })
                    .collect();
                let mut select = rand::seq::index::sample(&mut rng, n_len, m_len).into_vec();
                select.sort_unstable();
                let mut planner = FftPlanner::new();
                Inner::Fast {
                    perm,
                    phases,
                    select,
                    fft: planner.plan_fft_forward(n_len),
                    ifft: planner.plan_fft_inverse(n_len),
                }
            }
        };
        Ok(Self { kind, seed, m_len, n_len, inner })
    }

    pub fn kind(&self) -> DictionaryKind {
        self.kind
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn m_len(&self) -> usize {
        self.m_len
    }
    pub fn n_len(&self) -> usize {
        self.n_len
    }

    /// `Xi s`.
    pub fn forward(&self, s: &[Complex64]) -> Result<Vec<Complex64>> {
        if s.len() != self.n_len {
            return Err(Error::Dimension(format!(
                "dictionary input has length {}, expected {}",
                s.len(),
                self.n_len
            )));
        }
        match &self.inner {
            Inner::Haar(xi) => Ok((xi * nalgebra::DVector::from_column_slice(s)).as_slice().to_vec()),
            Inner::Fast { perm, phases, select, fft, .. } => {
                let mut buf: Vec<Complex64> =
                    perm.iter().zip(phases).map(|(&p, &d)| d * s[p]).collect();
                fft.process(&mut buf);
                let norm = 1.0 / (self.n_len as f64).sqrt();
                Ok(select.iter().map(|&k| buf[k] * norm).collect())
            }
        }
    }

    /// `Xi^H x`.
    pub fn adjoint(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.m_len {
            return Err(Error::Dimension(format!(
                "dictionary adjoint input has length {}, expected {}",
                x.len(),
                self.m_len
            )));
        }
        match &self.inner {
            Inner::Haar(xi) => {
                Ok((xi.adjoint() * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec())
            }
            Inner::Fast { perm, phases, select, ifft, .. } => {
                let mut buf = vec![Complex64::new(0.0, 0.0); self.n_len];
                for (&k, &v) in select.iter().zip(x) {
                    buf[k] = v;
                }
                ifft.process(&mut buf);
                let norm = 1.0 / (self.n_len as f64).sqrt();
                let mut s = vec![Complex64::new(0.0, 0.0); self.n_len];
                for ((&p, d), b) in perm.iter().zip(phases).zip(buf) {
                    s[p] = d.conj() * b * norm;
                }
                Ok(s)
            }
        }
    }

    /// Dense `M x N` matrix (verification on small sizes).
    pub fn dense(&self) -> DMatrix<Complex64> {
        match &self.inner {
            Inner::Haar(xi) => xi.clone(),
            Inner::Fast { .. } => {
                let mut out = DMatrix::zeros(self.m_len, self.n_len);
                let mut e = vec![Complex64::new(0.0, 0.0); self.n_len];
                for j in 0..self.n_len {
                    e[j] = Complex64::new(1.0, 0.0);
                    let col = self.forward(&e).expect("length checked");
                    out.column_mut(j).copy_from_slice(&col);
                    e[j] = Complex64::new(0.0, 0.0);
                }
                out
            }
        }
    }
}
