//! Block-structured multi-user MIMO channel and the compressed Gram and
//! resolvent algebra built on it.
//!
//! User `u`'s channel `H_u` is an `mr x mt` grid of `m n x m n` blocks, each
//! the `n`-fold block-diagonal repetition of one `m x m` chip block. Vectors
//! are antenna-major: entry `(a, j, i)` (antenna, chip block, chip) sits at
//! `a * m * n + j * m + i`. Under the permutation that groups all antennas of
//! one chip block together, `H_u H_u^H` becomes `n` copies of a single
//! `(m mr) x (m mr)` representative block, so every Gram, resolvent, trace
//! and log-determinant is computed on that block alone.

mod profile;

pub use profile::{generate_tdla_channel, TapProfile, DEFAULT_DELAY_SPREAD_S, TDL_A_TABLE};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// One `m x m` chip block of a channel grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChipBlock {
    /// Frequency-domain (OFDM) block: only the diagonal is stored.
    Diagonal(Vec<Complex64>),
    /// General block, row-major.
    Dense(Vec<Complex64>),
}

impl ChipBlock {
    fn check(&self, m: usize) -> Result<()> {
        let (len, want) = match self {
            ChipBlock::Diagonal(d) => (d.len(), m),
            ChipBlock::Dense(d) => (d.len(), m * m),
        };
        if len != want {
            return Err(Error::Dimension(format!("chip block has {len} entries, expected {want}")));
        }
        Ok(())
    }

    fn to_matrix(&self, m: usize) -> CMatrix {
        match self {
            ChipBlock::Diagonal(d) => CMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)),
            ChipBlock::Dense(d) => CMatrix::from_row_slice(m, m, d),
        }
    }

    fn frobenius_sq(&self) -> f64 {
        match self {
            ChipBlock::Diagonal(d) | ChipBlock::Dense(d) => d.iter().map(|z| z.norm_sqr()).sum(),
        }
    }

    /// `out += B x` (or `B^H x` when `adjoint`).
    fn mul_acc(&self, m: usize, x: &[Complex64], out: &mut [Complex64], adjoint: bool) {
        match self {
            ChipBlock::Diagonal(d) => {
                for i in 0..m {
                    let g = if adjoint { d[i].conj() } else { d[i] };
                    out[i] += g * x[i];
                }
            }
            ChipBlock::Dense(d) => {
                for i in 0..m {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in 0..m {
                        acc += if adjoint { d[k * m + i].conj() * x[k] } else { d[i * m + k] * x[k] };
                    }
                    out[i] += acc;
                }
            }
        }
    }

    fn scale(&mut self, g: f64) {
        match self {
            ChipBlock::Diagonal(d) | ChipBlock::Dense(d) => d.iter_mut().for_each(|z| *z *= g),
        }
    }
}

/// Static block-fading MIMO channel of one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockFadingChannel {
    user_id: usize,
    m: usize,
    n_blocks: usize,
    mr: usize,
    mt: usize,
    /// Row-major `mr x mt` grid.
    blocks: Vec<ChipBlock>,
    power_gain_db: f64,
}

impl BlockFadingChannel {
    pub fn new(
        user_id: usize,
        m: usize,
        n_blocks: usize,
        mr: usize,
        mt: usize,
        blocks: Vec<ChipBlock>,
        power_gain_db: f64,
    ) -> Result<Self> {
        if m == 0 || n_blocks == 0 || mr == 0 || mt == 0 {
            return Err(Error::Dimension("channel dimensions must be >= 1".into()));
        }
        if blocks.len() != mr * mt {
            return Err(Error::Dimension(format!(
                "expected {} chip blocks, got {}",
                mr * mt,
                blocks.len()
            )));
        }
        let mut energy = 0.0;
        for b in &blocks {
            b.check(m)?;
            let e = b.frobenius_sq();
            if !e.is_finite() {
                return Err(Error::NonFinite("channel block"));
            }
            energy += e;
        }
        if energy == 0.0 {
            return Err(Error::DegenerateChannel("all chip blocks are zero".into()));
        }
        Ok(Self { user_id, m, n_blocks, mr, mt, blocks, power_gain_db })
    }

    /// Identity chip blocks on the `min(mr, mt)` diagonal antenna pairs.
    pub fn identity(user_id: usize, m: usize, n_blocks: usize, mr: usize, mt: usize) -> Result<Self> {
        let blocks = (0..mr * mt)
            .map(|k| {
                let v = if k / mt == k % mt { 1.0 } else { 0.0 };
                ChipBlock::Diagonal(vec![Complex64::new(v, 0.0); m])
            })
            .collect();
        Self::new(user_id, m, n_blocks, mr, mt, blocks, 0.0)
    }

    pub fn user_id(&self) -> usize {
        self.user_id
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }
    pub fn mr(&self) -> usize {
        self.mr
    }
    pub fn mt(&self) -> usize {
        self.mt
    }
    pub fn blocks(&self) -> &[ChipBlock] {
        &self.blocks
    }
    pub fn power_gain_db(&self) -> f64 {
        self.power_gain_db
    }

    /// Length of the transmitted vector, `mt m n`.
    pub fn input_len(&self) -> usize {
        self.mt * self.m * self.n_blocks
    }

    /// Length of the received vector, `mr m n`.
    pub fn output_len(&self) -> usize {
        self.mr * self.m * self.n_blocks
    }

    pub fn block(&self, r: usize, t: usize) -> &ChipBlock {
        &self.blocks[r * self.mt + t]
    }

    /// Multiply every chip block by `g`.
    pub fn scaled(&self, g: f64) -> Self {
        let mut out = self.clone();
        out.blocks.iter_mut().for_each(|b| b.scale(g));
        out.power_gain_db += 20.0 * g.abs().log10();
        out
    }

    /// The `(m mr) x (m mt)` matrix of one chip block across all antennas.
    pub fn representative(&self) -> CMatrix {
        let m = self.m;
        let mut h = CMatrix::zeros(self.mr * m, self.mt * m);
        for r in 0..self.mr {
            for t in 0..self.mt {
                let b = self.block(r, t).to_matrix(m);
                h.view_mut((r * m, t * m), (m, m)).copy_from(&b);
            }
        }
        h
    }

    /// `H_u x`, computed per chip block and antenna pair.
    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.input_len() {
            return Err(Error::Dimension(format!(
                "channel input has length {}, expected {}",
                x.len(),
                self.input_len()
            )));
        }
        let mn = self.m * self.n_blocks;
        let mut y = vec![Complex64::new(0.0, 0.0); self.output_len()];
        for r in 0..self.mr {
            for t in 0..self.mt {
                let b = self.block(r, t);
                for j in 0..self.n_blocks {
                    let off_in = t * mn + j * self.m;
                    let off_out = r * mn + j * self.m;
                    b.mul_acc(
                        self.m,
                        &x[off_in..off_in + self.m],
                        &mut y[off_out..off_out + self.m],
                        false,
                    );
                }
            }
        }
        Ok(y)
    }

    /// `H_u^H y`.
    pub fn apply_adjoint(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        if y.len() != self.output_len() {
            return Err(Error::Dimension(format!(
                "channel adjoint input has length {}, expected {}",
                y.len(),
                self.output_len()
            )));
        }
        let mn = self.m * self.n_blocks;
        let mut x = vec![Complex64::new(0.0, 0.0); self.input_len()];
        for r in 0..self.mr {
            for t in 0..self.mt {
                let b = self.block(r, t);
                for j in 0..self.n_blocks {
                    let off_in = r * mn + j * self.m;
                    let off_out = t * mn + j * self.m;
                    b.mul_acc(
                        self.m,
                        &y[off_in..off_in + self.m],
                        &mut x[off_out..off_out + self.m],
                        true,
                    );
                }
            }
        }
        Ok(x)
    }

    /// Full dense `H_u` in natural (antenna-major) ordering. Intended for
    /// small verification instances only.
    pub fn dense(&self) -> CMatrix {
        let (m, n, mn) = (self.m, self.n_blocks, self.m * self.n_blocks);
        let mut h = CMatrix::zeros(self.output_len(), self.input_len());
        for r in 0..self.mr {
            for t in 0..self.mt {
                let b = self.block(r, t).to_matrix(m);
                for j in 0..n {
                    h.view_mut((r * mn + j * m, t * mn + j * m), (m, m)).copy_from(&b);
                }
            }
        }
        h
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        Self::new(c.user_id, c.m, c.n_blocks, c.mr, c.mt, c.blocks, c.power_gain_db)
    }
}

/// All users' channels plus the receiver noise level.
#[derive(Debug, Clone)]
pub struct MacChannelSet {
    users: Vec<BlockFadingChannel>,
    sigma2: f64,
    reps: Vec<CMatrix>,
    grams: Vec<CMatrix>,
}

impl MacChannelSet {
    pub fn new(users: Vec<BlockFadingChannel>, sigma2: f64) -> Result<Self> {
        let first = users
            .first()
            .ok_or_else(|| Error::InvalidArgument("channel set needs at least one user".into()))?;
        let (m, n, mr) = (first.m, first.n_blocks, first.mr);
        if users.iter().any(|u| u.m != m || u.n_blocks != n || u.mr != mr) {
            return Err(Error::Dimension(
                "all users must share m, n_blocks and receive antennas".into(),
            ));
        }
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise variance must be positive, got {sigma2}")));
        }
        let reps: Vec<CMatrix> = users.iter().map(|u| u.representative()).collect();
        let grams = reps.iter().map(|h| h * h.adjoint()).collect();
        Ok(Self { users, sigma2, reps, grams })
    }

    /// Same channels at another noise level.
    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise variance must be positive, got {sigma2}")));
        }
        let mut out = self.clone();
        out.sigma2 = sigma2;
        Ok(out)
    }

    pub fn with_snr_db(&self, snr_db: f64) -> Result<Self> {
        self.with_sigma2(10f64.powf(-snr_db / 10.0))
    }

    pub fn users(&self) -> &[BlockFadingChannel] {
        &self.users
    }
    pub fn num_users(&self) -> usize {
        self.users.len()
    }
    pub fn user(&self, u: usize) -> &BlockFadingChannel {
        &self.users[u]
    }
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
    pub fn snr(&self) -> f64 {
        1.0 / self.sigma2
    }
    pub fn snr_db(&self) -> f64 {
        10.0 * self.snr().log10()
    }
    pub fn m(&self) -> usize {
        self.users[0].m
    }
    pub fn n_blocks(&self) -> usize {
        self.users[0].n_blocks
    }
    pub fn mr(&self) -> usize {
        self.users[0].mr
    }
    /// Symbols per antenna, `m n` (the rate normalization).
    pub fn m_bar(&self) -> usize {
        self.m() * self.n_blocks()
    }
    /// Received vector length `mr m n`.
    pub fn rx_len(&self) -> usize {
        self.mr() * self.m_bar()
    }
    /// Side of the representative block, `m mr`.
    pub fn block_dim(&self) -> usize {
        self.m() * self.mr()
    }

    fn check_user(&self, u: usize) -> Result<()> {
        if u >= self.users.len() {
            return Err(Error::InvalidArgument(format!(
                "user index {u} out of range (U = {})",
                self.users.len()
            )));
        }
        Ok(())
    }

    /// Representative `(m mr) x (m mt)` channel block of user `u`.
    pub fn representative(&self, u: usize) -> &CMatrix {
        &self.reps[u]
    }

    /// Representative block of `H_u H_u^H`.
    pub fn gram(&self, u: usize) -> Result<&CMatrix> {
        self.check_user(u)?;
        Ok(&self.grams[u])
    }

    /// Representative block of `sum_u w_u H_u H_u^H`.
    pub fn weighted_gram(&self, weights: &[f64]) -> Result<CMatrix> {
        if weights.len() != self.users.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} users",
                weights.len(),
                self.users.len()
            )));
        }
        let d = self.block_dim();
        let mut k = CMatrix::zeros(d, d);
        for (g, &w) in self.grams.iter().zip(weights) {
            if !w.is_finite() {
                return Err(Error::NonFinite("variance vector"));
            }
            if w != 0.0 {
                k += g * Complex64::new(w, 0.0);
            }
        }
        Ok(k)
    }

    /// `Sigma(v) = (sigma^2 I + sum_u v_u H_u H_u^H)^{-1}` in compressed form.
    pub fn resolvent(&self, v: &[f64]) -> Result<GramResolvent> {
        if v.iter().any(|x| *x < 0.0) {
            return Err(Error::InvalidArgument("variances must be nonnegative".into()));
        }
        let mut k = self.weighted_gram(v)?;
        let d = self.block_dim();
        for i in 0..d {
            k[(i, i)] += Complex64::new(self.sigma2, 0.0);
        }
        let sigma = hpd_inverse(k)?;
        Ok(GramResolvent {
            sigma,
            variances: v.to_vec(),
            m: self.m(),
            mr: self.mr(),
            n_blocks: self.n_blocks(),
        })
    }

    /// `Sigma` with user `u` removed (its variance set to zero).
    pub fn resolvent_excluding(&self, v: &[f64], u: usize) -> Result<GramResolvent> {
        self.check_user(u)?;
        let mut w = v.to_vec();
        w[u] = 0.0;
        self.resolvent(&w)
    }

    /// `chi_u = tr(Sigma H_u H_u^H) / N_u`, using `n_blocks` copies of the
    /// representative trace.
    pub fn chi(&self, res: &GramResolvent, u: usize, n_u: usize) -> Result<f64> {
        self.check_user(u)?;
        if res.sigma.nrows() != self.block_dim() {
            return Err(Error::Dimension("resolvent built from a different channel set".into()));
        }
        Ok(self.n_blocks() as f64 * trace_product(&res.sigma, &self.grams[u]) / n_u as f64)
    }

    /// `log det(I + sum_u w_u H_u H_u^H)` over the full received dimension.
    pub fn log_det_i_plus(&self, weights: &[f64]) -> Result<f64> {
        let mut k = self.weighted_gram(weights)?;
        for i in 0..self.block_dim() {
            k[(i, i)] += Complex64::new(1.0, 0.0);
        }
        Ok(self.n_blocks() as f64 * hpd_log_det(k)?)
    }

    /// `sum_u H_u x_u`.
    pub fn superpose(&self, xs: &[Vec<Complex64>]) -> Result<Vec<Complex64>> {
        if xs.len() != self.users.len() {
            return Err(Error::Dimension("one transmit vector per user required".into()));
        }
        let mut y = vec![Complex64::new(0.0, 0.0); self.rx_len()];
        for (ch, x) in self.users.iter().zip(xs) {
            for (a, b) in y.iter_mut().zip(ch.apply(x)?) {
                *a += b;
            }
        }
        Ok(y)
    }
}

/// Compressed `Sigma(v)`: one representative `(m mr) x (m mr)` block that
/// repeats over the `n_blocks` chip blocks.
#[derive(Debug, Clone)]
pub struct GramResolvent {
    sigma: CMatrix,
    variances: Vec<f64>,
    m: usize,
    mr: usize,
    n_blocks: usize,
}

impl GramResolvent {
    pub fn block(&self) -> &CMatrix {
        &self.sigma
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Trace of the full operator.
    pub fn trace(&self) -> f64 {
        self.n_blocks as f64 * self.sigma.trace().re
    }

    /// `Sigma y` for a full received-length vector.
    pub fn apply(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        let (m, mr, n) = (self.m, self.mr, self.n_blocks);
        let mn = m * n;
        if y.len() != mr * mn {
            return Err(Error::Dimension(format!(
                "resolvent input has length {}, expected {}",
                y.len(),
                mr * mn
            )));
        }
        let d = m * mr;
        let mut out = vec![Complex64::new(0.0, 0.0); y.len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); d];
        for j in 0..n {
            for r in 0..mr {
                buf[r * m..(r + 1) * m].copy_from_slice(&y[r * mn + j * m..r * mn + (j + 1) * m]);
            }
            for row in 0..d {
                let mut acc = Complex64::new(0.0, 0.0);
                for (col, b) in buf.iter().enumerate() {
                    acc += self.sigma[(row, col)] * b;
                }
                let (r, i) = (row / m, row % m);
                out[r * mn + j * m + i] = acc;
            }
        }
        Ok(out)
    }

    /// Full dense operator in natural ordering (small instances only).
    pub fn dense(&self) -> CMatrix {
        let (m, mr, n) = (self.m, self.mr, self.n_blocks);
        let mn = m * n;
        let mut full = CMatrix::zeros(mr * mn, mr * mn);
        for j in 0..n {
            for r1 in 0..mr {
                for r2 in 0..mr {
                    let blk = self.sigma.view((r1 * m, r2 * m), (m, m));
                    full.view_mut((r1 * mn + j * m, r2 * mn + j * m), (m, m)).copy_from(&blk);
                }
            }
        }
        full
    }
}

/// `tr(A B)` for square matrices of equal size, real part.
pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> f64 {
    let d = a.nrows();
    let mut acc = 0.0;
    for i in 0..d {
        for k in 0..d {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

/// Inverse of a Hermitian positive definite matrix via Cholesky; the result
/// is symmetrized.
pub(crate) fn hpd_inverse(k: CMatrix) -> Result<CMatrix> {
    let chol = nalgebra::Cholesky::new(k)
        .ok_or_else(|| Error::InvalidArgument("matrix is not Hermitian positive definite".into()))?;
    let inv = chol.inverse();
    Ok((&inv + inv.adjoint()) * Complex64::new(0.5, 0.0))
}

pub(crate) fn hpd_log_det(k: CMatrix) -> Result<f64> {
    let chol = nalgebra::Cholesky::new(k)
        .ok_or_else(|| Error::InvalidArgument("matrix is not Hermitian positive definite".into()))?;
    let l = chol.l_dirty();
    Ok((0..l.nrows()).map(|i| 2.0 * l[(i, i)].re.ln()).sum())
}
