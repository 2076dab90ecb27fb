//! S-transforms and variational transfer functions along variance paths.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::channel::{CMatrix, MacChannelSet};
use crate::error::{Error, Result};
use crate::numeric::bisect;

/// Coordinated variance schedule `v_u(g) = gamma_u / (gamma_u + g)`,
/// `g in [0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariancePath {
    gammas: Vec<f64>,
}

/// Default `kappa` standing in for the `kappa -> inf` SIC limit.
pub const DEFAULT_SIC_KAPPA: f64 = 1e6;

impl VariancePath {
    pub fn new(gammas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() {
            return Err(Error::InvalidArgument("variance path needs at least one user".into()));
        }
        if gammas.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::InvalidArgument(format!("path gammas must be positive, got {gammas:?}")));
        }
        Ok(Self { gammas })
    }

    /// All users decrease in lockstep.
    pub fn uniform(users: usize) -> Result<Self> {
        Self::new(vec![1.0; users])
    }

    /// SIC path for the permutation `order = [k_1, ..., k_U]`:
    /// `gamma_{k_i} = kappa^(U - i)`. User `k_U` is cancelled first and
    /// `k_1` is decoded last, interference-free.
    pub fn sic(order: &[usize], kappa: f64) -> Result<Self> {
        let u = order.len();
        let mut seen = vec![false; u];
        for &k in order {
            if k >= u || seen[k] {
                return Err(Error::InvalidArgument(format!("{order:?} is not a permutation")));
            }
            seen[k] = true;
        }
        if !(kappa > 1.0 && kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!("kappa must exceed 1, got {kappa}")));
        }
        let mut gammas = vec![0.0; u];
        for (i, &k) in order.iter().enumerate() {
            gammas[k] = kappa.powi((u - 1 - i) as i32);
        }
        Self::new(gammas)
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    pub fn num_users(&self) -> usize {
        self.gammas.len()
    }

    /// Variances at path parameter `g`.
    pub fn variances(&self, g: f64) -> Vec<f64> {
        self.gammas
            .iter()
            .map(|&c| if g.is_infinite() { 0.0 } else { c / (c + g) })
            .collect()
    }

    /// Path parameter at which user `u` has `v_u = 1 / rho`; below `rho = 1`
    /// the path stays at its start `g = 0`.
    pub fn parameter_for(&self, u: usize, rho: f64) -> f64 {
        (self.gammas[u] * (rho - 1.0)).max(0.0)
    }

    /// Variances on the path when user `u` sits at `v_u = 1 / rho`. For
    /// `rho < 1` the other users are held at the path start.
    pub fn coupled(&self, u: usize, rho: f64) -> Vec<f64> {
        let mut v = self.variances(self.parameter_for(u, rho));
        v[u] = 1.0 / rho;
        v
    }
}

/// Eigenvalues of the representative block of `H_u^H Sigma_{\u} H_u`.
fn effective_eigenvalues(set: &MacChannelSet, user: usize, v: &[f64]) -> Result<Vec<f64>> {
    let res = set.resolvent_excluding(v, user)?;
    let h = set.representative(user);
    let k: CMatrix = h.adjoint() * res.block() * h;
    let k = (&k + k.adjoint()) * num_complex::Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(k);
    Ok(eig.eigenvalues.iter().map(|&x| x.max(0.0)).collect())
}

/// `S_u(rho) = tr((A_u^H Sigma_{\u} A_u + rho I)^{-1}) / N_u` for the other
/// users' variances `v` (entry `user` is ignored).
pub fn s_transform(set: &MacChannelSet, user: usize, v: &[f64], rho: f64, n_len: usize) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(format!("S-transform needs rho > 0, got {rho}")));
    }
    let lam = effective_eigenvalues(set, user, v)?;
    let m_len = lam.len() * set.n_blocks();
    if m_len > n_len {
        return Err(Error::Dimension(format!("codeword length {m_len} exceeds N = {n_len}")));
    }
    let n = n_len as f64;
    let tail: f64 = lam.iter().map(|&l| 1.0 / (l + rho)).sum();
    Ok((n_len - m_len) as f64 / (n * rho) + set.n_blocks() as f64 * tail / n)
}

/// One user's S-transform and VTF along a variance path.
#[derive(Debug, Clone)]
pub struct UserTransform<'a> {
    set: &'a MacChannelSet,
    user: usize,
    path: VariancePath,
    n_len: usize,
}

const LN_RHO_MIN: f64 = -40.0;
const LN_RHO_MAX: f64 = 60.0;

impl<'a> UserTransform<'a> {
    pub fn new(set: &'a MacChannelSet, user: usize, path: &VariancePath, n_len: usize) -> Result<Self> {
        if path.num_users() != set.num_users() {
            return Err(Error::Dimension(format!(
                "path has {} users, channel set has {}",
                path.num_users(),
                set.num_users()
            )));
        }
        if user >= set.num_users() {
            return Err(Error::InvalidArgument(format!("user {user} out of range")));
        }
        let m_len = set.user(user).input_len();
        if m_len > n_len {
            return Err(Error::Dimension(format!("codeword length {m_len} exceeds N = {n_len}")));
        }
        Ok(Self { set, user, path: path.clone(), n_len })
    }

    pub fn user(&self) -> usize {
        self.user
    }
    pub fn n_len(&self) -> usize {
        self.n_len
    }
    pub fn path(&self) -> &VariancePath {
        &self.path
    }

    /// `S_u(rho)` with the other users' variances coupled through the path.
    pub fn s(&self, rho: f64) -> Result<f64> {
        s_transform(self.set, self.user, &self.path.coupled(self.user, rho), rho, self.n_len)
    }

    /// `S_u^{-1}(xi)` by bisection in `log rho`.
    pub fn s_inverse(&self, xi: f64) -> Result<f64> {
        if !(xi > 0.0) {
            return Err(Error::InvalidArgument(format!("S inverse needs xi > 0, got {xi}")));
        }
        let f = |t: f64| self.s(t.exp()).map(|s| s - xi).unwrap_or(f64::NAN);
        let (lo, hi) = (f(LN_RHO_MIN), f(LN_RHO_MAX));
        if lo < 0.0 || hi > 0.0 {
            return Err(Error::Bracket(format!(
                "S-transform spans [{:e}, {:e}] on rho in [e^{LN_RHO_MIN}, e^{LN_RHO_MAX}], target {xi:e}",
                hi + xi,
                lo + xi
            )));
        }
        Ok(bisect(f, LN_RHO_MIN, LN_RHO_MAX, 1e-12)?.exp())
    }

    /// `F_u(xi) = 1/xi - S_u^{-1}(xi)`.
    pub fn vtf(&self, xi: f64) -> Result<f64> {
        if !(xi > 0.0 && xi < 1.0) {
            return Err(Error::InvalidArgument(format!("VTF needs xi in (0, 1), got {xi}")));
        }
        Ok(1.0 / xi - self.s_inverse(xi)?)
    }

    /// Point `(xi, F(xi))` of the VTF at `rho = S^{-1}(xi)`.
    pub fn vtf_at_rho(&self, rho: f64) -> Result<(f64, f64)> {
        let s = self.s(rho)?;
        Ok((s, 1.0 / s - rho))
    }

    /// `F_u(0+) = snr tr(H_u^H H_u) / N_u`.
    pub fn vtf_limit(&self) -> f64 {
        let h = self.set.representative(self.user);
        self.set.n_blocks() as f64 * h.norm_squared() / (self.set.sigma2() * self.n_len as f64)
    }

    /// Tabulated VTF, see [`VtfCurve`].
    pub fn tabulate(&self, points_per_decade: usize) -> Result<VtfCurve> {
        VtfCurve::build(self, points_per_decade)
    }
}

/// VTF sampled parametrically on `rho = S^{-1}(xi) in [1, rho_max]`, plus the
/// limit `F(0+)`. Between samples it interpolates linearly in `log xi`; for
/// `xi` above `S(1)` it returns the Gaussian inverse `1/xi - 1`, which is
/// the smaller of the two branches there.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VtfCurve {
    /// Ascending.
    xi: Vec<f64>,
    f: Vec<f64>,
    limit: f64,
}

impl VtfCurve {
    fn build(t: &UserTransform<'_>, points_per_decade: usize) -> Result<Self> {
        let ppd = points_per_decade.max(4);
        let limit = t.vtf_limit();
        // parametric sweep until F is within 1e-9 of its limit
        let mut pts = Vec::new();
        let mut k = 0usize;
        loop {
            let rho = 10f64.powf(k as f64 / ppd as f64);
            let (xi, f) = t.vtf_at_rho(rho)?;
            pts.push((xi, f));
            if (f - limit).abs() <= 1e-9 * limit.max(1e-300) || rho > 1e14 || xi < 1e-14 {
                break;
            }
            k += 1;
        }
        pts.reverse();
        let (xi, f): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        if xi.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::NonFinite("S-transform is not strictly decreasing along the path"));
        }
        Ok(Self { xi, f, limit })
    }

    /// Build directly from `(xi, F)` samples with ascending `xi` (tests and
    /// synthetic channels).
    pub fn from_samples(xi: Vec<f64>, f: Vec<f64>, limit: f64) -> Result<Self> {
        if xi.len() != f.len() || xi.len() < 2 || xi.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("VTF samples need ascending xi and matching lengths".into()));
        }
        Ok(Self { xi, f, limit })
    }

    /// `S_u(1)`: above it the Gaussian inverse takes over.
    pub fn switch_point(&self) -> f64 {
        *self.xi.last().unwrap()
    }

    pub fn limit(&self) -> f64 {
        self.limit
    }

    pub fn samples(&self) -> (&[f64], &[f64]) {
        (&self.xi, &self.f)
    }

    /// `F(xi)`; only meaningful for `xi <= S(1)`.
    pub fn vtf(&self, xi: f64) -> f64 {
        if xi <= self.xi[0] {
            return self.limit + (self.f[0] - self.limit) * (xi / self.xi[0]).max(0.0);
        }
        let n = self.xi.len();
        if xi >= self.xi[n - 1] {
            return 1.0 / xi - 1.0;
        }
        let k = self.xi.partition_point(|&x| x <= xi) - 1;
        let t = (xi.ln() - self.xi[k].ln()) / (self.xi[k + 1].ln() - self.xi[k].ln());
        self.f[k] + t * (self.f[k + 1] - self.f[k])
    }

    /// `min{F(xi), 1/xi - 1}`.
    pub fn effective(&self, xi: f64) -> f64 {
        if xi >= self.switch_point() {
            1.0 / xi - 1.0
        } else {
            self.vtf(xi).min(1.0 / xi - 1.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{BlockFadingChannel, ChipBlock, MacChannelSet};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(seed: u64, users: usize, m: usize, n: usize, mr: usize, mt: usize, sigma2: f64) -> MacChannelSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chans = (0..users)
            .map(|u| {
                let blocks = (0..mr * mt)
                    .map(|_| {
                        ChipBlock::Dense(
                            (0..m * m)
                                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                                .collect(),
                        )
                    })
                    .collect();
                BlockFadingChannel::new(u, m, n, mr, mt, blocks, 0.0).unwrap()
            })
            .collect();
        MacChannelSet::new(chans, sigma2).unwrap()
    }

    #[test]
    fn rank_split_closed_form() {
        // single user, H = I, sigma^2 = 1 -> all lambda = 1; N = 2M
        let ch = BlockFadingChannel::identity(0, 4, 2, 1, 1).unwrap();
        let set = MacChannelSet::new(vec![ch], 1.0).unwrap();
        let s = s_transform(&set, 0, &[1.0], 1.0, 16).unwrap();
        assert!((s - 0.75).abs() < 1e-14);
        assert!(s_transform(&set, 0, &[1.0], 1e12, 16).unwrap() < 1e-11);
        assert!(s_transform(&set, 0, &[1.0], 0.0, 16).is_err());
    }

    #[test]
    fn vtf_hand_example() {
        let ch = BlockFadingChannel::identity(0, 4, 2, 1, 1).unwrap();
        let set = MacChannelSet::new(vec![ch], 1.0).unwrap();
        let t = UserTransform::new(&set, 0, &VariancePath::uniform(1).unwrap(), 16).unwrap();
        assert!((t.s_inverse(0.75).unwrap() - 1.0).abs() < 1e-10);
        assert!((t.vtf(0.75).unwrap() - 1.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn s_transform_matches_dense_trace_inverse() {
        let set = random_set(3, 2, 3, 2, 2, 2, 0.3);
        let n_len = 20;
        let v = [0.4, 0.7];
        for user in 0..2 {
            // A_u = H_u Xi_u with Xi_u = [I 0] is enough: S depends on A^H Sigma A
            let h = set.user(user).dense();
            let m_len = h.ncols();
            let mut xi = CMatrix::zeros(m_len, n_len);
            for i in 0..m_len {
                xi[(i, i)] = Complex64::new(1.0, 0.0);
            }
            let a = &h * &xi;
            let res = set.resolvent_excluding(&v, user).unwrap().dense();
            for rho in [0.05, 0.9, 7.0] {
                let mut k = a.adjoint() * &res * &a;
                for i in 0..n_len {
                    k[(i, i)] += Complex64::new(rho, 0.0);
                }
                let want = k.try_inverse().unwrap().trace().re / n_len as f64;
                let got = s_transform(&set, user, &v, rho, n_len).unwrap();
                assert!((got - want).abs() < 1e-9 * want, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn sic_gammas() {
        let p = VariancePath::sic(&[1, 0, 2], 10.0).unwrap();
        assert_eq!(p.gammas(), &[10.0, 100.0, 1.0]);
        assert!(VariancePath::sic(&[0, 0], 10.0).is_err());
        let v = p.variances(0.0);
        assert!(v.iter().all(|&x| x == 1.0));
        assert!(p.variances(f64::INFINITY).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn vtf_nonincreasing_and_limit() {
        for seed in 0..4 {
            let set = random_set(seed, 2, 4, 2, 2, 2, 0.05);
            let path = VariancePath::new(vec![1.0, 3.0]).unwrap();
            let t = UserTransform::new(&set, 0, &path, 64).unwrap();
            let s1 = t.s(1.0).unwrap();
            let grid: Vec<f64> = (1..60).map(|k| s1 * 0.98f64.powi(k * 5)).collect();
            let f: Vec<f64> = grid.iter().map(|&x| t.vtf(x).unwrap()).collect();
            // grid descends in xi, so F must not decrease along it
            for w in f.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{w:?}");
            }
            let tiny = t.vtf(1e-9).unwrap();
            assert!((tiny - t.vtf_limit()).abs() < 1e-4 * t.vtf_limit());
        }
    }

    #[test]
    fn curve_matches_direct_vtf() {
        let set = random_set(9, 2, 4, 2, 2, 2, 0.1);
        let path = VariancePath::new(vec![2.0, 1.0]).unwrap();
        let t = UserTransform::new(&set, 1, &path, 64).unwrap();
        let c = t.tabulate(40).unwrap();
        for xi in [0.9 * c.switch_point(), 0.1, 1e-3, 1e-6] {
            if xi >= c.switch_point() {
                continue;
            }
            let want = t.vtf(xi).unwrap();
            assert!((c.vtf(xi) - want).abs() < 1e-3 * want, "xi={xi}");
        }
        // Gaussian branch above S(1) and continuity at the switch
        let s1 = c.switch_point();
        assert!((c.vtf(s1 * (1.0 - 1e-9)) - (1.0 / s1 - 1.0)).abs() < 1e-6);
    }
}
