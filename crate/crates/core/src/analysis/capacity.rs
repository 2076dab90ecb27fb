//! Capacity region of the MIMO multiple-access channel and user-rate
//! suprema along variance paths.

use serde::{Deserialize, Serialize};

use super::transform::{UserTransform, VariancePath};
use crate::channel::MacChannelSet;
use crate::error::{Error, Result};
use crate::numeric::{bisect, integrate, integrate_with_breaks};

/// Subset sum-rate bounds, sum capacity and dominant-face vertices, in nats
/// per received block symbol.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityRegion {
    /// `bounds[mask - 1]` bounds the sum rate of the users in bitmask `mask`.
    pub bounds: Vec<f64>,
    pub sum_capacity: f64,
    /// `(order, rates)`: `order[0]` is decoded last (interference-free).
    pub vertices: Vec<(Vec<usize>, Vec<f64>)>,
    pub users: usize,
}

/// Largest supported user count (subsets are enumerated).
pub const MAX_REGION_USERS: usize = 10;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], &mut out);
    out
}

/// `(1/M_bar) log det(I + snr sum_{u in mask} H_u H_u^H)`.
pub fn subset_bound(set: &MacChannelSet, mask: usize, snr: f64) -> Result<f64> {
    let w: Vec<f64> = (0..set.num_users())
        .map(|u| if mask >> u & 1 == 1 { snr } else { 0.0 })
        .collect();
    Ok(set.log_det_i_plus(&w)? / set.m_bar() as f64)
}

pub fn capacity_region(set: &MacChannelSet) -> Result<CapacityRegion> {
    let u = set.num_users();
    if u > MAX_REGION_USERS {
        return Err(Error::InvalidArgument(format!(
            "capacity region enumerates subsets; at most {MAX_REGION_USERS} users, got {u}"
        )));
    }
    let snr = set.snr();
    let bounds = (1..1usize << u)
        .map(|mask| subset_bound(set, mask, snr))
        .collect::<Result<Vec<_>>>()?;
    let sum_capacity = bounds[(1 << u) - 2];
    let vertices = permutations(u)
        .into_iter()
        .map(|order| {
            let mut rates = vec![0.0; u];
            let (mut mask, mut prev) = (0usize, 0.0);
            for &k in &order {
                mask |= 1 << k;
                let b = bounds[mask - 1];
                rates[k] = b - prev;
                prev = b;
            }
            (order, rates)
        })
        .collect();
    Ok(CapacityRegion { bounds, sum_capacity, vertices, users: u })
}

impl CapacityRegion {
    pub fn bound(&self, mask: usize) -> f64 {
        self.bounds[mask - 1]
    }

    /// Whether `rates` satisfies every subset bound (with slack `tol`).
    pub fn contains(&self, rates: &[f64], tol: f64) -> bool {
        (1..1usize << self.users).all(|mask| {
            let s: f64 = (0..self.users).filter(|u| mask >> u & 1 == 1).map(|u| rates[u]).sum();
            s <= self.bound(mask) + tol
        })
    }

    /// Inside the region with the sum rate at capacity.
    pub fn on_dominant_face(&self, rates: &[f64], tol: f64) -> bool {
        self.contains(rates, tol) && (rates.iter().sum::<f64>() - self.sum_capacity).abs() <= tol
    }

    /// Worst violation of `C(S u T) + C(S n T) <= C(S) + C(T)` over all
    /// subset pairs (zero or negative for a polymatroid).
    pub fn submodularity_violation(&self) -> f64 {
        let full = 1usize << self.users;
        let c = |m: usize| if m == 0 { 0.0 } else { self.bound(m) };
        let mut worst = f64::NEG_INFINITY;
        for a in 1..full {
            for b in 1..full {
                worst = worst.max(c(a | b) + c(a & b) - c(a) - c(b));
            }
        }
        worst
    }
}

/// Smallest SNR at which `rates` lies in the capacity region: the largest
/// over subsets of the SNR making that subset's bound tight.
pub fn limit_snr(set: &MacChannelSet, rates: &[f64]) -> Result<f64> {
    let u = set.num_users();
    if rates.len() != u {
        return Err(Error::Dimension(format!("{} rates for {u} users", rates.len())));
    }
    if rates.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
        return Err(Error::InvalidArgument("target rates must be finite and nonnegative".into()));
    }
    let mut best: f64 = 0.0;
    for mask in 1..1usize << u {
        let target: f64 = (0..u).filter(|k| mask >> k & 1 == 1).map(|k| rates[k]).sum();
        if target == 0.0 {
            continue;
        }
        let ln_snr = bisect(
            |t| subset_bound(set, mask, t.exp()).map(|b| b - target).unwrap_or(f64::NAN),
            -60.0,
            60.0,
            1e-13,
        )?;
        best = best.max(ln_snr.exp());
    }
    Ok(best)
}

const QUAD_REL_TOL: f64 = 1e-9;

/// `R^sup_u = (1/M_bar) int_0^1 tr(H_u^H Sigma(v) H_u) dv_u` along `path`,
/// integrated in `x = log g` so that sharp SIC transitions sit at the
/// breakpoints `log gamma_i`.
pub fn user_rate_supremum(set: &MacChannelSet, user: usize, path: &VariancePath) -> Result<f64> {
    if path.num_users() != set.num_users() || user >= set.num_users() {
        return Err(Error::Dimension("path, user and channel set disagree".into()));
    }
    let gu = path.gammas()[user];
    let ln_g: Vec<f64> = path.gammas().iter().map(|g| g.ln()).collect();
    let lo = ln_g.iter().copied().fold(f64::INFINITY, f64::min) - 45.0;
    let hi = ln_g.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 45.0;
    let mut breaks = vec![lo];
    let mut inner = ln_g.clone();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    breaks.extend(inner);
    breaks.push(hi);
    let m_bar = set.m_bar() as f64;
    let mut failure = None;
    let q = integrate_with_breaks(
        |x| {
            let g = x.exp();
            let v = path.variances(g);
            let dv = gu * g / ((gu + g) * (gu + g));
            match set.resolvent(&v).and_then(|r| set.chi(&r, user, 1)) {
                Ok(t) => t * dv,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &breaks,
        QUAD_REL_TOL,
        0.0,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(q?.value / m_bar)
}

/// The same supremum through the VTF: `(N_u/M_bar) int_0^1 min{F_u, 1/xi - 1}`.
/// Uses exact S-transform inversions, so it is slower than
/// [`user_rate_supremum`]; it serves as an independent route.
pub fn user_rate_supremum_vtf(set: &MacChannelSet, user: usize, path: &VariancePath, n_len: usize) -> Result<f64> {
    let t = UserTransform::new(set, user, path, n_len)?;
    let s1 = t.s(1.0)?;
    // Gaussian branch on [S(1), 1]
    let gauss = -s1.ln() - (1.0 - s1);
    let mut failure = None;
    // xi = S(1) e^{-y}, y in [0, inf): F is bounded, so the e^{-y} weight
    // makes the integrand decay
    let q = integrate(
        |y| {
            let xi = s1 * (-y).exp();
            let f = if y == 0.0 { 1.0 / s1 - 1.0 } else {
                match t.vtf(xi) {
                    Ok(f) => f,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::NAN
                    }
                }
            };
            f * xi
        },
        0.0,
        40.0,
        1e-9,
        0.0,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let tail = t.vtf_limit() * s1 * (-40f64).exp();
    Ok(n_len as f64 / set.m_bar() as f64 * (q?.value + tail + gauss))
}

/// Gammas making the user-rate suprema equal `targets` (which must lie on
/// the dominant face). The last user's gamma is pinned to 1 and the others
/// are solved coordinate-wise by bisection in `log gamma`.
pub fn align_path(set: &MacChannelSet, targets: &[f64], tol: f64) -> Result<VariancePath> {
    let u = set.num_users();
    if targets.len() != u {
        return Err(Error::Dimension(format!("{} targets for {u} users", targets.len())));
    }
    let region = capacity_region(set)?;
    if !region.on_dominant_face(targets, 1e-6 * region.sum_capacity.max(1.0)) {
        return Err(Error::InvalidArgument(format!(
            "target rates {targets:?} are not on the dominant face (sum capacity {:.6})",
            region.sum_capacity
        )));
    }
    let mut ln_gamma = vec![0.0; u];
    if u == 1 {
        return VariancePath::new(vec![1.0]);
    }
    const SPAN: f64 = 30.0;
    for _sweep in 0..60 {
        for k in 0..u - 1 {
            let f = |t: f64| {
                let mut lg = ln_gamma.clone();
                lg[k] = t;
                let path = VariancePath::new(lg.iter().map(|x| x.exp()).collect()).expect("positive gammas");
                user_rate_supremum(set, k, &path).map(|r| r - targets[k]).unwrap_or(f64::NAN)
            };
            let (flo, fhi) = (f(-SPAN), f(SPAN));
            ln_gamma[k] = if flo >= 0.0 {
                -SPAN
            } else if fhi <= 0.0 {
                SPAN
            } else {
                bisect(f, -SPAN, SPAN, 1e-10)?
            };
        }
        let path = VariancePath::new(ln_gamma.iter().map(|x| x.exp()).collect())?;
        let worst = (0..u)
            .map(|k| user_rate_supremum(set, k, &path).map(|r| (r - targets[k]).abs()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        if worst <= tol {
            return Ok(path);
        }
    }
    Err(Error::Divergent(format!("path alignment did not reach tolerance {tol:e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{BlockFadingChannel, ChipBlock};
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_set(seed: u64, m: usize, n: usize, sigma2: f64) -> MacChannelSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chans = (0..2)
            .map(|u| {
                let blocks = (0..4)
                    .map(|_| {
                        ChipBlock::Diagonal(
                            (0..m).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect(),
                        )
                    })
                    .collect();
                BlockFadingChannel::new(u, m, n, 2, 2, blocks, 0.0).unwrap()
            })
            .collect();
        MacChannelSet::new(chans, sigma2).unwrap()
    }

    #[test]
    fn scalar_awgn_capacity() {
        let ch = BlockFadingChannel::identity(0, 4, 2, 1, 1).unwrap();
        let set = MacChannelSet::new(vec![ch], 1.0).unwrap();
        let r = capacity_region(&set).unwrap();
        assert!((r.sum_capacity - 2f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn vertices_telescope_and_region_is_polymatroid() {
        let set = random_set(1, 4, 4, 0.1);
        let r = capacity_region(&set).unwrap();
        assert_eq!(r.vertices.len(), 2);
        for (_, rates) in &r.vertices {
            assert!((rates.iter().sum::<f64>() - r.sum_capacity).abs() < 1e-9);
            assert!(r.on_dominant_face(rates, 1e-9));
        }
        assert!(r.submodularity_violation() <= 1e-12);
    }

    #[test]
    fn orthogonal_users_get_solo_capacity() {
        // user 0 only reaches antenna 0, user 1 only antenna 1
        let m = 3;
        let z = ChipBlock::Diagonal(vec![Complex64::new(0.0, 0.0); m]);
        let d = |x: f64| ChipBlock::Diagonal(vec![Complex64::new(x, 0.3); m]);
        let u0 = BlockFadingChannel::new(0, m, 2, 2, 1, vec![d(1.0), z.clone()], 0.0).unwrap();
        let u1 = BlockFadingChannel::new(1, m, 2, 2, 1, vec![z, d(0.5)], 0.0).unwrap();
        let set = MacChannelSet::new(vec![u0, u1], 0.5).unwrap();
        let r = capacity_region(&set).unwrap();
        for (_, rates) in &r.vertices {
            assert!((rates[0] - r.bound(1)).abs() < 1e-12);
            assert!((rates[1] - r.bound(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn single_user_supremum_is_log_det() {
        let ch = crate::channel::generate_tdla_channel(
            4,
            &crate::channel::TapProfile::tdl_a(100e-9),
            0,
            4,
            2,
            2,
            2,
            0.0,
        )
        .unwrap();
        let set = MacChannelSet::new(vec![ch], 0.2).unwrap();
        let r = user_rate_supremum(&set, 0, &VariancePath::uniform(1).unwrap()).unwrap();
        let c = capacity_region(&set).unwrap().sum_capacity;
        assert!((r - c).abs() < 1e-4 * c);
    }

    #[test]
    fn tr_and_vtf_routes_agree() {
        let set = random_set(5, 4, 4, 0.05);
        let path = VariancePath::new(vec![3.0, 1.0]).unwrap();
        for u in 0..2 {
            let a = user_rate_supremum(&set, u, &path).unwrap();
            let b = user_rate_supremum_vtf(&set, u, &path, 64).unwrap();
            assert!((a - b).abs() < 1e-5 * a, "user {u}: {a} vs {b}");
        }
    }

    #[test]
    fn limit_snr_puts_rates_on_boundary() {
        let set = random_set(2, 4, 4, 1.0);
        let rates = [1.0, 0.6];
        let snr = limit_snr(&set, &rates).unwrap();
        let at = set.with_sigma2(1.0 / snr).unwrap();
        let r = capacity_region(&at).unwrap();
        assert!(r.contains(&rates, 1e-9));
        let below = set.with_sigma2(1.0 / (snr * 0.999)).unwrap();
        assert!(!capacity_region(&below).unwrap().contains(&rates, 0.0));
    }

    #[test]
    fn aligned_path_hits_targets() {
        let set = random_set(8, 4, 4, 0.05);
        let r = capacity_region(&set).unwrap();
        let (a, b) = (&r.vertices[0].1, &r.vertices[1].1);
        let target = [0.3 * a[0] + 0.7 * b[0], 0.3 * a[1] + 0.7 * b[1]];
        let path = align_path(&set, &target, 1e-7).unwrap();
        for u in 0..2 {
            let got = user_rate_supremum(&set, u, &path).unwrap();
            assert!((got - target[u]).abs() < 1e-6);
        }
    }
}
