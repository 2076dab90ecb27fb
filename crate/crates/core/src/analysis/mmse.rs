//! MMSE functions of position-modulated signals.
//!
//! A section of power `p` observed at SNR `rho` has a normalized MMSE that
//! depends on `a = p rho` and `B` only; [`SectionMmseTable`] estimates that
//! one-dimensional function once per `B` by Monte Carlo (common random
//! numbers across the grid) and [`SignalMmse`] combines it over the
//! sections of a power allocation.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::special::ln_erfc;
use crate::numeric::{bisect, MonotoneCurve};
use crate::sparc::{CodeParams, PowerAllocation};

/// Gaussian-prior MMSE `1 / (1 + rho)`.
pub fn gaussian_mmse(rho: f64) -> f64 {
    1.0 / (1.0 + rho)
}

/// Inverse of [`gaussian_mmse`]; `+inf` at `xi = 0`.
pub fn gaussian_mmse_inv(xi: f64) -> f64 {
    if xi <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / xi - 1.0
    }
}

/// Seed used for cached tables when the caller does not pick one.
pub const DEFAULT_MMSE_SEED: u64 = 0x5eed_3a5e;

/// Monte Carlo sample count used for cached tables of section size `b`.
pub fn default_mc_samples(b: usize) -> usize {
    (640_000 / b.max(1)).clamp(2_000, 20_000)
}

const A_MIN: f64 = 1e-3;
const A_MAX: f64 = 1e2;
const POINTS_PER_DECADE: usize = 20;
const RELIABLE_REL_STDERR: f64 = 0.05;

/// Normalized single-section MMSE `g_B(a)` (section MSE divided by `p`).
#[derive(Debug, Clone)]
pub struct SectionMmseTable {
    b: usize,
    samples: usize,
    seed: u64,
    a_grid: Vec<f64>,
    ln_g: Vec<f64>,
    stderr: Vec<f64>,
    /// Index of the last grid point whose Monte Carlo estimate is used;
    /// beyond it the table follows the pairwise-error tail.
    last_reliable: usize,
}

/// Posterior-mean MSE of one section with the true position at index 0,
/// normalized by the section power.
fn section_error(sqrt_a: f64, z: &[(f64, f64)], logits: &mut [f64]) -> f64 {
    for (i, (zr, _zi)) in z.iter().enumerate() {
        let re = if i == 0 { sqrt_a + zr } else { *zr };
        logits[i] = 2.0 * sqrt_a * re;
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        total += *l;
    }
    let mut err = 0.0;
    for (i, w) in logits.iter().enumerate() {
        let w = w / total;
        err += if i == 0 { (1.0 - w) * (1.0 - w) } else { w * w };
    }
    err
}

impl SectionMmseTable {
    pub fn build(b: usize, samples: usize, seed: u64) -> Result<Self> {
        if b < 2 {
            return Err(Error::InvalidArgument("section size must be >= 2".into()));
        }
        if samples < 2 {
            return Err(Error::InvalidArgument("need at least two Monte Carlo samples".into()));
        }
        let decades = (A_MAX / A_MIN).log10();
        let npts = (decades * POINTS_PER_DECADE as f64).round() as usize + 1;
        let a_grid: Vec<f64> = (0..npts)
            .map(|k| A_MIN * 10f64.powf(k as f64 / POINTS_PER_DECADE as f64))
            .collect();
        // complex CN(0,1) noise: each component has variance 1/2
        let stats: Vec<(f64, f64)> = a_grid
            .par_iter()
            .map(|&a| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut z = vec![(0.0, 0.0); b];
                let mut logits = vec![0.0; b];
                let sqrt_a = a.sqrt();
                let (mut sum, mut sum_sq) = (0.0, 0.0);
                for _ in 0..samples {
                    for zi in z.iter_mut() {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        *zi = (re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2);
                    }
                    let e = section_error(sqrt_a, &z, &mut logits);
                    sum += e;
                    sum_sq += e * e;
                }
                let n = samples as f64;
                let mean = sum / n;
                let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
                (mean, (var / n).sqrt())
            })
            .collect();

        let mut last_reliable = 0;
        for (k, &(mean, se)) in stats.iter().enumerate() {
            if mean > 0.0 && se <= RELIABLE_REL_STDERR * mean {
                last_reliable = k;
            } else {
                break;
            }
        }
        let prior = 1.0 - 1.0 / b as f64;
        let mut ln_g = Vec::with_capacity(npts);
        let mut stderr = Vec::with_capacity(npts);
        let (a_r, g_r) = (a_grid[last_reliable], stats[last_reliable].0);
        for (k, &a) in a_grid.iter().enumerate() {
            let (g, se) = if k <= last_reliable {
                (stats[k].0.min(prior), stats[k].1)
            } else {
                let ln_ratio = ln_erfc((a / 2.0).sqrt()) - ln_erfc((a_r / 2.0).sqrt());
                (g_r * ln_ratio.exp(), f64::NAN)
            };
            ln_g.push(g.max(f64::MIN_POSITIVE).ln());
            stderr.push(se);
        }
        // Monte Carlo noise may leave tiny upward steps
        for k in 1..npts {
            if ln_g[k] >= ln_g[k - 1] {
                ln_g[k] = ln_g[k - 1] - 1e-12;
            }
        }
        Ok(Self { b, samples, seed, a_grid, ln_g, stderr, last_reliable })
    }

    /// Process-wide cached table for `(b, samples, seed)`.
    pub fn cached(b: usize, samples: usize, seed: u64) -> Result<Arc<Self>> {
        static CACHE: LazyLock<Mutex<HashMap<(usize, usize, u64), Arc<SectionMmseTable>>>> =
            LazyLock::new(|| Mutex::new(HashMap::new()));
        if let Some(t) = CACHE.lock().expect("mmse cache poisoned").get(&(b, samples, seed)) {
            return Ok(t.clone());
        }
        let table = Arc::new(Self::build(b, samples, seed)?);
        CACHE
            .lock()
            .expect("mmse cache poisoned")
            .entry((b, samples, seed))
            .or_insert(table.clone());
        Ok(table)
    }

    /// Cached table with the default sample count and seed.
    pub fn default_for(b: usize) -> Result<Arc<Self>> {
        Self::cached(b, default_mc_samples(b), DEFAULT_MMSE_SEED)
    }

    pub fn b(&self) -> usize {
        self.b
    }
    pub fn samples(&self) -> usize {
        self.samples
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn grid(&self) -> &[f64] {
        &self.a_grid
    }
    /// Largest `a` backed by a Monte Carlo estimate.
    pub fn reliable_limit(&self) -> f64 {
        self.a_grid[self.last_reliable]
    }

    /// `g_B(a)`; equals the prior variance `1 - 1/B` at `a = 0`.
    pub fn eval(&self, a: f64) -> f64 {
        let prior = 1.0 - 1.0 / self.b as f64;
        if a <= 0.0 {
            return prior;
        }
        let a0 = self.a_grid[0];
        if a < a0 {
            let g0 = self.ln_g[0].exp();
            return prior + (g0 - prior) * a / a0;
        }
        let n = self.a_grid.len();
        let a_last = self.a_grid[n - 1];
        if a >= a_last {
            let ln_ratio = ln_erfc((a / 2.0).sqrt()) - ln_erfc((a_last / 2.0).sqrt());
            return (self.ln_g[n - 1] + ln_ratio).exp();
        }
        let (k, t) = self.locate(a);
        (self.ln_g[k] + t * (self.ln_g[k + 1] - self.ln_g[k])).exp()
    }

    /// Monte Carlo standard error of `g_B(a)` (NaN where the table uses the
    /// analytic tail).
    pub fn stderr(&self, a: f64) -> f64 {
        let a0 = self.a_grid[0];
        if a <= a0 {
            return self.stderr[0] * (a / a0).max(0.0);
        }
        if a >= *self.a_grid.last().unwrap() {
            return f64::NAN;
        }
        let (k, t) = self.locate(a);
        self.stderr[k] + t * (self.stderr[k + 1] - self.stderr[k])
    }

    fn locate(&self, a: f64) -> (usize, f64) {
        let n = self.a_grid.len();
        let k = (self.a_grid.partition_point(|&g| g <= a).max(1) - 1).min(n - 2);
        let (x0, x1) = (self.a_grid[k].ln(), self.a_grid[k + 1].ln());
        (k, (a.ln() - x0) / (x1 - x0))
    }
}

/// The MMSE function of one user's position-modulated signal.
#[derive(Debug, Clone)]
pub struct SignalMmse {
    table: Arc<SectionMmseTable>,
    /// `(p, count)` for each distinct section power.
    groups: Vec<(f64, usize)>,
    n_len: usize,
}

impl SignalMmse {
    pub fn new(pa: &PowerAllocation, params: &CodeParams, table: Arc<SectionMmseTable>) -> Result<Self> {
        pa.check_against(params)?;
        if table.b() != params.b {
            return Err(Error::InvalidArgument(format!(
                "MMSE table built for B = {}, code has B = {}",
                table.b(),
                params.b
            )));
        }
        let mut groups: Vec<(f64, usize)> = Vec::new();
        for &p in pa.powers() {
            match groups.last_mut() {
                Some((q, c)) if *q == p => *c += 1,
                _ => groups.push((p, 1)),
            }
        }
        Ok(Self { table, groups, n_len: params.n_len })
    }

    /// Uses the process-wide cached table for `params.b`.
    pub fn with_default_table(pa: &PowerAllocation, params: &CodeParams) -> Result<Self> {
        Self::new(pa, params, SectionMmseTable::default_for(params.b)?)
    }

    /// `phi(rho)`.
    pub fn eval(&self, rho: f64) -> f64 {
        let n = self.n_len as f64;
        self.groups
            .iter()
            .map(|&(p, c)| c as f64 * p / n * self.table.eval(p * rho))
            .sum()
    }

    /// Monte Carlo standard error of `phi(rho)` treating the per-power
    /// estimates as fully correlated (common random numbers).
    pub fn stderr(&self, rho: f64) -> f64 {
        let n = self.n_len as f64;
        self.groups
            .iter()
            .map(|&(p, c)| c as f64 * p / n * self.table.stderr(p * rho))
            .sum()
    }

    /// `phi(0) = 1 - 1/B`.
    pub fn prior_variance(&self) -> f64 {
        self.eval(0.0)
    }

    /// `phi^{-1}(xi)`: zero for `xi` at or above the prior variance.
    pub fn inverse(&self, xi: f64) -> Result<f64> {
        if !(xi > 0.0) {
            return Err(Error::InvalidArgument(format!("MMSE inverse needs xi > 0, got {xi}")));
        }
        if xi >= self.prior_variance() {
            return Ok(0.0);
        }
        let (lo, hi) = (-40.0f64, 40.0f64);
        if self.eval(hi.exp()) > xi {
            return Err(Error::Bracket(format!("MMSE stays above {xi:e} for rho up to e^40")));
        }
        if self.eval(lo.exp()) <= xi {
            return Ok(lo.exp());
        }
        let ln_rho = bisect(|t| self.eval(t.exp()) - xi, lo, hi, 1e-12)?;
        Ok(ln_rho.exp())
    }
}

/// Tabulate the MMSE function of `pa` on `rho_grid` (positive, ascending),
/// prepending the exact value at `rho = 0`.
pub fn signal_mmse_curve(
    pa: &PowerAllocation,
    params: &CodeParams,
    rho_grid: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<MonotoneCurve> {
    if rho_grid.iter().any(|r| !(*r > 0.0)) || rho_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("rho grid must be positive and ascending".into()));
    }
    let mmse = SignalMmse::new(pa, params, SectionMmseTable::cached(params.b, mc_samples, seed)?)?;
    let mut grid = vec![0.0];
    grid.extend_from_slice(rho_grid);
    MonotoneCurve::from_fn(grid, |r| mmse.eval(r))
}

/// Asymptotic piecewise MMSE: between consecutive transitions
/// `log B / p_{l-1} <= rho < log B / p_l` the signal behaves like a Gaussian
/// of the residual power `P_l`, i.e. `P_l / (1 + rho P_l)`; zero past the
/// last transition.
pub fn signal_mmse_asymptotic(pa: &PowerAllocation, params: &CodeParams, rho: f64) -> f64 {
    asymptotic_mmse_raw(pa.powers(), params.b, params.n_len, rho)
}

/// Transition abscissae `log B / p_l` (infinite for zero-power sections).
pub fn transition_points(powers: &[f64], b: usize) -> Vec<f64> {
    let lnb = (b as f64).ln();
    powers.iter().map(|&p| if p > 0.0 { lnb / p } else { f64::INFINITY }).collect()
}

pub(crate) fn asymptotic_mmse_raw(powers: &[f64], b: usize, n_len: usize, rho: f64) -> f64 {
    let t = transition_points(powers, b);
    // first section whose transition lies strictly above rho
    let l = t.partition_point(|&x| x <= rho);
    if l >= powers.len() {
        return 0.0;
    }
    let residual: f64 = powers[l..].iter().sum::<f64>() / n_len as f64;
    residual * gaussian_mmse(rho * residual)
}

/// Generalized inverse `inf { rho : phi_asym(rho) <= xi }` of the
/// asymptotic MMSE.
pub fn asymptotic_mmse_inverse(pa: &PowerAllocation, params: &CodeParams, xi: f64) -> f64 {
    let powers = pa.powers();
    let t = transition_points(powers, params.b);
    let n = params.n_len as f64;
    let mut residual: f64 = powers.iter().sum::<f64>() / n;
    let mut start = 0.0;
    for (l, &end) in t.iter().enumerate() {
        if residual > 0.0 {
            let at_start = residual * gaussian_mmse(start * residual);
            if at_start <= xi {
                return start;
            }
            let root = 1.0 / xi - 1.0 / residual;
            if root < end {
                return root;
            }
        } else if xi >= 0.0 {
            return start;
        }
        residual -= powers[l] / n;
        start = end;
    }
    start
}

/// Monte Carlo MMSE of a unit-variance complex Gaussian prior (diagnostic).
pub fn gaussian_prior_mmse_mc(rho: f64, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut acc = 0.0;
    for _ in 0..samples {
        let sr: f64 = StandardNormal.sample(&mut rng);
        let si: f64 = StandardNormal.sample(&mut rng);
        let zr: f64 = StandardNormal.sample(&mut rng);
        let zi: f64 = StandardNormal.sample(&mut rng);
        let (sr, si, zr, zi) = (sr * h, si * h, zr * h, zi * h);
        let g = rho.sqrt() / (1.0 + rho);
        let yr = rho.sqrt() * sr + zr;
        let yi = rho.sqrt() * si + zi;
        acc += (sr - g * yr).powi(2) + (si - g * yi).powi(2);
    }
    acc / samples as f64
}
