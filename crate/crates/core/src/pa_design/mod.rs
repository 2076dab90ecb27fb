//! Power allocation design: the iterative capacity-region-achieving scheme,
//! a MAP-SER-optimized finite-length profile and two baselines.

use serde::{Deserialize, Serialize};

use crate::analysis::{fixed_point_forward, SignalMmse, UserTransform, VariancePath, VtfCurve, DEFAULT_XI_FLOOR};
use crate::channel::MacChannelSet;
use crate::error::{Error, Result};
use crate::numeric::special::ln_norm_cdf;
use crate::numeric::{bisect, GaussHermite};
use crate::sparc::{CodeParams, PowerAllocation};

/// Default relative margin `delta` in `eps_k = delta log B / rho*_k`.
pub const DEFAULT_DELTA: f64 = 0.05;
/// Default Gauss-Hermite order for the MAP SER expectation.
pub const DEFAULT_Z_POINTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PaScheme {
    Iterative,
    Optimized,
    Exponential,
    Average,
}

impl PaScheme {
    pub fn name(&self) -> &'static str {
        match self {
            PaScheme::Iterative => "iterative",
            PaScheme::Optimized => "optimized",
            PaScheme::Exponential => "exponential",
            PaScheme::Average => "average",
        }
    }
}

/// Which condition ended the iterative recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule {
    ResidualExhausted,
    SectionLimit,
}

/// A power allocation with the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaDesign {
    pub scheme: PaScheme,
    pub pa: PowerAllocation,
    pub user: Option<usize>,
    pub design_snr_db: Option<f64>,
    pub delta: Option<f64>,
    pub stop: Option<StopRule>,
    /// Residual power left when the section limit was hit.
    pub residual: Option<f64>,
    pub warnings: Vec<String>,
    /// Lemma-6 SER predicted at the design point.
    pub predicted_ser: Option<f64>,
    pub evaluations: Option<usize>,
    /// Every candidate of the optimizer ran into an early fixed point.
    pub infeasible: bool,
}

impl PaDesign {
    /// Design record with no provenance beyond the scheme.
    pub fn plain(scheme: PaScheme, pa: PowerAllocation) -> Self {
        Self {
            scheme,
            pa,
            user: None,
            design_snr_db: None,
            delta: None,
            stop: None,
            residual: None,
            warnings: Vec::new(),
            predicted_ser: None,
            evaluations: None,
            infeasible: false,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// `p_l = N / L`.
pub fn average_pa(params: &CodeParams) -> PowerAllocation {
    PowerAllocation::flat(params)
}

/// `p_l proportional to exp(-c l / L)` with `c = log(1 + snr)`.
pub fn exponential_pa(params: &CodeParams, snr: f64) -> Result<PowerAllocation> {
    if !(snr >= 0.0 && snr.is_finite()) {
        return Err(Error::InvalidArgument(format!("exponential PA needs snr >= 0, got {snr}")));
    }
    let c = snr.ln_1p();
    let l = params.l as f64;
    let raw: Vec<f64> = (1..=params.l).map(|k| (-c * k as f64 / l).exp()).collect();
    PowerAllocation::project(&raw, params.n_len)
}

/// Iterative allocation for user `user` of `set` (at the noise level the set
/// carries) along `path`.
///
/// Works in the path parameter `x = 1 / v_u >= 1`, where the VTF is
/// `(xi, F) = (S(x), 1/S(x) - x)`; the crossing
/// `F^{-1}(rho) = P_k / (1 + rho P_k)` becomes `S(x) = P_k / (1 + F(x) P_k)`.
pub fn iterative_pa(
    set: &MacChannelSet,
    user: usize,
    path: &VariancePath,
    params: &CodeParams,
    delta: f64,
) -> Result<PaDesign> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let t = UserTransform::new(set, user, path, params.n_len)?;
    if set.user(user).input_len() == params.n_len {
        return Err(Error::InvalidArgument(
            "N = M: the VTF is flat and the iterative recursion degenerates (need M << N)".into(),
        ));
    }
    let f0 = t.vtf_limit();
    let (s1, f1) = t.vtf_at_rho(1.0)?;
    if (f1 - f0).abs() <= 1e-12 * f0 {
        return Err(Error::InvalidArgument(format!("VTF is constant ({f0:e}); recursion degenerates")));
    }
    let n = params.n_len as f64;
    let lnb = (params.b as f64).ln();
    let mut residual = 1.0;
    let mut p = Vec::with_capacity(params.l);
    let mut stop = StopRule::SectionLimit;
    for k in 0..params.l {
        let rho_star = if k == 0 {
            f1
        } else {
            let h = |lx: f64| {
                let x = lx.exp();
                match t.vtf_at_rho(x) {
                    Ok((s, f)) => s - residual / (1.0 + f * residual),
                    Err(_) => f64::NAN,
                }
            };
            let mut hi = 1.0;
            while h(hi) > 0.0 {
                hi *= 2.0;
                if hi > 80.0 {
                    return Err(Error::Bracket(format!(
                        "no crossing for residual power {residual:e}; VTF spans [{f1:e}, {f0:e}] on xi in (0, {s1:e}]"
                    )));
                }
            }
            let lx = bisect(h, 0.0, hi, 1e-13)?;
            t.vtf_at_rho(lx.exp())?.1
        };
        let pk = lnb / rho_star * (1.0 + delta);
        if pk / n >= residual {
            p.push(residual * n);
            residual = 0.0;
            stop = StopRule::ResidualExhausted;
            break;
        }
        p.push(pk);
        residual -= pk / n;
    }
    let used = p.len();
    p.resize(params.l, 0.0);
    let mut warnings = Vec::new();
    if stop == StopRule::SectionLimit && residual > 0.01 {
        warnings.push(format!("section limit reached with residual power {residual:.4}; renormalized"));
    }
    if used < params.l {
        warnings.push(format!("power exhausted after {used} of {} sections", params.l));
    }
    for w in p.windows(2) {
        if w[1] > w[0] * (1.0 + 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "iterative allocation is not nonincreasing ({} then {})",
                w[0], w[1]
            )));
        }
    }
    let pa = PowerAllocation::project(&p, params.n_len)?;
    Ok(PaDesign {
        user: Some(user),
        design_snr_db: Some(set.snr_db()),
        delta: Some(delta),
        stop: Some(stop),
        residual: Some(residual),
        warnings,
        ..PaDesign::plain(PaScheme::Iterative, pa)
    })
}

/// MAP section error rate at effective SNR `rho_star`:
/// `1 - (1/L) sum_l E[Phi(z + sqrt(2 rho p_l))^(B-1)]`.
pub fn map_ser(pa: &PowerAllocation, params: &CodeParams, rho_star: f64, z_points: usize) -> Result<f64> {
    if !(rho_star >= 0.0) {
        return Err(Error::InvalidArgument(format!("rho* must be >= 0, got {rho_star}")));
    }
    pa.check_against(params)?;
    let gh = GaussHermite::new(z_points)?;
    let bm1 = (params.b - 1) as f64;
    let mut total = 0.0;
    let mut last: Option<(f64, f64)> = None;
    for &p in pa.powers() {
        let q = match last {
            Some((pp, qq)) if pp == p => qq,
            _ => {
                let a = (2.0 * rho_star * p).sqrt();
                let q = gh.expect_normal(|z| -(bm1 * ln_norm_cdf(z + a)).exp_m1());
                last = Some((p, q));
                q
            }
        };
        total += q;
    }
    Ok((total / params.l as f64).clamp(0.0, 1.0))
}

/// Objective of the optimizer: SER at the state-evolution fixed point.
struct SerObjective<'a> {
    params: &'a CodeParams,
    vtf: VtfCurve,
    table: std::sync::Arc<crate::analysis::SectionMmseTable>,
    z_points: usize,
}

impl SerObjective<'_> {
    /// `(Q, xi*)`.
    fn eval(&self, pa: &PowerAllocation) -> Result<(f64, f64)> {
        let mmse = SignalMmse::new(pa, self.params, self.table.clone())?;
        let xi = fixed_point_forward(|r| mmse.eval(r), |x| self.vtf.effective(x), DEFAULT_XI_FLOOR);
        let rho = self.vtf.effective(xi);
        Ok((map_ser(pa, self.params, rho, self.z_points)?, xi))
    }
}

/// Two-segment profile: geometric decay `exp(-c l / L)` up to the knee
/// `round(knee L)`, then flat at `tail` times the knee level.
fn two_segment(params: &CodeParams, c: f64, knee: f64, tail: f64) -> Result<PowerAllocation> {
    let l = params.l;
    let kn = ((knee * l as f64).round() as usize).clamp(1, l);
    let raw: Vec<f64> = (0..l)
        .map(|k| {
            if k < kn {
                (-c * k as f64 / l as f64).exp()
            } else {
                tail * (-c * (kn - 1) as f64 / l as f64).exp()
            }
        })
        .collect();
    PowerAllocation::project(&raw, params.n_len)
}

/// MAP-SER-optimized allocation for user `user`, evaluated at the set's SNR
/// raised by `target_snr_offset_db`. Deterministic pattern search over
/// `(decay, knee fraction, tail level)` with `budget` objective evaluations,
/// seeded by (and never worse than) [`iterative_pa`] at the same SNR.
pub fn optimize_pa(
    set: &MacChannelSet,
    user: usize,
    path: &VariancePath,
    params: &CodeParams,
    target_snr_offset_db: f64,
    budget: usize,
) -> Result<PaDesign> {
    if !(0.0..=6.0).contains(&target_snr_offset_db) {
        return Err(Error::InvalidArgument(format!(
            "target SNR offset must lie in [0, 6] dB, got {target_snr_offset_db}"
        )));
    }
    let target = set.with_snr_db(set.snr_db() + target_snr_offset_db)?;
    let seed = iterative_pa(&target, user, path, params, DEFAULT_DELTA)?;
    let mut design = PaDesign { scheme: PaScheme::Optimized, ..seed.clone() };
    design.design_snr_db = Some(target.snr_db());
    design.evaluations = Some(0);
    if budget == 0 {
        return Ok(design);
    }
    let vtf = UserTransform::new(&target, user, path, params.n_len)?.tabulate(60)?;
    let obj = SerObjective {
        params,
        vtf,
        table: crate::analysis::SectionMmseTable::default_for(params.b)?,
        z_points: DEFAULT_Z_POINTS,
    };
    let (seed_q, seed_xi) = obj.eval(&seed.pa)?;
    let mut evals = 1;
    let mut best_pa = seed.pa.clone();
    let mut best = (seed_q, seed_xi);
    let mut stuck_everywhere = seed_xi > DEFAULT_XI_FLOOR;

    // start the family at the seed's overall decay
    let pw = seed.pa.powers();
    let last = pw.iter().rposition(|&x| x > 0.0).unwrap_or(0);
    let mut x = [
        if last > 0 { (pw[0] / pw[last]).ln() * params.l as f64 / last as f64 } else { 0.0 },
        1.0,
        1.0,
    ];
    let lo = [0.0, 1.0 / params.l as f64, 0.0];
    let hi = [60.0, 1.0, 1.0];
    let mut step = [0.5 * x[0].max(1.0), 0.25, 0.25];
    let eval_point = |x: &[f64; 3]| -> Result<(f64, f64, PowerAllocation)> {
        let pa = two_segment(params, x[0], x[1], x[2])?;
        let (q, xi) = obj.eval(&pa)?;
        Ok((q, xi, pa))
    };
    let mut current = if evals < budget {
        evals += 1;
        let (q, xi, pa) = eval_point(&x)?;
        stuck_everywhere &= xi > DEFAULT_XI_FLOOR;
        if q < best.0 {
            best = (q, xi);
            best_pa = pa;
        }
        q
    } else {
        f64::INFINITY
    };
    'search: while evals < budget {
        let mut improved = false;
        for d in 0..3 {
            for sign in [1.0, -1.0] {
                if evals >= budget {
                    break 'search;
                }
                let mut y = x;
                y[d] = (y[d] + sign * step[d]).clamp(lo[d], hi[d]);
                if y == x {
                    continue;
                }
                evals += 1;
                let (q, xi, pa) = eval_point(&y)?;
                stuck_everywhere &= xi > DEFAULT_XI_FLOOR;
                if q < current {
                    current = q;
                    x = y;
                    improved = true;
                    if q < best.0 {
                        best = (q, xi);
                        best_pa = pa;
                    }
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
            if step[0] < 1e-3 && step[1] < 1e-3 && step[2] < 1e-3 {
                break;
            }
        }
    }
    design.pa = best_pa;
    design.predicted_ser = Some(best.0);
    design.evaluations = Some(evals);
    design.infeasible = stuck_everywhere;
    design.stop = None;
    design.residual = None;
    design.warnings.clear();
    if stuck_everywhere {
        design.warnings.push("every evaluated profile stalls at a fixed point".into());
    }
    Ok(design)
}

/// Lemma-6 SER of `pa` at the state-evolution fixed point for the set's SNR.
pub fn predicted_ser(set: &MacChannelSet, user: usize, path: &VariancePath, params: &CodeParams, pa: &PowerAllocation) -> Result<(f64, f64)> {
    let vtf = UserTransform::new(set, user, path, params.n_len)?.tabulate(60)?;
    let obj = SerObjective {
        params,
        vtf,
        table: crate::analysis::SectionMmseTable::default_for(params.b)?,
        z_points: DEFAULT_Z_POINTS,
    };
    obj.eval(pa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_tdla_channel, BlockFadingChannel, TapProfile};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn baselines() {
        let params = CodeParams::new(16, 10, 16, 16).unwrap();
        let a = average_pa(&params);
        assert!(a.powers().iter().all(|&p| p == 16.0));
        let e = exponential_pa(&params, 15.0).unwrap();
        let c = 16f64.ln();
        let ratio = e.powers()[0] / e.powers()[9];
        assert!((ratio - (c * 9.0 / 10.0).exp()).abs() < 1e-9 * ratio);
        assert!((e.powers().iter().sum::<f64>() - 160.0).abs() < 1e-9);
        let flat = exponential_pa(&params, 0.0).unwrap();
        assert!(flat.powers().iter().all(|&p| (p - 16.0).abs() < 1e-12));
    }

    #[test]
    fn map_ser_limits() {
        let params = CodeParams::new(8, 3, 8, 8).unwrap();
        let pa = average_pa(&params);
        let q0 = map_ser(&pa, &params, 0.0, 200).unwrap();
        assert!((q0 - 7.0 / 8.0).abs() < 1e-9, "{q0}");
        assert!(map_ser(&pa, &params, 1e4, 200).unwrap() < 1e-100);
    }

    #[test]
    fn map_ser_matches_monte_carlo() {
        let params = CodeParams::new(4, 2, 8, 8).unwrap();
        let pa = PowerAllocation::project(&[3.0, 1.0], 8).unwrap();
        let rho = 0.6;
        let q = map_ser(&pa, &params, rho, 200).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 20_000;
        let mut errors = 0;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for _ in 0..trials {
            for &p in pa.powers() {
                let noise = |rng: &mut ChaCha8Rng| {
                    let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
                    h * z
                };
                let y0 = (rho * p).sqrt() + noise(&mut rng);
                if (1..4).any(|_| noise(&mut rng) > y0) {
                    errors += 1;
                }
            }
        }
        let n = (2 * trials) as f64;
        let emp = errors as f64 / n;
        let sigma = (q * (1.0 - q) / n).sqrt();
        assert!((emp - q).abs() < 3.0 * sigma, "{emp} vs {q}");
        let _ = rng.random::<u8>();
    }

    #[test]
    fn map_ser_monotone() {
        let params = CodeParams::new(64, 4, 64, 64).unwrap();
        let pa = PowerAllocation::project(&[4.0, 3.0, 2.0, 1.0], 256).unwrap();
        let mut prev = 1.0;
        for k in 0..30 {
            let q = map_ser(&pa, &params, 0.01 * 1.3f64.powi(k), 200).unwrap();
            assert!(q <= prev);
            prev = q;
        }
    }

    fn desk_set(snr_db: f64) -> MacChannelSet {
        let prof = TapProfile::tdl_a(100e-9);
        let a = generate_tdla_channel(7, &prof, 0, 4, 8, 2, 2, 0.0).unwrap();
        let b = generate_tdla_channel(7, &prof, 1, 4, 8, 2, 2, -3.0).unwrap();
        MacChannelSet::new(vec![a, b], 1.0).unwrap().with_snr_db(snr_db).unwrap()
    }

    #[test]
    fn iterative_is_feasible_and_geometric_for_awgn_like_channel() {
        let ch = BlockFadingChannel::identity(0, 8, 8, 1, 1).unwrap();
        let set = MacChannelSet::new(vec![ch], 0.1).unwrap();
        let params = CodeParams::new(64, 32, 64, 64).unwrap();
        let d = iterative_pa(&set, 0, &VariancePath::uniform(1).unwrap(), &params, DEFAULT_DELTA).unwrap();
        let p = d.pa.powers();
        assert!(p.windows(2).all(|w| w[1] <= w[0]));
        assert!((p.iter().sum::<f64>() - params.n_len as f64).abs() < 1e-9 * params.n_len as f64);
        // log-ratios of consecutive head sections are roughly constant
        let r: Vec<f64> = (0..4).map(|k| (p[k] / p[k + 1]).ln()).collect();
        for x in &r {
            assert!((x / r[0] - 1.0).abs() < 0.35, "{r:?}");
        }
    }

    #[test]
    fn square_dictionary_is_rejected() {
        let ch = BlockFadingChannel::identity(0, 8, 8, 1, 1).unwrap();
        let set = MacChannelSet::new(vec![ch], 0.1).unwrap();
        let params = CodeParams::new(8, 8, 64, 64).unwrap();
        assert!(iterative_pa(&set, 0, &VariancePath::uniform(1).unwrap(), &params, DEFAULT_DELTA).is_err());
    }

    #[test]
    fn zero_budget_returns_seed_and_optimizer_never_worse() {
        let set = desk_set(30.0);
        let path = VariancePath::new(vec![1.0, 1.0]).unwrap();
        let params = CodeParams::new(32, 64, 64, 32).unwrap();
        let seed = iterative_pa(&set.with_snr_db(33.0).unwrap(), 0, &path, &params, DEFAULT_DELTA).unwrap();
        let d0 = optimize_pa(&set, 0, &path, &params, 3.0, 0).unwrap();
        assert_eq!(d0.pa, seed.pa);
        let d = optimize_pa(&set, 0, &path, &params, 3.0, 30).unwrap();
        let at = set.with_snr_db(33.0).unwrap();
        let (q_seed, _) = predicted_ser(&at, 0, &path, &params, &seed.pa).unwrap();
        assert!(d.predicted_ser.unwrap() <= q_seed);
        let p = d.pa.powers();
        assert!(p.windows(2).all(|w| w[1] <= w[0]));
        assert!((p.iter().sum::<f64>() / params.n_len as f64 - 1.0).abs() < 1e-9);
        let back = PaDesign::from_json(&d.to_json().unwrap()).unwrap();
        assert_eq!(back, d);
    }
}
