//! MA-OAMP: the multi-user iterative receiver and its state evolution.
//!
//! Each iteration forms a joint LMMSE-type residual filter from the current
//! variances, produces a pseudo-observation `r_u = s_u + noise` per user,
//! denoises it sectionwise and recombines the estimate so that its error is
//! uncorrelated with the next linear step. The scalar recursion
//! `chi -> tau -> xi -> v` does not depend on the data.

mod diagnostics;

pub use diagnostics::{decoupling_diagnostics, DecouplingReport};

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analysis::SignalMmse;
use crate::channel::MacChannelSet;
use crate::error::{Error, Result};
use crate::sparc::{CodeParams, DictionaryOp, Message, PowerAllocation};

/// Per-user scalars of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SEScalars {
    pub chi: Vec<f64>,
    pub tau: Vec<f64>,
    /// `phi(1/tau)`, the MSE of the next denoiser output.
    pub xi: Vec<f64>,
    /// Variance fed to this iteration's linear step.
    pub v: Vec<f64>,
}

/// Receiver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeOptions {
    pub max_iters: usize,
    /// All users below this variance ends the loop.
    pub v_tol: f64,
    /// `v <- damping v_old + (1 - damping) v_new`; zero disables damping.
    pub damping: f64,
    /// Take `xi` from the denoiser's average posterior variance (its
    /// empirical divergence times `tau`) instead of the MMSE curve.
    #[serde(default)]
    pub empirical_xi: bool,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self { max_iters: 100, v_tol: 1e-8, damping: 0.0, empirical_xi: false }
    }
}

/// One row of an iteration trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub user: usize,
    pub chi: f64,
    pub tau: f64,
    pub xi: f64,
    pub v: f64,
    /// `||r_u - s_u||^2 / N_u` (needs the transmitted signal).
    pub empirical_mse: Option<f64>,
    /// `||eta_u - s_u||^2 / N_u`.
    pub posterior_mse: Option<f64>,
    pub frozen: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub rows: Vec<TraceRow>,
    pub iterations: usize,
}

impl IterationTrace {
    pub fn user_rows(&self, user: usize) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.user == user)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,user,tau,v,empirical_mse")?;
        for r in &self.rows {
            let e = r.empirical_mse.map(|x| format!("{x:.12e}")).unwrap_or_default();
            writeln!(w, "{},{},{:.12e},{:.12e},{}", r.iteration, r.user, r.tau, r.v, e)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub messages: Vec<Message>,
    /// Section errors per user (only with ground truth).
    pub section_errors: Option<Vec<usize>>,
    pub trace: IterationTrace,
    pub converged: bool,
}

/// Per-user code description for the receiver.
#[derive(Debug, Clone)]
pub struct UserCode<'a> {
    pub params: &'a CodeParams,
    pub pa: &'a PowerAllocation,
    pub dict: &'a DictionaryOp,
}

fn check_finite(x: &[Complex64], what: &'static str) -> Result<()> {
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// Linear step: `r_u = s_u + (1/chi_u) Xi_u^H H_u^H Sigma (y - sum_i H_i Xi_i s_i)`
/// with `Sigma` built from `v`. Returns the pseudo-observations and `chi`.
pub fn lin_step(
    y: &[Complex64],
    set: &MacChannelSet,
    dicts: &[&DictionaryOp],
    s: &[Vec<Complex64>],
    v: &[f64],
) -> Result<(Vec<Vec<Complex64>>, Vec<f64>)> {
    let u = set.num_users();
    if dicts.len() != u || s.len() != u || v.len() != u {
        return Err(Error::Dimension("one dictionary, estimate and variance per user".into()));
    }
    check_finite(y, "received signal")?;
    for su in s {
        check_finite(su, "signal estimate")?;
    }
    let res = set.resolvent(v)?;
    let xs = dicts.iter().zip(s).map(|(d, su)| d.forward(su)).collect::<Result<Vec<_>>>()?;
    let pred = set.superpose(&xs)?;
    if pred.len() != y.len() {
        return Err(Error::Dimension(format!("received length {} vs {}", y.len(), pred.len())));
    }
    let resid: Vec<Complex64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
    let filtered = res.apply(&resid)?;
    let mut rs = Vec::with_capacity(u);
    let mut chis = Vec::with_capacity(u);
    for k in 0..u {
        let n_u = dicts[k].n_len();
        let chi = set.chi(&res, k, n_u)?;
        if !(chi > 0.0) {
            return Err(Error::DegenerateChannel(format!("user {k} has chi = {chi}")));
        }
        let back = dicts[k].adjoint(&set.user(k).apply_adjoint(&filtered)?)?;
        rs.push(s[k].iter().zip(back).map(|(a, b)| a + b / chi).collect());
        chis.push(chi);
    }
    Ok((rs, chis))
}

/// Sectionwise posterior mean of `s` given `r = s + sqrt(tau) z`, plus the
/// average posterior variance (diagnostic).
pub fn denoise(r: &[Complex64], tau: f64, pa: &PowerAllocation, params: &CodeParams) -> Result<(Vec<Complex64>, f64)> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("denoiser needs tau > 0, got {tau}")));
    }
    if r.len() != params.n_len {
        return Err(Error::Dimension(format!("denoiser input has length {}, expected {}", r.len(), params.n_len)));
    }
    pa.check_against(params)?;
    let b = params.b;
    let mut eta = vec![Complex64::new(0.0, 0.0); r.len()];
    let mut w = vec![0.0; b];
    let mut post_var = 0.0;
    for (l, &p) in pa.powers().iter().enumerate() {
        let sec = &r[l * b..(l + 1) * b];
        let sp = p.sqrt();
        let mut max = f64::NEG_INFINITY;
        for (wi, ri) in w.iter_mut().zip(sec) {
            *wi = (2.0 * sp * ri.re - p) / tau;
            max = max.max(*wi);
        }
        let mut total = 0.0;
        for wi in w.iter_mut() {
            *wi = (*wi - max).exp();
            total += *wi;
        }
        let mut sum_sq = 0.0;
        for (i, wi) in w.iter().enumerate() {
            let wi = wi / total;
            eta[l * b + i] = Complex64::new(sp * wi, 0.0);
            sum_sq += wi * wi;
        }
        post_var += p * (1.0 - sum_sq);
    }
    Ok((eta, post_var / params.n_len as f64))
}

/// `xi = phi(1/tau)` from the cached MMSE table.
pub fn se_xi(pa: &PowerAllocation, params: &CodeParams, tau: f64) -> Result<f64> {
    Ok(SignalMmse::with_default_table(pa, params)?.eval(1.0 / tau))
}

/// Result of the divergence-free recombination.
#[derive(Debug, Clone, PartialEq)]
pub struct Combined {
    pub s: Vec<Complex64>,
    /// `tau` and `xi` were too close; `s` is the plain denoiser output.
    pub frozen: bool,
}

/// `s' = (tau eta - xi r) / (tau - xi)`, or `eta` with the frozen flag when
/// `tau - xi < 1e-12 tau`.
pub fn onsager_combine(r: &[Complex64], eta: &[Complex64], tau: f64, xi: f64) -> Result<Combined> {
    if r.len() != eta.len() {
        return Err(Error::Dimension("r and eta lengths differ".into()));
    }
    if !(tau > 0.0) || !(xi >= 0.0) {
        return Err(Error::InvalidArgument(format!("need tau > 0 and xi >= 0, got ({tau}, {xi})")));
    }
    if tau - xi < 1e-12 * tau {
        return Ok(Combined { s: eta.to_vec(), frozen: true });
    }
    let d = tau - xi;
    let s = r.iter().zip(eta).map(|(ri, ei)| (ei * tau - ri * xi) / d).collect();
    Ok(Combined { s, frozen: false })
}

/// Next variance `tau xi / (tau - xi)`.
fn next_v(tau: f64, xi: f64) -> f64 {
    tau * xi / (tau - xi)
}

/// State-evolution trajectory alone (no data). Entry `t` holds the scalars
/// of iteration `t + 1`.
pub fn state_evolution(set: &MacChannelSet, codes: &[UserCode<'_>], opts: &DecodeOptions) -> Result<Vec<SEScalars>> {
    let mmse = codes
        .iter()
        .map(|c| SignalMmse::with_default_table(c.pa, c.params))
        .collect::<Result<Vec<_>>>()?;
    let u = codes.len();
    let mut v = vec![1.0; u];
    let mut frozen = vec![false; u];
    let mut out = Vec::new();
    for _ in 0..opts.max_iters {
        let res = set.resolvent(&v)?;
        let mut sc = SEScalars { chi: vec![0.0; u], tau: vec![0.0; u], xi: vec![0.0; u], v: v.clone() };
        for k in 0..u {
            let chi = set.chi(&res, k, codes[k].params.n_len)?;
            let tau = 1.0 / chi - v[k];
            sc.chi[k] = chi;
            sc.tau[k] = tau;
            sc.xi[k] = mmse[k].eval(1.0 / tau);
        }
        for k in 0..u {
            if frozen[k] {
                continue;
            }
            let (tau, xi) = (sc.tau[k], sc.xi[k]);
            if tau - xi < 1e-12 * tau {
                frozen[k] = true;
            } else {
                v[k] = opts.damping * v[k] + (1.0 - opts.damping) * next_v(tau, xi);
            }
        }
        out.push(sc);
        if v.iter().zip(&frozen).all(|(&x, &f)| f || x < opts.v_tol) {
            break;
        }
    }
    Ok(out)
}

fn hard_decision(r: &[Complex64], params: &CodeParams) -> Message {
    let b = params.b;
    let indices = (0..params.l)
        .map(|l| {
            let sec = &r[l * b..(l + 1) * b];
            let mut best = 0;
            for i in 1..b {
                if sec[i].re > sec[best].re {
                    best = i;
                }
            }
            best
        })
        .collect();
    Message { indices }
}

fn mse(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>() / a.len() as f64
}

/// Full MA-OAMP loop from `v = 1`, `s = 0`. `truth` holds the transmitted
/// sparse signals and messages when known, for the trace and error counts.
pub fn decode(
    y: &[Complex64],
    set: &MacChannelSet,
    codes: &[UserCode<'_>],
    opts: &DecodeOptions,
    truth: Option<(&[Vec<Complex64>], &[Message])>,
) -> Result<DecodeResult> {
    let u = set.num_users();
    if codes.len() != u {
        return Err(Error::Dimension(format!("{} codes for {u} users", codes.len())));
    }
    if opts.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
    }
    for c in codes {
        c.pa.check_against(c.params)?;
        if c.dict.n_len() != c.params.n_len || c.dict.m_len() != c.params.m_len {
            return Err(Error::Dimension("dictionary does not match code parameters".into()));
        }
    }
    if let Some((s_true, msgs)) = truth {
        if s_true.len() != u || msgs.len() != u {
            return Err(Error::Dimension("truth must cover every user".into()));
        }
    }
    let mmse = codes
        .iter()
        .map(|c| SignalMmse::with_default_table(c.pa, c.params))
        .collect::<Result<Vec<_>>>()?;
    let dicts: Vec<&DictionaryOp> = codes.iter().map(|c| c.dict).collect();
    let mut s: Vec<Vec<Complex64>> = codes.iter().map(|c| vec![Complex64::new(0.0, 0.0); c.params.n_len]).collect();
    let mut v = vec![1.0; u];
    let mut frozen = vec![false; u];
    let mut trace = IterationTrace::default();
    let mut last_r = s.clone();
    let mut converged = false;
    for it in 1..=opts.max_iters {
        let (rs, chis) = lin_step(y, set, &dicts, &s, &v)?;
        for k in 0..u {
            let tau = 1.0 / chis[k] - v[k];
            if !(tau > 0.0) {
                return Err(Error::NonFinite("tau left (0, inf)"));
            }
            let (eta, post_var) = denoise(&rs[k], tau, codes[k].pa, codes[k].params)?;
            let xi = if opts.empirical_xi { post_var } else { mmse[k].eval(1.0 / tau) };
            let (emp, post) = match truth {
                Some((s_true, _)) => (Some(mse(&rs[k], &s_true[k])), Some(mse(&eta, &s_true[k]))),
                None => (None, None),
            };
            trace.rows.push(TraceRow {
                iteration: it,
                user: k,
                chi: chis[k],
                tau,
                xi,
                v: v[k],
                empirical_mse: emp,
                posterior_mse: post,
                frozen: frozen[k],
            });
            if !frozen[k] {
                let c = onsager_combine(&rs[k], &eta, tau, xi)?;
                if c.frozen {
                    frozen[k] = true;
                } else {
                    v[k] = opts.damping * v[k] + (1.0 - opts.damping) * next_v(tau, xi);
                }
                s[k] = c.s;
            }
        }
        last_r = rs;
        trace.iterations = it;
        if v.iter().all(|&x| x < opts.v_tol) {
            converged = true;
            break;
        }
        if v.iter().zip(&frozen).all(|(&x, &f)| f || x < opts.v_tol) {
            break;
        }
    }
    let messages: Vec<Message> = last_r.iter().zip(codes).map(|(r, c)| hard_decision(r, c.params)).collect();
    let section_errors = truth.map(|(_, msgs)| messages.iter().zip(msgs).map(|(a, b)| a.section_errors(b)).collect());
    Ok(DecodeResult { messages, section_errors, trace, converged })
}
