use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::experiment::{clopper_pearson, Experiment};
use crate::error::{Error, Result};
use crate::sparc::{modulate, sample_message_with, CodeParams, Message, PowerAllocation};

pub const ORACLE_MAX_B: usize = 4;
pub const ORACLE_MAX_L: usize = 3;
pub const ORACLE_MAX_N: usize = 12;

/// Exact posterior over all `B^L` messages for one observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactPosterior {
    pub map: Message,
    /// Posterior mean of the sparse signal.
    pub mean: Vec<Complex64>,
}

fn check_caps(params: &CodeParams) -> Result<()> {
    if params.b > ORACLE_MAX_B || params.l > ORACLE_MAX_L || params.n_len > ORACLE_MAX_N {
        return Err(Error::SizeCap(format!(
            "oracle needs B <= {ORACLE_MAX_B}, L <= {ORACLE_MAX_L}, N <= {ORACLE_MAX_N}; got B={}, L={}, N={}",
            params.b, params.l, params.n_len
        )));
    }
    Ok(())
}

/// Enumerate every message under `y = A s + w`, `w ~ CN(0, noise_var I)`.
///
/// `a` is the dense effective operator (`H Xi`, or the identity for the
/// scalar decoupled model).
pub fn exact_posterior(
    y: &[Complex64],
    a: &DMatrix<Complex64>,
    noise_var: f64,
    pa: &PowerAllocation,
    params: &CodeParams,
) -> Result<ExactPosterior> {
    check_caps(params)?;
    pa.check_against(params)?;
    if a.ncols() != params.n_len || a.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "operator is {}x{}, expected {}x{}",
            a.nrows(),
            a.ncols(),
            y.len(),
            params.n_len
        )));
    }
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise variance must be positive, got {noise_var}")));
    }
    let (b, l) = (params.b, params.l);
    let total = b.pow(l as u32);
    let amp: Vec<f64> = pa.powers().iter().map(|p| p.sqrt()).collect();
    let mut logp = Vec::with_capacity(total);
    let mut idx = vec![0usize; l];
    for code in 0..total {
        let mut c = code;
        for slot in idx.iter_mut() {
            *slot = c % b;
            c /= b;
        }
        // residual y - sum of the selected columns
        let mut res: Vec<Complex64> = y.to_vec();
        for (sec, &j) in idx.iter().enumerate() {
            let col = a.column(sec * b + j);
            for (r, x) in res.iter_mut().zip(col.iter()) {
                *r -= x * amp[sec];
            }
        }
        logp.push(-res.iter().map(|r| r.norm_sqr()).sum::<f64>() / noise_var);
    }
    let top = logp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logp.iter().map(|x| (x - top).exp()).collect();
    let z: f64 = w.iter().sum();
    let mut mean = vec![Complex64::new(0.0, 0.0); params.n_len];
    let mut best = 0;
    for code in 0..total {
        if logp[code] > logp[best] {
            best = code;
        }
        let mut c = code;
        for (sec, a_sec) in amp.iter().enumerate() {
            mean[sec * b + c % b] += Complex64::new(a_sec * w[code] / z, 0.0);
            c /= b;
        }
    }
    let mut c = best;
    let map = (0..l)
        .map(|_| {
            let j = c % b;
            c /= b;
            j
        })
        .collect();
    Ok(ExactPosterior { map: Message { indices: map }, mean })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub config_hash: String,
    pub seed: u64,
    pub snr_db: f64,
    pub trials: u64,
    pub sections: u64,
    pub section_errors: u64,
    pub ser: f64,
    pub ser_ci: (f64, f64),
    /// First trial: transmitted message, MAP decision and exact posterior mean.
    pub first_message: Message,
    pub first_map: Message,
    pub first_posterior_mean: Vec<Complex64>,
}

/// MAP SER of the first configured SNR point by exhaustive enumeration through
/// the actual dictionary and channel.
pub fn exhaustive_map_oracle(config: &SimConfig) -> Result<OracleReport> {
    config.validate()?;
    if config.num_users() != 1 {
        return Err(Error::SizeCap(format!("oracle needs exactly one user, got {}", config.num_users())));
    }
    check_caps(&config.code_params(0)?)?;
    let exp = Experiment::prepare(config)?;
    let params = &exp.params[0];
    let pa = &exp.designs[0].pa;
    let snr_db = exp.snr_points_db()[0];
    let set = exp.base.with_snr_db(snr_db)?;
    let a = set.user(0).dense() * exp.dicts[0].dense();
    let h = (set.sigma2() / 2.0).sqrt();
    let trials = config.experiment.trials as u64;
    let mut errors = 0u64;
    let mut first = None;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(config.experiment.seed);
        rng.set_stream(t);
        let msg = sample_message_with(params, &mut rng);
        let s = modulate(&msg, pa, params)?;
        let mut y: Vec<Complex64> = (&a * nalgebra::DVector::from_vec(s)).iter().copied().collect();
        for yi in y.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *yi += Complex64::new(h * re, h * im);
        }
        let post = exact_posterior(&y, &a, set.sigma2(), pa, params)?;
        errors += post.map.section_errors(&msg) as u64;
        if first.is_none() {
            first = Some((msg, post));
        }
    }
    let (first_message, post) = first.ok_or_else(|| Error::Config("oracle needs trials >= 1".into()))?;
    let sections = trials * params.l as u64;
    Ok(OracleReport {
        config_hash: exp.hash.clone(),
        seed: config.experiment.seed,
        snr_db,
        trials,
        sections,
        section_errors: errors,
        ser: errors as f64 / sections as f64,
        ser_ci: clopper_pearson(errors, sections),
        first_message,
        first_map: post.map,
        first_posterior_mean: post.mean,
    })
}

impl OracleReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("config_hash,seed,snr_db,trials,sections,section_errors,ser,ser_lo,ser_hi\n");
        out.push_str(&format!(
            "{},{},{},{},{},{},{:e},{:e},{:e}\n",
            self.config_hash,
            self.seed,
            self.snr_db,
            self.trials,
            self.sections,
            self.section_errors,
            self.ser,
            self.ser_ci.0,
            self.ser_ci.1
        ));
        out
    }
}
