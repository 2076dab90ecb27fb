use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use super::config::{PathKind, SimConfig};
use crate::analysis::{align_path, capacity_region, limit_snr, user_rate_supremum, VariancePath};
use crate::channel::MacChannelSet;
use crate::error::{Error, Result};
use crate::ma_oamp::{decode, state_evolution, UserCode};
use crate::pa_design::{average_pa, exponential_pa, iterative_pa, optimize_pa, PaDesign, PaScheme};
use crate::sparc::{encode, modulate, sample_message_with, CodeParams, DictionaryOp, Message};

/// Tolerance for the dominant-face check on configured rates.
const FACE_TOL: f64 = 1e-6;

/// Everything derived from a config before any trial runs.
pub struct Experiment {
    pub config: SimConfig,
    pub hash: String,
    /// Channel set at unit noise variance.
    pub base: MacChannelSet,
    pub params: Vec<CodeParams>,
    pub dicts: Vec<DictionaryOp>,
    pub target_rates: Vec<f64>,
    pub limit_snr_db: f64,
    pub path: VariancePath,
    pub designs: Vec<PaDesign>,
}

impl Experiment {
    /// Build channels, resolve the limit SNR and path, and design every PA.
    pub fn prepare(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let hash = config.hash()?;
        let base = config.channel_set()?;
        let users = config.num_users();
        let params = (0..users).map(|u| config.code_params(u)).collect::<Result<Vec<_>>>()?;
        let dicts = config
            .users
            .iter()
            .zip(&params)
            .map(|(spec, p)| DictionaryOp::build(spec.dictionary, spec.dictionary_seed, p.m_len, p.n_len))
            .collect::<Result<Vec<_>>>()?;
        let target_rates = config.target_rates()?;
        let snr = limit_snr(&base, &target_rates)?;
        let limit = base.with_sigma2(1.0 / snr)?;
        if users > 1 {
            let region = capacity_region(&limit)?;
            if !region.on_dominant_face(&target_rates, FACE_TOL) {
                return Err(Error::Config(format!(
                    "target rates {target_rates:?} nats are not on the dominant face at the limit SNR"
                )));
            }
        }
        let d = &config.design;
        let path = match d.path {
            PathKind::Aligned if users == 1 => VariancePath::uniform(1)?,
            PathKind::Aligned => align_path(&limit, &target_rates, 1e-8)?,
            PathKind::Uniform => VariancePath::uniform(users)?,
            PathKind::Sic => VariancePath::sic(d.sic_order.as_deref().unwrap_or(&[]), d.kappa)?,
        };
        let target = limit.with_snr_db(limit.snr_db() + d.target_snr_offset_db)?;
        let designs = config
            .users
            .iter()
            .enumerate()
            .map(|(u, spec)| {
                let p = &params[u];
                let mut design = match spec.pa {
                    PaScheme::Average => PaDesign::plain(PaScheme::Average, average_pa(p)),
                    PaScheme::Exponential => {
                        // scalar-channel SNR whose capacity matches the user's rate supremum
                        let rsup = user_rate_supremum(&limit, u, &path)?;
                        let snr = (rsup * p.m_bar as f64 / p.m_len as f64).exp_m1();
                        let mut d = PaDesign::plain(PaScheme::Exponential, exponential_pa(p, snr)?);
                        d.design_snr_db = Some(limit.snr_db());
                        d
                    }
                    PaScheme::Iterative => iterative_pa(&target, u, &path, p, d.delta)?,
                    PaScheme::Optimized => optimize_pa(&limit, u, &path, p, d.target_snr_offset_db, d.budget)?,
                };
                design.user = Some(u);
                Ok(design)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            hash,
            base,
            params,
            dicts,
            target_rates,
            limit_snr_db: limit.snr_db(),
            path,
            designs,
        })
    }

    /// Resolved absolute operating points in dB.
    pub fn snr_points_db(&self) -> Vec<f64> {
        let e = &self.config.experiment;
        let shift = if e.relative_to_limit { self.limit_snr_db } else { 0.0 };
        e.snr_db.iter().map(|x| x + shift).collect()
    }

    pub fn codes(&self) -> Vec<UserCode<'_>> {
        (0..self.params.len())
            .map(|u| UserCode { params: &self.params[u], pa: &self.designs[u].pa, dict: &self.dicts[u] })
            .collect()
    }
}

/// Exact 95% Clopper-Pearson interval for `k` successes in `n` draws.
pub fn clopper_pearson(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let alpha = 0.05;
    let (kf, nf) = (k as f64, n as f64);
    let lo = if k == 0 {
        0.0
    } else {
        Beta::new(kf, nf - kf + 1.0).map(|d| d.inverse_cdf(alpha / 2.0)).unwrap_or(0.0)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new(kf + 1.0, nf - kf).map(|d| d.inverse_cdf(1.0 - alpha / 2.0)).unwrap_or(1.0)
    };
    (lo, hi)
}

/// Bits in error between two section indices under natural binary labels.
fn bit_errors(a: &Message, b: &Message) -> u64 {
    a.indices.iter().zip(&b.indices).map(|(x, y)| (x ^ y).count_ones() as u64).sum()
}

/// Per-(SNR, user) aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPoint {
    pub snr_db: f64,
    pub user: usize,
    pub pa: PaScheme,
    /// Trials that produced a decision.
    pub trials: u64,
    pub failed_trials: u64,
    pub sections: u64,
    pub section_errors: u64,
    pub ser: f64,
    pub ser_ci: (f64, f64),
    pub bit_errors: Option<u64>,
    pub bits: Option<u64>,
    pub ber: f64,
    /// BER derived from SER because `B` is not a power of two.
    pub ber_converted: bool,
    pub avg_iterations: f64,
    pub converged_trials: u64,
    /// State-evolution `tau` and `v` per iteration.
    pub se_tau: Vec<f64>,
    pub se_v: Vec<f64>,
    /// Mean empirical `(1/N)|r - s|^2` per iteration over trials reaching it.
    pub empirical_mse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrPoint {
    pub snr_db: f64,
    pub snr_rel_limit_db: f64,
    /// Trial failures by error category.
    pub failures: BTreeMap<String, u64>,
    pub users: Vec<UserPoint>,
}

/// Capacity-region summary at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisBlock {
    pub snr_db: f64,
    pub sum_capacity_nats: f64,
    /// Subset bounds; entry `k` belongs to user bitmask `k + 1`.
    pub subset_bounds_nats: Vec<f64>,
    pub vertices: Vec<Vertex>,
    pub path_gammas: Vec<f64>,
    pub rate_supremum_nats: Vec<f64>,
    /// `|sum R^sup - C_sum| / C_sum`.
    pub identity_rel_err: f64,
    /// Multiply nats by this to get bits.
    pub bits_per_nat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub order: Vec<usize>,
    pub rates_nats: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub seed: u64,
    pub config: SimConfig,
    pub target_rates_nats: Vec<f64>,
    pub limit_snr_db: f64,
    pub designs: Vec<PaDesign>,
    pub points: Vec<SnrPoint>,
    pub analysis: Vec<AnalysisBlock>,
}

pub fn analysis_block(set: &MacChannelSet, path: &VariancePath) -> Result<AnalysisBlock> {
    let region = capacity_region(set)?;
    let rsup = (0..set.num_users())
        .map(|u| user_rate_supremum(set, u, path))
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = rsup.iter().sum();
    Ok(AnalysisBlock {
        snr_db: set.snr_db(),
        sum_capacity_nats: region.sum_capacity,
        subset_bounds_nats: region.bounds.clone(),
        vertices: region
            .vertices
            .iter()
            .map(|(order, rates)| Vertex { order: order.clone(), rates_nats: rates.clone() })
            .collect(),
        path_gammas: path.gammas().to_vec(),
        rate_supremum_nats: rsup,
        identity_rel_err: (total - region.sum_capacity).abs() / region.sum_capacity,
        bits_per_nat: std::f64::consts::LOG2_E,
    })
}

/// Outcome of one trial, reduced to integers plus trace sums.
struct TrialOutcome {
    section_errors: Vec<u64>,
    bit_errors: Vec<u64>,
    iterations: u64,
    converged: bool,
    /// Per user, per iteration empirical MSE.
    mse: Vec<Vec<f64>>,
}

fn error_category(e: &Error) -> String {
    let name = match e {
        Error::Dimension(_) => "dimension",
        Error::DegenerateChannel(_) => "degenerate-channel",
        Error::InvalidArgument(_) => "invalid-argument",
        Error::NonFinite(_) => "non-finite",
        Error::Bracket(_) => "bracket",
        Error::Quadrature { .. } => "quadrature",
        Error::Divergent(_) => "divergent",
        Error::SizeCap(_) => "size-cap",
        Error::Config(_) => "config",
        Error::Io(_) => "io",
        Error::Serde(_) => "serde",
    };
    name.to_string()
}

/// One transmission: messages, sparse signals and the noisy observation.
pub struct TrialData {
    pub messages: Vec<Message>,
    pub signals: Vec<Vec<Complex64>>,
    pub y: Vec<Complex64>,
}

impl Experiment {
    /// Draw trial `trial` at the noise level of `set`. The RNG stream is
    /// `(experiment seed, trial)`, so any trial can be replayed alone.
    pub fn sample_trial(&self, set: &MacChannelSet, trial: u64) -> Result<TrialData> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.experiment.seed);
        rng.set_stream(trial);
        let users = self.params.len();
        let messages: Vec<Message> = self.params.iter().map(|p| sample_message_with(p, &mut rng)).collect();
        let signals = (0..users)
            .map(|u| modulate(&messages[u], &self.designs[u].pa, &self.params[u]))
            .collect::<Result<Vec<_>>>()?;
        let xs = (0..users).map(|u| encode(&signals[u], &self.dicts[u])).collect::<Result<Vec<_>>>()?;
        let mut y = set.superpose(&xs)?;
        let h = (set.sigma2() / 2.0).sqrt();
        for yi in y.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *yi += Complex64::new(h * re, h * im);
        }
        Ok(TrialData { messages, signals, y })
    }
}

fn run_trial(exp: &Experiment, set: &MacChannelSet, trial: u64) -> Result<TrialOutcome> {
    let users = exp.params.len();
    let TrialData { messages: msgs, signals: s, y } = exp.sample_trial(set, trial)?;
    let out = decode(&y, set, &exp.codes(), &exp.config.receiver.options(), Some((&s, &msgs)))?;
    let errs = out.section_errors.ok_or(Error::NonFinite("section error count"))?;
    let mut mse = vec![Vec::new(); users];
    for row in &out.trace.rows {
        if let Some(e) = row.empirical_mse {
            mse[row.user].push(e);
        }
    }
    Ok(TrialOutcome {
        section_errors: errs.iter().map(|&e| e as u64).collect(),
        bit_errors: (0..users).map(|u| bit_errors(&out.messages[u], &msgs[u])).collect(),
        iterations: out.trace.iterations as u64,
        converged: out.converged,
        mse,
    })
}

fn simulate_point(exp: &Experiment, snr_db: f64, pool: &rayon::ThreadPool) -> Result<SnrPoint> {
    let set = exp.base.with_snr_db(snr_db)?;
    let trials = exp.config.experiment.trials as u64;
    let outcomes: Vec<Result<TrialOutcome>> =
        pool.install(|| (0..trials).into_par_iter().map(|t| run_trial(exp, &set, t)).collect());

    let users = exp.params.len();
    let mut failures = BTreeMap::new();
    let mut ok = 0u64;
    let mut sec = vec![0u64; users];
    let mut bits = vec![0u64; users];
    let mut iters = 0u64;
    let mut converged = 0u64;
    let mut mse_sum = vec![Vec::<f64>::new(); users];
    let mut mse_cnt = vec![Vec::<u64>::new(); users];
    // sequential reduction in trial order keeps float sums reproducible
    for o in outcomes {
        match o {
            Ok(o) => {
                ok += 1;
                iters += o.iterations;
                converged += o.converged as u64;
                for u in 0..users {
                    sec[u] += o.section_errors[u];
                    bits[u] += o.bit_errors[u];
                    for (k, &e) in o.mse[u].iter().enumerate() {
                        if mse_sum[u].len() <= k {
                            mse_sum[u].push(0.0);
                            mse_cnt[u].push(0);
                        }
                        mse_sum[u][k] += e;
                        mse_cnt[u][k] += 1;
                    }
                }
            }
            Err(e) => *failures.entry(error_category(&e)).or_insert(0) += 1,
        }
    }

    let se = state_evolution(&set, &exp.codes(), &exp.config.receiver.options())?;
    let user_points = (0..users)
        .map(|u| {
            let p = &exp.params[u];
            let sections = ok * p.l as u64;
            let ser = if sections == 0 { 0.0 } else { sec[u] as f64 / sections as f64 };
            let pow2 = p.b.is_power_of_two();
            let nbits = sections * p.b.trailing_zeros() as u64;
            let (bit_errors, bits_total, ber) = if pow2 {
                let ber = if nbits == 0 { 0.0 } else { bits[u] as f64 / nbits as f64 };
                (Some(bits[u]), Some(nbits), ber)
            } else {
                (None, None, ser * (p.b as f64 / 2.0) / (p.b as f64 - 1.0))
            };
            UserPoint {
                snr_db,
                user: u,
                pa: exp.designs[u].scheme,
                trials: ok,
                failed_trials: trials - ok,
                sections,
                section_errors: sec[u],
                ser,
                ser_ci: clopper_pearson(sec[u], sections),
                bit_errors,
                bits: bits_total,
                ber,
                ber_converted: !pow2,
                avg_iterations: if ok == 0 { 0.0 } else { iters as f64 / ok as f64 },
                converged_trials: converged,
                se_tau: se.iter().map(|r| r.tau[u]).collect(),
                se_v: se.iter().map(|r| r.v[u]).collect(),
                empirical_mse: mse_sum[u].iter().zip(&mse_cnt[u]).map(|(s, &c)| s / c as f64).collect(),
            }
        })
        .collect();
    Ok(SnrPoint { snr_db, snr_rel_limit_db: snr_db - exp.limit_snr_db, failures, users: user_points })
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))
}

/// Monte Carlo over every configured SNR point with `workers` threads.
pub fn run_monte_carlo(config: &SimConfig, workers: usize) -> Result<Report> {
    let exp = Experiment::prepare(config)?;
    run_prepared(&exp, workers)
}

pub fn run_prepared(exp: &Experiment, workers: usize) -> Result<Report> {
    let pool = build_pool(workers)?;
    let mut points = Vec::new();
    let mut analysis = Vec::new();
    for snr_db in exp.snr_points_db() {
        points.push(simulate_point(exp, snr_db, &pool)?);
        analysis.push(analysis_block(&exp.base.with_snr_db(snr_db)?, &exp.path)?);
    }
    Ok(Report {
        config_hash: exp.hash.clone(),
        seed: exp.config.experiment.seed,
        config: exp.config.clone(),
        target_rates_nats: exp.target_rates.clone(),
        limit_snr_db: exp.limit_snr_db,
        designs: exp.designs.clone(),
        points,
        analysis,
    })
}

/// Multi-point run plus the limit-SNR marker for the configured rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub report: Report,
    pub limit_snr_db: f64,
    pub declared_limit_snr_db: Option<f64>,
    /// Computed marker matches the declared one within 0.01 dB.
    pub marker_consistent: Option<bool>,
}

pub fn sweep_snr(config: &SimConfig, workers: usize) -> Result<SweepReport> {
    let report = run_monte_carlo(config, workers)?;
    let declared = config.experiment.declared_limit_snr_db;
    Ok(SweepReport {
        limit_snr_db: report.limit_snr_db,
        declared_limit_snr_db: declared,
        marker_consistent: declared.map(|d| (d - report.limit_snr_db).abs() <= 0.01),
        report,
    })
}

impl Report {
    pub const CSV_HEADER: &'static str = "config_hash,seed,snr_db,snr_rel_limit_db,user,pa,trials,failed_trials,sections,section_errors,ser,ser_lo,ser_hi,bit_errors,bits,ber,ber_converted,avg_iterations,converged_trials,se_final_v";

    /// One row per (SNR, user).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            for u in &p.users {
                let opt = |x: Option<u64>| x.map(|v| v.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{:e},{:e},{:e},{},{},{:e},{},{},{},{:e}\n",
                    self.config_hash,
                    self.seed,
                    u.snr_db,
                    p.snr_rel_limit_db,
                    u.user,
                    u.pa.name(),
                    u.trials,
                    u.failed_trials,
                    u.sections,
                    u.section_errors,
                    u.ser,
                    u.ser_ci.0,
                    u.ser_ci.1,
                    opt(u.bit_errors),
                    opt(u.bits),
                    u.ber,
                    u.ber_converted,
                    u.avg_iterations,
                    u.converged_trials,
                    u.se_v.last().copied().unwrap_or(f64::NAN),
                ));
            }
        }
        out
    }

    /// Per-iteration state evolution against the empirical MSE.
    pub fn trajectory_csv(&self) -> String {
        let mut out = String::from("config_hash,seed,snr_db,user,iteration,se_tau,se_v,empirical_mse\n");
        for p in &self.points {
            for u in &p.users {
                let n = u.se_tau.len().max(u.empirical_mse.len());
                for k in 0..n {
                    let f = |x: Option<&f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        self.config_hash,
                        self.seed,
                        u.snr_db,
                        u.user,
                        k + 1,
                        f(u.se_tau.get(k)),
                        f(u.se_v.get(k)),
                        f(u.empirical_mse.get(k)),
                    ));
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
