use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::experiment::{analysis_block, AnalysisBlock, Experiment};
use crate::analysis::{signal_mmse_asymptotic, SignalMmse, UserTransform};
use crate::error::Result;
use crate::pa_design::PaDesign;

const VTF_POINTS_PER_DECADE: usize = 20;
const MMSE_POINTS_PER_DECADE: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub snr_db: f64,
    pub user: usize,
    pub x: f64,
    pub y: f64,
    /// Secondary column: asymptotic MMSE for MMSE curves, unused for the VTF.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub config_hash: String,
    pub seed: u64,
    pub target_rates_nats: Vec<f64>,
    pub limit_snr_db: f64,
    pub designs: Vec<PaDesign>,
    pub points: Vec<AnalysisBlock>,
    /// `(xi, F(xi))` per SNR point and user.
    pub vtf: Vec<CurvePoint>,
    /// `(rho, Monte Carlo MMSE, asymptotic MMSE)` per user.
    pub mmse: Vec<CurvePoint>,
}

/// Capacity region, rate suprema, VTF and MMSE curves. No simulation.
pub fn analyze_command(config: &SimConfig) -> Result<AnalysisReport> {
    let exp = Experiment::prepare(config)?;
    let mut points = Vec::new();
    let mut vtf = Vec::new();
    for snr_db in exp.snr_points_db() {
        let set = exp.base.with_snr_db(snr_db)?;
        points.push(analysis_block(&set, &exp.path)?);
        for (u, p) in exp.params.iter().enumerate() {
            let curve = UserTransform::new(&set, u, &exp.path, p.n_len)?.tabulate(VTF_POINTS_PER_DECADE)?;
            let (xi, f) = curve.samples();
            vtf.extend(xi.iter().zip(f).map(|(&x, &y)| CurvePoint { snr_db, user: u, x, y, y2: None }));
        }
    }
    let mut mmse = Vec::new();
    let n_rho = 6 * MMSE_POINTS_PER_DECADE;
    for (u, p) in exp.params.iter().enumerate() {
        let pa = &exp.designs[u].pa;
        let phi = SignalMmse::with_default_table(pa, p)?;
        for k in 0..=n_rho {
            let rho = 10f64.powf(-3.0 + k as f64 / MMSE_POINTS_PER_DECADE as f64);
            mmse.push(CurvePoint {
                // MMSE curves do not depend on the operating SNR
                snr_db: exp.limit_snr_db,
                user: u,
                x: rho,
                y: phi.eval(rho),
                y2: Some(signal_mmse_asymptotic(pa, p, rho)),
            });
        }
    }
    Ok(AnalysisReport {
        config_hash: exp.hash.clone(),
        seed: config.experiment.seed,
        target_rates_nats: exp.target_rates.clone(),
        limit_snr_db: exp.limit_snr_db,
        designs: exp.designs.clone(),
        points,
        vtf,
        mmse,
    })
}

impl AnalysisReport {
    /// Scalar summary rows: one quantity per line.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("config_hash,seed,snr_db,quantity,index,nats,bits\n");
        let mut row = |snr: f64, q: &str, idx: String, v: f64| {
            out.push_str(&format!(
                "{},{},{},{},{},{:e},{:e}\n",
                self.config_hash,
                self.seed,
                snr,
                q,
                idx,
                v,
                v * std::f64::consts::LOG2_E
            ));
        };
        for (u, r) in self.target_rates_nats.iter().enumerate() {
            row(self.limit_snr_db, "target_rate", u.to_string(), *r);
        }
        for p in &self.points {
            row(p.snr_db, "sum_capacity", String::new(), p.sum_capacity_nats);
            for (i, b) in p.subset_bounds_nats.iter().enumerate() {
                row(p.snr_db, "subset_bound", format!("mask{}", i + 1), *b);
            }
            for v in &p.vertices {
                let order: Vec<String> = v.order.iter().map(|k| k.to_string()).collect();
                for (u, r) in v.rates_nats.iter().enumerate() {
                    row(p.snr_db, "vertex_rate", format!("order{}-user{u}", order.join("-")), *r);
                }
            }
            for (u, r) in p.rate_supremum_nats.iter().enumerate() {
                row(p.snr_db, "rate_supremum", u.to_string(), *r);
            }
            row(p.snr_db, "identity_rel_err", String::new(), p.identity_rel_err);
        }
        out
    }

    pub fn vtf_csv(&self) -> String {
        curve_csv(&self.config_hash, self.seed, "xi,vtf", &self.vtf)
    }

    pub fn mmse_csv(&self) -> String {
        curve_csv(&self.config_hash, self.seed, "rho,mmse_mc,mmse_asymptotic", &self.mmse)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn curve_csv(hash: &str, seed: u64, cols: &str, pts: &[CurvePoint]) -> String {
    let mut out = format!("config_hash,seed,snr_db,user,{cols}\n");
    for c in pts {
        out.push_str(&format!("{hash},{seed},{},{},{:e},{:e}", c.snr_db, c.user, c.x, c.y));
        if let Some(y2) = c.y2 {
            out.push_str(&format!(",{y2:e}"));
        }
        out.push('\n');
    }
    out
}
