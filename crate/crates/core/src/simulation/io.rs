//! CSV and JSON outputs of a run.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{estimate_avg_price, estimate_welfare, CfmmwdConfig, Heatmap, Trajectory};
use crate::stats::Estimate;

/// 17 significant digits, enough to round-trip any `f64`.
fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// `step,R_1..R_l,p_1..p_l,utility,traded`; undefined prices are `NaN`.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let l = traj.final_reserves.len();
    let mut header = vec!["step".to_string()];
    header.extend((1..=l).map(|i| format!("R_{i}")));
    header.extend((1..=l).map(|i| format!("p_{i}")));
    header.push("utility".into());
    header.push("traded".into());
    w.write_record(&header)?;
    for p in &traj.points {
        let mut row = vec![p.step.to_string()];
        row.extend(p.reserves.iter().map(|v| float(*v)));
        match &p.price {
            Some(price) => row.extend(price.iter().map(|v| float(*v))),
            None => row.extend((0..l).map(|_| "NaN".to_string())),
        }
        row.push(float(p.utility));
        row.push(u8::from(p.traded).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `x_bin_lo,x_bin_hi,y_bin_lo,y_bin_hi,count`, one row per bin.
pub fn write_heatmap_csv<W: Write>(h: &Heatmap, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x_bin_lo", "x_bin_hi", "y_bin_lo", "y_bin_hi", "count"])?;
    for (i, row) in h.counts.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            w.write_record([
                float(h.x_edges[i]),
                float(h.x_edges[i + 1]),
                float(h.y_edges[j]),
                float(h.y_edges[j + 1]),
                c.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Metadata sidecar of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: CfmmwdConfig,
    pub config_hash: String,
    pub seed: u64,
    pub steps: u64,
    pub recorded: usize,
    pub traded_steps: u64,
    pub welfare: Estimate,
    pub neg_inf_steps: u64,
    pub avg_price: Option<Vec<f64>>,
    pub avg_price_std_err: Option<Vec<f64>>,
    pub final_reserves: Vec<f64>,
    pub max_invariant_drift: f64,
}

impl RunSummary {
    pub fn new(config: &CfmmwdConfig, traj: &Trajectory) -> Self {
        let price = estimate_avg_price(traj).ok();
        Self {
            config: config.clone(),
            config_hash: traj.config_hash.clone(),
            seed: traj.seed,
            steps: traj.steps(),
            recorded: traj.points.len(),
            traded_steps: traj.traded_steps,
            welfare: estimate_welfare(traj),
            neg_inf_steps: traj.neg_inf_steps(),
            avg_price: price.as_ref().map(|(p, _)| p.as_slice().to_vec()),
            avg_price_std_err: price.map(|(_, se)| se),
            final_reserves: traj.final_reserves.clone(),
            max_invariant_drift: traj.max_invariant_drift,
        }
    }
}

pub fn write_run_json<W: Write>(summary: &RunSummary, out: W) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(out, summary)
}
