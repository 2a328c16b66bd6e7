use serde::{Deserialize, Serialize};

use crate::simnet::engine::Schedule;

pub const TPM_WINDOW_MS: u64 = 60_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub n_txs: usize,
    pub per_tx_latency_s: Vec<f64>,
    pub mean_latency_s: f64,
    pub p95_latency_s: f64,
    /// First submission to last confirmation.
    pub makespan_s: f64,
    /// n_txs per minute of makespan.
    pub tpm_avg: f64,
    /// Most confirmations in any half-open 60 s window.
    pub tpm_peak: f64,
    pub seed: u64,
}

impl SimMetrics {
    pub fn from_schedule(schedule: &Schedule, seed: u64) -> Self {
        let n = schedule.txs.len();
        if n == 0 {
            return SimMetrics {
                n_txs: 0,
                per_tx_latency_s: Vec::new(),
                mean_latency_s: 0.0,
                p95_latency_s: 0.0,
                makespan_s: 0.0,
                tpm_avg: 0.0,
                tpm_peak: 0.0,
                seed,
            };
        }
        let latencies_ms: Vec<u64> = schedule
            .txs
            .iter()
            .map(|t| t.confirmed_ms - t.submitted_ms)
            .collect();
        let per_tx_latency_s: Vec<f64> = latencies_ms.iter().map(|&ms| ms as f64 / 1000.0).collect();
        let mean_latency_s = latencies_ms.iter().sum::<u64>() as f64 / n as f64 / 1000.0;

        let mut sorted = latencies_ms.clone();
        sorted.sort_unstable();
        // nearest-rank percentile
        let rank = (0.95 * n as f64).ceil() as usize;
        let p95_latency_s = sorted[rank.clamp(1, n) - 1] as f64 / 1000.0;

        let first_submission = schedule.txs.iter().map(|t| t.submitted_ms).min().unwrap_or(0);
        let mut confirmations: Vec<u64> = schedule.txs.iter().map(|t| t.confirmed_ms).collect();
        confirmations.sort_unstable();
        let last_confirmation = *confirmations.last().expect("n > 0");
        let makespan_ms = last_confirmation - first_submission;
        let makespan_s = makespan_ms as f64 / 1000.0;
        let tpm_avg = if makespan_ms == 0 {
            0.0
        } else {
            n as f64 / (makespan_s / 60.0)
        };

        SimMetrics {
            n_txs: n,
            per_tx_latency_s,
            mean_latency_s,
            p95_latency_s,
            makespan_s,
            tpm_avg,
            tpm_peak: peak_window_count(&confirmations, TPM_WINDOW_MS) as f64,
            seed,
        }
    }
}

/// Largest number of `sorted` times inside any window `[t, t + width)`.
/// An optimal window always starts at one of the points.
pub fn peak_window_count(sorted: &[u64], width: u64) -> usize {
    let mut best = 0;
    let mut end = 0;
    for (start, &t) in sorted.iter().enumerate() {
        while end < sorted.len() && sorted[end] < t + width {
            end += 1;
        }
        best = best.max(end - start);
    }
    best
}

pub const CSV_HEADER: &str = "n_txs,mean_latency_s,p95_latency_s,makespan_s,tpm_avg,tpm_peak,seed";

pub fn to_csv(rows: &[SimMetrics]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for m in rows {
        out.push_str(&format!(
            "{},{:.3},{:.3},{:.3},{:.3},{:.3},{}\n",
            m.n_txs, m.mean_latency_s, m.p95_latency_s, m.makespan_s, m.tpm_avg, m.tpm_peak, m.seed
        ));
    }
    out
}
