//! Grid-search fit of the approval and block timing parameters.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::simnet::{engine, SimConfig, SimError, SimMetrics};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MeanLatencyS,
    P95LatencyS,
    MakespanS,
    TpmAvg,
    TpmPeak,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::MeanLatencyS => "mean_latency_s",
            Metric::P95LatencyS => "p95_latency_s",
            Metric::MakespanS => "makespan_s",
            Metric::TpmAvg => "tpm_avg",
            Metric::TpmPeak => "tpm_peak",
        }
    }

    pub fn read(self, m: &SimMetrics) -> f64 {
        match self {
            Metric::MeanLatencyS => m.mean_latency_s,
            Metric::P95LatencyS => m.p95_latency_s,
            Metric::MakespanS => m.makespan_s,
            Metric::TpmAvg => m.tpm_avg,
            Metric::TpmPeak => m.tpm_peak,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "mean_latency_s" => Metric::MeanLatencyS,
            "p95_latency_s" => Metric::P95LatencyS,
            "makespan_s" => Metric::MakespanS,
            "tpm_avg" => Metric::TpmAvg,
            // "tpm" on its own means the peak-window figure
            "tpm" | "tpm_peak" => Metric::TpmPeak,
            other => {
                return Err(SimError::InvalidConfig(format!("unknown metric {other:?}")));
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Target {
    pub n_txs: usize,
    pub metric: Metric,
    pub value: f64,
}

impl Target {
    pub fn new(n_txs: usize, metric: Metric, value: f64) -> Self {
        Target { n_txs, metric, value }
    }

    /// Parses `N:METRIC=VALUE`.
    pub fn parse(s: &str) -> Result<Self, SimError> {
        let bad = || SimError::InvalidConfig(format!("target {s:?} is not N:METRIC=VALUE"));
        let (n, rest) = s.split_once(':').ok_or_else(bad)?;
        let (metric, value) = rest.split_once('=').ok_or_else(bad)?;
        let value: f64 = value.trim().parse().map_err(|_| bad())?;
        if !value.is_finite() || value <= 0.0 {
            return Err(bad());
        }
        Ok(Target {
            n_txs: n.trim().parse().map_err(|_| bad())?,
            metric: metric.trim().parse()?,
            value,
        })
    }

    /// The four endpoint figures the default calibration fits.
    pub fn defaults() -> Vec<Target> {
        vec![
            Target::new(5, Metric::MeanLatencyS, 88.0),
            Target::new(50, Metric::MeanLatencyS, 180.0),
            Target::new(5, Metric::TpmPeak, 6.0),
            Target::new(50, Metric::TpmPeak, 40.0),
        ]
    }
}

/// Candidate values, in milliseconds, for each searched parameter.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchSpace {
    pub base_approval_delay_ms: Vec<u64>,
    pub per_pending_tx_delay_ms: Vec<u64>,
    pub block_interval_ms: Vec<u64>,
    pub submission_interarrival_ms: Vec<u64>,
}

fn steps(from: u64, to: u64, step: u64) -> Vec<u64> {
    (from..=to).step_by(step as usize).collect()
}

impl SearchSpace {
    pub fn default_grid() -> Self {
        SearchSpace {
            base_approval_delay_ms: steps(10_000, 120_000, 5_000),
            per_pending_tx_delay_ms: steps(0, 5_000, 250),
            block_interval_ms: steps(5_000, 60_000, 5_000),
            submission_interarrival_ms: steps(0, 10_000, 1_000),
        }
    }

    pub fn len(&self) -> usize {
        self.base_approval_delay_ms.len()
            * self.per_pending_tx_delay_ms.len()
            * self.block_interval_ms.len()
            * self.submission_interarrival_ms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid point `index` in row-major order (interarrival varies fastest).
    fn point(&self, base: &SimConfig, mut index: usize) -> SimConfig {
        let mut pick = |grid: &[u64]| {
            let v = grid[index % grid.len()];
            index /= grid.len();
            v
        };
        let submission_interarrival_ms = pick(&self.submission_interarrival_ms);
        let block_interval_ms = pick(&self.block_interval_ms);
        let per_pending_tx_delay_ms = pick(&self.per_pending_tx_delay_ms);
        let base_approval_delay_ms = pick(&self.base_approval_delay_ms);
        SimConfig {
            base_approval_delay_ms,
            per_pending_tx_delay_ms,
            block_interval_ms,
            submission_interarrival_ms,
            jitter_ms: 0,
            ..base.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Residual {
    pub target: Target,
    pub measured: f64,
    /// (measured − target) / target
    pub relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Calibration {
    #[serde(skip)]
    pub config: SimConfig,
    pub residuals: Vec<Residual>,
    pub objective: f64,
    pub points_searched: usize,
}

impl Calibration {
    pub fn report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "grid points searched: {}", self.points_searched);
        let _ = writeln!(out, "objective (sum of squared relative residuals): {:.6}", self.objective);
        let _ = writeln!(out);
        let _ = writeln!(out, "{:>6}  {:<16} {:>10} {:>10} {:>9}", "n", "metric", "target", "measured", "relative");
        for r in &self.residuals {
            let _ = writeln!(
                out,
                "{:>6}  {:<16} {:>10.3} {:>10.3} {:>+8.2}%",
                r.target.n_txs,
                r.target.metric.as_str(),
                r.target.value,
                r.measured,
                r.relative * 100.0
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "selected config:");
        out.push_str(&self.config.to_cfg_string());
        out
    }
}

/// Measure every target under `config` with jitter disabled.
pub fn evaluate(config: &SimConfig, targets: &[Target]) -> Result<(Vec<Residual>, f64), SimError> {
    let config = SimConfig {
        jitter_ms: 0,
        ..config.clone()
    };
    let mut sizes: Vec<usize> = targets.iter().map(|t| t.n_txs).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut measured = Vec::with_capacity(sizes.len());
    for &n in &sizes {
        let schedule = engine::schedule(&config, n, false)?;
        measured.push(SimMetrics::from_schedule(&schedule, config.seed));
    }
    let residuals: Vec<Residual> = targets
        .iter()
        .map(|t| {
            let m = &measured[sizes.binary_search(&t.n_txs).expect("measured")];
            let value = t.metric.read(m);
            Residual {
                target: *t,
                measured: value,
                relative: (value - t.value) / t.value,
            }
        })
        .collect();
    let objective = residuals.iter().map(|r| r.relative * r.relative).sum();
    Ok((residuals, objective))
}

/// Exhaustive search for the grid point minimizing Σ relative residual².
/// Ties go to the earliest grid point.
pub fn calibrate(
    base: &SimConfig,
    targets: &[Target],
    space: &SearchSpace,
) -> Result<Calibration, SimError> {
    if targets.is_empty() {
        return Err(SimError::EmptyTargets);
    }
    if space.is_empty() {
        return Err(SimError::EmptySearchSpace);
    }
    if let Some(t) = targets.iter().find(|t| !(t.value.is_finite() && t.value > 0.0)) {
        return Err(SimError::InvalidConfig(format!(
            "target value must be positive, got {}",
            t.value
        )));
    }
    space.point(base, 0).validate()?;

    let (index, objective) = (0..space.len())
        .into_par_iter()
        .map(|i| -> Result<(usize, f64), SimError> {
            let (_, objective) = evaluate(&space.point(base, i), targets)?;
            Ok((i, objective))
        })
        .try_reduce(
            || (usize::MAX, f64::INFINITY),
            |a, b| {
                if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) {
                    Ok(b)
                } else {
                    Ok(a)
                }
            },
        )?;

    let config = space.point(base, index);
    let (residuals, _) = evaluate(&config, targets)?;
    Ok(Calibration {
        config,
        residuals,
        objective,
        points_searched: space.len(),
    })
}
