//! Single runs, parameter sweeps over seeds, and their CSV / plot-data output.

use std::fmt::{self, Write as _};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::metrics::MetricsReport;
use crate::network::{run_scenario, SimError};
use crate::scenario::ScenarioConfig;

pub const CSV_HEADER: &str = "n_intermediate,short_retry,long_retry,cw_min,cw_max,seed,\
sent,delivered,avg_delay_s,total_dropped,mac_dropped,collision_dropped,retry_dropped,queue_dropped,in_flight_at_end";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepKind {
    Retry,
    CwMin,
    CwMax,
    CwPairs,
    None,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Retry => "retry",
            SweepKind::CwMin => "cwmin",
            SweepKind::CwMax => "cwmax",
            SweepKind::CwPairs => "cwpairs",
            SweepKind::None => "none",
        }
    }

    pub fn default_points(self) -> Vec<SweepPoint> {
        match self {
            SweepKind::Retry => [2, 4, 7, 10, 14, 20, 28].map(SweepPoint::Retry).to_vec(),
            SweepKind::CwMin => [15, 31, 63, 127, 255, 511, 1023].map(SweepPoint::CwMin).to_vec(),
            SweepKind::CwMax => [63, 127, 255, 511, 1023, 2047].map(SweepPoint::CwMax).to_vec(),
            SweepKind::CwPairs => CW_PAIRS.iter().map(|&(a, b)| SweepPoint::CwPair(a, b)).collect(),
            SweepKind::None => vec![SweepPoint::Base],
        }
    }
}

impl std::str::FromStr for SweepKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "retry" => Ok(SweepKind::Retry),
            "cwmin" => Ok(SweepKind::CwMin),
            "cwmax" => Ok(SweepKind::CwMax),
            "cwpairs" => Ok(SweepKind::CwPairs),
            "none" => Ok(SweepKind::None),
            other => Err(format!("unknown sweep kind '{other}' (expected retry, cwmin, cwmax, cwpairs or none)")),
        }
    }
}

/// The seven (cw_min, cw_max) pairs of the pair study.
pub const CW_PAIRS: [(u32, u32); 7] =
    [(15, 1023), (31, 1023), (31, 511), (127, 255), (127, 511), (127, 1023), (255, 511)];

/// Base cw_max used by the cw_min sweep, and base cw_min used by the cw_max sweep.
pub const CWMIN_SWEEP_CWMAX: u32 = 1023;
pub const CWMAX_SWEEP_CWMIN: u32 = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SweepPoint {
    Base,
    Retry(u32),
    CwMin(u32),
    CwMax(u32),
    CwPair(u32, u32),
}

impl SweepPoint {
    pub fn apply(self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut cfg = base.clone();
        match self {
            SweepPoint::Base => {}
            SweepPoint::Retry(r) => cfg.mac.short_retry_limit = r,
            SweepPoint::CwMin(c) => {
                cfg.mac.cw_min = c;
                cfg.mac.cw_max = CWMIN_SWEEP_CWMAX.max(c);
            }
            SweepPoint::CwMax(c) => {
                cfg.mac.cw_min = CWMAX_SWEEP_CWMIN.min(c);
                cfg.mac.cw_max = c;
            }
            SweepPoint::CwPair(a, b) => {
                cfg.mac.cw_min = a;
                cfg.mac.cw_max = b;
            }
        }
        cfg
    }

    /// The x value used in plot files.
    pub fn label(self) -> String {
        match self {
            SweepPoint::Base => "base".into(),
            SweepPoint::Retry(v) | SweepPoint::CwMin(v) | SweepPoint::CwMax(v) => v.to_string(),
            SweepPoint::CwPair(a, b) => format!("{a}/{b}"),
        }
    }
}

impl fmt::Display for SweepPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Parses a `--values` list for the given sweep kind: `2,7,20` or `255:511,15:1023`.
pub fn parse_points(kind: SweepKind, text: &str) -> Result<Vec<SweepPoint>, String> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let num = |s: &str| s.trim().parse::<u32>().map_err(|e| format!("bad value '{s}': {e}"));
        let p = match kind {
            SweepKind::Retry => SweepPoint::Retry(num(item)?),
            SweepKind::CwMin => SweepPoint::CwMin(num(item)?),
            SweepKind::CwMax => SweepPoint::CwMax(num(item)?),
            SweepKind::CwPairs => {
                let (a, b) = item
                    .split_once([':', '/'])
                    .ok_or_else(|| format!("cw pair '{item}' must look like MIN:MAX"))?;
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("cw pair {a}:{b} has cw_min > cw_max"));
                }
                SweepPoint::CwPair(a, b)
            }
            SweepKind::None => return Err("the 'none' sweep takes no values".into()),
        };
        out.push(p);
    }
    if out.is_empty() {
        return Err("value list is empty".into());
    }
    Ok(out)
}

/// Parses `--seeds`: a range `1..5` (inclusive) or a comma list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, String> {
    let text = text.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|e| format!("bad seed range start: {e}"))?;
        let b: u64 = b.trim().trim_start_matches('=').parse().map_err(|e| format!("bad seed range end: {e}"))?;
        if a > b {
            return Err(format!("empty seed range {a}..{b}"));
        }
        (a..=b).collect()
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<u64>().map_err(|e| format!("bad seed '{s}': {e}")))
            .collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(seeds)
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub points: Vec<SweepPoint>,
    pub seeds: Vec<u64>,
    pub base: ScenarioConfig,
    pub allow_any_n: bool,
}

impl SweepSpec {
    pub fn new(kind: SweepKind, seeds: Vec<u64>, base: ScenarioConfig) -> Self {
        SweepSpec { kind, points: kind.default_points(), seeds, base, allow_any_n: false }
    }
}

#[derive(Debug, Error)]
#[error("run at {point} with seed {seed} failed: {source}")]
pub struct SweepError {
    pub point: SweepPoint,
    pub seed: u64,
    #[source]
    pub source: SimError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub point: SweepPoint,
    pub config: ScenarioConfig,
    pub report: MetricsReport,
}

/// Means over seeds for one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanMetrics {
    pub sent: f64,
    pub delivered: f64,
    pub avg_delay_s: f64,
    pub total_dropped: f64,
    pub mac_dropped: f64,
    pub collision_dropped: f64,
    pub retry_dropped: f64,
    pub queue_dropped: f64,
    pub in_flight_at_end: f64,
}

impl MeanMetrics {
    pub fn of(reports: &[MetricsReport]) -> Self {
        let n = reports.len().max(1) as f64;
        let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        MeanMetrics {
            sent: mean(|r| r.sent as f64),
            delivered: mean(|r| r.delivered as f64),
            avg_delay_s: mean(|r| r.avg_delay_s),
            total_dropped: mean(|r| r.total_dropped as f64),
            mac_dropped: mean(|r| r.mac_dropped as f64),
            collision_dropped: mean(|r| r.collision_dropped as f64),
            retry_dropped: mean(|r| r.retry_dropped as f64),
            queue_dropped: mean(|r| r.queue_dropped as f64),
            in_flight_at_end: mean(|r| r.in_flight_at_end as f64),
        }
    }

    /// Named columns, in CSV order, for plot-file emission.
    pub fn columns(&self) -> [(&'static str, f64); 9] {
        [
            ("sent", self.sent),
            ("delivered", self.delivered),
            ("avg_delay_s", self.avg_delay_s),
            ("total_dropped", self.total_dropped),
            ("mac_dropped", self.mac_dropped),
            ("collision_dropped", self.collision_dropped),
            ("retry_dropped", self.retry_dropped),
            ("queue_dropped", self.queue_dropped),
            ("in_flight_at_end", self.in_flight_at_end),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub kind: SweepKind,
    /// Ordered by (position in the sweep's point list, seed).
    pub rows: Vec<RunRow>,
    pub means: Vec<(SweepPoint, ScenarioConfig, MeanMetrics)>,
}

impl SweepResult {
    pub fn mean(&self, point: SweepPoint) -> Option<&MeanMetrics> {
        self.means.iter().find(|(p, _, _)| *p == point).map(|(_, _, m)| m)
    }

    pub fn reports(&self, point: SweepPoint) -> Vec<MetricsReport> {
        self.rows.iter().filter(|r| r.point == point).map(|r| r.report).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(CSV_HEADER);
        out.push('\n');
        for (point, cfg, mean) in &self.means {
            for row in self.rows.iter().filter(|r| r.point == *point) {
                out.push_str(&csv_row(&row.config, &row.report));
                out.push('\n');
            }
            out.push_str(&csv_mean_row(cfg, mean));
            out.push('\n');
        }
        out
    }

    /// Writes one two-column `(x, mean)` file per metric into `dir`.
    pub fn write_plot_files(&self, dir: &Path) -> std::io::Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let names = MeanMetrics::default().columns().map(|(n, _)| n);
        for (i, name) in names.iter().enumerate() {
            let mut body = format!("# {} {}\n", self.kind.name(), name);
            for (point, _, mean) in &self.means {
                let _ = writeln!(body, "{} {}", point.label(), fmt_f64(mean.columns()[i].1));
            }
            let path = dir.join(format!("{}_{}.dat", self.kind.name(), name));
            std::fs::write(&path, body)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.6}")
}

fn csv_params(cfg: &ScenarioConfig, seed: &str) -> String {
    format!(
        "{},{},{},{},{},{}",
        cfg.n_intermediate, cfg.mac.short_retry_limit, cfg.mac.long_retry_limit, cfg.mac.cw_min, cfg.mac.cw_max, seed
    )
}

pub fn csv_row(cfg: &ScenarioConfig, r: &MetricsReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{}",
        csv_params(cfg, &cfg.seed.to_string()),
        r.sent,
        r.delivered,
        fmt_f64(r.avg_delay_s),
        r.total_dropped,
        r.mac_dropped,
        r.collision_dropped,
        r.retry_dropped,
        r.queue_dropped,
        r.in_flight_at_end
    )
}

fn csv_mean_row(cfg: &ScenarioConfig, m: &MeanMetrics) -> String {
    let cols: Vec<String> = m.columns().iter().map(|(_, v)| fmt_f64(*v)).collect();
    format!("{},{}", csv_params(cfg, "mean"), cols.join(","))
}

pub fn run_single(cfg: &ScenarioConfig, allow_any_n: bool) -> Result<MetricsReport, SimError> {
    Ok(run_scenario(cfg, allow_any_n)?.report)
}

/// Runs independent configurations in parallel; results keep input order.
pub fn run_many(configs: &[ScenarioConfig], allow_any_n: bool) -> Result<Vec<MetricsReport>, SimError> {
    configs.par_iter().map(|c| run_single(c, allow_any_n)).collect()
}

/// Runs every (point, seed) pair in parallel and merges deterministically.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, SweepError> {
    let jobs: Vec<(usize, SweepPoint, u64)> = spec
        .points
        .iter()
        .enumerate()
        .flat_map(|(i, &p)| spec.seeds.iter().map(move |&s| (i, p, s)))
        .collect();
    let mut results: Vec<(usize, u64, RunRow)> = jobs
        .par_iter()
        .map(|&(i, point, seed)| {
            let mut config = point.apply(&spec.base);
            config.seed = seed;
            run_single(&config, spec.allow_any_n)
                .map(|report| (i, seed, RunRow { point, config, report }))
                .map_err(|source| SweepError { point, seed, source })
        })
        .collect::<Result<_, _>>()?;
    results.sort_by_key(|(i, seed, _)| (*i, *seed));
    let rows: Vec<RunRow> = results.into_iter().map(|(_, _, r)| r).collect();
    let means = spec
        .points
        .iter()
        .map(|&p| {
            let reports: Vec<MetricsReport> = rows.iter().filter(|r| r.point == p).map(|r| r.report).collect();
            (p, p.apply(&spec.base), MeanMetrics::of(&reports))
        })
        .collect();
    Ok(SweepResult { kind: spec.kind, rows, means })
}
