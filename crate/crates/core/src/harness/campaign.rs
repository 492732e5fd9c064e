use super::audit::verify_trace;
use super::config::ScenarioConfig;
use super::scenario::run_scenario;
use crate::deconfliction::Variant;
use crate::simnet::{DelayModel, Jitter};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};

/// Cross product of seeds, base delays and variants over one base scenario.
#[derive(Debug, Clone)]
pub struct CampaignSpec {
    pub base: ScenarioConfig,
    pub seeds: Vec<u64>,
    /// Base one-way delays (s).
    pub delays: Vec<f64>,
    pub variants: Vec<Variant>,
    /// Uniform jitter added on top of each base delay (s).
    pub jitter_max: f64,
    /// `δ_DC` is the base delay plus this margin (s); keep it above
    /// `jitter_max` for the guarantee to apply.
    pub dc_margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    ConfigError,
    Panicked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRow {
    pub seed: u64,
    pub delay: f64,
    pub variant: Variant,
    pub delta_dc: f64,
    pub status: RunStatus,
    pub all_done: bool,
    /// Sampled physical overlap check with exact boxes.
    pub collision_free: bool,
    /// Certified check over the committed trajectories in the trace.
    pub audit_collision_free: bool,
    pub deadlock: bool,
    pub commits: u64,
    pub rejections: u64,
    pub dc_aborts: u64,
    pub mean_travel_time: Option<f64>,
    pub max_delay: Option<f64>,
    pub monitor_violations: usize,
}

impl CampaignSpec {
    /// `cfg` for one cell of the product.
    pub fn cell(&self, seed: u64, delay: f64, variant: Variant) -> ScenarioConfig {
        let mut cfg = self.base.clone();
        cfg.seed = seed;
        cfg.variant = variant;
        cfg.delay = if self.jitter_max > 0.0 {
            DelayModel::FixedPlusJitter {
                delay,
                jitter: Jitter::Uniform { max: self.jitter_max },
            }
        } else {
            DelayModel::Fixed { delay }
        };
        cfg.delta_dc = delay + self.dc_margin;
        cfg
    }

    fn cells(&self) -> Vec<(u64, f64, Variant)> {
        let mut out = Vec::new();
        for &variant in &self.variants {
            for &delay in &self.delays {
                for &seed in &self.seeds {
                    out.push((seed, delay, variant));
                }
            }
        }
        out
    }
}

fn failed_row(seed: u64, delay: f64, variant: Variant, delta_dc: f64, status: RunStatus) -> CampaignRow {
    CampaignRow {
        seed,
        delay,
        variant,
        delta_dc,
        status,
        all_done: false,
        collision_free: false,
        audit_collision_free: false,
        deadlock: false,
        commits: 0,
        rejections: 0,
        dc_aborts: 0,
        mean_travel_time: None,
        max_delay: None,
        monitor_violations: 0,
    }
}

pub fn run_one(cfg: &ScenarioConfig) -> CampaignRow {
    let (seed, variant, delta_dc) = (cfg.seed, cfg.variant, cfg.delta_dc);
    let delay = cfg.delay.delta_introd();
    match catch_unwind(AssertUnwindSafe(|| run_scenario(cfg))) {
        Ok(Ok((m, result))) => {
            let audit_ok = verify_trace(&result.trace).map(|a| a.collision_free()).unwrap_or(false);
            CampaignRow {
                seed,
                delay,
                variant,
                delta_dc,
                status: RunStatus::Ok,
                all_done: m.all_done,
                collision_free: m.collision_free,
                audit_collision_free: audit_ok,
                deadlock: m.deadlock,
                commits: m.totals.commits,
                rejections: m.totals.rejections,
                dc_aborts: m.totals.dc_aborts,
                mean_travel_time: m.mean_travel_time(),
                max_delay: m.max_delay,
                monitor_violations: m.monitor_violations,
            }
        }
        Ok(Err(_)) => failed_row(seed, delay, variant, delta_dc, RunStatus::ConfigError),
        Err(_) => failed_row(seed, delay, variant, delta_dc, RunStatus::Panicked),
    }
}

/// Runs every cell in parallel; rows come back in `(variant, delay, seed)`
/// order regardless of scheduling.
pub fn run_campaign(spec: &CampaignSpec) -> Vec<CampaignRow> {
    spec.cells()
        .into_par_iter()
        .map(|(seed, delay, variant)| run_one(&spec.cell(seed, delay, variant)))
        .collect()
}

const HEADER: [&str; 15] = [
    "seed",
    "delay",
    "variant",
    "delta_dc",
    "status",
    "all_done",
    "collision_free",
    "audit_collision_free",
    "deadlock",
    "commits",
    "rejections",
    "dc_aborts",
    "mean_travel_time",
    "max_delay",
    "monitor_violations",
];

/// Writes one CSV line per run; the header is written even with no runs.
pub fn write_summary_csv<W: Write>(w: W, rows: &[CampaignRow]) -> csv::Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(HEADER)?;
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Aggregates over all seeds of one `(variant, delay)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub variant: Variant,
    pub delay: f64,
    pub runs: usize,
    pub failed_runs: usize,
    pub collision_free_rate: f64,
    pub audit_collision_free_rate: f64,
    pub deadlock_rate: f64,
    pub all_done_rate: f64,
    /// Mean over runs that produced one.
    pub mean_travel_time: Option<f64>,
    /// Total rejections plus Delay Check aborts over total commits.
    pub discards_per_commit: Option<f64>,
}

pub fn summarize(rows: &[CampaignRow]) -> Vec<CellSummary> {
    let mut cells: Vec<(Variant, f64)> = Vec::new();
    for r in rows {
        if !cells.iter().any(|c| c.0 == r.variant && c.1 == r.delay) {
            cells.push((r.variant, r.delay));
        }
    }
    cells
        .into_iter()
        .map(|(variant, delay)| {
            let group: Vec<&CampaignRow> = rows
                .iter()
                .filter(|r| r.variant == variant && r.delay == delay)
                .collect();
            let n = group.len() as f64;
            let rate = |f: &dyn Fn(&CampaignRow) -> bool| group.iter().filter(|r| f(r)).count() as f64 / n;
            let times: Vec<f64> = group.iter().filter_map(|r| r.mean_travel_time).collect();
            let commits: u64 = group.iter().map(|r| r.commits).sum();
            let discards: u64 = group.iter().map(|r| r.rejections + r.dc_aborts).sum();
            CellSummary {
                variant,
                delay,
                runs: group.len(),
                failed_runs: group.iter().filter(|r| r.status != RunStatus::Ok).count(),
                collision_free_rate: rate(&|r| r.collision_free),
                audit_collision_free_rate: rate(&|r| r.audit_collision_free),
                deadlock_rate: rate(&|r| r.deadlock),
                all_done_rate: rate(&|r| r.all_done),
                mean_travel_time: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
                discards_per_commit: (commits > 0).then(|| discards as f64 / commits as f64),
            }
        })
        .collect()
}

const CELL_HEADER: [&str; 10] = [
    "variant",
    "delay",
    "runs",
    "failed_runs",
    "collision_free_rate",
    "audit_collision_free_rate",
    "deadlock_rate",
    "all_done_rate",
    "mean_travel_time",
    "discards_per_commit",
];

pub fn write_cells_csv<W: Write>(w: W, cells: &[CellSummary]) -> csv::Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wtr.write_record(CELL_HEADER)?;
    for c in cells {
        wtr.serialize(c)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_campaign_writes_only_the_header() {
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), HEADER.join(","));
        let mut buf = Vec::new();
        write_cells_csv(&mut buf, &summarize(&[])).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), CELL_HEADER.join(","));
    }

    #[test]
    fn summary_rows_parse_back() {
        let spec = CampaignSpec {
            base: ScenarioConfig::circle(2, 3.0, DelayModel::Fixed { delay: 0.0 }, 0.1, 0),
            seeds: vec![1, 2],
            delays: vec![0.05],
            variants: vec![Variant::Rmader],
            jitter_max: 0.025,
            dc_margin: 0.075,
        };
        let rows = run_campaign(&spec);
        assert!(rows.iter().all(|r| r.status == RunStatus::Ok && r.audit_collision_free));
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &rows).unwrap();
        let back: Vec<CampaignRow> = csv::Reader::from_reader(buf.as_slice())
            .deserialize()
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(back, rows);
        let cells = summarize(&rows);
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].runs, 2);
        assert_eq!(cells[0].collision_free_rate, 1.0);
    }

    #[test]
    fn cells_follow_variant_delay_seed_order() {
        let spec = CampaignSpec {
            base: ScenarioConfig::circle(2, 3.0, DelayModel::Fixed { delay: 0.0 }, 0.1, 0),
            seeds: vec![1, 2],
            delays: vec![0.0, 0.05],
            variants: vec![Variant::Rmader, Variant::MaderBaseline],
            jitter_max: 0.025,
            dc_margin: 0.075,
        };
        let cells = spec.cells();
        assert_eq!(cells.len(), 8);
        assert_eq!(cells[0], (1, 0.0, Variant::Rmader));
        assert_eq!(cells[3], (2, 0.05, Variant::Rmader));
        assert_eq!(cells[4].2, Variant::MaderBaseline);
        let cfg = spec.cell(7, 0.05, Variant::Rmader);
        assert!((cfg.delta_dc - 0.125).abs() < 1e-12);
        assert!((cfg.delay.delta_max().unwrap() - 0.075).abs() < 1e-12);
    }
}
