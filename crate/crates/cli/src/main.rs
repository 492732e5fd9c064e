use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rmader_core::deconfliction::Variant;
use rmader_core::harness::audit::verify_trace_dir;
use rmader_core::harness::campaign::{run_campaign, summarize, write_cells_csv, write_summary_csv, CampaignSpec};
use rmader_core::harness::cases::{case_script, run_case, Expectation};
use rmader_core::harness::config::ScenarioConfig;
use rmader_core::harness::scenario::{run_scenario, write_outputs};
use std::fs::{self, File};
use std::path::{Path, PathBuf};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "RMADER_OUT_DIR";

#[derive(Parser)]
#[command(name = "rmader", version, about = "Delay-robust trajectory deconfliction simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trace, ledger and metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep seeds, base delays and variants over one scenario.
    Campaign {
        #[arg(long)]
        config: PathBuf,
        /// Inclusive range `A..B` or a single seed.
        #[arg(long, default_value = "0..19")]
        seeds: String,
        /// Comma-separated base delays in milliseconds.
        #[arg(long, value_delimiter = ',', default_value = "0,50,100,200,300")]
        delays: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "rmader,nocheck,mader")]
        variants: Vec<String>,
        /// Uniform jitter on top of each base delay (ms).
        #[arg(long, default_value_t = 25.0)]
        jitter: f64,
        /// Delay Check window minus base delay (ms).
        #[arg(long, default_value_t = 75.0)]
        dc_margin: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the twelve scripted timing cases.
    Cases {
        /// Delay Check window (ms).
        #[arg(long, default_value_t = 200.0)]
        delay_check: f64,
    },
    /// Audit a trace directory containing `trace.jsonl`.
    Audit {
        #[arg(long)]
        trace: PathBuf,
    },
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ScenarioConfig::from_toml(&text)?)
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
            if b < a {
                bail!("empty seed range {s}");
            }
            Ok((a..=b).collect())
        }
        None if s.trim().is_empty() => Ok(Vec::new()),
        None => Ok(vec![s.trim().parse()?]),
    }
}

fn cmd_run(config: &Path, seed: Option<u64>, out: PathBuf) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (metrics, result) = run_scenario(&cfg)?;
    write_outputs(&out, &metrics, &result)?;
    println!(
        "status={:?} t_final={:.3} all_done={} collision_free={} deadlock={} commits={} rejections={} dc_aborts={} out={}",
        result.status,
        result.t_final,
        metrics.all_done,
        metrics.collision_free,
        metrics.deadlock,
        metrics.totals.commits,
        metrics.totals.rejections,
        metrics.totals.dc_aborts,
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_campaign(
    config: &Path,
    seeds: &str,
    delays_ms: &[f64],
    variants: &[String],
    jitter_ms: f64,
    dc_margin_ms: f64,
    out: PathBuf,
) -> Result<()> {
    let spec = CampaignSpec {
        base: load_config(config)?,
        seeds: parse_seeds(seeds)?,
        delays: delays_ms.iter().map(|d| d * 1e-3).collect(),
        variants: variants
            .iter()
            .map(|v| Variant::parse(v).with_context(|| format!("unknown variant {v}")))
            .collect::<Result<_>>()?,
        jitter_max: jitter_ms * 1e-3,
        dc_margin: dc_margin_ms * 1e-3,
    };
    let rows = run_campaign(&spec);
    let cells = summarize(&rows);
    fs::create_dir_all(&out)?;
    write_summary_csv(File::create(out.join("summary.csv"))?, &rows)?;
    write_cells_csv(File::create(out.join("cells.csv"))?, &cells)?;
    for c in &cells {
        println!(
            "{:>8} delay={:>4.0}ms runs={} collision_free={:.2} audit={:.2} deadlock={:.2} discards/commit={}",
            c.variant.name(),
            c.delay * 1e3,
            c.runs,
            c.collision_free_rate,
            c.audit_collision_free_rate,
            c.deadlock_rate,
            c.discards_per_commit.map_or("-".into(), |x| format!("{x:.3}")),
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_cases(delay_check_ms: f64) -> Result<()> {
    if delay_check_ms.is_nan() || delay_check_ms <= 0.0 {
        bail!("--delay-check must be > 0");
    }
    let mut all_ok = true;
    for case in 1..=12u8 {
        let o = run_case(&case_script(case, delay_check_ms * 1e-3));
        let found = match (o.expected, o.detected) {
            (Expectation::Unconstructible, _) => "unconstructible".to_string(),
            (_, Some((who, phase))) => format!("{who:?} in {phase:?}"),
            (_, None) => "no detection".to_string(),
        };
        let ok = o.matches_expected();
        all_ok &= ok;
        println!(
            "case {:>2} pub={:?} recv={:?}: {found} timing_ok={} committed_conflict={} [{}]",
            o.case,
            o.row,
            o.column,
            o.timing_ok,
            o.committed_conflict,
            if ok { "ok" } else { "MISMATCH" }
        );
    }
    if !all_ok {
        bail!("some cases did not match the expected detections");
    }
    Ok(())
}

fn cmd_audit(dir: &Path) -> Result<()> {
    let report = verify_trace_dir(dir)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if !report.implication_holds() {
        bail!("clean delay monitor but conflicting commits");
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, out } => cmd_run(&config, seed, out_dir(out)),
        Command::Campaign {
            config,
            seeds,
            delays,
            variants,
            jitter,
            dc_margin,
            out,
        } => cmd_campaign(&config, &seeds, &delays, &variants, jitter, dc_margin, out_dir(out)),
        Command::Cases { delay_check } => cmd_cases(delay_check),
        Command::Audit { trace } => cmd_audit(&trace),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges_are_inclusive() {
        assert_eq!(parse_seeds("3..5").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert!(parse_seeds("").unwrap().is_empty());
        assert!(parse_seeds("5..3").is_err());
    }
}
