//! Replays the checked-in fuzz corpus through the same round trips the fuzz
//! targets assert, so seeds stay meaningful on stable toolchains.

use rmader_core::harness::config::ScenarioConfig;
use rmader_core::harness::trace::{parse_ledger_csv, parse_trace, trace_to_string, write_ledger_csv};
use rmader_core::trajectory::TrajectorySpline;
use std::path::PathBuf;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn config_seeds_round_trip() {
    let mut parsed = 0;
    for (name, data) in seeds("parse_config") {
        let Ok(cfg) = ScenarioConfig::from_toml(std::str::from_utf8(&data).unwrap()) else {
            continue;
        };
        let once = cfg.to_toml();
        let back = ScenarioConfig::from_toml(&once).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(back, cfg, "{name}");
        parsed += 1;
    }
    assert!(parsed >= 3);
    assert!(ScenarioConfig::from_toml("seed = 1\nt_end = -1\n").is_err());
}

#[test]
fn trace_seeds_round_trip() {
    let mut parsed = 0;
    for (name, data) in seeds("parse_trace") {
        let Ok(records) = parse_trace(data.as_slice()) else {
            continue;
        };
        let back = parse_trace(trace_to_string(&records).as_bytes()).unwrap();
        assert_eq!(back, records, "{name}");
        parsed += 1;
    }
    assert!(parsed >= 2);
}

#[test]
fn trajectory_seeds_round_trip() {
    let mut parsed = 0;
    for (name, data) in seeds("decode_trajectory") {
        let Ok(traj) = TrajectorySpline::from_wire_json(&data) else {
            continue;
        };
        let back = TrajectorySpline::from_wire_json(traj.to_wire_json().as_bytes()).unwrap();
        assert_eq!(back, traj, "{name}");
        parsed += 1;
    }
    assert!(parsed >= 2);
}

#[test]
fn ledger_seeds_round_trip() {
    let mut parsed = 0;
    for (name, data) in seeds("parse_ledger_csv") {
        let Ok(rows) = parse_ledger_csv(data.as_slice()) else {
            continue;
        };
        let mut buf = Vec::new();
        write_ledger_csv(&mut buf, &rows).unwrap();
        assert_eq!(parse_ledger_csv(buf.as_slice()).unwrap(), rows, "{name}");
        parsed += 1;
    }
    assert!(parsed >= 1);
}
