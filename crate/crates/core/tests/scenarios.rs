use rmader_core::deconfliction::Variant;
use rmader_core::harness::audit::{verify_trace, verify_trace_dir};
use rmader_core::harness::config::{ExplicitAgent, Layout, ScenarioConfig};
use rmader_core::harness::metrics::MetricsReport;
use rmader_core::harness::scenario::{run_scenario, write_outputs};
use rmader_core::harness::trace::{parse_ledger_csv, parse_trace, trace_to_string, EndStatus};
use rmader_core::simnet::{DelayModel, Jitter};
use rmader_core::AgentId;
use std::fs;

fn jittered(delay: f64) -> DelayModel {
    DelayModel::FixedPlusJitter {
        delay,
        jitter: Jitter::Uniform { max: 0.025 },
    }
}

fn head_on(seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::circle(2, 1.0, DelayModel::Fixed { delay: 0.0 }, 0.075, seed);
    cfg.t_end = 20.0;
    cfg.layout = Layout::Explicit {
        agents: vec![
            ExplicitAgent {
                start: [-4.0, 0.0, 1.0],
                goal: [4.0, 0.0, 1.0],
                variant: None,
            },
            ExplicitAgent {
                start: [4.0, 0.0, 1.0],
                goal: [-4.0, 0.0, 1.0],
                variant: None,
            },
        ],
    };
    cfg
}

#[test]
fn head_on_pair_swaps_without_collision() {
    let (m, result) = run_scenario(&head_on(1)).unwrap();
    assert_eq!(result.status, EndStatus::AllDone);
    assert!(m.all_done && m.collision_free && !m.deadlock);
    let audit = verify_trace(&result.trace).unwrap();
    assert!(audit.is_clean(), "{audit:?}");
    assert_eq!(audit.agents, 2);
    for a in &m.agents {
        assert!(a.travel_distance >= 8.0 - 0.2);
    }
}

#[test]
fn identical_seeds_give_identical_bytes() {
    let cfg = ScenarioConfig::circle(6, 5.0, jittered(0.1), 0.175, 42);
    let (m1, r1) = run_scenario(&cfg).unwrap();
    let (m2, r2) = run_scenario(&cfg).unwrap();
    assert_eq!(trace_to_string(&r1.trace), trace_to_string(&r2.trace));
    assert_eq!(m1.to_json(), m2.to_json());
    let (_, r3) = run_scenario(&ScenarioConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(trace_to_string(&r1.trace), trace_to_string(&r3.trace));
}

#[test]
fn outputs_round_trip_through_files() {
    let cfg = ScenarioConfig::circle(4, 4.0, jittered(0.05), 0.125, 5);
    let (m, result) = run_scenario(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &m, &result).unwrap();
    let trace = parse_trace(fs::read(dir.path().join("trace.jsonl")).unwrap().as_slice()).unwrap();
    assert_eq!(trace, result.trace);
    let ledger = parse_ledger_csv(fs::File::open(dir.path().join("ledger.csv")).unwrap()).unwrap();
    assert_eq!(ledger, result.ledger);
    let back = MetricsReport::from_json(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(back, m);
    let hist = fs::read_to_string(dir.path().join("delay_histogram.dat")).unwrap();
    let total: u64 = hist
        .lines()
        .map(|l| l.split_whitespace().nth(1).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total as usize, result.ledger.len());
    assert_eq!(
        verify_trace_dir(dir.path()).unwrap(),
        verify_trace(&result.trace).unwrap()
    );
}

#[test]
fn short_delay_check_trips_the_monitor() {
    let cfg = ScenarioConfig::circle(6, 5.0, jittered(0.2), 0.02, 0);
    let (m, result) = run_scenario(&cfg).unwrap();
    let audit = verify_trace(&result.trace).unwrap();
    assert!(m.monitor_violations > 0);
    assert_eq!(audit.monitor_violations.len(), m.monitor_violations);
    assert!(audit.monitor_violations.iter().all(|v| v.record.delta > v.delta_dc));
    // The guarantee is void here, so the implication holds vacuously.
    assert!(audit.implication_holds());
}

#[test]
fn baseline_collision_is_reported_with_pair_and_time() {
    let mut cfg = ScenarioConfig::circle(6, 5.0, jittered(0.2), 0.275, 3);
    cfg.variant = Variant::MaderBaseline;
    let (m, result) = run_scenario(&cfg).unwrap();
    assert!(!m.collision_free);
    let audit = verify_trace(&result.trace).unwrap();
    assert!(audit.monitor_violations.is_empty());
    assert_eq!(audit.baseline_agents, 6);
    let c = audit
        .conflicts
        .iter()
        .find(|c| c.pair == (AgentId(2), AgentId(3)))
        .expect("pair 2-3 conflicts");
    let t = c.first_overlap_time.unwrap();
    assert!((t - 1.569).abs() < 1e-3, "first overlap at {t}");
    assert!(c.min_margin < 0.0);
    assert!(audit.implication_holds());
}
