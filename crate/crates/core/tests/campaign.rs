use rmader_core::deconfliction::Variant;
use rmader_core::harness::campaign::{run_campaign, summarize, CampaignSpec, RunStatus};
use rmader_core::harness::config::ScenarioConfig;
use rmader_core::simnet::DelayModel;

fn spec(seeds: std::ops::Range<u64>, delays: Vec<f64>, variants: Vec<Variant>) -> CampaignSpec {
    CampaignSpec {
        base: ScenarioConfig::circle(6, 5.0, DelayModel::Fixed { delay: 0.0 }, 0.075, 0),
        seeds: seeds.collect(),
        delays,
        variants,
        jitter_max: 0.025,
        dc_margin: 0.075,
    }
}

#[test]
fn nocheck_discards_at_least_as_many_candidates_per_commit() {
    let rows = run_campaign(&spec(0..20, vec![0.05], vec![Variant::Rmader, Variant::RmaderNoCheck]));
    assert!(rows.iter().all(|r| r.status == RunStatus::Ok && r.audit_collision_free));
    // Without the Check every discard happens in the Delay Check.
    assert!(rows
        .iter()
        .filter(|r| r.variant == Variant::RmaderNoCheck)
        .all(|r| r.rejections == 0));
    let cells = summarize(&rows);
    let ratio = |v| {
        cells
            .iter()
            .find(|c| c.variant == v)
            .unwrap()
            .discards_per_commit
            .unwrap()
    };
    let (r, n) = (ratio(Variant::Rmader), ratio(Variant::RmaderNoCheck));
    assert!(n >= r, "no-Check {n} < RMADER {r}");
    // Frozen from the reference run of this exact campaign.
    assert!((r - 0.978).abs() < 5e-4 && (n - 1.012).abs() < 5e-4, "{r} {n}");
}

#[test]
fn parallel_campaign_matches_serial_runs() {
    let s = spec(0..4, vec![0.0, 0.1], vec![Variant::Rmader, Variant::MaderBaseline]);
    let rows = run_campaign(&s);
    let serial: Vec<_> = rows
        .iter()
        .map(|r| rmader_core::harness::campaign::run_one(&s.cell(r.seed, r.delay, r.variant)))
        .collect();
    assert_eq!(rows, serial);
}
