use proptest::prelude::*;
use rmader_core::harness::config::ScenarioConfig;
use rmader_core::harness::metrics::STOP_MIN_DURATION;
use rmader_core::harness::scenario::{agent_endpoints, run_scenario};
use rmader_core::simnet::{DelayModel, Jitter};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metrics_respect_path_geometry(
        count in 2usize..7,
        radius in 2.0f64..8.0,
        delay in 0.0f64..0.2,
        seed in 0u64..1000,
    ) {
        let model = DelayModel::FixedPlusJitter { delay, jitter: Jitter::Uniform { max: 0.025 } };
        let cfg = ScenarioConfig::circle(count, radius, model, delay + 0.075, seed);
        let (m, _) = run_scenario(&cfg).unwrap();
        for (a, (start, goal, _)) in m.agents.iter().zip(agent_endpoints(&cfg)) {
            prop_assert!(a.jerk_integral >= 0.0);
            prop_assert!(a.stop_time >= a.stops as f64 * STOP_MIN_DURATION - 1e-9);
            if a.done {
                prop_assert!(a.travel_distance >= (goal - start).norm() - cfg.goal_tol - 1e-9);
                let tt = a.travel_time.expect("done agents have a travel time");
                prop_assert!(tt >= 0.0);
                prop_assert!(a.stop_time <= tt + 1e-9);
            }
            prop_assert_eq!(a.collision_free, a.min_margin.is_none_or(|x| x >= 0.0));
        }
        prop_assert_eq!(m.all_done, m.agents.iter().all(|a| a.done));
    }
}
