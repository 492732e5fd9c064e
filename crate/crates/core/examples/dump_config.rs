//! Prints the circle-exchange preset as TOML: `dump_config [count] [radius]`.
use rmader_core::harness::config::ScenarioConfig;
use rmader_core::simnet::{DelayModel, Jitter};

fn main() {
    let mut args = std::env::args().skip(1);
    let count = args.next().map_or(6, |s| s.parse().expect("count"));
    let radius = args.next().map_or(5.0, |s| s.parse().expect("radius"));
    let delay = DelayModel::FixedPlusJitter {
        delay: 0.05,
        jitter: Jitter::Uniform { max: 0.025 },
    };
    print!("{}", ScenarioConfig::circle(count, radius, delay, 0.125, 0).to_toml());
}
