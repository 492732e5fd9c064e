use crate::deconfliction::Variant;
use crate::planner::PlannerConfig;
use crate::simnet::{DelayModel, LatencyModel};
use crate::trajectory::DynamicLimits;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {msg}")]
    Invalid { field: &'static str, msg: String },
}

fn invalid(field: &'static str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, msg: msg.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitAgent {
    pub start: [f64; 3],
    pub goal: [f64; 3],
    #[serde(default)]
    pub variant: Option<Variant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Layout {
    /// Evenly spaced on a horizontal circle, each goal diametrically opposite.
    CircleExchange {
        count: usize,
        radius: f64,
        #[serde(default = "default_altitude")]
        z: f64,
    },
    Explicit {
        agents: Vec<ExplicitAgent>,
    },
}

fn default_altitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxesConfig {
    /// Agent box half-extents (m).
    pub agent: [f64; 3],
    /// Obstacle box half-extents (m).
    pub obstacle: [f64; 3],
    /// Added to an agent's own box in its checks, so audits with exact boxes
    /// resolve committed pairs cleanly.
    #[serde(default = "default_inflation")]
    pub inflation: f64,
}

fn default_inflation() -> f64 {
    1e-3
}

impl Default for BoxesConfig {
    fn default() -> Self {
        Self {
            agent: [0.2, 0.2, 0.2],
            obstacle: [0.2, 0.2, 0.2],
            inflation: default_inflation(),
        }
    }
}

/// Ranges for randomized trefoil obstacles; each parameter is drawn
/// uniformly between its `_lo` and `_hi` bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstaclesConfig {
    pub count: usize,
    pub center_lo: [f64; 3],
    pub center_hi: [f64; 3],
    pub scale_lo: [f64; 3],
    pub scale_hi: [f64; 3],
    /// Angular rate magnitude range (rad/s); the sign is random.
    pub rate_lo: f64,
    pub rate_hi: f64,
    /// Spline segments per trefoil period.
    #[serde(default = "default_segments_per_period")]
    pub segments_per_period: usize,
    /// Minimum box-metric clearance between an obstacle's path and any agent
    /// start or goal (m).
    #[serde(default = "default_clearance")]
    pub clearance: f64,
}

fn default_segments_per_period() -> usize {
    32
}

fn default_clearance() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub t_end: f64,
    #[serde(default = "default_tick")]
    pub tick: f64,
    /// Default protocol variant; explicit agents may override it.
    #[serde(default = "default_variant")]
    pub variant: Variant,
    pub delta_dc: f64,
    #[serde(default = "default_delta_c")]
    pub delta_c: f64,
    #[serde(default = "default_goal_tol")]
    pub goal_tol: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_failure_budget")]
    pub failure_budget: u32,
    /// First planning iterations are spread uniformly over `[0, start_spread]`.
    #[serde(default = "default_start_spread")]
    pub start_spread: f64,
    pub layout: Layout,
    #[serde(default)]
    pub obstacles: Option<ObstaclesConfig>,
    #[serde(default)]
    pub boxes: BoxesConfig,
    pub delay: DelayModel,
    #[serde(default = "default_latency")]
    pub latency: LatencyModel,
    #[serde(default)]
    pub limits: DynamicLimits,
    #[serde(default)]
    pub planner: PlannerConfig,
}

fn default_tick() -> f64 {
    0.005
}
fn default_variant() -> Variant {
    Variant::Rmader
}
fn default_delta_c() -> f64 {
    0.01
}
fn default_goal_tol() -> f64 {
    0.1
}
fn default_horizon() -> f64 {
    4.0
}
fn default_failure_budget() -> u32 {
    200
}
fn default_start_spread() -> f64 {
    0.1
}
fn default_latency() -> LatencyModel {
    LatencyModel::Uniform { lo: 0.02, hi: 0.06 }
}

fn positive3(field: &'static str, v: &[f64; 3]) -> Result<(), ConfigError> {
    if v.iter().all(|x| x.is_finite() && *x > 0.0) {
        Ok(())
    } else {
        Err(invalid(field, "all components must be > 0"))
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.t_end) {
            return Err(invalid("t_end", "must be > 0"));
        }
        if !pos(self.tick) {
            return Err(invalid("tick", "must be > 0"));
        }
        if !pos(self.delta_dc) {
            return Err(invalid("delta_dc", "must be > 0"));
        }
        if !(self.delta_c.is_finite() && self.delta_c >= 0.0) {
            return Err(invalid("delta_c", "must be >= 0"));
        }
        if !pos(self.goal_tol) {
            return Err(invalid("goal_tol", "must be > 0"));
        }
        if !pos(self.horizon) {
            return Err(invalid("horizon", "must be > 0"));
        }
        if !(self.start_spread.is_finite() && self.start_spread >= 0.0) {
            return Err(invalid("start_spread", "must be >= 0"));
        }
        match &self.layout {
            Layout::CircleExchange { radius, z, .. } => {
                if !pos(*radius) {
                    return Err(invalid("layout.radius", "must be > 0"));
                }
                if !z.is_finite() {
                    return Err(invalid("layout.z", "must be finite"));
                }
            }
            Layout::Explicit { agents } => {
                if agents
                    .iter()
                    .any(|a| !a.start.iter().chain(&a.goal).all(|x| x.is_finite()))
                {
                    return Err(invalid("layout.agents", "start and goal must be finite"));
                }
            }
        }
        positive3("boxes.agent", &self.boxes.agent)?;
        positive3("boxes.obstacle", &self.boxes.obstacle)?;
        if !(self.boxes.inflation.is_finite() && self.boxes.inflation >= 0.0) {
            return Err(invalid("boxes.inflation", "must be >= 0"));
        }
        if let Some(o) = &self.obstacles {
            positive3("obstacles.scale_lo", &o.scale_lo)?;
            positive3("obstacles.scale_hi", &o.scale_hi)?;
            let ordered = |lo: &[f64; 3], hi: &[f64; 3]| lo.iter().zip(hi).all(|(l, h)| l.is_finite() && l <= h);
            if !ordered(&o.center_lo, &o.center_hi) {
                return Err(invalid("obstacles.center_lo", "must be <= center_hi"));
            }
            if !ordered(&o.scale_lo, &o.scale_hi) {
                return Err(invalid("obstacles.scale_lo", "must be <= scale_hi"));
            }
            if !(pos(o.rate_lo) && o.rate_lo <= o.rate_hi && o.rate_hi.is_finite()) {
                return Err(invalid("obstacles.rate_lo", "need 0 < rate_lo <= rate_hi"));
            }
            if o.segments_per_period < 1 {
                return Err(invalid("obstacles.segments_per_period", "must be >= 1"));
            }
        }
        self.delay.validate().map_err(|m| invalid("delay", m))?;
        self.latency.validate().map_err(|m| invalid("latency", m))?;
        self.limits.validate().map_err(|e| invalid("limits", e.to_string()))?;
        self.planner.validate().map_err(|m| invalid("planner", m))?;
        Ok(())
    }

    /// A circle-exchange preset at the given delay model.
    pub fn circle(count: usize, radius: f64, delay: DelayModel, delta_dc: f64, seed: u64) -> Self {
        Self {
            seed,
            t_end: 40.0,
            tick: default_tick(),
            variant: Variant::Rmader,
            delta_dc,
            delta_c: default_delta_c(),
            goal_tol: default_goal_tol(),
            horizon: default_horizon(),
            failure_budget: default_failure_budget(),
            start_spread: default_start_spread(),
            layout: Layout::CircleExchange {
                count,
                radius,
                z: default_altitude(),
            },
            obstacles: None,
            boxes: BoxesConfig::default(),
            delay,
            latency: default_latency(),
            limits: DynamicLimits::default(),
            planner: PlannerConfig::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
t_end = 30.0
delta_dc = 0.125

[layout]
kind = "circle_exchange"
count = 4
radius = 5.0

[delay]
mode = "fixed"
delay = 0.05
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.tick, 0.005);
        assert_eq!(cfg.variant, Variant::Rmader);
        assert_eq!(cfg.limits, DynamicLimits::default());
        assert_eq!(cfg.planner.candidates, 32);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = MINIMAL.replace("delta_dc = 0.125", "delta_dc = 0.0");
        match ScenarioConfig::from_toml(&bad) {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "delta_dc"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("radius = 5.0", "radius = -1.0");
        assert!(matches!(
            ScenarioConfig::from_toml(&bad),
            Err(ConfigError::Invalid {
                field: "layout.radius",
                ..
            })
        ));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = format!("{MINIMAL}\nbogus = 1\n");
        assert!(matches!(ScenarioConfig::from_toml(&bad), Err(ConfigError::Parse(_))));
    }
}
