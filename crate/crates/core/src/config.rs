//! TOML run configuration shared by the command-line subcommands.
//!
//! Every table rejects unknown keys. Keys with a documented default may be
//! omitted; all others are required when their table is present. Relative
//! paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::dynamics::RobotState;
use crate::error::{invalid, Result};
use crate::functionals::{ArcNorm, CostWeights};
use crate::interface::{ActionSpace, LinearInterfaceMap};
use crate::obschannel::{BudgetStep, ChannelBudget, TransformSpec};
use crate::optimizer::{ProblemConfig, SearchMethod, REFERENCE_DT, REFERENCE_HORIZON};
use crate::props::{Grid, Reflection};
use crate::simulator::{SessionOptions, SmootherConfig};

/// Value the `schema` key must carry.
pub const SCHEMA: &str = "hri-interface/1";

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    #[serde(default)]
    pub rng_seed: u64,
    pub problem: Option<ProblemSection>,
    #[serde(default)]
    pub bounds: BoundsSection,
    pub interface: Option<InterfaceSection>,
    pub simulate: Option<SimulateSection>,
    pub channel: Option<ChannelSection>,
    pub props: Option<PropsSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    /// `[x, y, theta]` in m, m, rad.
    pub x_initial: [f64; 3],
    pub x_final: [f64; 3],
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_knots")]
    pub knots: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_max_evals")]
    pub max_evals: usize,
    #[serde(default)]
    pub method: SearchMethod,
    #[serde(default)]
    pub arc_norm: ArcNorm,
    #[serde(default = "yes")]
    pub canonical_signs: bool,
    pub weights: WeightsSection,
}

fn default_horizon() -> f64 {
    REFERENCE_HORIZON
}
fn default_knots() -> usize {
    25
}
fn default_dt() -> f64 {
    REFERENCE_DT
}
fn default_seeds() -> usize {
    16
}
fn default_max_evals() -> usize {
    20_000
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub effort_metric: [[f64; 2]; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorBounds {
    /// rad/s
    pub head: (f64, f64),
    /// m/s
    pub body: (f64, f64),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotBounds {
    /// m/s
    pub v: (f64, f64),
    /// rad/s
    pub w: (f64, f64),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSection {
    pub operator: OperatorBounds,
    pub robot: RobotBounds,
}

impl Default for BoundsSection {
    fn default() -> Self {
        Self {
            operator: OperatorBounds {
                head: (-1.0, 1.0),
                body: (-1.5, 1.5),
            },
            robot: RobotBounds {
                v: (-3.0, 3.0),
                w: (-2.0, 2.0),
            },
        }
    }
}

impl BoundsSection {
    pub fn operator(&self) -> Result<ActionSpace> {
        ActionSpace::operator(self.operator.head, self.operator.body).map_err(|e| invalid(format!("[bounds.operator] {e}")))
    }

    pub fn robot(&self) -> Result<ActionSpace> {
        ActionSpace::robot(self.robot.v, self.robot.w).map_err(|e| invalid(format!("[bounds.robot] {e}")))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterfaceSection {
    /// Rows of `G`, mapping `[a_head, a_body]` to `[v, w]`.
    pub g: [[f64; 2]; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySection {
    /// `G` as written by `optimize` (`g.txt`).
    pub g: PathBuf,
    /// Action knots as written by `optimize` (`actions.csv`).
    pub actions: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedSection {
    pub candidates: Vec<String>,
    pub budget: Vec<BudgetStep>,
    pub frames: Vec<PathBuf>,
    /// Ticks between frames.
    pub every: usize,
    #[serde(default)]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// CSV script with columns `t,head,body[,depth]`.
    #[serde(default)]
    pub script: Option<PathBuf>,
    /// Replays optimizer output instead of a script; needs `[problem]`.
    #[serde(default)]
    pub replay: Option<ReplaySection>,
    #[serde(default)]
    pub smoother: SmootherConfig,
    #[serde(default = "default_head_rate")]
    pub head_rate: f64,
    #[serde(default)]
    pub x_initial: [f64; 3],
    #[serde(default)]
    pub channel: Option<FeedSection>,
}

fn default_head_rate() -> f64 {
    SessionOptions::default().head_rate
}

impl SimulateSection {
    pub fn options(&self) -> SessionOptions {
        SessionOptions {
            x_initial: state(self.x_initial),
            head_rate: self.head_rate,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    /// PBM, PGM or PPM images.
    pub corpus: Vec<PathBuf>,
    pub candidates: Vec<String>,
    pub budget: Vec<BudgetStep>,
    /// Times at which a corpus frame (cycled) is offered to the selector.
    #[serde(default)]
    pub frame_times: Vec<f64>,
    #[serde(default)]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompletenessSection {
    pub pairs: usize,
    /// Seconds.
    pub horizon: f64,
    pub grid: Grid,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropsSection {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Any of `head` and `body`.
    #[serde(default = "default_axes")]
    pub symmetry_axes: Vec<String>,
    #[serde(default)]
    pub completeness: Option<CompletenessSection>,
}

fn default_samples() -> usize {
    10_000
}
fn default_tolerance() -> f64 {
    1e-9
}
fn default_axes() -> Vec<String> {
    vec!["head".into(), "body".into()]
}

impl PropsSection {
    pub fn axes(&self) -> Result<Vec<Reflection>> {
        self.symmetry_axes
            .iter()
            .map(|a| match a.as_str() {
                "head" => Ok(Reflection::Head),
                "body" => Ok(Reflection::Body),
                other => Err(invalid(format!(
                    "[props] symmetry_axes: unknown axis '{other}' (expected 'head' or 'body')"
                ))),
            })
            .collect()
    }
}

fn state(s: [f64; 3]) -> RobotState {
    RobotState::new(s[0], s[1], s[2])
}

/// Parses and checks the schema string. TOML errors carry line and key.
pub fn parse(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
    if cfg.schema != SCHEMA {
        return Err(invalid(format!("schema '{}' is not supported (expected '{SCHEMA}')", cfg.schema)));
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn problem_config(&self) -> Result<ProblemConfig> {
        let p = self.problem.as_ref().ok_or_else(|| invalid("missing [problem] table"))?;
        let w = &p.weights;
        let weights = CostWeights::new(w.alpha, w.beta, w.gamma, w.delta, w.effort_metric)
            .map_err(|e| invalid(format!("[problem.weights] {e}")))?;
        let cfg = ProblemConfig {
            x_initial: state(p.x_initial),
            x_final: state(p.x_final),
            horizon: p.horizon,
            knots: p.knots,
            dt: p.dt,
            weights,
            operator_bounds: self.bounds.operator()?,
            robot_bounds: self.bounds.robot()?,
            seeds: p.seeds,
            rng_seed: self.rng_seed,
            max_evals: p.max_evals,
            arc_norm: p.arc_norm,
            method: p.method,
            canonical_signs: p.canonical_signs,
        };
        cfg.validate().map_err(|e| invalid(format!("[problem] {e}")))?;
        Ok(cfg)
    }

    pub fn interface_map(&self) -> Result<LinearInterfaceMap> {
        let i = self.interface.as_ref().ok_or_else(|| invalid("missing [interface] table"))?;
        LinearInterfaceMap::from_rows(i.g, self.bounds.robot()?).map_err(|e| invalid(format!("[interface] {e}")))
    }
}

pub fn candidates(list: &[String], table: &str) -> Result<Vec<TransformSpec>> {
    if list.is_empty() {
        return Err(invalid(format!("[{table}] candidates must not be empty")));
    }
    list.iter()
        .map(|s| s.parse().map_err(|e| invalid(format!("[{table}] candidates: {e}"))))
        .collect()
}

pub fn budget(steps: &[BudgetStep], table: &str) -> Result<ChannelBudget> {
    ChannelBudget::new(steps.to_vec()).map_err(|e| invalid(format!("[{table}] budget: {e}")))
}

/// `path` relative to the directory of the config file.
pub fn resolve(config_path: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema = "hri-interface/1"

[problem]
x_initial = [0.0, 0.0, 1.5707963267948966]
x_final = [15.0, 15.0, -1.5707963267948966]

[problem.weights]
alpha = 250.0
beta = 10.0
gamma = 5.0
delta = 10.0
effort_metric = [[10.0, 0.0], [0.0, 0.5]]
"#;

    #[test]
    fn defaults_match_reference() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.problem_config().unwrap(), ProblemConfig::reference());
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = MINIMAL.replace("delta = 10.0", "delta = 10.0\nepsilon = 1.0");
        let e = parse(&text).unwrap_err().to_string();
        assert!(e.contains("epsilon"), "{e}");
    }

    #[test]
    fn names_bad_weight() {
        let text = MINIMAL.replace("alpha = 250.0", "alpha = -1.0");
        let e = parse(&text).unwrap().problem_config().unwrap_err().to_string();
        assert!(e.contains("alpha"), "{e}");
    }

    #[test]
    fn schema_is_checked() {
        assert!(parse(&MINIMAL.replace("hri-interface/1", "hri-interface/0")).is_err());
    }

    #[test]
    fn bad_axis_name() {
        let text = format!("{MINIMAL}\n[props]\nsymmetry_axes = [\"tail\"]\n");
        assert!(parse(&text).unwrap().props.unwrap().axes().is_err());
    }
}
