//! Scripted teleoperation sessions.
//!
//! Head orientation passes through a moving-average turn detector, the
//! resulting ternary decision becomes a fixed head rate, and the action goes
//! through the interface map into the unicycle, one RK4 step per tick.

use std::io::Read;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::dynamics::{rk4_step, RobotControl, RobotState};
use crate::error::{invalid, Result};
use crate::interface::{apply_interface, LinearInterfaceMap, OperatorAction};
use crate::obschannel::{select_transform, ChannelBudget, ImageFrame, TransformSpec};
use crate::optimizer::{rollout, ProblemConfig};

pub const DEFAULT_TICK_HZ: f64 = 20.0;

/// Operator streams sampled on a uniform tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorScript {
    pub tick_hz: f64,
    /// Head yaw orientation in radians; increasing means turning left.
    pub head: Vec<f64>,
    /// Body forward-speed command in m/s.
    pub body: Vec<f64>,
    /// Depth command, passed through to the log.
    #[serde(default)]
    pub depth: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptRow {
    t: f64,
    head: f64,
    body: f64,
    #[serde(default)]
    depth: Option<f64>,
}

impl OperatorScript {
    pub fn new(tick_hz: f64, head: Vec<f64>, body: Vec<f64>) -> Result<Self> {
        let s = Self {
            tick_hz,
            head,
            body,
            depth: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_depth(mut self, depth: Vec<f64>) -> Result<Self> {
        self.depth = Some(depth);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tick_hz.is_finite() && self.tick_hz > 0.0) {
            return Err(invalid("tick rate must be positive"));
        }
        if self.head.is_empty() {
            return Err(invalid("script is empty"));
        }
        if self.body.len() != self.head.len() {
            return Err(invalid(format!(
                "script has {} head samples but {} body samples",
                self.head.len(),
                self.body.len()
            )));
        }
        if let Some(d) = &self.depth {
            if d.len() != self.head.len() {
                return Err(invalid("depth stream length differs from head stream"));
            }
        }
        let all = self.head.iter().chain(&self.body).chain(self.depth.iter().flatten());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(invalid("script samples must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.head.len()
    }

    pub fn is_empty(&self) -> bool {
        self.head.is_empty()
    }

    pub fn tick(&self) -> f64 {
        1.0 / self.tick_hz
    }

    /// Reads CSV with header `t,head,body` and an optional `depth` column.
    /// Timestamps must start at 0 and be uniform.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for (i, r) in rdr.deserialize::<ScriptRow>().enumerate() {
            rows.push(r.map_err(|e| invalid(format!("script row {}: {e}", i + 1)))?);
        }
        if rows.len() < 2 {
            return Err(invalid("script needs at least two rows"));
        }
        let dt = rows[1].t - rows[0].t;
        if rows[0].t.abs() > 1e-9 || dt.is_nan() || dt <= 0.0 {
            return Err(invalid("script timestamps must start at 0 and increase"));
        }
        for (k, r) in rows.iter().enumerate() {
            if (r.t - k as f64 * dt).abs() > 1e-6 * dt.max(1.0) {
                return Err(invalid(format!("script timestamp at row {} breaks the uniform tick", k + 1)));
            }
        }
        let has_depth = rows.iter().any(|r| r.depth.is_some());
        if has_depth && rows.iter().any(|r| r.depth.is_none()) {
            return Err(invalid("depth column must be filled on every row or none"));
        }
        let s = Self {
            tick_hz: 1.0 / dt,
            head: rows.iter().map(|r| r.head).collect(),
            body: rows.iter().map(|r| r.body).collect(),
            depth: has_depth.then(|| rows.iter().map(|r| r.depth.unwrap_or(0.0)).collect()),
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmootherConfig {
    /// Number of orientation differences averaged.
    pub buffer_size: usize,
    /// Radians per tick the average must exceed to count as a turn.
    pub turn_threshold: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            buffer_size: 10,
            turn_threshold: 0.02,
        }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.buffer_size < 1 {
            return Err(invalid("buffer_size must be at least 1"));
        }
        if self.turn_threshold.is_nan() || self.turn_threshold <= 0.0 {
            return Err(invalid("turn_threshold must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Turn {
    Left,
    Right,
    None,
}

/// Per-tick moving average of consecutive orientation differences, `None`
/// until the buffer has filled.
pub fn moving_average(samples: &[f64], cfg: &SmootherConfig) -> Result<Vec<Option<f64>>> {
    cfg.validate()?;
    if samples.len() < 2 {
        return Err(invalid("smoothing needs at least two samples"));
    }
    let n = cfg.buffer_size;
    let mut out = Vec::with_capacity(samples.len());
    out.push(None);
    for k in 1..samples.len() {
        if k < n {
            out.push(None);
            continue;
        }
        let sum: f64 = (k + 1 - n..=k).map(|j| samples[j] - samples[j - 1]).sum();
        out.push(Some(sum / n as f64));
    }
    Ok(out)
}

/// Turn decision per tick. Ticks before the buffer fills decide `None`.
pub fn smooth_commands(samples: &[f64], cfg: &SmootherConfig) -> Result<Vec<Turn>> {
    Ok(moving_average(samples, cfg)?
        .into_iter()
        .map(|m| decide(m, cfg.turn_threshold))
        .collect())
}

fn decide(m: Option<f64>, thr: f64) -> Turn {
    match m {
        Some(m) if m > thr => Turn::Left,
        Some(m) if m < -thr => Turn::Right,
        _ => Turn::None,
    }
}

/// Bandwidth-limited camera feed attached to a session.
#[derive(Debug, Clone)]
pub struct ChannelFeed {
    pub candidates: Vec<TransformSpec>,
    pub budget: ChannelBudget,
    /// Frames are used in order and cycled.
    pub frames: Vec<ImageFrame>,
    /// A frame is sent every this many ticks.
    pub every: usize,
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionOptions {
    pub x_initial: RobotState,
    /// Head rate commanded by a turn decision, rad/s.
    pub head_rate: f64,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            x_initial: RobotState::origin(),
            head_rate: 0.5,
        }
    }
}

/// One tick of a session. The action and control are held over
/// `[t, t + dt)` and `x`, `y`, `theta` are the state reached at `t + dt`.
///
/// Field order is the column order of both log formats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub tick: usize,
    pub t: f64,
    pub head: Option<f64>,
    pub body: Option<f64>,
    pub mean: Option<f64>,
    pub turn: Option<Turn>,
    pub a_head: f64,
    pub a_body: f64,
    pub v: f64,
    pub w: f64,
    pub clamped: bool,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub depth: Option<f64>,
    pub transform: Option<String>,
    pub frame_bits: Option<u64>,
    pub frame_mi: Option<f64>,
    pub over_budget: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionLog {
    pub x_initial: RobotState,
    pub records: Vec<SessionRecord>,
}

impl SessionLog {
    pub fn final_state(&self) -> RobotState {
        self.records
            .last()
            .map(|r| RobotState::new(r.x, r.y, r.theta))
            .unwrap_or(self.x_initial)
    }

    /// One JSON object per record and line.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_json_lines(x_initial: RobotState, text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| serde_json::from_str(l).map_err(|e| invalid(format!("log line {}: {e}", i + 1))))
            .collect::<Result<Vec<SessionRecord>>>()?;
        Ok(Self { x_initial, records })
    }

    /// CSV with a header row; missing values are empty cells.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.records.is_empty() {
            w.write_record(CSV_HEADER).expect("in-memory write");
        }
        for r in &self.records {
            w.serialize(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
    }
}

const CSV_HEADER: [&str; 19] = [
    "tick",
    "t",
    "head",
    "body",
    "mean",
    "turn",
    "a_head",
    "a_body",
    "v",
    "w",
    "clamped",
    "x",
    "y",
    "theta",
    "depth",
    "transform",
    "frame_bits",
    "frame_mi",
    "over_budget",
];

/// Runs a scripted session through the smoother, the interface and the
/// dynamics, optionally selecting a camera transform per frame.
pub fn run_session(
    script: &OperatorScript,
    map: &LinearInterfaceMap,
    smoother: &SmootherConfig,
    options: &SessionOptions,
    channel: Option<&ChannelFeed>,
) -> Result<SessionLog> {
    script.validate()?;
    if !(options.head_rate.is_finite() && options.head_rate >= 0.0) {
        return Err(invalid("head_rate must be finite and non-negative"));
    }
    if let Some(c) = channel {
        if c.frames.is_empty() || c.candidates.is_empty() || c.every == 0 {
            return Err(invalid("channel needs frames, candidates and a positive frame interval"));
        }
    }
    let means = if script.len() >= 2 {
        moving_average(&script.head, smoother)?
    } else {
        smoother.validate()?;
        vec![None]
    };
    let dt = script.tick();
    let mut state = options.x_initial;
    let mut records = Vec::with_capacity(script.len());
    for (k, &mean) in means.iter().enumerate() {
        let t = k as f64 * dt;
        let turn = decide(mean, smoother.turn_threshold);
        let a_head = match turn {
            Turn::Left => options.head_rate,
            Turn::Right => -options.head_rate,
            Turn::None => 0.0,
        };
        let a = OperatorAction::new(a_head, script.body[k]);
        let out = apply_interface(map, a);
        state = rk4_step(state, out.control, dt);

        let mut rec = SessionRecord {
            tick: k,
            t,
            head: Some(script.head[k]),
            body: Some(script.body[k]),
            mean,
            turn: Some(turn),
            a_head: a.a_head,
            a_body: a.a_body,
            v: out.control.v,
            w: out.control.w,
            clamped: out.clamped,
            x: state.x_pos,
            y: state.y_pos,
            theta: state.theta,
            depth: script.depth.as_ref().map(|d| d[k]),
            transform: None,
            frame_bits: None,
            frame_mi: None,
            over_budget: None,
        };
        if let Some(c) = channel {
            if k % c.every == 0 {
                let frame = c.frames[(k / c.every) % c.frames.len()].clone().with_timestamp(t);
                let s = select_transform(&c.candidates, &frame, &c.budget, t, c.bins)?;
                rec.transform = Some(s.spec.to_string());
                rec.frame_bits = Some(s.bits);
                rec.frame_mi = Some(s.mi);
                rec.over_budget = Some(s.over_budget);
            }
        }
        records.push(rec);
    }
    Ok(SessionLog {
        x_initial: options.x_initial,
        records,
    })
}

/// Replays action knots through the optimizer's rollout, bypassing the
/// smoother, so the log ends exactly where the optimized trajectory does.
pub fn replay_actions(config: &ProblemConfig, g: &Matrix2<f64>, actions: &[OperatorAction]) -> Result<SessionLog> {
    let traj = rollout(config, g, actions)?;
    let map = config.interface(*g);
    let records = (0..traj.controls.len())
        .map(|k| {
            let a = traj.actions[k];
            let u: RobotControl = traj.controls[k];
            let s = traj.states[k + 1];
            SessionRecord {
                tick: k,
                t: traj.times[k],
                head: None,
                body: None,
                mean: None,
                turn: None,
                a_head: a.a_head,
                a_body: a.a_body,
                v: u.v,
                w: u.w,
                clamped: apply_interface(&map, a).clamped,
                x: s.x_pos,
                y: s.y_pos,
                theta: s.theta,
                depth: None,
                transform: None,
                frame_bits: None,
                frame_mi: None,
                over_budget: None,
            }
        })
        .collect();
    Ok(SessionLog {
        x_initial: traj.initial_state(),
        records,
    })
}
