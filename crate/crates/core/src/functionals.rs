//! Cost terms evaluated on sampled trajectories.
//!
//! The transfer objective is
//!
//! ```text
//! J = alpha * |x_final - x(T)|^2
//!   + beta  * integral a(t)' M a(t) dt
//!   + gamma * integral |x'(t)| dt
//!   + delta * dist(G, O(2))
//! ```
//!
//! Integrals use left-endpoint rectangles, which are exact for the
//! piecewise-constant actions the optimizer produces. The arc-length term
//! uses the full state difference `(dx, dy, dtheta)` by default; the
//! positions-only variant is available through [`ArcNorm`].

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::dynamics::{wrap_angle, RobotState};
use crate::error::{invalid, Result};
use crate::interface::orthogonality_distance;
use crate::trajectory::Trajectory;

/// Weights of the four cost terms and the effort metric `M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub effort_metric: [[f64; 2]; 2],
}

impl CostWeights {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64, effort_metric: [[f64; 2]; 2]) -> Result<Self> {
        let w = Self {
            alpha,
            beta,
            gamma,
            delta,
            effort_metric,
        };
        w.validate()?;
        Ok(w)
    }

    /// The weights used for the head/body transfer task: `M = diag(10, 1/2)`,
    /// `alpha = 250`, `beta = 10`, `gamma = 5`, `delta = 10`.
    pub fn reference() -> Self {
        Self {
            alpha: 250.0,
            beta: 10.0,
            gamma: 5.0,
            delta: 10.0,
            effort_metric: [[10.0, 0.0], [0.0, 0.5]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("weight {name} must be finite and >= 0, got {v}")));
            }
        }
        check_spd(&self.metric())
    }

    pub fn metric(&self) -> Matrix2<f64> {
        let m = &self.effort_metric;
        Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.alpha, self.beta, self.gamma, self.delta]
    }
}

/// Symmetric with strictly positive eigenvalues.
pub fn check_spd(m: &Matrix2<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(invalid("effort metric must be finite"));
    }
    if (m[(0, 1)] - m[(1, 0)]).abs() > 1e-12 * (1.0 + m[(0, 1)].abs()) {
        return Err(invalid("effort metric must be symmetric"));
    }
    // Sylvester's criterion for 2x2.
    if !(m[(0, 0)] > 0.0 && m.determinant() > 0.0) {
        return Err(invalid("effort metric must be positive definite"));
    }
    Ok(())
}

/// Which components enter `|x'|` in the arc-length term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArcNorm {
    /// `(dx, dy, dtheta)`; mixes metres and radians.
    #[default]
    FullState,
    PositionsOnly,
}

/// Squared distance between the last sample and `x_final` with the heading
/// difference wrapped into `(-pi, pi]`.
pub fn terminal_cost(traj: &Trajectory, x_final: &RobotState) -> Result<f64> {
    let last = traj
        .states
        .last()
        .ok_or_else(|| invalid("terminal_cost: empty trajectory"))?;
    let dx = x_final.x_pos - last.x_pos;
    let dy = x_final.y_pos - last.y_pos;
    let dth = wrap_angle(x_final.theta - last.theta);
    Ok(dx * dx + dy * dy + dth * dth)
}

/// Left-endpoint quadrature of `a' M a`.
pub fn effort_cost(traj: &Trajectory, metric: &Matrix2<f64>) -> Result<f64> {
    if traj.is_empty() {
        return Err(invalid("effort_cost: empty trajectory"));
    }
    check_spd(metric)?;
    Ok(effort_unchecked(traj, metric))
}

fn effort_unchecked(traj: &Trajectory, m: &Matrix2<f64>) -> f64 {
    traj.actions
        .iter()
        .zip(traj.steps())
        .map(|(a, h)| {
            let (p, q) = (a.a_head, a.a_body);
            let quad = m[(0, 0)] * p * p + (m[(0, 1)] + m[(1, 0)]) * p * q + m[(1, 1)] * q * q;
            quad * h
        })
        .sum()
}

pub fn arc_length(traj: &Trajectory, norm: ArcNorm) -> Result<f64> {
    if traj.len() < 2 {
        return Err(invalid("arc_length: at least two samples required"));
    }
    Ok(traj
        .states
        .windows(2)
        .map(|w| {
            let dx = w[1].x_pos - w[0].x_pos;
            let dy = w[1].y_pos - w[0].y_pos;
            match norm {
                ArcNorm::FullState => {
                    let dth = wrap_angle(w[1].theta - w[0].theta);
                    (dx * dx + dy * dy + dth * dth).sqrt()
                }
                ArcNorm::PositionsOnly => (dx * dx + dy * dy).sqrt(),
            }
        })
        .sum())
}

/// Heading sequence with the `(-pi, pi]` wrapping undone.
pub fn unwrap_headings(states: &[RobotState]) -> Vec<f64> {
    let mut out = Vec::with_capacity(states.len());
    let mut acc = match states.first() {
        Some(s) => s.theta,
        None => return out,
    };
    out.push(acc);
    for w in states.windows(2) {
        acc += wrap_angle(w[1].theta - w[0].theta);
        out.push(acc);
    }
    out
}

/// Average of `|x''|` over the horizon.
///
/// `x''` is the second central difference at interior samples and the
/// one-sided second difference at the two endpoints; the average is the
/// trapezoid rule divided by `T`. Headings are unwrapped first.
pub fn mean_curvature(traj: &Trajectory) -> Result<f64> {
    let n = traj.len();
    if n < 3 {
        return Err(invalid("mean_curvature: at least three samples required"));
    }
    let h = traj
        .uniform_step()
        .ok_or_else(|| invalid("mean_curvature: time grid is not uniform"))?;
    let theta = unwrap_headings(&traj.states);
    let accel = |k: usize| -> f64 {
        let (a, b, c) = (k - 1, k, k + 1);
        let s = &traj.states;
        let ddx = s[c].x_pos - 2.0 * s[b].x_pos + s[a].x_pos;
        let ddy = s[c].y_pos - 2.0 * s[b].y_pos + s[a].y_pos;
        let ddt = theta[c] - 2.0 * theta[b] + theta[a];
        (ddx * ddx + ddy * ddy + ddt * ddt).sqrt() / (h * h)
    };
    // Endpoints reuse the stencil of their neighbouring interior sample.
    let mut sum = 0.5 * (accel(1) + accel(n - 2));
    for k in 1..n - 1 {
        sum += accel(k);
    }
    let horizon = (n - 1) as f64 * h;
    Ok(sum * h / horizon)
}

/// Weighted terms of the transfer objective.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub terminal: f64,
    pub effort: f64,
    pub arc_length: f64,
    pub orthogonality: f64,
}

impl CostBreakdown {
    pub fn as_array(&self) -> [f64; 4] {
        [self.terminal, self.effort, self.arc_length, self.orthogonality]
    }

    pub fn total(&self) -> f64 {
        self.terminal + self.effort + self.arc_length + self.orthogonality
    }
}

/// Cost value with both weighted and unweighted term values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub total: f64,
    /// Each term multiplied by its weight.
    pub weighted: CostBreakdown,
    /// Raw term values.
    pub terms: CostBreakdown,
}

pub fn total_cost(
    traj: &Trajectory,
    x_final: &RobotState,
    g: &Matrix2<f64>,
    weights: &CostWeights,
) -> Result<CostReport> {
    total_cost_with(traj, x_final, g, weights, ArcNorm::FullState)
}

pub fn total_cost_with(
    traj: &Trajectory,
    x_final: &RobotState,
    g: &Matrix2<f64>,
    weights: &CostWeights,
    norm: ArcNorm,
) -> Result<CostReport> {
    weights.validate()?;
    let terms = CostBreakdown {
        terminal: terminal_cost(traj, x_final)?,
        effort: effort_unchecked(traj, &weights.metric()),
        arc_length: if traj.len() < 2 { 0.0 } else { arc_length(traj, norm)? },
        orthogonality: orthogonality_distance(g),
    };
    let weighted = CostBreakdown {
        terminal: weights.alpha * terms.terminal,
        effort: weights.beta * terms.effort,
        arc_length: weights.gamma * terms.arc_length,
        orthogonality: weights.delta * terms.orthogonality,
    };
    Ok(CostReport {
        total: weighted.total(),
        weighted,
        terms,
    })
}
