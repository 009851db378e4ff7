use serde::{Deserialize, Serialize};

use crate::dynamics::{RobotControl, RobotState};
use crate::error::{invalid, Result};
use crate::interface::OperatorAction;

/// Sampled rollout: one state per time sample, one control and one operator
/// action per interval between samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<RobotState>,
    pub controls: Vec<RobotControl>,
    pub actions: Vec<OperatorAction>,
}

impl Trajectory {
    /// Checks the length and time-ordering invariants.
    pub fn validate(&self) -> Result<()> {
        if self.states.len() != self.times.len() {
            return Err(invalid("trajectory: one state per time sample required"));
        }
        let intervals = self.times.len().saturating_sub(1);
        if self.controls.len() != intervals || self.actions.len() != intervals {
            return Err(invalid("trajectory: one control and action per interval required"));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("trajectory: times must be strictly increasing"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `T`, the time spanned by the samples.
    pub fn horizon(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn initial_state(&self) -> RobotState {
        self.states[0]
    }

    pub fn final_state(&self) -> RobotState {
        *self.states.last().expect("non-empty trajectory")
    }

    /// Interval lengths `t[k+1] - t[k]`.
    pub fn steps(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.windows(2).map(|w| w[1] - w[0])
    }

    /// Returns the common step if the grid is uniform within a relative
    /// tolerance of 1e-9.
    pub fn uniform_step(&self) -> Option<f64> {
        let first = self.steps().next()?;
        let uniform = self
            .steps()
            .all(|h| (h - first).abs() <= 1e-9 * first.abs().max(1e-300));
        uniform.then_some(first)
    }

    /// Trajectory of `n` copies of `state` spaced `dt` apart, with zero
    /// controls and actions.
    pub fn stationary(state: RobotState, n: usize, dt: f64) -> Self {
        let times = (0..n).map(|k| k as f64 * dt).collect();
        let m = n.saturating_sub(1);
        Self {
            times,
            states: vec![state; n],
            controls: vec![RobotControl::default(); m],
            actions: vec![OperatorAction::default(); m],
        }
    }
}
