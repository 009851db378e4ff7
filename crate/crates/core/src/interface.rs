//! Action spaces and the linear operator-to-robot interface map.
//!
//! Operator actions are ordered `a = [a_head, a_body]` and robot controls
//! `u = [v, w]`, so the map `u = G a` that pairs body motion with forward
//! speed and head motion with turning is anti-diagonal.

use nalgebra::Matrix2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::RobotControl;
use crate::error::{invalid, Result};

/// One bounded axis of an action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub unit: String,
    pub lower: f64,
    pub upper: f64,
}

impl Axis {
    pub fn new(name: &str, unit: &str, lower: f64, upper: f64) -> Self {
        Self {
            name: name.to_string(),
            unit: unit.to_string(),
            lower,
            upper,
        }
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }
}

/// Axis-aligned box of admissible actions.
///
/// Bounds must be finite with `lower <= upper`. A degenerate axis
/// (`lower == upper`) pins that component, e.g. a robot that cannot
/// translate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    axes: Vec<Axis>,
}

impl ActionSpace {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(invalid("action space needs at least one axis"));
        }
        for a in &axes {
            if !(a.lower.is_finite() && a.upper.is_finite()) {
                return Err(invalid(format!("axis '{}' has non-finite bounds", a.name)));
            }
            if a.lower > a.upper {
                return Err(invalid(format!(
                    "axis '{}' has lower bound {} above upper bound {}",
                    a.name, a.lower, a.upper
                )));
            }
        }
        Ok(Self { axes })
    }

    /// Operator box `[a_head, a_body]`.
    pub fn operator(head: (f64, f64), body: (f64, f64)) -> Result<Self> {
        Self::new(vec![
            Axis::new("head", "rad/s", head.0, head.1),
            Axis::new("body", "m/s", body.0, body.1),
        ])
    }

    /// Robot box `[v, w]`.
    pub fn robot(v: (f64, f64), w: (f64, f64)) -> Result<Self> {
        Self::new(vec![
            Axis::new("v", "m/s", v.0, v.1),
            Axis::new("w", "rad/s", w.0, w.1),
        ])
    }

    /// `a_head` in [-1, 1] rad/s, `a_body` in [-1.5, 1.5] m/s.
    pub fn default_operator() -> Self {
        Self::operator((-1.0, 1.0), (-1.5, 1.5)).expect("valid default")
    }

    /// `v` in [-3, 3] m/s, `w` in [-2, 2] rad/s.
    pub fn default_robot() -> Self {
        Self::robot((-3.0, 3.0), (-2.0, 2.0)).expect("valid default")
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, i: usize) -> &Axis {
        &self.axes[i]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.axes.iter().zip(x).all(|(a, &v)| a.contains(v))
    }

    pub fn clamp_in_place(&self, x: &mut [f64]) {
        for (a, v) in self.axes.iter().zip(x.iter_mut()) {
            *v = a.clamp(*v);
        }
    }

    /// Every combination of `{lower, center, upper}` per axis, in
    /// lexicographic order with the first axis varying slowest.
    /// Duplicates from degenerate axes are removed.
    pub fn lattice_points(&self) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = vec![vec![]];
        for a in &self.axes {
            let mut levels = vec![a.lower, a.center(), a.upper];
            levels.dedup();
            out = out
                .into_iter()
                .flat_map(|p| {
                    levels.iter().map(move |&l| {
                        let mut q = p.clone();
                        q.push(l);
                        q
                    })
                })
                .collect();
        }
        out
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.axes
            .iter()
            .map(|a| {
                if a.lower == a.upper {
                    a.lower
                } else {
                    rng.gen_range(a.lower..=a.upper)
                }
            })
            .collect()
    }
}

/// Head yaw-rate command (rad/s) and body forward-motion command (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OperatorAction {
    pub a_head: f64,
    pub a_body: f64,
}

impl OperatorAction {
    pub fn new(a_head: f64, a_body: f64) -> Self {
        Self { a_head, a_body }
    }

    pub fn as_array(self) -> [f64; 2] {
        [self.a_head, self.a_body]
    }

    pub fn is_finite(&self) -> bool {
        self.a_head.is_finite() && self.a_body.is_finite()
    }
}

/// Output of [`apply_interface`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceOutput {
    pub control: RobotControl,
    /// Control before saturation.
    pub raw: RobotControl,
    pub clamped: bool,
}

/// `u = G a` followed by saturation into the robot box.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearInterfaceMap {
    pub g: Matrix2<f64>,
    pub robot_bounds: ActionSpace,
}

impl LinearInterfaceMap {
    pub fn new(g: Matrix2<f64>, robot_bounds: ActionSpace) -> Result<Self> {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(invalid("interface matrix entries must be finite"));
        }
        if robot_bounds.dim() != 2 {
            return Err(invalid("robot bounds must have exactly the axes [v, w]"));
        }
        Ok(Self { g, robot_bounds })
    }

    pub fn from_rows(rows: [[f64; 2]; 2], robot_bounds: ActionSpace) -> Result<Self> {
        Self::new(
            Matrix2::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1]),
            robot_bounds,
        )
    }

    /// `G a` without saturation.
    #[inline]
    pub fn apply_unclamped(&self, a: OperatorAction) -> RobotControl {
        let g = &self.g;
        RobotControl {
            v: g[(0, 0)] * a.a_head + g[(0, 1)] * a.a_body,
            w: g[(1, 0)] * a.a_head + g[(1, 1)] * a.a_body,
        }
    }

    #[inline]
    pub fn saturate(&self, u: RobotControl) -> RobotControl {
        RobotControl {
            v: self.robot_bounds.axis(0).clamp(u.v),
            w: self.robot_bounds.axis(1).clamp(u.w),
        }
    }
}

pub fn apply_interface(map: &LinearInterfaceMap, a: OperatorAction) -> InterfaceOutput {
    let raw = map.apply_unclamped(a);
    let control = map.saturate(raw);
    InterfaceOutput {
        control,
        raw,
        clamped: control != raw,
    }
}

/// Frobenius distance from `g` to the nearest orthogonal matrix,
/// `||U V^T - G||_F` for the SVD `G = U S V^T`.
pub fn orthogonality_distance(g: &Matrix2<f64>) -> f64 {
    let svd = g.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    (u * vt - g).norm()
}

/// The same distance via singular values, `sqrt(sum (s_i - 1)^2)`.
pub fn orthogonality_distance_from_singular_values(g: &Matrix2<f64>) -> f64 {
    g.singular_values()
        .iter()
        .map(|s| (s - 1.0).powi(2))
        .sum::<f64>()
        .sqrt()
}
