//! Planar unicycle kinematics, fixed-step RK4 rollouts and affine pullbacks.
//!
//! The robot state is `(x_pos, y_pos, theta)` and the control is the pair of
//! forward speed `v` and turn rate `w`:
//!
//! ```text
//! x' = v cos(theta)
//! y' = v sin(theta)
//! theta' = w
//! ```

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::interface::OperatorAction;
use crate::trajectory::Trajectory;

/// Determinant magnitude below which a linear part counts as singular.
pub const SINGULAR_TOL: f64 = 1e-9;

/// Default step used for optimization rollouts, in seconds.
pub const DEFAULT_DT: f64 = 0.05;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x_pos: f64,
    pub y_pos: f64,
    pub theta: f64,
}

impl RobotState {
    /// Builds a state, wrapping the heading into `(-pi, pi]`.
    pub fn new(x_pos: f64, y_pos: f64, theta: f64) -> Self {
        Self {
            x_pos,
            y_pos,
            theta: wrap_angle(theta),
        }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.x_pos.is_finite() && self.y_pos.is_finite() && self.theta.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x_pos, self.y_pos, self.theta]
    }

    fn offset(self, d: [f64; 3], h: f64) -> Self {
        // Intermediate RK4 stages are not wrapped; only completed steps are.
        Self {
            x_pos: self.x_pos + h * d[0],
            y_pos: self.y_pos + h * d[1],
            theta: self.theta + h * d[2],
        }
    }
}

/// Forward speed `v` (m/s) and turn rate `w` (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotControl {
    pub v: f64,
    pub w: f64,
}

impl RobotControl {
    pub fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.w.is_finite()
    }
}

/// Time derivative of the unicycle state.
pub fn unicycle_derivative(state: RobotState, control: RobotControl) -> Result<[f64; 3]> {
    if !state.is_finite() || !control.is_finite() {
        return Err(invalid("unicycle_derivative: non-finite state or control"));
    }
    Ok(derivative(state, control))
}

#[inline]
fn derivative(state: RobotState, control: RobotControl) -> [f64; 3] {
    let (s, c) = state.theta.sin_cos();
    [control.v * c, control.v * s, control.w]
}

/// One classical RK4 step with the control held constant over `h`.
/// The resulting heading is wrapped.
#[inline]
pub fn rk4_step(state: RobotState, control: RobotControl, h: f64) -> RobotState {
    let k1 = derivative(state, control);
    let k2 = derivative(state.offset(k1, 0.5 * h), control);
    let k3 = derivative(state.offset(k2, 0.5 * h), control);
    let k4 = derivative(state.offset(k3, h), control);
    let mut incr = [0.0; 3];
    for i in 0..3 {
        incr[i] = (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
    }
    let next = state.offset(incr, h);
    RobotState {
        theta: wrap_angle(next.theta),
        ..next
    }
}

/// A signal that is constant on each of `values.len()` equal intervals of
/// `[0, duration]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseConstant<T> {
    pub values: Vec<T>,
    pub duration: f64,
}

impl<T: Copy> PiecewiseConstant<T> {
    pub fn new(values: Vec<T>, duration: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("piecewise-constant signal needs at least one knot"));
        }
        if !(duration.is_finite() && duration > 0.0) {
            return Err(invalid("piecewise-constant signal needs a positive duration"));
        }
        Ok(Self { values, duration })
    }

    pub fn constant(value: T, duration: f64) -> Result<Self> {
        Self::new(vec![value], duration)
    }

    pub fn knot_duration(&self) -> f64 {
        self.duration / self.values.len() as f64
    }

    /// Index of the knot active at time `t`; times on a boundary belong to
    /// the later knot.
    pub fn knot_index(&self, t: f64) -> usize {
        let n = self.values.len();
        let raw = (t / self.knot_duration() + 1e-9).floor();
        if raw <= 0.0 {
            0
        } else {
            (raw as usize).min(n - 1)
        }
    }

    pub fn at(&self, t: f64) -> T {
        self.values[self.knot_index(t)]
    }
}

/// Sample times `0, dt, 2dt, ...` ending exactly at `duration`.
pub fn time_grid(duration: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid(format!("dt must be positive, got {dt}")));
    }
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(invalid(format!("duration must be non-negative, got {duration}")));
    }
    let steps = (duration / dt - 1e-9).ceil().max(0.0) as usize;
    let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
    if let Some(last) = times.last_mut() {
        *last = duration;
    }
    Ok(times)
}

/// Rolls out the unicycle under a piecewise-constant control signal.
///
/// The returned trajectory has `ceil(duration/dt) + 1` samples; the final
/// step is shortened so the last sample lands on `duration`. Operator
/// actions are recorded as zero since no interface is involved.
pub fn integrate(
    state0: RobotState,
    controls: &PiecewiseConstant<RobotControl>,
    duration: f64,
    dt: f64,
) -> Result<Trajectory> {
    integrate_driven(state0, duration, dt, |_, t| {
        (OperatorAction::default(), controls.at(t))
    })
}

/// Rolls out the unicycle with a per-step driver returning the operator
/// action and robot control to hold over step `k` starting at time `t`.
pub fn integrate_driven<F>(state0: RobotState, duration: f64, dt: f64, mut drive: F) -> Result<Trajectory>
where
    F: FnMut(usize, f64) -> (OperatorAction, RobotControl),
{
    if !state0.is_finite() {
        return Err(invalid("integrate: non-finite initial state"));
    }
    let times = time_grid(duration, dt)?;
    let steps = times.len() - 1;
    let mut states = Vec::with_capacity(times.len());
    let mut controls = Vec::with_capacity(steps);
    let mut actions = Vec::with_capacity(steps);
    let mut state = RobotState::new(state0.x_pos, state0.y_pos, state0.theta);
    states.push(state);
    for k in 0..steps {
        let (a, u) = drive(k, times[k]);
        state = rk4_step(state, u, times[k + 1] - times[k]);
        states.push(state);
        controls.push(u);
        actions.push(a);
    }
    Ok(Trajectory {
        times,
        states,
        controls,
        actions,
    })
}

/// Affine coordinate change `psi(z) = linear_part * z + offset` between an
/// operator frame and the robot configuration space.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineDiffeomorphism {
    linear_part: DMatrix<f64>,
    offset: DVector<f64>,
    inverse: DMatrix<f64>,
}

impl AffineDiffeomorphism {
    /// Accepts 2x2 (positions only, heading passed through) or 3x3 linear
    /// parts.
    pub fn new(linear_part: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        let n = linear_part.nrows();
        if linear_part.ncols() != n || !(n == 2 || n == 3) {
            return Err(invalid("affine map linear part must be 2x2 or 3x3"));
        }
        if offset.len() != n {
            return Err(invalid("affine map offset dimension mismatch"));
        }
        if linear_part.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("affine map entries must be finite"));
        }
        let det = linear_part.determinant();
        if det.abs() < SINGULAR_TOL {
            return Err(Error::SingularMap {
                det,
                tol: SINGULAR_TOL,
            });
        }
        let inverse = linear_part
            .clone()
            .try_inverse()
            .ok_or(Error::SingularMap {
                det,
                tol: SINGULAR_TOL,
            })?;
        Ok(Self {
            linear_part,
            offset,
            inverse,
        })
    }

    pub fn identity() -> Self {
        Self::new(DMatrix::identity(3, 3), DVector::zeros(3)).expect("identity is invertible")
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn linear_part(&self) -> &DMatrix<f64> {
        &self.linear_part
    }

    /// Maps an operator-frame point into robot coordinates.
    pub fn apply(&self, z: &[f64; 3]) -> [f64; 3] {
        let mut out = *z;
        let n = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            *o = self.offset[i] + (0..n).map(|j| self.linear_part[(i, j)] * z[j]).sum::<f64>();
        }
        out
    }

    fn apply_inverse_linear(&self, d: &[f64; 3]) -> [f64; 3] {
        let mut out = *d;
        let n = self.dim();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            *o = (0..n).map(|j| self.inverse[(i, j)] * d[j]).sum();
        }
        out
    }
}

/// Operator-frame velocity `[D psi]^-1 f(psi(z), u)`.
///
/// For the identity map this is exactly `unicycle_derivative` at `z`.
pub fn pullback_derivative(
    psi: &AffineDiffeomorphism,
    operator_state: &[f64; 3],
    control: RobotControl,
) -> Result<[f64; 3]> {
    if operator_state.iter().any(|v| !v.is_finite()) {
        return Err(invalid("pullback_derivative: non-finite operator state"));
    }
    let [x, y, theta] = psi.apply(operator_state);
    // Build without re-wrapping so the identity case matches bit for bit.
    let robot = RobotState {
        x_pos: x,
        y_pos: y,
        theta,
    };
    let f = unicycle_derivative(robot, control)?;
    Ok(psi.apply_inverse_linear(&f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn derivative_examples() {
        let d = unicycle_derivative(RobotState::origin(), RobotControl::new(1.0, 0.0)).unwrap();
        assert_eq!(d, [1.0, 0.0, 0.0]);

        let d = unicycle_derivative(RobotState::new(0.0, 0.0, PI / 2.0), RobotControl::new(2.0, 1.0))
            .unwrap();
        assert_abs_diff_eq!(d[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 2.0, epsilon = 1e-15);
        assert_eq!(d[2], 1.0);

        let d = unicycle_derivative(
            RobotState::new(3.0, -1.0, PI / 4.0),
            RobotControl::new(2f64.sqrt(), 0.5),
        )
        .unwrap();
        assert_abs_diff_eq!(d[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 1.0, epsilon = 1e-15);
        assert_eq!(d[2], 0.5);
    }

    #[test]
    fn derivative_rejects_nan() {
        let s = RobotState {
            x_pos: f64::NAN,
            y_pos: 0.0,
            theta: 0.0,
        };
        assert!(matches!(
            unicycle_derivative(s, RobotControl::default()),
            Err(Error::InvalidArgument(_))
        ));
        assert!(unicycle_derivative(RobotState::origin(), RobotControl::new(f64::INFINITY, 0.0)).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(7.0 * PI), PI, epsilon = 1e-12);
        for k in -20..20 {
            let w = wrap_angle(k as f64 * 0.7);
            assert!(w > -PI && w <= PI);
        }
    }

    #[test]
    fn zero_control_stays_put() {
        let s0 = RobotState::new(1.5, -2.0, 0.3);
        let sig = PiecewiseConstant::constant(RobotControl::default(), 3.3).unwrap();
        let traj = integrate(s0, &sig, 3.3, 0.1).unwrap();
        assert_eq!(traj.states.len(), 34);
        assert!(traj.states.iter().all(|s| *s == s0));
    }

    #[test]
    fn straight_line() {
        let sig = PiecewiseConstant::constant(RobotControl::new(1.0, 0.0), 1.0).unwrap();
        let traj = integrate(RobotState::origin(), &sig, 1.0, 0.05).unwrap();
        let last = traj.final_state();
        assert_abs_diff_eq!(last.x_pos, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(last.y_pos, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(last.theta, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn sample_count_rounds_up() {
        assert_eq!(time_grid(1.0, 0.3).unwrap().len(), 5);
        assert_eq!(time_grid(1.0, 0.25).unwrap().len(), 5);
        assert_eq!(time_grid(0.0, 0.25).unwrap(), vec![0.0]);
        assert_eq!(*time_grid(1.0, 0.3).unwrap().last().unwrap(), 1.0);
    }

    #[test]
    fn integrate_rejects_bad_step() {
        let sig = PiecewiseConstant::constant(RobotControl::default(), 1.0).unwrap();
        assert!(integrate(RobotState::origin(), &sig, 1.0, 0.0).is_err());
        assert!(integrate(RobotState::origin(), &sig, 1.0, -0.1).is_err());
        assert!(integrate(RobotState::origin(), &sig, -1.0, 0.1).is_err());
    }

    #[test]
    fn knot_lookup_on_boundaries() {
        let sig = PiecewiseConstant::new(vec![0, 1, 2, 3], 2.0).unwrap();
        assert_eq!(sig.knot_index(0.0), 0);
        assert_eq!(sig.knot_index(0.5), 1);
        assert_eq!(sig.knot_index(1.4999), 2);
        assert_eq!(sig.knot_index(2.0), 3);
        assert_eq!(sig.knot_index(5.0), 3);
    }

    #[test]
    fn pullback_identity_matches_direct() {
        let psi = AffineDiffeomorphism::identity();
        let z = [0.3, -1.2, 2.9];
        let u = RobotControl::new(1.7, -0.4);
        let direct = unicycle_derivative(
            RobotState {
                x_pos: z[0],
                y_pos: z[1],
                theta: z[2],
            },
            u,
        )
        .unwrap();
        assert_eq!(pullback_derivative(&psi, &z, u).unwrap(), direct);
    }

    #[test]
    fn pullback_scaled_positions() {
        let psi = AffineDiffeomorphism::new(DMatrix::identity(2, 2) * 2.0, DVector::zeros(2)).unwrap();
        // psi(0) = 0, heading 0, so f = [1, 0, 0] for u = (1, 0).
        let d = pullback_derivative(&psi, &[0.0, 0.0, 0.0], RobotControl::new(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(d[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(d[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_psi_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            AffineDiffeomorphism::new(m, DVector::zeros(2)),
            Err(Error::SingularMap { .. })
        ));
    }
}
