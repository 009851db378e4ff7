//! Reverse-mode gradient of the transcribed objective.
//!
//! With the control held over a step, the RK4 update of the unicycle has a
//! closed form because the heading stages are `theta`, `theta + h w / 2`
//! (twice) and `theta + h w`:
//!
//! ```text
//! x+ = x + h v / 6 * (cos t0 + 4 cos t1 + cos t2)
//! y+ = y + h v / 6 * (sin t0 + 4 sin t1 + sin t2)
//! theta+ = theta + h w
//! ```
//!
//! Its Jacobians drive a single backward sweep over the rollout. Saturated
//! controls and projected action coordinates contribute zero gradient, and
//! the arc-length and orthogonality terms use the zero subgradient where
//! their norms vanish.

use nalgebra::Matrix2;

use crate::dynamics::wrap_angle;
use crate::error::Result;
use crate::functionals::{total_cost_with, ArcNorm};
use crate::optimizer::{rollout, unpack, ProblemConfig, G_LEN};

/// Total cost and its gradient with respect to the raw decision vector.
pub fn cost_and_gradient(config: &ProblemConfig, decision: &[f64]) -> Result<(f64, Vec<f64>)> {
    if decision.len() != config.decision_len() {
        return Err(crate::error::Error::InvalidArgument(format!(
            "decision has length {}, expected {}",
            decision.len(),
            config.decision_len()
        )));
    }
    let mut d = decision.to_vec();
    let bounds = config.bounds();
    for (v, b) in d.iter_mut().zip(&bounds) {
        if let Some((lo, hi)) = b {
            *v = v.clamp(*lo, *hi);
        }
    }
    let (g, actions) = unpack(&d);
    let traj = rollout(config, &g, &actions)?;
    let report = total_cost_with(&traj, &config.x_final, &g, &config.weights, config.arc_norm)?;

    let w = &config.weights;
    let states = &traj.states;
    let steps = states.len() - 1;
    let mut state_grad = vec![[0.0f64; 3]; states.len()];

    // Terminal term.
    let last = states[steps];
    state_grad[steps][0] -= 2.0 * w.alpha * (config.x_final.x_pos - last.x_pos);
    state_grad[steps][1] -= 2.0 * w.alpha * (config.x_final.y_pos - last.y_pos);
    state_grad[steps][2] -= 2.0 * w.alpha * wrap_angle(config.x_final.theta - last.theta);

    // Arc-length term.
    for k in 0..steps {
        let (a, b) = (states[k], states[k + 1]);
        let mut diff = [b.x_pos - a.x_pos, b.y_pos - a.y_pos, wrap_angle(b.theta - a.theta)];
        if config.arc_norm == ArcNorm::PositionsOnly {
            diff[2] = 0.0;
        }
        let norm = (diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]).sqrt();
        if norm > 0.0 {
            for i in 0..3 {
                let c = w.gamma * diff[i] / norm;
                state_grad[k + 1][i] += c;
                state_grad[k][i] -= c;
            }
        }
    }

    let metric = w.metric();
    let sym = metric + metric.transpose();
    let mut grad_g = Matrix2::<f64>::zeros();
    let mut grad_a = vec![[0.0f64; 2]; actions.len()];
    let knot_dt = config.horizon / actions.len() as f64;

    let mut lam = state_grad[steps];
    for k in (0..steps).rev() {
        let s = states[k];
        let u = traj.controls[k];
        let h = traj.times[k + 1] - traj.times[k];
        let (t0, t1, t2) = (s.theta, s.theta + 0.5 * h * u.w, s.theta + h * u.w);
        let (s0, c0) = t0.sin_cos();
        let (s1, c1) = t1.sin_cos();
        let (s2, c2) = t2.sin_cos();
        let csum = c0 + 4.0 * c1 + c2;
        let ssum = s0 + 4.0 * s1 + s2;
        let k6 = h / 6.0;

        let dx_dth = -k6 * u.v * ssum;
        let dy_dth = k6 * u.v * csum;
        let dx_dv = k6 * csum;
        let dy_dv = k6 * ssum;
        let dx_dw = -k6 * u.v * (2.0 * h * s1 + h * s2);
        let dy_dw = k6 * u.v * (2.0 * h * c1 + h * c2);

        let gv = dx_dv * lam[0] + dy_dv * lam[1];
        let gw = dx_dw * lam[0] + dy_dw * lam[1] + h * lam[2];

        let idx = ((traj.times[k] / knot_dt + 1e-9).floor() as usize).min(actions.len() - 1);
        let a = actions[idx];
        let raw_v = g[(0, 0)] * a.a_head + g[(0, 1)] * a.a_body;
        let raw_w = g[(1, 0)] * a.a_head + g[(1, 1)] * a.a_body;
        let gv = if raw_v == u.v { gv } else { 0.0 };
        let gw = if raw_w == u.w { gw } else { 0.0 };

        grad_g[(0, 0)] += gv * a.a_head;
        grad_g[(0, 1)] += gv * a.a_body;
        grad_g[(1, 0)] += gw * a.a_head;
        grad_g[(1, 1)] += gw * a.a_body;
        grad_a[idx][0] += gv * g[(0, 0)] + gw * g[(1, 0)];
        grad_a[idx][1] += gv * g[(0, 1)] + gw * g[(1, 1)];

        // Effort over this step.
        grad_a[idx][0] += w.beta * h * (sym[(0, 0)] * a.a_head + sym[(0, 1)] * a.a_body);
        grad_a[idx][1] += w.beta * h * (sym[(1, 0)] * a.a_head + sym[(1, 1)] * a.a_body);

        lam = [
            state_grad[k][0] + lam[0],
            state_grad[k][1] + lam[1],
            state_grad[k][2] + dx_dth * lam[0] + dy_dth * lam[1] + lam[2],
        ];
    }

    // d/dG ||U V^T - G||_F = (G - U V^T) / ||U V^T - G||_F
    let svd = g.svd(true, true);
    let polar = svd.u.expect("u requested") * svd.v_t.expect("v_t requested");
    let resid = g - polar;
    let dist = resid.norm();
    if dist > 1e-12 {
        grad_g += resid * (w.delta / dist);
    }

    let mut grad = vec![grad_g[(0, 0)], grad_g[(0, 1)], grad_g[(1, 0)], grad_g[(1, 1)]];
    for ga in &grad_a {
        grad.extend_from_slice(ga);
    }
    // Coordinates clipped by the projection do not move the objective.
    for (i, b) in bounds.iter().enumerate().skip(G_LEN) {
        if let Some((lo, hi)) = b {
            if decision[i] < *lo || decision[i] > *hi {
                grad[i] = 0.0;
            }
        }
    }
    Ok((report.total, grad))
}
