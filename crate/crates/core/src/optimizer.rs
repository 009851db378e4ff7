//! Direct transcription of the interface-design problem.
//!
//! The decision vector packs the four entries of `G` (row-major) followed by
//! `N` piecewise-constant operator action knots `(a_head, a_body)`. Each
//! candidate is scored by rolling the unicycle forward under
//! `u = sat(G a)` and evaluating the weighted cost. Several seeded restarts
//! of a projected adaptive Nelder-Mead search run independently and the
//! cheapest one wins.

use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjoint;
use crate::dynamics::{integrate_driven, RobotState};
use crate::error::{invalid, Error, Result};
use crate::functionals::{total_cost_with, ArcNorm, CostReport, CostWeights};
use crate::interface::{apply_interface, ActionSpace, LinearInterfaceMap, OperatorAction};
use crate::lbfgs::{self, Bounds, LbfgsOptions};
use crate::neldermead::{self, NelderMeadOptions};
use crate::trajectory::Trajectory;

/// Number of decision entries taken by `G`.
pub const G_LEN: usize = 4;

/// Horizon of the reference problem in seconds. Shorter horizons push the
/// optimal gains up; near 60 s both gains settle around 2.
pub const REFERENCE_HORIZON: f64 = 60.0;
/// Rollout step of the reference problem.
pub const REFERENCE_DT: f64 = 0.2;

/// Budget charged for one value-and-gradient evaluation.
const ADJOINT_COST: usize = 2;

/// Range of the uniform draw for initial `G` entries.
pub const G_INIT_RANGE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMethod {
    NelderMead,
    /// Box-projected L-BFGS on exact reverse-mode gradients.
    #[default]
    Lbfgs,
    /// Projected steepest descent on central-difference gradients.
    GradientDescent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub x_initial: RobotState,
    pub x_final: RobotState,
    /// Horizon `T` in seconds.
    pub horizon: f64,
    /// Number of piecewise-constant action intervals `N`.
    pub knots: usize,
    /// Rollout step in seconds.
    pub dt: f64,
    pub weights: CostWeights,
    pub operator_bounds: ActionSpace,
    pub robot_bounds: ActionSpace,
    /// Multi-start restarts.
    pub seeds: usize,
    pub rng_seed: u64,
    /// Objective evaluations per restart.
    pub max_evals: usize,
    pub arc_norm: ArcNorm,
    pub method: SearchMethod,
    /// Report `G` with non-negative off-diagonal entries when the problem is
    /// symmetric under flipping the sign of an action axis.
    pub canonical_signs: bool,
}

impl ProblemConfig {
    /// The transfer task from `(0, 0, pi/2)` to `(15, 15, -pi/2)` with the
    /// reference weights, `N = 25` and the default action boxes.
    pub fn reference() -> Self {
        use std::f64::consts::FRAC_PI_2;
        Self {
            x_initial: RobotState::new(0.0, 0.0, FRAC_PI_2),
            x_final: RobotState::new(15.0, 15.0, -FRAC_PI_2),
            horizon: REFERENCE_HORIZON,
            knots: 25,
            dt: REFERENCE_DT,
            weights: CostWeights::reference(),
            operator_bounds: ActionSpace::default_operator(),
            robot_bounds: ActionSpace::default_robot(),
            seeds: 16,
            rng_seed: 0,
            max_evals: 20_000,
            arc_norm: ArcNorm::FullState,
            method: SearchMethod::Lbfgs,
            canonical_signs: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(invalid("horizon must be positive"));
        }
        if self.knots < 2 {
            return Err(invalid("knots must be at least 2"));
        }
        if self.seeds < 1 {
            return Err(invalid("seeds must be at least 1"));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt must be positive"));
        }
        if self.max_evals < self.decision_len() + 1 {
            return Err(invalid("max_evals too small to build an initial simplex"));
        }
        if !self.x_initial.is_finite() || !self.x_final.is_finite() {
            return Err(invalid("initial and final states must be finite"));
        }
        if self.operator_bounds.dim() != 2 || self.robot_bounds.dim() != 2 {
            return Err(invalid("operator and robot bounds must be two-dimensional"));
        }
        self.weights.validate()
    }

    pub fn decision_len(&self) -> usize {
        G_LEN + 2 * self.knots
    }

    pub fn interface(&self, g: Matrix2<f64>) -> LinearInterfaceMap {
        LinearInterfaceMap {
            g,
            robot_bounds: self.robot_bounds.clone(),
        }
    }

    fn project(&self, decision: &mut [f64]) {
        let (h, b) = (self.operator_bounds.axis(0), self.operator_bounds.axis(1));
        for knot in decision[G_LEN..].chunks_exact_mut(2) {
            knot[0] = h.clamp(knot[0]);
            knot[1] = b.clamp(knot[1]);
        }
    }

    /// Per-coordinate box: `G` is free, action knots live in the operator box.
    pub fn bounds(&self) -> Bounds {
        let mut b = vec![None; G_LEN];
        for _ in 0..self.knots {
            for a in self.operator_bounds.axes() {
                b.push(Some((a.lower, a.upper)));
            }
        }
        b
    }

    fn gauge_symmetric(&self) -> bool {
        let m = self.weights.effort_metric;
        let sym = |i: usize| {
            let a = self.operator_bounds.axis(i);
            a.lower == -a.upper
        };
        m[0][1] == 0.0 && m[1][0] == 0.0 && sym(0) && sym(1)
    }
}

/// Splits a decision vector into `G` and action knots.
pub fn unpack(decision: &[f64]) -> (Matrix2<f64>, Vec<OperatorAction>) {
    let g = Matrix2::new(decision[0], decision[1], decision[2], decision[3]);
    let actions = decision[G_LEN..]
        .chunks_exact(2)
        .map(|c| OperatorAction::new(c[0], c[1]))
        .collect();
    (g, actions)
}

pub fn pack(g: &Matrix2<f64>, actions: &[OperatorAction]) -> Vec<f64> {
    let mut out = vec![g[(0, 0)], g[(0, 1)], g[(1, 0)], g[(1, 1)]];
    for a in actions {
        out.push(a.a_head);
        out.push(a.a_body);
    }
    out
}

/// Rolls out `u = sat(G a)` from `x_initial` over the horizon with the
/// action knots held piecewise constant.
pub fn rollout(config: &ProblemConfig, g: &Matrix2<f64>, actions: &[OperatorAction]) -> Result<Trajectory> {
    if actions.is_empty() {
        return Err(invalid("rollout needs at least one action knot"));
    }
    let map = config.interface(*g);
    let knot_dt = config.horizon / actions.len() as f64;
    integrate_driven(config.x_initial, config.horizon, config.dt, |_, t| {
        let idx = ((t / knot_dt + 1e-9).floor() as usize).min(actions.len() - 1);
        let a = actions[idx];
        (a, apply_interface(&map, a).control)
    })
}

/// Cost of a decision vector after projecting its action knots into the
/// operator box.
pub fn evaluate_decision(config: &ProblemConfig, decision: &[f64]) -> Result<CostReport> {
    if decision.len() != config.decision_len() {
        return Err(invalid(format!(
            "decision has length {}, expected {}",
            decision.len(),
            config.decision_len()
        )));
    }
    let mut d = decision.to_vec();
    config.project(&mut d);
    let (g, actions) = unpack(&d);
    let traj = rollout(config, &g, &actions)?;
    total_cost_with(&traj, &config.x_final, &g, &config.weights, config.arc_norm)
}

fn objective(config: &ProblemConfig, decision: &[f64]) -> f64 {
    evaluate_decision(config, decision)
        .map(|r| r.total)
        .unwrap_or(f64::INFINITY)
}

/// Central-difference gradient with step `h` per coordinate.
pub fn finite_difference_gradient<F>(objective: F, point: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut x = point.to_vec();
    (0..point.len())
        .map(|i| {
            let xi = x[i];
            x[i] = xi + h;
            let fp = objective(&x);
            x[i] = xi - h;
            let fm = objective(&x);
            x[i] = xi;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Outcome of one seeded restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    pub initial_cost: f64,
    pub best_cost: f64,
    pub evals: usize,
    /// Best cost after each search iteration.
    #[serde(skip)]
    pub history: Vec<f64>,
    #[serde(skip)]
    decision: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub g: Matrix2<f64>,
    pub actions: Vec<OperatorAction>,
    pub trajectory: Trajectory,
    pub cost: f64,
    pub report: CostReport,
    pub restarts: Vec<RestartSummary>,
}

impl Solution {
    pub fn interface(&self, robot_bounds: &ActionSpace) -> LinearInterfaceMap {
        LinearInterfaceMap {
            g: self.g,
            robot_bounds: robot_bounds.clone(),
        }
    }
}

fn initial_decision(config: &ProblemConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut d = Vec::with_capacity(config.decision_len());
    for _ in 0..G_LEN {
        d.push(rng.gen_range(-G_INIT_RANGE..=G_INIT_RANGE));
    }
    for _ in 0..config.knots {
        d.extend(config.operator_bounds.sample(rng));
    }
    d
}

fn step_sizes(config: &ProblemConfig) -> Vec<f64> {
    let mut s = vec![0.5; G_LEN];
    for _ in 0..config.knots {
        for axis in config.operator_bounds.axes() {
            let w = axis.upper - axis.lower;
            s.push(if w > 0.0 { 0.25 * w } else { 0.1 });
        }
    }
    s
}

fn run_restart(config: &ProblemConfig, index: usize) -> RestartSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    rng.set_stream(index as u64);
    let x0 = initial_decision(config, &mut rng);
    let f = |x: &[f64]| objective(config, x);
    let project = |x: &mut [f64]| config.project(x);
    let (decision, best, initial, evals, history) = match config.method {
        SearchMethod::NelderMead => {
            let opts = NelderMeadOptions {
                max_evals: config.max_evals,
                ..Default::default()
            };
            let r = neldermead::minimize(f, &x0, &step_sizes(config), project, &opts);
            (r.x, r.f, r.f_initial, r.evals, r.history)
        }
        SearchMethod::Lbfgs => {
            let opts = LbfgsOptions {
                max_evals: config.max_evals,
                ..Default::default()
            };
            let fg = |x: &[f64], want_grad: bool| {
                if want_grad {
                    adjoint::cost_and_gradient(config, x).unwrap_or((f64::INFINITY, vec![0.0; x.len()]))
                } else {
                    (objective(config, x), Vec::new())
                }
            };
            let r = lbfgs::minimize_with_gradient(fg, &x0, &config.bounds(), &opts, ADJOINT_COST);
            (r.x, r.f, r.f_initial, r.evals, r.history)
        }
        SearchMethod::GradientDescent => {
            let r = projected_gradient_descent(f, &x0, project, config.max_evals);
            (r.x, r.f, r.f_initial, r.evals, r.history)
        }
    };
    RestartSummary {
        index,
        initial_cost: initial,
        best_cost: best,
        evals,
        history,
        decision,
    }
}

struct DescentResult {
    x: Vec<f64>,
    f: f64,
    f_initial: f64,
    evals: usize,
    history: Vec<f64>,
}

/// Steepest descent with Armijo backtracking; the gradient costs `2n`
/// evaluations.
fn projected_gradient_descent<F, P>(f: F, x0: &[f64], project: P, max_evals: usize) -> DescentResult
where
    F: Fn(&[f64]) -> f64,
    P: Fn(&mut [f64]),
{
    const FD_STEP: f64 = 1e-6;
    let mut x = x0.to_vec();
    project(&mut x);
    let mut fx = f(&x);
    let f_initial = fx;
    let mut evals = 1;
    let mut history = Vec::new();
    let mut step: f64 = 1.0;
    while evals + 2 * x.len() < max_evals {
        let grad = finite_difference_gradient(&f, &x, FD_STEP);
        evals += 2 * x.len();
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2.is_nan() || gnorm2 <= 1e-20 {
            break;
        }
        let mut accepted = false;
        step = (step * 2.0).min(1e3);
        while evals < max_evals && step > 1e-12 {
            let mut trial: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - step * gi).collect();
            project(&mut trial);
            let ft = f(&trial);
            evals += 1;
            let decrease: f64 = x.iter().zip(&trial).zip(&grad).map(|((a, b), g)| g * (a - b)).sum();
            if ft <= fx - 1e-4 * decrease && ft < fx {
                x = trial;
                fx = ft;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        history.push(fx);
        if !accepted {
            break;
        }
    }
    DescentResult {
        x,
        f: fx,
        f_initial,
        evals,
        history,
    }
}

/// Flips the sign of an action axis (and the matching column of `G`) so the
/// off-diagonal entries of `G` are non-negative. The rollout is unchanged
/// because `(G S)(S a) = G a` for `S = diag(+-1)`.
fn canonicalize(g: &mut Matrix2<f64>, actions: &mut [OperatorAction]) {
    if g[(1, 0)] < 0.0 {
        g[(0, 0)] = -g[(0, 0)];
        g[(1, 0)] = -g[(1, 0)];
        actions.iter_mut().for_each(|a| a.a_head = -a.a_head);
    }
    if g[(0, 1)] < 0.0 {
        g[(0, 1)] = -g[(0, 1)];
        g[(1, 1)] = -g[(1, 1)];
        actions.iter_mut().for_each(|a| a.a_body = -a.a_body);
    }
}

/// Builds a solution from a decision vector, recomputing the rollout and
/// cost from scratch.
pub fn solution_from_decision(
    config: &ProblemConfig,
    decision: &[f64],
    restarts: Vec<RestartSummary>,
) -> Result<Solution> {
    let mut d = decision.to_vec();
    config.project(&mut d);
    let (mut g, mut actions) = unpack(&d);
    if config.canonical_signs && config.gauge_symmetric() {
        canonicalize(&mut g, &mut actions);
    }
    let trajectory = rollout(config, &g, &actions)?;
    let report = total_cost_with(&trajectory, &config.x_final, &g, &config.weights, config.arc_norm)?;
    Ok(Solution {
        g,
        actions,
        trajectory,
        cost: report.total,
        report,
        restarts,
    })
}

/// Multi-start search over `G` and the action knots.
///
/// Restarts run in parallel; the winner is the lowest final cost with ties
/// going to the lower restart index, so the result does not depend on
/// scheduling.
pub fn solve(config: &ProblemConfig) -> Result<Solution> {
    config.validate()?;
    let restarts: Vec<RestartSummary> = (0..config.seeds)
        .into_par_iter()
        .map(|i| run_restart(config, i))
        .collect();
    let best = restarts
        .iter()
        .min_by(|a, b| a.best_cost.total_cmp(&b.best_cost).then(a.index.cmp(&b.index)))
        .expect("at least one restart");
    let improved = restarts.iter().any(|r| r.best_cost < r.initial_cost);
    let decision = best.decision.clone();
    let solution = solution_from_decision(config, &decision, restarts.clone())?;
    if !improved {
        return Err(Error::NoProgress {
            restarts: config.seeds,
            best_cost: solution.cost,
            best: Box::new(solution),
        });
    }
    Ok(solution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small(seed: u64) -> ProblemConfig {
        ProblemConfig {
            knots: 4,
            horizon: 2.0,
            dt: 0.1,
            seeds: 3,
            max_evals: 3_000,
            rng_seed: seed,
            ..ProblemConfig::reference()
        }
    }

    #[test]
    fn identity_zero_decision_costs_nothing() {
        let mut cfg = small(0);
        cfg.x_final = cfg.x_initial;
        let mut d = vec![0.0; cfg.decision_len()];
        d[0] = 1.0;
        d[3] = 1.0;
        let r = evaluate_decision(&cfg, &d).unwrap();
        assert_eq!(r.terms.terminal, 0.0);
        assert_eq!(r.terms.effort, 0.0);
        assert_eq!(r.terms.arc_length, 0.0);
        assert_abs_diff_eq!(r.terms.orthogonality, 0.0, epsilon = 1e-12);

        cfg.x_final.x_pos += 1.0;
        cfg.weights = CostWeights::new(1.0, 0.0, 0.0, 0.0, [[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let r = evaluate_decision(&cfg, &d).unwrap();
        assert_abs_diff_eq!(r.total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn length_mismatch_rejected() {
        let cfg = small(0);
        assert!(matches!(
            evaluate_decision(&cfg, &[1.0, 0.0, 0.0, 1.0]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn gradient_examples() {
        let g = finite_difference_gradient(|x| x[0] * x[0] + x[1] * x[1], &[1.0, 2.0], 1e-5);
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(g[1], 4.0, epsilon = 1e-6);
        let g = finite_difference_gradient(|_| 3.5, &[0.1, -7.0, 2.0], 1e-4);
        assert!(g.iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn stay_still_when_target_is_start() {
        let mut cfg = small(1);
        cfg.x_final = cfg.x_initial;
        let sol = solve(&cfg).unwrap();
        assert!(sol.cost < cfg.weights.alpha * 1e-3, "cost {}", sol.cost);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let cfg = small(7);
        let a = solve(&cfg).unwrap();
        let b = solve(&cfg).unwrap();
        assert_eq!(a.g, b.g);
        assert_eq!(a.actions, b.actions);
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.cost.to_bits(), b.cost.to_bits());
    }

    #[test]
    fn solution_invariants() {
        let cfg = small(3);
        let sol = solve(&cfg).unwrap();
        assert_eq!(sol.trajectory.states[0], cfg.x_initial);
        for a in &sol.actions {
            assert!(cfg.operator_bounds.contains(&a.as_array()));
        }
        let fresh = rollout(&cfg, &sol.g, &sol.actions).unwrap();
        let r = total_cost_with(&fresh, &cfg.x_final, &sol.g, &cfg.weights, cfg.arc_norm).unwrap();
        assert!((r.total - sol.cost).abs() <= 1e-9);
        for rs in &sol.restarts {
            assert!(rs.history.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn canonical_signs_keep_rollout() {
        let cfg = small(0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = initial_decision(&cfg, &mut rng);
        let (g, actions) = unpack(&d);
        let before = rollout(&cfg, &g, &actions).unwrap();
        let (mut g2, mut a2) = (g, actions.clone());
        canonicalize(&mut g2, &mut a2);
        assert!(g2[(0, 1)] >= 0.0 && g2[(1, 0)] >= 0.0);
        let after = rollout(&cfg, &g2, &a2).unwrap();
        assert_eq!(before.states, after.states);
    }

    #[test]
    fn gradient_descent_improves() {
        let cfg = ProblemConfig {
            method: SearchMethod::GradientDescent,
            seeds: 1,
            ..small(5)
        };
        let sol = solve(&cfg).unwrap();
        assert!(sol.restarts[0].best_cost < sol.restarts[0].initial_cost);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = small(0);
        cfg.knots = 1;
        assert!(solve(&cfg).is_err());
        let mut cfg = small(0);
        cfg.seeds = 0;
        assert!(solve(&cfg).is_err());
        let mut cfg = small(0);
        cfg.horizon = 0.0;
        assert!(solve(&cfg).is_err());
    }
}
