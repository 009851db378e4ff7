//! Checkers for the interface design principles: linearity, continuity,
//! symmetry, reachability and completeness.
//!
//! Reachability is decided on a lattice. A state is snapped to the cell
//! whose center is nearest: positions to `origin + i * cell` and headings to
//! multiples of `2 pi / headings`. Each motion primitive holds one control
//! for `primitive_dt` seconds, integrated with RK4 from the cell center, and
//! the result is snapped again. Breadth-first search then runs for at most
//! `floor(horizon / primitive_dt)` primitives.

use std::collections::{HashSet, VecDeque};
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{rk4_step, wrap_angle, RobotControl, RobotState};
use crate::error::{invalid, Result};
use crate::interface::{apply_interface, ActionSpace, LinearInterfaceMap, OperatorAction};

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Principle {
    Linearity,
    Continuity,
    Symmetry,
    Reachability,
    Completeness,
}

/// Outcome of one principle check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrincipleReport {
    pub principle: Principle,
    /// What was checked, e.g. the reflection axis.
    pub detail: String,
    pub passed: bool,
    pub statistic: f64,
    /// Pass bound the statistic was compared against.
    pub threshold: f64,
    pub samples: usize,
}

/// Whether checkers look at `G a` before or after saturation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Output {
    #[default]
    Raw,
    Saturated,
}

fn eval(map: &LinearInterfaceMap, a: OperatorAction, out: Output) -> [f64; 2] {
    let u = match out {
        Output::Raw => map.apply_unclamped(a),
        Output::Saturated => apply_interface(map, a).control,
    };
    [u.v, u.w]
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn draw(bounds: &ActionSpace, rng: &mut ChaCha8Rng) -> Result<OperatorAction> {
    if bounds.dim() != 2 {
        return Err(invalid("operator bounds must have exactly the axes [head, body]"));
    }
    let a = bounds.sample(rng);
    Ok(OperatorAction::new(a[0], a[1]))
}

fn need_samples(samples: usize) -> Result<()> {
    if samples == 0 {
        return Err(invalid("samples must be at least 1"));
    }
    Ok(())
}

/// Largest `||g(2a) - 2 g(a)|| / (||2 g(a)|| + 1e-12)` over random `a` in
/// `bounds`.
pub fn linearity_residual(
    map: &LinearInterfaceMap,
    bounds: &ActionSpace,
    samples: usize,
    rng_seed: u64,
    output: Output,
) -> Result<f64> {
    need_samples(samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let a = draw(bounds, &mut rng)?;
        let ga = eval(map, a, output);
        let g2a = eval(map, OperatorAction::new(2.0 * a.a_head, 2.0 * a.a_body), output);
        let r = norm2([g2a[0] - 2.0 * ga[0], g2a[1] - 2.0 * ga[1]]) / (2.0 * norm2(ga) + EPS);
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Largest difference quotient `||g(a1) - g(a2)|| / ||a1 - a2||` over
/// `samples` random pairs. Pairs closer than 1e-12 are redrawn; a box with
/// no room for distinct pairs gives 0.
pub fn continuity_modulus(
    map: &LinearInterfaceMap,
    bounds: &ActionSpace,
    samples: usize,
    rng_seed: u64,
    output: Output,
) -> Result<f64> {
    need_samples(samples)?;
    if bounds.axes().iter().all(|a| a.lower == a.upper) {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let (a1, a2) = loop {
            let a1 = draw(bounds, &mut rng)?;
            let a2 = draw(bounds, &mut rng)?;
            if norm2([a1.a_head - a2.a_head, a1.a_body - a2.a_body]) >= EPS {
                break (a1, a2);
            }
        };
        let (u1, u2) = (eval(map, a1, output), eval(map, a2, output));
        let q = norm2([u1[0] - u2[0], u1[1] - u2[1]]) / norm2([a1.a_head - a2.a_head, a1.a_body - a2.a_body]);
        worst = worst.max(q);
    }
    Ok(worst)
}

/// A coordinate reflection of the operator action plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reflection {
    /// Negates `a_head`; the induced control reflection negates `w`.
    Head,
    /// Negates `a_body`; the induced control reflection negates `v`.
    Body,
}

impl Reflection {
    fn action(self, a: OperatorAction) -> OperatorAction {
        match self {
            Reflection::Head => OperatorAction::new(-a.a_head, a.a_body),
            Reflection::Body => OperatorAction::new(a.a_head, -a.a_body),
        }
    }

    fn control(self, u: [f64; 2]) -> [f64; 2] {
        match self {
            Reflection::Head => [u[0], -u[1]],
            Reflection::Body => [-u[0], u[1]],
        }
    }
}

/// Largest `||g(R_a a) - R_u g(a)||` over random `a`, using raw outputs.
pub fn symmetry_check(
    map: &LinearInterfaceMap,
    axis: Reflection,
    bounds: &ActionSpace,
    samples: usize,
    rng_seed: u64,
) -> Result<f64> {
    need_samples(samples)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let a = draw(bounds, &mut rng)?;
        let lhs = eval(map, axis.action(a), Output::Raw);
        let rhs = axis.control(eval(map, a, Output::Raw));
        worst = worst.max(norm2([lhs[0] - rhs[0], lhs[1] - rhs[1]]));
    }
    Ok(worst)
}

/// Lattice and workspace for reachability queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    /// Cell edge in meters.
    pub cell: f64,
    /// Number of heading bins over a full turn.
    pub headings: usize,
    /// Duration of one motion primitive in seconds.
    #[serde(default = "default_primitive_dt")]
    pub primitive_dt: f64,
    /// RK4 substeps per primitive.
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    /// Workspace box `[x_min, x_max]`.
    pub x_range: (f64, f64),
    /// Workspace box `[y_min, y_max]`.
    pub y_range: (f64, f64),
}

fn default_primitive_dt() -> f64 {
    0.5
}

fn default_substeps() -> usize {
    10
}

/// Lattice cell `(i, j, k)`.
pub type Cell = (i64, i64, i64);

impl Grid {
    pub fn new(cell: f64, headings: usize, x_range: (f64, f64), y_range: (f64, f64)) -> Result<Self> {
        let g = Self {
            cell,
            headings,
            primitive_dt: default_primitive_dt(),
            substeps: default_substeps(),
            x_range,
            y_range,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell.is_finite() && self.cell > 0.0) {
            return Err(invalid("grid cell size must be positive"));
        }
        if self.headings == 0 {
            return Err(invalid("grid needs at least one heading bin"));
        }
        if !(self.primitive_dt.is_finite() && self.primitive_dt > 0.0) {
            return Err(invalid("primitive duration must be positive"));
        }
        if self.substeps == 0 {
            return Err(invalid("primitives need at least one substep"));
        }
        for (name, (lo, hi)) in [("x_range", self.x_range), ("y_range", self.y_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(invalid(format!("grid {name} must be a finite interval")));
            }
        }
        Ok(())
    }

    fn cells_along(&self, (lo, hi): (f64, f64)) -> i64 {
        ((hi - lo) / self.cell).round() as i64
    }

    fn in_box(&self, s: &RobotState) -> bool {
        let (x, y) = (self.x_range, self.y_range);
        s.x_pos >= x.0 && s.x_pos <= x.1 && s.y_pos >= y.0 && s.y_pos <= y.1
    }

    /// Cell of `s`, or `None` outside the lattice.
    pub fn cell_of(&self, s: &RobotState) -> Option<Cell> {
        let i = ((s.x_pos - self.x_range.0) / self.cell).round();
        let j = ((s.y_pos - self.y_range.0) / self.cell).round();
        if !(i.is_finite() && j.is_finite()) {
            return None;
        }
        let (i, j) = (i as i64, j as i64);
        if i < 0 || j < 0 || i > self.cells_along(self.x_range) || j > self.cells_along(self.y_range) {
            return None;
        }
        let h = self.headings as f64;
        let k = ((s.theta / TAU * h).round() as i64).rem_euclid(self.headings as i64);
        Some((i, j, k))
    }

    pub fn center(&self, c: Cell) -> RobotState {
        RobotState::new(
            self.x_range.0 + c.0 as f64 * self.cell,
            self.y_range.0 + c.1 as f64 * self.cell,
            wrap_angle(c.2 as f64 * TAU / self.headings as f64),
        )
    }

    /// Cell reached by holding `u` for one primitive from the center of `c`.
    pub fn successor(&self, c: Cell, u: RobotControl) -> Option<Cell> {
        let h = self.primitive_dt / self.substeps as f64;
        let mut s = self.center(c);
        for _ in 0..self.substeps {
            s = rk4_step(s, u, h);
        }
        self.cell_of(&s)
    }

    /// Largest number of primitives that fit in `horizon`.
    pub fn depth(&self, horizon: f64) -> usize {
        (horizon / self.primitive_dt + 1e-9).floor() as usize
    }

    fn locate(&self, s: &RobotState, what: &str) -> Result<Cell> {
        if !s.is_finite() || !self.in_box(s) {
            return Err(invalid(format!(
                "{what} ({}, {}) lies outside the workspace",
                s.x_pos, s.y_pos
            )));
        }
        self.cell_of(s)
            .ok_or_else(|| invalid(format!("{what} does not map to a lattice cell")))
    }
}

/// Controls at every combination of lower bound, center and upper bound of
/// each axis of `robot_bounds`.
pub fn primitives(robot_bounds: &ActionSpace) -> Result<Vec<RobotControl>> {
    if robot_bounds.dim() != 2 {
        return Err(invalid("robot bounds must have exactly the axes [v, w]"));
    }
    Ok(robot_bounds
        .lattice_points()
        .into_iter()
        .map(|p| RobotControl::new(p[0], p[1]))
        .collect())
}

/// Controls `sat(G a)` for `a` at the lower/center/upper lattice of
/// `operator_bounds`, without duplicates.
pub fn induced_primitives(map: &LinearInterfaceMap, operator_bounds: &ActionSpace) -> Result<Vec<RobotControl>> {
    if operator_bounds.dim() != 2 {
        return Err(invalid("operator bounds must have exactly the axes [head, body]"));
    }
    let mut out: Vec<RobotControl> = Vec::new();
    for p in operator_bounds.lattice_points() {
        let u = apply_interface(map, OperatorAction::new(p[0], p[1])).control;
        if !out.contains(&u) {
            out.push(u);
        }
    }
    Ok(out)
}

/// Whether `x1` is reachable from `x0` within `horizon` using primitives
/// built from the lower/center/upper lattice of `robot_bounds`.
pub fn reachable(
    robot_bounds: &ActionSpace,
    x0: &RobotState,
    x1: &RobotState,
    horizon: f64,
    grid: &Grid,
) -> Result<bool> {
    reachable_with(&primitives(robot_bounds)?, x0, x1, horizon, grid)
}

/// [`reachable`] with an explicit primitive set.
pub fn reachable_with(
    prims: &[RobotControl],
    x0: &RobotState,
    x1: &RobotState,
    horizon: f64,
    grid: &Grid,
) -> Result<bool> {
    grid.validate()?;
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    let start = grid.locate(x0, "start state")?;
    let goal = grid.locate(x1, "goal state")?;
    Ok(bfs(prims, start, goal, grid.depth(horizon), grid))
}

fn bfs(prims: &[RobotControl], start: Cell, goal: Cell, depth: usize, grid: &Grid) -> bool {
    if start == goal {
        return true;
    }
    let mut seen = HashSet::from([start]);
    let mut queue = VecDeque::from([(start, 0usize)]);
    while let Some((c, d)) = queue.pop_front() {
        if d == depth {
            continue;
        }
        for &u in prims {
            if let Some(n) = grid.successor(c, u) {
                if n == goal {
                    return true;
                }
                if seen.insert(n) {
                    queue.push_back((n, d + 1));
                }
            }
        }
    }
    false
}

/// Completeness over explicit state pairs. Pairs that are not reachable
/// with the robot's own primitives are skipped; the statistic is the
/// fraction of the remaining pairs that stay reachable through the map.
pub fn completeness_on_pairs(
    map: &LinearInterfaceMap,
    operator_bounds: &ActionSpace,
    robot_bounds: &ActionSpace,
    pairs: &[(RobotState, RobotState)],
    horizon: f64,
    grid: &Grid,
) -> Result<PrincipleReport> {
    let robot = primitives(robot_bounds)?;
    let induced = induced_primitives(map, operator_bounds)?;
    let (mut kept, mut preserved) = (0usize, 0usize);
    for (x, xp) in pairs {
        if !reachable_with(&robot, x, xp, horizon, grid)? {
            continue;
        }
        kept += 1;
        if reachable_with(&induced, x, xp, horizon, grid)? {
            preserved += 1;
        }
    }
    if kept == 0 {
        return Err(invalid("no reachable pair to test"));
    }
    let fraction = preserved as f64 / kept as f64;
    Ok(PrincipleReport {
        principle: Principle::Completeness,
        detail: format!("{preserved} of {kept} reachable pairs preserved"),
        passed: preserved == kept,
        statistic: fraction,
        threshold: 1.0,
        samples: kept,
    })
}

/// Draws `sample_pairs` robot-reachable pairs and checks them with
/// [`completeness_on_pairs`].
///
/// Each pair starts at a random lattice cell and ends where a random
/// sequence of robot primitives (between 0 and the horizon's depth long)
/// leads, so every drawn pair is reachable by construction.
pub fn completeness_check(
    map: &LinearInterfaceMap,
    operator_bounds: &ActionSpace,
    robot_bounds: &ActionSpace,
    sample_pairs: usize,
    horizon: f64,
    grid: &Grid,
    rng_seed: u64,
) -> Result<PrincipleReport> {
    need_samples(sample_pairs)?;
    grid.validate()?;
    let robot = primitives(robot_bounds)?;
    let depth = grid.depth(horizon);
    let (ni, nj) = (grid.cells_along(grid.x_range), grid.cells_along(grid.y_range));
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut pairs = Vec::with_capacity(sample_pairs);
    for _ in 0..sample_pairs {
        let start = (
            rng.gen_range(0..=ni),
            rng.gen_range(0..=nj),
            rng.gen_range(0..grid.headings as i64),
        );
        let mut c = start;
        for _ in 0..rng.gen_range(0..=depth) {
            let u = robot[rng.gen_range(0..robot.len())];
            if let Some(n) = grid.successor(c, u) {
                c = n;
            }
        }
        pairs.push((grid.center(start), grid.center(c)));
    }
    completeness_on_pairs(map, operator_bounds, robot_bounds, &pairs, horizon, grid)
}

/// Largest singular value of the map's matrix.
pub fn sigma_max(map: &LinearInterfaceMap) -> f64 {
    map.g.singular_values().max()
}

/// Runs the linearity and continuity checks and one symmetry check per
/// axis. Linearity and symmetry pass below `tolerance`; continuity passes
/// when the modulus stays within the largest singular value.
pub fn map_reports(
    map: &LinearInterfaceMap,
    operator_bounds: &ActionSpace,
    axes: &[Reflection],
    samples: usize,
    rng_seed: u64,
    tolerance: f64,
) -> Result<Vec<PrincipleReport>> {
    let lin = linearity_residual(map, operator_bounds, samples, rng_seed, Output::Raw)?;
    let lip = continuity_modulus(map, operator_bounds, samples, rng_seed, Output::Saturated)?;
    let lip_bound = sigma_max(map) + 1e-6;
    let mut out = vec![
        PrincipleReport {
            principle: Principle::Linearity,
            detail: "raw output".into(),
            passed: lin < tolerance,
            statistic: lin,
            threshold: tolerance,
            samples,
        },
        PrincipleReport {
            principle: Principle::Continuity,
            detail: "saturated output".into(),
            passed: lip <= lip_bound,
            statistic: lip,
            threshold: lip_bound,
            samples,
        },
    ];
    for &axis in axes {
        let s = symmetry_check(map, axis, operator_bounds, samples, rng_seed)?;
        out.push(PrincipleReport {
            principle: Principle::Symmetry,
            detail: match axis {
                Reflection::Head => "head reflection".into(),
                Reflection::Body => "body reflection".into(),
            },
            passed: s < tolerance,
            statistic: s,
            threshold: tolerance,
            samples,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(rows: [[f64; 2]; 2]) -> LinearInterfaceMap {
        LinearInterfaceMap::from_rows(rows, ActionSpace::default_robot()).unwrap()
    }

    fn anti() -> LinearInterfaceMap {
        map([[0.0, 2.0], [2.0, 0.0]])
    }

    fn ops() -> ActionSpace {
        ActionSpace::default_operator()
    }

    #[test]
    fn linearity() {
        let r = linearity_residual(&map([[0.3, -1.2], [2.5, 0.7]]), &ops(), 500, 1, Output::Raw).unwrap();
        assert!(r < 1e-12);
        let wide = ActionSpace::operator((-5.0, 5.0), (-5.0, 5.0)).unwrap();
        assert!(linearity_residual(&anti(), &wide, 200, 1, Output::Saturated).unwrap() > 0.0);
        let zero = ActionSpace::operator((0.0, 0.0), (0.0, 0.0)).unwrap();
        assert_eq!(linearity_residual(&anti(), &zero, 1, 0, Output::Raw).unwrap(), 0.0);
    }

    #[test]
    fn continuity() {
        let id = map([[1.0, 0.0], [0.0, 1.0]]);
        assert!(continuity_modulus(&id, &ops(), 1000, 3, Output::Saturated).unwrap() <= 1.0 + 1e-9);
        assert!(continuity_modulus(&anti(), &ops(), 1000, 3, Output::Saturated).unwrap() <= 2.0 + 1e-9);
        assert_eq!(continuity_modulus(&map([[0.0; 2]; 2]), &ops(), 100, 3, Output::Raw).unwrap(), 0.0);
    }

    #[test]
    fn symmetry() {
        assert!(symmetry_check(&anti(), Reflection::Head, &ops(), 500, 2).unwrap() < 1e-12);
        assert!(symmetry_check(&anti(), Reflection::Body, &ops(), 500, 2).unwrap() < 1e-12);
        let id = map([[1.0, 0.0], [0.0, 1.0]]);
        assert!(symmetry_check(&id, Reflection::Head, &ops(), 50, 2).unwrap() > 0.1);
        let zero = ActionSpace::operator((0.0, 0.0), (0.0, 0.0)).unwrap();
        assert_eq!(symmetry_check(&id, Reflection::Head, &zero, 1, 2).unwrap(), 0.0);
    }

    fn grid() -> Grid {
        Grid::new(0.25, 16, (-2.0, 2.0), (-2.0, 2.0)).unwrap()
    }

    #[test]
    fn reachable_examples() {
        let unit = ActionSpace::robot((-1.0, 1.0), (-1.0, 1.0)).unwrap();
        let o = RobotState::origin();
        assert!(reachable(&unit, &o, &o, 0.1, &grid()).unwrap());
        let x1 = RobotState::new(1.0, 0.0, 0.0);
        assert!(reachable(&unit, &o, &x1, 2.0, &grid()).unwrap());
        assert!(!reachable(&unit, &o, &x1, 0.5, &grid()).unwrap());
        let frozen = ActionSpace::robot((0.0, 0.0), (-1.0, 1.0)).unwrap();
        assert!(!reachable(&frozen, &o, &x1, 10.0, &grid()).unwrap());
        let far = RobotState::new(9.0, 0.0, 0.0);
        assert!(reachable(&unit, &o, &far, 2.0, &grid()).is_err());
    }

    #[test]
    fn completeness_examples() {
        let g = Grid::new(0.5, 8, (0.0, 3.0), (0.0, 3.0)).unwrap();
        let robot = ActionSpace::robot((-1.0, 1.0), (-1.0, 1.0)).unwrap();
        let generous = ActionSpace::operator((-1.0, 1.0), (-1.0, 1.0)).unwrap();
        let m = LinearInterfaceMap::from_rows([[0.0, 1.0], [1.0, 0.0]], robot.clone()).unwrap();
        let r = completeness_check(&m, &generous, &robot, 20, 1.5, &g, 4).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(r.passed);

        let zero = LinearInterfaceMap::from_rows([[0.0; 2]; 2], robot.clone()).unwrap();
        let a = RobotState::new(1.0, 1.0, 0.0);
        let b = RobotState::new(2.0, 1.0, 0.0);
        let r = completeness_on_pairs(&zero, &generous, &robot, &[(a, a), (a, b)], 2.0, &g).unwrap();
        assert_eq!(r.statistic, 0.5);
        let r = completeness_on_pairs(&zero, &generous, &robot, &[(a, a), (b, b)], 2.0, &g).unwrap();
        assert_eq!(r.statistic, 1.0);
    }

    proptest! {
        #[test]
        fn reachability_is_monotone_in_horizon(i in 0i64..=8, j in 0i64..=8, k in 0i64..8, t in 0.5f64..1.6) {
            let g = Grid::new(0.5, 8, (0.0, 4.0), (0.0, 4.0)).unwrap();
            let robot = ActionSpace::robot((-1.0, 1.0), (-1.0, 1.0)).unwrap();
            let x0 = g.center((4, 4, 0));
            let x1 = g.center((i, j, k));
            if reachable(&robot, &x0, &x1, t, &g).unwrap() {
                prop_assert!(reachable(&robot, &x0, &x1, t + 0.5, &g).unwrap());
            }
        }

        #[test]
        fn completeness_fraction_in_unit_interval(seed in 0u64..1000, g00 in -1.0f64..1.0, g01 in -1.0f64..1.0) {
            let g = Grid::new(0.5, 8, (0.0, 2.0), (0.0, 2.0)).unwrap();
            let robot = ActionSpace::robot((-1.0, 1.0), (-1.0, 1.0)).unwrap();
            let m = LinearInterfaceMap::from_rows([[g00, g01], [0.5, 0.0]], robot.clone()).unwrap();
            let r = completeness_check(&m, &ActionSpace::default_operator(), &robot, 3, 1.0, &g, seed).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.statistic));
        }
    }
}
