//! Box-projected limited-memory BFGS.
//!
//! Gradients come either from forward differences or from a caller-supplied
//! oracle. Variables sitting on a bound whose gradient points outward are frozen
//! for the iteration; the two-loop recursion runs on the remaining free
//! coordinates and the step is found by projected backtracking with an
//! Armijo test. There is no Cauchy-point computation as in L-BFGS-B.

use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsOptions {
    pub max_evals: usize,
    pub memory: usize,
    /// Forward-difference step, scaled by `max(1, |x_i|)`.
    pub fd_step: f64,
    /// Stop when the projected gradient's max-norm falls below this.
    pub grad_tol: f64,
    /// Stop when the relative decrease over an iteration falls below this.
    pub f_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            memory: 10,
            fd_step: 1e-7,
            grad_tol: 1e-6,
            f_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub f_initial: f64,
    pub evals: usize,
    pub iterations: usize,
    /// Value after each iteration; non-increasing.
    pub history: Vec<f64>,
}

/// Per-coordinate box; `None` means unbounded.
pub type Bounds = Vec<Option<(f64, f64)>>;

fn project(x: &mut [f64], bounds: &Bounds) {
    for (v, b) in x.iter_mut().zip(bounds) {
        if let Some((lo, hi)) = b {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Forward differences that step inward when a coordinate sits on its
/// upper bound.
fn gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], fx: f64, bounds: &Bounds, h0: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            let mut h = h0 * x[i].abs().max(1.0);
            if let Some((_, hi)) = bounds[i] {
                if x[i] + h > hi {
                    h = -h;
                }
            }
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i];
            (fp - fx) / h
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` using forward-difference gradients.
pub fn minimize<F>(mut f: F, x0: &[f64], bounds: &Bounds, opts: &LbfgsOptions) -> LbfgsResult
where
    F: FnMut(&[f64]) -> f64,
{
    let h0 = opts.fd_step;
    // Each gradient is charged n evaluations.
    let n = x0.len();
    minimize_impl(
        |x: &[f64], want_grad: bool, evals: &mut usize| {
            *evals += 1;
            let fx = nan_to_inf(f(x));
            if !want_grad {
                return (fx, Vec::new());
            }
            *evals += n;
            let g = gradient(&mut f, x, fx, bounds, h0);
            (fx, g)
        },
        x0,
        bounds,
        opts,
        n + 1,
    )
}

/// Minimizes with a caller-supplied oracle `fg(x, want_gradient)`. Calls
/// that request the gradient are charged `grad_cost` evaluations against
/// the budget, value-only calls one.
pub fn minimize_with_gradient<F>(mut fg: F, x0: &[f64], bounds: &Bounds, opts: &LbfgsOptions, grad_cost: usize) -> LbfgsResult
where
    F: FnMut(&[f64], bool) -> (f64, Vec<f64>),
{
    minimize_impl(
        |x: &[f64], want_grad: bool, evals: &mut usize| {
            let (fx, g) = fg(x, want_grad);
            *evals += if want_grad { grad_cost } else { 1 };
            (nan_to_inf(fx), g)
        },
        x0,
        bounds,
        opts,
        grad_cost,
    )
}

fn nan_to_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn minimize_impl<F>(mut oracle: F, x0: &[f64], bounds: &Bounds, opts: &LbfgsOptions, grad_cost: usize) -> LbfgsResult
where
    F: FnMut(&[f64], bool, &mut usize) -> (f64, Vec<f64>),
{
    let n = x0.len();
    assert_eq!(bounds.len(), n, "one bound entry per coordinate");
    let mut evals = 0usize;
    let mut x = x0.to_vec();
    project(&mut x, bounds);
    let (mut fx, mut g) = oracle(&x, true, &mut evals);
    let f_initial = fx;
    let mut history = Vec::new();
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut iterations = 0;

    if !fx.is_finite() {
        return LbfgsResult {
            x,
            f: fx,
            f_initial,
            evals,
            iterations,
            history,
        };
    }

    while evals + grad_cost < opts.max_evals {
        // Freeze coordinates pinned against a bound.
        let free: Vec<bool> = (0..n)
            .map(|i| match bounds[i] {
                Some((lo, hi)) => !((x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0)),
                None => true,
            })
            .collect();
        let pg: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
        if pg.iter().fold(0.0f64, |m, v| m.max(v.abs())) < opts.grad_tol {
            break;
        }

        // Two-loop recursion restricted to the free set.
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                if free[i] {
                    q[i] -= a * y[i];
                }
            }
            alphas.push(a);
        }
        let gamma = pairs
            .back()
            .map(|(s, y, _)| dot(s, y) / dot(y, y))
            .filter(|v| v.is_finite() && *v > 0.0)
            .unwrap_or_else(|| 1.0 / pg.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0));
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..n {
                if free[i] {
                    q[i] += s[i] * (a - b);
                }
            }
        }
        let mut dir: Vec<f64> = (0..n).map(|i| if free[i] { -q[i] } else { 0.0 }).collect();
        if dot(&dir, &pg) >= 0.0 {
            // Curvature information went stale; fall back to steepest descent.
            pairs.clear();
            let scale = 1.0 / pg.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
            dir = pg.iter().map(|v| -v * scale).collect();
        }

        let mut step = 1.0;
        let mut accepted = None;
        while evals < opts.max_evals {
            let mut trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            project(&mut trial, bounds);
            let (ft, _) = oracle(&trial, false, &mut evals);
            let decrease = dot(&g, &trial.iter().zip(&x).map(|(t, a)| t - a).collect::<Vec<_>>());
            if ft.is_finite() && ft <= fx + 1e-4 * decrease && ft < fx {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
            if step < 1e-14 {
                break;
            }
        }
        let Some((xn, fnew)) = accepted else {
            if pairs.is_empty() {
                break;
            }
            pairs.clear();
            continue;
        };
        iterations += 1;
        let rel = (fx - fnew) / fx.abs().max(1.0);
        let (_, gn) = oracle(&xn, true, &mut evals);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            pairs.push_back((s, y, 1.0 / sy));
            if pairs.len() > opts.memory {
                pairs.pop_front();
            }
        }
        x = xn;
        fx = fnew;
        g = gn;
        history.push(fx);
        if rel < opts.f_tol {
            break;
        }
    }

    LbfgsResult {
        x,
        f: fx,
        f_initial,
        evals,
        iterations,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            x.windows(2)
                .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
                .sum::<f64>()
        };
        let r = minimize(f, &[-1.2, 1.0, -1.2, 1.0], &vec![None; 4], &LbfgsOptions::default());
        assert!(r.f < 1e-8, "f = {}", r.f);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn active_bounds() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 0.5).powi(2) + x[2] * x[2];
        let bounds = vec![Some((-1.0, 1.0)), Some((-1.0, 1.0)), None];
        let r = minimize(f, &[0.0, 0.9, 4.0], &bounds, &LbfgsOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-9);
        assert!((r.x[1] + 0.5).abs() < 1e-5);
        assert!(r.x[2].abs() < 1e-5);
    }
}
