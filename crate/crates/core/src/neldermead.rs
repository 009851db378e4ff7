//! Projected adaptive Nelder-Mead.
//!
//! Coefficients follow the dimension-dependent choice of Gao and Han
//! (reflection 1, expansion `1 + 2/n`, contraction `0.75 - 1/(2n)`,
//! shrink `1 - 1/n`), which keeps the simplex from degenerating in the
//! 50+ dimensional transcription problems solved here. Every trial point
//! is passed through a caller-supplied projection before evaluation, so
//! bounded coordinates never leave their box. When the simplex collapses
//! before the evaluation budget is spent it is rebuilt around the best
//! vertex.

/// Search settings.
#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Collapse test on the spread of function values.
    pub f_tol: f64,
    /// Collapse test on the largest vertex distance from the best vertex.
    pub x_tol: f64,
    /// Rebuild the simplex on collapse while budget remains.
    pub rebuild: bool,
    /// Rebuilds after which the search stops even with budget left.
    pub max_rebuilds: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            f_tol: 1e-10,
            x_tol: 1e-8,
            rebuild: true,
            max_rebuilds: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    /// Value at the (projected) starting point.
    pub f_initial: f64,
    pub evals: usize,
    pub iterations: usize,
    pub rebuilds: usize,
    /// Best value after each iteration; non-increasing.
    pub history: Vec<f64>,
}

struct Simplex {
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl Simplex {
    fn order(&mut self) {
        let mut idx: Vec<usize> = (0..self.points.len()).collect();
        // Stable sort keeps ties in insertion order, which keeps runs reproducible.
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        self.points = idx.iter().map(|&i| std::mem::take(&mut self.points[i])).collect();
        self.values = idx.iter().map(|&i| self.values[i]).collect();
    }

    fn spread(&self) -> (f64, f64) {
        let best = &self.points[0];
        let fs = self.values.last().unwrap() - self.values[0];
        let xs = self.points[1..]
            .iter()
            .map(|p| p.iter().zip(best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        (fs, xs)
    }
}

fn affine(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    // a + t * (a - b)
    a.iter().zip(b).map(|(x, y)| x + t * (x - y)).collect()
}

/// Minimizes `f` from `x0`. The initial simplex offsets coordinate `i` by
/// `step[i]`, flipping direction if the projection would swallow the step.
pub fn minimize<F, P>(
    mut f: F,
    x0: &[f64],
    step: &[f64],
    project: P,
    opts: &NelderMeadOptions,
) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
    P: Fn(&mut [f64]),
{
    let n = x0.len();
    assert_eq!(step.len(), n, "step length must match dimension");
    let nf = n.max(1) as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    // Shrink factor must stay positive in one dimension.
    let sigma = if n == 1 { 0.5 } else { sigma };

    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut start = x0.to_vec();
    project(&mut start);
    let f_initial = eval(&start, &mut evals);

    let build = |center: &[f64], scale: f64, evals: &mut usize, eval: &mut dyn FnMut(&[f64], &mut usize) -> f64, f_center: f64| {
        let mut points = vec![center.to_vec()];
        let mut values = vec![f_center];
        for i in 0..n {
            let mut p = center.to_vec();
            p[i] += scale * step[i];
            project(&mut p);
            if p[i] == center[i] {
                p[i] -= scale * step[i];
                project(&mut p);
            }
            values.push(eval(&p, evals));
            points.push(p);
        }
        Simplex { points, values }
    };

    let mut simplex = build(&start, 1.0, &mut evals, &mut eval, f_initial);
    simplex.order();
    let mut best_x = simplex.points[0].clone();
    let mut best_f = simplex.values[0];
    let mut history = Vec::new();
    let mut iterations = 0usize;
    let mut rebuilds = 0usize;
    let mut rebuild_scale: f64 = 1.0;

    while evals < opts.max_evals {
        let (fs, xs) = simplex.spread();
        if fs <= opts.f_tol && xs <= opts.x_tol {
            if !opts.rebuild || rebuilds >= opts.max_rebuilds || evals + n + 1 > opts.max_evals {
                break;
            }
            rebuilds += 1;
            // Rebuild at a shrinking scale around the best vertex found so far.
            rebuild_scale = (rebuild_scale * 0.5).max(1e-3);
            simplex = build(&best_x, rebuild_scale, &mut evals, &mut eval, best_f);
            simplex.order();
            continue;
        }
        iterations += 1;

        let worst = n;
        let mut centroid = vec![0.0; n];
        for p in &simplex.points[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= nf);

        let mut xr = affine(&centroid, &simplex.points[worst], alpha);
        project(&mut xr);
        let fr = eval(&xr, &mut evals);

        if fr < simplex.values[0] {
            let mut xe = affine(&centroid, &simplex.points[worst], alpha * gamma);
            project(&mut xe);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex.points[worst] = xe;
                simplex.values[worst] = fe;
            } else {
                simplex.points[worst] = xr;
                simplex.values[worst] = fr;
            }
        } else if fr < simplex.values[n - 1] {
            simplex.points[worst] = xr;
            simplex.values[worst] = fr;
        } else {
            let outside = fr < simplex.values[worst];
            let mut xc = if outside {
                affine(&centroid, &simplex.points[worst], alpha * rho)
            } else {
                affine(&centroid, &simplex.points[worst], -rho)
            };
            project(&mut xc);
            let fc = eval(&xc, &mut evals);
            let accept = if outside { fc <= fr } else { fc < simplex.values[worst] };
            if accept {
                simplex.points[worst] = xc;
                simplex.values[worst] = fc;
            } else {
                let best = simplex.points[0].clone();
                for i in 1..=n {
                    let mut p: Vec<f64> = best
                        .iter()
                        .zip(&simplex.points[i])
                        .map(|(b, x)| b + sigma * (x - b))
                        .collect();
                    project(&mut p);
                    simplex.values[i] = eval(&p, &mut evals);
                    simplex.points[i] = p;
                }
            }
        }
        simplex.order();
        if simplex.values[0] < best_f {
            best_f = simplex.values[0];
            best_x.clone_from(&simplex.points[0]);
        }
        history.push(best_f);
    }

    NelderMeadResult {
        x: best_x,
        f: best_f,
        f_initial,
        evals,
        iterations,
        rebuilds,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    }

    #[test]
    fn quadratic_minimum() {
        let r = minimize(
            |x| (x[0] - 1.0).powi(2) + 4.0 * (x[1] + 2.0).powi(2),
            &[5.0, 5.0],
            &[1.0, 1.0],
            |_| {},
            &NelderMeadOptions::default(),
        );
        assert!((r.x[0] - 1.0).abs() < 1e-4, "{:?}", r.x);
        assert!((r.x[1] + 2.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn rosenbrock_4d() {
        let r = minimize(
            rosenbrock,
            &[-1.2, 1.0, -1.2, 1.0],
            &[0.5; 4],
            |_| {},
            &NelderMeadOptions {
                max_evals: 40_000,
                ..Default::default()
            },
        );
        assert!(r.f < 1e-6, "f = {}", r.f);
    }

    #[test]
    fn projection_keeps_box() {
        // Unconstrained minimum at (3, 3) lies outside [-1, 1]^2.
        let r = minimize(
            |x| (x[0] - 3.0).powi(2) + (x[1] - 3.0).powi(2),
            &[0.0, 0.0],
            &[0.5, 0.5],
            |x| x.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0)),
            &NelderMeadOptions::default(),
        );
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn history_non_increasing_and_budget_respected() {
        let opts = NelderMeadOptions {
            max_evals: 500,
            ..Default::default()
        };
        let r = minimize(rosenbrock, &[0.0; 6], &[0.3; 6], |_| {}, &opts);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
        // A single iteration can use at most n + 2 evaluations past the limit check.
        assert!(r.evals <= opts.max_evals + 6 + 2);
        assert!(r.f <= r.f_initial);
    }
}
