//! Derivative-free minimisation by the Nelder–Mead simplex method.
//!
//! Tuned for the vertex-matrix objective: non-finite objective values are
//! treated as `+∞` (so barrier-style rejections of singular candidates are
//! safe), ties are broken deterministically, and a single restart from a
//! shrunken simplex around the incumbent recovers from premature collapse.
//! Everything is deterministic given the starting point.

/// Options for [`nelder_mead`]. The reflection/expansion/contraction/shrink
/// coefficients are the standard 1, 2, ½, ½.
#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    /// Total objective-evaluation budget (across the restart, if any).
    pub max_evals: usize,
    /// Convergence when the simplex diameter (∞-norm) falls below this.
    pub diameter_tol: f64,
    /// Edge length of the initial axis-aligned simplex.
    pub initial_step: f64,
    /// After first convergence, restart once from a simplex scaled by this
    /// factor around the best point (0 disables).
    pub restart_scale: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 20_000,
            diameter_tol: 1e-10,
            initial_step: 0.2,
            restart_scale: 1e-2,
        }
    }
}

/// Outcome of a Nelder–Mead run.
#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    /// Best point found.
    pub x: Vec<f64>,
    /// Objective at the best point.
    pub value: f64,
    /// Objective evaluations used.
    pub evals: usize,
    /// Iterations (simplex updates) performed.
    pub iterations: usize,
    /// Whether the diameter criterion was met (after the restart, if any).
    pub converged: bool,
    /// Best objective value after each iteration; non-increasing.
    pub best_trace: Vec<f64>,
}

struct Evaluator<'a> {
    f: &'a mut dyn FnMut(&[f64]) -> f64,
    evals: usize,
}

impl Evaluator<'_> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    }
}

/// Minimise `f` starting from `x0`.
pub fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult {
    let mut ev = Evaluator { f, evals: 0 };
    let mut trace = Vec::new();
    let mut iterations = 0;

    let (mut best_x, mut best_v, converged_first) = run_simplex(
        &mut ev,
        x0,
        opts.initial_step,
        opts,
        &mut trace,
        &mut iterations,
    );

    let mut converged = converged_first;
    if converged_first && opts.restart_scale > 0.0 && ev.evals < opts.max_evals {
        let (x2, v2, conv2) = run_simplex(
            &mut ev,
            &best_x,
            opts.initial_step * opts.restart_scale,
            opts,
            &mut trace,
            &mut iterations,
        );
        if v2 < best_v {
            best_x = x2;
            best_v = v2;
        }
        converged = conv2;
    }

    NelderMeadResult {
        x: best_x,
        value: best_v,
        evals: ev.evals,
        iterations,
        converged,
        best_trace: trace,
    }
}

/// One simplex descent; returns (best point, best value, diameter converged).
fn run_simplex(
    ev: &mut Evaluator,
    x0: &[f64],
    step: f64,
    opts: &NelderMeadOptions,
    trace: &mut Vec<f64>,
    iterations: &mut usize,
) -> (Vec<f64>, f64, bool) {
    let n = x0.len();
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    points.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += step;
        points.push(p);
    }
    let mut values: Vec<f64> = points.iter().map(|p| ev.eval(p)).collect();

    loop {
        // Deterministic ordering: by value, ties by index.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        trace.push(values[best]);

        let diameter = points
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&points[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max)
            })
            .fold(0.0f64, f64::max);
        if diameter < opts.diameter_tol {
            return (points[best].clone(), values[best], true);
        }
        if ev.evals >= opts.max_evals {
            return (points[best].clone(), values[best], false);
        }

        *iterations += 1;

        // Centroid of all but the worst point.
        let mut centroid = vec![0.0; n];
        for (i, p) in points.iter().enumerate() {
            if i == worst {
                continue;
            }
            for (c, x) in centroid.iter_mut().zip(p) {
                *c += x;
            }
        }
        for c in centroid.iter_mut() {
            *c /= n as f64;
        }

        let blend = |a: f64, b: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&points[worst])
                .map(|(c, w)| a * c + b * w)
                .collect()
        };

        // Reflection.
        let xr = blend(2.0, -1.0);
        let vr = ev.eval(&xr);
        if vr < values[best] {
            // Expansion.
            let xe = blend(3.0, -2.0);
            let ve = ev.eval(&xe);
            if ve < vr {
                points[worst] = xe;
                values[worst] = ve;
            } else {
                points[worst] = xr;
                values[worst] = vr;
            }
            continue;
        }
        if vr < values[second_worst] {
            points[worst] = xr;
            values[worst] = vr;
            continue;
        }
        // Contraction: outside if the reflection improved on the worst,
        // inside otherwise.
        let (xc, vc) = if vr < values[worst] {
            let x = blend(1.5, -0.5);
            let v = ev.eval(&x);
            (x, v)
        } else {
            let x = blend(0.5, 0.5);
            let v = ev.eval(&x);
            (x, v)
        };
        if vc < values[worst].min(vr) {
            points[worst] = xc;
            values[worst] = vc;
            continue;
        }
        // Shrink towards the best point.
        let anchor = points[best].clone();
        for i in 0..=n {
            if i == best {
                continue;
            }
            if ev.evals >= opts.max_evals {
                // Leave the remaining points untouched so every stored value
                // still matches its point; the budget check at the top of
                // the loop returns next.
                break;
            }
            for (x, a) in points[i].iter_mut().zip(&anchor) {
                *x = a + 0.5 * (*x - a);
            }
            values[i] = ev.eval(&points[i]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimises_quadratic_bowl() {
        let mut f = |x: &[f64]| x.iter().map(|v| (v - 1.5) * (v - 1.5)).sum::<f64>();
        let r = nelder_mead(&mut f, &[0.0, 0.0, 0.0], &NelderMeadOptions::default());
        assert!(r.converged);
        for v in &r.x {
            assert!((v - 1.5).abs() < 1e-7, "component {v}");
        }
        assert!(r.value < 1e-13);
    }

    #[test]
    fn minimises_rosenbrock() {
        let mut f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let r = nelder_mead(&mut f, &[-1.2, 1.0], &NelderMeadOptions::default());
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn trace_is_monotone_non_increasing() {
        let mut f = |x: &[f64]| x.iter().map(|v| v.cos() + 0.01 * v * v).sum::<f64>();
        let r = nelder_mead(&mut f, &[2.0, -1.0, 0.5, 3.0], &NelderMeadOptions::default());
        for w in r.best_trace.windows(2) {
            assert!(w[1] <= w[0], "trace increased: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn infinite_regions_are_avoided() {
        // Objective is +∞ on a half space; the minimiser must stay out.
        let mut f = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::INFINITY
            } else {
                (x[0] - 0.3).powi(2) + x[1] * x[1]
            }
        };
        let r = nelder_mead(&mut f, &[1.0, 1.0], &NelderMeadOptions::default());
        assert!((r.x[0] - 0.3).abs() < 1e-6);
        assert!(r.x[1].abs() < 1e-6);
        assert!(r.value.is_finite());
    }

    #[test]
    fn nan_objective_treated_as_infinite() {
        let mut f = |x: &[f64]| {
            if x[0] > 2.0 {
                f64::NAN
            } else {
                (x[0] - 1.9).powi(2)
            }
        };
        let r = nelder_mead(&mut f, &[0.0], &NelderMeadOptions::default());
        assert!((r.x[0] - 1.9).abs() < 1e-6);
    }

    #[test]
    fn respects_eval_budget() {
        let mut count = 0usize;
        let mut f = |x: &[f64]| {
            count += 1;
            x[0] * x[0]
        };
        let opts = NelderMeadOptions {
            max_evals: 40,
            ..Default::default()
        };
        let r = nelder_mead(&mut f, &[5.0], &opts);
        assert!(r.evals <= 41, "used {} evals", r.evals);
        assert_eq!(count, r.evals);
    }

    #[test]
    fn deterministic() {
        let mut f = |x: &[f64]| (x[0] + 0.7).powi(2) * (1.0 + (x[1] * 3.0).sin().powi(2));
        let a = nelder_mead(&mut f, &[2.0, 2.0], &NelderMeadOptions::default());
        let mut g = |x: &[f64]| (x[0] + 0.7).powi(2) * (1.0 + (x[1] * 3.0).sin().powi(2));
        let b = nelder_mead(&mut g, &[2.0, 2.0], &NelderMeadOptions::default());
        assert_eq!(a.evals, b.evals);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        for (x, y) in a.x.iter().zip(&b.x) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
