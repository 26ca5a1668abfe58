//! Limited-memory BFGS minimizer with backtracking line search.
//!
//! Standard two-loop recursion (Nocedal & Wright ch. 7) over a bounded
//! history of `(s, y)` pairs, an initial Hessian scaling `gamma = s.y / y.y`,
//! and an Armijo sufficient-decrease backtracking line search. Curvature
//! pairs with `s.y <= 0` are skipped so the implicit Hessian approximation
//! stays positive definite.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Stopping and memory parameters for [`minimize`].
#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions {
    /// Hard cap on outer iterations.
    pub max_iterations: usize,
    /// Stop when the relative objective decrease falls below this.
    pub tolerance: f64,
    /// Number of `(s, y)` pairs kept for the two-loop recursion.
    pub memory: usize,
    /// Stop when the gradient infinity norm falls below this.
    pub gradient_tolerance: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            max_iterations: 400,
            tolerance: 1e-7,
            memory: 20,
            gradient_tolerance: 1e-10,
        }
    }
}

/// Outcome of a minimization run.
#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// True when a tolerance (objective or gradient) was met, false when the
    /// iteration cap or a failed line search stopped the run.
    pub converged: bool,
}

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK_FACTOR: f64 = 0.5;
const MAX_BACKTRACKS: usize = 50;

/// Minimizes `f`, which returns the objective and its gradient. The final
/// objective never exceeds the initial one: only strictly decreasing steps
/// are accepted.
pub fn minimize<F>(mut f: F, x0: &[f64], options: &MinimizeOptions) -> Result<MinimizeOutcome>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0.to_vec();
    let (mut fx, mut grad) = f(&x);
    if !fx.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Optimization {
            message: "objective or gradient non-finite at the starting point".into(),
            last_iterate: x.into_boxed_slice(),
        });
    }

    // Zero-gradient short-circuit: already optimal.
    if inf_norm(&grad) <= options.gradient_tolerance {
        return Ok(MinimizeOutcome {
            x,
            objective: fx,
            iterations: 0,
            converged: true,
        });
    }

    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new(); // (s, y, 1/(s.y))
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..options.max_iterations {
        iterations = iter + 1;
        let mut direction = two_loop_direction(&grad, &history);
        let mut slope = dot(&grad, &direction);
        if slope >= 0.0 {
            // Not a descent direction (stale curvature); fall back to steepest descent.
            direction = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &direction);
            history.clear();
        }

        let mut step = if history.is_empty() {
            (1.0 / inf_norm(&grad).max(1.0)).min(1.0)
        } else {
            1.0
        };

        // Backtracking Armijo line search.
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate: Vec<f64> = x
                .iter()
                .zip(&direction)
                .map(|(xi, di)| xi + step * di)
                .collect();
            let (f_new, g_new) = f(&candidate);
            if !f_new.is_finite() || g_new.iter().any(|g| !g.is_finite()) {
                step *= BACKTRACK_FACTOR;
                continue;
            }
            if f_new <= fx + ARMIJO_C1 * step * slope {
                accepted = Some((candidate, f_new, g_new));
                break;
            }
            step *= BACKTRACK_FACTOR;
        }

        let Some((x_new, f_new, g_new)) = accepted else {
            // No decreasing step found; the current iterate is the answer.
            break;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * norm(&s) * norm(&y) {
            if history.len() == options.memory.max(1) {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let f_prev = fx;
        x = x_new;
        fx = f_new;
        grad = g_new;

        if inf_norm(&grad) <= options.gradient_tolerance {
            converged = true;
            break;
        }
        let rel_change = (f_prev - fx).abs() / fx.abs().max(1.0);
        if rel_change < options.tolerance {
            converged = true;
            break;
        }
    }

    Ok(MinimizeOutcome {
        x,
        objective: fx,
        iterations,
        converged,
    })
}

fn two_loop_direction(grad: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = grad.to_vec();
    if history.is_empty() {
        for v in &mut q {
            *v = -*v;
        }
        return q;
    }
    let mut alphas = vec![0.0; history.len()];
    for (i, (s, y, rho)) in history.iter().enumerate().rev() {
        let alpha = rho * dot(s, &q);
        alphas[i] = alpha;
        for (qj, yj) in q.iter_mut().zip(y) {
            *qj -= alpha * yj;
        }
    }
    // Initial Hessian scaling from the most recent pair.
    let (s_last, y_last, _) = history.back().expect("non-empty history");
    let gamma = dot(s_last, y_last) / dot(y_last, y_last).max(f64::MIN_POSITIVE);
    for v in &mut q {
        *v *= gamma;
    }
    for (i, (s, y, rho)) in history.iter().enumerate() {
        let beta = rho * dot(y, &q);
        let alpha = alphas[i];
        for (qj, sj) in q.iter_mut().zip(s) {
            *qj += (alpha - beta) * sj;
        }
    }
    for v in &mut q {
        *v = -*v;
    }
    q
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_shifted_quadratic() {
        let f = |x: &[f64]| ((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)]);
        let out = minimize(f, &[0.0], &MinimizeOptions::default()).unwrap();
        assert!((out.x[0] - 3.0).abs() < 1e-6, "got {}", out.x[0]);
        assert!(out.converged);
    }

    #[test]
    fn zero_gradient_short_circuits() {
        let f = |x: &[f64]| ((x[0] - 3.0).powi(2), vec![2.0 * (x[0] - 3.0)]);
        let out = minimize(f, &[3.0], &MinimizeOptions::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.x, vec![3.0]);
    }

    #[test]
    fn solves_rosenbrock_within_iteration_budget() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let fx = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![
                -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                200.0 * (b - a * a),
            ];
            (fx, g)
        };
        let options = MinimizeOptions {
            max_iterations: 200,
            tolerance: 1e-14,
            gradient_tolerance: 1e-10,
            ..MinimizeOptions::default()
        };
        let out = minimize(f, &[-1.2, 1.0], &options).unwrap();
        assert!(out.iterations <= 200);
        assert!(
            (out.x[0] - 1.0).abs() < 1e-4 && (out.x[1] - 1.0).abs() < 1e-4,
            "got {:?} after {} iterations",
            out.x,
            out.iterations
        );
    }

    #[test]
    fn objective_never_increases() {
        let f = |x: &[f64]| {
            let fx = x.iter().map(|v| v.powi(4) + v.sin()).sum::<f64>();
            let g = x.iter().map(|v| 4.0 * v.powi(3) + v.cos()).collect();
            (fx, g)
        };
        let x0 = [2.0, -1.5, 0.7];
        let (f0, _) = f(&x0);
        let out = minimize(f, &x0, &MinimizeOptions::default()).unwrap();
        assert!(out.objective <= f0);
    }

    #[test]
    fn non_finite_start_reports_last_iterate() {
        let f = |x: &[f64]| (f64::NAN, vec![0.0; x.len()]);
        let err = minimize(f, &[1.0], &MinimizeOptions::default()).unwrap_err();
        match err {
            Error::Optimization { last_iterate, .. } => assert_eq!(&*last_iterate, &[1.0]),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
