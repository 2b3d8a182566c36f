//! Limited-memory BFGS with a backtracking Armijo line search, for smooth
//! convex objectives on a handful of thousand variables.

use std::collections::VecDeque;

pub(crate) struct LbfgsOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub memory: usize,
}

#[allow(dead_code)]
pub(crate) struct LbfgsOutcome {
    pub iterations: usize,
    pub grad_norm: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Minimizes `f` in place. `f(x, grad)` returns the objective and writes the gradient.
pub(crate) fn minimize(
    x: &mut [f64],
    opts: &LbfgsOptions,
    mut f: impl FnMut(&[f64], &mut [f64]) -> f64,
) -> LbfgsOutcome {
    let n = x.len();
    let mut grad = vec![0.0; n];
    let mut fx = f(x, &mut grad);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(opts.memory);
    let mut dir = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut iterations = 0;

    while iterations < opts.max_iters && inf_norm(&grad) >= opts.grad_tol {
        iterations += 1;
        // two-loop recursion
        dir.iter_mut().zip(&grad).for_each(|(d, g)| *d = -g);
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &dir);
            dir.iter_mut().zip(y).for_each(|(d, yi)| *d -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            dir.iter_mut().for_each(|d| *d *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &dir);
            dir.iter_mut().zip(s).for_each(|(d, si)| *d += (a - b) * si);
        }
        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 {
            // not a descent direction; restart from steepest descent
            history.clear();
            dir.iter_mut().zip(&grad).for_each(|(d, g)| *d = -g);
            slope = dot(&grad, &dir);
        }

        let mut step = if history.is_empty() { 1.0 / inf_norm(&grad).max(1.0) } else { 1.0 };
        let mut accepted = false;
        for _ in 0..60 {
            x_new.iter_mut().zip(x.iter()).zip(&dir).for_each(|((xn, xi), d)| *xn = xi + step * d);
            let f_new = f(&x_new, &mut g_new);
            if f_new <= fx + 1e-4 * step * slope {
                let s: Vec<f64> = x_new.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 {
                    if history.len() == opts.memory {
                        history.pop_front();
                    }
                    history.push_back((s, y, 1.0 / sy));
                }
                x.copy_from_slice(&x_new);
                grad.copy_from_slice(&g_new);
                fx = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    LbfgsOutcome { iterations, grad_norm: inf_norm(&grad) }
}
