//! First-order update rules and a small L-BFGS minimizer.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Stateful parameter update rule.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        step: u64,
        m: Vec<f64>,
        v: Vec<f64>,
    },
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, dim: usize) -> Self {
        match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr },
            OptimizerKind::Adam => Optimizer::Adam {
                lr,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
                step: 0,
                m: vec![0.0; dim],
                v: vec![0.0; dim],
            },
        }
    }

    /// Descends along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        match self {
            Optimizer::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= *lr * g;
                }
            }
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
                step,
                m,
                v,
            } => {
                *step += 1;
                let bc1 = 1.0 - beta1.powi(*step as i32);
                let bc2 = 1.0 - beta2.powi(*step as i32);
                for k in 0..params.len() {
                    let g = grad[k];
                    m[k] = *beta1 * m[k] + (1.0 - *beta1) * g;
                    v[k] = *beta2 * v[k] + (1.0 - *beta2) * g * g;
                    let m_hat = m[k] / bc1;
                    let v_hat = v[k] / bc2;
                    params[k] -= *lr * m_hat / (v_hat.sqrt() + *eps);
                }
            }
        }
    }
}

/// Result of [`lbfgs_minimize`].
#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub iterations: usize,
    pub value: f64,
    pub grad_norm_inf: f64,
    pub converged: bool,
}

/// Maps a point to a positive diagonal preconditioner.
pub type DiagHint<'a> = dyn Fn(&[f64]) -> Vec<f64> + 'a;

/// L-BFGS with Armijo backtracking.
///
/// `eval` writes the gradient into its second argument and returns the
/// objective. `diag_hint`, when given, supplies a positive diagonal used to
/// scale the initial inverse-Hessian guess at each iteration.
pub fn lbfgs_minimize<F>(
    x: &mut [f64],
    mut eval: F,
    diag_hint: Option<&DiagHint<'_>>,
    memory: usize,
    max_iters: usize,
    grad_tol: f64,
) -> LbfgsOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut f = eval(x, &mut g);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let inf_norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let mut iterations = 0;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    while iterations < max_iters {
        if inf_norm(&g) <= grad_tol {
            break;
        }
        iterations += 1;

        // Two-loop recursion.
        let mut q = g.clone();
        let k = s_hist.len();
        let mut alpha = vec![0.0; k];
        for idx in (0..k).rev() {
            alpha[idx] = rho_hist[idx] * dot(&s_hist[idx], &q);
            axpy(-alpha[idx], &y_hist[idx], &mut q);
        }
        let gamma = if k > 0 {
            dot(&s_hist[k - 1], &y_hist[k - 1]) / dot(&y_hist[k - 1], &y_hist[k - 1])
        } else {
            1.0
        };
        match diag_hint {
            Some(h) => {
                let d = h(x);
                if k == 0 {
                    for (qi, di) in q.iter_mut().zip(&d) {
                        *qi /= di.max(1e-12);
                    }
                } else {
                    // Blend the curvature-pair scale with the diagonal shape.
                    let mean_inv = d.iter().map(|v| 1.0 / v.max(1e-12)).sum::<f64>() / n as f64;
                    let scale = gamma / mean_inv;
                    for (qi, di) in q.iter_mut().zip(&d) {
                        *qi *= scale / di.max(1e-12);
                    }
                }
            }
            None => {
                let scale = if k > 0 { gamma } else { 1.0 / inf_norm(&g).max(1.0) };
                for qi in q.iter_mut() {
                    *qi *= scale;
                }
            }
        }
        for idx in 0..k {
            let beta = rho_hist[idx] * dot(&y_hist[idx], &q);
            axpy(alpha[idx] - beta, &s_hist[idx], &mut q);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            // Not a descent direction; restart from steepest descent.
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            let scale = 1.0 / inf_norm(&g).max(1.0);
            dir = g.iter().map(|v| -v * scale).collect();
            slope = dot(&g, &dir);
        }

        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            let f_new = eval(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= f + 1e-4 * step * slope {
                let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
                let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
                let sy = dot(&s, &y);
                if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
                    if s_hist.len() == memory {
                        s_hist.remove(0);
                        y_hist.remove(0);
                        rho_hist.remove(0);
                    }
                    s_hist.push(s);
                    y_hist.push(y);
                    rho_hist.push(1.0 / sy);
                }
                x.copy_from_slice(&x_new);
                g.copy_from_slice(&g_new);
                f = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let grad_norm_inf = inf_norm(&g);
    LbfgsOutcome {
        iterations,
        value: f,
        grad_norm_inf,
        converged: grad_norm_inf <= grad_tol,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
