//! I-projection of a dyadic model onto a set of linear fairness constraints.
//!
//! For a product-Bernoulli reference `h` with logits `z`, the projection onto
//! `{p : F_c(p) = d_c}` keeps the product form and shifts each constrained
//! pair's logit by its constraint's multiplier: `h_F,ij = sigmoid(z_ij + λ_c)`.
//! The multipliers maximize the concave dual
//!
//! ```text
//! L(λ) = -sum_ij log Z_ij(λ) + sum_c λ_c d_c,   Z_ij = h_ij(0) + h_ij(1) e^{λ_c}
//! ```
//!
//! whose maximum equals `KL(h_F || h)`. Because member sets are disjoint the
//! Hessian is diagonal and every coordinate is an independent 1-D problem.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::ConstraintSystem;
use crate::numeric::{sigmoid, softplus, CompensatedSum, CHUNK};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOptions {
    /// Stop when `max_c |dL/dλ_c|` is at most this.
    pub tol: f64,
    pub max_iters: usize,
    /// Solve for λ on a uniform subsample of each constraint's members,
    /// with targets scaled by the kept fraction.
    pub subsample: Option<f64>,
    pub seed: u64,
    /// Record `(iteration, dual value, residual)` per iteration.
    pub trace: bool,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions {
            tol: 1e-8,
            max_iters: 500,
            subsample: None,
            seed: 0,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub dual_value: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub lambda: Vec<f64>,
    /// `h_F,ij(1)` for every pair of the universe.
    pub projected: Vec<f64>,
    /// `KL(h_F || h)` summed pairwise.
    pub kl: f64,
    pub dual_value: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TracePoint>,
}

/// `log Z_ij = softplus(z + λ) - softplus(z)`.
fn log_partition(z: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        0.0
    } else {
        softplus(z + lambda) - softplus(z)
    }
}

fn chunked<F>(members: &[usize], f: F) -> (f64, f64)
where
    F: Fn(usize) -> (f64, f64) + Sync,
{
    let parts: Vec<(CompensatedSum, CompensatedSum)> = members
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut a = CompensatedSum::default();
            let mut b = CompensatedSum::default();
            for &k in chunk {
                let (x, y) = f(k);
                a.add(x);
                b.add(y);
            }
            (a, b)
        })
        .collect();
    let mut a = CompensatedSum::default();
    let mut b = CompensatedSum::default();
    for (x, y) in parts {
        a.merge(x);
        b.merge(y);
    }
    (a.value(), b.value())
}

/// Member sum of `h_F(1)` and of `h_F(1) h_F(0)` at multiplier `lambda`.
fn moments(logits: &[f64], members: &[usize], lambda: f64) -> (f64, f64) {
    chunked(members, |k| {
        let z = logits[k] + lambda;
        let p = sigmoid(z);
        (p, p * sigmoid(-z))
    })
}

/// The dual objective `L(λ)`.
pub fn dual_value(logits: &[f64], system: &ConstraintSystem, targets: &[f64], lambda: &[f64]) -> f64 {
    let mut total = CompensatedSum::default();
    for (c, con) in system.constraints().iter().enumerate() {
        let (log_z, _) = chunked(&con.members, |k| (log_partition(logits[k], lambda[c]), 0.0));
        total.add(-log_z);
        total.add(lambda[c] * targets[c]);
    }
    total.value()
}

/// `dL/dλ_c = d_c - sum_{members(c)} h_F,ij(1)`.
pub fn dual_gradient(
    logits: &[f64],
    system: &ConstraintSystem,
    targets: &[f64],
    lambda: &[f64],
) -> Vec<f64> {
    system
        .constraints()
        .iter()
        .enumerate()
        .map(|(c, con)| targets[c] - moments(logits, &con.members, lambda[c]).0)
        .collect()
}

/// Projects the model with logits `logits` onto `system` with targets `targets`.
///
/// Each multiplier is found by safeguarded Newton: the exact second derivative
/// gives the step, and a bracket on the root of the (monotone) gradient falls
/// back to bisection when a step would leave it.
pub fn project(
    logits: &[f64],
    system: &ConstraintSystem,
    targets: &[f64],
    warm_start: Option<&[f64]>,
    options: &ProjectionOptions,
) -> Result<Projection> {
    assert_eq!(logits.len(), system.universe_len());
    assert_eq!(targets.len(), system.len());
    for (c, con) in system.constraints().iter().enumerate() {
        let t = targets[c];
        if !(t > 0.0 && t < con.members.len() as f64) {
            return Err(Error::InfeasibleTarget {
                index: c,
                label: con.label.clone(),
                target: t,
                members: con.members.len(),
            });
        }
    }

    // Pairs and targets the multipliers are solved on.
    let (solve_members, solve_targets): (Vec<Vec<usize>>, Vec<f64>) = match options.subsample {
        None => (
            system.constraints().iter().map(|c| c.members.clone()).collect(),
            targets.to_vec(),
        ),
        Some(rate) => {
            if !(rate > 0.0 && rate <= 1.0) {
                return Err(Error::Config(format!("subsample rate {rate} not in (0, 1]")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            system
                .constraints()
                .iter()
                .zip(targets)
                .map(|(con, &t)| {
                    let mut kept: Vec<usize> =
                        con.members.iter().copied().filter(|_| rng.gen::<f64>() < rate).collect();
                    if kept.is_empty() {
                        kept.push(con.members[rng.gen_range(0..con.members.len())]);
                    }
                    let scaled = t * kept.len() as f64 / con.members.len() as f64;
                    (kept, scaled)
                })
                .unzip()
        }
    };

    let m = system.len();
    let mut lambda = match warm_start {
        Some(l) if l.len() == m && l.iter().all(|v| v.is_finite()) => l.to_vec(),
        _ => vec![0.0; m],
    };
    let mut lo = vec![f64::NEG_INFINITY; m];
    let mut hi = vec![f64::INFINITY; m];
    let mut trace = Vec::new();

    let mut iterations = 0;
    let mut residual;
    loop {
        let stats: Vec<(f64, f64)> = solve_members
            .iter()
            .zip(&lambda)
            .map(|(members, &l)| moments(logits, members, l))
            .collect();
        let grads: Vec<f64> = stats
            .iter()
            .zip(&solve_targets)
            .map(|(&(s, _), &t)| t - s)
            .collect();
        residual = grads.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if options.trace {
            trace.push(TracePoint {
                iteration: iterations,
                dual_value: solve_dual(logits, &solve_members, &solve_targets, &lambda),
                residual,
            });
        }
        if residual <= options.tol || iterations >= options.max_iters {
            break;
        }
        iterations += 1;
        for c in 0..m {
            let g = grads[c];
            if g.abs() <= options.tol {
                continue;
            }
            if g > 0.0 {
                lo[c] = lo[c].max(lambda[c]);
            } else {
                hi[c] = hi[c].min(lambda[c]);
            }
            let curvature = stats[c].1;
            let mut step = if curvature > 0.0 { g / curvature } else { g.signum() * 8.0 };
            step = step.clamp(-8.0, 8.0);
            let mut next = lambda[c] + step;
            if !(next > lo[c] && next < hi[c]) {
                if lo[c].is_finite() && hi[c].is_finite() {
                    next = 0.5 * (lo[c] + hi[c]);
                } else if lo[c].is_finite() {
                    next = lo[c] + step.abs().max(1.0);
                } else {
                    next = hi[c] - step.abs().max(1.0);
                }
            }
            if next == lambda[c] {
                // Bracket collapsed to adjacent floats.
                continue;
            }
            lambda[c] = next;
        }
    }
    let converged = residual <= options.tol;

    let projected: Vec<f64> = (0..logits.len())
        .into_par_iter()
        .map(|k| match system.constraint_of(k) {
            Some(c) => sigmoid(logits[k] + lambda[c]),
            None => sigmoid(logits[k]),
        })
        .collect();

    let mut kl = CompensatedSum::default();
    for (c, con) in system.constraints().iter().enumerate() {
        let l = lambda[c];
        let (v, _) = chunked(&con.members, |k| {
            let z = logits[k];
            (projected[k] * l - log_partition(z, l), 0.0)
        });
        kl.add(v);
    }
    let dual = dual_value(logits, system, targets, &lambda);

    if !converged {
        return Err(Error::ProjectionNotConverged {
            iterations,
            residual,
        });
    }
    Ok(Projection {
        lambda,
        projected,
        kl: kl.value().max(0.0),
        dual_value: dual,
        dual_residual: residual,
        iterations,
        converged,
        trace,
    })
}

fn solve_dual(logits: &[f64], members: &[Vec<usize>], targets: &[f64], lambda: &[f64]) -> f64 {
    let mut total = CompensatedSum::default();
    for (c, mem) in members.iter().enumerate() {
        let (log_z, _) = chunked(mem, |k| (log_partition(logits[k], lambda[c]), 0.0));
        total.add(-log_z);
        total.add(lambda[c] * targets[c]);
    }
    total.value()
}

/// `dL_F/dlogit_ij` at fixed λ* and fixed targets: `h_ij(1) - h_F,ij(1)` on
/// constrained pairs, zero elsewhere.
pub fn fairness_grad_logits(
    projection: &Projection,
    system: &ConstraintSystem,
    logits: &[f64],
) -> Result<Vec<f64>> {
    if !projection.converged {
        return Err(Error::ProjectionNotConverged {
            iterations: projection.iterations,
            residual: projection.dual_residual,
        });
    }
    Ok((0..logits.len())
        .into_par_iter()
        .map(|k| match system.constraint_of(k) {
            Some(c) if projection.lambda[c] != 0.0 => sigmoid(logits[k]) - projection.projected[k],
            _ => 0.0,
        })
        .collect())
}

/// Extra `dL_F/dlogit_ij` from the targets' dependence on the shared
/// density: `(sum_c λ_c |members(c)|) h(1 - h) / N` on the averaging set.
pub fn density_grad_logits(
    projection: &Projection,
    system: &ConstraintSystem,
    logits: &[f64],
) -> Vec<f64> {
    let scale: f64 = system
        .constraints()
        .iter()
        .zip(&projection.lambda)
        .map(|(c, l)| l * c.members.len() as f64)
        .sum::<f64>()
        / system.averaging_size().max(1) as f64;
    (0..logits.len())
        .into_par_iter()
        .map(|k| {
            if scale != 0.0 && system.in_averaging_set(k) {
                let z = logits[k];
                scale * sigmoid(z) * sigmoid(-z)
            } else {
                0.0
            }
        })
        .collect()
}

/// Writes a projection trace as CSV (`iteration,dual_value,residual`).
pub fn write_trace_csv(trace: &[TracePoint], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for t in trace {
        w.serialize(t)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairness::{Averaging, Constraint, TargetRule};
    use crate::numeric::{bernoulli_kl, logit};

    fn single(members: Vec<usize>, n: usize, target: f64) -> (ConstraintSystem, Vec<f64>) {
        let sys = ConstraintSystem::custom(
            n,
            vec![Constraint {
                label: "c".into(),
                group_pair: None,
                members,
            }],
            TargetRule::Fixed(vec![target]),
        )
        .unwrap();
        (sys, vec![target])
    }

    #[test]
    fn dual_is_zero_at_zero_multipliers() {
        let (sys, t) = single(vec![0, 1, 2], 3, 1.2);
        let z = [logit(0.1), logit(0.5), logit(0.9)];
        assert_eq!(dual_value(&z, &sys, &t, &[0.0]), 0.0);
    }

    #[test]
    fn single_pair_dual_equals_bernoulli_kl() {
        let (sys, t) = single(vec![0], 1, 0.7);
        let z = [logit(0.2)];
        let l = logit(0.7) - logit(0.2);
        assert!((l - 2.2336).abs() < 1e-4);
        let v = dual_value(&z, &sys, &t, &[l]);
        assert!((v - bernoulli_kl(0.7, 0.2)).abs() < 1e-12);
        assert!((v - 0.5827).abs() < 1e-4);
    }

    #[test]
    fn gradient_at_zero_is_target_minus_mass() {
        let (sys, t) = single(vec![0, 1], 2, 0.8);
        let z = [logit(0.2), logit(0.6)];
        let g = dual_gradient(&z, &sys, &t, &[0.0]);
        assert!(g[0].abs() < 1e-15);
    }

    #[test]
    fn equal_marginals_project_to_target_rate() {
        let k = 6;
        let (p, q) = (0.3, 0.55);
        let (sys, t) = single((0..k).collect(), k, q * k as f64);
        let z = vec![logit(p); k];
        let proj = project(&z, &sys, &t, None, &ProjectionOptions::default()).unwrap();
        assert!((proj.lambda[0] - (logit(q) - logit(p))).abs() < 1e-9);
        for v in &proj.projected {
            assert!((v - q).abs() < 1e-9);
        }
        assert!((proj.kl - k as f64 * bernoulli_kl(q, p)).abs() < 1e-9);
    }

    #[test]
    fn fair_model_has_zero_multipliers() {
        let z = [logit(0.2), logit(0.4), logit(0.3), logit(0.3)];
        let sys = ConstraintSystem::custom(
            4,
            vec![
                Constraint {
                    label: "a".into(),
                    group_pair: None,
                    members: vec![0, 1],
                },
                Constraint {
                    label: "b".into(),
                    group_pair: None,
                    members: vec![2, 3],
                },
            ],
            TargetRule::SharedDensity {
                averaging: Averaging::Universe,
            },
        )
        .unwrap();
        let m: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        let t = sys.targets_from_marginals(&m);
        let proj = project(&z, &sys, &t.values, None, &ProjectionOptions::default()).unwrap();
        assert_eq!(proj.iterations, 0);
        assert_eq!(proj.lambda, vec![0.0, 0.0]);
        assert_eq!(proj.kl, 0.0);
        let w = fairness_grad_logits(&proj, &sys, &z).unwrap();
        assert!(w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pair_weight_pushes_toward_target() {
        let (sys, t) = single(vec![0], 1, 0.7);
        let z = [logit(0.2)];
        let proj = project(&z, &sys, &t, None, &ProjectionOptions::default()).unwrap();
        let w = fairness_grad_logits(&proj, &sys, &z).unwrap();
        assert!((w[0] + 0.5).abs() < 1e-9);
    }

    #[test]
    fn infeasible_target_names_constraint() {
        let (sys, t) = single(vec![0, 1], 2, 2.0);
        let err = project(&[0.0, 0.0], &sys, &t, None, &ProjectionOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InfeasibleTarget { index: 0, .. }));
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let (sys, t) = single(vec![0, 1, 2], 3, 2.9);
        let z = [logit(0.01); 3];
        let opts = ProjectionOptions {
            max_iters: 1,
            ..Default::default()
        };
        let err = project(&z, &sys, &t, None, &opts).unwrap_err();
        assert!(matches!(err, Error::ProjectionNotConverged { iterations: 1, .. }));
    }

    #[test]
    fn saturated_logits_still_converge() {
        let (sys, t) = single(vec![0, 1], 2, 1.0);
        let z = [-16.0, -15.0];
        let proj = project(&z, &sys, &t, None, &ProjectionOptions::default()).unwrap();
        assert!(proj.dual_residual <= 1e-8);
    }

    #[test]
    fn warm_start_at_optimum_takes_no_steps() {
        let (sys, t) = single(vec![0, 1, 2], 3, 1.5);
        let z = [logit(0.1), logit(0.2), logit(0.3)];
        let opts = ProjectionOptions::default();
        let cold = project(&z, &sys, &t, None, &opts).unwrap();
        let warm = project(&z, &sys, &t, Some(&cold.lambda), &opts).unwrap();
        assert!(cold.iterations > 0);
        assert_eq!(warm.iterations, 0);
    }

    #[test]
    fn trace_records_each_iteration() {
        let (sys, t) = single(vec![0, 1], 2, 1.5);
        let z = [logit(0.1), logit(0.2)];
        let opts = ProjectionOptions {
            trace: true,
            ..Default::default()
        };
        let p = project(&z, &sys, &t, None, &opts).unwrap();
        assert_eq!(p.trace.len(), p.iterations + 1);
        assert_eq!(p.trace[0].dual_value, 0.0);
        assert!(p.trace.last().unwrap().residual <= 1e-8);
    }

    #[test]
    fn subsampled_solve_scales_targets() {
        let n = 2000;
        let (sys, t) = single((0..n).collect(), n, 0.4 * n as f64);
        let z = vec![logit(0.1); n];
        let opts = ProjectionOptions {
            subsample: Some(0.25),
            seed: 3,
            ..Default::default()
        };
        let p = project(&z, &sys, &t, None, &opts).unwrap();
        // Equal marginals make the subsampled solution exact.
        assert!((p.projected[0] - 0.4).abs() < 1e-9);
    }
}
