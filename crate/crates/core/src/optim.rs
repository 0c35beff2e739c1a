//! Unconstrained minimisers used by the latency M-step.

use crate::error::{CureError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// BFGS with Armijo backtracking.
///
/// `f` returns the value and gradient. Trial points where `f` fails or is
/// non-finite are treated as infeasible and the step is shortened; an error
/// at `x0` is returned to the caller.
pub fn bfgs<F>(mut f: F, x0: &[f64], grad_tol: f64, max_iter: usize) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let dim = x0.len();
    let mut x = x0.to_vec();
    let (mut value, mut grad) = f(&x)?;
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(CureError::Numeric("objective at starting point".into()));
    }
    let identity = |scale: f64| {
        let mut h = vec![0.0; dim * dim];
        for i in 0..dim {
            h[i * dim + i] = scale;
        }
        h
    };
    let mut h_inv = identity(1.0);
    let mut fresh = true;
    let mut iterations = 0;

    while iterations < max_iter {
        let gnorm = norm(&grad);
        if gnorm < grad_tol {
            return Ok(Minimum {
                x,
                value,
                grad_norm: gnorm,
                iterations,
                converged: true,
            });
        }
        let mut dir: Vec<f64> = (0..dim)
            .map(|i| -(0..dim).map(|j| h_inv[i * dim + j] * grad[j]).sum::<f64>())
            .collect();
        let mut slope = dot(&dir, &grad);
        if slope >= 0.0 {
            h_inv = identity(1.0);
            fresh = true;
            dir = grad.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
        }
        let mut step = if fresh { (1.0 / norm(&dir)).min(1.0) } else { 1.0 };

        let mut accepted = None;
        while step > 1e-16 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            if let Ok((v, g)) = f(&trial) {
                if v.is_finite() && g.iter().all(|c| c.is_finite()) && v <= value + 1e-4 * step * slope {
                    accepted = Some((trial, v, g));
                    break;
                }
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((x_new, v_new, g_new)) = accepted else {
            if fresh {
                // no descent possible along the steepest direction
                break;
            }
            h_inv = identity(1.0);
            fresh = true;
            continue;
        };

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if fresh {
                let scale = sy / dot(&y, &y);
                h_inv = identity(scale);
            }
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..dim)
                .map(|i| (0..dim).map(|j| h_inv[i * dim + j] * y[j]).sum())
                .collect();
            let yhy = dot(&y, &hy);
            for i in 0..dim {
                for j in 0..dim {
                    h_inv[i * dim + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
            fresh = false;
        }
        x = x_new;
        value = v_new;
        grad = g_new;
    }
    let grad_norm = norm(&grad);
    Ok(Minimum {
        x,
        value,
        grad_norm,
        iterations,
        converged: grad_norm < grad_tol,
    })
}

/// Derivative-free Nelder-Mead simplex search.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], initial_step: f64, tol: f64, max_evals: usize) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let dim = x0.len();
    let mut evals = 0;
    let mut eval = |p: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(p);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for i in 0..dim {
        let mut p = x0.to_vec();
        p[i] += initial_step;
        let v = eval(&p, &mut evals);
        simplex.push((p, v));
    }
    let mut converged = false;
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[dim].1 - simplex[0].1;
        let size = simplex[1..]
            .iter()
            .map(|(p, _)| p.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.abs() <= tol && size <= tol.sqrt() {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..dim)
            .map(|k| simplex[..dim].iter().map(|(p, _)| p[k]).sum::<f64>() / dim as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let vr = eval(&xr, &mut evals);
        if vr < simplex[0].1 {
            let xe = along(2.0);
            let ve = eval(&xe, &mut evals);
            simplex[dim] = if ve < vr { (xe, ve) } else { (xr, vr) };
        } else if vr < simplex[dim - 1].1 {
            simplex[dim] = (xr, vr);
        } else {
            let (xc, vc) = if vr < simplex[dim].1 {
                let xc = along(0.5);
                let vc = eval(&xc, &mut evals);
                (xc, vc)
            } else {
                let xc = along(-0.5);
                let vc = eval(&xc, &mut evals);
                (xc, vc)
            };
            if vc < simplex[dim].1.min(vr) {
                simplex[dim] = (xc, vc);
            } else {
                let best = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    let p: Vec<f64> = best.iter().zip(&entry.0).map(|(b, q)| b + 0.5 * (q - b)).collect();
                    let v = eval(&p, &mut evals);
                    *entry = (p, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum {
        x,
        value,
        grad_norm: f64::NAN,
        iterations: evals,
        converged,
    }
}
