use std::collections::VecDeque;

use super::{small_relative_decrease, FitResult, Objective, Scaled, SolverConfig, Termination};
use crate::error::Result;
use crate::models::ParamBounds;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
/// Projected-gradient tolerance, relative to `max(1, |f|)`.
pub const PG_TOL: f64 = 1e-8;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// `-H g` by the L-BFGS two-loop recursion.
fn two_loop(history: &VecDeque<Pair>, g: &[f64]) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alpha = Vec::with_capacity(history.len());
    for p in history.iter().rev() {
        let a = p.rho * dot(&p.s, &q);
        for (qi, yi) in q.iter_mut().zip(&p.y) {
            *qi -= a * yi;
        }
        alpha.push(a);
    }
    if let Some(last) = history.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for (p, a) in history.iter().zip(alpha.iter().rev()) {
        let b = p.rho * dot(&p.y, &q);
        for (qi, si) in q.iter_mut().zip(&p.s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Projected-gradient limited-memory BFGS.
///
/// Variables sitting on a bound with the gradient pushing outward are frozen for
/// the step; the remaining ones follow the L-BFGS direction, and trial points are
/// projected back into the box under an Armijo condition along the projected path.
pub fn lbfgsb(
    obj: &dyn Objective,
    bounds: &ParamBounds,
    init: &[f64],
    cfg: &SolverConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let (s, mut u) = Scaled::new(obj, bounds, init)?;
    let n = s.dim();
    let mut f = s.value(&u);
    let mut g = s.gradient(&u);
    let mut history: VecDeque<Pair> = VecDeque::with_capacity(cfg.history);
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    let projected_gradient = |u: &[f64], g: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (u[i] - g[i]).clamp(s.lower[i], s.upper[i]) - u[i])
            .collect()
    };

    while iterations < cfg.max_iterations {
        if inf_norm(&projected_gradient(&u, &g)) < PG_TOL * f.abs().max(1.0) {
            termination = Termination::ProjectedGradient;
            break;
        }
        iterations += 1;

        let binding: Vec<bool> = (0..n)
            .map(|i| {
                s.upper[i] <= s.lower[i]
                    || (u[i] <= s.lower[i] && g[i] > 0.0)
                    || (u[i] >= s.upper[i] && g[i] < 0.0)
            })
            .collect();
        let free_g: Vec<f64> = g
            .iter()
            .zip(&binding)
            .map(|(gi, b)| if *b { 0.0 } else { *gi })
            .collect();

        let mut accepted = None;
        for attempt in 0..2 {
            let mut d = if attempt == 0 && !history.is_empty() {
                two_loop(&history, &free_g)
            } else {
                free_g.iter().map(|v| -v).collect()
            };
            for (di, b) in d.iter_mut().zip(&binding) {
                if *b {
                    *di = 0.0;
                }
            }
            if dot(&d, &free_g) >= 0.0 {
                if attempt == 0 {
                    continue;
                }
                break;
            }
            let mut alpha = if history.is_empty() || attempt == 1 {
                (1.0 / inf_norm(&d)).min(1.0)
            } else {
                1.0
            };
            for _ in 0..MAX_BACKTRACKS {
                let mut trial: Vec<f64> = u.iter().zip(&d).map(|(a, di)| a + alpha * di).collect();
                s.project(&mut trial);
                let step: Vec<f64> = trial.iter().zip(&u).map(|(a, b)| a - b).collect();
                let decrease = dot(&g, &step);
                if decrease < 0.0 {
                    let ft = s.value(&trial);
                    if ft <= f + ARMIJO * decrease {
                        accepted = Some((trial, ft, step));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            history.clear();
        }

        let Some((u_new, f_new, step)) = accepted else {
            termination = Termination::LineSearchFailure;
            break;
        };
        let g_new = s.gradient(&u_new);
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&step, &y);
        if sy > f64::EPSILON * dot(&y, &y) {
            if history.len() == cfg.history {
                history.pop_front();
            }
            history.push_back(Pair {
                s: step.clone(),
                y,
                rho: 1.0 / sy,
            });
        }
        let f_old = f;
        u = u_new;
        f = f_new;
        g = g_new;
        if small_relative_decrease(f_old, f, cfg.f_tol) {
            termination = Termination::FunctionTolerance;
            break;
        }
        if inf_norm(&step) <= cfg.x_tol {
            termination = Termination::StepTolerance;
            break;
        }
    }
    Ok(s.finish(bounds, &u, f, iterations, termination))
}

#[cfg(test)]
mod tests {
    use super::super::test_problems::{bounds, check_contract};
    use super::super::FnObjective;
    use super::*;

    #[test]
    fn contract() {
        check_contract(lbfgsb, 1e-4);
    }

    #[test]
    fn interior_quadratic_exact() {
        let c = [0.25, -1.5, 3.0];
        let obj = FnObjective::new(3, move |x: &[f64]| x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum());
        let r = lbfgsb(&obj, &bounds(&[-4.0; 3], &[4.0; 3]), &[0.0; 3], &SolverConfig::default()).unwrap();
        for (p, t) in r.params.iter().zip(&c) {
            assert!((p - t).abs() < 1e-8, "{r:?}");
        }
    }

    #[test]
    fn boundary_kkt_point() {
        // Minimum at (2, 0.5) but the box stops x0 at 1.
        let obj = FnObjective::new(2, |x: &[f64]| (x[0] - 2.0).powi(2) + (x[1] - 0.5).powi(2));
        let b = bounds(&[0.0, 0.0], &[1.0, 1.0]);
        let r = lbfgsb(&obj, &b, &[0.5, 0.5], &SolverConfig::default()).unwrap();
        assert_eq!(r.params[0], 1.0);
        let g = obj.gradient(&r.params);
        let pg: Vec<f64> = (0..2)
            .map(|i| (r.params[i] - g[i]).clamp(b.lower()[i], b.upper()[i]) - r.params[i])
            .collect();
        assert!(inf_norm(&pg) < 1e-8, "{pg:?}");
    }
}
