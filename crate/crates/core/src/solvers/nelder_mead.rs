use super::{small_relative_decrease, FitResult, Objective, Scaled, SolverConfig, Termination};
use crate::error::Result;
use crate::models::ParamBounds;

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;
/// Edge length of the initial simplex in normalized coordinates.
const INITIAL_STEP: f64 = 0.1;
/// A converged simplex is rebuilt around its best vertex this many times at most;
/// simplices collapse prematurely on curved valleys.
const MAX_RESTARTS: usize = 3;

/// Downhill simplex with trial vertices projected onto the box.
pub fn nelder_mead(
    obj: &dyn Objective,
    bounds: &ParamBounds,
    init: &[f64],
    cfg: &SolverConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let (s, u0) = Scaled::new(obj, bounds, init)?;
    let n = s.dim();

    let mut best = u0.clone();
    let mut f_best = s.value(&best);
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    for restart in 0..=MAX_RESTARTS {
        let mut simplex = vec![best.clone()];
        for i in 0..n {
            let mut v = best.clone();
            let step = if v[i] + INITIAL_STEP <= s.upper[i] { INITIAL_STEP } else { -INITIAL_STEP };
            v[i] += step;
            s.project(&mut v);
            simplex.push(v);
        }
        let mut fs: Vec<f64> = std::iter::once(f_best)
            .chain(simplex[1..].iter().map(|v| s.value(v)))
            .collect();

        termination = Termination::MaxIterations;
        while iterations < cfg.max_iterations {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            fs = order.iter().map(|&i| fs[i]).collect();

            let spread = fs[n] - fs[0];
            if spread <= cfg.f_tol * fs[0].abs().max(f64::MIN_POSITIVE) {
                termination = Termination::FunctionTolerance;
                break;
            }
            let x_spread = simplex[1..]
                .iter()
                .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if x_spread <= cfg.x_tol {
                termination = Termination::StepTolerance;
                break;
            }
            iterations += 1;

            let mut centroid = vec![0.0; n];
            for v in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / n as f64;
                }
            }
            let towards = |coef: f64| {
                let mut p: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[n])
                    .map(|(c, w)| c + coef * (c - w))
                    .collect();
                s.project(&mut p);
                p
            };

            let xr = towards(REFLECT);
            let fr = s.value(&xr);
            if fr < fs[0] {
                let xe = towards(REFLECT * EXPAND);
                let fe = s.value(&xe);
                if fe < fr {
                    simplex[n] = xe;
                    fs[n] = fe;
                } else {
                    simplex[n] = xr;
                    fs[n] = fr;
                }
                continue;
            }
            if fr < fs[n - 1] {
                simplex[n] = xr;
                fs[n] = fr;
                continue;
            }
            let (xc, fc) = if fr < fs[n] {
                let xc = towards(REFLECT * CONTRACT);
                let fc = s.value(&xc);
                (xc, (fc <= fr).then_some(fc))
            } else {
                let xc = towards(-CONTRACT);
                let fc = s.value(&xc);
                (xc, (fc < fs[n]).then_some(fc))
            };
            if let Some(fc) = fc {
                simplex[n] = xc;
                fs[n] = fc;
                continue;
            }
            for i in 1..=n {
                let shrunk: Vec<f64> = simplex[0]
                    .iter()
                    .zip(&simplex[i])
                    .map(|(b, v)| b + SHRINK * (v - b))
                    .collect();
                fs[i] = s.value(&shrunk);
                simplex[i] = shrunk;
            }
        }

        let i_min = (0..=n).min_by(|&a, &b| fs[a].total_cmp(&fs[b])).unwrap_or(0);
        let improved = !small_relative_decrease(f_best, fs[i_min], cfg.f_tol);
        if fs[i_min] <= f_best {
            best = simplex[i_min].clone();
            f_best = fs[i_min];
        }
        if termination == Termination::MaxIterations || (restart > 0 && !improved) {
            break;
        }
    }
    Ok(s.finish(bounds, &best, f_best, iterations, termination))
}

#[cfg(test)]
mod tests {
    use super::super::test_problems::check_contract;
    use super::*;

    #[test]
    fn contract() {
        check_contract(nelder_mead, 1e-4);
    }
}
