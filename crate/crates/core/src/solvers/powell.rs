use super::{FitResult, Objective, Scaled, SolverConfig, Termination};
use crate::error::Result;
use crate::models::ParamBounds;

const GOLDEN: f64 = 0.381_966_011_250_105_1;
const LINE_MAX_ITER: usize = 500;

/// Brent's bounded scalar minimization on `[a, b]` (golden section with
/// parabolic steps). Returns `(t, f(t))`.
fn brent_bounded(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, xtol: f64) -> (f64, f64) {
    let sqrt_eps = f64::EPSILON.sqrt();
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);

    for _ in 0..LINE_MAX_ITER {
        let m = 0.5 * (a + b);
        let tol1 = sqrt_eps * x.abs() + xtol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = x + if d.abs() >= tol1 { d } else { tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, fv, w, fw, x, fx) = (w, fw, x, fx, u, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, fv, w, fw) = (w, fw, u, fu);
            } else if fu <= fv || v == x || v == w {
                (v, fv) = (u, fu);
            }
        }
    }
    (x, fx)
}

/// Minimizes along `dir` from `u` inside the box; returns the new point and value
/// only if they improve on `f0`.
fn line_search(s: &Scaled, u: &[f64], f0: f64, dir: &[f64], xtol: f64) -> Option<(Vec<f64>, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for j in 0..u.len() {
        if dir[j] != 0.0 {
            let a = (s.lower[j] - u[j]) / dir[j];
            let b = (s.upper[j] - u[j]) / dir[j];
            lo = lo.max(a.min(b));
            hi = hi.min(a.max(b));
        }
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return None;
    }
    let point = |t: f64| {
        let mut p: Vec<f64> = u.iter().zip(dir).map(|(a, d)| a + t * d).collect();
        s.project(&mut p);
        p
    };
    let (mut t, mut ft) = brent_bounded(|t| s.value(&point(t)), lo, hi, xtol);
    // Brent never samples the interval ends; an optimum on the box face needs them.
    let near = 2.0 * (f64::EPSILON.sqrt() * t.abs() + xtol);
    for end in [lo, hi] {
        if (t - end).abs() <= near && t != end {
            let fe = s.value(&point(end));
            if fe <= ft {
                (t, ft) = (end, fe);
            }
        }
    }
    (ft < f0).then(|| (point(t), ft))
}

/// Powell's conjugate-direction method with bounded line searches.
pub fn powell(
    obj: &dyn Objective,
    bounds: &ParamBounds,
    init: &[f64],
    cfg: &SolverConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let (s, mut u) = Scaled::new(obj, bounds, init)?;
    let n = s.dim();
    let coordinate_dirs = || -> Vec<Vec<f64>> {
        (0..n)
            .filter(|&i| s.upper[i] > s.lower[i])
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect()
    };
    let mut dirs = coordinate_dirs();
    // Set when the direction set was just reset; a stall right after a reset is final.
    let mut fresh = true;
    let line_tol = cfg.x_tol.max(1e-12);

    let mut f = s.value(&u);
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let (f_start, u_start) = (f, u.clone());
        let (mut biggest, mut big_i) = (0.0, 0);
        for (i, dir) in dirs.iter().enumerate() {
            if let Some((p, fp)) = line_search(&s, &u, f, dir, line_tol) {
                if f - fp > biggest {
                    biggest = f - fp;
                    big_i = i;
                }
                u = p;
                f = fp;
            }
        }
        let step: Vec<f64> = u.iter().zip(&u_start).map(|(a, b)| a - b).collect();
        let step_norm = step.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        let stalled_f = 2.0 * (f_start - f) <= cfg.f_tol * (f_start.abs() + f.abs()) + f64::MIN_POSITIVE;
        if stalled_f || step_norm <= cfg.x_tol {
            if fresh {
                termination = if stalled_f {
                    Termination::FunctionTolerance
                } else {
                    Termination::StepTolerance
                };
                break;
            }
            // Directions built up against a bound can lose rank; start over from
            // the coordinate axes before giving up.
            dirs = coordinate_dirs();
            fresh = true;
            continue;
        }
        fresh = false;
        let mut extrapolated: Vec<f64> = u.iter().zip(&step).map(|(a, d)| a + d).collect();
        s.project(&mut extrapolated);
        let fe = s.value(&extrapolated);
        if fe < f_start {
            let t = 2.0 * (f_start - 2.0 * f + fe) * (f_start - f - biggest).powi(2)
                - biggest * (f_start - fe).powi(2);
            if t < 0.0 {
                let dir: Vec<f64> = step.iter().map(|v| v / step_norm).collect();
                if let Some((p, fp)) = line_search(&s, &u, f, &dir, line_tol) {
                    u = p;
                    f = fp;
                }
                let last = dirs.len() - 1;
                dirs[big_i] = dirs[last].clone();
                dirs[last] = dir;
            }
        }
    }
    Ok(s.finish(bounds, &u, f, iterations, termination))
}
