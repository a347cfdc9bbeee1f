//! Natural cubic spline through strictly increasing knots.

use crate::error::{CestError, Result};

#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n != y.len() {
            return Err(CestError::LengthMismatch {
                expected: n,
                got: y.len(),
            });
        }
        if n < 3 {
            return Err(CestError::InvalidSpectrum(
                "a cubic spline needs at least 3 knots".into(),
            ));
        }
        if x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CestError::InvalidSpectrum(
                "spline knots must be strictly increasing".into(),
            ));
        }

        // Tridiagonal system for the interior second derivatives (Thomas algorithm).
        let mut m = vec![0.0; n];
        let inner = n - 2;
        let mut diag = vec![0.0; inner];
        let mut upper = vec![0.0; inner];
        let mut rhs = vec![0.0; inner];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            diag[i - 1] = 2.0 * (h0 + h1);
            upper[i - 1] = h1;
            rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        }
        for i in 1..inner {
            let lower = x[i + 1] - x[i];
            let w = lower / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        for i in (0..inner).rev() {
            let next = if i + 1 < inner { m[i + 2] } else { 0.0 };
            m[i + 1] = (rhs[i] - upper[i] * next) / diag[i];
        }

        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    fn segment(&self, t: f64) -> usize {
        let n = self.x.len();
        match self.x.partition_point(|&k| k <= t) {
            0 => 0,
            i if i >= n => n - 2,
            i => i - 1,
        }
    }

    /// Evaluates the spline. Outside the knot range the end cubic is extended.
    pub fn eval(&self, t: f64) -> f64 {
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_knots() {
        let x = [0.0, 0.5, 1.3, 2.0, 3.1];
        let y = [1.0, -0.2, 0.7, 0.1, 2.0];
        let s = NaturalCubicSpline::new(&x, &y).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((s.eval(*xi) - yi).abs() < 1e-12);
        }
    }

    #[test]
    fn reproduces_straight_lines() {
        let x: Vec<f64> = (0..7).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v - 1.0).collect();
        let s = NaturalCubicSpline::new(&x, &y).unwrap();
        for t in [0.05, 0.77, 1.41, 1.79] {
            assert!((s.eval(t) - (2.0 * t - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn close_to_smooth_function_on_dense_grid() {
        let x: Vec<f64> = (0..101).map(|i| -2.0 + i as f64 * 0.04).collect();
        let y: Vec<f64> = x.iter().map(|v| (1.3 * v).sin()).collect();
        let s = NaturalCubicSpline::new(&x, &y).unwrap();
        for t in [-1.5, -0.33, 0.01, 0.9, 1.77] {
            assert!((s.eval(t) - (1.3f64 * t).sin()).abs() < 1e-5);
        }
    }

    #[test]
    fn rejects_unsorted_knots() {
        assert!(NaturalCubicSpline::new(&[0.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).is_err());
    }
}
