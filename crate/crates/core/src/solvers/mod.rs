//! Box-constrained minimizers for the squared-error fitting objective.
//!
//! All three solvers work internally in normalized coordinates
//! `u = (x - center) / deviation`, so every parameter lives in `[-1, 1]`
//! regardless of its physical scale (f/R1a ~ 1e-3 next to k ~ 1e3).

mod lbfgsb;
mod nelder_mead;
mod powell;

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CestError, Result};
use crate::models::{JacobianMode, ModelInputs, ModelProblem, ParamBounds, FD_RELATIVE_STEP};
use crate::spectrum::SpectrumSet;

pub use lbfgsb::lbfgsb;
pub use nelder_mead::nelder_mead;
pub use powell::powell;

/// A scalar function to minimize.
pub trait Objective {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// Gradient at `x`; central differences unless overridden.
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        let mut p = x.to_vec();
        for j in 0..x.len() {
            let h = FD_RELATIVE_STEP * x[j].abs().max(1.0);
            p[j] = x[j] + h;
            let hi = self.value(&p);
            p[j] = x[j] - h;
            let lo = self.value(&p);
            p[j] = x[j];
            g[j] = (hi - lo) / (2.0 * h);
        }
        g
    }
}

/// Adapts a closure; handy for tests and ad-hoc problems.
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Sum of squared residuals between a model and its target data.
pub struct LeastSquares<'a> {
    problem: &'a ModelProblem,
    inputs: ModelInputs,
    target: Vec<f64>,
    jacobian: JacobianMode,
    evals: Cell<usize>,
}

impl<'a> LeastSquares<'a> {
    pub fn new(
        problem: &'a ModelProblem,
        inputs: ModelInputs,
        target: Vec<f64>,
        jacobian: JacobianMode,
    ) -> Result<Self> {
        if target.len() != inputs.output_len() {
            return Err(CestError::LengthMismatch {
                expected: inputs.output_len(),
                got: target.len(),
            });
        }
        Ok(Self {
            problem,
            inputs,
            target,
            jacobian,
            evals: Cell::new(0),
        })
    }

    /// Objective for one spectrum set, with the model's default gradient source.
    pub fn for_set(problem: &'a ModelProblem, set: &SpectrumSet) -> Result<Self> {
        let (inputs, target) = problem.data_for(set)?;
        Self::new(problem, inputs, target, problem.default_jacobian())
    }

    pub fn with_jacobian(mut self, mode: JacobianMode) -> Self {
        self.jacobian = mode;
        self
    }

    pub fn jacobian_mode(&self) -> JacobianMode {
        self.jacobian
    }

    /// Model evaluations so far (a Jacobian counts as one).
    pub fn evaluations(&self) -> usize {
        self.evals.get()
    }

    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.problem.evaluate(x, &self.inputs);
        for (ri, t) in r.iter_mut().zip(&self.target) {
            *ri -= t;
        }
        r
    }
}

impl Objective for LeastSquares<'_> {
    fn dim(&self) -> usize {
        self.problem.bounds().len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.evals.set(self.evals.get() + 1);
        self.residuals(x).iter().map(|r| r * r).sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.evals.set(self.evals.get() + 1);
        let r = self.residuals(x);
        let jac = self.problem.jacobian(x, &self.inputs, self.jacobian);
        jac.transpose_mul(&r).into_iter().map(|g| 2.0 * g).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Relative objective decrease below which a solver stops.
    pub f_tol: f64,
    /// Step size (normalized coordinates) below which a solver stops.
    pub x_tol: f64,
    /// Correction pairs kept by the quasi-Newton solver.
    pub history: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            f_tol: 1e-9,
            x_tol: 1e-9,
            history: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || !(self.f_tol > 0.0) || !(self.x_tol > 0.0) || self.history == 0 {
            return Err(CestError::InvalidConfig(format!("invalid solver settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    FunctionTolerance,
    StepTolerance,
    ProjectedGradient,
    MaxIterations,
    LineSearchFailure,
}

impl Termination {
    pub fn converged(self) -> bool {
        !matches!(self, Termination::MaxIterations | Termination::LineSearchFailure)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<f64>,
    pub objective_value: f64,
    pub iterations: usize,
    pub function_evals: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Gradient source, for gradient-based solvers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<JacobianMode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    NelderMead,
    Powell,
    Lbfgsb,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::NelderMead, SolverKind::Powell, SolverKind::Lbfgsb];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::NelderMead => "nelder-mead",
            SolverKind::Powell => "powell",
            SolverKind::Lbfgsb => "lbfgsb",
        }
    }

    pub fn run(
        self,
        obj: &dyn Objective,
        bounds: &ParamBounds,
        init: &[f64],
        cfg: &SolverConfig,
    ) -> Result<FitResult> {
        match self {
            SolverKind::NelderMead => nelder_mead(obj, bounds, init, cfg),
            SolverKind::Powell => powell(obj, bounds, init, cfg),
            SolverKind::Lbfgsb => lbfgsb(obj, bounds, init, cfg),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = CestError;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| CestError::InvalidConfig(format!("unknown solver '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Start from the centre of the bounds.
    #[default]
    Center,
    /// Start from a uniformly drawn point of the box.
    Random { seed: u64 },
}

/// Fits `problem` to one spectrum set.
pub fn fit(
    problem: &ModelProblem,
    set: &SpectrumSet,
    solver: SolverKind,
    cfg: &SolverConfig,
    init: InitMode,
) -> Result<FitResult> {
    let obj = LeastSquares::for_set(problem, set)?;
    let bounds = problem.bounds();
    let x0 = match init {
        InitMode::Center => bounds.center.clone(),
        InitMode::Random { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            bounds
                .center
                .iter()
                .zip(&bounds.deviation)
                .map(|(c, d)| c + d * rng.random_range(-1.0..=1.0))
                .collect()
        }
    };
    let mut result = solver.run(&obj, bounds, &x0, cfg)?;
    result.function_evals = obj.evaluations();
    if solver == SolverKind::Lbfgsb {
        result.gradient = Some(obj.jacobian_mode());
    }
    Ok(result)
}

/// Affine map between a parameter box and normalized coordinates in `[-1, 1]`.
/// Parameters with zero deviation map to the single point 0.
pub(crate) struct Scaled<'a> {
    obj: &'a dyn Objective,
    center: Vec<f64>,
    scale: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub evals: Cell<usize>,
}

impl<'a> Scaled<'a> {
    pub fn new(obj: &'a dyn Objective, bounds: &ParamBounds, init: &[f64]) -> Result<(Self, Vec<f64>)> {
        if obj.dim() != bounds.len() {
            return Err(CestError::LengthMismatch {
                expected: bounds.len(),
                got: obj.dim(),
            });
        }
        if init.len() != bounds.len() {
            return Err(CestError::LengthMismatch {
                expected: bounds.len(),
                got: init.len(),
            });
        }
        if !bounds.contains(init, 1e-12 * bounds.deviation.iter().fold(1.0, |a: f64, d| a.max(*d))) {
            return Err(CestError::InvalidBounds("initial point lies outside the box".into()));
        }
        let scale: Vec<f64> = bounds.deviation.iter().map(|&d| if d > 0.0 { d } else { 1.0 }).collect();
        let (lower, upper) = bounds
            .deviation
            .iter()
            .map(|&d| if d > 0.0 { (-1.0, 1.0) } else { (0.0, 0.0) })
            .unzip();
        let s = Self {
            obj,
            center: bounds.center.clone(),
            scale,
            lower,
            upper,
            evals: Cell::new(0),
        };
        let mut u0 = s.to_unit(init);
        s.project(&mut u0);
        Ok((s, u0))
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(v, (c, s))| (v - c) / s)
            .collect()
    }

    pub fn to_param(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(v, (c, s))| c + s * v)
            .collect()
    }

    pub fn project(&self, u: &mut [f64]) {
        for (v, (lo, hi)) in u.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        self.evals.set(self.evals.get() + 1);
        let f = self.obj.value(&self.to_param(u));
        if f.is_nan() {
            f64::INFINITY
        } else {
            f
        }
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        self.evals.set(self.evals.get() + 1);
        let mut g = self.obj.gradient(&self.to_param(u));
        for (gi, s) in g.iter_mut().zip(&self.scale) {
            *gi *= s;
        }
        g
    }

    pub fn finish(
        &self,
        bounds: &ParamBounds,
        u: &[f64],
        f: f64,
        iterations: usize,
        termination: Termination,
    ) -> FitResult {
        let mut params = self.to_param(u);
        bounds.clamp(&mut params);
        FitResult {
            params,
            objective_value: f,
            iterations,
            function_evals: self.evals.get(),
            converged: termination.converged(),
            termination,
            gradient: None,
        }
    }
}

/// `true` when the relative decrease from `old` to `new` is below `tol`.
pub(crate) fn small_relative_decrease(old: f64, new: f64, tol: f64) -> bool {
    old - new <= tol * old.abs().max(new.abs()).max(f64::MIN_POSITIVE)
}


#[cfg(test)]
mod tests {
    use super::test_problems::*;
    use super::*;

    #[test]
    fn rejects_infeasible_start() {
        let b = bounds(&[0.0], &[1.0]);
        let obj = FnObjective::new(1, |x: &[f64]| x[0]);
        for kind in SolverKind::ALL {
            assert!(kind.run(&obj, &b, &[1.5], &SolverConfig::default()).is_err());
        }
    }

    #[test]
    fn solver_names_round_trip() {
        for kind in SolverKind::ALL {
            assert_eq!(kind.name().parse::<SolverKind>().unwrap(), kind);
        }
        assert!("bfgs".parse::<SolverKind>().is_err());
    }
}
