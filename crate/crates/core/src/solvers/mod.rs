//! Recovery of `(Qs, Qv)` from measurements.
//!
//! All solvers minimise
//!
//! ```text
//! lambda |Qv|_1 + r/2 |F(Qs + Qv) - d|^2,  Qs in C1, Qv in C1^c, both >= 0
//! ```
//!
//! (or the cardinality-constrained variant). In approximate mode the data
//! term is replaced by `r/2 |Qs + Qv - G|^2` with `G = Re(F^H d)`
//! computed once, which is what makes each iteration `O(MN)`.

mod admm;
mod cg;
mod line_search;
mod proximal;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{GradientMode, LiftedOperator, Measurements};
use crate::psr::{frobenius, PsrMatrix};

pub use line_search::{backtracking_line_search, Backtracking};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    #[default]
    Pgd,
    Fista,
    Admm,
    Nonconvex,
}

impl Solver {
    pub const ALL: [Solver; 4] = [Solver::Pgd, Solver::Fista, Solver::Admm, Solver::Nonconvex];

    pub fn name(&self) -> &'static str {
        match self {
            Solver::Pgd => "pgd",
            Solver::Fista => "fista",
            Solver::Admm => "admm",
            Solver::Nonconvex => "nonconvex",
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Solver::ALL
            .into_iter()
            .find(|v| v.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown solver '{s}'")))
    }
}

/// Soft-threshold level used by the proximal-gradient solvers for step
/// size `alpha`: `lambda / alpha` (`Inverse`) or `lambda * alpha`
/// (`Standard`, the prox of `lambda |.|_1`). Equal when `alpha = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdConvention {
    #[default]
    Inverse,
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub lambda: f64,
    pub r: f64,
    /// Initial FISTA momentum parameter.
    pub t0: f64,
    /// First trial step of every line search; `1 / r` when unset.
    pub alpha0: Option<f64>,
    /// Stop once `|d - F(Qs + Qv)| <= delta`.
    pub delta: f64,
    pub max_iters: usize,
    pub gradient_mode: GradientMode,
    pub k_cardinality: Option<usize>,
    pub armijo_beta: f64,
    /// Sufficient-decrease constant of the plain gradient line search; the
    /// proximal solvers test the quadratic upper bound instead.
    pub armijo_c: f64,
    pub alpha_min: f64,
    pub threshold_convention: ThresholdConvention,
    /// Residual evaluation period in approximate mode; 0 evaluates only
    /// at termination.
    pub check_every: usize,
    /// Relative tolerance and iteration cap of the conjugate-gradient
    /// solve in exact-mode ADMM.
    pub cg_tol: f64,
    pub cg_max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.2,
            r: 1.0,
            t0: 1.0,
            alpha0: None,
            delta: 0.0,
            max_iters: 100,
            gradient_mode: GradientMode::Approximate,
            k_cardinality: None,
            armijo_beta: 0.5,
            armijo_c: 1e-4,
            alpha_min: 1e-12,
            threshold_convention: ThresholdConvention::Inverse,
            check_every: 10,
            cg_tol: 1e-6,
            cg_max_iters: 200,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, solver: Solver) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be finite and nonnegative, got {}", self.lambda));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return bad(format!("r must be positive, got {}", self.r));
        }
        if !(self.t0 >= 1.0) {
            return bad(format!("t0 must be at least 1, got {}", self.t0));
        }
        if let Some(a) = self.alpha0 {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("alpha0 must be positive, got {a}"));
            }
        }
        if !(self.delta >= 0.0) {
            return bad(format!("delta must be nonnegative, got {}", self.delta));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.armijo_beta > 0.0 && self.armijo_beta < 1.0) {
            return bad(format!("armijo_beta must lie in (0, 1), got {}", self.armijo_beta));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad(format!("armijo_c must lie in (0, 1), got {}", self.armijo_c));
        }
        if !(self.alpha_min > 0.0) {
            return bad("alpha_min must be positive".into());
        }
        if !(self.cg_tol > 0.0) || self.cg_max_iters == 0 {
            return bad("cg_tol must be positive and cg_max_iters at least 1".into());
        }
        if solver == Solver::Nonconvex && self.k_cardinality.is_none() {
            return bad("the nonconvex solver needs k_cardinality".into());
        }
        Ok(())
    }

    pub fn alpha_start(&self) -> f64 {
        self.alpha0.unwrap_or(1.0 / self.r)
    }

    pub(crate) fn backtracking(&self) -> Backtracking {
        Backtracking {
            beta: self.armijo_beta,
            c: self.armijo_c,
            alpha_min: self.alpha_min,
        }
    }

    pub(crate) fn threshold(&self, alpha: f64) -> f64 {
        match self.threshold_convention {
            ThresholdConvention::Inverse => self.lambda / alpha,
            ThresholdConvention::Standard => self.lambda * alpha,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecoveryResult {
    pub solver: Solver,
    pub q_s: PsrMatrix,
    pub q_nu: PsrMatrix,
    /// `|d - F(Qs + Qv)|` after each iteration; `None` where it was not
    /// evaluated (approximate mode between checks).
    pub residual_history: Vec<Option<f64>>,
    /// `|Q_true - (Qs + Qv)|_F` after each iteration, when the truth is known.
    pub error_history: Option<Vec<f64>>,
    /// Penalty objective `lambda |Qv|_1 + r/2 |F(Qs + Qv) - d|^2` where the
    /// residual is known.
    pub objective_history: Vec<Option<f64>>,
    /// Accepted step size per iteration (`1 / r` for ADMM).
    pub step_sizes: Vec<f64>,
    /// `|Q - Qs - Qv|_F` per iteration; ADMM only.
    pub primal_residual_history: Vec<f64>,
    /// Wall time of each iteration in seconds, excluding residual checks.
    pub iteration_times: Vec<f64>,
    pub iterations: usize,
    /// True when the run stopped on the residual tolerance.
    pub converged: bool,
}

impl RecoveryResult {
    pub fn estimate(&self) -> Array2<f64> {
        self.q_s.values() + self.q_nu.values()
    }

    pub fn final_residual(&self) -> Option<f64> {
        self.residual_history.iter().rev().flatten().next().copied()
    }

    pub fn final_error(&self) -> Option<f64> {
        self.error_history.as_ref().and_then(|h| h.last().copied())
    }

    /// First 1-based iteration whose error is at most `level`.
    pub fn iterations_to_error(&self, level: f64) -> Option<usize> {
        self.error_history
            .as_ref()?
            .iter()
            .position(|&e| e <= level)
            .map(|i| i + 1)
    }
}

/// Measurements, operator, cached backprojection, and optional truth.
#[derive(Debug, Clone)]
pub struct RecoveryProblem<'a> {
    op: &'a LiftedOperator,
    d: &'a Measurements,
    backprojection: Array2<f64>,
    truth: Option<Array2<f64>>,
}

impl<'a> RecoveryProblem<'a> {
    /// Computes `G = Re(F^H d)` once.
    pub fn new(op: &'a LiftedOperator, d: &'a Measurements) -> Result<Self> {
        let backprojection = op.adjoint_real(d)?;
        Ok(Self {
            op,
            d,
            backprojection,
            truth: None,
        })
    }

    /// Uses a precomputed `G` instead of evaluating the adjoint.
    pub fn with_backprojection(op: &'a LiftedOperator, d: &'a Measurements, g: Array2<f64>) -> Result<Self> {
        if g.dim() != op.shape() {
            return Err(Error::ShapeMismatch {
                expected: op.shape(),
                got: g.dim(),
            });
        }
        if d.n_slow() != op.n_slow() || d.n_freq() != op.n_freq() {
            return Err(Error::LengthMismatch {
                expected: op.measurement_count(),
                got: d.len(),
            });
        }
        Ok(Self {
            op,
            d,
            backprojection: g,
            truth: None,
        })
    }

    pub fn with_truth(mut self, truth: &PsrMatrix) -> Result<Self> {
        if truth.shape() != self.op.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.op.shape(),
                got: truth.shape(),
            });
        }
        self.truth = Some(truth.values().clone());
        Ok(self)
    }

    pub fn operator(&self) -> &LiftedOperator {
        self.op
    }

    pub fn measurements(&self) -> &Measurements {
        self.d
    }

    pub fn backprojection(&self) -> &Array2<f64> {
        &self.backprojection
    }

    pub fn stationary_index(&self) -> usize {
        self.op.stationary_index()
    }

    pub fn solve(&self, solver: Solver, cfg: &SolverConfig) -> Result<RecoveryResult> {
        cfg.validate(solver)?;
        match solver {
            Solver::Pgd => proximal::run(self, cfg, solver, proximal::Prox::Soft, false),
            Solver::Fista => proximal::run(self, cfg, solver, proximal::Prox::Soft, true),
            Solver::Nonconvex => {
                let k = cfg.k_cardinality.expect("validated");
                proximal::run(self, cfg, solver, proximal::Prox::TopK(k), false)
            }
            Solver::Admm => admm::run(self, cfg),
        }
    }

    /// `|d - F(S)|`.
    pub fn residual_norm(&self, s: &Array2<f64>) -> Result<f64> {
        Ok(self.op.forward(s)?.sub(self.d)?.norm())
    }

    pub(crate) fn error(&self, s: &Array2<f64>) -> Option<f64> {
        self.truth.as_ref().map(|t| frobenius(&(t - s)))
    }
}

/// Per-run bookkeeping shared by all solvers.
pub(crate) struct History {
    residual: Vec<Option<f64>>,
    error: Option<Vec<f64>>,
    objective: Vec<Option<f64>>,
    steps: Vec<f64>,
    primal: Vec<f64>,
    times: Vec<f64>,
    started: Instant,
}

impl History {
    pub(crate) fn new(problem: &RecoveryProblem<'_>) -> Self {
        Self {
            residual: Vec::new(),
            error: problem.truth.as_ref().map(|_| Vec::new()),
            objective: Vec::new(),
            steps: Vec::new(),
            primal: Vec::new(),
            times: Vec::new(),
            started: Instant::now(),
        }
    }

    pub(crate) fn start_iteration(&mut self) {
        self.started = Instant::now();
    }

    pub(crate) fn end_iteration(&mut self, step: f64) {
        self.times.push(self.started.elapsed().as_secs_f64());
        self.steps.push(step);
    }

    pub(crate) fn record(
        &mut self,
        problem: &RecoveryProblem<'_>,
        s: &Array2<f64>,
        residual: Option<f64>,
        cfg: &SolverConfig,
    ) {
        if let Some(e) = self.error.as_mut() {
            e.push(problem.error(s).expect("truth present"));
        }
        self.residual.push(residual);
        self.objective.push(residual.map(|res| {
            let nu_s = problem.stationary_index();
            let l1: f64 = s
                .outer_iter()
                .enumerate()
                .filter(|(row, _)| *row != nu_s)
                .map(|(_, v)| v.iter().map(|x| x.abs()).sum::<f64>())
                .sum();
            cfg.lambda * l1 + 0.5 * cfg.r * res * res
        }));
    }

    pub(crate) fn push_primal(&mut self, value: f64) {
        self.primal.push(value);
    }

    /// Fills the last residual slot if it was skipped.
    pub(crate) fn finish(
        mut self,
        problem: &RecoveryProblem<'_>,
        solver: Solver,
        s: Array2<f64>,
        cfg: &SolverConfig,
        converged: bool,
    ) -> Result<RecoveryResult> {
        if let Some(None) = self.residual.last() {
            let res = problem.residual_norm(&s)?;
            self.residual.pop();
            self.objective.pop();
            if let Some(e) = self.error.as_mut() {
                e.pop();
            }
            self.record(problem, &s, Some(res), cfg);
        }
        let nu_s = problem.stationary_index();
        let mut q_s = Array2::zeros(s.dim());
        q_s.row_mut(nu_s).assign(&s.row(nu_s));
        let mut q_nu = s;
        q_nu.row_mut(nu_s).fill(0.0);
        Ok(RecoveryResult {
            solver,
            q_s: PsrMatrix::from_clamped(q_s),
            q_nu: PsrMatrix::from_clamped(q_nu),
            iterations: self.residual.len(),
            residual_history: self.residual,
            error_history: self.error,
            objective_history: self.objective,
            step_sizes: self.steps,
            primal_residual_history: self.primal,
            iteration_times: self.times,
            converged,
        })
    }
}

pub(crate) fn check_finite(x: &Array2<f64>, iteration: usize) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Diverged(iteration))
    }
}

/// Whether iteration `it` (1-based) evaluates the true residual.
pub(crate) fn checks_residual(cfg: &SolverConfig, it: usize) -> bool {
    match cfg.gradient_mode {
        GradientMode::Exact => true,
        GradientMode::Approximate => (cfg.check_every > 0 && it.is_multiple_of(cfg.check_every)) || it == cfg.max_iters,
    }
}

pub fn pgd(d: &Measurements, op: &LiftedOperator, cfg: &SolverConfig) -> Result<RecoveryResult> {
    RecoveryProblem::new(op, d)?.solve(Solver::Pgd, cfg)
}

pub fn fista(d: &Measurements, op: &LiftedOperator, cfg: &SolverConfig) -> Result<RecoveryResult> {
    RecoveryProblem::new(op, d)?.solve(Solver::Fista, cfg)
}

pub fn admm(d: &Measurements, op: &LiftedOperator, cfg: &SolverConfig) -> Result<RecoveryResult> {
    RecoveryProblem::new(op, d)?.solve(Solver::Admm, cfg)
}

pub fn nonconvex_pgd(d: &Measurements, op: &LiftedOperator, cfg: &SolverConfig) -> Result<RecoveryResult> {
    RecoveryProblem::new(op, d)?.solve(Solver::Nonconvex, cfg)
}

/// FISTA momentum sequence `t_{j+1} = (1 + sqrt(1 + 4 t_j^2)) / 2`.
pub fn fista_momentum(t: f64) -> f64 {
    0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
}
