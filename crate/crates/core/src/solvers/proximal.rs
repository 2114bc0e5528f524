//! PGD, FISTA and the cardinality-constrained PGD.
//!
//! `Qs` and `Qv` have disjoint row supports and receive the same gradient,
//! so the stacked update is carried out on `S = Qs + Qv`: row `nu_s` takes
//! the plain projected step, every other row the thresholded one.

use ndarray::{Array2, Zip};

use super::line_search::backtrack;
use super::{check_finite, checks_residual, fista_momentum, History, RecoveryProblem, RecoveryResult, Solver, SolverConfig};
use crate::error::{Error, Result};
use crate::forward::{GradientMode, Measurements};
use crate::psr::{keep_topk, shrink};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Prox {
    Soft,
    TopK(usize),
}

/// The smooth part `f(S) = r/2 |F S - d|^2`, or its approximation
/// `r/2 |S - G|^2`.
pub(crate) struct Smooth<'p, 'a> {
    problem: &'p RecoveryProblem<'a>,
    mode: GradientMode,
    r: f64,
}

/// `f(S)`, plus `F S - d` in exact mode.
pub(crate) struct Evaluation {
    pub value: f64,
    pub residual: Option<Measurements>,
}

impl Evaluation {
    pub fn residual_norm(&self) -> Option<f64> {
        self.residual.as_ref().map(Measurements::norm)
    }
}

impl<'p, 'a> Smooth<'p, 'a> {
    pub(crate) fn new(problem: &'p RecoveryProblem<'a>, cfg: &SolverConfig) -> Self {
        Self {
            problem,
            mode: cfg.gradient_mode,
            r: cfg.r,
        }
    }

    pub(crate) fn evaluate(&self, s: &Array2<f64>) -> Result<Evaluation> {
        match self.mode {
            GradientMode::Approximate => {
                let mut acc = 0.0;
                Zip::from(s).and(self.problem.backprojection()).for_each(|&a, &b| acc += (a - b) * (a - b));
                Ok(Evaluation {
                    value: 0.5 * self.r * acc,
                    residual: None,
                })
            }
            GradientMode::Exact => {
                let res = self.problem.operator().forward(s)?.sub(self.problem.measurements())?;
                let n = res.norm();
                Ok(Evaluation {
                    value: 0.5 * self.r * n * n,
                    residual: Some(res),
                })
            }
        }
    }

    /// Gradient at `s` into `g`, reusing `eval` (which must belong to `s`).
    pub(crate) fn gradient_into(&self, s: &Array2<f64>, eval: &Evaluation, g: &mut Array2<f64>) -> Result<()> {
        let r = self.r;
        match (&self.mode, &eval.residual) {
            (GradientMode::Exact, Some(res)) => {
                let adj = self.problem.operator().adjoint_real(res)?;
                Zip::from(g).and(&adj).for_each(|g, &a| *g = r * a);
            }
            (GradientMode::Exact, None) => unreachable!("exact evaluation carries its residual"),
            (GradientMode::Approximate, _) => {
                Zip::from(g)
                    .and(s)
                    .and(self.problem.backprojection())
                    .for_each(|g, &a, &b| *g = r * (a - b));
            }
        }
        Ok(())
    }

    /// Scores a line-search candidate `c` taken from `y` along gradient
    /// `g`: returns `f(c)`, `<g, c - y>` and `|c - y|^2`. Approximate mode
    /// does all three in one pass.
    pub(crate) fn trial(&self, c: &Array2<f64>, y: &Array2<f64>, g: &Array2<f64>) -> Result<(Evaluation, f64, f64)> {
        let (mut lin, mut quad) = (0.0, 0.0);
        let eval = match self.mode {
            GradientMode::Approximate => {
                let mut acc = 0.0;
                Zip::from(c)
                    .and(y)
                    .and(g)
                    .and(self.problem.backprojection())
                    .for_each(|&c, &y, &g, &b| {
                        acc += (c - b) * (c - b);
                        let e = c - y;
                        lin += g * e;
                        quad += e * e;
                    });
                Evaluation {
                    value: 0.5 * self.r * acc,
                    residual: None,
                }
            }
            GradientMode::Exact => {
                Zip::from(c).and(y).and(g).for_each(|&c, &y, &g| {
                    let e = c - y;
                    lin += g * e;
                    quad += e * e;
                });
                self.evaluate(c)?
            }
        };
        Ok((eval, lin, quad))
    }
}

/// Writes `prox(Y - alpha g)` into `out`: the stationary row projected,
/// the rest thresholded.
#[allow(clippy::too_many_arguments)]
pub(crate) fn prox_into(
    y: &Array2<f64>,
    g: &Array2<f64>,
    alpha: f64,
    nu_s: usize,
    prox: Prox,
    cfg: &SolverConfig,
    out: &mut Array2<f64>,
    scratch: &mut Vec<f64>,
) {
    let tau = match prox {
        Prox::Soft => cfg.threshold(alpha),
        Prox::TopK(_) => 0.0,
    };
    for (row, ((mut o, yr), gr)) in out
        .outer_iter_mut()
        .zip(y.outer_iter())
        .zip(g.outer_iter())
        .enumerate()
    {
        let zip = Zip::from(&mut o).and(&yr).and(&gr);
        if row == nu_s {
            match prox {
                Prox::Soft => zip.for_each(|o, &y, &g| *o = (y - alpha * g).max(0.0)),
                // kept out of the cardinality count, filled in below
                Prox::TopK(_) => zip.for_each(|o, _, _| *o = 0.0),
            }
        } else {
            zip.for_each(|o, &y, &g| *o = shrink(y - alpha * g, tau).max(0.0));
        }
    }
    if let Prox::TopK(k) = prox {
        // exact projection onto {card <= k} within the nonnegative
        // off-stationary entries
        keep_topk(out.as_slice_mut().expect("standard layout"), k, scratch);
        Zip::from(out.row_mut(nu_s))
            .and(y.row(nu_s))
            .and(g.row(nu_s))
            .for_each(|o, &y, &g| *o = (y - alpha * g).max(0.0));
    }
}

pub(crate) fn run(
    problem: &RecoveryProblem<'_>,
    cfg: &SolverConfig,
    solver: Solver,
    prox: Prox,
    momentum: bool,
) -> Result<RecoveryResult> {
    let nu_s = problem.stationary_index();
    let smooth = Smooth::new(problem, cfg);
    let mut hist = History::new(problem);
    let shape = problem.operator().shape();

    let mut x = Array2::zeros(shape);
    if problem.measurements().norm() <= cfg.delta {
        return hist.finish(problem, solver, x, cfg, true);
    }
    // buffers reused across iterations; `cand` holds line-search trials
    let momentum_shape = if momentum { shape } else { (0, 0) };
    let mut x_prev = Array2::zeros(momentum_shape);
    let mut y = Array2::zeros(momentum_shape);
    let mut g = Array2::zeros(shape);
    let mut cand = Array2::zeros(shape);
    let mut scratch = Vec::new();
    let mut x_eval = smooth.evaluate(&x)?;
    // rounding bound for sums over every entry; at alpha = 1 / r the test
    // holds with equality in approximate mode
    let terms = (shape.0 * shape.1).max(problem.operator().measurement_count());
    let tolerance = (terms as f64 * f64::EPSILON).max(1e-12);
    let mut t = cfg.t0;
    let mut converged = false;

    for it in 1..=cfg.max_iters {
        hist.start_iteration();
        let mut y_eval = None;
        if momentum {
            let t_next = fista_momentum(t);
            let beta = (t - 1.0) / t_next;
            t = t_next;
            if beta != 0.0 {
                Zip::from(&mut y)
                    .and(&x)
                    .and(&x_prev)
                    .for_each(|y, &a, &b| *y = a + beta * (a - b));
                y_eval = Some(smooth.evaluate(&y)?);
            }
        }
        let (point, point_eval) = match &y_eval {
            Some(e) => (&y, e),
            None => (&x, &x_eval),
        };
        smooth.gradient_into(point, point_eval, &mut g)?;
        let fy = point_eval.value;

        let mut accepted = None;
        let alpha = backtrack(cfg.alpha_start(), cfg.backtracking(), |alpha| {
            prox_into(point, &g, alpha, nu_s, prox, cfg, &mut cand, &mut scratch);
            let (eval, lin, quad) = smooth.trial(&cand, point, &g)?;
            let quad = quad / (2.0 * alpha);
            let bound = fy + lin + quad;
            let slack = tolerance * (fy.abs() + lin.abs() + quad);
            let ok = eval.value <= bound + slack;
            if ok {
                accepted = Some(eval);
            }
            Ok(ok)
        })?
        .ok_or(Error::LineSearchFailed {
            iteration: it,
            alpha_min: cfg.alpha_min,
        })?;
        let eval_new = accepted.expect("accepted step");
        // a non-finite entry makes f non-finite, so this is the only check
        if !eval_new.value.is_finite() {
            check_finite(&cand, it)?;
        }
        if momentum {
            std::mem::swap(&mut x_prev, &mut x);
        }
        std::mem::swap(&mut x, &mut cand);
        x_eval = eval_new;
        hist.end_iteration(alpha);

        let residual = match cfg.gradient_mode {
            GradientMode::Exact => x_eval.residual_norm(),
            GradientMode::Approximate if checks_residual(cfg, it) => Some(problem.residual_norm(&x)?),
            GradientMode::Approximate => None,
        };
        hist.record(problem, &x, residual, cfg);
        if residual.is_some_and(|r| r <= cfg.delta) {
            converged = true;
            break;
        }
    }
    hist.finish(problem, solver, x, cfg, converged)
}
