//! ADMM on the split `Q = Qs + Qv`.
//!
//! Updates, with `G = Re(F^H d)`:
//!
//! ```text
//! Q  <- (F^H F + r I)^{-1} (G - Y + r (Qs + Qv))
//! Qs <- P_C1(Q - Qv + Y)
//! Qv <- P_C1c(ST_{lambda/r}(Q - Qs + Y))
//! Y  <- Y + (Q - Qs - Qv) / r
//! ```
//!
//! In approximate mode `F^H F` is taken as the identity, so the `Q` step
//! is a scaled sum. In exact mode it is solved by conjugate gradients,
//! warm started from the previous `Q`.

use ndarray::{Array2, Zip};

use super::cg::conjugate_gradient;
use super::{check_finite, checks_residual, History, RecoveryProblem, RecoveryResult, Solver, SolverConfig};
use crate::error::Result;
use crate::forward::GradientMode;
use crate::psr::shrink;

pub(crate) fn run(problem: &RecoveryProblem<'_>, cfg: &SolverConfig) -> Result<RecoveryResult> {
    let nu_s = problem.stationary_index();
    let op = problem.operator();
    let g = problem.backprojection();
    let r = cfg.r;
    let tau = cfg.lambda / r;
    let mut hist = History::new(problem);

    let mut s = Array2::zeros(op.shape());
    if problem.measurements().norm() <= cfg.delta {
        return hist.finish(problem, Solver::Admm, s, cfg, true);
    }
    let mut q = Array2::zeros(op.shape());
    let mut y: Array2<f64> = Array2::zeros(op.shape());
    let mut rhs = Array2::zeros(if cfg.gradient_mode == GradientMode::Exact { op.shape() } else { (0, 0) });
    let mut converged = false;

    for it in 1..=cfg.max_iters {
        hist.start_iteration();
        match cfg.gradient_mode {
            GradientMode::Approximate => {
                Zip::from(&mut q)
                    .and(g)
                    .and(&y)
                    .and(&s)
                    .for_each(|q, &g, &y, &s| *q = (g - y + r * s) / (1.0 + r));
            }
            GradientMode::Exact => {
                Zip::from(&mut rhs)
                    .and(g)
                    .and(&y)
                    .and(&s)
                    .for_each(|b, &g, &y, &s| *b = g - y + r * s);
                let apply = |x: &Array2<f64>| -> Result<Array2<f64>> { Ok(op.normal(x)? + &(r * x)) };
                q = conjugate_gradient(apply, &rhs, std::mem::take(&mut q), cfg.cg_tol, cfg.cg_max_iters)?.0;
            }
        }

        // Qs from row nu_s of Q + Y, Qv from the rest (Qs vanishes there),
        // then the dual step on the gap Q - Qs - Qv
        let mut gap2 = 0.0;
        let mut finite = true;
        for (row, ((mut s_row, mut y_row), q_row)) in s
            .outer_iter_mut()
            .zip(y.outer_iter_mut())
            .zip(q.outer_iter())
            .enumerate()
        {
            let stationary = row == nu_s;
            Zip::from(&mut s_row).and(&mut y_row).and(&q_row).for_each(|s, y, &q| {
                let v = q + *y;
                let next = if stationary { v.max(0.0) } else { shrink(v, tau).max(0.0) };
                let gap = q - next;
                *y += gap / r;
                *s = next;
                gap2 += gap * gap;
                finite &= next.is_finite();
            });
        }
        if !finite {
            check_finite(&s, it)?;
        }
        hist.push_primal(gap2.sqrt());
        hist.end_iteration(1.0 / r);

        let residual = if checks_residual(cfg, it) {
            Some(problem.residual_norm(&s)?)
        } else {
            None
        };
        hist.record(problem, &s, residual, cfg);
        if residual.is_some_and(|res| res <= cfg.delta) {
            converged = true;
            break;
        }
    }
    hist.finish(problem, Solver::Admm, s, cfg, converged)
}
