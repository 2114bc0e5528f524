use crate::error::{Error, Result};

/// Backtracking parameters shared by every solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backtracking {
    pub beta: f64,
    pub c: f64,
    pub alpha_min: f64,
}

impl Default for Backtracking {
    fn default() -> Self {
        Self {
            beta: 0.5,
            c: 1e-4,
            alpha_min: 1e-12,
        }
    }
}

/// Shrinks `alpha` from `alpha_start` by `beta` until `accept(alpha)` holds.
/// Returns `None` once `alpha` would fall below `alpha_min`.
pub(crate) fn backtrack<F>(alpha_start: f64, params: Backtracking, mut accept: F) -> Result<Option<f64>>
where
    F: FnMut(f64) -> Result<bool>,
{
    let mut alpha = alpha_start;
    while alpha >= params.alpha_min {
        if accept(alpha)? {
            return Ok(Some(alpha));
        }
        alpha *= params.beta;
    }
    Ok(None)
}

/// Armijo backtracking along `-gradient`.
///
/// `step_value(alpha)` must return `f(x - alpha * g)`; `f0 = f(x)` and
/// `grad_norm_sq = |g|^2`. Returns the largest `alpha_start * beta^j` with
/// `f(x - alpha g) <= f0 - c alpha |g|^2`.
pub fn backtracking_line_search<F>(
    mut step_value: F,
    f0: f64,
    grad_norm_sq: f64,
    alpha_start: f64,
    params: Backtracking,
) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(alpha_start > 0.0) {
        return Err(Error::InvalidConfig(format!("alpha_start must be positive, got {alpha_start}")));
    }
    backtrack(alpha_start, params, |alpha| {
        Ok(step_value(alpha) <= f0 - params.c * alpha * grad_norm_sq)
    })?
    .ok_or(Error::LineSearchFailed {
        iteration: 0,
        alpha_min: params.alpha_min,
    })
}
