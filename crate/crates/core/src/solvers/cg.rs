use ndarray::Array2;

use crate::error::Result;

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients for a symmetric positive definite `apply`, warm
/// started at `x0`. Stops when `|b - A x| <= tol |b|` or after
/// `max_iters` steps. Returns the solution and the iteration count.
pub(crate) fn conjugate_gradient<A>(
    apply: A,
    b: &Array2<f64>,
    x0: Array2<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<(Array2<f64>, usize)>
where
    A: Fn(&Array2<f64>) -> Result<Array2<f64>>,
{
    let mut x = x0;
    let mut r = b - &apply(&x)?;
    let target = tol * dot(b, b).sqrt();
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= target {
        return Ok((x, 0));
    }
    let mut p = r.clone();
    for it in 1..=max_iters {
        let ap = apply(&p)?;
        let denom = dot(&p, &ap);
        if denom <= 0.0 {
            return Ok((x, it - 1));
        }
        let a = rr / denom;
        x.scaled_add(a, &p);
        r.scaled_add(-a, &ap);
        let rr_next = dot(&r, &r);
        if rr_next.sqrt() <= target {
            return Ok((x, it));
        }
        p = &r + &(rr_next / rr * &p);
        rr = rr_next;
    }
    Ok((x, max_iters))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_small_spd_system() {
        // A = [[4, 1], [1, 3]] acting on 2 x 1 matrices
        let apply = |x: &Array2<f64>| -> Result<Array2<f64>> {
            Ok(array![[4.0 * x[[0, 0]] + x[[1, 0]]], [x[[0, 0]] + 3.0 * x[[1, 0]]]])
        };
        let b = array![[1.0], [2.0]];
        let (x, iters) = conjugate_gradient(apply, &b, Array2::zeros((2, 1)), 1e-14, 10).unwrap();
        assert!(iters <= 2);
        assert!((x[[0, 0]] - 1.0 / 11.0).abs() < 1e-12);
        assert!((x[[1, 0]] - 7.0 / 11.0).abs() < 1e-12);
    }
}
