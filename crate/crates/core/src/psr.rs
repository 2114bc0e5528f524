//! Phase-space reflectivity matrices, their stationary/moving split, and
//! the proximal maps used by the solvers.
//!
//! Rows index velocities, columns index pixels. The stationary component
//! lives on the single zero-velocity row `nu_s`; the moving component is
//! zero there.

use ndarray::{Array2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grids::{AcquisitionGeometry, Pixel, Vec2};
use crate::scenegen::GroundTruthScene;

/// Default relative detection threshold, -40 dB in amplitude.
pub const DEFAULT_DETECTION_DB: f64 = -40.0;

/// Nonnegative `M x N` reflectivity matrix over (velocity, pixel).
#[derive(Debug, Clone, PartialEq)]
pub struct PsrMatrix {
    values: Array2<f64>,
}

impl PsrMatrix {
    /// Wraps `values`, rejecting negative or non-finite entries.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::NotNonnegative);
        }
        Ok(Self { values })
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self {
            values: Array2::zeros((m, n)),
        }
    }

    /// Clamps negatives to zero. Intended for solver iterates that are
    /// nonnegative by construction.
    pub(crate) fn from_clamped(values: Array2<f64>) -> Self {
        Self {
            values: values.mapv(|v| v.max(0.0)),
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn get(&self, velocity: usize, pixel: usize) -> f64 {
        self.values[[velocity, pixel]]
    }

    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// True when every column holds at most one nonzero.
    pub fn has_single_velocity_per_pixel(&self) -> bool {
        self.values
            .axis_iter(Axis(1))
            .all(|col| col.iter().filter(|&&v| v != 0.0).count() <= 1)
    }
}

/// `Q = Qs + Qv` with `Qs` on row `nu_s` and `Qv` zero there.
#[derive(Debug, Clone, PartialEq)]
pub struct PsrDecomposition {
    pub q_s: PsrMatrix,
    pub q_nu: PsrMatrix,
    pub stationary_index: usize,
}

impl PsrDecomposition {
    pub fn total(&self) -> PsrMatrix {
        PsrMatrix {
            values: &self.q_s.values + &self.q_nu.values,
        }
    }

    /// The stationary reflectivities `rho_s`, i.e. row `nu_s` of `Qs`.
    pub fn stationary_reflectivity(&self) -> Vec<f64> {
        self.q_s.values.row(self.stationary_index).to_vec()
    }
}

pub(crate) fn frobenius(x: &Array2<f64>) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Projection onto nonnegative matrices supported on row `nu_s`.
pub fn project_stationary(x: &Array2<f64>, nu_s: usize) -> Array2<f64> {
    let mut out = Array2::zeros(x.dim());
    out.row_mut(nu_s)
        .assign(&x.row(nu_s).mapv(|v| v.max(0.0)));
    out
}

/// Projection onto nonnegative matrices vanishing on row `nu_s`.
pub fn project_moving(x: &Array2<f64>, nu_s: usize) -> Array2<f64> {
    let mut out = x.mapv(|v| v.max(0.0));
    out.row_mut(nu_s).fill(0.0);
    out
}

#[inline]
pub(crate) fn shrink(v: f64, tau: f64) -> f64 {
    v.signum() * (v.abs() - tau).max(0.0)
}

/// Entrywise soft threshold `sign(x) max(|x| - tau, 0)`.
pub fn soft_threshold(x: &Array2<f64>, tau: f64) -> Result<Array2<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::NegativeThreshold(tau));
    }
    Ok(x.mapv(|v| shrink(v, tau)))
}

/// Zeroes all but the `k` largest-magnitude entries of `x`, ties going to
/// the lowest index. `scratch` is reused between calls.
pub(crate) fn keep_topk(x: &mut [f64], k: usize, scratch: &mut Vec<f64>) {
    use std::cmp::Ordering;
    if k >= x.len() {
        return;
    }
    if k == 0 {
        x.fill(0.0);
        return;
    }
    scratch.clear();
    scratch.extend(x.iter().map(|v| v.abs()));
    let t = *scratch.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a)).1;
    let above = x.iter().filter(|v| v.abs().total_cmp(&t) == Ordering::Greater).count();
    let mut ties = k - above;
    for v in x.iter_mut() {
        match v.abs().total_cmp(&t) {
            Ordering::Greater => {}
            Ordering::Equal if ties > 0 => ties -= 1,
            _ => *v = 0.0,
        }
    }
}

/// Keeps the `k` largest-magnitude entries of `x` and zeroes the rest.
pub fn hard_threshold_topk(x: &Array2<f64>, k: usize) -> Array2<f64> {
    let mut out = x.as_standard_layout().into_owned();
    keep_topk(out.as_slice_mut().expect("standard layout"), k, &mut Vec::new());
    out
}

/// Ground-truth PSR of `scene` on `geometry`.
///
/// Stationary point targets, extended targets, and clutter fill row
/// `nu_s` of `Qs`; movers fill `Qv`. Clutter is not added under a mover,
/// so every column keeps at most one nonzero.
pub fn build_psr(scene: &GroundTruthScene, geometry: &AcquisitionGeometry) -> Result<PsrDecomposition> {
    let grid = &geometry.scene;
    let velocities = &geometry.velocities;
    let (m, n) = geometry.psr_shape();
    let nu_s = velocities.stationary_index();
    let mut q_s = Array2::zeros((m, n));
    let mut q_nu = Array2::zeros((m, n));
    let mut occupied = vec![false; n];
    let mut moving = vec![false; n];

    let mut claim = |k: usize| -> Result<()> {
        if occupied[k] {
            return Err(Error::PixelCollision(k));
        }
        occupied[k] = true;
        Ok(())
    };

    for t in &scene.point_targets {
        if !(t.reflectivity.is_finite() && t.reflectivity >= 0.0) {
            return Err(Error::NotNonnegative);
        }
        let k = grid.index(t.pixel)?;
        let row = velocities
            .index_of(t.velocity)
            .ok_or(Error::OffGridVelocity(t.velocity[0], t.velocity[1]))?;
        claim(k)?;
        if row == nu_s {
            q_s[[nu_s, k]] = t.reflectivity;
        } else {
            q_nu[[row, k]] = t.reflectivity;
            moving[k] = true;
        }
    }
    for e in &scene.extended_targets {
        if !(e.reflectivity.is_finite() && e.reflectivity >= 0.0) {
            return Err(Error::NotNonnegative);
        }
        for pixel in e.pixels() {
            let k = grid.index(pixel)?;
            claim(k)?;
            q_s[[nu_s, k]] = e.reflectivity;
        }
    }
    if let Some(clutter) = &scene.clutter {
        if clutter.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: clutter.len(),
            });
        }
        for (k, &c) in clutter.iter().enumerate() {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::NotNonnegative);
            }
            if !moving[k] {
                q_s[[nu_s, k]] += c;
            }
        }
    }
    Ok(PsrDecomposition {
        q_s: PsrMatrix { values: q_s },
        q_nu: PsrMatrix { values: q_nu },
        stationary_index: nu_s,
    })
}

/// Superimposes the rows of `Qv` into one `N`-pixel image.
pub fn moving_image(q_nu: &PsrMatrix) -> Vec<f64> {
    q_nu.values.sum_axis(Axis(0)).to_vec()
}

/// A moving-target detection with its estimated ground velocity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VelocityEstimate {
    pub pixel: Pixel,
    pub velocity_index: usize,
    pub velocity: Vec2,
    pub amplitude: f64,
}

/// One record per entry of `Qv` strictly above `threshold * max(Qv)`.
/// Records are in row-major order of `Qv`.
pub fn velocity_estimates(
    q_nu: &PsrMatrix,
    geometry: &AcquisitionGeometry,
    threshold: f64,
) -> Vec<VelocityEstimate> {
    let max = q_nu.max();
    if max <= 0.0 {
        return Vec::new();
    }
    let cut = threshold * max;
    q_nu.values
        .indexed_iter()
        .filter(|(_, &v)| v > cut || (threshold >= 1.0 && v == max))
        .map(|((row, k), &v)| VelocityEstimate {
            pixel: geometry.scene.pixel(k),
            velocity_index: row,
            velocity: geometry.velocities.sample(row),
            amplitude: v,
        })
        .collect()
}

/// Column index of every nonzero per row, for quick support comparisons.
pub fn support(q: &PsrMatrix) -> Vec<(usize, usize)> {
    q.values
        .indexed_iter()
        .filter(|(_, &v)| v != 0.0)
        .map(|(ix, _)| ix)
        .collect()
}
