//! Matrix-free lifted forward model and its adjoint.
//!
//! Data are stored in the frequency domain, indexed by `(slow time m,
//! frequency l)` with `p = m * L + l`. The kernel for pixel `k` and
//! velocity `k'` is
//!
//! ```text
//! K(l, m, k, k') = exp(i w_l (R(s_m, x_k) + B(s_m, x_k, v_k')) / c0) / sqrt(P)
//! ```
//!
//! so every column of the operator has unit norm and the diagonal of
//! `F^H F` is exactly one. Along the frequency axis the kernel is a
//! geometric sequence, which both `forward` and `adjoint` exploit.

use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::grids::{self, dot3, AcquisitionGeometry, Vec2};

/// Stacked SAR data `d`, slow-time major.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    data: Vec<Complex64>,
    n_slow: usize,
    n_freq: usize,
}

impl Measurements {
    pub fn new(data: Vec<Complex64>, n_slow: usize, n_freq: usize) -> Result<Self> {
        if data.len() != n_slow * n_freq {
            return Err(Error::LengthMismatch {
                expected: n_slow * n_freq,
                got: data.len(),
            });
        }
        if data.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Format("measurements must be finite".into()));
        }
        Ok(Self { data, n_slow, n_freq })
    }

    pub fn zeros(n_slow: usize, n_freq: usize) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); n_slow * n_freq],
            n_slow,
            n_freq,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn n_slow(&self) -> usize {
        self.n_slow
    }

    pub fn n_freq(&self) -> usize {
        self.n_freq
    }

    pub fn index(&self, m: usize, l: usize) -> usize {
        m * self.n_freq + l
    }

    /// Inverse of [`Measurements::index`].
    pub fn slow_freq(&self, p: usize) -> (usize, usize) {
        (p / self.n_freq, p % self.n_freq)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<Complex64> {
        self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Standard deviation of the complex samples, `sqrt(mean |d - mean d|^2)`.
    pub fn std_dev(&self) -> f64 {
        complex_std(&self.data)
    }

    pub fn dot(&self, other: &Measurements) -> Complex64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `self - other`.
    pub fn sub(&self, other: &Measurements) -> Result<Measurements> {
        self.check_len(other)?;
        Ok(Self {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
            n_slow: self.n_slow,
            n_freq: self.n_freq,
        })
    }

    /// `self + other`.
    pub fn add(&self, other: &Measurements) -> Result<Measurements> {
        self.check_len(other)?;
        Ok(Self {
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
            n_slow: self.n_slow,
            n_freq: self.n_freq,
        })
    }

    fn check_len(&self, other: &Measurements) -> Result<()> {
        if self.n_slow != other.n_slow || self.n_freq != other.n_freq {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(())
    }

    /// Fast-time view `d(s_m, t_n)` via an inverse DFT along frequency.
    /// For display only; the solvers work in the frequency domain.
    pub fn to_fast_time(&self) -> Vec<Complex64> {
        let mut out = self.data.clone();
        if self.n_freq == 0 {
            return out;
        }
        let fft = FftPlanner::new().plan_fft_inverse(self.n_freq);
        let norm = 1.0 / self.n_freq as f64;
        for row in out.chunks_mut(self.n_freq) {
            fft.process(row);
            row.iter_mut().for_each(|z| *z *= norm);
        }
        out
    }
}

pub(crate) fn complex_std(data: &[Complex64]) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let n = data.len() as f64;
    let mean: Complex64 = data.iter().sum::<Complex64>() / n;
    (data.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / n).sqrt()
}

/// Columns processed together in the forward and adjoint loops.
const FORWARD_LANES: usize = 8;
const ADJOINT_LANES: usize = 4;

/// Phasor pairs `(exp(i w_0 tau), exp(i dw tau))` cached per `(k', k, m)`.
const DEFAULT_CACHE_LIMIT: usize = 8 << 20;

/// The lifted operator `F: R^{M x N} -> C^P` and its adjoint.
#[derive(Debug, Clone)]
pub struct LiftedOperator {
    geometry: AcquisitionGeometry,
    slow_times: Vec<f64>,
    omega0: f64,
    domega: f64,
    m_vel: usize,
    n_pix: usize,
    scale: f64,
    // per (m, k): two-way range over c0, and 2 s_m w(m, k) / c0 where
    // w . nu is the look-direction component of the lifted velocity
    delay: Vec<f64>,
    doppler: Vec<Vec2>,
    velocities: Vec<Vec2>,
    phasors: Option<Arc<Vec<(Complex64, Complex64)>>>,
}

impl LiftedOperator {
    pub fn new(geometry: AcquisitionGeometry) -> Self {
        Self::with_cache_limit(geometry, DEFAULT_CACHE_LIMIT)
    }

    /// Like [`LiftedOperator::new`], caching kernel phasors only when
    /// `n_slow * M * N <= cache_limit`.
    pub fn with_cache_limit(geometry: AcquisitionGeometry, cache_limit: usize) -> Self {
        let slow_times = geometry.slow_times();
        let (omega0, domega) = geometry.radar.omega_start_step();
        let (m_vel, n_pix) = geometry.psr_shape();
        let c0 = geometry.radar.c0;
        let topo = geometry.scene.topography();
        let centers = geometry.scene.centers();

        let mut delay = Vec::with_capacity(slow_times.len() * n_pix);
        let mut doppler = Vec::with_capacity(slow_times.len() * n_pix);
        for &s in &slow_times {
            let antenna = geometry.trajectory.position(s);
            for &x in &centers {
                delay.push(grids::range(antenna, x, topo) / c0);
                let u = grids::look_direction(antenna, x, topo);
                let g = topo.gradient(x);
                // u . [nu, g . nu] = (u_xy + u_z g) . nu
                let w = [u[0] + u[2] * g[0], u[1] + u[2] * g[1]];
                doppler.push([2.0 * s * w[0] / c0, 2.0 * s * w[1] / c0]);
            }
        }
        let p = geometry.measurement_count();
        let mut op = Self {
            velocities: geometry.velocities.samples().to_vec(),
            geometry,
            slow_times,
            omega0,
            domega,
            m_vel,
            n_pix,
            scale: 1.0 / (p as f64).sqrt(),
            delay,
            doppler,
            phasors: None,
        };
        if op.n_slow() * m_vel * n_pix <= cache_limit {
            let n_slow = op.n_slow();
            let table: Vec<_> = (0..m_vel * n_pix)
                .into_par_iter()
                .flat_map_iter(|j| {
                    let op = &op;
                    (0..n_slow).map(move |m| op.phasor_pair(m, j))
                })
                .collect();
            op.phasors = Some(Arc::new(table));
        }
        op
    }

    pub fn geometry(&self) -> &AcquisitionGeometry {
        &self.geometry
    }

    /// `(M, N)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.m_vel, self.n_pix)
    }

    pub fn n_slow(&self) -> usize {
        self.slow_times.len()
    }

    pub fn n_freq(&self) -> usize {
        self.geometry.radar.n_freq
    }

    /// Total measurement count `P`.
    pub fn measurement_count(&self) -> usize {
        self.n_slow() * self.n_freq()
    }

    /// `1 / sqrt(P)`.
    pub fn kernel_scale(&self) -> f64 {
        self.scale
    }

    pub fn stationary_index(&self) -> usize {
        self.geometry.velocities.stationary_index()
    }

    pub fn has_phasor_cache(&self) -> bool {
        self.phasors.is_some()
    }

    /// Round-trip delay `(R + B) / c0` for slow time `m` and flat PSR
    /// index `j = k' * N + k`.
    #[inline]
    fn delay_of(&self, m: usize, j: usize) -> f64 {
        let (kv, k) = (j / self.n_pix, j % self.n_pix);
        let t = m * self.n_pix + k;
        let w = self.doppler[t];
        let v = self.velocities[kv];
        self.delay[t] + w[0] * v[0] + w[1] * v[1]
    }

    #[inline]
    fn phasor_pair(&self, m: usize, j: usize) -> (Complex64, Complex64) {
        let tau = self.delay_of(m, j);
        (
            Complex64::from_polar(1.0, self.omega0 * tau),
            Complex64::from_polar(1.0, self.domega * tau),
        )
    }

    #[inline]
    fn phasors(&self, m: usize, j: usize) -> (Complex64, Complex64) {
        match &self.phasors {
            Some(table) => table[j * self.n_slow() + m],
            None => self.phasor_pair(m, j),
        }
    }

    /// Kernel entry evaluated directly from the geometry primitives.
    pub fn kernel(&self, l: usize, m: usize, pixel: usize, velocity: usize) -> Complex64 {
        let g = &self.geometry;
        let s = self.slow_times[m];
        let omega = self.omega0 + l as f64 * self.domega;
        let antenna = g.trajectory.position(s);
        let x = g.scene.center(pixel);
        let nu = g.velocities.sample(velocity);
        let phi = grids::phase(omega, antenna, s, x, nu, g.scene.topography(), g.radar.c0);
        Complex64::from_polar(self.scale, phi)
    }

    fn check_shape(&self, q: &Array2<f64>) -> Result<()> {
        if q.dim() != (self.m_vel, self.n_pix) {
            return Err(Error::ShapeMismatch {
                expected: (self.m_vel, self.n_pix),
                got: q.dim(),
            });
        }
        Ok(())
    }

    /// `d = F(Q)`. Only the nonzero entries of `Q` are visited.
    pub fn forward(&self, q: &Array2<f64>) -> Result<Measurements> {
        self.check_shape(q)?;
        let support: Vec<(usize, f64)> = q
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(j, &v)| (j, v))
            .collect();
        let n_freq = self.n_freq();
        let mut data = vec![Complex64::new(0.0, 0.0); self.measurement_count()];
        data.par_chunks_mut(n_freq).enumerate().for_each(|(m, row)| {
            // independent recurrences side by side hide the multiply latency
            let mut groups = support.chunks_exact(FORWARD_LANES);
            for group in &mut groups {
                let mut z = [Complex64::new(0.0, 0.0); FORWARD_LANES];
                let mut step = z;
                for (i, &(j, value)) in group.iter().enumerate() {
                    let (z0, s) = self.phasors(m, j);
                    z[i] = z0 * value;
                    step[i] = s;
                }
                for acc in row.iter_mut() {
                    *acc += z.iter().sum::<Complex64>();
                    for i in 0..FORWARD_LANES {
                        z[i] *= step[i];
                    }
                }
            }
            for &(j, value) in groups.remainder() {
                let (z0, step) = self.phasors(m, j);
                let mut z = z0 * value;
                for acc in row.iter_mut() {
                    *acc += z;
                    z *= step;
                }
            }
            row.iter_mut().for_each(|z| *z *= self.scale);
        });
        Ok(Measurements {
            data,
            n_slow: self.n_slow(),
            n_freq,
        })
    }

    fn check_data(&self, d: &Measurements) -> Result<()> {
        if d.n_slow != self.n_slow() || d.n_freq != self.n_freq() {
            return Err(Error::LengthMismatch {
                expected: self.measurement_count(),
                got: d.len(),
            });
        }
        Ok(())
    }

    /// Entry `j` of `F^H d`. Per slow time the sum over frequencies is a
    /// polynomial in the conjugate phasor step, evaluated by Horner's rule.
    #[inline]
    fn adjoint_entry(&self, d: &[Complex64], j: usize) -> Complex64 {
        let n_freq = self.n_freq();
        let mut acc = Complex64::new(0.0, 0.0);
        for (m, row) in d.chunks_exact(n_freq).enumerate() {
            let (z0, step) = self.phasors(m, j);
            let step = step.conj();
            let h = row.iter().rev().fold(Complex64::new(0.0, 0.0), |h, &dv| h * step + dv);
            acc += z0.conj() * h;
        }
        acc * self.scale
    }

    /// Entries `first..first + out.len()` of `F^H d`.
    fn adjoint_block(&self, d: &[Complex64], first: usize, out: &mut [Complex64]) {
        if out.len() != ADJOINT_LANES {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.adjoint_entry(d, first + i);
            }
            return;
        }
        let n_freq = self.n_freq();
        let mut acc = [Complex64::new(0.0, 0.0); ADJOINT_LANES];
        for (m, row) in d.chunks_exact(n_freq).enumerate() {
            let mut z0 = [Complex64::new(0.0, 0.0); ADJOINT_LANES];
            let mut step = z0;
            for i in 0..ADJOINT_LANES {
                let (z, s) = self.phasors(m, first + i);
                z0[i] = z.conj();
                step[i] = s.conj();
            }
            let mut h = [Complex64::new(0.0, 0.0); ADJOINT_LANES];
            for &dv in row.iter().rev() {
                for i in 0..ADJOINT_LANES {
                    h[i] = h[i] * step[i] + dv;
                }
            }
            for i in 0..ADJOINT_LANES {
                acc[i] += z0[i] * h[i];
            }
        }
        for (o, a) in out.iter_mut().zip(acc) {
            *o = a * self.scale;
        }
    }

    /// `F^H d` as a complex `M x N` matrix.
    pub fn adjoint(&self, d: &Measurements) -> Result<Array2<Complex64>> {
        self.check_data(d)?;
        let mut values = vec![Complex64::new(0.0, 0.0); self.m_vel * self.n_pix];
        values
            .par_chunks_mut(ADJOINT_LANES)
            .enumerate()
            .for_each(|(c, out)| self.adjoint_block(&d.data, c * ADJOINT_LANES, out));
        Ok(Array2::from_shape_vec((self.m_vel, self.n_pix), values).expect("shape"))
    }

    /// `Re(F^H d)`, the adjoint restricted to real PSR matrices.
    pub fn adjoint_real(&self, d: &Measurements) -> Result<Array2<f64>> {
        Ok(self.adjoint(d)?.mapv(|z| z.re))
    }

    /// One row of `F^H d`; row `nu_s` is the conventional stationary
    /// backprojection image.
    pub fn adjoint_row(&self, d: &Measurements, velocity: usize) -> Result<Vec<Complex64>> {
        self.check_data(d)?;
        let base = velocity * self.n_pix;
        let mut values = vec![Complex64::new(0.0, 0.0); self.n_pix];
        values
            .par_chunks_mut(ADJOINT_LANES)
            .enumerate()
            .for_each(|(c, out)| self.adjoint_block(&d.data, base + c * ADJOINT_LANES, out));
        Ok(values)
    }

    /// `Re(F^H F Q)`, the real normal operator.
    pub fn normal(&self, q: &Array2<f64>) -> Result<Array2<f64>> {
        self.adjoint_real(&self.forward(q)?)
    }

    /// Largest eigenvalue of the real normal operator (`sigma_max^2` over
    /// real inputs), by power iteration from a deterministic start.
    pub fn normal_spectral_radius(&self, iterations: usize) -> Result<f64> {
        let (m, n) = self.shape();
        let mut x = Array2::from_shape_fn((m, n), |(a, b)| 1.0 + ((a * 7 + b * 13) % 5) as f64 * 0.1);
        let mut lambda = 0.0;
        for _ in 0..iterations.max(1) {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.mapv_inplace(|v| v / norm);
            let y = self.normal(&x)?;
            lambda = x.iter().zip(y.iter()).map(|(a, b)| a * b).sum::<f64>();
            x = y;
        }
        Ok(lambda)
    }

    /// Dense `P x MN` operator matrix. Toy-scale validation only; refuses
    /// anything above `max_entries` entries.
    pub fn materialize(&self, max_entries: usize) -> Result<Array2<Complex64>> {
        let p = self.measurement_count();
        let cols = self.m_vel * self.n_pix;
        if p * cols > max_entries {
            return Err(Error::InvalidGeometry(format!(
                "refusing to materialize a {p} x {cols} operator"
            )));
        }
        let n_freq = self.n_freq();
        let mut out = Array2::zeros((p, cols));
        for j in 0..cols {
            for m in 0..self.n_slow() {
                let (mut z, step) = self.phasors(m, j);
                for l in 0..n_freq {
                    out[[m * n_freq + l, j]] = z * self.scale;
                    z *= step;
                }
            }
        }
        Ok(out)
    }

    /// Delay `(R + B) / c0` for slow time `m`, pixel `k`, velocity `k'`.
    pub fn delay(&self, m: usize, pixel: usize, velocity: usize) -> f64 {
        self.delay_of(m, velocity * self.n_pix + pixel)
    }

    /// Inner product `<u, v>` of lifted velocity with look direction, for
    /// diagnostics.
    pub fn radial_speed(&self, m: usize, pixel: usize, velocity: usize) -> f64 {
        let g = &self.geometry;
        let topo = g.scene.topography();
        let x = g.scene.center(pixel);
        let antenna = g.trajectory.position(self.slow_times[m]);
        let u = grids::look_direction(antenna, x, topo);
        dot3(u, grids::lifted_velocity(x, g.velocities.sample(velocity), topo))
    }
}

/// Gradient direction of the data-fidelity term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradientMode {
    /// `F^H F ~ I`: direction `(Qs + Qv) - G` with `G = Re(F^H d)` cached.
    #[default]
    Approximate,
    /// `Re(F^H (F(Qs + Qv) - d))`, one forward and one adjoint per call.
    Exact,
}

/// `(Qs + Qv) - G`, the approximate normal residual.
pub fn normal_residual(q_s: &Array2<f64>, q_nu: &Array2<f64>, backprojection: &Array2<f64>) -> Array2<f64> {
    q_s + q_nu - backprojection
}

/// `Re(F^H (F(Qs + Qv) - d))`, the exact normal residual.
pub fn exact_normal_residual(
    op: &LiftedOperator,
    q_s: &Array2<f64>,
    q_nu: &Array2<f64>,
    d: &Measurements,
) -> Result<Array2<f64>> {
    let r = op.forward(&(q_s + q_nu))?.sub(d)?;
    op.adjoint_real(&r)
}
