//! Scene, velocity and slow-time grids plus the monostatic geometry
//! primitives: scatterer motion, two-way range, motion-induced range
//! variation and the propagation phase.
//!
//! Units are SI throughout: meters, seconds, m/s and rad/s.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];
pub type Vec3 = [f64; 3];

/// Default propagation speed (m/s).
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

#[inline]
pub(crate) fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

/// Ground height model `psi: R^2 -> R` together with its gradient.
pub trait Topography: Send + Sync + fmt::Debug {
    fn height(&self, p: Vec2) -> f64;
    fn gradient(&self, p: Vec2) -> Vec2;
}

/// `psi == 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Flat;

impl Topography for Flat {
    fn height(&self, _p: Vec2) -> f64 {
        0.0
    }
    fn gradient(&self, _p: Vec2) -> Vec2 {
        [0.0, 0.0]
    }
}

/// Tilted plane `psi(x) = offset + slope . x`.
#[derive(Debug, Clone, Copy)]
pub struct Planar {
    pub offset: f64,
    pub slope: Vec2,
}

impl Topography for Planar {
    fn height(&self, p: Vec2) -> f64 {
        self.offset + self.slope[0] * p[0] + self.slope[1] * p[1]
    }
    fn gradient(&self, _p: Vec2) -> Vec2 {
        self.slope
    }
}

/// Zero-based pixel coordinate; `col` runs along x, `row` along y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl fmt::Display for Pixel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Uniform image grid. Pixel centers span `[0, extent]` on each axis, so
/// the spacing is `extent / (n - 1)`. Flat index `k = row * nx + col`.
#[derive(Debug, Clone)]
pub struct SceneGrid {
    extent_x: f64,
    extent_y: f64,
    nx: usize,
    ny: usize,
    topography: Arc<dyn Topography>,
}

impl SceneGrid {
    pub fn new(extent_x: f64, extent_y: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGeometry("scene grid needs at least one pixel".into()));
        }
        if !(extent_x.is_finite() && extent_y.is_finite()) || extent_x < 0.0 || extent_y < 0.0 {
            return Err(Error::InvalidGeometry("scene extent must be finite and nonnegative".into()));
        }
        Ok(Self {
            extent_x,
            extent_y,
            nx,
            ny,
            topography: Arc::new(Flat),
        })
    }

    pub fn with_topography(mut self, topography: Arc<dyn Topography>) -> Self {
        self.topography = topography;
        self
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn extent(&self) -> Vec2 {
        [self.extent_x, self.extent_y]
    }

    /// Number of pixels `N`.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> Vec2 {
        let step = |extent: f64, n: usize| if n > 1 { extent / (n - 1) as f64 } else { 0.0 };
        [step(self.extent_x, self.nx), step(self.extent_y, self.ny)]
    }

    pub fn topography(&self) -> &dyn Topography {
        self.topography.as_ref()
    }

    pub fn pixel(&self, k: usize) -> Pixel {
        Pixel::new(k / self.nx, k % self.nx)
    }

    pub fn index(&self, pixel: Pixel) -> Result<usize> {
        if pixel.row >= self.ny || pixel.col >= self.nx {
            return Err(Error::PixelOutOfGrid {
                row: pixel.row,
                col: pixel.col,
            });
        }
        Ok(pixel.row * self.nx + pixel.col)
    }

    pub fn center(&self, k: usize) -> Vec2 {
        let p = self.pixel(k);
        let [dx, dy] = self.spacing();
        [p.col as f64 * dx, p.row as f64 * dy]
    }

    pub fn centers(&self) -> Vec<Vec2> {
        (0..self.len()).map(|k| self.center(k)).collect()
    }
}

/// Uniform 2D velocity grid. Flat index `k' = iy * mx + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    v_min: Vec2,
    v_max: Vec2,
    mx: usize,
    my: usize,
    samples: Vec<Vec2>,
    stationary_index: usize,
}

impl VelocityGrid {
    /// Builds the grid and locates the zero velocity; the grid must contain
    /// `(0, 0)` as one of its samples.
    pub fn new(v_min: Vec2, v_max: Vec2, mx: usize, my: usize) -> Result<Self> {
        if mx == 0 || my == 0 {
            return Err(Error::InvalidGeometry("velocity grid needs at least one sample".into()));
        }
        for axis in 0..2 {
            if !(v_min[axis].is_finite() && v_max[axis].is_finite()) || v_max[axis] < v_min[axis] {
                return Err(Error::InvalidGeometry(format!(
                    "velocity bounds on axis {axis} must satisfy v_min <= v_max"
                )));
            }
        }
        let axis_samples = |lo: f64, hi: f64, n: usize| -> Option<(Vec<f64>, usize)> {
            let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
            let mut values: Vec<f64> = (0..n).map(|i| lo + i as f64 * step).collect();
            let tol = 1e-9 * step.abs().max(hi.abs()).max(lo.abs()).max(1.0);
            let zero = values.iter().position(|v| v.abs() <= tol)?;
            values[zero] = 0.0;
            Some((values, zero))
        };
        let (xs, zx) = axis_samples(v_min[0], v_max[0], mx).ok_or(Error::NoZeroVelocity)?;
        let (ys, zy) = axis_samples(v_min[1], v_max[1], my).ok_or(Error::NoZeroVelocity)?;
        let samples = ys
            .iter()
            .flat_map(|&vy| xs.iter().map(move |&vx| [vx, vy]))
            .collect();
        Ok(Self {
            v_min,
            v_max,
            mx,
            my,
            samples,
            stationary_index: zy * mx + zx,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.mx, self.my)
    }

    pub fn bounds(&self) -> (Vec2, Vec2) {
        (self.v_min, self.v_max)
    }

    pub fn spacing(&self) -> Vec2 {
        let step = |lo: f64, hi: f64, n: usize| if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
        [
            step(self.v_min[0], self.v_max[0], self.mx),
            step(self.v_min[1], self.v_max[1], self.my),
        ]
    }

    pub fn samples(&self) -> &[Vec2] {
        &self.samples
    }

    pub fn sample(&self, index: usize) -> Vec2 {
        self.samples[index]
    }

    /// Row of the PSR matrix holding stationary scatterers.
    pub fn stationary_index(&self) -> usize {
        self.stationary_index
    }

    /// Index of the grid sample equal to `v` (to within a part in 1e6 of
    /// the grid spacing), if any.
    pub fn index_of(&self, v: Vec2) -> Option<usize> {
        let [dx, dy] = self.spacing();
        let tol = 1e-6 * dx.max(dy).max(1e-12);
        self.samples
            .iter()
            .position(|s| (s[0] - v[0]).abs() <= tol && (s[1] - v[1]).abs() <= tol)
    }
}

/// Circular flight path `gamma(s) = [c + r(cos th, sin th), altitude]` with
/// `th = 2 pi s / S`, one full orbit over the aperture time `S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircularTrajectory {
    pub center: Vec2,
    pub radius: f64,
    pub altitude: f64,
    pub aperture_time: f64,
}

impl CircularTrajectory {
    pub fn speed(&self) -> f64 {
        2.0 * PI * self.radius / self.aperture_time
    }
}

/// Piecewise-linear path through timed waypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct WaypointTrajectory {
    times: Vec<f64>,
    positions: Vec<Vec3>,
}

impl WaypointTrajectory {
    /// `times` must start at 0 and increase strictly.
    pub fn new(times: Vec<f64>, positions: Vec<Vec3>) -> Result<Self> {
        if times.is_empty() || times.len() != positions.len() {
            return Err(Error::InvalidGeometry(
                "waypoint table needs matching, nonempty times and positions".into(),
            ));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGeometry(
                "waypoint times must start at 0 and increase strictly".into(),
            ));
        }
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGeometry("waypoint positions must be finite".into()));
        }
        Ok(Self { times, positions })
    }

    fn position(&self, s: f64) -> Vec3 {
        let last = self.times.len() - 1;
        if s <= self.times[0] || last == 0 {
            return self.positions[0];
        }
        if s >= self.times[last] {
            return self.positions[last];
        }
        let i = self.times.partition_point(|&t| t <= s) - 1;
        let w = (s - self.times[i]) / (self.times[i + 1] - self.times[i]);
        let (a, b) = (self.positions[i], self.positions[i + 1]);
        [
            a[0] + w * (b[0] - a[0]),
            a[1] + w * (b[1] - a[1]),
            a[2] + w * (b[2] - a[2]),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    Circular(CircularTrajectory),
    Waypoints(WaypointTrajectory),
}

impl Trajectory {
    pub fn circular(center: Vec2, radius: f64, altitude: f64, aperture_time: f64) -> Result<Self> {
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(Error::InvalidGeometry("orbit radius must be finite and nonnegative".into()));
        }
        if !(aperture_time > 0.0 && aperture_time.is_finite()) {
            return Err(Error::InvalidGeometry("aperture time must be positive".into()));
        }
        if !altitude.is_finite() || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGeometry("orbit center and altitude must be finite".into()));
        }
        Ok(Self::Circular(CircularTrajectory {
            center,
            radius,
            altitude,
            aperture_time,
        }))
    }

    /// Antenna position `gamma(s)`.
    pub fn position(&self, s: f64) -> Vec3 {
        match self {
            Self::Circular(c) => {
                let theta = 2.0 * PI * s / c.aperture_time;
                [
                    c.center[0] + c.radius * theta.cos(),
                    c.center[1] + c.radius * theta.sin(),
                    c.altitude,
                ]
            }
            Self::Waypoints(w) => w.position(s),
        }
    }

    /// Total acquisition time `S`.
    pub fn aperture_time(&self) -> f64 {
        match self {
            Self::Circular(c) => c.aperture_time,
            Self::Waypoints(w) => *w.times.last().unwrap(),
        }
    }

    /// Lowest antenna height over the aperture.
    pub fn min_altitude(&self) -> f64 {
        match self {
            Self::Circular(c) => c.altitude,
            Self::Waypoints(w) => w.positions.iter().map(|p| p[2]).fold(f64::INFINITY, f64::min),
        }
    }

    /// `n` slow-time samples uniform on `[0, S]`, endpoints included.
    pub fn slow_time_samples(&self, n: usize) -> Vec<f64> {
        let s = self.aperture_time();
        match n {
            0 => Vec::new(),
            1 => vec![0.0],
            _ => (0..n).map(|m| s * m as f64 / (n - 1) as f64).collect(),
        }
    }
}

/// Stepped-frequency radar parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarParams {
    pub center_frequency: f64,
    pub bandwidth: f64,
    pub n_freq: usize,
    pub c0: f64,
}

impl RadarParams {
    pub fn new(center_frequency: f64, bandwidth: f64, n_freq: usize) -> Result<Self> {
        let params = Self {
            center_frequency,
            bandwidth,
            n_freq,
            c0: SPEED_OF_LIGHT,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::InvalidGeometry("bandwidth must be positive".into()));
        }
        if self.n_freq == 0 {
            return Err(Error::InvalidGeometry("need at least one frequency sample".into()));
        }
        if !(self.center_frequency - self.bandwidth / 2.0 > 0.0) || !self.center_frequency.is_finite() {
            return Err(Error::InvalidGeometry("band must lie at positive frequencies".into()));
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::InvalidGeometry("propagation speed must be positive".into()));
        }
        Ok(())
    }

    /// First angular frequency and the uniform spacing between samples.
    pub fn omega_start_step(&self) -> (f64, f64) {
        let two_pi = 2.0 * PI;
        if self.n_freq == 1 {
            return (two_pi * self.center_frequency, 0.0);
        }
        let lo = two_pi * (self.center_frequency - self.bandwidth / 2.0);
        let hi = two_pi * (self.center_frequency + self.bandwidth / 2.0);
        (lo, (hi - lo) / (self.n_freq - 1) as f64)
    }

    pub fn angular_frequencies(&self) -> Vec<f64> {
        let (start, step) = self.omega_start_step();
        (0..self.n_freq).map(|l| start + l as f64 * step).collect()
    }

    /// Range resolution `c0 / (2B)`.
    pub fn range_resolution(&self) -> f64 {
        self.c0 / (2.0 * self.bandwidth)
    }
}

/// Everything that determines the lifted forward operator.
#[derive(Debug, Clone)]
pub struct AcquisitionGeometry {
    pub scene: SceneGrid,
    pub velocities: VelocityGrid,
    pub trajectory: Trajectory,
    pub radar: RadarParams,
    pub n_slow: usize,
}

impl AcquisitionGeometry {
    pub fn new(
        scene: SceneGrid,
        velocities: VelocityGrid,
        trajectory: Trajectory,
        radar: RadarParams,
        n_slow: usize,
    ) -> Result<Self> {
        radar.validate()?;
        if n_slow == 0 {
            return Err(Error::InvalidGeometry("need at least one slow-time sample".into()));
        }
        let topo = scene.topography();
        let max_height = scene
            .centers()
            .iter()
            .map(|&x| topo.height(x))
            .fold(f64::NEG_INFINITY, f64::max);
        if trajectory.min_altitude() <= max_height {
            return Err(Error::InvalidGeometry(
                "antenna altitude must exceed the scene topography".into(),
            ));
        }
        Ok(Self {
            scene,
            velocities,
            trajectory,
            radar,
            n_slow,
        })
    }

    /// `(M, N)`: velocity samples by pixels.
    pub fn psr_shape(&self) -> (usize, usize) {
        (self.velocities.len(), self.scene.len())
    }

    /// Total measurement count `P`.
    pub fn measurement_count(&self) -> usize {
        self.n_slow * self.radar.n_freq
    }

    pub fn slow_times(&self) -> Vec<f64> {
        self.trajectory.slow_time_samples(self.n_slow)
    }

    pub fn min_detectable_speed(&self) -> f64 {
        min_detectable_speed(self.radar.bandwidth, self.trajectory.aperture_time(), self.radar.c0)
    }
}

/// Ground point `[x, psi(x)]`.
pub fn ground_point(x: Vec2, topo: &dyn Topography) -> Vec3 {
    [x[0], x[1], topo.height(x)]
}

/// 3D velocity of a surface scatterer, `[nu, grad psi(x) . nu]`.
pub fn lifted_velocity(x: Vec2, nu: Vec2, topo: &dyn Topography) -> Vec3 {
    let g = topo.gradient(x);
    [nu[0], nu[1], g[0] * nu[0] + g[1] * nu[1]]
}

/// Position at slow time `s` of a scatterer starting at `x` with ground
/// velocity `nu`, under the constant-velocity model `z(s) = x + v s`.
pub fn scatterer_position(x: Vec2, nu: Vec2, topo: &dyn Topography, s: f64) -> Vec3 {
    let x0 = ground_point(x, topo);
    let v = lifted_velocity(x, nu, topo);
    [x0[0] + v[0] * s, x0[1] + v[1] * s, x0[2] + v[2] * s]
}

/// Two-way range `2 |gamma - [x, psi(x)]|` from antenna position `antenna`.
pub fn range(antenna: Vec3, x: Vec2, topo: &dyn Topography) -> f64 {
    let p = ground_point(x, topo);
    2.0 * norm3([antenna[0] - p[0], antenna[1] - p[1], antenna[2] - p[2]])
}

/// Unit look direction from the antenna toward the ground point of `x`.
pub fn look_direction(antenna: Vec3, x: Vec2, topo: &dyn Topography) -> Vec3 {
    let p = ground_point(x, topo);
    let d = [p[0] - antenna[0], p[1] - antenna[1], p[2] - antenna[2]];
    let n = norm3(d);
    [d[0] / n, d[1] / n, d[2] / n]
}

/// Motion-induced range variation `2 s (u . v)`, with `u` the unit look
/// direction and `v` the lifted velocity.
pub fn range_variation(antenna: Vec3, s: f64, x: Vec2, nu: Vec2, topo: &dyn Topography) -> f64 {
    let u = look_direction(antenna, x, topo);
    let v = lifted_velocity(x, nu, topo);
    2.0 * s * dot3(u, v)
}

/// Propagation phase `omega (R + B) / c0` in radians.
pub fn phase(omega: f64, antenna: Vec3, s: f64, x: Vec2, nu: Vec2, topo: &dyn Topography, c0: f64) -> f64 {
    omega * (range(antenna, x, topo) + range_variation(antenna, s, x, nu, topo)) / c0
}

/// Slowest speed that leaves a range-resolution cell within the aperture,
/// `c0 / (2 B S)`.
pub fn min_detectable_speed(bandwidth: f64, aperture_time: f64, c0: f64) -> f64 {
    c0 / (2.0 * bandwidth * aperture_time)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[derive(Debug)]
    struct SlopeX;
    impl Topography for SlopeX {
        fn height(&self, p: Vec2) -> f64 {
            0.1 * p[0]
        }
        fn gradient(&self, _p: Vec2) -> Vec2 {
            [0.1, 0.0]
        }
    }

    fn reference_orbit() -> Trajectory {
        Trajectory::circular([11_000.0, 11_000.0], 11_000.0, 6_500.0, 262.5).unwrap()
    }

    #[test]
    fn scatterer_position_examples() {
        assert_eq!(scatterer_position([0.0, 0.0], [0.0, 0.0], &Flat, 17.0), [0.0, 0.0, 0.0]);
        assert_eq!(scatterer_position([10.0, 0.0], [2.0, 0.0], &Flat, 3.0), [16.0, 0.0, 0.0]);
        let z = scatterer_position([0.0, 0.0], [1.0, 1.0], &SlopeX, 1.0);
        assert_relative_eq!(z[2], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn range_examples() {
        assert_relative_eq!(range([0.0, 0.0, 250.0], [0.0, 0.0], &Flat), 500.0);
        let gamma0 = reference_orbit().position(0.0);
        assert_relative_eq!(gamma0[0], 22_000.0);
        assert_relative_eq!(gamma0[1], 11_000.0, epsilon = 1e-9);
        let expected = 2.0 * (22_000f64.powi(2) + 11_000f64.powi(2) + 6_500f64.powi(2)).sqrt();
        let r = range(gamma0, [0.0, 0.0], &Flat);
        assert_relative_eq!(r, expected, max_relative = 1e-12);
        assert!((r - 50_882.2).abs() < 0.1);
    }

    #[test]
    fn range_symmetric_about_orbit_axis() {
        // x and its mirror across the line y = x, viewed from the orbit
        // point at 45 degrees, which lies on that line.
        let orbit = reference_orbit();
        let gamma = orbit.position(262.5 / 8.0);
        let a = range(gamma, [30.0, 70.0], &Flat);
        let b = range(gamma, [70.0, 30.0], &Flat);
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn range_variation_examples() {
        let orbit = reference_orbit();
        let g0 = orbit.position(0.0);
        assert_eq!(range_variation(g0, 0.0, [5.0, 5.0], [3.0, -2.0], &Flat), 0.0);
        let g = orbit.position(40.0);
        assert_eq!(range_variation(g, 40.0, [5.0, 5.0], [0.0, 0.0], &Flat), 0.0);
        // velocity orthogonal to the horizontal look direction
        let u = look_direction(g, [5.0, 5.0], &Flat);
        let nu = [-u[1], u[0]];
        assert!(range_variation(g, 40.0, [5.0, 5.0], nu, &Flat).abs() < 1e-9);
    }

    #[test]
    fn range_variation_is_linear() {
        let orbit = reference_orbit();
        let g = orbit.position(100.0);
        let x = [12.0, 40.0];
        let b1 = range_variation(g, 100.0, x, [2.0, 3.0], &Flat);
        let b2 = range_variation(g, 100.0, x, [4.0, 6.0], &Flat);
        let b3 = range_variation(g, 200.0, x, [2.0, 3.0], &Flat);
        assert_relative_eq!(b2, 2.0 * b1, max_relative = 1e-12);
        assert_relative_eq!(b3, 2.0 * b1, max_relative = 1e-12);
    }

    #[test]
    fn phase_examples() {
        let orbit = reference_orbit();
        let g = orbit.position(12.0);
        let x = [3.0, 4.0];
        let nu = [2.0, -6.0];
        assert_eq!(phase(0.0, g, 12.0, x, nu, &Flat, SPEED_OF_LIGHT), 0.0);
        let p1 = phase(1e9, g, 12.0, x, nu, &Flat, SPEED_OF_LIGHT);
        let p2 = phase(2e9, g, 12.0, x, nu, &Flat, SPEED_OF_LIGHT);
        assert_relative_eq!(p2, 2.0 * p1, max_relative = 1e-14);
        let p = phase(1.0, [0.0, 0.0, SPEED_OF_LIGHT / 2.0], 0.0, [0.0, 0.0], [0.0, 0.0], &Flat, SPEED_OF_LIGHT);
        assert_relative_eq!(p, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn min_detectable_speed_examples() {
        let v = min_detectable_speed(50e6, 262.5, SPEED_OF_LIGHT);
        assert!((v - 0.01143).abs() < 1e-5, "{v}");
        assert_relative_eq!(min_detectable_speed(50e6, 525.0, SPEED_OF_LIGHT), v / 2.0);
        assert_relative_eq!(min_detectable_speed(SPEED_OF_LIGHT / 2.0, 1.0, SPEED_OF_LIGHT), 1.0);
    }

    #[test]
    fn range_bounded_below_by_altitude() {
        let orbit = reference_orbit();
        let scene = SceneGrid::new(100.0, 100.0, 7, 7).unwrap();
        for s in orbit.slow_time_samples(17) {
            let g = orbit.position(s);
            for x in scene.centers() {
                assert!(range(g, x, &Flat) >= 2.0 * 6_500.0);
            }
        }
    }

    #[test]
    fn circular_orbit_keeps_radius() {
        let orbit = reference_orbit();
        for s in orbit.slow_time_samples(33) {
            let g = orbit.position(s);
            let r = ((g[0] - 11_000.0).powi(2) + (g[1] - 11_000.0).powi(2)).sqrt();
            assert_relative_eq!(r, 11_000.0, max_relative = 1e-12);
        }
        if let Trajectory::Circular(c) = orbit {
            assert!((c.speed() - 263.3).abs() < 0.1);
        }
    }

    #[test]
    fn velocity_grid_centers_zero() {
        let g = VelocityGrid::new([-20.0, -20.0], [20.0, 20.0], 21, 21).unwrap();
        assert_eq!(g.len(), 441);
        assert_eq!(g.stationary_index(), 220);
        assert_eq!(g.sample(220), [0.0, 0.0]);
        assert_eq!(g.spacing(), [2.0, 2.0]);
        assert_eq!(g.index_of([14.0, 12.0]).map(|i| g.sample(i)), Some([14.0, 12.0]));
        assert_eq!(g.index_of([1.0, 0.0]), None);

        let desk = VelocityGrid::new([-18.0, -18.0], [18.0, 18.0], 7, 7).unwrap();
        assert_eq!(desk.stationary_index(), 24);
    }

    #[test]
    fn velocity_grid_without_zero_is_rejected() {
        assert!(matches!(
            VelocityGrid::new([-20.0, -20.0], [20.0, 20.0], 20, 21),
            Err(Error::NoZeroVelocity)
        ));
        assert!(VelocityGrid::new([0.0, 0.0], [0.0, 0.0], 1, 1).is_ok());
    }

    #[test]
    fn scene_grid_indexing() {
        let g = SceneGrid::new(100.0, 100.0, 31, 31).unwrap();
        assert_eq!(g.len(), 961);
        assert_relative_eq!(g.spacing()[0], 100.0 / 30.0);
        for k in [0, 1, 30, 31, 500, 960] {
            assert_eq!(g.index(g.pixel(k)).unwrap(), k);
        }
        assert_eq!(g.center(960), [100.0, 100.0]);
        assert!(g.index(Pixel::new(31, 0)).is_err());
    }

    #[test]
    fn radar_frequencies() {
        let r = RadarParams::new(9.45e9, 50e6, 100).unwrap();
        let w = r.angular_frequencies();
        assert_eq!(w.len(), 100);
        assert!(w.windows(2).all(|p| p[1] > p[0]));
        assert_relative_eq!(w[0], 2.0 * PI * (9.45e9 - 25e6));
        assert_relative_eq!(w[99], 2.0 * PI * (9.45e9 + 25e6), max_relative = 1e-14);
        assert!(RadarParams::new(9.45e9, 0.0, 10).is_err());
        assert!(RadarParams::new(9.45e9, 50e6, 0).is_err());
    }

    #[test]
    fn waypoint_interpolation() {
        let w = WaypointTrajectory::new(vec![0.0, 10.0], vec![[0.0, 0.0, 100.0], [10.0, 0.0, 100.0]]).unwrap();
        let t = Trajectory::Waypoints(w);
        assert_eq!(t.position(5.0), [5.0, 0.0, 100.0]);
        assert_eq!(t.aperture_time(), 10.0);
        assert!(WaypointTrajectory::new(vec![1.0], vec![[0.0; 3]]).is_err());
    }

    #[test]
    fn geometry_rejects_antenna_below_terrain() {
        let scene = SceneGrid::new(100.0, 100.0, 3, 3)
            .unwrap()
            .with_topography(Arc::new(Planar {
                offset: 0.0,
                slope: [100.0, 0.0],
            }));
        let vel = VelocityGrid::new([0.0, 0.0], [0.0, 0.0], 1, 1).unwrap();
        let traj = Trajectory::circular([0.0, 0.0], 10.0, 500.0, 1.0).unwrap();
        let radar = RadarParams::new(9.45e9, 50e6, 4).unwrap();
        assert!(AcquisitionGeometry::new(scene, vel, traj, radar, 4).is_err());
    }
}
