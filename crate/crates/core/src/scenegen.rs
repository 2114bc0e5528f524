//! Synthetic scenes, Rayleigh clutter, and additive noise.
//!
//! All ratios follow the `10 log10(std ratio)` convention on amplitude
//! standard deviations. Every random draw comes from a seeded
//! [`ChaCha8Rng`], so a seed fully determines a scene and its noise.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::forward::{complex_std, Measurements};
use crate::grids::{AcquisitionGeometry, Pixel, Vec2};
use num_complex::Complex64;

/// SNR values above this are treated as noiseless.
pub const MAX_SNR_DB: f64 = 300.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PointTarget {
    pub pixel: Pixel,
    pub velocity: Vec2,
    pub reflectivity: f64,
}

impl PointTarget {
    pub fn new(pixel: Pixel, velocity: Vec2, reflectivity: f64) -> Self {
        Self {
            pixel,
            velocity,
            reflectivity,
        }
    }

    pub fn is_moving(&self) -> bool {
        self.velocity != [0.0, 0.0]
    }
}

/// A stationary rectangle of pixels with uniform reflectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedTarget {
    pub origin: Pixel,
    pub rows: usize,
    pub cols: usize,
    pub reflectivity: f64,
}

impl ExtendedTarget {
    pub fn new(origin: Pixel, rows: usize, cols: usize, reflectivity: f64) -> Self {
        Self {
            origin,
            rows,
            cols,
            reflectivity,
        }
    }

    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        (0..self.rows).flat_map(move |r| {
            (0..self.cols).map(move |c| Pixel::new(self.origin.row + r, self.origin.col + c))
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthScene {
    pub point_targets: Vec<PointTarget>,
    pub extended_targets: Vec<ExtendedTarget>,
    /// Stationary clutter amplitude per pixel, row-major.
    pub clutter: Option<Vec<f64>>,
    pub seed: u64,
}

impl GroundTruthScene {
    pub fn movers(&self) -> impl Iterator<Item = &PointTarget> {
        self.point_targets.iter().filter(|t| t.is_moving())
    }

    pub fn mover_count(&self) -> usize {
        self.movers().count()
    }

    /// Copy without clutter or stationary targets: the moving foreground.
    pub fn movers_only(&self) -> Self {
        Self {
            point_targets: self.movers().cloned().collect(),
            extended_targets: Vec::new(),
            clutter: None,
            seed: self.seed,
        }
    }

    /// Copy holding only stationary content (targets and clutter).
    pub fn stationary_only(&self) -> Self {
        Self {
            point_targets: self.point_targets.iter().filter(|t| !t.is_moving()).cloned().collect(),
            extended_targets: self.extended_targets.clone(),
            clutter: self.clutter.clone(),
            seed: self.seed,
        }
    }

    fn occupied(&self, geometry: &AcquisitionGeometry) -> Vec<bool> {
        let mut used = vec![false; geometry.scene.len()];
        for t in &self.point_targets {
            if let Ok(k) = geometry.scene.index(t.pixel) {
                used[k] = true;
            }
        }
        for e in &self.extended_targets {
            for p in e.pixels() {
                if let Ok(k) = geometry.scene.index(p) {
                    used[k] = true;
                }
            }
        }
        used
    }
}

/// What a sweep point perturbs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    Snr { db: f64 },
    Scr { db: f64 },
    /// Clutter fixed at `sigma_b`, noise chosen to hit the target ratio.
    Scnr { db: f64, sigma_b: f64 },
}

impl NoiseSpec {
    pub fn level_db(&self) -> f64 {
        match *self {
            NoiseSpec::Snr { db } | NoiseSpec::Scr { db } | NoiseSpec::Scnr { db, .. } => db,
        }
    }
}

/// Independent RNG stream for `(seed, a, b)`.
pub fn substream(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((a << 32) ^ b);
    rng
}

/// Nonzero grid velocities at or above the minimum detectable speed.
pub fn eligible_velocities(geometry: &AcquisitionGeometry) -> Vec<Vec2> {
    let vmin = geometry.min_detectable_speed();
    geometry
        .velocities
        .samples()
        .iter()
        .copied()
        .filter(|v| {
            let speed = v[0].hypot(v[1]);
            speed > 0.0 && speed >= vmin
        })
        .collect()
}

fn add_random_movers<R: Rng>(
    scene: &mut GroundTruthScene,
    geometry: &AcquisitionGeometry,
    count: usize,
    rng: &mut R,
) -> Result<()> {
    let used = scene.occupied(geometry);
    let free: Vec<usize> = (0..used.len()).filter(|&k| !used[k]).collect();
    if count > free.len() {
        return Err(Error::TooManyMovers {
            requested: count,
            available: free.len(),
        });
    }
    let velocities = eligible_velocities(geometry);
    if count > 0 && velocities.is_empty() {
        return Err(Error::GridTooSmall("no nonzero velocity on the grid".into()));
    }
    let mut picks = sample(rng, free.len(), count).into_vec();
    picks.sort_unstable();
    for i in picks {
        let v = velocities[rng.gen_range(0..velocities.len())];
        scene
            .point_targets
            .push(PointTarget::new(geometry.scene.pixel(free[i]), v, 1.0));
    }
    Ok(())
}

/// Scripted pixels `[x, y]` (1-based, x along columns) and velocities.
const SCRIPTED: [([usize; 2], Vec2); 6] = [
    ([10, 5], [14.0, 12.0]),
    ([10, 6], [2.0, -4.0]),
    ([29, 12], [6.0, 10.0]),
    ([3, 14], [6.0, 10.0]),
    ([11, 17], [8.0, -12.0]),
    ([12, 18], [8.0, -14.0]),
];

/// Full-size scene: six scripted movers (an adjacent pair, a far-apart
/// pair with equal velocity, a near pair with similar velocities), six
/// random movers, and a stationary 5 x 5 extended target. Needs a grid
/// of at least 29 x 23 pixels whose velocity grid contains the scripted
/// velocities.
pub fn full_scene(seed: u64, geometry: &AcquisitionGeometry) -> Result<GroundTruthScene> {
    let grid = &geometry.scene;
    if grid.nx() < 29 || grid.ny() < 23 {
        return Err(Error::GridTooSmall(format!(
            "scripted layout needs at least 29 x 23 pixels, got {} x {}",
            grid.nx(),
            grid.ny()
        )));
    }
    let mut scene = GroundTruthScene {
        seed,
        ..Default::default()
    };
    for ([x, y], v) in SCRIPTED {
        if geometry.velocities.index_of(v).is_none() {
            return Err(Error::OffGridVelocity(v[0], v[1]));
        }
        scene
            .point_targets
            .push(PointTarget::new(Pixel::new(y - 1, x - 1), v, 1.0));
    }
    let (ny, nx) = (grid.ny(), grid.nx());
    scene.extended_targets.push(ExtendedTarget::new(
        Pixel::new(ny * 3 / 4 - 2, nx * 3 / 5 - 2),
        5,
        5,
        1.0,
    ));
    let mut rng = substream(seed, 0, 0);
    add_random_movers(&mut scene, geometry, 6, &mut rng)?;
    Ok(scene)
}

fn nearest_moving_velocity(geometry: &AcquisitionGeometry, v: Vec2, exclude: Option<Vec2>) -> Vec2 {
    eligible_velocities(geometry)
        .into_iter()
        .filter(|&c| Some(c) != exclude)
        .min_by(|a, b| {
            let da = (a[0] - v[0]).hypot(a[1] - v[1]);
            let db = (b[0] - v[0]).hypot(b[1] - v[1]);
            da.total_cmp(&db)
        })
        .unwrap_or(v)
}

/// Reduced-size analogue of [`full_scene`] for small grids: the same
/// three scripted pairs placed proportionally, velocities snapped to the
/// nearest grid sample, `n_random` random movers, and a 3 x 3 extended
/// target. Needs at least 9 x 9 pixels.
pub fn desk_scene(seed: u64, geometry: &AcquisitionGeometry, n_random: usize) -> Result<GroundTruthScene> {
    let grid = &geometry.scene;
    let (ny, nx) = (grid.ny(), grid.nx());
    if nx < 9 || ny < 9 {
        return Err(Error::GridTooSmall(format!(
            "desk layout needs at least 9 x 9 pixels, got {nx} x {ny}"
        )));
    }
    let snap = |v: Vec2| nearest_moving_velocity(geometry, v, None);
    let pair_a = (snap(SCRIPTED[0].1), snap(SCRIPTED[1].1));
    let far = snap(SCRIPTED[2].1);
    let near_a = snap(SCRIPTED[4].1);
    let near_b = nearest_moving_velocity(geometry, SCRIPTED[5].1, Some(near_a));

    let placements = [
        (Pixel::new(ny / 4, nx / 4), pair_a.0),
        (Pixel::new(ny / 4, nx / 4 + 1), pair_a.1),
        (Pixel::new(ny - 3, 1), far),
        (Pixel::new(1, nx - 3), far),
        (Pixel::new(ny / 2, nx * 2 / 3), near_a),
        (Pixel::new(ny / 2 + 1, nx * 2 / 3 + 1), near_b),
    ];
    let mut scene = GroundTruthScene {
        seed,
        ..Default::default()
    };
    for (p, v) in placements {
        scene.point_targets.push(PointTarget::new(p, v, 1.0));
    }
    scene
        .extended_targets
        .push(ExtendedTarget::new(Pixel::new(ny - 4, nx - 5), 3, 3, 1.0));
    let mut rng = substream(seed, 0, 0);
    add_random_movers(&mut scene, geometry, n_random, &mut rng)?;
    Ok(scene)
}

/// `n_movers` random movers on distinct pixels, nothing stationary.
pub fn dense_scene(seed: u64, geometry: &AcquisitionGeometry, n_movers: usize) -> Result<GroundTruthScene> {
    let n = geometry.scene.len();
    if n_movers > n {
        return Err(Error::TooManyMovers {
            requested: n_movers,
            available: n,
        });
    }
    let mut scene = GroundTruthScene {
        seed,
        ..Default::default()
    };
    let mut rng = substream(seed, 0, 0);
    add_random_movers(&mut scene, geometry, n_movers, &mut rng)?;
    Ok(scene)
}

/// Rayleigh scale whose amplitude standard deviation is `sigma_b`.
pub fn rayleigh_scale(sigma_b: f64) -> f64 {
    sigma_b / ((4.0 - std::f64::consts::PI) / 2.0).sqrt()
}

/// `n` independent Rayleigh amplitudes with standard deviation `sigma_b`.
pub fn rayleigh_clutter<R: Rng>(n: usize, sigma_b: f64, rng: &mut R) -> Vec<f64> {
    let scale = rayleigh_scale(sigma_b);
    (0..n)
        .map(|_| {
            // inverse CDF; 1 - u lies in (0, 1]
            let u: f64 = rng.gen();
            scale * (-2.0 * (1.0 - u).ln()).sqrt()
        })
        .collect()
}

/// Sets Rayleigh clutter on every pixel of `scene`.
pub fn add_rayleigh_clutter<R: Rng>(
    mut scene: GroundTruthScene,
    geometry: &AcquisitionGeometry,
    sigma_b: f64,
    rng: &mut R,
) -> Result<GroundTruthScene> {
    if !(sigma_b >= 0.0 && sigma_b.is_finite()) {
        return Err(Error::InvalidConfig(format!("clutter sigma must be nonnegative, got {sigma_b}")));
    }
    scene.clutter = Some(rayleigh_clutter(geometry.scene.len(), sigma_b, rng));
    Ok(scene)
}

pub(crate) fn real_std(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Standard deviation of the moving-target image over all pixels.
pub fn foreground_std(scene: &GroundTruthScene, geometry: &AcquisitionGeometry) -> Result<f64> {
    let mut image = vec![0.0; geometry.scene.len()];
    for t in scene.movers() {
        image[geometry.scene.index(t.pixel)?] = t.reflectivity;
    }
    Ok(real_std(&image))
}

/// Rescales the clutter so that `10 log10(sigma_f / sigma_b) = scr_db`.
/// Draws fresh Rayleigh clutter first when the scene has none. Mover
/// amplitudes are untouched.
pub fn set_scr<R: Rng>(
    mut scene: GroundTruthScene,
    geometry: &AcquisitionGeometry,
    scr_db: f64,
    rng: &mut R,
) -> Result<GroundTruthScene> {
    if scene.mover_count() == 0 {
        return Err(Error::NoMovers);
    }
    let sigma_f = foreground_std(&scene, geometry)?;
    let target = sigma_f / 10f64.powf(scr_db / 10.0);
    let mut clutter = match scene.clutter.take() {
        Some(c) if real_std(&c) > 0.0 => c,
        _ => rayleigh_clutter(geometry.scene.len(), target.max(f64::MIN_POSITIVE), rng),
    };
    let factor = target / real_std(&clutter);
    clutter.iter_mut().for_each(|c| *c *= factor);
    scene.clutter = Some(clutter);
    Ok(scene)
}

/// Complex white Gaussian noise with total standard deviation `sigma`.
pub fn complex_noise<R: Rng>(n: usize, sigma: f64, rng: &mut R) -> Vec<Complex64> {
    let s = sigma / std::f64::consts::SQRT_2;
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(s * re, s * im)
        })
        .collect()
}

fn with_noise<R: Rng>(d: &Measurements, sigma_n: f64, rng: &mut R) -> Measurements {
    let noise = complex_noise(d.len(), sigma_n, rng);
    let data = d.data().iter().zip(noise).map(|(a, b)| a + b).collect();
    Measurements::new(data, d.n_slow(), d.n_freq()).expect("same shape")
}

/// Adds noise with `sigma_n = sigma_d / 10^(snr_db / 10)`.
pub fn add_awgn<R: Rng>(d: &Measurements, snr_db: f64, rng: &mut R) -> Result<Measurements> {
    let sigma_d = d.std_dev();
    if sigma_d == 0.0 {
        return Err(Error::ZeroData);
    }
    if snr_db.is_nan() {
        return Err(Error::InvalidConfig("SNR is NaN".into()));
    }
    let sigma_n = sigma_d / 10f64.powf(snr_db.min(MAX_SNR_DB) / 10.0);
    Ok(with_noise(d, sigma_n, rng))
}

/// Noise level giving `10 log10(sigma_d / (sigma_c + sigma_n)) = scnr_db`.
pub fn scnr_noise_sigma(sigma_d: f64, sigma_c: f64, scnr_db: f64) -> Result<f64> {
    let sigma_n = sigma_d / 10f64.powf(scnr_db / 10.0) - sigma_c;
    if sigma_n < 0.0 {
        return Err(Error::ScnrUnreachable {
            requested_db: scnr_db,
            max_db: 10.0 * (sigma_d / sigma_c).log10(),
        });
    }
    Ok(sigma_n)
}

/// Returns `movers + clutter + noise`, with the noise level set so the
/// signal-to-clutter-plus-noise ratio equals `scnr_db`.
pub fn set_scnr<R: Rng>(
    movers: &Measurements,
    clutter: &Measurements,
    scnr_db: f64,
    rng: &mut R,
) -> Result<Measurements> {
    let sigma_d = movers.std_dev();
    if sigma_d == 0.0 {
        return Err(Error::ZeroData);
    }
    let sigma_n = scnr_noise_sigma(sigma_d, complex_std(clutter.data()), scnr_db)?;
    Ok(with_noise(&movers.add(clutter)?, sigma_n, rng))
}
