//! Config-driven experiments: scene, data, recovery and scoring for every
//! sweep point and realization, plus scaling benchmarks and image output.
//!
//! A config is a TOML document:
//!
//! ```toml
//! seed = 7
//!
//! [geometry]
//! extent_m = [100.0, 100.0]
//! pixels = [15, 15]            # nx, ny
//! velocity_min_mps = [-18.0, -18.0]
//! velocity_max_mps = [18.0, 18.0]
//! velocity_samples = [7, 7]
//! n_slow = 128
//! n_freq = 64
//! trajectory = { center_km = [11.0, 11.0], radius_km = 11.0, altitude_km = 6.5, aperture_s = 262.5 }
//! radar = { center_frequency_ghz = 9.45, bandwidth_mhz = 50.0 }
//!
//! [scene]
//! kind = "desk"                # desk | full | dense | toy | explicit
//! random_movers = 2
//!
//! [sweep]
//! variable = "snr"             # snr | scr | scnr | lambda | k
//! values = [-12.0, 0.0, 12.0]  # or start / stop / step
//! realizations = 5
//!
//! [solver]
//! name = "pgd"
//! lambda = 0.2                 # any SolverConfig field
//!
//! [output]
//! directory = "out"
//! ```
//!
//! Every key has a default, so an empty document describes the desk-scale
//! SNR experiment.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use ndarray::Array2;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::formats;
use crate::forward::{LiftedOperator, Measurements};
use crate::grids::{AcquisitionGeometry, Pixel, RadarParams, SceneGrid, Trajectory, VelocityGrid};
use crate::instances;
use crate::metrics::{detect, l2_error, ppv, ssim, truth_moving_image};
use crate::psr::{build_psr, moving_image, PsrDecomposition, DEFAULT_DETECTION_DB};
use crate::scenegen::{
    add_awgn, dense_scene, desk_scene, full_scene, set_scnr, set_scr, substream, ExtendedTarget,
    GroundTruthScene, PointTarget,
};
use crate::solvers::{RecoveryProblem, RecoveryResult, Solver, SolverConfig};

/// Above this many `n_slow * M * N` kernel terms a single run takes
/// minutes; the harness warns before starting.
const LARGE_PROBLEM: usize = 200_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub center_km: [f64; 2],
    pub radius_km: f64,
    pub altitude_km: f64,
    pub aperture_s: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            center_km: [11.0, 11.0],
            radius_km: 11.0,
            altitude_km: 6.5,
            aperture_s: 262.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarConfig {
    pub center_frequency_ghz: f64,
    pub bandwidth_mhz: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            center_frequency_ghz: 9.45,
            bandwidth_mhz: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub extent_m: [f64; 2],
    /// `[nx, ny]`.
    pub pixels: [usize; 2],
    pub velocity_min_mps: [f64; 2],
    pub velocity_max_mps: [f64; 2],
    pub velocity_samples: [usize; 2],
    pub n_slow: usize,
    pub n_freq: usize,
    pub trajectory: TrajectoryConfig,
    pub radar: RadarConfig,
}

impl Default for GeometryConfig {
    /// The desk-scale geometry of [`instances::desk_geometry`].
    fn default() -> Self {
        Self {
            extent_m: [instances::DESK_EXTENT; 2],
            pixels: [15, 15],
            velocity_min_mps: [-18.0, -18.0],
            velocity_max_mps: [18.0, 18.0],
            velocity_samples: [7, 7],
            n_slow: instances::DESK_N_SLOW,
            n_freq: instances::DESK_N_FREQ,
            trajectory: TrajectoryConfig::default(),
            radar: RadarConfig::default(),
        }
    }
}

impl GeometryConfig {
    /// Converts to SI units and builds the geometry.
    pub fn build(&self) -> Result<AcquisitionGeometry> {
        let t = &self.trajectory;
        AcquisitionGeometry::new(
            SceneGrid::new(self.extent_m[0], self.extent_m[1], self.pixels[0], self.pixels[1])?,
            VelocityGrid::new(
                self.velocity_min_mps,
                self.velocity_max_mps,
                self.velocity_samples[0],
                self.velocity_samples[1],
            )?,
            Trajectory::circular(
                [t.center_km[0] * 1e3, t.center_km[1] * 1e3],
                t.radius_km * 1e3,
                t.altitude_km * 1e3,
                t.aperture_s,
            )?,
            RadarParams::new(
                self.radar.center_frequency_ghz * 1e9,
                self.radar.bandwidth_mhz * 1e6,
                self.n_freq,
            )?,
            self.n_slow,
        )
    }

    fn kernel_terms(&self) -> usize {
        let m = self.velocity_samples[0] * self.velocity_samples[1];
        let n = self.pixels[0] * self.pixels[1];
        self.n_slow * self.n_freq * m * n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub row: usize,
    pub col: usize,
    #[serde(default)]
    pub velocity: [f64; 2],
    #[serde(default = "unit")]
    pub reflectivity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtendedSpec {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "unit")]
    pub reflectivity: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SceneConfig {
    /// Scripted pairs, an extended target and `random_movers` extra movers.
    Desk { random_movers: usize },
    /// The six scripted movers, six random ones and the extended target;
    /// needs at least 29 x 23 pixels.
    Full,
    /// `movers` random movers and nothing else.
    Dense { movers: usize },
    /// Fixed two-mover scene on the toy geometry.
    Toy,
    Explicit {
        #[serde(default)]
        targets: Vec<TargetSpec>,
        #[serde(default)]
        extended: Vec<ExtendedSpec>,
    },
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig::Desk { random_movers: 2 }
    }
}

impl SceneConfig {
    pub fn build(&self, seed: u64, geometry: &AcquisitionGeometry) -> Result<GroundTruthScene> {
        match self {
            SceneConfig::Desk { random_movers } => desk_scene(seed, geometry, *random_movers),
            SceneConfig::Full => full_scene(seed, geometry),
            SceneConfig::Dense { movers } => dense_scene(seed, geometry, *movers),
            SceneConfig::Toy => instances::toy_scene(geometry),
            SceneConfig::Explicit { targets, extended } => Ok(GroundTruthScene {
                point_targets: targets
                    .iter()
                    .map(|t| PointTarget::new(Pixel::new(t.row, t.col), t.velocity, t.reflectivity))
                    .collect(),
                extended_targets: extended
                    .iter()
                    .map(|e| ExtendedTarget::new(Pixel::new(e.row, e.col), e.rows, e.cols, e.reflectivity))
                    .collect(),
                clutter: None,
                seed,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SweepVariable {
    #[default]
    Snr,
    Scr,
    Scnr,
    Lambda,
    K,
}

impl SweepVariable {
    pub fn name(&self) -> &'static str {
        match self {
            SweepVariable::Snr => "snr",
            SweepVariable::Scr => "scr",
            SweepVariable::Scnr => "scnr",
            SweepVariable::Lambda => "lambda",
            SweepVariable::K => "k",
        }
    }

    /// Whether the sweep value changes the data (as opposed to the solver).
    fn perturbs_data(&self) -> bool {
        matches!(self, SweepVariable::Snr | SweepVariable::Scr | SweepVariable::Scnr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    /// Explicit sweep values; when absent `start..=stop` by `step`, and
    /// `[-12, 0, 12]` when neither is given.
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub step: Option<f64>,
    pub realizations: usize,
    /// Clutter level held fixed during an SCNR sweep.
    pub clutter_scr_db: f64,
    /// Noise added in `lambda` and `k` sweeps; noiseless when absent.
    pub snr_db: Option<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            variable: SweepVariable::Snr,
            values: None,
            start: None,
            stop: None,
            step: None,
            realizations: 5,
            clutter_scr_db: 0.0,
            snr_db: None,
        }
    }
}

impl SweepConfig {
    pub fn points(&self) -> Result<Vec<f64>> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        let points = match (&self.values, self.start, self.stop, self.step) {
            (None, None, None, None) => vec![-12.0, 0.0, 12.0],
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(h)) => {
                if !(h > 0.0) || !(b >= a) {
                    return bad("sweep range needs step > 0 and stop >= start");
                }
                let n = ((b - a) / h + 1e-9).floor() as usize;
                (0..=n).map(|i| a + i as f64 * h).collect()
            }
            _ => return bad("give either sweep.values or all of sweep.start, sweep.stop, sweep.step"),
        };
        if points.is_empty() {
            return bad("sweep has no points");
        }
        if points.iter().any(|v| !v.is_finite()) {
            return bad("sweep values must be finite");
        }
        match self.variable {
            SweepVariable::Lambda if points.iter().any(|&v| v < 0.0) => bad("lambda values must be nonnegative"),
            SweepVariable::K if points.iter().any(|&v| v < 0.0 || v.fract() != 0.0) => {
                bad("k values must be nonnegative integers")
            }
            _ => Ok(points),
        }
    }
}

/// Solver choice plus every [`SolverConfig`] field at the same level.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct SolverBlock {
    pub name: Solver,
    #[serde(flatten)]
    pub config: SolverConfig,
}

// by hand: a flattened struct would silently accept misspelled keys
impl<'de> Deserialize<'de> for SolverBlock {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let mut table = toml::Table::deserialize(deserializer)?;
        let name = match table.remove("name") {
            Some(v) => v.try_into().map_err(D::Error::custom)?,
            None => Solver::default(),
        };
        let config = toml::Value::Table(table).try_into().map_err(D::Error::custom)?;
        Ok(Self { name, config })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub images: bool,
    pub residuals: bool,
    pub manifests: bool,
    /// Write `timing.csv` and wall times in the residual files. These are
    /// the only outputs that differ between identical runs.
    pub timing: bool,
    pub detection_db: f64,
    pub floor_db: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            images: true,
            residuals: true,
            manifests: true,
            timing: true,
            detection_db: DEFAULT_DETECTION_DB,
            floor_db: DEFAULT_DETECTION_DB,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub scene: SceneConfig,
    pub sweep: SweepConfig,
    pub solver: SolverBlock,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            geometry: GeometryConfig::default(),
            scene: SceneConfig::default(),
            sweep: SweepConfig::default(),
            solver: SolverBlock::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hex SHA-256 of the canonical TOML echo.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().fold(String::new(), |mut s, b| {
            write!(s, "{b:02x}").expect("string write");
            s
        }))
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweep.realizations == 0 {
            return Err(Error::Config("sweep.realizations must be at least 1".into()));
        }
        let points = self.sweep.points()?;
        let geometry = self.geometry.build()?;
        match self.sweep.variable {
            SweepVariable::K => {
                if self.solver.name != Solver::Nonconvex {
                    return Err(Error::Config("a k sweep needs solver.name = \"nonconvex\"".into()));
                }
                let mut cfg = self.solver.config.clone();
                cfg.k_cardinality = Some(0);
                cfg.validate(Solver::Nonconvex)?;
            }
            SweepVariable::Lambda => {
                let mut cfg = self.solver.config.clone();
                cfg.lambda = points[0];
                cfg.validate(self.solver.name)?;
            }
            _ => self.solver.config.validate(self.solver.name)?,
        }
        if let SceneConfig::Toy = self.scene {
            if geometry.scene.nx() < 9 || geometry.scene.ny() < 9 {
                return Err(Error::Config("the toy scene needs at least 9 x 9 pixels".into()));
            }
        }
        // catches grid and placement problems before the sweep starts
        let scene = self.scene.build(self.seed, &geometry)?;
        build_psr(&scene, &geometry)?;
        if matches!(self.sweep.variable, SweepVariable::Scr | SweepVariable::Scnr) && scene.mover_count() == 0 {
            return Err(Error::NoMovers);
        }
        Ok(())
    }
}

/// Outcome of one sweep point and realization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub sweep_index: usize,
    pub value: f64,
    pub realization: usize,
    /// `None` when the solver failed; the message is in `failure`.
    pub metrics: Option<RunMetrics>,
    pub failure: Option<String>,
    pub iterations: usize,
    /// Median wall time per iteration, seconds.
    pub median_iteration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunMetrics {
    pub ssim: f64,
    /// Undefined (`None`) when nothing was detected.
    pub ppv: Option<f64>,
    pub l2_error: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

/// Means over the successful realizations of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub value: f64,
    pub ssim: f64,
    /// Mean over realizations where PPV is defined.
    pub ppv: Option<f64>,
    pub l2_error: f64,
    pub tp: f64,
    pub fp: f64,
    pub fn_: f64,
    pub runs: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub config_hash: String,
    pub sweep_variable: SweepVariable,
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentRecord {
    pub fn aggregate_at(&self, value: f64) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.value == value)
    }

    /// `sweep_var,value_db,ssim,ppv,l2_error,tp,fp,fn`, one row per sweep
    /// point. Undefined PPV is written as `NA`.
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("sweep_var,value_db,ssim,ppv,l2_error,tp,fp,fn\n");
        for a in &self.aggregates {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                self.sweep_variable.name(),
                a.value,
                a.ssim,
                fmt_opt(a.ppv),
                a.l2_error,
                a.tp,
                a.fp,
                a.fn_
            )
            .expect("string write");
        }
        s
    }

    /// Per-realization rows with the same columns plus the realization
    /// index, iteration count and failure status.
    pub fn runs_csv(&self) -> String {
        let mut s = String::from("sweep_var,value_db,realization,ssim,ppv,l2_error,tp,fp,fn,iterations,status\n");
        for r in &self.runs {
            let (ssim, ppv, l2, tp, fp, fn_) = match &r.metrics {
                Some(m) => (
                    m.ssim.to_string(),
                    fmt_opt(m.ppv),
                    m.l2_error.to_string(),
                    m.tp.to_string(),
                    m.fp.to_string(),
                    m.fn_.to_string(),
                ),
                None => Default::default(),
            };
            let status = r.failure.as_deref().map(|f| f.replace(',', ";")).unwrap_or_else(|| "ok".into());
            writeln!(
                s,
                "{},{},{},{ssim},{ppv},{l2},{tp},{fp},{fn_},{},{status}",
                self.sweep_variable.name(),
                r.value,
                r.realization,
                r.iterations
            )
            .expect("string write");
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("sweep_var,value_db,realization,iterations,median_iteration_ms\n");
        for r in &self.runs {
            writeln!(
                s,
                "{},{},{},{},{:.6}",
                self.sweep_variable.name(),
                r.value,
                r.realization,
                r.iterations,
                r.median_iteration_s * 1e3
            )
            .expect("string write");
        }
        s
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into())
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn aggregate(value: f64, runs: &[RunRecord]) -> Aggregate {
    let ok: Vec<&RunMetrics> = runs.iter().filter_map(|r| r.metrics.as_ref()).collect();
    let nan = f64::NAN;
    Aggregate {
        value,
        ssim: mean(ok.iter().map(|m| m.ssim)).unwrap_or(nan),
        ppv: mean(ok.iter().filter_map(|m| m.ppv)),
        l2_error: mean(ok.iter().map(|m| m.l2_error)).unwrap_or(nan),
        tp: mean(ok.iter().map(|m| m.tp as f64)).unwrap_or(nan),
        fp: mean(ok.iter().map(|m| m.fp as f64)).unwrap_or(nan),
        fn_: mean(ok.iter().map(|m| m.fn_ as f64)).unwrap_or(nan),
        runs: ok.len(),
        failures: runs.len() - ok.len(),
    }
}

/// Everything produced by one run, kept for file output.
struct RunArtifacts {
    scene: GroundTruthScene,
    data: Measurements,
    result: RecoveryResult,
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    geometry: &'a AcquisitionGeometry,
    op: &'a LiftedOperator,
}

impl Context<'_> {
    fn scene_seed(&self, realization: usize) -> u64 {
        substream(self.cfg.seed, 0, realization as u64).next_u64()
    }

    /// Scene and data for one run. Solver sweeps reuse the stream of the
    /// first point so every value sees the same data.
    fn simulate(&self, sweep_index: usize, value: f64, realization: usize) -> Result<(GroundTruthScene, PsrDecomposition, Measurements)> {
        let stream = if self.cfg.sweep.variable.perturbs_data() { sweep_index } else { 0 };
        let mut rng = substream(self.cfg.seed, 1 + stream as u64, realization as u64);
        let mut scene = self.cfg.scene.build(self.scene_seed(realization), self.geometry)?;
        match self.cfg.sweep.variable {
            SweepVariable::Snr => {
                let psr = build_psr(&scene, self.geometry)?;
                let clean = self.op.forward(psr.total().values())?;
                let d = add_awgn(&clean, value, &mut rng)?;
                Ok((scene, psr, d))
            }
            SweepVariable::Scr => {
                scene = set_scr(scene, self.geometry, value, &mut rng)?;
                let psr = build_psr(&scene, self.geometry)?;
                let d = self.op.forward(psr.total().values())?;
                Ok((scene, psr, d))
            }
            SweepVariable::Scnr => {
                scene = set_scr(scene, self.geometry, self.cfg.sweep.clutter_scr_db, &mut rng)?;
                let psr = build_psr(&scene, self.geometry)?;
                let movers = self.op.forward(psr.q_nu.values())?;
                let clutter = self.op.forward(psr.q_s.values())?;
                let d = set_scnr(&movers, &clutter, value, &mut rng)?;
                Ok((scene, psr, d))
            }
            SweepVariable::Lambda | SweepVariable::K => {
                let psr = build_psr(&scene, self.geometry)?;
                let clean = self.op.forward(psr.total().values())?;
                let d = match self.cfg.sweep.snr_db {
                    Some(db) => add_awgn(&clean, db, &mut rng)?,
                    None => clean,
                };
                Ok((scene, psr, d))
            }
        }
    }

    fn solver_config(&self, value: f64) -> SolverConfig {
        let mut cfg = self.cfg.solver.config.clone();
        match self.cfg.sweep.variable {
            SweepVariable::Lambda => cfg.lambda = value,
            SweepVariable::K => cfg.k_cardinality = Some(value as usize),
            _ => {}
        }
        cfg
    }

    fn run(&self, sweep_index: usize, value: f64, realization: usize) -> Result<(RunRecord, Option<RunArtifacts>)> {
        let (scene, psr, data) = self.simulate(sweep_index, value, realization)?;
        let truth = psr.total();
        let problem = RecoveryProblem::new(self.op, &data)?.with_truth(&truth)?;
        let mut record = RunRecord {
            sweep_index,
            value,
            realization,
            metrics: None,
            failure: None,
            iterations: 0,
            median_iteration_s: 0.0,
        };
        let result = match problem.solve(self.cfg.solver.name, &self.solver_config(value)) {
            Ok(r) => r,
            Err(e @ (Error::Diverged(_) | Error::LineSearchFailed { .. })) => {
                warn!("{} = {value}, realization {realization}: {e}", self.cfg.sweep.variable.name());
                record.failure = Some(e.to_string());
                return Ok((record, None));
            }
            Err(e) => return Err(e),
        };
        let detections = detect(&result.q_nu, self.cfg.output.detection_db);
        let report = ppv(&detections, &scene, self.geometry)?;
        record.metrics = Some(RunMetrics {
            ssim: ssim(&moving_image(&result.q_nu), &truth_moving_image(&scene, self.geometry)?)?,
            ppv: report.ppv,
            l2_error: l2_error(&truth, &result.q_s, &result.q_nu)?,
            tp: report.true_positives,
            fp: report.false_positives,
            fn_: report.false_negatives,
        });
        record.iterations = result.iterations;
        record.median_iteration_s = median(&result.iteration_times);
        Ok((record, Some(RunArtifacts { scene, data, result })))
    }

    fn write_run(&self, dir: &Path, record: &RunRecord, art: &RunArtifacts) -> Result<()> {
        let out = &self.cfg.output;
        let tag = format!(
            "{}{:03}_r{:02}",
            self.cfg.sweep.variable.name(),
            record.sweep_index,
            record.realization
        );
        if out.residuals {
            fs::write(dir.join(format!("{tag}_residuals.csv")), formats::residual_csv(&art.result, out.timing))?;
        }
        if out.manifests {
            fs::write(dir.join(format!("{tag}_scene.csv")), formats::scene_manifest(&art.scene, self.geometry)?)?;
        }
        if out.images {
            let (nx, ny) = (self.geometry.scene.nx(), self.geometry.scene.ny());
            let nu_s = self.op.stationary_index();
            let stationary = art.result.q_s.values().row(nu_s).to_vec();
            let naive: Vec<f64> = self
                .op
                .adjoint_row(&art.data, nu_s)?
                .iter()
                .map(|z| z.norm())
                .collect();
            for (name, image) in [
                ("moving", moving_image(&art.result.q_nu)),
                ("stationary", stationary),
                ("backprojection", naive),
            ] {
                let px = render_image(&image, out.floor_db)?;
                formats::write_pgm(&dir.join(format!("{tag}_{name}.pgm")), nx, ny, &px)?;
            }
        }
        Ok(())
    }
}

fn sweep(cfg: &ExperimentConfig, output: Option<&Path>) -> Result<ExperimentRecord> {
    cfg.validate()?;
    if cfg.geometry.kernel_terms() > LARGE_PROBLEM {
        warn!(
            "{} kernel terms per operator application; expect long runtimes",
            cfg.geometry.kernel_terms()
        );
    }
    let geometry = cfg.geometry.build()?;
    let op = LiftedOperator::new(geometry.clone());
    let ctx = Context {
        cfg,
        geometry: &geometry,
        op: &op,
    };
    let runs_dir = output.map(|d| d.join("runs"));
    if let Some(d) = &runs_dir {
        fs::create_dir_all(d)?;
    }
    let points = cfg.sweep.points()?;
    let mut runs = Vec::new();
    let mut aggregates = Vec::new();
    for (i, &value) in points.iter().enumerate() {
        let started = Instant::now();
        let mut point_runs = Vec::new();
        for realization in 0..cfg.sweep.realizations {
            let (record, artifacts) = ctx.run(i, value, realization)?;
            if let (Some(dir), Some(art)) = (&runs_dir, &artifacts) {
                ctx.write_run(dir, &record, art)?;
            }
            point_runs.push(record);
        }
        let agg = aggregate(value, &point_runs);
        info!(
            "{} = {value}: ssim {:.4}, fp {:.2}, fn {:.2} ({} runs, {:.1} s)",
            cfg.sweep.variable.name(),
            agg.ssim,
            agg.fp,
            agg.fn_,
            agg.runs,
            started.elapsed().as_secs_f64()
        );
        aggregates.push(agg);
        runs.extend(point_runs);
    }
    Ok(ExperimentRecord {
        config_hash: cfg.hash()?,
        sweep_variable: cfg.sweep.variable,
        runs,
        aggregates,
    })
}

/// Runs the sweep without touching the file system.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    sweep(cfg, None)
}

/// Runs the sweep and writes, under `cfg.output.directory`:
/// `metrics.csv`, `metrics_runs.csv`, `timing.csv` (when timing is on),
/// `config.toml` with its `config.sha256`, and per-run residual CSVs,
/// scene manifests and PGM images in `runs/`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    let dir = cfg.output.directory.clone();
    fs::create_dir_all(&dir)?;
    let echo = cfg.to_toml()?;
    fs::write(dir.join("config.toml"), &echo)?;
    fs::write(dir.join("config.sha256"), format!("{}\n", cfg.hash()?))?;
    let record = sweep(cfg, Some(&dir))?;
    fs::write(dir.join("metrics.csv"), record.metrics_csv())?;
    fs::write(dir.join("metrics_runs.csv"), record.runs_csv())?;
    if cfg.output.timing {
        fs::write(dir.join("timing.csv"), record.timing_csv())?;
    }
    Ok(record)
}

/// `20 log10(x / max)` clamped to `[floor_db, 0]` and mapped linearly onto
/// `0..=255`, rounding half to even (so -20 dB with a -40 dB floor is 128).
/// An all-zero input gives a black image.
pub fn render_image(values: &[f64], floor_db: f64) -> Result<Vec<u8>> {
    if !(floor_db < 0.0 && floor_db.is_finite()) {
        return Err(Error::Config(format!("floor_db must be negative, got {floor_db}")));
    }
    if values.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::NotNonnegative);
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        warn!("rendering an all-zero image");
        return Ok(vec![0; values.len()]);
    }
    Ok(values
        .iter()
        .map(|&v| {
            let db = (20.0 * (v / max).log10()).clamp(floor_db, 0.0);
            ((db - floor_db) / -floor_db * 255.0).round_ties_even() as u8
        })
        .collect())
}

/// Median per-iteration time of one solver at one size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingRow {
    pub solver: Solver,
    pub m: usize,
    pub n: usize,
    pub median_iteration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Least-squares slope of `log t` against `log(M N)` per solver.
    pub slopes: Vec<(Solver, f64)>,
}

impl ScalingReport {
    pub fn slope(&self, solver: Solver) -> Option<f64> {
        self.slopes.iter().find(|(s, _)| *s == solver).map(|&(_, v)| v)
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("solver,m,n,mn,median_iteration_ms\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{:.6}",
                r.solver,
                r.m,
                r.n,
                r.m * r.n,
                r.median_iteration_s * 1e3
            )
            .expect("string write");
        }
        for (solver, slope) in &self.slopes {
            writeln!(s, "# {solver} slope {slope:.4}").expect("string write");
        }
        s
    }
}

/// Least-squares slope of `y` on `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Geometry with `m` velocities along one axis (2 m/s apart, so `m` must
/// be odd to include zero) and `n` pixels on a near-square grid. Sampling
/// is minimal because approximate-mode iterations never touch the data.
pub fn scaling_geometry(m: usize, n: usize) -> Result<AcquisitionGeometry> {
    if m.is_multiple_of(2) {
        return Err(Error::Config(format!("velocity count {m} must be odd")));
    }
    let nx = (1..=((n as f64).sqrt() as usize)).rev().find(|&d| n.is_multiple_of(d)).unwrap_or(1);
    let half = (m - 1) as f64;
    AcquisitionGeometry::new(
        SceneGrid::new(100.0, 100.0, nx, n / nx)?,
        VelocityGrid::new([-half, 0.0], [half, 0.0], m, 1)?,
        instances::orbit(),
        RadarParams::new(9.45e9, 50e6, 2)?,
        2,
    )
}

/// Median per-iteration wall time of PGD, ADMM and the nonconvex solver in
/// approximate mode, on a synthetic backprojection so the one-time adjoint
/// is excluded.
pub fn benchmark_scaling(sizes: &[(usize, usize)], iterations: usize) -> Result<ScalingReport> {
    if sizes.len() < 3 {
        return Err(Error::Config("benchmark_scaling needs at least 3 sizes".into()));
    }
    let mn: Vec<f64> = sizes.iter().map(|&(m, n)| (m * n) as f64).collect();
    let (lo, hi) = mn.iter().fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    if hi < 4.0 * lo {
        return Err(Error::Config("sizes must span at least 4x in M N".into()));
    }
    let solvers = [Solver::Pgd, Solver::Admm, Solver::Nonconvex];
    let mut rows = Vec::new();
    for &(m, n) in sizes {
        let geometry = scaling_geometry(m, n)?;
        let op = LiftedOperator::with_cache_limit(geometry, 0);
        let d = Measurements::new(vec![num_complex::Complex64::new(1.0, 0.0); op.measurement_count()], op.n_slow(), op.n_freq())?;
        let mut rng = substream(0, m as u64, n as u64);
        let g = Array2::from_shape_fn((m, n), |_| rng.gen::<f64>());
        let problem = RecoveryProblem::with_backprojection(&op, &d, g)?;
        for solver in solvers {
            let cfg = SolverConfig {
                max_iters: iterations,
                check_every: 0,
                k_cardinality: Some((m * n / 100).max(1)),
                ..Default::default()
            };
            // first pass warms caches and the allocator
            problem.solve(solver, &SolverConfig { max_iters: 2, ..cfg.clone() })?;
            let result = problem.solve(solver, &cfg)?;
            rows.push(ScalingRow {
                solver,
                m,
                n,
                median_iteration_s: median(&result.iteration_times),
            });
        }
    }
    let slopes = solvers
        .iter()
        .map(|&solver| {
            let (x, y): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter(|r| r.solver == solver)
                .map(|r| (((r.m * r.n) as f64).ln(), r.median_iteration_s.max(1e-12).ln()))
                .unzip();
            (solver, fit_slope(&x, &y))
        })
        .collect();
    Ok(ScalingReport { rows, slopes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_maps_the_documented_levels() {
        let px = render_image(&[1.0, 0.1, 0.01, 0.001, 0.0], -40.0).unwrap();
        // 1 -> 0 dB, 0.1 -> -20 dB (127.5 rounds to even), 0.01 -> floor
        assert_eq!(px, vec![255, 128, 0, 0, 0]);
        assert_eq!(render_image(&[0.0, 0.0], -40.0).unwrap(), vec![0, 0]);
        assert!(render_image(&[-1.0], -40.0).is_err());
        assert!(render_image(&[1.0], 0.0).is_err());
    }

    #[test]
    fn render_is_linear_in_db() {
        // -10 dB of a -40 dB span sits three quarters up
        let v = 10f64.powf(-0.5);
        assert_eq!(render_image(&[1.0, v], -40.0).unwrap()[1], 191);
    }

    #[test]
    fn empty_config_is_the_desk_snr_sweep() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.sweep.points().unwrap(), vec![-12.0, 0.0, 12.0]);
        assert_eq!(cfg.solver.config.lambda, 0.2);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut cfg = ExperimentConfig::default();
        cfg.solver.name = Solver::Admm;
        cfg.solver.config.r = 2.0;
        cfg.scene = SceneConfig::Explicit {
            targets: vec![TargetSpec {
                row: 2,
                col: 3,
                velocity: [6.0, 0.0],
                reflectivity: 1.0,
            }],
            extended: vec![],
        };
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
    }

    #[test]
    fn units_are_converted_at_parse_time() {
        let cfg = ExperimentConfig::from_toml(
            "[geometry]\nradar = { center_frequency_ghz = 9.0, bandwidth_mhz = 25.0 }\n\
             trajectory = { radius_km = 2.0, altitude_km = 1.5 }\n",
        )
        .unwrap();
        let g = cfg.geometry.build().unwrap();
        assert_eq!(g.radar.center_frequency, 9e9);
        assert_eq!(g.radar.bandwidth, 25e6);
        let p = g.trajectory.position(0.0);
        assert!((p[2] - 1500.0).abs() < 1e-9);
        assert!((p[0] - 13_000.0).abs() < 1e-6);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[solver]\nlambdaa = 0.3\n").is_err());
        assert!(ExperimentConfig::from_toml("[sweep]\nvariable = \"snr\"\nrealisations = 2\n").is_err());
        assert!(ExperimentConfig::from_toml("[sweep]\nvariable = \"noise\"\n").is_err());
    }

    #[test]
    fn sweep_ranges_include_the_endpoint() {
        let s = SweepConfig {
            values: None,
            start: Some(-20.0),
            stop: Some(20.0),
            step: Some(2.0),
            ..Default::default()
        };
        let p = s.points().unwrap();
        assert_eq!(p.len(), 21);
        assert_eq!(p[20], 20.0);
        let both = SweepConfig {
            start: Some(0.0),
            ..Default::default()
        };
        assert!(both.points().is_err());
    }

    #[test]
    fn validation_catches_bad_configs() {
        let mut cfg = ExperimentConfig::default();
        cfg.sweep.realizations = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.sweep.variable = SweepVariable::K;
        cfg.sweep.values = Some(vec![4.0]);
        assert!(cfg.validate().is_err(), "k sweep with pgd");
        cfg.solver.name = Solver::Nonconvex;
        assert!(cfg.validate().is_ok());
        cfg.sweep.values = Some(vec![2.5]);
        assert!(cfg.validate().is_err());

        let cfg = ExperimentConfig {
            scene: SceneConfig::Full,
            ..Default::default()
        };
        assert!(cfg.validate().is_err(), "full scene on the desk grid");

        let mut cfg = ExperimentConfig::default();
        cfg.geometry.velocity_samples = [6, 7];
        assert!(cfg.validate().is_err(), "no zero velocity");
    }

    #[test]
    fn aggregates_are_means_of_successful_runs() {
        let metrics = |ssim: f64, ppv: Option<f64>, fp: usize| RunMetrics {
            ssim,
            ppv,
            l2_error: 1.0,
            tp: 2,
            fp,
            fn_: 0,
        };
        let run = |m: Option<RunMetrics>| RunRecord {
            sweep_index: 0,
            value: 3.0,
            realization: 0,
            failure: m.is_none().then(|| "diverged".into()),
            metrics: m,
            iterations: 1,
            median_iteration_s: 0.0,
        };
        let a = aggregate(
            3.0,
            &[
                run(Some(metrics(0.5, Some(1.0), 0))),
                run(Some(metrics(1.0, None, 3))),
                run(None),
            ],
        );
        assert_eq!(a.ssim, 0.75);
        assert_eq!(a.ppv, Some(1.0));
        assert_eq!(a.fp, 1.5);
        assert_eq!((a.runs, a.failures), (2, 1));
    }

    #[test]
    fn slope_of_a_power_law() {
        let x: Vec<f64> = [1.0f64, 2.0, 4.0, 8.0].iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = [1.0f64, 2.0, 4.0, 8.0].iter().map(|v| (3.0 * v.powf(1.5)).ln()).collect();
        assert!((fit_slope(&x, &y) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn scaling_geometry_has_the_requested_shape() {
        let g = scaling_geometry(7, 60).unwrap();
        assert_eq!(g.psr_shape(), (7, 60));
        assert!(scaling_geometry(8, 60).is_err());
        assert!(benchmark_scaling(&[(3, 9), (3, 10)], 2).is_err());
        assert!(benchmark_scaling(&[(3, 9), (3, 10), (3, 11)], 2).is_err());
    }
}
