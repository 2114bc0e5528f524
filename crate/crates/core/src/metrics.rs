//! Reconstruction quality and detection scoring.

use std::collections::HashSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grids::{AcquisitionGeometry, Pixel};
use crate::psr::{frobenius, PsrMatrix};
use crate::scenegen::GroundTruthScene;

/// `|Q_true - (Qs + Qv)|_F`.
pub fn l2_error(q_true: &PsrMatrix, q_s: &PsrMatrix, q_nu: &PsrMatrix) -> Result<f64> {
    for got in [q_s.shape(), q_nu.shape()] {
        if got != q_true.shape() {
            return Err(Error::ShapeMismatch {
                expected: q_true.shape(),
                got,
            });
        }
    }
    Ok(frobenius(&(q_true.values() - q_s.values() - q_nu.values())))
}

/// Global-statistics SSIM with `K1 = 0.01`, `K2 = 0.03` and dynamic range
/// `L = max(max a, max b)`. Two all-zero images score 1.
pub fn ssim(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(1.0);
    }
    let l = a.iter().chain(b).copied().fold(0.0, f64::max);
    if l == 0.0 {
        return Ok(1.0);
    }
    let c1 = (0.01 * l).powi(2);
    let c2 = (0.03 * l).powi(2);
    let n = a.len() as f64;
    let mu_a = a.iter().sum::<f64>() / n;
    let mu_b = b.iter().sum::<f64>() / n;
    let (mut var_a, mut var_b, mut cov) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - mu_a, y - mu_b);
        var_a += da * da;
        var_b += db * db;
        cov += da * db;
    }
    var_a /= n;
    var_b /= n;
    cov /= n;
    Ok((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2) / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Detection {
    pub pixel_index: usize,
    pub velocity_index: usize,
    pub amplitude: f64,
}

/// Entries of `q_nu` strictly above `10^(threshold_db / 20) * max(q_nu)`,
/// in row-major order.
pub fn detect(q_nu: &PsrMatrix, threshold_db: f64) -> Vec<Detection> {
    let max = q_nu.max();
    if max <= 0.0 {
        return Vec::new();
    }
    let cut = 10f64.powf(threshold_db / 20.0) * max;
    q_nu.values()
        .indexed_iter()
        .filter(|(_, &v)| v > cut || (threshold_db >= 0.0 && v == max))
        .map(|((row, k), &v)| Detection {
            pixel_index: k,
            velocity_index: row,
            amplitude: v,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub detections: Vec<Detection>,
    /// `TP / (TP + FP)`; `None` without detections.
    pub ppv: Option<f64>,
}

/// Scores `detections` against the movers of `truth`. A detection counts
/// only with both the right pixel and the right velocity.
pub fn ppv(detections: &[Detection], truth: &GroundTruthScene, geometry: &AcquisitionGeometry) -> Result<DetectionReport> {
    let mut movers = HashSet::new();
    for t in truth.movers() {
        let k = geometry.scene.index(t.pixel)?;
        let row = geometry
            .velocities
            .index_of(t.velocity)
            .ok_or(Error::OffGridVelocity(t.velocity[0], t.velocity[1]))?;
        movers.insert((k, row));
    }
    let mut hit = HashSet::new();
    let mut fp = 0;
    for d in detections {
        let key = (d.pixel_index, d.velocity_index);
        if movers.contains(&key) {
            hit.insert(key);
        } else {
            fp += 1;
        }
    }
    let tp = detections.len() - fp;
    Ok(DetectionReport {
        true_positives: tp,
        false_positives: fp,
        false_negatives: movers.len() - hit.len(),
        detections: detections.to_vec(),
        ppv: (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64),
    })
}

/// False-positive count of [`ppv`] at `threshold_db`.
pub fn count_false_alarms(
    q_nu: &PsrMatrix,
    truth: &GroundTruthScene,
    geometry: &AcquisitionGeometry,
    threshold_db: f64,
) -> Result<usize> {
    Ok(ppv(&detect(q_nu, threshold_db), truth, geometry)?.false_positives)
}

/// Ground-truth moving-target image: mover reflectivity at its pixel.
pub fn truth_moving_image(truth: &GroundTruthScene, geometry: &AcquisitionGeometry) -> Result<Vec<f64>> {
    let mut img = vec![0.0; geometry.scene.len()];
    for t in truth.movers() {
        img[geometry.scene.index(t.pixel)?] = t.reflectivity;
    }
    Ok(img)
}

/// Fraction of `image` energy that falls on `pixels`.
pub fn energy_fraction(image: &[f64], pixels: &[usize]) -> f64 {
    let total: f64 = image.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return 0.0;
    }
    pixels.iter().map(|&k| image[k] * image[k]).sum::<f64>() / total
}

/// Pixel of each detection, for reporting.
pub fn detection_pixels(detections: &[Detection], geometry: &AcquisitionGeometry) -> Vec<Pixel> {
    detections.iter().map(|d| geometry.scene.pixel(d.pixel_index)).collect()
}
