use super::assign::CostMatrix;
use super::{AppearanceMetric, Track};
use crate::embednet::{sq_euclidean, EmbeddingVec};
use crate::geometry::{centroid_distance, BoundingBox};
use crate::{Error, Result};

/// Centroid distance normalized by the image diagonal, clipped to 1.
pub fn motion_cost(track_boxes: &[BoundingBox], detection_boxes: &[BoundingBox], image_diag: f64) -> Result<CostMatrix> {
    if !(image_diag > 0.0) {
        return Err(Error::Validation(format!("image diagonal must be positive, got {image_diag}")));
    }
    Ok(CostMatrix::from_fn(track_boxes.len(), detection_boxes.len(), |t, d| {
        (centroid_distance(&track_boxes[t], &detection_boxes[d]) / image_diag).min(1.0)
    }))
}

/// Distance between two unit embeddings rescaled into `[0, 1]`.
pub fn appearance_distance(metric: AppearanceMetric, a: &EmbeddingVec, b: &EmbeddingVec) -> f64 {
    let d = match metric {
        AppearanceMetric::SqEuclidean => sq_euclidean(a, b) / 4.0,
        AppearanceMetric::Cosine => (1.0 - a.dot(b)) / 2.0,
    };
    d.clamp(0.0, 1.0)
}

/// Smallest gallery-to-detection distance for every (track, detection).
pub fn appearance_cost(tracks: &[&Track], embeddings: &[EmbeddingVec], metric: AppearanceMetric) -> Result<CostMatrix> {
    if let Some(t) = tracks.iter().find(|t| t.gallery.is_empty()) {
        return Err(Error::Validation(format!("track {} has an empty appearance gallery", t.track_id)));
    }
    Ok(CostMatrix::from_fn(tracks.len(), embeddings.len(), |t, d| {
        tracks[t]
            .gallery
            .iter()
            .map(|g| appearance_distance(metric, g, &embeddings[d]))
            .fold(f64::INFINITY, f64::min)
    }))
}

/// `lambda * motion + (1 - lambda) * appearance`, entrywise.
pub fn combined_cost(motion: &CostMatrix, appearance: &CostMatrix, lambda: f64) -> Result<CostMatrix> {
    if motion.shape() != appearance.shape() {
        return Err(Error::Shape(format!(
            "motion {:?} vs appearance {:?}",
            motion.shape(),
            appearance.shape()
        )));
    }
    let (rows, cols) = motion.shape();
    Ok(CostMatrix::from_fn(rows, cols, |r, c| {
        lambda * motion.get(r, c) + (1.0 - lambda) * appearance.get(r, c)
    }))
}
