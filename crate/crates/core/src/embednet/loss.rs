use super::EmbeddingVec;

pub fn sq_euclidean(a: &EmbeddingVec, b: &EmbeddingVec) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// `1 - cos`, for unit vectors equal to half the squared Euclidean distance.
pub fn cosine_distance(a: &EmbeddingVec, b: &EmbeddingVec) -> f64 {
    1.0 - a.dot(b)
}

/// Hinge on the gap between anchor-positive and anchor-negative squared
/// distances: `max(d(a,p) - d(a,n) + margin, 0)`.
pub fn triplet_loss(anchor: &EmbeddingVec, positive: &EmbeddingVec, negative: &EmbeddingVec, margin: f64) -> f64 {
    hinge(sq_euclidean(anchor, positive), sq_euclidean(anchor, negative), margin)
}

pub(crate) fn hinge(d_ap: f64, d_an: f64, margin: f64) -> f64 {
    (d_ap - d_an + margin).max(0.0)
}
