//! Identity-switch scoring of tracker output against ground truth, the
//! per-object embedding distance matrix, and the staged parameter sweep.

mod sweep;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embednet::{sq_euclidean, EmbeddingVec, Model};
use crate::geometry::{centroid_distance, iou};
use crate::imaging::{extract_patch, FrameSource};
use crate::io::{write_atomic, AnnotatedBox, AnnotationFile};
use crate::tracker::{hungarian_assign, CostMatrix};
use crate::{Error, Result};

pub use sweep::{
    mean_mota, sweep, CostMetric, PreparedSequence, Selection, StageTable, SweepOutcome, SweepRow, SweepStage,
    TrackerOverrides,
};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.3;

/// How ground-truth boxes are paired with track boxes within a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Matching {
    /// Pairs with IoU below the threshold are discarded.
    Iou { threshold: f64 },
    /// Pairs whose centroids are further apart than `max_distance` pixels
    /// are discarded.
    Centroid { max_distance: f64 },
}

impl Default for Matching {
    fn default() -> Self {
        Matching::Iou {
            threshold: DEFAULT_IOU_THRESHOLD,
        }
    }
}

/// Optimal one-to-one pairing of GT objects with tracks, as
/// `(object_id, track_id)` sorted by object id.
pub fn match_frame(gt: &[AnnotatedBox], tracks: &[AnnotatedBox], matching: Matching) -> Vec<(u64, u64)> {
    let (cost, gate) = match matching {
        Matching::Iou { threshold } => (
            CostMatrix::from_fn(gt.len(), tracks.len(), |g, t| 1.0 - iou(&gt[g].bbox(), &tracks[t].bbox())),
            1.0 - threshold,
        ),
        Matching::Centroid { max_distance } => (
            CostMatrix::from_fn(gt.len(), tracks.len(), |g, t| {
                centroid_distance(&gt[g].bbox(), &tracks[t].bbox())
            }),
            max_distance,
        ),
    };
    let assignment = hungarian_assign(&cost, gate).expect("box costs are finite");
    let mut out: Vec<(u64, u64)> = assignment
        .matches
        .into_iter()
        .map(|(g, t)| (gt[g].id, tracks[t].id))
        .collect();
    out.sort_unstable();
    out
}

/// Switches per frame: an object switches when its matched track differs
/// from the last track it was matched to. Gaps do not reset the memory and
/// a first match is never a switch.
pub fn count_switches(per_frame: &[Vec<(u64, u64)>]) -> Vec<usize> {
    let mut last: HashMap<u64, u64> = HashMap::new();
    per_frame
        .iter()
        .map(|matches| {
            let mut n = 0;
            for &(obj, track) in matches {
                if let Some(prev) = last.insert(obj, track) {
                    if prev != track {
                        n += 1;
                    }
                }
            }
            n
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEval {
    pub frame_id: usize,
    pub num_objects: usize,
    pub num_switches: usize,
    pub matches: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotaReport {
    pub mota: f64,
    pub frames_scored: usize,
    pub total_switches: usize,
    pub frames: Vec<FrameEval>,
}

impl MotaReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization is infallible");
        s.push('\n');
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json().as_bytes())
    }
}

/// Mean of `1 - switches / objects` over frames that contain objects.
pub fn mota(frames: &[FrameEval]) -> Result<MotaReport> {
    let scored: Vec<&FrameEval> = frames.iter().filter(|f| f.num_objects > 0).collect();
    if scored.is_empty() {
        return Err(Error::NoScorableFrames);
    }
    let sum: f64 = scored
        .iter()
        .map(|f| 1.0 - f.num_switches as f64 / f.num_objects as f64)
        .sum();
    Ok(MotaReport {
        mota: sum / scored.len() as f64,
        frames_scored: scored.len(),
        total_switches: frames.iter().map(|f| f.num_switches).sum(),
        frames: frames.to_vec(),
    })
}

/// Per-frame evaluations over every frame id present in either file.
pub fn evaluate_frames(gt: &AnnotationFile, output: &AnnotationFile, matching: Matching) -> Vec<FrameEval> {
    let n = gt
        .frames
        .iter()
        .chain(&output.frames)
        .map(|f| f.frame_id + 1)
        .max()
        .unwrap_or(0);
    let gt_frames = gt.per_frame(n);
    let out_frames = output.per_frame(n);
    let matches: Vec<Vec<(u64, u64)>> = (0..n)
        .map(|i| match_frame(&gt_frames[i], &out_frames[i], matching))
        .collect();
    let switches = count_switches(&matches);
    matches
        .into_iter()
        .zip(switches)
        .enumerate()
        .map(|(i, (m, s))| FrameEval {
            frame_id: i,
            num_objects: gt_frames[i].len(),
            num_switches: s,
            matches: m,
        })
        .collect()
}

pub fn evaluate(gt: &AnnotationFile, output: &AnnotationFile, matching: Matching) -> Result<MotaReport> {
    mota(&evaluate_frames(gt, output, matching))
}

/// Mean squared-Euclidean embedding distance between annotated objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub object_ids: Vec<u64>,
    pub samples: Vec<usize>,
    pub matrix: Vec<Vec<f64>>,
    /// Objects left out for having fewer than two samples.
    pub excluded: Vec<u64>,
}

impl DistanceMatrix {
    /// Rows whose diagonal entry is not strictly below every other entry.
    pub fn rows_without_low_diagonal(&self) -> Vec<u64> {
        let k = self.object_ids.len();
        (0..k)
            .filter(|&i| (0..k).any(|j| j != i && self.matrix[i][j] <= self.matrix[i][i]))
            .map(|i| self.object_ids[i])
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("object");
        for id in &self.object_ids {
            s.push_str(&format!(",{id}"));
        }
        s.push('\n');
        for (id, row) in self.object_ids.iter().zip(&self.matrix) {
            s.push_str(&id.to_string());
            for v in row {
                s.push_str(&format!(",{v:.6}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("matrix serialization is infallible");
        s.push('\n');
        s
    }
}

/// Embed up to `max_samples_per_object` annotated instances of each object
/// (evenly strided over its appearances) and average pairwise distances.
/// The diagonal averages over distinct sample pairs.
pub fn distance_matrix_report<F: FrameSource + ?Sized>(
    model: &Model,
    frames: &F,
    annotations: &AnnotationFile,
    max_samples_per_object: usize,
) -> Result<DistanceMatrix> {
    let mut instances: BTreeMap<u64, Vec<(usize, AnnotatedBox)>> = BTreeMap::new();
    for f in &annotations.frames {
        if f.frame_id >= frames.frame_count() {
            return Err(Error::Validation(format!(
                "annotations reference frame {} but the sequence has {}",
                f.frame_id,
                frames.frame_count()
            )));
        }
        for b in &f.boxes {
            instances.entry(b.id).or_default().push((f.frame_id, *b));
        }
    }
    let cap = max_samples_per_object.max(2);
    let mut object_ids = Vec::new();
    let mut excluded = Vec::new();
    let mut chosen = Vec::new();
    for (id, inst) in instances {
        if inst.len() < 2 {
            excluded.push(id);
            continue;
        }
        let take = inst.len().min(cap);
        let picked: Vec<(usize, AnnotatedBox)> = (0..take).map(|k| inst[k * inst.len() / take]).collect();
        object_ids.push(id);
        chosen.push(picked);
    }
    if object_ids.len() < 2 {
        return Err(Error::Validation(format!(
            "need at least two objects with two or more samples, found {}",
            object_ids.len()
        )));
    }
    let embeddings: Vec<Vec<EmbeddingVec>> = chosen
        .par_iter()
        .map(|picked| {
            picked
                .iter()
                .map(|(frame, b)| {
                    let img = frames.frame(*frame).map_err(|e| Error::at_frame(*frame, e))?;
                    model.embed(&extract_patch(&img, &b.bbox(), model.config.patch_resolution)?)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let k = object_ids.len();
    let mut matrix = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let (mut sum, mut count) = (0.0, 0usize);
            for (a, ea) in embeddings[i].iter().enumerate() {
                for (b, eb) in embeddings[j].iter().enumerate() {
                    if i == j && b <= a {
                        continue;
                    }
                    sum += sq_euclidean(ea, eb);
                    count += 1;
                }
            }
            matrix[i][j] = sum / count as f64;
            matrix[j][i] = matrix[i][j];
        }
    }
    Ok(DistanceMatrix {
        object_ids,
        samples: embeddings.iter().map(Vec::len).collect(),
        matrix,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::io::AnnotatedFrame;

    fn ab(id: u64, x: f64, y: f64, w: f64, h: f64) -> AnnotatedBox {
        AnnotatedBox::new(id, BoundingBox::new(x, y, w, h).unwrap())
    }

    fn frame_eval(objects: usize, switches: usize) -> FrameEval {
        FrameEval {
            frame_id: 0,
            num_objects: objects,
            num_switches: switches,
            matches: vec![],
        }
    }

    #[test]
    fn match_identical_and_disjoint() {
        let gt = vec![ab(1, 0.0, 0.0, 10.0, 10.0), ab(2, 50.0, 50.0, 10.0, 10.0)];
        let tr = vec![ab(7, 50.0, 50.0, 10.0, 10.0), ab(9, 0.0, 0.0, 10.0, 10.0)];
        assert_eq!(match_frame(&gt, &tr, Matching::default()), vec![(1, 9), (2, 7)]);
        let far = vec![ab(3, 200.0, 200.0, 10.0, 10.0)];
        assert!(match_frame(&gt, &far, Matching::default()).is_empty());
    }

    #[test]
    fn match_crossed_overlaps() {
        let gt = vec![ab(1, 0.0, 0.0, 10.0, 10.0), ab(2, 8.0, 0.0, 10.0, 10.0)];
        let tr = vec![ab(11, 4.0, 0.0, 10.0, 10.0), ab(12, 12.0, 0.0, 10.0, 10.0)];
        // g1-t1 and g2-t2 both overlap 6 px wide (iou 60/140 each).
        // The other pairing has g1-t2 disjoint, so it loses.
        assert_eq!(match_frame(&gt, &tr, Matching::default()), vec![(1, 11), (2, 12)]);
    }

    #[test]
    fn iou_threshold_discards_weak_overlap() {
        let gt = vec![ab(1, 0.0, 0.0, 10.0, 10.0)];
        // 2x10 overlap: iou 20/180 < 0.3
        let tr = vec![ab(5, 8.0, 0.0, 10.0, 10.0)];
        assert!(match_frame(&gt, &tr, Matching::default()).is_empty());
        assert_eq!(
            match_frame(&gt, &tr, Matching::Centroid { max_distance: 10.0 }),
            vec![(1, 5)]
        );
    }

    #[test]
    fn switches_examples() {
        let seq = |ids: &[Option<u64>]| -> Vec<Vec<(u64, u64)>> {
            ids.iter().map(|i| i.map(|t| vec![(1, t)]).unwrap_or_default()).collect()
        };
        assert_eq!(count_switches(&seq(&[Some(1), Some(1), Some(1)])), vec![0, 0, 0]);
        assert_eq!(
            count_switches(&seq(&[Some(1), None, None, None, Some(1)])),
            vec![0, 0, 0, 0, 0]
        );
        assert_eq!(
            count_switches(&seq(&[Some(1), Some(1), Some(2), Some(2), Some(1)])),
            vec![0, 0, 1, 0, 1]
        );
    }

    #[test]
    fn mota_examples() {
        let r = mota(&[frame_eval(1, 0), frame_eval(1, 0), frame_eval(1, 1), frame_eval(1, 0)]).unwrap();
        assert!((r.mota - 0.75).abs() < 1e-12);
        assert_eq!(r.frames_scored, 4);
        let r = mota(&[
            frame_eval(1, 0),
            frame_eval(0, 0),
            frame_eval(1, 0),
            frame_eval(1, 1),
            frame_eval(0, 0),
            frame_eval(1, 0),
        ])
        .unwrap();
        assert!((r.mota - 0.75).abs() < 1e-12);
        assert_eq!(r.frames_scored, 4);
        assert!(matches!(mota(&[frame_eval(0, 0)]), Err(Error::NoScorableFrames)));
        assert!(matches!(mota(&[]), Err(Error::NoScorableFrames)));
    }

    fn file(frames: Vec<Vec<AnnotatedBox>>) -> AnnotationFile {
        AnnotationFile {
            sequence: "t".into(),
            frames: frames
                .into_iter()
                .enumerate()
                .map(|(frame_id, boxes)| AnnotatedFrame { frame_id, boxes })
                .collect(),
        }
    }

    #[test]
    fn relabeling_tracks_preserves_mota() {
        let gt = file(
            (0..6)
                .map(|f| vec![ab(1, f as f64, 0.0, 10.0, 10.0), ab(2, 40.0, f as f64, 10.0, 10.0)])
                .collect(),
        );
        let ids = [(3, 4), (3, 4), (4, 3), (4, 3), (3, 4), (5, 4)];
        let out = |map: fn(u64) -> u64| {
            file(
                (0..6)
                    .map(|f| {
                        vec![
                            ab(map(ids[f].0), f as f64, 0.0, 10.0, 10.0),
                            ab(map(ids[f].1), 40.0, f as f64, 10.0, 10.0),
                        ]
                    })
                    .collect(),
            )
        };
        let a = evaluate(&gt, &out(|x| x), Matching::default()).unwrap();
        let b = evaluate(&gt, &out(|x| 100 - x), Matching::default()).unwrap();
        assert_eq!(a.mota, b.mota);
        assert_eq!(a.total_switches, 5);
        assert!((0.0..=1.0).contains(&a.mota));
    }
}
