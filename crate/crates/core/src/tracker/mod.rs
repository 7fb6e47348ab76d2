//! Detection-to-track association with a centroid/appearance cost and a
//! tentative/confirmed/lost lifecycle.

mod assign;
mod cost;

use std::collections::VecDeque;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embednet::{EmbeddingVec, Model};
use crate::geometry::{centroid_distance, BoundingBox, Detection};
use crate::imaging::{extract_patch, FrameSource};
use crate::io::{write_atomic, AnnotatedBox, AnnotatedFrame, AnnotationFile};
use crate::{Error, Result};

pub use assign::{hungarian_assign, Assignment, CostMatrix};
pub use cost::{appearance_cost, appearance_distance, combined_cost, motion_cost};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AppearanceMetric {
    SqEuclidean,
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Weight of the motion term in the combined cost.
    pub lambda: f64,
    pub cost_threshold: f64,
    /// Centroid gate in pixels for tentative tracks.
    pub init_distance_threshold: f64,
    pub n_init: u32,
    pub max_age: u32,
    pub budget: usize,
    pub appearance_metric: AppearanceMetric,
    pub min_confidence: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            cost_threshold: 0.2,
            init_distance_threshold: 20.0,
            n_init: 3,
            max_age: 30,
            budget: 50,
            appearance_metric: AppearanceMetric::SqEuclidean,
            min_confidence: 0.3,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if !(0.0..=1.0).contains(&self.lambda) {
            return fail(format!("lambda must be in [0, 1], got {}", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.cost_threshold) {
            return fail(format!("cost_threshold must be in [0, 1], got {}", self.cost_threshold));
        }
        if !(self.init_distance_threshold >= 0.0 && self.init_distance_threshold.is_finite()) {
            return fail(format!(
                "init_distance_threshold must be a non-negative number of pixels, got {}",
                self.init_distance_threshold
            ));
        }
        if self.n_init < 1 {
            return fail("n_init must be at least 1".into());
        }
        if self.max_age < 1 {
            return fail("max_age must be at least 1".into());
        }
        if self.budget < 1 {
            return fail("budget must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return fail(format!("min_confidence must be in [0, 1], got {}", self.min_confidence));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrackState {
    Tentative,
    Confirmed,
    Lost,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub track_id: u64,
    pub state: TrackState,
    pub last_box: BoundingBox,
    pub hits: u32,
    pub time_since_update: u32,
    pub gallery: VecDeque<EmbeddingVec>,
}

impl Track {
    fn push_embedding(&mut self, e: EmbeddingVec, budget: usize) {
        self.gallery.push_back(e);
        while self.gallery.len() > budget {
            self.gallery.pop_front();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportedTrack {
    pub track_id: u64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub state: TrackState,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameResult {
    pub tracks: Vec<ReportedTrack>,
    pub created: Vec<u64>,
    pub removed: Vec<u64>,
}

/// Per-sequence tracker state.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    image_diag: f64,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(config: TrackerConfig, image_diag: f64) -> Result<Self> {
        config.validate()?;
        if !(image_diag > 0.0 && image_diag.is_finite()) {
            return Err(Error::Validation(format!("image diagonal must be positive, got {image_diag}")));
        }
        Ok(Self {
            config,
            image_diag,
            tracks: Vec::new(),
            next_id: 1,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Live tracks in creation order.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Advance one frame. `detections` should already be confidence
    /// filtered; `embeddings[i]` belongs to `detections[i]`.
    pub fn step(&mut self, detections: &[Detection], embeddings: &[EmbeddingVec]) -> Result<FrameResult> {
        if detections.len() != embeddings.len() {
            return Err(Error::Shape(format!(
                "{} detections but {} embeddings",
                detections.len(),
                embeddings.len()
            )));
        }
        let cfg = &self.config;
        let boxes: Vec<BoundingBox> = detections.iter().map(|d| d.bbox).collect();
        let mut det_owner: Vec<Option<usize>> = vec![None; detections.len()];
        let mut track_det: Vec<Option<usize>> = vec![None; self.tracks.len()];

        let indices_in = |state: TrackState| -> Vec<usize> {
            (0..self.tracks.len()).filter(|&i| self.tracks[i].state == state).collect()
        };
        let confirmed = indices_in(TrackState::Confirmed);
        let lost = indices_in(TrackState::Lost);
        let tentative = indices_in(TrackState::Tentative);

        // 1. confirmed tracks on the combined cost
        {
            let remaining: Vec<usize> = (0..detections.len()).collect();
            let rows: Vec<&Track> = confirmed.iter().map(|&i| &self.tracks[i]).collect();
            let track_boxes: Vec<BoundingBox> = rows.iter().map(|t| t.last_box).collect();
            let det_boxes: Vec<BoundingBox> = remaining.iter().map(|&d| boxes[d]).collect();
            let det_embs: Vec<EmbeddingVec> = remaining.iter().map(|&d| embeddings[d].clone()).collect();
            let motion = motion_cost(&track_boxes, &det_boxes, self.image_diag)?;
            let appearance = appearance_cost(&rows, &det_embs, cfg.appearance_metric)?;
            let cost = combined_cost(&motion, &appearance, cfg.lambda)?;
            let a = hungarian_assign(&cost, cfg.cost_threshold)?;
            for (r, c) in a.matches {
                track_det[confirmed[r]] = Some(remaining[c]);
                det_owner[remaining[c]] = Some(confirmed[r]);
            }
        }

        // 2. lost tracks on appearance alone
        {
            let remaining: Vec<usize> = (0..detections.len()).filter(|&d| det_owner[d].is_none()).collect();
            let rows: Vec<&Track> = lost.iter().map(|&i| &self.tracks[i]).collect();
            let det_embs: Vec<EmbeddingVec> = remaining.iter().map(|&d| embeddings[d].clone()).collect();
            let cost = appearance_cost(&rows, &det_embs, cfg.appearance_metric)?;
            let a = hungarian_assign(&cost, cfg.cost_threshold)?;
            for (r, c) in a.matches {
                track_det[lost[r]] = Some(remaining[c]);
                det_owner[remaining[c]] = Some(lost[r]);
            }
        }

        // 3. tentative tracks on raw centroid distance
        {
            let remaining: Vec<usize> = (0..detections.len()).filter(|&d| det_owner[d].is_none()).collect();
            let cost = CostMatrix::from_fn(tentative.len(), remaining.len(), |r, c| {
                centroid_distance(&self.tracks[tentative[r]].last_box, &boxes[remaining[c]])
            });
            let a = hungarian_assign(&cost, cfg.init_distance_threshold)?;
            for (r, c) in a.matches {
                track_det[tentative[r]] = Some(remaining[c]);
                det_owner[remaining[c]] = Some(tentative[r]);
            }
        }

        let mut result = FrameResult::default();
        let old = std::mem::take(&mut self.tracks);
        for (mut t, matched) in old.into_iter().zip(track_det) {
            match matched {
                Some(d) => {
                    t.last_box = boxes[d];
                    t.time_since_update = 0;
                    t.hits += 1;
                    t.push_embedding(embeddings[d].clone(), cfg.budget);
                    match t.state {
                        TrackState::Lost => t.state = TrackState::Confirmed,
                        TrackState::Tentative if t.hits >= cfg.n_init => t.state = TrackState::Confirmed,
                        _ => {}
                    }
                }
                None => {
                    t.time_since_update += 1;
                    t.hits = 0;
                    match t.state {
                        TrackState::Tentative => {
                            result.removed.push(t.track_id);
                            continue;
                        }
                        TrackState::Confirmed => t.state = TrackState::Lost,
                        TrackState::Lost => {}
                    }
                    if t.time_since_update > cfg.max_age {
                        result.removed.push(t.track_id);
                        continue;
                    }
                }
            }
            self.tracks.push(t);
        }

        // 4. leftovers start new tracks
        for d in (0..detections.len()).filter(|&d| det_owner[d].is_none()) {
            let id = self.next_id;
            self.next_id += 1;
            let state = if cfg.n_init <= 1 {
                TrackState::Confirmed
            } else {
                TrackState::Tentative
            };
            self.tracks.push(Track {
                track_id: id,
                state,
                last_box: boxes[d],
                hits: 1,
                time_since_update: 0,
                gallery: VecDeque::from([embeddings[d].clone()]),
            });
            result.created.push(id);
        }

        result.tracks = self
            .tracks
            .iter()
            .filter(|t| t.state == TrackState::Confirmed)
            .map(|t| ReportedTrack {
                track_id: t.track_id,
                bbox: t.last_box,
                state: t.state,
            })
            .collect();
        Ok(result)
    }
}

/// Detections of one frame that pass the confidence floor, with their
/// embeddings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddedFrame {
    pub detections: Vec<Detection>,
    pub embeddings: Vec<EmbeddingVec>,
}

fn embed_frame<F: FrameSource + ?Sized>(
    model: &Model,
    frames: &F,
    frame: usize,
    dets: &[Detection],
    min_confidence: f64,
) -> Result<EmbeddedFrame> {
    let kept: Vec<Detection> = dets.iter().filter(|d| d.confidence >= min_confidence).copied().collect();
    if kept.is_empty() {
        return Ok(EmbeddedFrame::default());
    }
    let img = frames.frame(frame)?;
    let embeddings = kept
        .iter()
        .map(|d| model.embed(&extract_patch(&img, &d.bbox, model.config.patch_resolution)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(EmbeddedFrame {
        detections: kept,
        embeddings,
    })
}

/// Embed every frame's detections up front (parallel over frames). Useful
/// when the same sequence is tracked under many tracker configurations.
pub fn embed_detections<F: FrameSource + ?Sized>(
    model: &Model,
    frames: &F,
    per_frame: &[Vec<Detection>],
    min_confidence: f64,
) -> Result<Vec<EmbeddedFrame>> {
    if per_frame.len() > frames.frame_count() {
        return Err(Error::Validation(format!(
            "detections cover {} frames but the sequence has {}",
            per_frame.len(),
            frames.frame_count()
        )));
    }
    per_frame
        .par_iter()
        .enumerate()
        .map(|(i, dets)| embed_frame(model, frames, i, dets, min_confidence).map_err(|e| Error::at_frame(i, e)))
        .collect()
}

fn frame_output(frame_id: usize, r: &FrameResult) -> AnnotatedFrame {
    AnnotatedFrame {
        frame_id,
        boxes: r.tracks.iter().map(|t| AnnotatedBox::new(t.track_id, t.bbox)).collect(),
    }
}

/// Track pre-embedded frames. The confidence floor is reapplied so one
/// embedding pass at a low floor can serve several configurations.
pub fn track_precomputed(
    config: &TrackerConfig,
    image_diag: f64,
    sequence: &str,
    frames: &[EmbeddedFrame],
) -> Result<AnnotationFile> {
    let mut tracker = Tracker::new(config.clone(), image_diag)?;
    let mut out = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let keep: Vec<usize> = (0..f.detections.len())
            .filter(|&k| f.detections[k].confidence >= config.min_confidence)
            .collect();
        let dets: Vec<Detection> = keep.iter().map(|&k| f.detections[k]).collect();
        let embs: Vec<EmbeddingVec> = keep.iter().map(|&k| f.embeddings[k].clone()).collect();
        let r = tracker.step(&dets, &embs).map_err(|e| Error::at_frame(i, e))?;
        out.push(frame_output(i, &r));
    }
    Ok(AnnotationFile {
        sequence: sequence.to_string(),
        frames: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameTiming {
    pub frame_id: usize,
    pub step_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingRun {
    pub output: AnnotationFile,
    pub timings: Vec<FrameTiming>,
}

impl TrackingRun {
    pub fn mean_step_ms(&self) -> f64 {
        if self.timings.is_empty() {
            return 0.0;
        }
        self.timings.iter().map(|t| t.step_ms).sum::<f64>() / self.timings.len() as f64
    }

    pub fn timings_csv(&self) -> String {
        let mut s = String::from("frame_id,step_ms\n");
        for t in &self.timings {
            s.push_str(&format!("{},{:.4}\n", t.frame_id, t.step_ms));
        }
        s
    }

    pub fn write_timings(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.timings_csv().as_bytes())
    }
}

/// Run the tracker over a whole sequence. `per_frame[i]` holds the raw
/// detections of frame `i`; frames past the end of `per_frame` have none.
/// Timings cover patch extraction, embedding and the tracker step.
pub fn run_sequence<F: FrameSource + ?Sized>(
    config: &TrackerConfig,
    model: &Model,
    frames: &F,
    per_frame: &[Vec<Detection>],
    image_diag: f64,
    sequence: &str,
) -> Result<TrackingRun> {
    let n = frames.frame_count();
    if per_frame.len() > n {
        return Err(Error::Validation(format!(
            "detections cover {} frames but the sequence has {n}",
            per_frame.len()
        )));
    }
    let mut tracker = Tracker::new(config.clone(), image_diag)?;
    let mut out = Vec::with_capacity(n);
    let mut timings = Vec::with_capacity(n);
    for i in 0..n {
        let dets = per_frame.get(i).map_or(&[][..], Vec::as_slice);
        let start = Instant::now();
        let r = embed_frame(model, frames, i, dets, config.min_confidence)
            .and_then(|f| tracker.step(&f.detections, &f.embeddings))
            .map_err(|e| Error::at_frame(i, e))?;
        timings.push(FrameTiming {
            frame_id: i,
            step_ms: start.elapsed().as_secs_f64() * 1e3,
        });
        out.push(frame_output(i, &r));
    }
    Ok(TrackingRun {
        output: AnnotationFile {
            sequence: sequence.to_string(),
            frames: out,
        },
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(frame: usize, x: f64, y: f64) -> Detection {
        Detection {
            frame_id: frame,
            bbox: BoundingBox::new(x, y, 10.0, 10.0).unwrap(),
            confidence: 1.0,
            class_label: 0,
        }
    }

    fn emb(k: usize) -> EmbeddingVec {
        let mut v = vec![0.0; 4];
        v[k] = 1.0;
        EmbeddingVec::normalized(v).unwrap()
    }

    fn check_invariants(t: &Tracker, r: &FrameResult) {
        let cfg = t.config();
        for tr in t.tracks() {
            assert!(tr.gallery.len() <= cfg.budget);
            assert!(!tr.gallery.is_empty());
            if tr.state == TrackState::Lost {
                assert!(tr.time_since_update >= 1 && tr.time_since_update <= cfg.max_age);
            }
        }
        let mut ids: Vec<u64> = r.tracks.iter().map(|t| t.track_id).collect();
        assert!(r.tracks.iter().all(|t| t.state == TrackState::Confirmed));
        ids.dedup();
        assert_eq!(ids.len(), r.tracks.len());
    }

    #[test]
    fn config_validation() {
        assert!(TrackerConfig::default().validate().is_ok());
        let bad = [
            TrackerConfig { lambda: 1.5, ..Default::default() },
            TrackerConfig { max_age: 0, ..Default::default() },
            TrackerConfig { budget: 0, ..Default::default() },
            TrackerConfig { n_init: 0, ..Default::default() },
        ];
        for b in bad {
            assert!(b.validate().is_err());
        }
    }

    #[test]
    fn drifting_object_keeps_one_id() {
        let cfg = TrackerConfig { n_init: 2, ..Default::default() };
        let mut t = Tracker::new(cfg, 800.0).unwrap();
        let mut ids = Vec::new();
        for f in 0..10 {
            let r = t.step(&[det(f, 100.0 + 2.0 * f as f64, 50.0)], &[emb(0)]).unwrap();
            check_invariants(&t, &r);
            if f == 0 {
                assert!(r.tracks.is_empty());
            } else {
                assert_eq!(r.tracks.len(), 1);
                ids.push(r.tracks[0].track_id);
            }
        }
        assert!(ids.iter().all(|&i| i == ids[0]));
    }

    #[test]
    fn forgets_after_max_age() {
        let cfg = TrackerConfig { n_init: 1, max_age: 3, ..Default::default() };
        let mut t = Tracker::new(cfg, 800.0).unwrap();
        t.step(&[det(0, 0.0, 0.0), det(0, 300.0, 300.0)], &[emb(0), emb(1)]).unwrap();
        for f in 1..=3 {
            let r = t.step(&[], &[]).unwrap();
            check_invariants(&t, &r);
            assert!(r.tracks.is_empty());
            assert_eq!(t.tracks().len(), 2, "frame {f}");
        }
        let r = t.step(&[], &[]).unwrap();
        assert!(r.tracks.is_empty());
        assert_eq!(r.removed, vec![1, 2]);
        assert!(t.tracks().is_empty());
    }

    #[test]
    fn lost_track_restored_by_appearance() {
        let cfg = TrackerConfig { lambda: 0.0, n_init: 2, max_age: 5, ..Default::default() };
        let mut t = Tracker::new(cfg, 800.0).unwrap();
        for f in 0..3 {
            t.step(&[det(f, 100.0, 100.0)], &[emb(2)]).unwrap();
        }
        // absent for max_age - 1 frames
        for _ in 0..4 {
            let r = t.step(&[], &[]).unwrap();
            assert!(r.tracks.is_empty());
        }
        // reappears far away with the same appearance
        let r = t.step(&[det(7, 500.0, 400.0)], &[emb(2)]).unwrap();
        assert_eq!(r.tracks.len(), 1);
        assert_eq!(r.tracks[0].track_id, 1);
        assert!(r.created.is_empty());
    }

    #[test]
    fn tentative_unmatched_is_dropped() {
        let cfg = TrackerConfig { n_init: 3, ..Default::default() };
        let mut t = Tracker::new(cfg, 800.0).unwrap();
        t.step(&[det(0, 0.0, 0.0)], &[emb(0)]).unwrap();
        let r = t.step(&[], &[]).unwrap();
        assert_eq!(r.removed, vec![1]);
        let r = t.step(&[det(2, 0.0, 0.0)], &[emb(0)]).unwrap();
        assert_eq!(r.created, vec![2]);
    }

    #[test]
    fn gallery_is_budgeted() {
        let cfg = TrackerConfig { n_init: 1, budget: 3, ..Default::default() };
        let mut t = Tracker::new(cfg, 800.0).unwrap();
        for f in 0..10 {
            let r = t.step(&[det(f, 10.0, 10.0)], &[emb(f % 2)]).unwrap();
            check_invariants(&t, &r);
        }
        assert_eq!(t.tracks()[0].gallery.len(), 3);
    }

    #[test]
    fn ids_strictly_increase() {
        let cfg = TrackerConfig { n_init: 1, max_age: 1, ..Default::default() };
        let mut t = Tracker::new(cfg, 800.0).unwrap();
        let mut last = 0;
        for f in 0..20 {
            // alternate between two far apart, differently looking spots
            let (x, e) = if f % 3 == 0 { (0.0, 0) } else { (400.0, 1) };
            let r = t.step(&[det(f, x, x)], &[emb(e)]).unwrap();
            for id in r.created {
                assert!(id > last);
                last = id;
            }
        }
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let mut t = Tracker::new(TrackerConfig::default(), 800.0).unwrap();
        assert!(t.step(&[det(0, 0.0, 0.0)], &[]).is_err());
    }
}
