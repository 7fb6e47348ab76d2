//! Staged greedy search: each stage scores its candidates on top of the
//! best selection so far and passes its winner on.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, Matching, MotaReport};
use crate::embednet::Model;
use crate::geometry::Detection;
use crate::imaging::FrameSource;
use crate::io::AnnotationFile;
use crate::tracker::{embed_detections, track_precomputed, AppearanceMetric, EmbeddedFrame, TrackerConfig};
use crate::{Error, Result};

/// Which cost terms the association uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CostMetric {
    Appearance,
    Distance,
    Combined,
}

impl CostMetric {
    pub fn name(self) -> &'static str {
        match self {
            CostMetric::Appearance => "APPEARANCE",
            CostMetric::Distance => "DISTANCE",
            CostMetric::Combined => "COMBINED",
        }
    }

    pub fn lambda(self) -> f64 {
        match self {
            CostMetric::Appearance => 0.0,
            CostMetric::Distance => 1.0,
            CostMetric::Combined => 0.5,
        }
    }
}

/// Tracker fields a parameter-stage candidate may override.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_distance_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_init: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_age: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub appearance_metric: Option<AppearanceMetric>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_confidence: Option<f64>,
}

impl TrackerOverrides {
    pub fn apply(&self, cfg: &TrackerConfig) -> TrackerConfig {
        let mut c = cfg.clone();
        if let Some(v) = self.cost_threshold {
            c.cost_threshold = v;
        }
        if let Some(v) = self.init_distance_threshold {
            c.init_distance_threshold = v;
        }
        if let Some(v) = self.n_init {
            c.n_init = v;
        }
        if let Some(v) = self.max_age {
            c.max_age = v;
        }
        if let Some(v) = self.budget {
            c.budget = v;
        }
        if let Some(v) = self.appearance_metric {
            c.appearance_metric = v;
        }
        if let Some(v) = self.min_confidence {
            c.min_confidence = v;
        }
        c
    }

    fn label(&self) -> String {
        serde_json::to_string(self).expect("overrides serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", content = "candidates", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SweepStage {
    /// Indices into the caller's checkpoint list.
    Checkpoints(Vec<usize>),
    CostMetrics(Vec<CostMetric>),
    TrackerParams(Vec<TrackerOverrides>),
}

impl SweepStage {
    pub fn name(&self) -> &'static str {
        match self {
            SweepStage::Checkpoints(_) => "CHECKPOINTS",
            SweepStage::CostMetrics(_) => "COST_METRICS",
            SweepStage::TrackerParams(_) => "TRACKER_PARAMS",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepStage::Checkpoints(c) => c.len(),
            SweepStage::CostMetrics(c) => c.len(),
            SweepStage::TrackerParams(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn candidate(&self, i: usize, base: &Selection) -> (Selection, String) {
        match self {
            SweepStage::Checkpoints(c) => (
                Selection {
                    checkpoint: c[i],
                    tracker: base.tracker.clone(),
                },
                format!("checkpoint {}", c[i]),
            ),
            SweepStage::CostMetrics(c) => (
                Selection {
                    checkpoint: base.checkpoint,
                    tracker: TrackerConfig {
                        lambda: c[i].lambda(),
                        ..base.tracker.clone()
                    },
                },
                format!("{} lambda={}", c[i].name(), c[i].lambda()),
            ),
            SweepStage::TrackerParams(c) => (
                Selection {
                    checkpoint: base.checkpoint,
                    tracker: c[i].apply(&base.tracker),
                },
                c[i].label(),
            ),
        }
    }
}

/// A checkpoint index together with a tracker configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub checkpoint: usize,
    pub tracker: TrackerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub label: String,
    pub score: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTable {
    pub stage: String,
    pub rows: Vec<SweepRow>,
    /// Winning row, `None` when every candidate failed.
    pub best: Option<usize>,
}

impl StageTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,label,mota,best,error\n");
        for r in &self.rows {
            let score = r.score.map(|v| format!("{v:.6}")).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.index,
                csv_field(&r.label),
                score,
                self.best == Some(r.index),
                csv_field(r.error.as_deref().unwrap_or(""))
            ));
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub tables: Vec<StageTable>,
    pub best: Selection,
    pub best_score: Option<f64>,
}

/// Run the stages in order. Candidates of a stage are scored in parallel;
/// a failing candidate scores `None` and the sweep carries on. Ties go to
/// the earlier candidate.
pub fn sweep<E>(stages: &[SweepStage], base: Selection, evaluate: E) -> Result<SweepOutcome>
where
    E: Fn(&Selection) -> Result<f64> + Sync,
{
    if let Some(s) = stages.iter().find(|s| s.is_empty()) {
        return Err(Error::Validation(format!("sweep stage {} has no candidates", s.name())));
    }
    let mut best = base;
    let mut best_score = None;
    let mut tables = Vec::with_capacity(stages.len());
    for stage in stages {
        let candidates: Vec<(Selection, String)> =
            (0..stage.len()).map(|i| stage.candidate(i, &best)).collect();
        let results: Vec<Result<f64>> = candidates.par_iter().map(|(sel, _)| evaluate(sel)).collect();
        let rows: Vec<SweepRow> = candidates
            .iter()
            .zip(results)
            .enumerate()
            .map(|(index, ((_, label), r))| match r {
                Ok(v) if v.is_finite() => SweepRow {
                    index,
                    label: label.clone(),
                    score: Some(v),
                    error: None,
                },
                Ok(v) => SweepRow {
                    index,
                    label: label.clone(),
                    score: None,
                    error: Some(format!("non-finite score {v}")),
                },
                Err(e) => SweepRow {
                    index,
                    label: label.clone(),
                    score: None,
                    error: Some(e.to_string()),
                },
            })
            .collect();
        let mut winner: Option<(usize, f64)> = None;
        for r in &rows {
            if let Some(v) = r.score {
                if winner.is_none_or(|(_, w)| v > w) {
                    winner = Some((r.index, v));
                }
            }
        }
        if let Some((i, v)) = winner {
            best = candidates[i].0.clone();
            best_score = Some(v);
        }
        tables.push(StageTable {
            stage: stage.name().to_string(),
            rows,
            best: winner.map(|(i, _)| i),
        });
    }
    Ok(SweepOutcome {
        tables,
        best,
        best_score,
    })
}

/// A validation sequence with its detections embedded once per checkpoint,
/// so tracker configurations can be scored without touching images again.
#[derive(Debug, Clone)]
pub struct PreparedSequence {
    pub name: String,
    pub ground_truth: AnnotationFile,
    pub image_diag: f64,
    pub per_checkpoint: Vec<Vec<EmbeddedFrame>>,
}

impl PreparedSequence {
    pub fn prepare<F: FrameSource + ?Sized>(
        name: &str,
        frames: &F,
        detections: &[Vec<Detection>],
        ground_truth: AnnotationFile,
        image_diag: f64,
        models: &[Model],
    ) -> Result<Self> {
        let per_checkpoint = models
            .iter()
            .map(|m| embed_detections(m, frames, detections, 0.0))
            .collect::<Result<_>>()?;
        Ok(Self {
            name: name.to_string(),
            ground_truth,
            image_diag,
            per_checkpoint,
        })
    }

    pub fn track(&self, sel: &Selection) -> Result<AnnotationFile> {
        let frames = self.per_checkpoint.get(sel.checkpoint).ok_or_else(|| {
            Error::Validation(format!(
                "checkpoint index {} out of range ({} loaded)",
                sel.checkpoint,
                self.per_checkpoint.len()
            ))
        })?;
        track_precomputed(&sel.tracker, self.image_diag, &self.name, frames)
    }

    pub fn score(&self, sel: &Selection, matching: Matching) -> Result<MotaReport> {
        evaluate(&self.ground_truth, &self.track(sel)?, matching)
    }
}

/// Mean MOTA of a selection over several sequences.
pub fn mean_mota(sequences: &[PreparedSequence], sel: &Selection, matching: Matching) -> Result<f64> {
    if sequences.is_empty() {
        return Err(Error::Validation("no validation sequences".into()));
    }
    let mut sum = 0.0;
    for s in sequences {
        sum += s.score(sel, matching)?.mota;
    }
    Ok(sum / sequences.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Selection {
        Selection {
            checkpoint: 0,
            tracker: TrackerConfig::default(),
        }
    }

    #[test]
    fn single_candidates_win() {
        let stages = [
            SweepStage::Checkpoints(vec![2]),
            SweepStage::CostMetrics(vec![CostMetric::Distance]),
            SweepStage::TrackerParams(vec![TrackerOverrides {
                max_age: Some(7),
                ..Default::default()
            }]),
        ];
        let out = sweep(&stages, base(), |_| Ok(0.5)).unwrap();
        assert_eq!(out.best.checkpoint, 2);
        assert_eq!(out.best.tracker.lambda, 1.0);
        assert_eq!(out.best.tracker.max_age, 7);
        assert!(out.tables.iter().all(|t| t.best == Some(0)));
    }

    #[test]
    fn argmax_carried_and_ties_to_first() {
        let stages = [
            SweepStage::Checkpoints(vec![0, 1, 2, 1]),
            SweepStage::CostMetrics(vec![CostMetric::Appearance, CostMetric::Distance, CostMetric::Combined]),
        ];
        let out = sweep(&stages, base(), |s| {
            Ok(s.checkpoint as f64 * 0.1 + if s.tracker.lambda == 1.0 { 0.0 } else { 0.05 })
        })
        .unwrap();
        // checkpoints 2 scores highest; appearance and combined tie
        assert_eq!(out.tables[0].best, Some(2));
        assert_eq!(out.tables[1].best, Some(0));
        assert_eq!(out.best.checkpoint, 2);
        assert_eq!(out.best.tracker.lambda, 0.0);
        // duplicates score identically
        assert_eq!(out.tables[0].rows[1].score, out.tables[0].rows[3].score);
    }

    #[test]
    fn failures_are_recorded() {
        let stages = [SweepStage::Checkpoints(vec![0, 1])];
        let out = sweep(&stages, base(), |s| {
            if s.checkpoint == 0 {
                Err(Error::NoScorableFrames)
            } else {
                Ok(0.2)
            }
        })
        .unwrap();
        assert_eq!(out.tables[0].rows[0].score, None);
        assert!(out.tables[0].rows[0].error.is_some());
        assert_eq!(out.tables[0].best, Some(1));
        let csv = out.tables[0].to_csv();
        assert!(csv.starts_with("index,label,mota,best,error\n0,checkpoint 0,,false,"));
        assert!(sweep(&[SweepStage::CostMetrics(vec![])], base(), |_| Ok(1.0)).is_err());
    }

    #[test]
    fn stage_json_shape() {
        let s: SweepStage = serde_json::from_str(r#"{"stage":"COST_METRICS","candidates":["APPEARANCE","COMBINED"]}"#).unwrap();
        assert_eq!(s, SweepStage::CostMetrics(vec![CostMetric::Appearance, CostMetric::Combined]));
    }
}
