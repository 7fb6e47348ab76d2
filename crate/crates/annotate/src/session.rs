use std::path::{Path, PathBuf};

use serde::Serialize;

use seatrack_core::geometry::{centroid_distance, Detection};
use seatrack_core::imaging::{encode_png, load_image};
use seatrack_core::io::{
    detections_by_frame, read_annotations, read_detections, write_annotations, AnnotatedBox, AnnotatedFrame,
    AnnotationFile, SequenceOnDisk,
};
use seatrack_core::tracker::{hungarian_assign, CostMatrix};

use crate::{Error, Result};

/// Centroid gate for pre-assignment, in pixels.
pub const DEFAULT_PREASSIGN_GATE: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct SessionOptions {
    /// Where annotations are read from and saved to. Defaults to the
    /// manifest's annotations entry, or `annotations.json` next to it.
    pub annotations: Option<PathBuf>,
    pub preassign_gate: f64,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            annotations: None,
            preassign_gate: DEFAULT_PREASSIGN_GATE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceSummary {
    pub name: String,
    pub frame_count: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub annotations: PathBuf,
    pub dirty: bool,
    pub next_fresh_id: u64,
}

/// Editable annotations for one sequence. Per-frame id uniqueness is
/// checked on every edit.
#[derive(Debug, Clone)]
pub struct Session {
    sequence: SequenceOnDisk,
    annotations_path: PathBuf,
    frames: Vec<Vec<AnnotatedBox>>,
    detections: Vec<Vec<Detection>>,
    next_fresh_id: u64,
    dirty: bool,
    gate: f64,
}

fn check_unique(frame: usize, boxes: &[AnnotatedBox]) -> Result<()> {
    for (k, b) in boxes.iter().enumerate() {
        if b.id == 0 {
            return Err(Error::BadRequest(format!("frame {frame}: box ids must be positive")));
        }
        b.bbox()
            .validate()
            .map_err(|e| Error::BadRequest(format!("frame {frame} box {}: {e}", b.id)))?;
        if boxes[..k].iter().any(|o| o.id == b.id) {
            return Err(Error::Conflict(format!("frame {frame} would contain id {} twice", b.id)));
        }
    }
    Ok(())
}

impl Session {
    pub fn open(manifest: impl AsRef<Path>, opts: SessionOptions) -> Result<Self> {
        let sequence = SequenceOnDisk::load(manifest)?;
        let n = sequence.manifest.frame_count;
        let annotations_path = match opts.annotations {
            Some(p) => p,
            None => sequence
                .annotations_path()
                .unwrap_or_else(|_| sequence.resolve("annotations.json")),
        };
        let frames = if annotations_path.exists() {
            let file = read_annotations(&annotations_path)?;
            if let Some(f) = file.frames.iter().find(|f| f.frame_id >= n) {
                return Err(seatrack_core::Error::Validation(format!(
                    "{} references frame {} but the sequence has {n}",
                    annotations_path.display(),
                    f.frame_id
                ))
                .into());
            }
            file.per_frame(n)
        } else {
            vec![Vec::new(); n]
        };
        let detections = match sequence.detections_path() {
            Ok(p) if p.exists() => detections_by_frame(&read_detections(&p)?, n)?,
            _ => vec![Vec::new(); n],
        };
        if !(opts.preassign_gate >= 0.0) {
            return Err(Error::BadRequest("pre-assignment gate must be non-negative".into()));
        }
        let next_fresh_id = frames.iter().flatten().map(|b| b.id).max().unwrap_or(0) + 1;
        Ok(Self {
            sequence,
            annotations_path,
            frames,
            detections,
            next_fresh_id,
            dirty: false,
            gate: opts.preassign_gate,
        })
    }

    pub fn summary(&self) -> SequenceSummary {
        let m = &self.sequence.manifest;
        SequenceSummary {
            name: m.name.clone(),
            frame_count: m.frame_count,
            image_width: m.image_width,
            image_height: m.image_height,
            annotations: self.annotations_path.clone(),
            dirty: self.dirty,
            next_fresh_id: self.next_fresh_id,
        }
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn is_dirty(&self) -> bool {
        self.dirty
    }

    pub fn sequence(&self) -> &SequenceOnDisk {
        &self.sequence
    }

    fn check_frame(&self, i: usize) -> Result<()> {
        if i >= self.frames.len() {
            return Err(Error::NotFound(format!(
                "frame {i} does not exist (sequence has {} frames)",
                self.frames.len()
            )));
        }
        Ok(())
    }

    pub fn frame(&self, i: usize) -> Result<&[AnnotatedBox]> {
        self.check_frame(i)?;
        Ok(&self.frames[i])
    }

    /// Proposed ids for frame `i`: its boxes (or its detections when it has
    /// none yet) are matched to frame `i - 1` on centroid distance. Matched
    /// boxes inherit the previous id, the rest get fresh ids. Nothing is
    /// committed.
    pub fn preassign(&self, i: usize) -> Result<Vec<AnnotatedBox>> {
        self.check_frame(i)?;
        if i == 0 {
            return Err(Error::BadRequest("frame 0 has no previous frame".into()));
        }
        let candidates: Vec<AnnotatedBox> = if self.frames[i].is_empty() {
            self.detections[i].iter().map(|d| AnnotatedBox::new(0, d.bbox)).collect()
        } else {
            self.frames[i].clone()
        };
        let prev = &self.frames[i - 1];
        let cost = CostMatrix::from_fn(prev.len(), candidates.len(), |p, c| {
            centroid_distance(&prev[p].bbox(), &candidates[c].bbox())
        });
        let assignment = hungarian_assign(&cost, self.gate)?;
        let mut ids = vec![None; candidates.len()];
        for (p, c) in assignment.matches {
            ids[c] = Some(prev[p].id);
        }
        let mut fresh = self.next_fresh_id;
        Ok(candidates
            .into_iter()
            .zip(ids)
            .map(|(b, id)| {
                let id = id.unwrap_or_else(|| {
                    fresh += 1;
                    fresh - 1
                });
                AnnotatedBox { id, ..b }
            })
            .collect())
    }

    pub fn put_frame(&mut self, i: usize, boxes: Vec<AnnotatedBox>) -> Result<&[AnnotatedBox]> {
        self.check_frame(i)?;
        check_unique(i, &boxes)?;
        if let Some(max) = boxes.iter().map(|b| b.id).max() {
            self.next_fresh_id = self.next_fresh_id.max(max + 1);
        }
        self.frames[i] = boxes;
        self.dirty = true;
        Ok(&self.frames[i])
    }

    fn position(&self, i: usize, id: u64) -> Result<usize> {
        self.check_frame(i)?;
        self.frames[i]
            .iter()
            .position(|b| b.id == id)
            .ok_or_else(|| Error::NotFound(format!("frame {i} has no box with id {id}")))
    }

    pub fn delete_box(&mut self, i: usize, id: u64) -> Result<()> {
        let k = self.position(i, id)?;
        self.frames[i].remove(k);
        self.dirty = true;
        Ok(())
    }

    pub fn set_box_id(&mut self, i: usize, id: u64, new_id: u64) -> Result<AnnotatedBox> {
        let k = self.position(i, id)?;
        if new_id == 0 {
            return Err(Error::BadRequest("box ids must be positive".into()));
        }
        if new_id != id && self.frames[i].iter().any(|b| b.id == new_id) {
            return Err(Error::Conflict(format!("frame {i} already has a box with id {new_id}")));
        }
        self.frames[i][k].id = new_id;
        self.next_fresh_id = self.next_fresh_id.max(new_id + 1);
        self.dirty = true;
        Ok(self.frames[i][k])
    }

    pub fn to_annotation_file(&self) -> AnnotationFile {
        AnnotationFile {
            sequence: self.sequence.manifest.name.clone(),
            frames: self
                .frames
                .iter()
                .enumerate()
                .map(|(frame_id, boxes)| AnnotatedFrame {
                    frame_id,
                    boxes: boxes.clone(),
                })
                .collect(),
        }
    }

    /// Write the annotations file atomically.
    pub fn save(&mut self) -> Result<&Path> {
        write_annotations(&self.annotations_path, &self.to_annotation_file())?;
        self.dirty = false;
        Ok(&self.annotations_path)
    }
}

/// PNG encoding of frame `i` of `sequence`.
pub fn frame_png(sequence: &SequenceOnDisk, i: usize) -> Result<Vec<u8>> {
    if i >= sequence.manifest.frame_count {
        return Err(Error::NotFound(format!("frame {i} does not exist")));
    }
    let img = load_image(sequence.image_path(i)?)?;
    Ok(encode_png(&img)?)
}
