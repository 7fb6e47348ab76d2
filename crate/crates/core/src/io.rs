//! Line-oriented detection files, JSON annotation files and sequence
//! manifests.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geometry::{BoundingBox, Detection, GroundTruthBox};
use crate::{Error, Result};

/// Write `bytes` to `path` through a temporary file in the same directory
/// followed by a rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub(crate) fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Detections: `frame_id,x,y,w,h,confidence,class_label`, one per line.

const DETECTION_FIELDS: [&str; 7] = ["frame_id", "x", "y", "w", "h", "confidence", "class_label"];

pub fn parse_detections(text: &str, path: &Path) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let parse_err = |field: &'static str, message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            field,
            message,
        };
        if parts.len() != DETECTION_FIELDS.len() {
            return Err(parse_err(
                "record",
                format!("expected 7 comma-separated fields, found {}", parts.len()),
            ));
        }
        let real = |i: usize| -> Result<f64> {
            let v: f64 = parts[i]
                .parse()
                .map_err(|_| parse_err(DETECTION_FIELDS[i], format!("not a number: {:?}", parts[i])))?;
            if !v.is_finite() {
                return Err(parse_err(DETECTION_FIELDS[i], "not finite".into()));
            }
            Ok(v)
        };
        let frame_id: usize = parts[0]
            .parse()
            .map_err(|_| parse_err("frame_id", format!("not a non-negative integer: {:?}", parts[0])))?;
        let class_label: u32 = parts[6]
            .parse()
            .map_err(|_| parse_err("class_label", format!("not a small integer: {:?}", parts[6])))?;
        let (x, y, w, h, confidence) = (real(1)?, real(2)?, real(3)?, real(4)?, real(5)?);
        if w <= 0.0 {
            return Err(parse_err("w", format!("width must be positive, got {w}")));
        }
        if h <= 0.0 {
            return Err(parse_err("h", format!("height must be positive, got {h}")));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(parse_err("confidence", format!("{confidence} outside [0, 1]")));
        }
        out.push(Detection {
            frame_id,
            bbox: BoundingBox { x, y, w, h },
            confidence,
            class_label,
        });
    }
    Ok(out)
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    let path = path.as_ref();
    parse_detections(&read_to_string(path)?, path)
}

pub fn format_detections(dets: &[Detection]) -> String {
    let mut s = String::new();
    for d in dets {
        let b = &d.bbox;
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            d.frame_id, b.x, b.y, b.w, b.h, d.confidence, d.class_label
        ));
    }
    s
}

pub fn write_detections(path: impl AsRef<Path>, dets: &[Detection]) -> Result<()> {
    for d in dets {
        d.validate()?;
    }
    write_atomic(path.as_ref(), format_detections(dets).as_bytes())
}

/// Group detections by frame index; frames without detections get an empty
/// list. Detections beyond `frame_count` are rejected.
pub fn detections_by_frame(dets: &[Detection], frame_count: usize) -> Result<Vec<Vec<Detection>>> {
    let mut frames = vec![Vec::new(); frame_count];
    for d in dets {
        let slot = frames.get_mut(d.frame_id).ok_or_else(|| {
            Error::Validation(format!(
                "detection references frame {} but the sequence has {frame_count} frames",
                d.frame_id
            ))
        })?;
        slot.push(*d);
    }
    Ok(frames)
}

// ---------------------------------------------------------------------------
// Annotations (also used for tracker output and water regions).

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedBox {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl AnnotatedBox {
    pub fn new(id: u64, b: BoundingBox) -> Self {
        Self {
            id,
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
        }
    }

    pub fn bbox(&self) -> BoundingBox {
        BoundingBox {
            x: self.x,
            y: self.y,
            w: self.w,
            h: self.h,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedFrame {
    pub frame_id: usize,
    pub boxes: Vec<AnnotatedBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub sequence: String,
    pub frames: Vec<AnnotatedFrame>,
}

impl AnnotationFile {
    /// Build a file with one entry per frame in `0..frame_count`, boxes in
    /// ascending id order.
    pub fn from_boxes(sequence: impl Into<String>, frame_count: usize, boxes: &[GroundTruthBox]) -> Self {
        let mut per_frame: BTreeMap<usize, Vec<AnnotatedBox>> =
            (0..frame_count).map(|f| (f, Vec::new())).collect();
        for gt in boxes {
            per_frame
                .entry(gt.frame_id)
                .or_default()
                .push(AnnotatedBox::new(gt.object_id, gt.bbox));
        }
        let frames = per_frame
            .into_iter()
            .map(|(frame_id, mut boxes)| {
                boxes.sort_by_key(|b| b.id);
                AnnotatedFrame { frame_id, boxes }
            })
            .collect();
        Self {
            sequence: sequence.into(),
            frames,
        }
    }

    pub fn boxes(&self) -> Vec<GroundTruthBox> {
        self.frames
            .iter()
            .flat_map(|f| {
                f.boxes.iter().map(move |b| GroundTruthBox {
                    frame_id: f.frame_id,
                    object_id: b.id,
                    bbox: b.bbox(),
                })
            })
            .collect()
    }

    pub fn frame(&self, frame_id: usize) -> Option<&AnnotatedFrame> {
        self.frames.iter().find(|f| f.frame_id == frame_id)
    }

    /// Boxes of each frame in `0..frame_count` (missing frames are empty).
    pub fn per_frame(&self, frame_count: usize) -> Vec<Vec<AnnotatedBox>> {
        let mut out = vec![Vec::new(); frame_count];
        for f in &self.frames {
            if let Some(slot) = out.get_mut(f.frame_id) {
                slot.extend_from_slice(&f.boxes);
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.frames {
            let mut seen = HashSet::new();
            for b in &f.boxes {
                b.bbox().validate().map_err(|e| {
                    Error::Validation(format!("frame {} box id {}: {e}", f.frame_id, b.id))
                })?;
                if !seen.insert(b.id) {
                    return Err(Error::Validation(format!(
                        "frame {} has duplicate id {}",
                        f.frame_id, b.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("annotation serialization is infallible");
        s.push('\n');
        s
    }
}

pub fn read_annotations(path: impl AsRef<Path>) -> Result<AnnotationFile> {
    let path = path.as_ref();
    let file: AnnotationFile =
        serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::json(path, e))?;
    file.validate()
        .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
    Ok(file)
}

pub fn write_annotations(path: impl AsRef<Path>, file: &AnnotationFile) -> Result<()> {
    file.validate()?;
    write_atomic(path.as_ref(), file.to_json().as_bytes())
}

// ---------------------------------------------------------------------------
// Sequence manifest.

/// Describes an image sequence on disk. Relative paths resolve against the
/// directory containing the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub name: String,
    pub frame_count: usize,
    pub image_width: usize,
    pub image_height: usize,
    /// Path template; `{frame}` or a zero-padded `{frame:06}` is replaced by
    /// the frame index.
    pub image_path_pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotations: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub water: Option<String>,
}

impl SequenceManifest {
    pub fn validate(&self) -> Result<()> {
        if self.frame_count == 0 {
            return Err(Error::Validation("manifest frame_count must be at least 1".into()));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Validation("manifest image dimensions must be positive".into()));
        }
        expand_frame_pattern(&self.image_path_pattern, 0)?;
        Ok(())
    }

    pub fn image_diagonal(&self) -> f64 {
        (self.image_width as f64).hypot(self.image_height as f64)
    }
}

/// A manifest together with the directory its relative paths resolve from.
#[derive(Debug, Clone)]
pub struct SequenceOnDisk {
    pub manifest: SequenceManifest,
    pub base_dir: PathBuf,
}

impl SequenceOnDisk {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let manifest: SequenceManifest =
            serde_json::from_str(&read_to_string(path)?).map_err(|e| Error::json(path, e))?;
        manifest
            .validate()
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { manifest, base_dir })
    }

    pub fn image_path(&self, frame: usize) -> Result<PathBuf> {
        Ok(self
            .base_dir
            .join(expand_frame_pattern(&self.manifest.image_path_pattern, frame)?))
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.base_dir.join(rel)
    }

    fn sidecar(&self, rel: &Option<String>, what: &str) -> Result<PathBuf> {
        rel.as_deref()
            .map(|r| self.resolve(r))
            .ok_or_else(|| Error::Validation(format!("manifest `{}` names no {what} file", self.manifest.name)))
    }

    pub fn detections_path(&self) -> Result<PathBuf> {
        self.sidecar(&self.manifest.detections, "detections")
    }

    pub fn annotations_path(&self) -> Result<PathBuf> {
        self.sidecar(&self.manifest.annotations, "annotations")
    }

    pub fn water_path(&self) -> Result<PathBuf> {
        self.sidecar(&self.manifest.water, "water-regions")
    }

    /// Load every frame and check it against the declared dimensions.
    pub fn load_images(&self) -> Result<Vec<crate::imaging::GrayImage>> {
        (0..self.manifest.frame_count)
            .map(|f| {
                let path = self.image_path(f)?;
                let img = crate::imaging::load_image(&path)?;
                if img.width() != self.manifest.image_width || img.height() != self.manifest.image_height {
                    return Err(Error::Image {
                        path,
                        message: format!(
                            "expected {}x{}, found {}x{}",
                            self.manifest.image_width,
                            self.manifest.image_height,
                            img.width(),
                            img.height()
                        ),
                    });
                }
                Ok(img)
            })
            .collect()
    }
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &SequenceManifest) -> Result<()> {
    manifest.validate()?;
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serialization is infallible");
    s.push('\n');
    write_atomic(path.as_ref(), s.as_bytes())
}

pub fn expand_frame_pattern(pattern: &str, frame: usize) -> Result<String> {
    let start = pattern
        .find("{frame")
        .ok_or_else(|| Error::Validation(format!("image pattern {pattern:?} has no {{frame}} placeholder")))?;
    let end = start
        + pattern[start..]
            .find('}')
            .ok_or_else(|| Error::Validation(format!("unterminated placeholder in {pattern:?}")))?;
    let spec = &pattern[start + "{frame".len()..end];
    let formatted = match spec {
        "" => frame.to_string(),
        s if s.starts_with(":0") => {
            let width: usize = s[2..]
                .parse()
                .map_err(|_| Error::Validation(format!("bad width in placeholder {pattern:?}")))?;
            format!("{frame:0width$}")
        }
        _ => return Err(Error::Validation(format!("unsupported placeholder in {pattern:?}"))),
    };
    Ok(format!("{}{}{}", &pattern[..start], formatted, &pattern[end + 1..]))
}

/// Little-endian reader over a byte slice that reports truncation as
/// corruption.
pub(crate) struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt(format!("truncated: needed {n} bytes at offset {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }
}
