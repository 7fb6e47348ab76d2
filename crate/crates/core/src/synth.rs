//! Synthetic sequences: textured rectangles moving over a noisy dark
//! background, with exact ground truth, noisy detections and water boxes.

use std::f64::consts::TAU;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{BoundingBox, Detection, GroundTruthBox};
use crate::imaging::{save_pgm, GrayImage};
use crate::io::{
    format_detections, write_annotations, write_atomic, write_manifest, AnnotatedBox, AnnotatedFrame,
    AnnotationFile, SequenceManifest, SequenceOnDisk,
};
use crate::rng::rng_for;
use crate::{Error, Result};

/// Boxes clipped to fewer pixels than this on either side are not emitted.
const MIN_VISIBLE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityChange {
    pub frame: usize,
    pub vx: f64,
    pub vy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: u64,
    /// Box at frame 0.
    #[serde(rename = "box")]
    pub initial: BoundingBox,
    pub vx: f64,
    pub vy: f64,
    pub texture: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn: Option<VelocityChange>,
}

impl ObjectSpec {
    /// Unclipped box at `frame`.
    pub fn box_at(&self, frame: usize) -> BoundingBox {
        let (dx, dy) = match self.turn {
            Some(t) if frame > t.frame => {
                let before = t.frame as f64;
                let after = (frame - t.frame) as f64;
                (self.vx * before + t.vx * after, self.vy * before + t.vy * after)
            }
            _ => (self.vx * frame as f64, self.vy * frame as f64),
        };
        BoundingBox {
            x: self.initial.x + dx,
            y: self.initial.y + dy,
            ..self.initial
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    pub objects: Vec<ObjectSpec>,
    pub background_mean: f64,
    pub noise_sigma: f64,
    /// Uniform jitter, in pixels, applied to each detection coordinate.
    pub detection_jitter: f64,
    pub miss_probability: f64,
    /// Probability per frame of one false detection on a water region.
    pub false_positive_rate: f64,
    pub water_boxes_per_frame: usize,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 320,
            height: 240,
            frame_count: 60,
            objects: Vec::new(),
            background_mean: 0.15,
            noise_sigma: 0.02,
            detection_jitter: 1.0,
            miss_probability: 0.0,
            false_positive_rate: 0.0,
            water_boxes_per_frame: 3,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.width < 8 || self.height < 8 {
            return fail(format!("image must be at least 8x8, got {}x{}", self.width, self.height));
        }
        if self.frame_count == 0 {
            return fail("frame_count must be at least 1".into());
        }
        for (name, p) in [
            ("miss_probability", self.miss_probability),
            ("false_positive_rate", self.false_positive_rate),
            ("background_mean", self.background_mean),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("noise_sigma must be non-negative, got {}", self.noise_sigma));
        }
        if !(self.detection_jitter >= 0.0 && self.detection_jitter.is_finite()) {
            return fail(format!("detection_jitter must be non-negative, got {}", self.detection_jitter));
        }
        let mut ids = std::collections::HashSet::new();
        for o in &self.objects {
            if o.id == 0 || !ids.insert(o.id) {
                return fail(format!("object ids must be positive and unique, got {}", o.id));
            }
            o.initial.validate()?;
            if o.initial.w < MIN_VISIBLE || o.initial.h < MIN_VISIBLE {
                return fail(format!("object {} is smaller than {MIN_VISIBLE} px", o.id));
            }
            if ![o.vx, o.vy].iter().all(|v| v.is_finite()) {
                return fail(format!("object {} has a non-finite velocity", o.id));
            }
        }
        Ok(())
    }

    pub fn image_diagonal(&self) -> f64 {
        (self.width as f64).hypot(self.height as f64)
    }
}

/// Intensity of texture `id` at object-normalized coordinates `(u, v)`.
pub fn texture_value(id: u32, u: f64, v: f64) -> f64 {
    const FX: [f64; 8] = [1.0, 3.0, 0.0, 2.0, 1.0, 4.0, 2.0, 0.0];
    const FY: [f64; 8] = [0.0, 1.0, 3.0, 2.0, 2.0, 0.0, 3.0, 1.0];
    const BASE: [f64; 8] = [0.50, 0.74, 0.62, 0.86, 0.56, 0.80, 0.68, 0.92];
    let k = (id % 8) as usize;
    let phase = 1.3 * id as f64;
    let base = BASE[k] - 0.1 * ((id / 8) % 3) as f64;
    (base + 0.25 * (TAU * (FX[k] * u + FY[k] * v) + phase).sin()).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Preset {
    Static,
    Drift,
    Crossing,
    Reentry,
    Clutter,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Static,
        Preset::Drift,
        Preset::Crossing,
        Preset::Reentry,
        Preset::Clutter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Static => "STATIC",
            Preset::Drift => "DRIFT",
            Preset::Crossing => "CROSSING",
            Preset::Reentry => "REENTRY",
            Preset::Clutter => "CLUTTER",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown preset {s:?} (expected one of STATIC, DRIFT, CROSSING, REENTRY, CLUTTER)"
                ))
            })
    }
}

fn obj(id: u64, x: f64, y: f64, w: f64, h: f64, vx: f64, vy: f64, texture: u32) -> ObjectSpec {
    ObjectSpec {
        id,
        initial: BoundingBox { x, y, w, h },
        vx,
        vy,
        texture,
        turn: None,
    }
}

fn drifting(speed: f64) -> Vec<ObjectSpec> {
    vec![
        obj(1, 30.0, 30.0, 40.0, 28.0, 1.0 * speed, 0.5 * speed, 0),
        obj(2, 200.0, 40.0, 36.0, 30.0, -0.8 * speed, 0.6 * speed, 1),
        obj(3, 40.0, 160.0, 48.0, 32.0, 0.9 * speed, -0.4 * speed, 2),
        obj(4, 220.0, 170.0, 30.0, 24.0, -1.0 * speed, -0.5 * speed, 3),
    ]
}

/// Named scene configurations.
pub fn preset(p: Preset, seed: u64) -> SceneConfig {
    let base = SceneConfig {
        seed,
        ..SceneConfig::default()
    };
    match p {
        Preset::Static => SceneConfig {
            frame_count: 20,
            objects: vec![obj(1, 140.0, 100.0, 40.0, 30.0, 0.0, 0.0, 0)],
            noise_sigma: 0.0,
            detection_jitter: 0.0,
            ..base
        },
        Preset::Drift => SceneConfig {
            objects: drifting(1.0),
            ..base
        },
        // The two large-velocity objects have left edges 240 px apart and
        // meet halfway; their centroids pass each other between frames 27
        // and 28 on the same row.
        Preset::Crossing => SceneConfig {
            objects: vec![
                obj(1, 20.0, 100.0, 56.0, 40.0, 4.0, 0.0, 0),
                obj(2, 260.0, 112.0, 16.0, 16.0, -4.0, 0.0, 1),
                obj(3, 40.0, 20.0, 30.0, 24.0, 1.5, 0.0, 2),
                obj(4, 250.0, 190.0, 36.0, 28.0, -1.5, 0.0, 3),
            ],
            ..base
        },
        // Object 1 leaves through the right edge around frame 15, turns
        // around off screen at frame 20 and comes back from frame 26.
        Preset::Reentry => SceneConfig {
            objects: vec![
                ObjectSpec {
                    turn: Some(VelocityChange {
                        frame: 20,
                        vx: -8.0,
                        vy: 0.0,
                    }),
                    ..obj(1, 200.0, 60.0, 32.0, 24.0, 8.0, 0.0, 0)
                },
                obj(2, 20.0, 120.0, 36.0, 28.0, 1.0, 0.3, 1),
                obj(3, 150.0, 150.0, 30.0, 30.0, -0.5, 0.5, 2),
                obj(4, 260.0, 190.0, 28.0, 24.0, -1.0, 0.0, 3),
            ],
            ..base
        },
        Preset::Clutter => SceneConfig {
            objects: drifting(1.5),
            noise_sigma: 0.04,
            miss_probability: 0.1,
            false_positive_rate: 0.5,
            ..base
        },
    }
}

/// A generated sequence held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub name: String,
    pub config: SceneConfig,
    pub images: Vec<GrayImage>,
    /// Ground truth in frame order, ids ascending within a frame.
    pub ground_truth: Vec<GroundTruthBox>,
    /// Detections in frame order: real ones by object id, then false ones.
    pub detections: Vec<Detection>,
    /// Water regions of each frame.
    pub water: Vec<Vec<BoundingBox>>,
}

struct FrameOutput {
    image: GrayImage,
    gt: Vec<GroundTruthBox>,
    detections: Vec<Detection>,
    water: Vec<BoundingBox>,
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

fn visible_box(o: &ObjectSpec, frame: usize, cfg: &SceneConfig) -> Option<BoundingBox> {
    o.box_at(frame)
        .clip(cfg.width as f64, cfg.height as f64)
        .filter(|b| b.w >= MIN_VISIBLE && b.h >= MIN_VISIBLE)
}

fn render(cfg: &SceneConfig, frame: usize) -> GrayImage {
    let mut rng = rng_for(cfg.seed, &[frame as u64, 1]);
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("sigma validated");
    let boxes: Vec<(BoundingBox, u32)> = cfg.objects.iter().map(|o| (o.box_at(frame), o.texture)).collect();
    let mut data = Vec::with_capacity(cfg.width * cfg.height);
    for row in 0..cfg.height {
        for col in 0..cfg.width {
            // noise is drawn for every pixel so the stream does not depend on
            // where the objects are
            let n = if cfg.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let (px, py) = (col as f64 + 0.5, row as f64 + 0.5);
            let mut v = cfg.background_mean + n;
            for (b, tex) in &boxes {
                if px >= b.x && px < b.right() && py >= b.y && py < b.bottom() {
                    v = texture_value(*tex, (px - b.x) / b.w, (py - b.y) / b.h);
                }
            }
            data.push((v.clamp(0.0, 1.0) * 255.0).round() as f32 / 255.0);
        }
    }
    GrayImage::new(cfg.width, cfg.height, data).expect("pixel values are clamped")
}

fn water_regions(cfg: &SceneConfig, frame: usize, gt: &[GroundTruthBox]) -> Vec<BoundingBox> {
    let mut rng = rng_for(cfg.seed, &[frame as u64, 3]);
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let max_side = 40f64.min(w / 2.0).min(h / 2.0).max(MIN_VISIBLE);
    let mut out: Vec<BoundingBox> = Vec::new();
    for _ in 0..cfg.water_boxes_per_frame {
        for _attempt in 0..50 {
            let bw = rng.random_range(MIN_VISIBLE.max(max_side * 0.4)..=max_side).round();
            let bh = rng.random_range(MIN_VISIBLE.max(max_side * 0.4)..=max_side).round();
            let b = BoundingBox {
                x: rng.random_range(0.0..=(w - bw)).round(),
                y: rng.random_range(0.0..=(h - bh)).round(),
                w: bw,
                h: bh,
            };
            let padded = BoundingBox {
                x: b.x - 4.0,
                y: b.y - 4.0,
                w: b.w + 8.0,
                h: b.h + 8.0,
            };
            let clear = gt.iter().all(|g| !padded.intersects(&g.bbox))
                && cfg.objects.iter().all(|o| !padded.intersects(&o.box_at(frame)))
                && out.iter().all(|o| !o.intersects(&b));
            if clear {
                out.push(b);
                break;
            }
        }
    }
    out
}

fn detections(cfg: &SceneConfig, frame: usize, gt: &[GroundTruthBox], water: &[BoundingBox]) -> Vec<Detection> {
    let mut rng = rng_for(cfg.seed, &[frame as u64, 2]);
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let jitter = |rng: &mut crate::rng::Rng| {
        if cfg.detection_jitter > 0.0 {
            rng.random_range(-cfg.detection_jitter..=cfg.detection_jitter)
        } else {
            0.0
        }
    };
    let mut out = Vec::new();
    for g in gt {
        // draw everything up front so a miss does not shift later draws
        let missed = rng.random_bool(cfg.miss_probability);
        let d = [jitter(&mut rng), jitter(&mut rng), jitter(&mut rng), jitter(&mut rng)];
        let confidence = round2(rng.random_range(0.6..=1.0));
        if missed {
            continue;
        }
        let b = &g.bbox;
        let moved = BoundingBox {
            x: round2(b.x + d[0]),
            y: round2(b.y + d[1]),
            w: round2(b.w + d[2]),
            h: round2(b.h + d[3]),
        };
        if let Some(c) = moved.clip(w, h).filter(|c| c.w >= MIN_VISIBLE && c.h >= MIN_VISIBLE) {
            out.push(Detection {
                frame_id: frame,
                bbox: BoundingBox {
                    x: round2(c.x),
                    y: round2(c.y),
                    w: round2(c.w),
                    h: round2(c.h),
                },
                confidence,
                class_label: 0,
            });
        }
    }
    if !water.is_empty() && rng.random_bool(cfg.false_positive_rate) {
        let b = water[rng.random_range(0..water.len())];
        out.push(Detection {
            frame_id: frame,
            bbox: b,
            confidence: round2(rng.random_range(0.4..=0.8)),
            class_label: 0,
        });
    }
    out
}

fn generate_frame(cfg: &SceneConfig, frame: usize) -> FrameOutput {
    let mut gt: Vec<GroundTruthBox> = cfg
        .objects
        .iter()
        .filter_map(|o| {
            visible_box(o, frame, cfg).map(|bbox| GroundTruthBox {
                frame_id: frame,
                object_id: o.id,
                bbox,
            })
        })
        .collect();
    gt.sort_by_key(|g| g.object_id);
    let water = water_regions(cfg, frame, &gt);
    let detections = detections(cfg, frame, &gt, &water);
    FrameOutput {
        image: render(cfg, frame),
        gt,
        detections,
        water,
    }
}

/// Render a scene. Frames are generated in parallel; every random draw is
/// keyed by `(seed, frame)` so the result does not depend on scheduling.
pub fn generate(name: &str, cfg: &SceneConfig) -> Result<SyntheticSequence> {
    cfg.validate()?;
    let frames: Vec<FrameOutput> = (0..cfg.frame_count)
        .into_par_iter()
        .map(|f| generate_frame(cfg, f))
        .collect();
    let mut seq = SyntheticSequence {
        name: name.to_string(),
        config: cfg.clone(),
        images: Vec::with_capacity(frames.len()),
        ground_truth: Vec::new(),
        detections: Vec::new(),
        water: Vec::with_capacity(frames.len()),
    };
    for f in frames {
        seq.images.push(f.image);
        seq.ground_truth.extend(f.gt);
        seq.detections.extend(f.detections);
        seq.water.push(f.water);
    }
    Ok(seq)
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FRAME_PATTERN: &str = "frames/frame_{frame:06}.pgm";

impl SyntheticSequence {
    pub fn annotations(&self) -> AnnotationFile {
        AnnotationFile::from_boxes(self.name.clone(), self.config.frame_count, &self.ground_truth)
    }

    /// Water regions in the annotation schema, ids numbering the regions of
    /// each frame from 1.
    pub fn water_annotations(&self) -> AnnotationFile {
        AnnotationFile {
            sequence: self.name.clone(),
            frames: self
                .water
                .iter()
                .enumerate()
                .map(|(frame_id, boxes)| AnnotatedFrame {
                    frame_id,
                    boxes: boxes
                        .iter()
                        .enumerate()
                        .map(|(i, b)| AnnotatedBox::new(i as u64 + 1, *b))
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn detections_by_frame(&self) -> Vec<Vec<Detection>> {
        crate::io::detections_by_frame(&self.detections, self.config.frame_count)
            .expect("generated detections lie inside the sequence")
    }

    pub fn manifest(&self) -> SequenceManifest {
        SequenceManifest {
            name: self.name.clone(),
            frame_count: self.config.frame_count,
            image_width: self.config.width,
            image_height: self.config.height,
            image_path_pattern: FRAME_PATTERN.to_string(),
            detections: Some("detections.csv".into()),
            annotations: Some("gt.json".into()),
            water: Some("water.json".into()),
        }
    }

    /// Write frames, ground truth, detections, water regions, the scene
    /// config and a manifest into `dir`. Returns the manifest path.
    pub fn write_to_dir(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let frames_dir = dir.join("frames");
        std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
        let manifest = self.manifest();
        let on_disk = SequenceOnDisk {
            manifest: manifest.clone(),
            base_dir: dir.to_path_buf(),
        };
        self.images
            .par_iter()
            .enumerate()
            .try_for_each(|(i, img)| save_pgm(on_disk.image_path(i)?, img))?;
        write_annotations(on_disk.annotations_path()?, &self.annotations())?;
        write_annotations(on_disk.water_path()?, &self.water_annotations())?;
        write_atomic(&on_disk.detections_path()?, format_detections(&self.detections).as_bytes())?;
        let mut scene = serde_json::to_string_pretty(&self.config).expect("scene serialization is infallible");
        scene.push('\n');
        write_atomic(&dir.join("scene.json"), scene.as_bytes())?;
        let path = dir.join(MANIFEST_FILE);
        write_manifest(&path, &manifest)?;
        Ok(path)
    }
}

/// Water regions stored by `write_to_dir`, one list per frame.
pub fn water_from_annotations(file: &AnnotationFile, frame_count: usize) -> Vec<Vec<BoundingBox>> {
    file.per_frame(frame_count)
        .into_iter()
        .map(|boxes| boxes.iter().map(AnnotatedBox::bbox).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::iou;

    #[test]
    fn static_scene_is_constant() {
        let seq = generate("s", &preset(Preset::Static, 3)).unwrap();
        assert_eq!(seq.images.len(), 20);
        assert!(seq.images.iter().all(|im| im == &seq.images[0]));
        assert_eq!(seq.ground_truth.len(), 20);
        assert_eq!(seq.detections.len(), 20);
        for (g, d) in seq.ground_truth.iter().zip(&seq.detections) {
            assert_eq!(g.bbox, d.bbox);
            assert_eq!(g.frame_id, d.frame_id);
        }
    }

    #[test]
    fn same_seed_same_output() {
        let cfg = preset(Preset::Clutter, 9);
        assert_eq!(generate("c", &cfg).unwrap(), generate("c", &cfg).unwrap());
        let other = generate("c", &preset(Preset::Clutter, 10)).unwrap();
        assert_ne!(generate("c", &cfg).unwrap().images, other.images);
    }

    #[test]
    fn crossing_objects_overlap_at_frame_30() {
        let cfg = preset(Preset::Crossing, 0);
        let (a, b) = (&cfg.objects[0], &cfg.objects[1]);
        assert_eq!(b.initial.x - a.initial.x, 240.0);
        assert_eq!((a.vx, b.vx), (4.0, -4.0));
        assert!(a.box_at(30).intersects(&b.box_at(30)));
        assert!(!a.box_at(0).intersects(&b.box_at(0)));
        // centroids swap order between frames 27 and 28
        assert!(a.box_at(27).center().0 < b.box_at(27).center().0);
        assert!(a.box_at(28).center().0 > b.box_at(28).center().0);
        assert_eq!(cfg.frame_count, 60);
    }

    #[test]
    fn reentry_object_leaves_and_returns() {
        let seq = generate("r", &preset(Preset::Reentry, 0)).unwrap();
        let frames: Vec<usize> = seq
            .ground_truth
            .iter()
            .filter(|g| g.object_id == 1)
            .map(|g| g.frame_id)
            .collect();
        assert!(frames.contains(&14));
        assert!(!frames.contains(&20));
        assert!(frames.contains(&30));
        let gap = (0..60).filter(|f| !frames.contains(f)).count();
        assert!(gap >= 5 && gap < 30, "gap {gap}");
    }

    #[test]
    fn clutter_false_positive_count_is_binomial() {
        let cfg = preset(Preset::Clutter, 1);
        let seq = generate("c", &cfg).unwrap();
        let fps = seq
            .detections
            .iter()
            .filter(|d| seq.ground_truth.iter().all(|g| g.frame_id != d.frame_id || iou(&g.bbox, &d.bbox) < 0.3))
            .count() as f64;
        let n = cfg.frame_count as f64;
        let p = cfg.false_positive_rate;
        let sd = (n * p * (1.0 - p)).sqrt();
        assert!((fps - n * p).abs() <= 3.0 * sd, "{fps} false positives");
    }

    #[test]
    fn boxes_stay_in_bounds() {
        for p in Preset::ALL {
            let cfg = preset(p, 4);
            let seq = generate("b", &cfg).unwrap();
            let (w, h) = (cfg.width as f64, cfg.height as f64);
            for g in &seq.ground_truth {
                assert!(g.bbox.w > 0.0 && g.bbox.h > 0.0);
            }
            for d in &seq.detections {
                let b = d.bbox;
                assert!(b.x >= 0.0 && b.y >= 0.0 && b.right() <= w && b.bottom() <= h, "{p}: {b:?}");
                d.validate().unwrap();
            }
            for (f, ws) in seq.water.iter().enumerate() {
                for b in ws {
                    assert!(seq.ground_truth.iter().filter(|g| g.frame_id == f).all(|g| !g.bbox.intersects(b)));
                }
            }
        }
    }

    #[test]
    fn textures_are_distinguishable() {
        let n = 32;
        let patch = |id: u32| -> Vec<f64> {
            (0..n * n)
                .map(|k| texture_value(id, ((k % n) as f64 + 0.5) / n as f64, ((k / n) as f64 + 0.5) / n as f64))
                .collect()
        };
        let patches: Vec<Vec<f64>> = (0..8).map(patch).collect();
        for i in 0..8 {
            for j in 0..i {
                let mad = patches[i].iter().zip(&patches[j]).map(|(a, b)| (a - b).abs()).sum::<f64>() / (n * n) as f64;
                assert!(mad > 0.1, "textures {i} and {j}: {mad}");
            }
        }
    }

    #[test]
    fn preset_names_parse() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert_eq!("crossing".parse::<Preset>().unwrap(), Preset::Crossing);
        assert!("OCEAN".parse::<Preset>().is_err());
    }

    #[test]
    fn written_sequence_reloads() {
        let seq = generate("d", &SceneConfig { frame_count: 3, ..preset(Preset::Drift, 2) }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = seq.write_to_dir(dir.path()).unwrap();
        let disk = SequenceOnDisk::load(&path).unwrap();
        assert_eq!(disk.load_images().unwrap(), seq.images);
        let dets = crate::io::read_detections(disk.detections_path().unwrap()).unwrap();
        assert_eq!(dets, seq.detections);
        let gt = crate::io::read_annotations(disk.annotations_path().unwrap()).unwrap();
        assert_eq!(gt, seq.annotations());
        let water = crate::io::read_annotations(disk.water_path().unwrap()).unwrap();
        assert_eq!(water_from_annotations(&water, 3), seq.water);
    }
}
