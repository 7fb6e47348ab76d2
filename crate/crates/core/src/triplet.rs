//! Artificial triplets: positives are synthesized by jittering the anchor
//! box in position and scale (optionally followed by a random shear or
//! rotation), negatives are other objects of the same frame or water
//! background.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{BoundingBox, GroundTruthBox};
use crate::imaging::{apply_affine, extract_patch, AffineParams, FrameSource, Patch};
use crate::rng::rng_for;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JitterConfig {
    /// Maximum center shift as a fraction of the box width/height.
    pub max_translation_frac: f64,
    /// Uniform multiplicative scale interval `[low, high]`.
    pub scale_range: (f64, f64),
    pub samples_per_anchor: usize,
    pub seed: u64,
}

impl Default for JitterConfig {
    fn default() -> Self {
        Self {
            max_translation_frac: 0.2,
            scale_range: (0.8, 1.2),
            samples_per_anchor: 2,
            seed: 0,
        }
    }
}

impl JitterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.max_translation_frac) {
            return Err(Error::Validation(format!(
                "max_translation_frac must be in [0, 0.5), got {}",
                self.max_translation_frac
            )));
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Validation(format!("invalid scale_range [{lo}, {hi}]")));
        }
        if self.samples_per_anchor == 0 {
            return Err(Error::Validation("samples_per_anchor must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub max_shear: f64,
    /// Radians.
    pub max_rotation: f64,
    pub probability: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            max_shear: 0.2,
            max_rotation: 15f64.to_radians(),
            probability: 0.5,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.probability) {
            return Err(Error::Validation(format!(
                "augmentation probability {} outside [0, 1]",
                self.probability
            )));
        }
        if self.max_shear < 0.0 || self.max_rotation < 0.0 {
            return Err(Error::Validation("augmentation bounds must be non-negative".into()));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl rand::Rng) -> AffineParams {
        let mut sym = |m: f64| if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
        AffineParams {
            shear_x: sym(self.max_shear),
            shear_y: sym(self.max_shear),
            rotation: sym(self.max_rotation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "id")]
pub enum NegativeSource {
    Object(u64),
    Water,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub anchor: Patch,
    pub positive: Patch,
    pub negative: Patch,
    pub anchor_object_id: u64,
    pub negative_source: NegativeSource,
}

/// Jittered copies of `bbox`, clipped to `bounds = (width, height)`.
/// Returns the boxes and the number of draws skipped because less than
/// 2x2 pixels survived clipping.
pub fn sample_positive_boxes(
    bbox: &BoundingBox,
    cfg: &JitterConfig,
    bounds: (f64, f64),
) -> Result<(Vec<BoundingBox>, usize)> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, &[]);
    Ok(jitter_boxes(bbox, cfg, bounds, &mut rng))
}

fn jitter_boxes(
    bbox: &BoundingBox,
    cfg: &JitterConfig,
    bounds: (f64, f64),
    rng: &mut impl rand::Rng,
) -> (Vec<BoundingBox>, usize) {
    let (cx, cy) = bbox.center();
    let t = cfg.max_translation_frac;
    let (lo, hi) = cfg.scale_range;
    let mut out = Vec::with_capacity(cfg.samples_per_anchor);
    let mut skipped = 0;
    for _ in 0..cfg.samples_per_anchor {
        let dx = if t > 0.0 { rng.random_range(-t..=t) } else { 0.0 } * bbox.w;
        let dy = if t > 0.0 { rng.random_range(-t..=t) } else { 0.0 } * bbox.h;
        let s = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let candidate = BoundingBox::from_center(cx + dx, cy + dy, bbox.w * s, bbox.h * s);
        match candidate.clip(bounds.0, bounds.1) {
            Some(c) if c.w >= 2.0 && c.h >= 2.0 => out.push(c),
            _ => skipped += 1,
        }
    }
    (out, skipped)
}

/// Every other object of the frame (ascending id) followed by the water
/// boxes. The anchor's own box is excluded.
pub fn collect_negatives(
    frame_annotations: &[GroundTruthBox],
    anchor_id: u64,
    water_boxes: &[BoundingBox],
) -> Vec<(BoundingBox, NegativeSource)> {
    let mut objects: Vec<&GroundTruthBox> = frame_annotations
        .iter()
        .filter(|g| g.object_id != anchor_id)
        .collect();
    objects.sort_by_key(|g| g.object_id);
    objects
        .into_iter()
        .map(|g| (g.bbox, NegativeSource::Object(g.object_id)))
        .chain(water_boxes.iter().map(|b| (*b, NegativeSource::Water)))
        .collect()
}

/// Audit record for one triplet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletProvenance {
    pub frame_id: usize,
    pub object_id: u64,
    pub sample: usize,
    pub positive_box: BoundingBox,
    pub negative_frame: usize,
    pub negative_source: NegativeSource,
    pub negative_box: BoundingBox,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub augment: Option<AffineParams>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub anchors: usize,
    pub skipped_positive_boxes: usize,
    /// Objects that never had a negative anywhere in the sequence.
    pub excluded_objects: Vec<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct TripletDataset {
    pub resolution: usize,
    pub triplets: Vec<Triplet>,
    pub provenance: Vec<TripletProvenance>,
    pub report: DatasetReport,
}

impl TripletDataset {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// Concatenate datasets built from several sequences.
    pub fn concat(parts: Vec<TripletDataset>) -> Result<TripletDataset> {
        let mut out = TripletDataset::default();
        for part in parts {
            if out.resolution != 0 && part.resolution != 0 && out.resolution != part.resolution {
                return Err(Error::Shape(format!(
                    "cannot merge datasets of resolution {} and {}",
                    out.resolution, part.resolution
                )));
            }
            if part.resolution != 0 {
                out.resolution = part.resolution;
            }
            out.triplets.extend(part.triplets);
            out.provenance.extend(part.provenance);
            out.report.anchors += part.report.anchors;
            out.report.skipped_positive_boxes += part.report.skipped_positive_boxes;
            out.report.excluded_objects.extend(part.report.excluded_objects);
        }
        Ok(out)
    }
}

/// Everything needed to cut triplets out of one annotated sequence.
pub struct TripletSource<'a, F: FrameSource + ?Sized> {
    pub frames: &'a F,
    pub annotations: &'a [GroundTruthBox],
    /// Water boxes per frame; frames beyond the list have none.
    pub water: &'a [Vec<BoundingBox>],
}

pub fn build_triplet_dataset<F: FrameSource + ?Sized>(
    source: &TripletSource<'_, F>,
    jitter: &JitterConfig,
    augment: &AugmentConfig,
    resolution: usize,
) -> Result<TripletDataset> {
    jitter.validate()?;
    augment.validate()?;
    let frame_count = source.frames.frame_count();
    let mut per_frame: Vec<Vec<GroundTruthBox>> = vec![Vec::new(); frame_count];
    for gt in source.annotations {
        per_frame
            .get_mut(gt.frame_id)
            .ok_or_else(|| {
                Error::at_frame(
                    gt.frame_id,
                    Error::Validation(format!("annotation beyond the {frame_count}-frame sequence")),
                )
            })?
            .push(*gt);
    }
    for boxes in &mut per_frame {
        boxes.sort_by_key(|g| g.object_id);
    }
    let water = |f: usize| source.water.get(f).map(Vec::as_slice).unwrap_or(&[]);

    // Negative pool for each (frame, anchor): same frame first, otherwise the
    // nearest frame (later frame wins a distance tie) that offers one.
    let pool_for = |frame: usize, anchor: u64| -> Option<(usize, Vec<(BoundingBox, NegativeSource)>)> {
        let own = collect_negatives(&per_frame[frame], anchor, water(frame));
        if !own.is_empty() {
            return Some((frame, own));
        }
        for dist in 1..frame_count {
            for f in [frame.checked_add(dist), frame.checked_sub(dist)].into_iter().flatten() {
                if f < frame_count {
                    let negs = collect_negatives(&per_frame[f], anchor, water(f));
                    if !negs.is_empty() {
                        return Some((f, negs));
                    }
                }
            }
        }
        None
    };

    struct FrameOutput {
        triplets: Vec<Triplet>,
        provenance: Vec<TripletProvenance>,
        anchors: usize,
        skipped: usize,
        excluded: Vec<u64>,
    }

    let outputs: Vec<FrameOutput> = (0..frame_count)
        .into_par_iter()
        .map(|frame| -> Result<FrameOutput> {
            let mut out = FrameOutput {
                triplets: Vec::new(),
                provenance: Vec::new(),
                anchors: 0,
                skipped: 0,
                excluded: Vec::new(),
            };
            let objects = &per_frame[frame];
            if objects.is_empty() {
                return Ok(out);
            }
            let image = source.frames.frame(frame).map_err(|e| match e {
                e @ Error::AtFrame { .. } => e,
                e => Error::at_frame(frame, e),
            })?;
            let bounds = (image.width() as f64, image.height() as f64);
            let mut negative_images: BTreeMap<usize, std::borrow::Cow<'_, crate::imaging::GrayImage>> =
                BTreeMap::new();
            for (rank, gt) in objects.iter().enumerate() {
                let Some((neg_frame, negatives)) = pool_for(frame, gt.object_id) else {
                    out.excluded.push(gt.object_id);
                    continue;
                };
                out.anchors += 1;
                let anchor = extract_patch(&image, &gt.bbox, resolution)
                    .map_err(|e| Error::at_frame(frame, e))?;
                let mut rng = rng_for(jitter.seed, &[frame as u64, gt.object_id]);
                let (boxes, skipped) = jitter_boxes(&gt.bbox, jitter, bounds, &mut rng);
                out.skipped += skipped;
                if neg_frame != frame && !negative_images.contains_key(&neg_frame) {
                    negative_images.insert(neg_frame, source.frames.frame(neg_frame)?);
                }
                let neg_image = if neg_frame == frame {
                    &image
                } else {
                    &negative_images[&neg_frame]
                };
                for (sample, pbox) in boxes.iter().enumerate() {
                    let crop = extract_patch(&image, pbox, resolution).map_err(|e| Error::at_frame(frame, e))?;
                    let aug = (augment.enabled && rng.random_bool(augment.probability))
                        .then(|| augment.sample(&mut rng));
                    let positive = match &aug {
                        Some(params) => apply_affine(&crop, params),
                        None => crop,
                    };
                    let (nbox, nsrc) = negatives[(rank + sample) % negatives.len()];
                    let negative = extract_patch(neg_image, &nbox, resolution)
                        .map_err(|e| Error::at_frame(neg_frame, e))?;
                    out.triplets.push(Triplet {
                        anchor: anchor.clone(),
                        positive,
                        negative,
                        anchor_object_id: gt.object_id,
                        negative_source: nsrc,
                    });
                    out.provenance.push(TripletProvenance {
                        frame_id: frame,
                        object_id: gt.object_id,
                        sample,
                        positive_box: *pbox,
                        negative_frame: neg_frame,
                        negative_source: nsrc,
                        negative_box: nbox,
                        augment: aug,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut dataset = TripletDataset {
        resolution,
        ..Default::default()
    };
    let mut excluded = std::collections::BTreeSet::new();
    for o in outputs {
        dataset.triplets.extend(o.triplets);
        dataset.provenance.extend(o.provenance);
        dataset.report.anchors += o.anchors;
        dataset.report.skipped_positive_boxes += o.skipped;
        excluded.extend(o.excluded);
    }
    dataset.report.excluded_objects = excluded.into_iter().collect();
    Ok(dataset)
}

// ---------------------------------------------------------------------------
// On-disk dataset: magic, version, resolution, count, then per triplet the
// anchor id, negative source tag and id, and three patches of f64 LE.

const DATASET_MAGIC: &[u8; 8] = b"TRIPLETS";
const DATASET_VERSION: u32 = 1;

pub fn encode_dataset(ds: &TripletDataset) -> Vec<u8> {
    let p2 = ds.resolution * ds.resolution;
    let mut out = Vec::with_capacity(24 + ds.len() * (17 + 3 * p2 * 8));
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.resolution as u32).to_le_bytes());
    out.extend_from_slice(&(ds.len() as u64).to_le_bytes());
    for t in &ds.triplets {
        out.extend_from_slice(&t.anchor_object_id.to_le_bytes());
        let (tag, id) = match t.negative_source {
            NegativeSource::Water => (0u8, 0u64),
            NegativeSource::Object(id) => (1u8, id),
        };
        out.push(tag);
        out.extend_from_slice(&id.to_le_bytes());
        for patch in [&t.anchor, &t.positive, &t.negative] {
            for v in patch.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn decode_dataset(bytes: &[u8]) -> Result<TripletDataset> {
    let mut cur = crate::io::ByteCursor::new(bytes);
    if cur.take(8)? != DATASET_MAGIC {
        return Err(Error::Corrupt("not a triplet dataset (bad magic)".into()));
    }
    let version = cur.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Corrupt(format!("unsupported dataset version {version}")));
    }
    let resolution = cur.u32()? as usize;
    let count = cur.u64()? as usize;
    let p2 = resolution * resolution;
    let mut triplets = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let anchor_object_id = cur.u64()?;
        let tag = cur.take(1)?[0];
        let id = cur.u64()?;
        let negative_source = match tag {
            0 => NegativeSource::Water,
            1 => NegativeSource::Object(id),
            t => return Err(Error::Corrupt(format!("bad negative tag {t}"))),
        };
        let mut patch = || -> Result<Patch> {
            let data = (0..p2).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
            Patch::new(resolution, data).map_err(|e| Error::Corrupt(e.to_string()))
        };
        let (anchor, positive, negative) = (patch()?, patch()?, patch()?);
        triplets.push(Triplet {
            anchor,
            positive,
            negative,
            anchor_object_id,
            negative_source,
        });
    }
    if !cur.is_empty() {
        return Err(Error::Corrupt("trailing bytes after dataset".into()));
    }
    Ok(TripletDataset {
        resolution,
        triplets,
        provenance: Vec::new(),
        report: DatasetReport::default(),
    })
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &TripletDataset) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), &encode_dataset(ds))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<TripletDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}

#[derive(Serialize)]
struct ProvenanceManifest<'a> {
    resolution: usize,
    count: usize,
    report: &'a DatasetReport,
    triplets: &'a [TripletProvenance],
}

pub fn write_provenance(path: impl AsRef<Path>, ds: &TripletDataset) -> Result<()> {
    let manifest = ProvenanceManifest {
        resolution: ds.resolution,
        count: ds.len(),
        report: &ds.report,
        triplets: &ds.provenance,
    };
    let mut s = serde_json::to_string_pretty(&manifest).expect("provenance serialization is infallible");
    s.push('\n');
    crate::io::write_atomic(path.as_ref(), s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::GrayImage;

    fn gt(frame: usize, id: u64, x: f64, y: f64) -> GroundTruthBox {
        GroundTruthBox {
            frame_id: frame,
            object_id: id,
            bbox: BoundingBox::new(x, y, 12.0, 10.0).unwrap(),
        }
    }

    #[test]
    fn zero_jitter_reproduces_box() {
        let b = BoundingBox::new(10.0, 12.0, 20.0, 16.0).unwrap();
        let cfg = JitterConfig {
            max_translation_frac: 0.0,
            scale_range: (1.0, 1.0),
            samples_per_anchor: 5,
            seed: 3,
        };
        let (boxes, skipped) = sample_positive_boxes(&b, &cfg, (100.0, 100.0)).unwrap();
        assert_eq!(skipped, 0);
        assert_eq!(boxes, vec![b; 5]);
    }

    #[test]
    fn jittered_boxes_overlap_anchor_and_are_reproducible() {
        let b = BoundingBox::new(40.0, 40.0, 20.0, 16.0).unwrap();
        let cfg = JitterConfig {
            max_translation_frac: 0.49,
            scale_range: (0.5, 1.5),
            samples_per_anchor: 200,
            seed: 42,
        };
        let (boxes, _) = sample_positive_boxes(&b, &cfg, (200.0, 200.0)).unwrap();
        assert!(boxes.iter().all(|p| p.intersects(&b)));
        let (again, _) = sample_positive_boxes(&b, &cfg, (200.0, 200.0)).unwrap();
        assert_eq!(boxes, again);
    }

    #[test]
    fn slivers_after_clipping_are_skipped() {
        let b = BoundingBox::new(-9.5, 10.0, 10.0, 10.0).unwrap();
        let cfg = JitterConfig {
            max_translation_frac: 0.0,
            scale_range: (1.0, 1.0),
            samples_per_anchor: 4,
            seed: 0,
        };
        let (boxes, skipped) = sample_positive_boxes(&b, &cfg, (50.0, 50.0)).unwrap();
        assert!(boxes.is_empty());
        assert_eq!(skipped, 4);
    }

    #[test]
    fn config_validation() {
        let bad = JitterConfig {
            max_translation_frac: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = JitterConfig {
            scale_range: (1.2, 0.8),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = AugmentConfig {
            probability: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn negatives_exclude_anchor() {
        let frame = vec![gt(0, 1, 0.0, 0.0), gt(0, 2, 20.0, 0.0), gt(0, 3, 40.0, 0.0)];
        assert!(collect_negatives(&frame[..1], 1, &[]).is_empty());
        let negs = collect_negatives(&frame, 2, &[]);
        let ids: Vec<_> = negs.iter().map(|n| n.1).collect();
        assert_eq!(ids, vec![NegativeSource::Object(1), NegativeSource::Object(3)]);
        let water = [BoundingBox::new(0.0, 50.0, 5.0, 5.0).unwrap(); 2];
        let negs = collect_negatives(&frame, 2, &water);
        assert_eq!(negs.len(), 4);
        assert_eq!(negs.iter().filter(|n| n.1 == NegativeSource::Water).count(), 2);
    }

    fn textured_frames(n: usize) -> Vec<GrayImage> {
        (0..n)
            .map(|f| {
                let data = (0..80 * 60)
                    .map(|k| ((k % 80) as f32 * 0.3 + (k / 80) as f32 * 0.2 + f as f32).sin() * 0.4 + 0.5)
                    .collect();
                GrayImage::new(80, 60, data).unwrap()
            })
            .collect()
    }

    #[test]
    fn single_object_without_water_yields_nothing() {
        let frames = textured_frames(3);
        let ann: Vec<_> = (0..3).map(|f| gt(f, 1, 10.0, 10.0)).collect();
        let src = TripletSource {
            frames: &frames,
            annotations: &ann,
            water: &[],
        };
        let ds = build_triplet_dataset(&src, &JitterConfig::default(), &AugmentConfig::default(), 8).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.report.excluded_objects, vec![1]);
    }

    #[test]
    fn counts_and_identity_invariants() {
        let frames = textured_frames(10);
        let ann: Vec<_> = (0..10)
            .flat_map(|f| [gt(f, 1, 10.0, 10.0), gt(f, 2, 40.0, 30.0)])
            .collect();
        let src = TripletSource {
            frames: &frames,
            annotations: &ann,
            water: &[],
        };
        let jitter = JitterConfig {
            samples_per_anchor: 3,
            seed: 9,
            ..Default::default()
        };
        let ds = build_triplet_dataset(&src, &jitter, &AugmentConfig::default(), 8).unwrap();
        assert_eq!(ds.len(), 2 * 3 * 10);
        for (t, p) in ds.triplets.iter().zip(&ds.provenance) {
            assert_eq!(t.anchor_object_id, p.object_id);
            assert_ne!(t.negative_source, NegativeSource::Object(t.anchor_object_id));
            // augmentation off: positives are plain crops of the sampled boxes
            let crop = extract_patch(&frames[p.frame_id], &p.positive_box, 8).unwrap();
            assert_eq!(t.positive, crop);
        }
        let again = build_triplet_dataset(&src, &jitter, &AugmentConfig::default(), 8).unwrap();
        assert_eq!(again.triplets, ds.triplets);
        assert_eq!(again.provenance, ds.provenance);
    }

    #[test]
    fn borrows_negatives_from_other_frames() {
        let frames = textured_frames(4);
        // object 2 only shows up in frame 3
        let mut ann: Vec<_> = (0..4).map(|f| gt(f, 1, 10.0, 10.0)).collect();
        ann.push(gt(3, 2, 40.0, 30.0));
        let src = TripletSource {
            frames: &frames,
            annotations: &ann,
            water: &[],
        };
        let ds = build_triplet_dataset(&src, &JitterConfig::default(), &AugmentConfig::default(), 8).unwrap();
        assert!(ds.report.excluded_objects.is_empty());
        assert!(ds.provenance.iter().any(|p| p.frame_id == 0 && p.negative_frame == 3));
    }

    #[test]
    fn missing_frame_is_named() {
        let frames = textured_frames(2);
        let ann = vec![gt(0, 1, 10.0, 10.0), gt(0, 2, 40.0, 30.0), gt(5, 1, 10.0, 10.0)];
        let src = TripletSource {
            frames: &frames,
            annotations: &ann,
            water: &[],
        };
        let err = build_triplet_dataset(&src, &JitterConfig::default(), &AugmentConfig::default(), 8).unwrap_err();
        assert!(matches!(err, Error::AtFrame { frame: 5, .. }), "{err}");
    }

    #[test]
    fn zero_jitter_without_augmentation_makes_anchor_equal_positive() {
        let frames = textured_frames(2);
        let ann: Vec<_> = (0..2)
            .flat_map(|f| [gt(f, 1, 10.0, 10.0), gt(f, 2, 40.0, 30.0)])
            .collect();
        let src = TripletSource {
            frames: &frames,
            annotations: &ann,
            water: &[],
        };
        let jitter = JitterConfig {
            max_translation_frac: 0.0,
            scale_range: (1.0, 1.0),
            samples_per_anchor: 1,
            seed: 0,
        };
        let ds = build_triplet_dataset(&src, &jitter, &AugmentConfig::default(), 8).unwrap();
        assert!(ds.triplets.iter().all(|t| t.anchor == t.positive));
    }

    #[test]
    fn dataset_encoding_round_trips() {
        let frames = textured_frames(2);
        let ann: Vec<_> = (0..2)
            .flat_map(|f| [gt(f, 1, 10.0, 10.0), gt(f, 2, 40.0, 30.0)])
            .collect();
        let water = vec![vec![BoundingBox::new(60.0, 40.0, 10.0, 10.0).unwrap()]; 2];
        let src = TripletSource {
            frames: &frames,
            annotations: &ann,
            water: &water,
        };
        let aug = AugmentConfig {
            enabled: true,
            probability: 1.0,
            ..Default::default()
        };
        let ds = build_triplet_dataset(&src, &JitterConfig::default(), &aug, 6).unwrap();
        assert!(ds.provenance.iter().all(|p| p.augment.is_some()));
        let bytes = encode_dataset(&ds);
        let back = decode_dataset(&bytes).unwrap();
        assert_eq!(back.triplets, ds.triplets);
        assert!(decode_dataset(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode_dataset(b"NOTMAGIC").is_err());
    }
}
