//! Pixel-space boxes, detections and ground-truth records.
//!
//! Boxes use the top-left corner plus width/height convention.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// Validated constructor: width and height must be positive, all
    /// coordinates finite.
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let b = Self { x, y, w, h };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) {
            return Err(Error::Validation(format!("non-finite box {self:?}")));
        }
        if self.w <= 0.0 || self.h <= 0.0 {
            return Err(Error::Validation(format!(
                "box width and height must be positive, got w={} h={}",
                self.w, self.h
            )));
        }
        Ok(())
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self {
            x: cx - w / 2.0,
            y: cy - h / 2.0,
            w,
            h,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let iw = self.right().min(other.right()) - self.x.max(other.x);
        let ih = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if iw <= 0.0 || ih <= 0.0 {
            0.0
        } else {
            iw * ih
        }
    }

    pub fn intersects(&self, other: &BoundingBox) -> bool {
        self.intersection_area(other) > 0.0
    }

    /// Clip to `[0, width] x [0, height]`. Returns `None` when nothing of the
    /// box remains inside.
    pub fn clip(&self, width: f64, height: f64) -> Option<BoundingBox> {
        let x0 = self.x.max(0.0);
        let y0 = self.y.max(0.0);
        let x1 = self.right().min(width);
        let y1 = self.bottom().min(height);
        if x1 <= x0 || y1 <= y0 {
            None
        } else {
            Some(BoundingBox {
                x: x0,
                y: y0,
                w: x1 - x0,
                h: y1 - y0,
            })
        }
    }
}

/// Euclidean distance between the box centers, in pixels.
pub fn centroid_distance(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    (ax - bx).hypot(ay - by)
}

/// Intersection over union, in `[0, 1]`.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_id: usize,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub class_label: u32,
}

impl Detection {
    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::Validation(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub frame_id: usize,
    pub object_id: u64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    #[test]
    fn centroid_distance_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(centroid_distance(&a, &a), 0.0);
        assert_eq!(centroid_distance(&a, &bx(3.0, 4.0, 10.0, 10.0)), 5.0);
    }

    #[test]
    fn iou_examples() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bx(20.0, 20.0, 5.0, 5.0)), 0.0);
        // touching edges do not overlap
        assert_eq!(iou(&a, &bx(10.0, 0.0, 10.0, 10.0)), 0.0);
        let third = iou(&a, &bx(5.0, 0.0, 10.0, 10.0));
        assert!((third - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn iou_grows_as_translated_copy_slides_back() {
        let a = bx(0.0, 0.0, 20.0, 10.0);
        let mut last = 0.0;
        for shift in (0..=20).rev() {
            let v = iou(&a, &bx(shift as f64, 0.0, 20.0, 10.0));
            assert!(v >= last);
            last = v;
        }
        assert_eq!(last, 1.0);
    }

    #[test]
    fn rejects_degenerate_boxes() {
        assert!(BoundingBox::new(0.0, 0.0, 0.0, 5.0).is_err());
        assert!(BoundingBox::new(0.0, 0.0, 5.0, -1.0).is_err());
        assert!(BoundingBox::new(f64::NAN, 0.0, 5.0, 5.0).is_err());
    }

    #[test]
    fn clip_drops_outside_boxes() {
        assert_eq!(bx(-20.0, 0.0, 10.0, 10.0).clip(100.0, 100.0), None);
        let c = bx(-5.0, 95.0, 10.0, 10.0).clip(100.0, 100.0).unwrap();
        assert_eq!(c, bx(0.0, 95.0, 5.0, 5.0));
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (-100.0..100.0f64, -100.0..100.0f64, 0.5..80.0f64, 0.5..80.0f64)
            .prop_map(|(x, y, w, h)| BoundingBox { x, y, w, h })
    }

    proptest! {
        #[test]
        fn centroid_distance_is_a_metric(a in arb_box(), b in arb_box(), c in arb_box()) {
            let ab = centroid_distance(&a, &b);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, centroid_distance(&b, &a));
            prop_assert!(centroid_distance(&a, &c) <= ab + centroid_distance(&b, &c) + 1e-9);
        }

        #[test]
        fn iou_is_bounded(a in arb_box(), b in arb_box()) {
            let v = iou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
            prop_assert_eq!(v, iou(&b, &a));
        }
    }
}
