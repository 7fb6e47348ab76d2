//! Grayscale images, bilinear ROI extraction and affine patch warps.
//!
//! Pixel `(c, r)` covers the unit square `[c, c+1) x [r, r+1)` and its value
//! sits at the pixel center `(c + 0.5, r + 0.5)`. Anything sampled outside
//! the raster reads as zero.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::BoundingBox;
use crate::{Error, Result};

/// Single-channel image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "image data has {} values, expected {width}x{height}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    pub fn from_luma8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub fn to_luma8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v * 255.0).round() as u8).collect()
    }

    /// Bilinear sample at continuous pixel coordinates with zero padding.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        bilinear(self.width, self.height, |c, r| self.get(c, r) as f64, x, y)
    }
}

/// Random access to the frames of a sequence.
pub trait FrameSource: Sync {
    fn frame_count(&self) -> usize;
    fn frame(&self, index: usize) -> Result<std::borrow::Cow<'_, GrayImage>>;
}

impl FrameSource for [GrayImage] {
    fn frame_count(&self) -> usize {
        self.len()
    }

    fn frame(&self, index: usize) -> Result<std::borrow::Cow<'_, GrayImage>> {
        self.get(index)
            .map(std::borrow::Cow::Borrowed)
            .ok_or_else(|| Error::at_frame(index, Error::Validation("frame image missing".into())))
    }
}

impl FrameSource for Vec<GrayImage> {
    fn frame_count(&self) -> usize {
        self.len()
    }

    fn frame(&self, index: usize) -> Result<std::borrow::Cow<'_, GrayImage>> {
        self.as_slice().frame(index)
    }
}

impl FrameSource for crate::io::SequenceOnDisk {
    fn frame_count(&self) -> usize {
        self.manifest.frame_count
    }

    fn frame(&self, index: usize) -> Result<std::borrow::Cow<'_, GrayImage>> {
        let path = self.image_path(index)?;
        load_image(&path)
            .map(std::borrow::Cow::Owned)
            .map_err(|e| Error::at_frame(index, e))
    }
}

/// Fixed-resolution square crop fed to the embedding network.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    resolution: usize,
    data: Vec<f64>,
}

impl Patch {
    pub fn new(resolution: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != resolution * resolution {
            return Err(Error::Shape(format!(
                "patch has {} values, expected {resolution}x{resolution}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("patch intensity {v} outside [0, 1]")));
        }
        Ok(Self { resolution, data })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.resolution + col]
    }

    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let p = self.resolution;
        bilinear(p, p, |c, r| self.get(c, r), x, y)
    }

    pub fn mean_abs_diff(&self, other: &Patch) -> f64 {
        let n = self.data.len().max(1) as f64;
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / n
    }
}

fn bilinear(width: usize, height: usize, at: impl Fn(usize, usize) -> f64, x: f64, y: f64) -> f64 {
    // shift from continuous coordinates to pixel-center index space
    let fx = x - 0.5;
    let fy = y - 0.5;
    let x0 = fx.floor();
    let y0 = fy.floor();
    let tx = fx - x0;
    let ty = fy - y0;
    let read = |c: f64, r: f64| -> f64 {
        if c < 0.0 || r < 0.0 || c >= width as f64 || r >= height as f64 {
            0.0
        } else {
            at(c as usize, r as usize)
        }
    };
    let mut v = 0.0;
    // skip zero-weight taps so exact grid hits reproduce the pixel value
    for (dr, wy) in [(0.0, 1.0 - ty), (1.0, ty)] {
        if wy == 0.0 {
            continue;
        }
        for (dc, wx) in [(0.0, 1.0 - tx), (1.0, tx)] {
            if wx == 0.0 {
                continue;
            }
            v += wy * wx * read(x0 + dc, y0 + dr);
        }
    }
    v.clamp(0.0, 1.0)
}

/// Load an 8-bit grayscale PGM (P5) or PNG, scaling intensities by 1/255.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let img_err = |message: String| Error::Image {
        path: path.to_path_buf(),
        message,
    };
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(image::ImageFormat::Pnm) | Some(image::ImageFormat::Png) => {}
        other => return Err(img_err(format!("unsupported image format {other:?}; expected PGM or PNG"))),
    }
    let decoded = reader.decode().map_err(|e| img_err(e.to_string()))?;
    match decoded {
        image::DynamicImage::ImageLuma8(buf) => {
            let (w, h) = buf.dimensions();
            GrayImage::from_luma8(w as usize, h as usize, buf.as_raw())
        }
        other => Err(img_err(format!(
            "expected 8-bit grayscale, found {:?}",
            other.color()
        ))),
    }
}

fn luma_buffer(img: &GrayImage) -> image::GrayImage {
    image::GrayImage::from_raw(img.width as u32, img.height as u32, img.to_luma8())
        .expect("buffer length matches dimensions")
}

/// Binary (P5) PGM bytes.
pub fn encode_pgm(img: &GrayImage) -> Result<Vec<u8>> {
    use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
    use image::ImageEncoder;
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            &img.to_luma8(),
            img.width as u32,
            img.height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|e| Error::Validation(format!("pgm encoding failed: {e}")))?;
    Ok(out)
}

pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    luma_buffer(img)
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Validation(format!("png encoding failed: {e}")))?;
    Ok(out.into_inner())
}

pub fn save_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), &encode_pgm(img)?)
}

/// Resample `bbox` onto a `resolution x resolution` grid. Output cell
/// `(i, j)` samples the box-relative point `((j + 0.5) / P, (i + 0.5) / P)`.
pub fn extract_patch(img: &GrayImage, bbox: &BoundingBox, resolution: usize) -> Result<Patch> {
    if resolution < 2 {
        return Err(Error::Validation(format!("patch resolution must be >= 2, got {resolution}")));
    }
    bbox.validate()?;
    let frame = BoundingBox {
        x: 0.0,
        y: 0.0,
        w: img.width as f64,
        h: img.height as f64,
    };
    if !bbox.intersects(&frame) {
        return Err(Error::Validation(format!(
            "box {bbox:?} lies entirely outside the {}x{} image",
            img.width, img.height
        )));
    }
    let p = resolution as f64;
    let mut data = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        let y = bbox.y + (i as f64 + 0.5) / p * bbox.h;
        for j in 0..resolution {
            let x = bbox.x + (j as f64 + 0.5) / p * bbox.w;
            data.push(img.sample(x, y));
        }
    }
    Ok(Patch { resolution, data })
}

/// Shear and rotation applied about the patch center. The forward map is
/// `R(rotation) * [[1, shear_x], [shear_y, 1]]` in (x right, y down) pixel
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AffineParams {
    pub shear_x: f64,
    pub shear_y: f64,
    pub rotation: f64,
}

impl AffineParams {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn rotation(theta: f64) -> Self {
        Self {
            rotation: theta,
            ..Self::default()
        }
    }

    pub fn is_identity(&self) -> bool {
        self.shear_x == 0.0 && self.shear_y == 0.0 && self.rotation == 0.0
    }

    pub fn check_bounds(&self, max_shear: f64, max_rotation: f64) -> Result<()> {
        if self.shear_x.abs() > max_shear || self.shear_y.abs() > max_shear {
            return Err(Error::Validation(format!("shear exceeds {max_shear}: {self:?}")));
        }
        if self.rotation.abs() > max_rotation {
            return Err(Error::Validation(format!("rotation exceeds {max_rotation}: {self:?}")));
        }
        Ok(())
    }

    fn forward_matrix(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.rotation.sin_cos();
        let (a, b, cc, d) = (1.0, self.shear_x, self.shear_y, 1.0);
        [[c * a - s * cc, c * b - s * d], [s * a + c * cc, s * b + c * d]]
    }

    fn inverse_matrix(&self) -> Option<[[f64; 2]; 2]> {
        let [[a, b], [c, d]] = self.forward_matrix();
        let det = a * d - b * c;
        if det.abs() < 1e-12 {
            return None;
        }
        Some([[d / det, -b / det], [-c / det, a / det]])
    }
}

/// Warp a patch by inverse mapping each output cell center into the source
/// and sampling bilinearly. A singular transform yields an all-zero patch.
pub fn apply_affine(patch: &Patch, params: &AffineParams) -> Patch {
    if params.is_identity() {
        return patch.clone();
    }
    let p = patch.resolution;
    let half = p as f64 / 2.0;
    let Some(inv) = params.inverse_matrix() else {
        return Patch {
            resolution: p,
            data: vec![0.0; p * p],
        };
    };
    let mut data = Vec::with_capacity(p * p);
    for i in 0..p {
        let v = i as f64 + 0.5 - half;
        for j in 0..p {
            let u = j as f64 + 0.5 - half;
            let su = inv[0][0] * u + inv[0][1] * v;
            let sv = inv[1][0] * u + inv[1][1] * v;
            data.push(patch.sample(su + half, sv + half));
        }
    }
    Patch { resolution: p, data }
}
