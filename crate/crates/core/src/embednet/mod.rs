//! Appearance descriptor: a small network mapping patches to unit-length
//! embeddings, trained with a triplet hinge loss.

mod checkpoint;
mod loss;
mod net;
mod train;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_weights, load_weights_for, save_weights};
pub use loss::{cosine_distance, sq_euclidean, triplet_loss};
pub use net::{backward, forward, forward_trace, init_weights, loss_and_gradient, numerical_gradient, Model, Trace};
pub use train::{train, train_from, Optimizer, TrainConfig, TrainLogRecord, TrainingLog};

pub const CONV1_KERNEL: usize = 5;
pub const CONV2_KERNEL: usize = 3;
pub const CONV_STRIDE: usize = 2;

/// Norms below this get the same constant added before dividing.
pub const NORM_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Architecture {
    /// flatten -> dense(H) -> ReLU -> dense(E)
    FcOnly,
    /// conv5x5/2 -> ReLU -> conv3x3/2 -> ReLU -> flatten -> dense(E)
    Conv,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub architecture: Architecture,
    pub patch_resolution: usize,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    /// Hidden width for [`Architecture::FcOnly`]; ignored otherwise.
    pub hidden_units: usize,
    pub embedding_dim: usize,
    pub margin: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl NetConfig {
    /// Small convolutional configuration that trains in seconds on a CPU.
    pub fn desk() -> Self {
        Self {
            architecture: Architecture::Conv,
            patch_resolution: 24,
            conv1_channels: 8,
            conv2_channels: 16,
            hidden_units: 64,
            embedding_dim: 32,
            margin: 1.0,
        }
    }

    /// Channel depths and embedding width of the full-size network.
    pub fn full_scale() -> Self {
        Self {
            conv1_channels: 128,
            conv2_channels: 256,
            embedding_dim: 512,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim < 2 {
            return Err(Error::Validation("embedding_dim must be at least 2".into()));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::Validation(format!("margin must be positive, got {}", self.margin)));
        }
        if self.patch_resolution < 2 {
            return Err(Error::Validation("patch_resolution must be at least 2".into()));
        }
        match self.architecture {
            Architecture::FcOnly if self.hidden_units == 0 => {
                Err(Error::Validation("hidden_units must be positive".into()))
            }
            Architecture::Conv if self.conv1_channels == 0 || self.conv2_channels == 0 => {
                Err(Error::Validation("convolution channel counts must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }
}

/// Output side of a stride-2 convolution with TF-style "same" padding.
pub(crate) fn conv_out_size(input: usize) -> usize {
    input.div_ceil(CONV_STRIDE)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: &'static str,
    pub offset: usize,
    pub len: usize,
}

/// Where each layer's parameters live inside the flat weight vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub segments: Vec<Segment>,
}

impl Layout {
    fn new(cfg: &NetConfig) -> Self {
        let p = cfg.patch_resolution;
        let sizes: Vec<(&'static str, usize)> = match cfg.architecture {
            Architecture::FcOnly => vec![
                ("fc1.weight", cfg.hidden_units * p * p),
                ("fc1.bias", cfg.hidden_units),
                ("fc2.weight", cfg.embedding_dim * cfg.hidden_units),
                ("fc2.bias", cfg.embedding_dim),
            ],
            Architecture::Conv => {
                let s2 = conv_out_size(conv_out_size(p));
                vec![
                    ("conv1.weight", cfg.conv1_channels * CONV1_KERNEL * CONV1_KERNEL),
                    ("conv1.bias", cfg.conv1_channels),
                    (
                        "conv2.weight",
                        cfg.conv2_channels * cfg.conv1_channels * CONV2_KERNEL * CONV2_KERNEL,
                    ),
                    ("conv2.bias", cfg.conv2_channels),
                    ("fc.weight", cfg.embedding_dim * cfg.conv2_channels * s2 * s2),
                    ("fc.bias", cfg.embedding_dim),
                ]
            }
        };
        let mut offset = 0;
        let segments = sizes
            .into_iter()
            .map(|(name, len)| {
                let s = Segment { name, offset, len };
                offset += len;
                s
            })
            .collect();
        Self { segments }
    }

    pub fn total(&self) -> usize {
        self.segments.last().map_or(0, |s| s.offset + s.len)
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }
}

/// Flat parameter vector shared by all three branches of the triplet net.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    data: Vec<f64>,
}

impl Weights {
    pub fn new(cfg: &NetConfig, data: Vec<f64>) -> Result<Self> {
        let expected = cfg.layout().total();
        if data.len() != expected {
            return Err(Error::ConfigMismatch(format!(
                "weight vector has {} entries, config needs {expected}",
                data.len()
            )));
        }
        Ok(Self { data })
    }

    pub fn zeros(cfg: &NetConfig) -> Self {
        Self {
            data: vec![0.0; cfg.layout().total()],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { layer: "weights" })
        }
    }
}

/// Unit-length appearance embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVec(Vec<f64>);

impl EmbeddingVec {
    /// Normalizes `v` to unit length (zero vectors are rejected).
    pub fn normalized(v: Vec<f64>) -> Result<Self> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Validation("cannot normalize a zero or non-finite vector".into()));
        }
        Ok(Self(v.into_iter().map(|x| x / n).collect()))
    }

    pub(crate) fn from_raw(v: Vec<f64>) -> Self {
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVec) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_sizes() {
        let cfg = NetConfig::desk();
        // 24 -> 12 -> 6 with same padding
        let l = cfg.layout();
        assert_eq!(l.segment("fc.weight").unwrap().len, 32 * 16 * 6 * 6);
        assert_eq!(l.total(), 8 * 25 + 8 + 16 * 8 * 9 + 16 + 32 * 576 + 32);
        let fc = NetConfig {
            architecture: Architecture::FcOnly,
            patch_resolution: 6,
            hidden_units: 8,
            embedding_dim: 4,
            ..NetConfig::desk()
        };
        assert_eq!(fc.layout().total(), 36 * 8 + 8 + 8 * 4 + 4);
    }

    #[test]
    fn config_validation() {
        assert!(NetConfig { embedding_dim: 1, ..NetConfig::desk() }.validate().is_err());
        assert!(NetConfig { margin: 0.0, ..NetConfig::desk() }.validate().is_err());
        assert!(NetConfig::full_scale().validate().is_ok());
        assert!(Weights::new(&NetConfig::desk(), vec![0.0; 3]).is_err());
    }
}
