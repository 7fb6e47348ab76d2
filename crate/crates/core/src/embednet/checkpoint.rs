//! Checkpoint layout: 8-byte magic, u32 format version, u32 length of the
//! JSON-encoded config, the config, u64 weight count, then the weights as
//! little-endian f64.

use std::fs;
use std::path::Path;

use super::{NetConfig, Weights};
use crate::io::ByteCursor;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"EMBEDNET";
const VERSION: u32 = 1;

pub fn encode_checkpoint(cfg: &NetConfig, weights: &Weights) -> Result<Vec<u8>> {
    cfg.validate()?;
    if weights.len() != cfg.layout().total() {
        return Err(Error::ConfigMismatch(format!(
            "{} weights for a network needing {}",
            weights.len(),
            cfg.layout().total()
        )));
    }
    let cfg_json = serde_json::to_vec(cfg).expect("config serialization is infallible");
    let mut out = Vec::with_capacity(24 + cfg_json.len() + 8 * weights.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(cfg_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg_json);
    out.extend_from_slice(&(weights.len() as u64).to_le_bytes());
    for w in weights.as_slice() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(NetConfig, Weights)> {
    let mut cur = ByteCursor::new(bytes);
    if cur.take(8)? != MAGIC {
        return Err(Error::Corrupt("bad magic, not an embedding checkpoint".into()));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Corrupt(format!("unsupported checkpoint version {version}")));
    }
    let cfg_len = cur.u32()? as usize;
    let cfg: NetConfig = serde_json::from_slice(cur.take(cfg_len)?)
        .map_err(|e| Error::Corrupt(format!("config block: {e}")))?;
    cfg.validate().map_err(|e| Error::Corrupt(e.to_string()))?;
    let n = cur.u64()? as usize;
    if n != cfg.layout().total() {
        return Err(Error::Corrupt(format!(
            "checkpoint holds {n} weights but its config needs {}",
            cfg.layout().total()
        )));
    }
    let data = (0..n).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
    if !cur.is_empty() {
        return Err(Error::Corrupt("trailing bytes after weights".into()));
    }
    Ok((cfg, Weights::new(&cfg, data)?))
}

pub fn save_weights(path: impl AsRef<Path>, cfg: &NetConfig, weights: &Weights) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), &encode_checkpoint(cfg, weights)?)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<(NetConfig, Weights)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Load a checkpoint and insist that it was trained with `requested`.
pub fn load_weights_for(path: impl AsRef<Path>, requested: &NetConfig) -> Result<Weights> {
    let (cfg, weights) = load_weights(path)?;
    if cfg != *requested {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint was trained as {:?} (P={}, E={}), requested {:?} (P={}, E={})",
            cfg.architecture,
            cfg.patch_resolution,
            cfg.embedding_dim,
            requested.architecture,
            requested.patch_resolution,
            requested.embedding_dim
        )));
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embednet::{init_weights, Architecture};

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = NetConfig::desk();
        let w = init_weights(&cfg, 3).unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        save_weights(&a, &cfg, &w).unwrap();
        let (cfg2, w2) = load_weights(&a).unwrap();
        assert_eq!((cfg2, &w2), (cfg, &w));
        save_weights(&b, &cfg2, &w2).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn truncated_and_foreign_files_are_corrupt() {
        let cfg = NetConfig::desk();
        let bytes = encode_checkpoint(&cfg, &init_weights(&cfg, 0).unwrap()).unwrap();
        assert!(matches!(decode_checkpoint(&bytes[..bytes.len() - 1]), Err(Error::Corrupt(_))));
        assert!(matches!(decode_checkpoint(&bytes[..10]), Err(Error::Corrupt(_))));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_checkpoint(&bad), Err(Error::Corrupt(_))));
    }

    #[test]
    fn architecture_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let fc = NetConfig {
            architecture: Architecture::FcOnly,
            ..NetConfig::desk()
        };
        let p = dir.path().join("fc.ckpt");
        save_weights(&p, &fc, &init_weights(&fc, 0).unwrap()).unwrap();
        assert!(matches!(
            load_weights_for(&p, &NetConfig::desk()),
            Err(Error::ConfigMismatch(_))
        ));
        assert!(load_weights_for(&p, &fc).is_ok());
    }
}
