//! Model checkpoints: a versioned binary envelope (magic, format version,
//! payload length) around the serialized layer list, parameter buffers, and
//! normalizer state.

use super::{Model, NnError};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"PDLN";
pub const FORMAT_VERSION: u32 = 1;

pub fn save_model(model: &Model, path: &Path) -> Result<(), NnError> {
    let payload = serde_json::to_vec(model).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    let mut f =
        std::fs::File::create(path).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    let mut write = || -> std::io::Result<()> {
        f.write_all(&MAGIC)?;
        f.write_all(&FORMAT_VERSION.to_le_bytes())?;
        f.write_all(&(payload.len() as u64).to_le_bytes())?;
        f.write_all(&payload)?;
        Ok(())
    };
    write().map_err(|e| NnError::Checkpoint(e.to_string()))
}

pub fn load_model(path: &Path) -> Result<Model, NnError> {
    let mut f = std::fs::File::open(path).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    let mut read = || -> std::io::Result<Model> {
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                "bad magic, expected PDLN",
            ));
        }
        let mut v = [0u8; 4];
        f.read_exact(&mut v)?;
        let version = u32::from_le_bytes(v);
        if version != FORMAT_VERSION {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let mut len = [0u8; 8];
        f.read_exact(&mut len)?;
        let mut payload = vec![0u8; u64::from_le_bytes(len) as usize];
        f.read_exact(&mut payload)?;
        serde_json::from_slice(&payload)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    };
    read().map_err(|e| NnError::Checkpoint(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{metrics_mlp, Standardize, Tensor};

    #[test]
    fn round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let mut model = metrics_mlp(5, (6, 6, 3), 1e-6, Standardize::identity(5), 42);
        let x = Tensor::from_vec(&[5], vec![0.1, -0.4, 0.9, 0.0, 2.0]);
        let before = model.forward(&x).unwrap();
        let path = dir.path().join("model.bin");
        save_model(&model, &path).unwrap();
        let mut loaded = load_model(&path).unwrap();
        assert_eq!(loaded.param_count(), model.param_count());
        assert_eq!(loaded.forward(&x).unwrap(), before);
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(load_model(&path).is_err());
    }
}
