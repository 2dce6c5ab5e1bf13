//! Saved reference-backend parameters.
//!
//! Layout: the magic line `FSRB1\n`, a little-endian `u64` header length, a
//! JSON header, then every `f64` little-endian: the projection, the dense
//! blocks in header order, and the known feature indices as `u32`.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use fewshot_core::backend::{ReferenceBackend, ReferenceConfig, DENSE_BLOCKS};
use fewshot_core::PatternClass;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const MAGIC: &[u8; 6] = b"FSRB1\n";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: ReferenceConfig,
    patterns: Vec<String>,
    projection_len: usize,
    blocks: Vec<(String, usize)>,
    known_len: usize,
}

pub fn save_reference(
    path: &Path,
    backend: &ReferenceBackend,
    classes: &[PatternClass],
) -> Result<()> {
    let header = Header {
        config: backend.config().clone(),
        patterns: classes.iter().map(|c| c.text.clone()).collect(),
        projection_len: backend.projection().len(),
        blocks: DENSE_BLOCKS
            .iter()
            .zip(backend.dense_blocks())
            .map(|(n, b)| (n.to_string(), b.len()))
            .collect(),
        known_len: backend.known_features().len(),
    };
    let file = fs::File::create(path).map_err(Error::io(path))?;
    let mut out = BufWriter::new(file);
    let json = serde_json::to_vec(&header).map_err(Error::json(path))?;
    let write = |out: &mut BufWriter<fs::File>| -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        for v in backend
            .projection()
            .iter()
            .chain(backend.dense_blocks().iter().flatten())
        {
            out.write_all(&v.to_le_bytes())?;
        }
        for i in backend.known_features() {
            out.write_all(&i.to_le_bytes())?;
        }
        out.flush()
    };
    write(&mut out).map_err(Error::io(path))
}

/// Returns the backend and the class list it was trained on.
pub fn load_reference(path: &Path) -> Result<(ReferenceBackend, Vec<PatternClass>)> {
    let bad = |message: String| Error::Model {
        path: path.to_path_buf(),
        message,
    };
    let file = fs::File::open(path).map_err(Error::io(path))?;
    let mut input = BufReader::new(file);
    let mut magic = [0u8; 6];
    input.read_exact(&mut magic).map_err(Error::io(path))?;
    if &magic != MAGIC {
        return Err(bad("not a saved reference backend".into()));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(Error::io(path))?;
    let len =
        usize::try_from(u64::from_le_bytes(len)).map_err(|_| bad("header too large".into()))?;
    if len > 1 << 24 {
        return Err(bad("header too large".into()));
    }
    let mut json = vec![0u8; len];
    input.read_exact(&mut json).map_err(Error::io(path))?;
    let header: Header = serde_json::from_slice(&json).map_err(Error::json(path))?;

    let mut read_f64s = |n: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; n * 8];
        input
            .read_exact(&mut buf)
            .map_err(|_| bad("file is truncated".into()))?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    };
    let projection = read_f64s(header.projection_len)?;
    let dense = header
        .blocks
        .iter()
        .map(|(_, n)| read_f64s(*n))
        .collect::<Result<Vec<_>>>()?;
    let mut buf = vec![0u8; header.known_len * 4];
    input
        .read_exact(&mut buf)
        .map_err(|_| bad("file is truncated".into()))?;
    let known = buf
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    if input.read(&mut [0u8; 1]).map_err(Error::io(path))? != 0 {
        return Err(bad("trailing data".into()));
    }

    let classes = PatternClass::from_texts(&header.patterns)?;
    let backend =
        ReferenceBackend::from_parameters(header.config, &classes, projection, dense, known)?;
    Ok((backend, classes))
}
