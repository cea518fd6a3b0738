//! On-disk forms of refinement artifacts: JSON Lines record files and the
//! flat binary embedding file.
//!
//! Embedding file layout (all integers little-endian):
//!
//! ```text
//! magic   "IODV"
//! version u32 (1)
//! dim     u32
//! count   u64
//! count x { owner_len u32, owner UTF-8 bytes, dim x f32 }
//! ```

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{EmbeddingRecord, RefineError};

pub const NODES_FILE: &str = "kg_nodes.jsonl";
pub const EDGES_FILE: &str = "kg_edges.jsonl";
pub const FACTS_FILE: &str = "facts.jsonl";
pub const CHUNK_GRAPHS_FILE: &str = "chunk_graphs.jsonl";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";

const MAGIC: &[u8; 4] = b"IODV";
const VERSION: u32 = 1;

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RefineError + '_ {
    move |source| RefineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write records one per line, replacing the file atomically.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), RefineError> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io_err(&tmp))?);
        for r in records {
            serde_json::to_writer(&mut w, r).map_err(|e| io_err(&tmp)(e.into()))?;
            w.write_all(b"\n").map_err(io_err(&tmp))?;
        }
        w.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Append one record as a line.
pub fn append_jsonl<T: Serialize>(path: &Path, record: &T) -> Result<(), RefineError> {
    let mut line = serde_json::to_vec(record).map_err(|e| io_err(path)(e.into()))?;
    line.push(b'\n');
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))?;
    f.write_all(&line).map_err(io_err(path))
}

/// Read every record; a missing file reads as empty.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RefineError> {
    if !path.exists() {
        return Ok(vec![]);
    }
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| RefineError::Corrupt {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_embeddings(path: &Path, dim: usize, records: &[EmbeddingRecord]) -> Result<(), RefineError> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io_err(&tmp))?);
        let mut put = |b: &[u8]| w.write_all(b).map_err(io_err(&tmp));
        put(MAGIC)?;
        put(&VERSION.to_le_bytes())?;
        put(&(dim as u32).to_le_bytes())?;
        put(&(records.len() as u64).to_le_bytes())?;
        for r in records {
            if r.vector.len() != dim {
                return Err(RefineError::DimensionMismatch {
                    owner: r.owner.to_string(),
                    expected: dim,
                    got: r.vector.len(),
                });
            }
            let owner = r.owner.to_string();
            put(&(owner.len() as u32).to_le_bytes())?;
            put(owner.as_bytes())?;
            for x in &r.vector {
                put(&x.to_le_bytes())?;
            }
        }
        w.flush().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Read an embedding file; returns the dimension and the records, each
/// tagged with `embedder_id`.
pub fn read_embeddings(path: &Path, embedder_id: &str) -> Result<(usize, Vec<EmbeddingRecord>), RefineError> {
    let format = |message: &str| RefineError::Format {
        path: path.display().to_string(),
        message: message.to_string(),
    };
    let mut r = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut take = |n: usize| -> Result<Vec<u8>, RefineError> {
        let mut buf = vec![0u8; n];
        r.read_exact(&mut buf).map_err(|_| format("truncated file"))?;
        Ok(buf)
    };
    if take(4)? != MAGIC {
        return Err(format("bad magic"));
    }
    let u32_at = |b: Vec<u8>| u32::from_le_bytes(b.try_into().unwrap());
    let version = u32_at(take(4)?);
    if version != VERSION {
        return Err(format(&format!("unsupported version {version}")));
    }
    let dim = u32_at(take(4)?) as usize;
    let count = u64::from_le_bytes(take(8)?.try_into().unwrap());
    let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
    for _ in 0..count {
        let len = u32_at(take(4)?) as usize;
        let owner = String::from_utf8(take(len)?).map_err(|_| format("owner is not UTF-8"))?;
        let owner = owner.parse().map_err(|_| format(&format!("bad owner ref {owner:?}")))?;
        let raw = take(dim * 4)?;
        let vector = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push(EmbeddingRecord {
            owner,
            vector,
            embedder_id: embedder_id.to_string(),
        });
    }
    Ok((dim, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hetero_index::GraphRef;

    #[test]
    fn embeddings_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(EMBEDDINGS_FILE);
        let recs = vec![
            EmbeddingRecord {
                owner: GraphRef::Fact("00ff".into()),
                vector: vec![0.6, 0.8],
                embedder_id: "m".into(),
            },
            EmbeddingRecord {
                owner: GraphRef::node("Ünïcode name"),
                vector: vec![1.0, 0.0],
                embedder_id: "m".into(),
            },
        ];
        write_embeddings(&path, 2, &recs).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"IODV");
        assert_eq!(u64::from_le_bytes(bytes[12..20].try_into().unwrap()), 2);
        assert_eq!(read_embeddings(&path, "m").unwrap(), (2, recs));
    }

    #[test]
    fn corrupt_line_is_located() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        fs::write(&path, "1\n2\nnope\n").unwrap();
        match read_jsonl::<u32>(&path) {
            Err(RefineError::Corrupt { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
