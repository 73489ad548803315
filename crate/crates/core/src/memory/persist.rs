//! Line-delimited bank file: a header record, then one stored sample per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{compress_caption, MemoryBank, MemoryError, StoredSample, TextEncoder};

pub const BANK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadMode {
    /// Reject files written with a different encoder.
    #[default]
    Strict,
    /// Recompute embeddings with the configured encoder.
    Reembed,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    encoder_id: String,
    dim: usize,
}

pub fn save_bank(bank: &MemoryBank, path: &Path) -> Result<(), MemoryError> {
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        let header = Header { format_version: BANK_FORMAT_VERSION, encoder_id: bank.encoder_id().to_string(), dim: bank.dim() };
        serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
        for e in bank.entries() {
            serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_bank(path: &Path, encoder: Arc<dyn TextEncoder>, mode: LoadMode) -> Result<MemoryBank, MemoryError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, first) = lines.next().ok_or(MemoryError::Format { line: 1, message: "missing header".into() })?;
    let header: Header =
        serde_json::from_str(&first?).map_err(|e| MemoryError::Format { line: 1, message: e.to_string() })?;
    if header.format_version != BANK_FORMAT_VERSION {
        return Err(MemoryError::Version { found: header.format_version, expected: BANK_FORMAT_VERSION });
    }
    let matches = header.encoder_id == encoder.id() && header.dim == encoder.dim();
    if !matches && mode == LoadMode::Strict {
        return Err(MemoryError::EncoderMismatch { file: header.encoder_id, configured: encoder.id().to_string() });
    }
    let mut entries = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut e: StoredSample =
            serde_json::from_str(&line).map_err(|err| MemoryError::Format { line: i + 1, message: err.to_string() })?;
        if matches {
            if e.embedding.len() != header.dim {
                return Err(MemoryError::Format {
                    line: i + 1,
                    message: format!("embedding has {} components, header says {}", e.embedding.len(), header.dim),
                });
            }
        } else {
            e.embedding = encoder.embed(&compress_caption(&e.sample.description))?;
        }
        e.sample.validate().map_err(|err| MemoryError::Format { line: i + 1, message: err.to_string() })?;
        entries.push(e);
    }
    Ok(MemoryBank::from_parts(encoder, entries, Some(super::DEFAULT_DEDUP_THRESHOLD)))
}
