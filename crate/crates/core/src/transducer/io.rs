//! Trained-model persistence: the `mitd1` file format.
//!
//! A model file is a UTF-8 text header followed by a raw binary payload.
//! The header carries the magic line `mitd1`, the eight hyperparameter
//! fields, the vocabulary rows, and a shape manifest; the line `data` ends
//! it. The payload is the concatenation of every tensor in manifest order as
//! little-endian IEEE-754 doubles, so a save → load → save round trip is
//! bit-identical.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::corpus::{CorpusError, Vocabulary};

use super::{Hyperparameters, ModelParameters};

/// Magic line identifying the format version.
pub const MAGIC: &str = "mitd1";

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a {MAGIC} model file (magic line {found:?})")]
    Magic { found: String },
    #[error("malformed model header: {0}")]
    Header(String),
    #[error("truncated model file: expected {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("shape manifest mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter data: {0}")]
    Invalid(String),
    #[error(transparent)]
    Vocab(#[from] CorpusError),
}

/// Serialize a model to `path`.
pub fn save_model(
    params: &ModelParameters,
    hyper: &Hyperparameters,
    vocab: &Vocabulary,
    path: &Path,
) -> Result<(), ModelIoError> {
    let dims = params.dims();
    if dims.n != vocab.len() || dims.e != hyper.embed_dim || dims.h != hyper.hidden_dim {
        return Err(ModelIoError::ShapeMismatch(format!(
            "parameters ({} x {} x {}) disagree with vocabulary ({}) or hyperparameters ({} x {})",
            dims.n,
            dims.e,
            dims.h,
            vocab.len(),
            hyper.embed_dim,
            hyper.hidden_dim,
        )));
    }
    let mut header = String::new();
    header.push_str(MAGIC);
    header.push('\n');
    header.push_str(&format!("embed_dim {}\n", hyper.embed_dim));
    header.push_str(&format!("hidden_dim {}\n", hyper.hidden_dim));
    header.push_str(&format!("learning_rate {}\n", hyper.learning_rate));
    header.push_str(&format!("batch_size {}\n", hyper.batch_size));
    header.push_str(&format!("max_epochs {}\n", hyper.max_epochs));
    header.push_str(&format!("patience {}\n", hyper.patience));
    header.push_str(&format!("grad_clip_norm {}\n", hyper.grad_clip_norm));
    header.push_str(&format!("seed {}\n", hyper.seed));
    header.push_str(&format!("vocab {}\n", vocab.len()));
    for id in 0..vocab.len() as u32 {
        header.push_str(&format!(
            "{}\t{}\t{}\n",
            id,
            vocab.kind(id).unwrap().as_str(),
            vocab.spelling(id).unwrap()
        ));
    }
    let manifest = params.manifest();
    header.push_str(&format!("tensors {}\n", manifest.len()));
    for (name, rows, cols) in &manifest {
        header.push_str(&format!("{} {} {}\n", name, rows, cols));
    }
    header.push_str("data\n");

    let mut bytes = header.into_bytes();
    params.for_each(|t| {
        for &w in t {
            bytes.extend_from_slice(&w.to_le_bytes());
        }
    });
    fs::write(path, bytes)?;
    Ok(())
}

/// Load a model saved by [`save_model`], validating the magic line, header
/// structure, shape manifest, payload size, and value finiteness.
pub fn load_model(
    path: &Path,
) -> Result<(ModelParameters, Hyperparameters, Vocabulary), ModelIoError> {
    let bytes = fs::read(path)?;
    // The header is everything up to the first line that is exactly `data`.
    // Vocabulary and tensor rows always contain a tab or space, so they can
    // never collide with the marker.
    let marker: &[u8] = b"data\n";
    let data_start = find_marker_line(&bytes, marker)
        .ok_or_else(|| ModelIoError::Header("missing `data` marker line".into()))?;
    let header = std::str::from_utf8(&bytes[..data_start])
        .map_err(|e| ModelIoError::Header(format!("non-UTF-8 header: {}", e)))?;
    let payload = &bytes[data_start + marker.len()..];

    let mut lines = header.lines();
    let magic = lines.next().unwrap_or_default();
    if magic != MAGIC {
        return Err(ModelIoError::Magic {
            found: magic.to_string(),
        });
    }

    fn field<'a>(lines: &mut std::str::Lines<'a>, key: &str) -> Result<&'a str, ModelIoError> {
        let line = lines
            .next()
            .ok_or_else(|| ModelIoError::Header(format!("missing field {}", key)))?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' '))
            .ok_or_else(|| {
                ModelIoError::Header(format!("expected field {}, found {:?}", key, line))
            })
    }
    fn parse<T: std::str::FromStr>(value: &str, key: &str) -> Result<T, ModelIoError> {
        value
            .parse()
            .map_err(|_| ModelIoError::Header(format!("bad value for {}: {:?}", key, value)))
    }

    let hyper = Hyperparameters {
        embed_dim: parse(field(&mut lines, "embed_dim")?, "embed_dim")?,
        hidden_dim: parse(field(&mut lines, "hidden_dim")?, "hidden_dim")?,
        learning_rate: parse(field(&mut lines, "learning_rate")?, "learning_rate")?,
        batch_size: parse(field(&mut lines, "batch_size")?, "batch_size")?,
        max_epochs: parse(field(&mut lines, "max_epochs")?, "max_epochs")?,
        patience: parse(field(&mut lines, "patience")?, "patience")?,
        grad_clip_norm: parse(field(&mut lines, "grad_clip_norm")?, "grad_clip_norm")?,
        seed: parse(field(&mut lines, "seed")?, "seed")?,
    };

    let vocab_len: usize = parse(field(&mut lines, "vocab")?, "vocab")?;
    let mut vocab_text = String::from("vocab v1\n");
    for _ in 0..vocab_len {
        let line = lines
            .next()
            .ok_or_else(|| ModelIoError::Header("vocabulary rows truncated".into()))?;
        vocab_text.push_str(line);
        vocab_text.push('\n');
    }
    let vocab = Vocabulary::from_text(&vocab_text)?;

    let tensor_count: usize = parse(field(&mut lines, "tensors")?, "tensors")?;
    let mut manifest = Vec::with_capacity(tensor_count);
    for _ in 0..tensor_count {
        let line = lines
            .next()
            .ok_or_else(|| ModelIoError::Header("tensor manifest truncated".into()))?;
        let mut parts = line.split(' ');
        let name = parts
            .next()
            .ok_or_else(|| ModelIoError::Header("empty manifest row".into()))?;
        let rows: usize = parse(parts.next().unwrap_or(""), "tensor rows")?;
        let cols: usize = parse(parts.next().unwrap_or(""), "tensor cols")?;
        manifest.push((name.to_string(), rows, cols));
    }
    if lines.next().is_some() {
        return Err(ModelIoError::Header(
            "unexpected lines before `data`".into(),
        ));
    }

    // The manifest must match the canonical layout for these shapes exactly.
    let mut params = ModelParameters::new_zeros(vocab.len(), hyper.embed_dim, hyper.hidden_dim);
    let expected = params.manifest();
    if manifest.len() != expected.len() {
        return Err(ModelIoError::ShapeMismatch(format!(
            "{} tensors listed, expected {}",
            manifest.len(),
            expected.len()
        )));
    }
    for ((name, rows, cols), (e_name, e_rows, e_cols)) in manifest.iter().zip(&expected) {
        if name != e_name || rows != e_rows || cols != e_cols {
            return Err(ModelIoError::ShapeMismatch(format!(
                "tensor {} has shape {}x{}, expected {} as {}x{}",
                name, rows, cols, e_name, e_rows, e_cols
            )));
        }
    }

    let total: usize = expected.iter().map(|(_, r, c)| r * c).sum();
    if payload.len() != total * 8 {
        return Err(ModelIoError::Truncated {
            expected: total * 8,
            found: payload.len(),
        });
    }
    let mut offset = 0;
    let mut bad_value = false;
    params.for_each_mut(|t| {
        for w in t.iter_mut() {
            let mut buf = [0u8; 8];
            buf.copy_from_slice(&payload[offset..offset + 8]);
            *w = f64::from_le_bytes(buf);
            if !w.is_finite() {
                bad_value = true;
            }
            offset += 8;
        }
    });
    if bad_value {
        return Err(ModelIoError::Invalid(
            "non-finite parameter value in payload".into(),
        ));
    }
    Ok((params, hyper, vocab))
}

/// Byte offset of the first line equal to `marker` (which includes its
/// trailing newline), or None.
fn find_marker_line(bytes: &[u8], marker: &[u8]) -> Option<usize> {
    let mut line_start = 0;
    while line_start + marker.len() <= bytes.len() {
        if &bytes[line_start..line_start + marker.len()] == marker {
            return Some(line_start);
        }
        let nl = bytes[line_start..].iter().position(|&b| b == b'\n')?;
        line_start += nl + 1;
    }
    None
}
