//! On-disk trace directory: `meta.json`, `tokens.jsonl` and an optional
//! headerless `hidden.f32` (binary32 little-endian, row-major).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{HiddenStates, TokenEvent, Trace, TraceMeta};
use crate::error::{Error, Result};

pub const META_FILE: &str = "meta.json";
pub const TOKENS_FILE: &str = "tokens.jsonl";
pub const HIDDEN_FILE: &str = "hidden.f32";

pub fn parse_trace(dir: impl AsRef<Path>) -> Result<Trace> {
    let dir = dir.as_ref();

    let meta_path = dir.join(META_FILE);
    let meta_bytes = read_required(&meta_path)?;
    let meta: TraceMeta = serde_json::from_slice(&meta_bytes)
        .map_err(|e| Error::schema(META_FILE, e.to_string()))?;

    let tokens_path = dir.join(TOKENS_FILE);
    let file = fs::File::open(&tokens_path).map_err(|e| missing_or_io(&tokens_path, e))?;
    let mut tokens = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&tokens_path, e))?;
        let location = format!("{TOKENS_FILE}:{}", n + 1);
        if line.trim().is_empty() {
            return Err(Error::schema(location, "blank line"));
        }
        let tok: TokenEvent =
            serde_json::from_str(&line).map_err(|e| Error::schema(location, e.to_string()))?;
        tokens.push(tok);
    }

    let hidden_path = dir.join(HIDDEN_FILE);
    let hidden = match fs::read(&hidden_path) {
        Ok(bytes) => {
            if meta.hidden_dim == 0 {
                return Err(Error::schema(
                    META_FILE,
                    "hidden_dim is 0 but hidden.f32 is present",
                ));
            }
            Some(decode_hidden(&bytes, meta.hidden_dim, tokens.len())?)
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            if meta.hidden_dim != 0 {
                return Err(Error::MissingFile(hidden_path));
            }
            None
        }
        Err(e) => return Err(Error::io(hidden_path, e)),
    };

    Trace::new(meta, tokens, hidden)
}

fn decode_hidden(bytes: &[u8], dim: usize, num_tokens: usize) -> Result<HiddenStates> {
    let row_bytes = dim * 4;
    if !bytes.len().is_multiple_of(row_bytes) {
        return Err(Error::DimensionMismatch(format!(
            "hidden.f32 holds {} bytes, not a whole number of {dim}-float rows",
            bytes.len()
        )));
    }
    let rows = bytes.len() / row_bytes;
    if rows != num_tokens {
        return Err(Error::DimensionMismatch(format!(
            "hidden.f32 has {rows} rows for {num_tokens} tokens"
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    HiddenStates::new(dim, data)
}

pub fn write_trace(trace: &Trace, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let meta_path = dir.join(META_FILE);
    let mut meta = serde_json::to_vec_pretty(&trace.meta).expect("meta serializes");
    meta.push(b'\n');
    fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))?;

    let tokens_path = dir.join(TOKENS_FILE);
    let file = fs::File::create(&tokens_path).map_err(|e| Error::io(&tokens_path, e))?;
    let mut out = BufWriter::new(file);
    for tok in &trace.tokens {
        serde_json::to_writer(&mut out, tok).expect("token serializes");
        out.write_all(b"\n").map_err(|e| Error::io(&tokens_path, e))?;
    }
    out.flush().map_err(|e| Error::io(&tokens_path, e))?;

    let hidden_path = dir.join(HIDDEN_FILE);
    match &trace.hidden {
        Some(h) => {
            let mut bytes = Vec::with_capacity(h.as_slice().len() * 4);
            for v in h.as_slice() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            fs::write(&hidden_path, bytes).map_err(|e| Error::io(&hidden_path, e))?;
        }
        None => match fs::remove_file(&hidden_path) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(Error::io(hidden_path, e)),
        },
    }
    Ok(())
}

fn read_required(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| missing_or_io(path, e))
}

fn missing_or_io(path: &Path, e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::NotFound {
        Error::MissingFile(path.to_path_buf())
    } else {
        Error::io(path, e)
    }
}
