//! Binary posteriorgram files.
//!
//! Layout: 4-byte magic `PGM1`, little-endian u32 header length, a UTF-8
//! header `utt=<id>;lang=<tag>;T=<frames>;D=<classes>`, then T*D
//! little-endian f32 values in row-major order. Round-trips are bit-exact;
//! readers reject trailing bytes so truncation and concatenation damage are
//! both caught.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use crate::posterior::{Posteriorgram, PosteriorError};

pub const MAGIC: &[u8; 4] = b"PGM1";

/// Caps the header allocation when reading untrusted files.
const MAX_HEADER_LEN: u32 = 1 << 16;

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("bad magic: expected \"PGM1\", found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("trailing data after {expected} payload bytes")]
    TrailingData { expected: usize },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("tag {0:?} may not contain ';'")]
    BadTag(String),
    #[error(transparent)]
    Posterior(#[from] PosteriorError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn check_tag(tag: &str) -> Result<(), PgmError> {
    if tag.contains(';') {
        return Err(PgmError::BadTag(tag.to_string()));
    }
    Ok(())
}

/// Writes one posteriorgram. The rows are not re-validated here; pair with
/// [`Posteriorgram::validate_rows`] when the data comes from outside.
pub fn write_posteriorgram(pg: &Posteriorgram, w: &mut impl Write) -> Result<(), PgmError> {
    check_tag(&pg.utterance_id)?;
    check_tag(&pg.lang)?;
    let header = format!(
        "utt={};lang={};T={};D={}",
        pg.utterance_id,
        pg.lang,
        pg.n_frames(),
        pg.dim()
    );
    let hbytes = header.as_bytes();
    w.write_all(MAGIC)?;
    w.write_all(&(hbytes.len() as u32).to_le_bytes())?;
    w.write_all(hbytes)?;
    for &v in pg.frames.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads one posteriorgram, consuming the reader to its end.
pub fn read_posteriorgram(r: &mut impl Read) -> Result<Posteriorgram, PgmError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| PgmError::Truncated(format!("while reading magic: {e}")))?;
    if &magic != MAGIC {
        return Err(PgmError::BadMagic { found: magic });
    }

    let mut len4 = [0u8; 4];
    r.read_exact(&mut len4)
        .map_err(|e| PgmError::Truncated(format!("while reading header length: {e}")))?;
    let hlen = u32::from_le_bytes(len4);
    if hlen > MAX_HEADER_LEN {
        return Err(PgmError::InvalidHeader(format!(
            "header length {hlen} exceeds limit {MAX_HEADER_LEN}"
        )));
    }

    let mut hbuf = vec![0u8; hlen as usize];
    r.read_exact(&mut hbuf)
        .map_err(|e| PgmError::Truncated(format!("while reading header: {e}")))?;
    let header = String::from_utf8(hbuf)
        .map_err(|e| PgmError::InvalidHeader(format!("header is not UTF-8: {e}")))?;

    let (utt, lang, t, d) = parse_header(&header)?;

    let n_values = t
        .checked_mul(d)
        .ok_or_else(|| PgmError::InvalidHeader(format!("T*D overflows: T={t}, D={d}")))?;
    let n_bytes = n_values * 4;
    let mut payload = vec![0u8; n_bytes];
    r.read_exact(&mut payload)
        .map_err(|e| PgmError::Truncated(format!("payload needs {n_bytes} bytes: {e}")))?;

    let mut extra = [0u8; 1];
    match r.read(&mut extra)? {
        0 => {}
        _ => return Err(PgmError::TrailingData { expected: n_bytes }),
    }

    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let frames = Array2::from_shape_vec((t, d), values)
        .expect("shape matches payload length by construction");

    Ok(Posteriorgram {
        utterance_id: utt,
        lang,
        frames,
    })
}

fn parse_header(header: &str) -> Result<(String, String, usize, usize), PgmError> {
    let mut utt = None;
    let mut lang = None;
    let mut t = None;
    let mut d = None;
    for field in header.split(';') {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| PgmError::InvalidHeader(format!("field {field:?} lacks '='")))?;
        match key {
            "utt" => utt = Some(value.to_string()),
            "lang" => lang = Some(value.to_string()),
            "T" => {
                t = Some(value.parse::<usize>().map_err(|e| {
                    PgmError::InvalidHeader(format!("bad frame count {value:?}: {e}"))
                })?)
            }
            "D" => {
                d = Some(value.parse::<usize>().map_err(|e| {
                    PgmError::InvalidHeader(format!("bad class count {value:?}: {e}"))
                })?)
            }
            other => {
                return Err(PgmError::InvalidHeader(format!("unknown field {other:?}")));
            }
        }
    }
    match (utt, lang, t, d) {
        (Some(u), Some(l), Some(t), Some(d)) => Ok((u, l, t, d)),
        _ => Err(PgmError::InvalidHeader(format!(
            "header {header:?} must set utt, lang, T and D"
        ))),
    }
}

pub fn save_posteriorgram(pg: &Posteriorgram, path: impl AsRef<Path>) -> Result<(), PgmError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_posteriorgram(pg, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_posteriorgram(path: impl AsRef<Path>) -> Result<Posteriorgram, PgmError> {
    read_posteriorgram(&mut BufReader::new(File::open(path)?))
}
