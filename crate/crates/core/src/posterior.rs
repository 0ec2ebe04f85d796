//! Posteriorgrams and frame label sequences.
//!
//! A posteriorgram is the T x d matrix of per-frame posterior distributions
//! one acoustic model assigns to one utterance. Rows must be probability
//! distributions; values are stored in probability space (log space appears
//! only inside the KL computation) as 32-bit floats.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use crate::inventory::ClassInventory;

/// Absolute tolerance on a row sum. 32-bit storage of softmax outputs cannot
/// be exactly normalized; this admits legitimate float error and rejects
/// real corruption.
pub const ROW_SUM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum PosteriorError {
    #[error("dimension mismatch: expected {expected} classes, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("row {row} is not normalized: sum = {sum}")]
    RowNotNormalized { row: usize, sum: f64 },
    #[error("row {row}, class {col} holds a negative or non-finite entry: {value}")]
    NegativeEntry { row: usize, col: usize, value: f32 },
    #[error("posteriorgram has no frames")]
    Empty,
    #[error("label {label} at frame {index} is outside the inventory of size {size}")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        size: usize,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("failed to parse label file: {0}")]
    Parse(String),
}

/// Per-frame posterior distributions of one utterance under one model.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriorgram {
    pub utterance_id: String,
    /// Language tag of the inventory the columns refer to.
    pub lang: String,
    /// T x d, row-major; every row a probability distribution.
    pub frames: Array2<f32>,
}

impl Posteriorgram {
    /// Builds a posteriorgram, checking the row invariants.
    pub fn new(
        utterance_id: impl Into<String>,
        lang: impl Into<String>,
        frames: Array2<f32>,
    ) -> Result<Self, PosteriorError> {
        let pg = Self {
            utterance_id: utterance_id.into(),
            lang: lang.into(),
            frames,
        };
        pg.validate_rows()?;
        Ok(pg)
    }

    /// Frame count T.
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    /// Class count d.
    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    /// Checks T >= 1, entry range and row normalization.
    pub fn validate_rows(&self) -> Result<(), PosteriorError> {
        if self.n_frames() == 0 {
            return Err(PosteriorError::Empty);
        }
        for (row, r) in self.frames.rows().into_iter().enumerate() {
            let mut sum = 0.0f64;
            for (col, &v) in r.iter().enumerate() {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(PosteriorError::NegativeEntry {
                        row,
                        col,
                        value: v,
                    });
                }
                sum += f64::from(v);
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(PosteriorError::RowNotNormalized { row, sum });
            }
        }
        Ok(())
    }

    /// Per-frame argmax classes (ties broken by lowest index).
    pub fn argmax_classes(&self) -> Vec<usize> {
        self.frames
            .rows()
            .into_iter()
            .map(|r| crate::metrics::argmax(r.iter().map(|&v| f64::from(v))).unwrap_or(0))
            .collect()
    }
}

/// Full validation of a posteriorgram against a class inventory: row
/// invariants plus column count. Reports the first offending row.
pub fn validate_posteriorgram(
    pg: &Posteriorgram,
    inv: &ClassInventory,
) -> Result<(), PosteriorError> {
    if pg.dim() != inv.size() {
        return Err(PosteriorError::DimensionMismatch {
            expected: inv.size(),
            found: pg.dim(),
        });
    }
    pg.validate_rows()
}

/// True iff two posteriorgrams describe the same utterance frame-for-frame:
/// equal frame counts and equal utterance ids. Source and target models score
/// the same signal through one shared frontend, so no resampling is done.
pub fn frame_align_check(a: &Posteriorgram, b: &Posteriorgram) -> bool {
    a.n_frames() == b.n_frames() && a.utterance_id == b.utterance_id
}

/// Hard per-frame reference classes for one utterance, indexing a named
/// inventory (argmax of target-model posteriors, or forced-alignment output).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSequence {
    pub utterance_id: String,
    pub labels: Vec<usize>,
}

impl LabelSequence {
    /// Checks every label lies in `[0, inventory_size)`.
    pub fn validate_against(&self, inventory_size: usize) -> Result<(), PosteriorError> {
        for (index, &label) in self.labels.iter().enumerate() {
            if label >= inventory_size {
                return Err(PosteriorError::LabelOutOfRange {
                    index,
                    label,
                    size: inventory_size,
                });
            }
        }
        Ok(())
    }

    /// One class index per line.
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        for label in &self.labels {
            writeln!(w, "{label}")?;
        }
        Ok(())
    }

    pub fn read_from(
        utterance_id: impl Into<String>,
        r: impl BufRead,
    ) -> Result<Self, PosteriorError> {
        let mut labels = Vec::new();
        for line in r.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            labels.push(
                t.parse::<usize>()
                    .map_err(|e| PosteriorError::Parse(format!("bad label {t:?}: {e}")))?,
            );
        }
        Ok(Self {
            utterance_id: utterance_id.into(),
            labels,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PosteriorError> {
        let mut f = File::create(path)?;
        self.write_to(&mut f)?;
        Ok(())
    }

    pub fn load(
        utterance_id: impl Into<String>,
        path: impl AsRef<Path>,
    ) -> Result<Self, PosteriorError> {
        Self::read_from(utterance_id, BufReader::new(File::open(path)?))
    }
}
