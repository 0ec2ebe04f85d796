//! Convex fusion of posterior distributions.
//!
//! A fused frame is the weighted sum of the target model's posterior row
//! (multilingual mode only) and K mapped source rows, with weights summing
//! to one. Because the combination is convex, the output is a valid
//! distribution without renormalization — and renormalizing would only mask
//! upstream invariant violations, so it is never done.
//!
//! Weights can be assigned manually or derived from how well each source
//! maps into the target space: high mapping accuracy and low mapped entropy
//! both raise a source's share.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::posterior::{frame_align_check, Posteriorgram};

/// Weight-sum slack: weights written as decimal text must still validate.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// Target posteriors participate with weight `target_weight`.
    Multilingual,
    /// Mapped sources only; no target model exists.
    CrossLingual,
}

impl FusionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FusionMode::Multilingual => "multilingual",
            FusionMode::CrossLingual => "cross-lingual",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "multilingual" | "multi" => Some(FusionMode::Multilingual),
            "cross-lingual" | "cross" => Some(FusionMode::CrossLingual),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("invalid weights: {}", .0.join("; "))]
    InvalidWeights(Vec<String>),
    #[error("mode/argument mismatch: {0}")]
    ModeMismatch(String),
    #[error("expected {expected} mapped inputs for {expected} source weights, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("dimension mismatch: expected {expected} classes, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("posteriorgrams {a:?} and {b:?} are not frame-aligned")]
    AlignMismatch { a: String, b: String },
    #[error("similarity table is empty")]
    EmptyTable,
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("target share must lie in [0,1], got {0}")]
    BadTargetShare(f64),
    #[error("all similarity scores are zero; weights are undefined")]
    ZeroScores,
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Fusion weights: the target model's share plus one weight per source,
/// in a fixed source order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub mode: FusionMode,
    pub target_weight: f64,
    /// `(source language tag, weight)`, in the order mapped inputs are
    /// supplied to the fusion operations.
    pub source_weights: Vec<(String, f64)>,
}

impl WeightVector {
    pub fn n_sources(&self) -> usize {
        self.source_weights.len()
    }

    /// Plain text: a mode line, a target line, then one `lang weight` line
    /// per source. Weights print in shortest round-trip decimal form.
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "mode {}", self.mode.as_str())?;
        writeln!(w, "target {}", self.target_weight)?;
        for (lang, weight) in &self.source_weights {
            writeln!(w, "{lang} {weight}")?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, FusionError> {
        let mut mode = None;
        let mut target_weight = None;
        let mut source_weights = Vec::new();
        for line in r.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (key, value) = t
                .split_once(char::is_whitespace)
                .ok_or_else(|| FusionError::Parse(format!("bad line {t:?}")))?;
            let value = value.trim();
            match key {
                "mode" => {
                    mode = Some(FusionMode::parse(value).ok_or_else(|| {
                        FusionError::Parse(format!("unknown mode {value:?}"))
                    })?)
                }
                "target" => target_weight = Some(parse_weight(value)?),
                lang => source_weights.push((lang.to_string(), parse_weight(value)?)),
            }
        }
        let w = WeightVector {
            mode: mode.ok_or_else(|| FusionError::Parse("missing mode line".into()))?,
            target_weight: target_weight
                .ok_or_else(|| FusionError::Parse("missing target line".into()))?,
            source_weights,
        };
        validate_weights(&w)?;
        Ok(w)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FusionError> {
        validate_weights(self)?;
        let mut f = File::create(path)?;
        self.write_to(&mut f)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FusionError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn parse_weight(s: &str) -> Result<f64, FusionError> {
    let v: f64 = s
        .parse()
        .map_err(|e| FusionError::Parse(format!("bad weight {s:?}: {e}")))?;
    if !v.is_finite() {
        return Err(FusionError::Parse(format!("weight {s:?} is not finite")));
    }
    Ok(v)
}

/// Checks every WeightVector invariant, reporting all violations at once.
pub fn validate_weights(w: &WeightVector) -> Result<(), FusionError> {
    let mut problems = Vec::new();
    if w.source_weights.is_empty() {
        problems.push("no source weights (K must be >= 1)".to_string());
    }
    if !(0.0..=1.0).contains(&w.target_weight) {
        problems.push(format!(
            "target weight {} outside [0,1]",
            w.target_weight
        ));
    }
    for (lang, v) in &w.source_weights {
        if !(0.0..=1.0).contains(v) {
            problems.push(format!("weight {v} for {lang} outside [0,1]"));
        }
    }
    let sum: f64 = w.target_weight + w.source_weights.iter().map(|(_, v)| v).sum::<f64>();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        problems.push(format!("weights sum to {sum}, not 1"));
    }
    if w.mode == FusionMode::CrossLingual && w.target_weight != 0.0 {
        problems.push(format!(
            "cross-lingual mode requires target weight exactly 0, got {}",
            w.target_weight
        ));
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(FusionError::InvalidWeights(problems))
    }
}

/// Convex combination of one frame's rows: the target row (multilingual
/// only) and K mapped rows, in the weight vector's source order.
pub fn fuse_frame(
    target_row: Option<&[f64]>,
    mapped_rows: &[&[f64]],
    w: &WeightVector,
) -> Result<Vec<f64>, FusionError> {
    validate_weights(w)?;
    match (w.mode, target_row) {
        (FusionMode::Multilingual, None) => {
            return Err(FusionError::ModeMismatch(
                "multilingual fusion needs a target row".into(),
            ))
        }
        (FusionMode::CrossLingual, Some(_)) => {
            return Err(FusionError::ModeMismatch(
                "cross-lingual fusion takes no target row".into(),
            ))
        }
        _ => {}
    }
    if mapped_rows.len() != w.n_sources() {
        return Err(FusionError::CountMismatch {
            expected: w.n_sources(),
            found: mapped_rows.len(),
        });
    }
    let d = mapped_rows
        .first()
        .map(|r| r.len())
        .or_else(|| target_row.map(<[f64]>::len))
        .expect("K >= 1 checked by validate_weights");
    for row in mapped_rows.iter().copied().chain(target_row) {
        if row.len() != d {
            return Err(FusionError::DimensionMismatch {
                expected: d,
                found: row.len(),
            });
        }
    }

    let mut out = vec![0.0f64; d];
    if let Some(target) = target_row {
        for (o, &v) in out.iter_mut().zip(target) {
            *o += w.target_weight * v;
        }
    }
    for ((_, weight), row) in w.source_weights.iter().zip(mapped_rows) {
        for (o, &v) in out.iter_mut().zip(*row) {
            *o += weight * v;
        }
    }
    Ok(out)
}

/// Frame-wise [`fuse_frame`] over whole aligned posteriorgrams; the
/// utterance id is preserved and the language tag is taken from the target
/// input (or the first mapped input in cross-lingual mode).
pub fn fuse_posteriorgrams(
    target_pg: Option<&Posteriorgram>,
    mapped_pgs: &[&Posteriorgram],
    w: &WeightVector,
) -> Result<Posteriorgram, FusionError> {
    validate_weights(w)?;
    match (w.mode, target_pg) {
        (FusionMode::Multilingual, None) => {
            return Err(FusionError::ModeMismatch(
                "multilingual fusion needs the target posteriorgram".into(),
            ))
        }
        (FusionMode::CrossLingual, Some(_)) => {
            return Err(FusionError::ModeMismatch(
                "cross-lingual fusion takes no target posteriorgram".into(),
            ))
        }
        _ => {}
    }
    if mapped_pgs.len() != w.n_sources() {
        return Err(FusionError::CountMismatch {
            expected: w.n_sources(),
            found: mapped_pgs.len(),
        });
    }

    let first: &Posteriorgram = mapped_pgs
        .first()
        .copied()
        .or(target_pg)
        .expect("K >= 1 checked by validate_weights");
    for pg in mapped_pgs.iter().copied().chain(target_pg) {
        if !frame_align_check(first, pg) {
            return Err(FusionError::AlignMismatch {
                a: first.utterance_id.clone(),
                b: pg.utterance_id.clone(),
            });
        }
        if pg.dim() != first.dim() {
            return Err(FusionError::DimensionMismatch {
                expected: first.dim(),
                found: pg.dim(),
            });
        }
    }

    let (t, d) = (first.n_frames(), first.dim());
    let mut frames = ndarray::Array2::<f32>::zeros((t, d));
    let mut target_buf = vec![0.0f64; d];
    let mut mapped_buf = vec![vec![0.0f64; d]; mapped_pgs.len()];
    for ti in 0..t {
        let target_row = target_pg.map(|pg| {
            for (b, &v) in target_buf.iter_mut().zip(pg.frames.row(ti)) {
                *b = f64::from(v);
            }
            &target_buf[..]
        });
        for (buf, pg) in mapped_buf.iter_mut().zip(mapped_pgs) {
            for (b, &v) in buf.iter_mut().zip(pg.frames.row(ti)) {
                *b = f64::from(v);
            }
        }
        let rows: Vec<&[f64]> = mapped_buf.iter().map(Vec::as_slice).collect();
        let fused = fuse_frame(target_row, &rows, w)?;
        for (c, v) in fused.into_iter().enumerate() {
            frames[(ti, c)] = v as f32;
        }
    }

    Ok(Posteriorgram {
        utterance_id: first.utterance_id.clone(),
        lang: target_pg.unwrap_or(first).lang.clone(),
        frames,
    })
}

/// How well one source maps into the target space: mean entropy of its
/// mapped posteriors (nats) and its mapping top-1 accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEntry {
    pub avg_entropy: f64,
    pub top1_accuracy: f64,
}

/// Per-source mapping quality, keyed by source language tag.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimilarityTable {
    pub entries: BTreeMap<String, SimEntry>,
}

impl SimilarityTable {
    pub fn insert(&mut self, lang: impl Into<String>, entry: SimEntry) {
        self.entries.insert(lang.into(), entry);
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let mut problems = Vec::new();
        for (lang, e) in &self.entries {
            if !e.avg_entropy.is_finite() || e.avg_entropy < 0.0 {
                problems.push(format!("{lang}: entropy {} invalid", e.avg_entropy));
            }
            if !e.top1_accuracy.is_finite() || !(0.0..=1.0).contains(&e.top1_accuracy) {
                problems.push(format!("{lang}: accuracy {} invalid", e.top1_accuracy));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(FusionError::InvalidWeights(problems))
        }
    }

    /// Plain text: one `lang avg_entropy top1_accuracy` line per source.
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        for (lang, e) in &self.entries {
            writeln!(w, "{lang} {} {}", e.avg_entropy, e.top1_accuracy)?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, FusionError> {
        let mut table = SimilarityTable::default();
        for line in r.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = t.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(FusionError::Parse(format!(
                    "expected 'lang entropy accuracy', got {t:?}"
                )));
            }
            let avg_entropy: f64 = parts[1]
                .parse()
                .map_err(|e| FusionError::Parse(format!("bad entropy {:?}: {e}", parts[1])))?;
            let top1_accuracy: f64 = parts[2]
                .parse()
                .map_err(|e| FusionError::Parse(format!("bad accuracy {:?}: {e}", parts[2])))?;
            table.insert(
                parts[0],
                SimEntry {
                    avg_entropy,
                    top1_accuracy,
                },
            );
        }
        table.validate()?;
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FusionError> {
        self.validate()?;
        let mut f = File::create(path)?;
        self.write_to(&mut f)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FusionError> {
        let f = File::open(path)?;
        let mut s = String::new();
        BufReader::new(f).read_to_string(&mut s)?;
        Self::read_from(s.as_bytes())
    }
}

/// Default temperature for [`derive_weights`].
pub const DEFAULT_TEMPERATURE: f64 = 0.25;
/// Default target share in multilingual mode: the target model gets parity
/// with all sources combined.
pub const DEFAULT_TARGET_SHARE: f64 = 0.5;

/// Turns mapping quality into fusion weights: each source scores
/// `top1_accuracy * exp(-avg_entropy / temperature)`, and scores normalize
/// to `1 - target_share` (multilingual, where the target takes
/// `target_share`) or to 1 (cross-lingual). Lower entropy at equal accuracy
/// always means a larger weight; identical entries get identical weights.
pub fn derive_weights(
    sim: &SimilarityTable,
    mode: FusionMode,
    temperature: f64,
    include_target: bool,
    target_share: f64,
) -> Result<WeightVector, FusionError> {
    if sim.entries.is_empty() {
        return Err(FusionError::EmptyTable);
    }
    sim.validate()?;
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(FusionError::NonPositiveTemperature(temperature));
    }
    if !(0.0..=1.0).contains(&target_share) {
        return Err(FusionError::BadTargetShare(target_share));
    }
    match mode {
        FusionMode::Multilingual if !include_target => {
            return Err(FusionError::ModeMismatch(
                "multilingual weight derivation requires the target term".into(),
            ))
        }
        FusionMode::CrossLingual if include_target => {
            return Err(FusionError::ModeMismatch(
                "cross-lingual weight derivation excludes the target term".into(),
            ))
        }
        _ => {}
    }

    let scores: Vec<(String, f64)> = sim
        .entries
        .iter()
        .map(|(lang, e)| {
            (
                lang.clone(),
                e.top1_accuracy * (-e.avg_entropy / temperature).exp(),
            )
        })
        .collect();
    let total: f64 = scores.iter().map(|(_, s)| s).sum();
    if total <= 0.0 {
        return Err(FusionError::ZeroScores);
    }

    let (target_weight, source_mass) = match mode {
        FusionMode::Multilingual => (target_share, 1.0 - target_share),
        FusionMode::CrossLingual => (0.0, 1.0),
    };
    let source_weights = scores
        .into_iter()
        .map(|(lang, s)| (lang, source_mass * s / total))
        .collect();
    let w = WeightVector {
        mode,
        target_weight,
        source_weights,
    };
    validate_weights(&w)?;
    Ok(w)
}
