//! Class inventories: the tied-state class set of one acoustic model.
//!
//! An inventory names a language, maps each class index to a phone label and
//! designates one phone as silence. Inventories are stored as plain text:
//!
//! ```text
//! language_id synA
//! size 4
//! silence_phone sil
//! 0 sil
//! 1 aa
//! 2 iy
//! 3 k
//! ```

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum InventoryError {
    #[error("inventory needs at least 2 classes, got {0}")]
    TooSmall(usize),
    #[error("class {0} has an empty or whitespace phone label")]
    BadLabel(usize),
    #[error("silence phone {0:?} does not occur in the class-to-phone map")]
    SilenceMissing(String),
    #[error("failed to parse inventory: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A named language/model class set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassInventory {
    pub language_id: String,
    pub phone_of_class: Vec<String>,
    pub silence_phone: String,
}

impl ClassInventory {
    /// Builds an inventory, checking the size, label and silence invariants.
    pub fn new(
        language_id: impl Into<String>,
        phone_of_class: Vec<String>,
        silence_phone: impl Into<String>,
    ) -> Result<Self, InventoryError> {
        let inv = Self {
            language_id: language_id.into(),
            phone_of_class,
            silence_phone: silence_phone.into(),
        };
        inv.validate()?;
        Ok(inv)
    }

    pub fn size(&self) -> usize {
        self.phone_of_class.len()
    }

    pub fn validate(&self) -> Result<(), InventoryError> {
        if self.phone_of_class.len() < 2 {
            return Err(InventoryError::TooSmall(self.phone_of_class.len()));
        }
        for (idx, label) in self.phone_of_class.iter().enumerate() {
            if label.is_empty() || label.chars().any(char::is_whitespace) {
                return Err(InventoryError::BadLabel(idx));
            }
        }
        if !self.phone_of_class.contains(&self.silence_phone) {
            return Err(InventoryError::SilenceMissing(self.silence_phone.clone()));
        }
        Ok(())
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        writeln!(w, "language_id {}", self.language_id)?;
        writeln!(w, "size {}", self.size())?;
        writeln!(w, "silence_phone {}", self.silence_phone)?;
        for (idx, label) in self.phone_of_class.iter().enumerate() {
            writeln!(w, "{idx} {label}")?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, InventoryError> {
        let mut lines = r.lines();
        let mut header = |key: &str| -> Result<String, InventoryError> {
            let line = lines
                .next()
                .ok_or_else(|| InventoryError::Parse(format!("missing `{key}` line")))??;
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| InventoryError::Parse(format!("malformed line {line:?}")))?;
            if k != key {
                return Err(InventoryError::Parse(format!(
                    "expected `{key}`, found `{k}`"
                )));
            }
            Ok(v.trim().to_string())
        };
        let language_id = header("language_id")?;
        let size: usize = header("size")?
            .parse()
            .map_err(|e| InventoryError::Parse(format!("bad size: {e}")))?;
        let silence_phone = header("silence_phone")?;

        let mut phone_of_class = Vec::with_capacity(size);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (idx, label) = line
                .split_once(' ')
                .ok_or_else(|| InventoryError::Parse(format!("malformed class line {line:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|e| InventoryError::Parse(format!("bad class index: {e}")))?;
            if idx != phone_of_class.len() {
                return Err(InventoryError::Parse(format!(
                    "class indices must be dense and ascending, found {idx} at position {}",
                    phone_of_class.len()
                )));
            }
            phone_of_class.push(label.trim().to_string());
        }
        if phone_of_class.len() != size {
            return Err(InventoryError::Parse(format!(
                "size header says {size} classes but {} were listed",
                phone_of_class.len()
            )));
        }
        Self::new(language_id, phone_of_class, silence_phone)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), InventoryError> {
        let mut f = File::create(path)?;
        self.write_to(&mut f)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InventoryError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rejects_undersized_inventory() {
        let err = ClassInventory::new("x", labels(&["sil"]), "sil").unwrap_err();
        assert!(matches!(err, InventoryError::TooSmall(1)));
    }

    #[test]
    fn rejects_empty_label_and_missing_silence() {
        let err = ClassInventory::new("x", labels(&["sil", ""]), "sil").unwrap_err();
        assert!(matches!(err, InventoryError::BadLabel(1)));
        let err = ClassInventory::new("x", labels(&["a", "b"]), "sil").unwrap_err();
        assert!(matches!(err, InventoryError::SilenceMissing(_)));
    }

    #[test]
    fn file_round_trip() {
        let inv = ClassInventory::new("synA", labels(&["sil", "aa", "iy", "k"]), "sil").unwrap();
        let mut buf = Vec::new();
        inv.write_to(&mut buf).unwrap();
        let back = ClassInventory::read_from(buf.as_slice()).unwrap();
        assert_eq!(inv, back);
    }

    #[test]
    fn read_rejects_size_mismatch() {
        let text = "language_id x\nsize 3\nsilence_phone sil\n0 sil\n1 aa\n";
        let err = ClassInventory::read_from(text.as_bytes()).unwrap_err();
        assert!(matches!(err, InventoryError::Parse(_)));
    }

    #[test]
    fn read_rejects_sparse_indices() {
        let text = "language_id x\nsize 2\nsilence_phone sil\n0 sil\n2 aa\n";
        let err = ClassInventory::read_from(text.as_bytes()).unwrap_err();
        assert!(matches!(err, InventoryError::Parse(_)));
    }
}
