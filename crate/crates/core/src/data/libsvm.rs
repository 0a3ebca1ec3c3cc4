use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use super::{SparseDataset, SparseVector};
use crate::error::{Error, Result};
use crate::Scalar;

/// Rule turning raw file labels into ±1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMapping {
    /// Accept only `+1`/`1` and `-1`.
    Signed,
    /// `label > threshold` maps to `+1`, everything else to `-1`.
    /// `Threshold { threshold: 4.5 }` sends digits 0–4 to −1 and 5–9 to +1.
    Threshold { threshold: f64 },
    /// Explicit class lists; anything not listed is an error.
    Classes { positive: Vec<f64>, negative: Vec<f64> },
}

impl Default for LabelMapping {
    fn default() -> Self {
        LabelMapping::Signed
    }
}

impl LabelMapping {
    pub fn digits_low_high() -> Self {
        LabelMapping::Threshold { threshold: 4.5 }
    }

    pub fn map(&self, raw: f64) -> Option<f64> {
        match self {
            LabelMapping::Signed => {
                if raw == 1.0 {
                    Some(1.0)
                } else if raw == -1.0 {
                    Some(-1.0)
                } else {
                    None
                }
            }
            LabelMapping::Threshold { threshold } => {
                if !raw.is_finite() {
                    None
                } else if raw > *threshold {
                    Some(1.0)
                } else {
                    Some(-1.0)
                }
            }
            LabelMapping::Classes { positive, negative } => {
                if positive.contains(&raw) {
                    Some(1.0)
                } else if negative.contains(&raw) {
                    Some(-1.0)
                } else {
                    None
                }
            }
        }
    }
}

/// Parses LIBSVM text (`label idx:val ...`, 1-based strictly increasing
/// indices). Indices are stored 0-based; explicit zeros are dropped. The
/// feature count is `expected_features` when given, else one past the largest
/// index seen.
pub fn parse_libsvm<T: Scalar, R: BufRead>(
    reader: R,
    expected_features: Option<usize>,
    mapping: &LabelMapping,
) -> Result<SparseDataset<T>> {
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut max_index: Option<usize> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let line_no = lineno + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let raw_label = tokens.next().unwrap_or_default();
        let label_value: f64 = raw_label.parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("label `{raw_label}` is not a number"),
        })?;
        let label = mapping.map(label_value).ok_or_else(|| Error::Label {
            line: line_no,
            label: raw_label.to_string(),
        })?;

        let mut row = SparseVector::new();
        let mut prev: Option<usize> = None;
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("token `{tok}` is not idx:val"),
            })?;
            if idx == "qid" {
                continue;
            }
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("feature index `{idx}` is not a non-negative integer"),
            })?;
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("feature value `{val}` is not a number"),
            })?;
            if idx == 0 {
                return Err(Error::Format {
                    line: line_no,
                    msg: "feature indices are 1-based; found 0".into(),
                });
            }
            if prev.is_some_and(|p| idx <= p) {
                return Err(Error::Format {
                    line: line_no,
                    msg: format!("feature index {idx} does not increase"),
                });
            }
            if let Some(m) = expected_features {
                if idx > m {
                    return Err(Error::Format {
                        line: line_no,
                        msg: format!("feature index {idx} exceeds {m} features"),
                    });
                }
            }
            prev = Some(idx);
            if val != 0.0 {
                row.push(idx - 1, T::lit(val));
            }
        }
        if let Some(p) = prev {
            max_index = Some(max_index.map_or(p, |m| m.max(p)));
        }
        samples.push(row);
        labels.push(T::lit(label));
    }

    let n_features = expected_features.unwrap_or_else(|| max_index.unwrap_or(0));
    SparseDataset::new("libsvm", n_features, samples, labels)
}

/// Opens a LIBSVM file, decompressing transparently when the name ends in `.gz`.
pub fn load_libsvm<T: Scalar>(
    path: &Path,
    expected_features: Option<usize>,
    mapping: &LabelMapping,
) -> Result<SparseDataset<T>> {
    let file = File::open(path)?;
    let is_gz = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    let reader: Box<dyn Read> = if is_gz { Box::new(GzDecoder::new(file)) } else { Box::new(file) };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().trim_end_matches(".gz").to_string())
        .unwrap_or_default();
    Ok(parse_libsvm(BufReader::new(reader), expected_features, mapping)?.with_name(name))
}

/// Writes ±1 labels and 1-based indices; values use shortest round-trip formatting.
pub fn write_libsvm<T: Scalar, W: Write>(ds: &SparseDataset<T>, mut out: W) -> Result<()> {
    for (x, y) in ds.samples().iter().zip(ds.labels()) {
        write!(out, "{}", if *y > T::zero() { "+1" } else { "-1" })?;
        for (i, v) in x.iter() {
            write!(out, " {}:{}", i + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}
