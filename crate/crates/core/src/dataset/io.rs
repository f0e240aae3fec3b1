//! Feature file formats.
//!
//! CSV: header `id,f0,f1,...,f{d-1}[,label]`, one row per sample.
//!
//! Binary (`GCFV`, little-endian throughout):
//!
//! | bytes | content                                  |
//! |-------|------------------------------------------|
//! | 4     | magic `GCFV`                             |
//! | 1     | version `0x01`                           |
//! | 4     | `u32` n_rows                             |
//! | 4     | `u32` n_cols                             |
//! | 1     | has_labels (0/1)                         |
//! | 4·n·d | `f32` features, row-major                |
//! | 2·n   | `u16` labels, present iff has_labels = 1 |
//!
//! Binary files carry no ids; rows are named by their zero-based index.

use std::fs;
use std::path::Path;

use crate::dataset::{Dataset, FeatureMatrix, LabelVector};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"GCFV";
pub const BINARY_VERSION: u8 = 0x01;
const BINARY_HEADER_LEN: usize = 4 + 1 + 4 + 4 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Csv,
    Binary,
}

impl FeatureFormat {
    /// Sniffs the leading magic bytes; anything else is treated as CSV.
    pub fn detect(bytes: &[u8]) -> Self {
        if bytes.starts_with(BINARY_MAGIC) {
            FeatureFormat::Binary
        } else {
            FeatureFormat::Csv
        }
    }
}

impl std::str::FromStr for FeatureFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(FeatureFormat::Csv),
            "binary" | "bin" => Ok(FeatureFormat::Binary),
            other => Err(Error::InvalidConfig(format!("unknown feature format `{other}`"))),
        }
    }
}

/// How floats are rendered when writing CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvPrecision {
    /// Shortest text that round-trips the `f64` value.
    Double,
    /// Shortest text that round-trips the value after narrowing to `f32`.
    Single,
}

pub fn load_features(path: impl AsRef<Path>, format: Option<FeatureFormat>) -> Result<Dataset> {
    load_features_with_classes(path, format, None)
}

/// Loads a feature file. When `n_classes` is given, labels at or above it
/// are rejected; otherwise the class count is one past the largest label.
pub fn load_features_with_classes(
    path: impl AsRef<Path>,
    format: Option<FeatureFormat>,
    n_classes: Option<usize>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = format.unwrap_or_else(|| FeatureFormat::detect(&bytes));
    match format {
        FeatureFormat::Csv => parse_csv(&bytes, n_classes),
        FeatureFormat::Binary => decode_binary(&bytes, n_classes),
    }
}

fn make_labels(labels: Vec<usize>, n_classes: Option<usize>) -> Result<LabelVector> {
    match n_classes {
        Some(k) => LabelVector::new(labels, k),
        None => LabelVector::from_labels(labels),
    }
}

pub fn parse_csv(bytes: &[u8], n_classes: Option<usize>) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| Error::MalformedHeader(e.to_string()))?
        .clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::MalformedHeader("empty file".into()));
    }
    if &header[0] != "id" {
        return Err(Error::MalformedHeader(format!(
            "first column must be `id`, found `{}`",
            &header[0]
        )));
    }
    let has_labels = header.len() > 1 && &header[header.len() - 1] == "label";
    let n_cols = header.len() - 1 - usize::from(has_labels);
    if n_cols == 0 {
        return Err(Error::MalformedHeader("no feature columns".into()));
    }
    for (j, name) in header.iter().skip(1).take(n_cols).enumerate() {
        if name != format!("f{j}") {
            return Err(Error::MalformedHeader(format!(
                "column {} must be `f{j}`, found `{name}`",
                j + 1
            )));
        }
    }

    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::BadRow {
            row,
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(Error::BadRow {
                row,
                message: format!("expected {} fields, got {}", header.len(), record.len()),
            });
        }
        ids.push(record[0].to_string());
        for (j, cell) in record.iter().skip(1).take(n_cols).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::BadRow {
                row,
                message: format!("column f{j}: `{cell}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::BadRow {
                    row,
                    message: format!("column f{j}: non-finite value `{cell}`"),
                });
            }
            values.push(v);
        }
        if has_labels {
            let cell = &record[header.len() - 1];
            let l: usize = cell.trim().parse().map_err(|_| Error::BadRow {
                row,
                message: format!("label `{cell}` is not a non-negative integer"),
            })?;
            if let Some(k) = n_classes.filter(|&k| l >= k) {
                return Err(Error::BadRow {
                    row,
                    message: format!("label {l} outside class range 0..{k}"),
                });
            }
            labels.push(l);
        }
    }
    if ids.is_empty() {
        return Err(Error::InvalidData("file has a header but no rows".into()));
    }
    let features = FeatureMatrix::new(ids.len(), n_cols, values)?;
    let labels = has_labels.then(|| make_labels(labels, n_classes)).transpose()?;
    Dataset::new(ids, features, labels)
}

pub fn format_csv(dataset: &Dataset, precision: CsvPrecision) -> Result<Vec<u8>> {
    let x = &dataset.features;
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = Vec::with_capacity(x.n_cols() + 2);
    header.push("id".to_string());
    header.extend((0..x.n_cols()).map(|j| format!("f{j}")));
    if dataset.labels.is_some() {
        header.push("label".to_string());
    }
    let csv_err = |e: csv::Error| Error::InvalidData(e.to_string());
    writer.write_record(&header).map_err(csv_err)?;
    let mut record = Vec::with_capacity(header.len());
    for (i, row) in x.rows().enumerate() {
        record.clear();
        record.push(dataset.ids[i].clone());
        record.extend(row.iter().map(|&v| match precision {
            CsvPrecision::Double => v.to_string(),
            CsvPrecision::Single => (v as f32).to_string(),
        }));
        if let Some(y) = &dataset.labels {
            record.push(y.labels()[i].to_string());
        }
        writer.write_record(&record).map_err(csv_err)?;
    }
    writer.into_inner().map_err(|e| Error::InvalidData(e.to_string()))
}

pub fn encode_binary(dataset: &Dataset) -> Result<Vec<u8>> {
    let x = &dataset.features;
    let n = u32::try_from(x.n_rows())
        .map_err(|_| Error::InvalidData("too many rows for the binary format".into()))?;
    let d = u32::try_from(x.n_cols())
        .map_err(|_| Error::InvalidData("too many columns for the binary format".into()))?;
    let label_bytes = if dataset.labels.is_some() {
        2 * x.n_rows()
    } else {
        0
    };
    let mut out = Vec::with_capacity(BINARY_HEADER_LEN + 4 * x.values().len() + label_bytes);
    out.extend_from_slice(BINARY_MAGIC);
    out.push(BINARY_VERSION);
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&d.to_le_bytes());
    out.push(u8::from(dataset.labels.is_some()));
    for (pos, &v) in x.values().iter().enumerate() {
        let narrow = v as f32;
        if !narrow.is_finite() {
            return Err(Error::BadRow {
                row: pos / x.n_cols() + 1,
                message: format!("value {v} overflows binary32"),
            });
        }
        out.extend_from_slice(&narrow.to_le_bytes());
    }
    if let Some(y) = &dataset.labels {
        for (i, &l) in y.labels().iter().enumerate() {
            let l = u16::try_from(l).map_err(|_| Error::BadRow {
                row: i + 1,
                message: format!("label {l} does not fit in u16"),
            })?;
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    Ok(out)
}

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode_binary(bytes: &[u8], n_classes: Option<usize>) -> Result<Dataset> {
    if bytes.len() < BINARY_HEADER_LEN {
        return Err(Error::MalformedHeader(format!(
            "binary header needs {BINARY_HEADER_LEN} bytes, file has {}",
            bytes.len()
        )));
    }
    if &bytes[..4] != BINARY_MAGIC {
        return Err(Error::MalformedHeader("missing GCFV magic".into()));
    }
    if bytes[4] != BINARY_VERSION {
        return Err(Error::MalformedHeader(format!(
            "unsupported GCFV version {:#04x}",
            bytes[4]
        )));
    }
    let n = le_u32(bytes, 5) as usize;
    let d = le_u32(bytes, 9) as usize;
    let has_labels = match bytes[13] {
        0 => false,
        1 => true,
        other => {
            return Err(Error::MalformedHeader(format!(
                "has_labels flag must be 0 or 1, got {other}"
            )))
        }
    };
    if n == 0 || d == 0 {
        return Err(Error::MalformedHeader(format!("empty shape {n}x{d}")));
    }
    let expected = BINARY_HEADER_LEN + 4 * n * d + if has_labels { 2 * n } else { 0 };
    if bytes.len() != expected {
        return Err(Error::MalformedHeader(format!(
            "header declares {n}x{d} (labels: {has_labels}) = {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let body = &bytes[BINARY_HEADER_LEN..];
    let values: Vec<f64> = body[..4 * n * d]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    let features = FeatureMatrix::new(n, d, values)?;
    let labels = if has_labels {
        let raw = body[4 * n * d..]
            .chunks_exact(2)
            .map(|c| usize::from(u16::from_le_bytes([c[0], c[1]])))
            .collect();
        Some(make_labels(raw, n_classes)?)
    } else {
        None
    };
    let ids = (0..n).map(|i| i.to_string()).collect();
    Dataset::new(ids, features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<Dataset> {
        parse_csv(s.as_bytes(), None)
    }

    #[test]
    fn csv_with_labels() {
        let ds = parse("id,f0,f1,label\na,1.0,2.0,0\nb,3.5,-1,1\nc,0,0,2\n").unwrap();
        assert_eq!(ds.features.n_rows(), 3);
        assert_eq!(ds.features.n_cols(), 2);
        assert_eq!(ds.features.row(1), &[3.5, -1.0]);
        assert_eq!(ds.labels.unwrap().labels(), &[0, 1, 2]);
        assert_eq!(ds.ids, vec!["a", "b", "c"]);
    }

    #[test]
    fn csv_without_labels() {
        let ds = parse("id,f0\nx,1\n").unwrap();
        assert!(ds.labels.is_none());
    }

    #[test]
    fn csv_nan_names_row() {
        let err = parse("id,f0,f1\na,1,2\nb,NaN,3\n").unwrap_err();
        assert!(matches!(err, Error::BadRow { row: 2, .. }), "{err}");
        assert!(err.to_string().contains("row 2"));
    }

    #[test]
    fn csv_errors() {
        assert!(matches!(parse(""), Err(Error::MalformedHeader(_))));
        assert!(matches!(parse("key,f0\na,1\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(
            parse("id,f0,f2\na,1,2\n"),
            Err(Error::MalformedHeader(_))
        ));
        assert!(matches!(parse("id,label\na,1\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(
            parse("id,f0,f1\na,1,2\nb,1\n"),
            Err(Error::BadRow { row: 2, .. })
        ));
        assert!(matches!(
            parse("id,f0,label\na,1,-1\n"),
            Err(Error::BadRow { row: 1, .. })
        ));
        assert!(matches!(parse("id,f0\n"), Err(Error::InvalidData(_))));
        let err = parse_csv(b"id,f0,label\na,1,0\nb,2,7\n", Some(3)).unwrap_err();
        assert!(matches!(err, Error::BadRow { row: 2, .. }));
    }

    #[test]
    fn binary_header_echo_without_labels() {
        let n = 5;
        let d = 2048;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"GCFV");
        bytes.push(1);
        bytes.extend_from_slice(&(n as u32).to_le_bytes());
        bytes.extend_from_slice(&(d as u32).to_le_bytes());
        bytes.push(0);
        for i in 0..n * d {
            bytes.extend_from_slice(&(i as f32 * 0.5).to_le_bytes());
        }
        let ds = decode_binary(&bytes, None).unwrap();
        assert_eq!(ds.features.n_rows(), 5);
        assert_eq!(ds.features.n_cols(), 2048);
        assert!(ds.labels.is_none());
        assert_eq!(ds.features.get(1, 3), (2048.0 + 3.0) * 0.5);
        assert_eq!(encode_binary(&ds).unwrap(), bytes);
    }

    #[test]
    fn binary_rejects_bad_input() {
        let ds = parse("id,f0,f1,label\na,1,2,0\nb,3,4,1\n").unwrap();
        let good = encode_binary(&ds).unwrap();
        assert_eq!(&good[..4], b"GCFV");
        assert_eq!(good.len(), 14 + 16 + 4);

        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(decode_binary(&bad, None).is_err());
        let mut bad = good.clone();
        bad[4] = 2;
        assert!(decode_binary(&bad, None).is_err());
        assert!(decode_binary(&good[..good.len() - 1], None).is_err());
        let mut bad = good.clone();
        bad[14..18].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(
            decode_binary(&bad, None),
            Err(Error::BadRow { row: 1, .. })
        ));
    }

    #[test]
    fn single_precision_csv_round_trips_binary() {
        let ds = parse("id,f0,f1,label\na,0.1,1e-7,0\nb,3.3333333,12345.678,1\n").unwrap();
        let bin = encode_binary(&ds).unwrap();
        let from_bin = decode_binary(&bin, None).unwrap();
        let csv = format_csv(&from_bin, CsvPrecision::Single).unwrap();
        let again = parse_csv(&csv, None).unwrap();
        assert_eq!(encode_binary(&again).unwrap(), bin);
    }
}
