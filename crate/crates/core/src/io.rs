//! Text file formats.
//!
//! * COO view files: a header line `d n loss` followed by `row col value`
//!   lines (0-based, whitespace separated). Blank lines and lines starting
//!   with `#` are skipped.
//! * Dense CSV: one matrix row per line, comma separated, no header. Values
//!   are written in shortest round-trip form, so reading back is exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::datagen::sample_mask;
use crate::loss::LossKind;
use crate::model::{validate_problem, MultiViewProblem, ViewData};
use crate::{Error, Index, Matrix, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// A view read from a COO file, together with its column count.
#[derive(Debug, Clone, PartialEq)]
pub struct CooView {
    pub n: usize,
    pub view: ViewData,
}

pub fn load_coo(path: impl AsRef<Path>) -> Result<CooView> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut header: Option<(usize, usize, LossKind)> = None;
    let mut entries = Vec::new();
    let mut lines_of = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(io_err(path))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(path, lineno, format!("expected 3 fields, found {}", fields.len())));
        }
        let int = |s: &str, what: &str| s.parse::<usize>().map_err(|_| parse_err(path, lineno, format!("bad {what} `{s}`")));
        match header {
            None => {
                let loss = fields[2].parse::<LossKind>().map_err(|e| parse_err(path, lineno, e.to_string()))?;
                header = Some((int(fields[0], "row count")?, int(fields[1], "column count")?, loss));
            }
            Some((d, n, _)) => {
                let row = int(fields[0], "row")?;
                let col = int(fields[1], "column")?;
                let value: f64 = fields[2]
                    .parse()
                    .map_err(|_| parse_err(path, lineno, format!("bad value `{}`", fields[2])))?;
                if row >= d || col >= n {
                    return Err(parse_err(path, lineno, format!("entry ({row}, {col}) outside {d}x{n}")));
                }
                entries.push((row, col, value));
                lines_of.push(lineno);
            }
        }
    }
    let (d, n, loss) = header.ok_or_else(|| parse_err(path, 1, "missing `d n loss` header"))?;
    let view = ViewData::new(d, entries, loss);
    let probe = MultiViewProblem {
        n,
        views: vec![view],
    };
    if let Err(violations) = validate_problem(&probe) {
        // report the first violation that maps to an entry line
        let first = &violations[0];
        let line = match first {
            crate::model::Violation::DuplicateEntry { row, col, .. }
            | crate::model::Violation::NonBinaryTarget { row, col, .. }
            | crate::model::Violation::NonFiniteValue { row, col, .. } => probe.views[0]
                .entries
                .iter()
                .rposition(|e| e.0 == *row && e.1 == *col)
                .map_or(1, |i| lines_of[i]),
            _ => 1,
        };
        return Err(parse_err(path, line, first.to_string()));
    }
    Ok(CooView {
        n,
        view: probe.views.into_iter().next().expect("one view"),
    })
}

pub fn write_coo(view: &ViewData, n: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "{} {} {}", view.d, n, view.loss)?;
        for &(i, j, v) in &view.entries {
            writeln!(w, "{i} {j} {v}")?;
        }
        w.flush()
    };
    body().map_err(io_err(path))
}

pub fn load_dense_csv(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, 0, e.to_string()))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
                parse_err(path, r + 1, format!("ragged row {r}: {len} fields, expected {expected_len}"))
            }
            _ => parse_err(path, r + 1, e.to_string()),
        })?;
        let width = record.len();
        if *cols.get_or_insert(width) != width {
            return Err(parse_err(path, r + 1, format!("ragged row {r}")));
        }
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, r + 1, format!("non-numeric cell `{cell}` at row {r}, column {c}")))?;
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.unwrap_or(0);
    Ok(Matrix::from_row_iterator(rows, cols, data))
}

pub fn write_dense_csv(matrix: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut body = || -> std::io::Result<()> {
        for row in matrix.row_iter() {
            let mut first = true;
            for v in row.iter() {
                if !first {
                    w.write_all(b",")?;
                }
                write!(w, "{v}")?;
                first = false;
            }
            w.write_all(b"\n")?;
        }
        w.flush()
    };
    body().map_err(io_err(path))
}

/// A features/labels problem plus the hidden entries of each view.
#[derive(Debug, Clone)]
pub struct MultilabelData {
    pub problem: MultiViewProblem,
    /// Full `d1 × n` feature matrix.
    pub features: Matrix,
    /// Full `d2 × n` ±1 label matrix.
    pub labels: Matrix,
    pub heldout: Vec<Vec<Index>>,
    /// Whether 0/1 labels were remapped to ±1.
    pub remapped: bool,
}

/// Loads a features CSV and a labels CSV, both with one sample per row, into
/// a two-view problem (features squared loss, labels logistic loss) with a
/// fraction `observed_fraction` of each view's entries kept for training.
pub fn load_multilabel(
    features_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    observed_fraction: f64,
    seed: u64,
) -> Result<MultilabelData> {
    let features = load_dense_csv(&features_path)?.transpose();
    let raw = load_dense_csv(&labels_path)?.transpose();
    multilabel_from_matrices(features, raw, observed_fraction, seed, labels_path.as_ref().to_path_buf())
}

fn multilabel_from_matrices(features: Matrix, raw: Matrix, fraction: f64, seed: u64, labels_path: PathBuf) -> Result<MultilabelData> {
    if features.ncols() != raw.ncols() {
        return Err(Error::dims(format!(
            "features have {} samples but labels have {}",
            features.ncols(),
            raw.ncols()
        )));
    }
    let binary01 = raw.iter().all(|v| *v == 0.0 || *v == 1.0);
    let pm1 = raw.iter().all(|v| *v == 1.0 || *v == -1.0);
    let (labels, remapped) = if pm1 {
        (raw, false)
    } else if binary01 {
        log::warn!("{}: remapping 0/1 labels to -1/+1", labels_path.display());
        (raw.map(|v| 2.0 * v - 1.0), true)
    } else {
        return Err(Error::invalid(format!("{}: labels must be ±1 or 0/1", labels_path.display())));
    };

    let n = features.ncols();
    let mut views = Vec::with_capacity(2);
    let mut heldout = Vec::with_capacity(2);
    for (k, (m, loss)) in [(&features, LossKind::Squared), (&labels, LossKind::Logistic)].into_iter().enumerate() {
        let mask = sample_mask(m.nrows(), n, fraction, seed.wrapping_add(k as u64))?;
        let entries = mask.train.iter().map(|&(i, j)| (i, j, m[(i, j)])).collect();
        views.push(ViewData::new(m.nrows(), entries, loss));
        heldout.push(mask.test);
    }
    Ok(MultilabelData {
        problem: MultiViewProblem::new(n, views)?,
        features,
        labels,
        heldout,
        remapped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn coo_examples() {
        let dir = tempfile::tempdir().unwrap();
        let ok = load_coo(write(&dir, "a.coo", "2 2 squared\n0 0 1.5\n1 1 -2")).unwrap();
        assert_eq!(ok.n, 2);
        assert_eq!(ok.view.d, 2);
        assert_eq!(ok.view.entries, vec![(0, 0, 1.5), (1, 1, -2.0)]);

        let empty = load_coo(write(&dir, "b.coo", "3 4 logistic\n")).unwrap();
        assert!(empty.view.entries.is_empty());
        assert_eq!(empty.view.loss, LossKind::Logistic);

        let err = load_coo(write(&dir, "c.coo", "2 2 squared\n0 1 1.0\n5 0 1.0\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");

        let dup = load_coo(write(&dir, "d.coo", "2 2 squared\n0 0 1\n1 0 2\n0 0 3\n")).unwrap_err();
        assert!(matches!(dup, Error::Parse { line: 4, ref message, .. } if message.contains("duplicate")), "{dup}");

        let bad = load_coo(write(&dir, "e.coo", "2 2 squared\n0 x 1\n")).unwrap_err();
        assert!(matches!(bad, Error::Parse { line: 2, .. }));
        let nonbin = load_coo(write(&dir, "f.coo", "2 2 logistic\n0 0 0.5\n")).unwrap_err();
        assert!(matches!(nonbin, Error::Parse { line: 2, .. }));
        assert!(matches!(load_coo(dir.path().join("missing.coo")), Err(Error::Io { .. })));
    }

    #[test]
    fn coo_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let view = ViewData::new(3, vec![(0, 1, 0.1), (2, 0, -1e-300), (1, 2, 12345.678901234567)], LossKind::Squared);
        let p = dir.path().join("v.coo");
        write_coo(&view, 3, &p).unwrap();
        let back = load_coo(&p).unwrap();
        assert_eq!(back.view, view);
    }

    #[test]
    fn dense_csv_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let m = Matrix::from_row_slice(2, 2, &[0.1, -2.5e-17, std::f64::consts::PI, 1e300]);
        let p = dir.path().join("m.csv");
        write_dense_csv(&m, &p).unwrap();
        assert_eq!(load_dense_csv(&p).unwrap(), m);

        let one = Matrix::from_element(1, 1, 1.0 / 3.0);
        write_dense_csv(&one, &p).unwrap();
        assert_eq!(load_dense_csv(&p).unwrap(), one);

        let ragged = load_dense_csv(write(&dir, "r.csv", "1,2\n3\n")).unwrap_err();
        assert!(matches!(ragged, Error::Parse { line: 2, ref message, .. } if message.contains("row 1")), "{ragged}");
        let text = load_dense_csv(write(&dir, "t.csv", "1,abc\n")).unwrap_err();
        assert!(matches!(text, Error::Parse { .. }));
    }

    fn dense_file(dir: &tempfile::TempDir, name: &str, rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> PathBuf {
        let p = dir.path().join(name);
        write_dense_csv(&Matrix::from_fn(rows, cols, f), &p).unwrap();
        p
    }

    #[test]
    fn multilabel_shapes() {
        let dir = tempfile::tempdir().unwrap();
        for (n, d1, d2) in [(2417, 103, 14), (593, 72, 6)] {
            let feats = dense_file(&dir, "x.csv", n, d1, |i, j| (i as f64 * 0.37 + j as f64).sin());
            let labels = dense_file(&dir, "y.csv", n, d2, |i, j| ((i + j) % 2) as f64);
            let data = load_multilabel(&feats, &labels, 0.8, 1).unwrap();
            assert_eq!(data.problem.n, n);
            assert_eq!(data.problem.dims(), vec![d1, d2]);
            assert!(data.remapped);
            assert_eq!(data.problem.views[1].loss, LossKind::Logistic);
            assert!(data.problem.views[1].entries.iter().all(|e| e.2.abs() == 1.0));
            assert_eq!(data.heldout[1].len(), d2 * n - (0.8 * (d2 * n) as f64).floor() as usize);
        }
    }

    #[test]
    fn multilabel_errors() {
        let dir = tempfile::tempdir().unwrap();
        let feats = dense_file(&dir, "x.csv", 10, 3, |i, j| (i + j) as f64);
        let short = dense_file(&dir, "y.csv", 9, 2, |_, _| 1.0);
        assert!(matches!(load_multilabel(&feats, &short, 0.5, 0), Err(Error::DimensionMismatch(_))));
        let weird = dense_file(&dir, "z.csv", 10, 2, |_, _| 0.5);
        assert!(load_multilabel(&feats, &weird, 0.5, 0).is_err());

        let labels = dense_file(&dir, "w.csv", 10, 2, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        let full = load_multilabel(&feats, &labels, 1.0, 0).unwrap();
        assert!(full.heldout.iter().all(Vec::is_empty));
        let pred = Matrix::zeros(2, 10);
        assert!(matches!(
            crate::metrics::label_error_percent(&pred, &full.labels, &full.heldout[1]),
            Err(Error::UndefinedMetric(_))
        ));
    }
}
