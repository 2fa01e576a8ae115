use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{dot, sigmoid, Matrix, SeededStream, Substream};

/// Feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<f64>,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<f64>, feature_names: Option<Vec<String>>) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::Input("dataset has no records".into()));
        }
        if labels.len() != features.rows() {
            return Err(Error::Input(format!(
                "{} labels for {} records",
                labels.len(),
                features.rows()
            )));
        }
        if let Some(names) = &feature_names {
            if names.len() != features.cols() {
                return Err(Error::Input(format!(
                    "{} feature names for {} columns",
                    names.len(),
                    features.cols()
                )));
            }
        }
        if features.as_slice().iter().chain(&labels).any(|x| !x.is_finite()) {
            return Err(Error::Input("dataset contains NaN or infinite entries".into()));
        }
        Ok(Self {
            features,
            labels,
            feature_names,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    /// Appends a constant-one column named `intercept`.
    pub fn with_intercept(self) -> Self {
        let (n, p) = (self.features.rows(), self.features.cols());
        let mut data = Vec::with_capacity(n * (p + 1));
        for row in self.features.iter_rows() {
            data.extend_from_slice(row);
            data.push(1.0);
        }
        let feature_names = self.feature_names.map(|mut names| {
            names.push("intercept".into());
            names
        });
        Self {
            features: Matrix::from_vec(n, p + 1, data).expect("sized above"),
            labels: self.labels,
            feature_names,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    /// Header name of the label column.
    pub target: String,
    pub add_intercept: bool,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            target: "y".into(),
            add_intercept: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LibsvmOptions {
    /// Number of feature columns; inferred from the largest index when `None`.
    pub num_features: Option<usize>,
    pub add_intercept: bool,
}

pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file, options)
}

/// Parses header-first CSV. Every non-target column is a feature.
pub fn parse_csv<R: Read>(reader: R, options: &CsvOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_parse_error(e, 1))?.clone();
    let target = headers
        .iter()
        .position(|h| h == options.target)
        .ok_or_else(|| Error::Input(format!("target column '{}' not in header", options.target)))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        // header is line 1
        let line = k + 2;
        let record = record.map_err(|e| csv_parse_error(e, line))?;
        for (i, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("column '{}': '{}' is not a number", &headers[i], field),
            })?;
            if !value.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("column '{}' is not finite", &headers[i]),
                });
            }
            if i == target {
                labels.push(value);
            } else {
                features.push(value);
            }
        }
    }
    let n = labels.len();
    let ds = Dataset::new(Matrix::from_vec(n, names.len(), features)?, labels, Some(names))?;
    Ok(if options.add_intercept {
        ds.with_intercept()
    } else {
        ds
    })
}

fn csv_parse_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} columns, found {len}")
        }
        _ => e.to_string(),
    };
    Error::Parse { line, message }
}

pub fn load_libsvm(path: impl AsRef<Path>, options: &LibsvmOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_libsvm(BufReader::new(file), options)
}

/// Parses `label idx:val idx:val ...` lines with 1-based indices.
///
/// Labels `-1` and `+1` become `0` and `1`; other numeric labels are kept.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_libsvm<R: BufRead>(reader: R, options: &LibsvmOptions) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_index = 0usize;
    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("label '{label_tok}' is not a number"),
        })?;
        let label = if label == -1.0 { 0.0 } else { label };
        if !label.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                message: "label is not finite".into(),
            });
        }
        let mut entries = Vec::new();
        for tok in tokens {
            let (idx, val) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                message: format!("expected idx:val, found '{tok}'"),
            })?;
            let idx: usize = idx.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad feature index '{idx}'"),
            })?;
            if idx == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "feature indices are 1-based".into(),
                });
            }
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("bad feature value '{val}'"),
            })?;
            if !val.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("feature {idx} is not finite"),
                });
            }
            if let Some(p) = options.num_features {
                if idx > p {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("feature index {idx} exceeds num_features = {p}"),
                    });
                }
            }
            max_index = max_index.max(idx);
            entries.push((idx - 1, val));
        }
        rows.push(entries);
        labels.push(label);
    }
    let p = options.num_features.unwrap_or(max_index);
    let mut features = Matrix::zeros(rows.len(), p);
    for (i, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            features[(i, j)] = v;
        }
    }
    let ds = Dataset::new(features, labels, None)?;
    Ok(if options.add_intercept {
        ds.with_intercept()
    } else {
        ds
    })
}

/// Writes a header row (`target`, then feature names or `x1..xp`) and one row per record.
pub fn write_csv(data: &Dataset, path: impl AsRef<Path>, target: &str) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![target.to_string()];
    match data.feature_names() {
        Some(names) => header.extend(names.iter().cloned()),
        None => header.extend((1..=data.num_features()).map(|j| format!("x{j}"))),
    }
    w.write_record(&header)?;
    for (row, y) in data.features().iter_rows().zip(data.labels()) {
        let mut rec = vec![y.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes LIBSVM lines, omitting zero entries. Binary labels are written as `-1`/`+1`.
pub fn write_libsvm(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (row, &y) in data.features().iter_rows().zip(data.labels()) {
        let mut line = if y == 0.0 {
            "-1".to_string()
        } else if y == 1.0 {
            "+1".to_string()
        } else {
            y.to_string()
        };
        for (j, v) in row.iter().enumerate() {
            if *v != 0.0 {
                line.push_str(&format!(" {}:{}", j + 1, v));
            }
        }
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Synthetic logistic-regression data: standard-normal features, weights
/// drawn from `N(0, 1)`, Bernoulli labels. With `add_intercept` the last of
/// the `p` columns is the constant one.
pub fn synthetic_logistic(n: usize, p: usize, seed: u64, add_intercept: bool) -> Dataset {
    let mut s = SeededStream::new(seed, Substream::Aux, 0);
    let true_w: Vec<f64> = (0..p).map(|_| s.standard_normal()).collect();
    let mut x = Matrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row_mut(i);
        s.fill_standard_normal(row);
        if add_intercept && p > 0 {
            row[p - 1] = 1.0;
        }
        let prob = sigmoid(dot(row, &true_w));
        y.push(if s.uniform() < prob { 1.0 } else { 0.0 });
    }
    Dataset::new(x, y, None).expect("synthetic data is finite")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_minimal() {
        let ds = parse_csv("y,x1\n1,2.0\n0,-1.0".as_bytes(), &CsvOptions::default()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.num_features(), 1);
        assert_eq!(ds.labels(), &[1.0, 0.0]);
        assert_eq!(ds.features().as_slice(), &[2.0, -1.0]);
        assert_eq!(ds.feature_names().unwrap(), &["x1".to_string()]);
    }

    #[test]
    fn csv_target_anywhere_and_intercept() {
        let opts = CsvOptions {
            target: "label".into(),
            add_intercept: true,
        };
        let ds = parse_csv("a,label,b\n1,0,2\n3,1,4\n".as_bytes(), &opts).unwrap();
        assert_eq!(ds.features().row(1), &[3.0, 4.0, 1.0]);
        assert_eq!(ds.labels(), &[0.0, 1.0]);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let opts = CsvOptions::default();
        match parse_csv("y,x\n1,2\n0,abc\n".as_bytes(), &opts) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match parse_csv("y,x\n1,2\n0,1,5\n".as_bytes(), &opts) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("columns"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_csv("a,b\n1,2\n".as_bytes(), &opts), Err(Error::Input(_))));
    }

    #[test]
    fn libsvm_line() {
        let opts = LibsvmOptions {
            num_features: Some(3),
            add_intercept: false,
        };
        let ds = parse_libsvm("+1 1:0.5 3:2\n".as_bytes(), &opts).unwrap();
        assert_eq!(ds.features().row(0), &[0.5, 0.0, 2.0]);
        assert_eq!(ds.labels(), &[1.0]);
    }

    #[test]
    fn libsvm_maps_minus_one_and_infers_width() {
        let ds = parse_libsvm(
            "-1 2:1\n# comment\n\n+1 1:3 4:-2 # trailing\n".as_bytes(),
            &LibsvmOptions::default(),
        )
        .unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.num_features(), 4);
        assert_eq!(ds.labels(), &[0.0, 1.0]);
        assert_eq!(ds.features().row(1), &[3.0, 0.0, 0.0, -2.0]);
    }

    #[test]
    fn libsvm_errors() {
        let opts = LibsvmOptions::default();
        for (text, bad_line) in [
            ("1 1:2\n1 0:3\n", 2),
            ("1 1:2\n1 3\n", 2),
            ("x 1:2\n", 1),
            ("1 1:2\n\n1 2:z\n", 3),
        ] {
            match parse_libsvm(text.as_bytes(), &opts) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, bad_line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        let narrow = LibsvmOptions {
            num_features: Some(2),
            add_intercept: false,
        };
        assert!(parse_libsvm("1 3:1\n".as_bytes(), &narrow).is_err());
    }

    #[test]
    fn dataset_rejects_nan_and_mismatch() {
        let x = Matrix::from_rows(&[vec![f64::NAN]]).unwrap();
        assert!(Dataset::new(x, vec![1.0], None).is_err());
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(Dataset::new(x, vec![1.0], None).is_err());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = synthetic_logistic(50, 3, 9, true);
        let b = synthetic_logistic(50, 3, 9, true);
        assert_eq!(a, b);
        assert!(a.features().iter_rows().all(|r| r[2] == 1.0));
        assert!(a.labels().iter().all(|&y| y == 0.0 || y == 1.0));
    }
}
