//! Dataset files: comma-delimited with header `f1,...,fd,B,b`, plus the
//! train-fitted feature standardizer.

use std::fmt::Write as _;
use std::path::Path;

use super::HarnessError;
use crate::auction::{AuctionRecord, Dataset};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Parses a dataset file: one header line `f1,...,fd,B,b`, then one
/// comma-separated record per line. Validates `0 <= b <= B` per record and
/// reports offending line numbers.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, HarnessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let path_str = path.display().to_string();
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| HarnessError::Parse {
        path: path_str.clone(),
        line: 1,
        message: "empty file".into(),
    })?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    if columns.len() < 2 || columns[columns.len() - 2] != "B" || columns[columns.len() - 1] != "b" {
        return Err(HarnessError::Parse {
            path: path_str,
            line: 1,
            message: format!("header must end with columns B,b; got {header:?}"),
        });
    }
    let dim = columns.len() - 2;
    for (j, name) in columns[..dim].iter().enumerate() {
        let expected = format!("f{}", j + 1);
        if *name != expected {
            return Err(HarnessError::Parse {
                path: path_str,
                line: 1,
                message: format!("feature column {} must be named {expected}, got {name:?}", j + 1),
            });
        }
    }

    let mut data = Dataset::new(dim);
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 2 {
            return Err(HarnessError::DimensionInconsistency {
                path: path_str,
                line: line_no,
                expected: dim,
                got: fields.len().saturating_sub(2),
            });
        }
        let mut values = Vec::with_capacity(dim + 2);
        for field in &fields {
            let v: f64 = field.parse().map_err(|_| HarnessError::Parse {
                path: path_str.clone(),
                line: line_no,
                message: format!("not a number: {field:?}"),
            })?;
            values.push(v);
        }
        let second_bid = values.pop().expect("len checked");
        let highest_bid = values.pop().expect("len checked");
        let record = AuctionRecord::new(values, highest_bid, second_bid).map_err(|_| {
            HarnessError::InvariantViolation {
                path: path_str.clone(),
                line: line_no,
                message: format!("bids must satisfy 0 <= b <= B, got B={highest_bid}, b={second_bid}"),
            }
        })?;
        data.push(record).expect("dimension checked against header");
    }
    Ok(data)
}

/// Writes a dataset in the `load_dataset` format; values carry 17
/// significant digits so a round trip is bit-exact.
pub fn save_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let mut out = String::new();
    for j in 0..data.dim() {
        let _ = write!(out, "f{},", j + 1);
    }
    out.push_str("B,b\n");
    for rec in data.iter() {
        for v in rec.features() {
            let _ = write!(out, "{v:.16e},");
        }
        let _ = writeln!(out, "{:.16e},{:.16e}", rec.highest_bid(), rec.second_bid());
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Per-feature affine transform to mean 0, standard deviation 1, fitted on
/// the training split only.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// Population moments of the given (training) split. Constant features
    /// get standard deviation 1 so the transform stays defined.
    pub fn fit(train: &Dataset) -> Self {
        let n = train.len().max(1) as f64;
        let d = train.dim();
        let mut means = vec![0.0; d];
        for rec in train.iter() {
            for (m, x) in means.iter_mut().zip(rec.features()) {
                *m += x;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut stds = vec![0.0; d];
        for rec in train.iter() {
            for ((s, m), x) in stds.iter_mut().zip(&means).zip(rec.features()) {
                *s += (x - m) * (x - m);
            }
        }
        for s in &mut stds {
            *s = (*s / n).sqrt();
            if *s <= 0.0 {
                *s = 1.0;
            }
        }
        Self { means, stds }
    }

    pub fn apply(&self, data: &Dataset) -> Dataset {
        let mut out = Dataset::new(data.dim());
        for rec in data.iter() {
            let features: Vec<f64> = rec
                .features()
                .iter()
                .zip(self.means.iter().zip(&self.stds))
                .map(|(x, (m, s))| (x - m) / s)
                .collect();
            out.push(
                AuctionRecord::new(features, rec.highest_bid(), rec.second_bid())
                    .expect("bids unchanged"),
            )
            .expect("dimension unchanged");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_the_documented_example() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mini.csv");
        std::fs::write(&path, "f1,f2,B,b\n1.0,2.0,5.0,2.5\n").unwrap();
        let data = load_dataset(&path).unwrap();
        assert_eq!(data.dim(), 2);
        assert_eq!(data.len(), 1);
        let rec = &data.records()[0];
        assert_eq!(rec.features(), &[1.0, 2.0]);
        assert_relative_eq!(rec.highest_bid(), 5.0);
        assert_relative_eq!(rec.second_bid(), 2.5);
    }

    #[test]
    fn rejects_violations_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "f1,B,b\n1.0,5.0,2.5\n2.0,1.0,3.0\n").unwrap();
        match load_dataset(&path).unwrap_err() {
            HarnessError::InvariantViolation { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }

        std::fs::write(&path, "f1,B,b\n1.0,abc,0.5\n").unwrap();
        match load_dataset(&path).unwrap_err() {
            HarnessError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }

        std::fs::write(&path, "f1,f2,B\n").unwrap();
        assert!(matches!(
            load_dataset(&path).unwrap_err(),
            HarnessError::Parse { line: 1, .. }
        ));

        std::fs::write(&path, "f1,B,b\n1.0,5.0\n").unwrap();
        assert!(matches!(
            load_dataset(&path).unwrap_err(),
            HarnessError::DimensionInconsistency { line: 2, .. }
        ));
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let cfg = crate::simdata::SimConfig {
            n_total: 50,
            dim: 3,
            noise_std: 0.1,
            seed: 8,
            variant: crate::simdata::SimVariant::Linear,
        };
        let data = crate::simdata::gen_simulated(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("roundtrip.csv");
        save_dataset(&data, &path).unwrap();
        let loaded = load_dataset(&path).unwrap();
        assert_eq!(data.len(), loaded.len());
        for (a, b) in data.iter().zip(loaded.iter()) {
            assert_eq!(a, b, "records must round-trip bit-for-bit");
        }
    }

    #[test]
    fn standardizer_fits_train_only() {
        let mut train = Dataset::new(1);
        for x in [1.0, 2.0, 3.0] {
            train
                .push(AuctionRecord::new(vec![x], 1.0, 0.5).unwrap())
                .unwrap();
        }
        let mut test = Dataset::new(1);
        test.push(AuctionRecord::new(vec![10.0], 1.0, 0.5).unwrap())
            .unwrap();

        let std = Standardizer::fit(&train);
        assert_relative_eq!(std.means[0], 2.0);
        assert_relative_eq!(std.stds[0], (2.0f64 / 3.0).sqrt());

        let strain = std.apply(&train);
        let mean: f64 = strain.iter().map(|r| r.features()[0]).sum::<f64>() / 3.0;
        assert_relative_eq!(mean, 0.0, epsilon = 1e-15);

        // the test split uses the train transform, not its own
        let stest = std.apply(&test);
        assert_relative_eq!(
            stest.records()[0].features()[0],
            (10.0 - 2.0) / (2.0f64 / 3.0).sqrt()
        );
    }
}
