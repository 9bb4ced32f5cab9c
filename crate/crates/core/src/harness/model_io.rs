//! Self-describing text files for fitted predictors. Parameters carry 17
//! significant digits, so a load reproduces predictions bit-for-bit.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::data_io::Standardizer;
use super::HarnessError;
use crate::auction::Dataset;
use crate::baselines::ScalarPolicy;
use crate::predictors::{
    features_matrix, KernelPredictor, LinearPredictor, NeuralPredictor, ReservePredictor,
};

/// A fitted reserve-price model of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictorModel {
    Linear(LinearPredictor),
    Kernel(KernelPredictor),
    Neural(NeuralPredictor),
    Scalar(ScalarPolicy),
}

impl PredictorModel {
    pub fn kind(&self) -> &'static str {
        match self {
            PredictorModel::Linear(_) => "linear",
            PredictorModel::Kernel(_) => "kernel",
            PredictorModel::Neural(_) => "neural",
            PredictorModel::Scalar(_) => "scalar",
        }
    }

    /// Reserve prices for every record (no standardization applied).
    pub fn predict_raw(&self, data: &Dataset) -> Result<Vec<f64>, HarnessError> {
        match self {
            PredictorModel::Linear(p) => data
                .iter()
                .map(|r| p.predict(r.features()).map_err(HarnessError::from))
                .collect(),
            PredictorModel::Kernel(p) => Ok(p.predict_batch(&features_matrix(data))?),
            PredictorModel::Neural(p) => Ok(p.predict_batch(&features_matrix(data))?),
            PredictorModel::Scalar(p) => Ok(vec![p.reserve; data.len()]),
        }
    }
}

/// A predictor file's contents: the model plus the feature transform it was
/// trained under, if any.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedPredictor {
    pub model: PredictorModel,
    pub standardizer: Option<Standardizer>,
}

impl SavedPredictor {
    /// Reserve prices for every record, applying the stored feature
    /// transform first when present.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>, HarnessError> {
        match &self.standardizer {
            Some(std) => self.model.predict_raw(&std.apply(data)),
            None => self.model.predict_raw(data),
        }
    }

    pub fn into_linear(self) -> Result<LinearPredictor, HarnessError> {
        match self.model {
            PredictorModel::Linear(p) => Ok(p),
            other => Err(HarnessError::KindMismatch {
                found: other.kind().into(),
                expected: "linear".into(),
            }),
        }
    }

    pub fn into_kernel(self) -> Result<KernelPredictor, HarnessError> {
        match self.model {
            PredictorModel::Kernel(p) => Ok(p),
            other => Err(HarnessError::KindMismatch {
                found: other.kind().into(),
                expected: "kernel".into(),
            }),
        }
    }

    pub fn into_neural(self) -> Result<NeuralPredictor, HarnessError> {
        match self.model {
            PredictorModel::Neural(p) => Ok(p),
            other => Err(HarnessError::KindMismatch {
                found: other.kind().into(),
                expected: "neural".into(),
            }),
        }
    }
}

fn push_values(out: &mut String, key: &str, values: impl IntoIterator<Item = f64>) {
    out.push_str(key);
    for v in values {
        let _ = write!(out, " {v:.16e}");
    }
    out.push('\n');
}

/// Writes a predictor (and optional standardizer) as a tagged text file.
pub fn save_predictor(
    model: &PredictorModel,
    standardizer: Option<&Standardizer>,
    path: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let mut out = String::new();
    let _ = writeln!(out, "predictor {}", model.kind());
    match model {
        PredictorModel::Linear(p) => {
            let _ = writeln!(out, "dim {}", p.dim());
            push_values(&mut out, "weights", p.weights.iter().copied());
            push_values(&mut out, "intercept", [p.intercept]);
        }
        PredictorModel::Kernel(p) => {
            let _ = writeln!(out, "degree {}", p.degree);
            let _ = writeln!(out, "dim {}", p.train_features.ncols());
            let _ = writeln!(out, "ntrain {}", p.train_features.nrows());
            push_values(&mut out, "alpha", p.alpha.iter().copied());
            for i in 0..p.train_features.nrows() {
                push_values(&mut out, "row", p.train_features.row(i).iter().copied());
            }
        }
        PredictorModel::Neural(p) => {
            let _ = writeln!(out, "hidden {}", p.hidden_units());
            let _ = writeln!(out, "dim {}", p.dim());
            for i in 0..p.hidden_units() {
                push_values(&mut out, "w1", p.w1.row(i).iter().copied());
            }
            push_values(&mut out, "w2", p.w2.iter().copied());
        }
        PredictorModel::Scalar(p) => {
            push_values(&mut out, "reserve", [p.reserve]);
        }
    }
    if let Some(std) = standardizer {
        out.push_str("standardizer\n");
        push_values(&mut out, "means", std.means.iter().copied());
        push_values(&mut out, "stds", std.stds.iter().copied());
    }
    std::fs::write(path, out).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

struct Reader<'a> {
    lines: std::str::Lines<'a>,
    path: String,
}

impl<'a> Reader<'a> {
    fn next_line(&mut self) -> Result<&'a str, HarnessError> {
        self.lines.next().ok_or_else(|| HarnessError::MalformedFile {
            path: self.path.clone(),
            message: "unexpected end of file".into(),
        })
    }

    fn malformed(&self, message: impl Into<String>) -> HarnessError {
        HarnessError::MalformedFile {
            path: self.path.clone(),
            message: message.into(),
        }
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>, HarnessError> {
        let line = self.next_line()?;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some(k) if k == key => Ok(parts.collect()),
            other => Err(self.malformed(format!("expected key {key:?}, got {other:?}"))),
        }
    }

    fn keyed_usize(&mut self, key: &str) -> Result<usize, HarnessError> {
        let fields = self.keyed(key)?;
        if fields.len() != 1 {
            return Err(self.malformed(format!("{key} takes one value")));
        }
        fields[0]
            .parse()
            .map_err(|_| self.malformed(format!("{key}: not an integer: {:?}", fields[0])))
    }

    fn keyed_floats(&mut self, key: &str, expected: usize) -> Result<Vec<f64>, HarnessError> {
        let fields = self.keyed(key)?;
        if fields.len() != expected {
            return Err(self.malformed(format!(
                "{key}: expected {expected} values, got {}",
                fields.len()
            )));
        }
        fields
            .iter()
            .map(|f| {
                f.parse()
                    .map_err(|_| self.malformed(format!("{key}: not a number: {f:?}")))
            })
            .collect()
    }
}

/// Reads a predictor file written by [`save_predictor`].
pub fn load_predictor(path: impl AsRef<Path>) -> Result<SavedPredictor, HarnessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = Reader {
        lines: text.lines(),
        path: path.display().to_string(),
    };

    let kind_fields = reader.keyed("predictor")?;
    if kind_fields.len() != 1 {
        return Err(reader.malformed("predictor line takes one kind tag"));
    }
    let model = match kind_fields[0] {
        "linear" => {
            let dim = reader.keyed_usize("dim")?;
            let weights = reader.keyed_floats("weights", dim)?;
            let intercept = reader.keyed_floats("intercept", 1)?[0];
            PredictorModel::Linear(LinearPredictor {
                weights: DVector::from_vec(weights),
                intercept,
            })
        }
        "kernel" => {
            let degree = reader.keyed_usize("degree")? as u32;
            let dim = reader.keyed_usize("dim")?;
            let ntrain = reader.keyed_usize("ntrain")?;
            let alpha = reader.keyed_floats("alpha", ntrain)?;
            let mut rows = Vec::with_capacity(ntrain);
            for _ in 0..ntrain {
                rows.push(reader.keyed_floats("row", dim)?);
            }
            let train_features = DMatrix::from_fn(ntrain, dim, |i, j| rows[i][j]);
            PredictorModel::Kernel(KernelPredictor {
                alpha: DVector::from_vec(alpha),
                train_features,
                degree,
            })
        }
        "neural" => {
            let hidden = reader.keyed_usize("hidden")?;
            let dim = reader.keyed_usize("dim")?;
            let mut rows = Vec::with_capacity(hidden);
            for _ in 0..hidden {
                rows.push(reader.keyed_floats("w1", dim)?);
            }
            let w2 = reader.keyed_floats("w2", hidden)?;
            PredictorModel::Neural(NeuralPredictor {
                w1: DMatrix::from_fn(hidden, dim, |i, j| rows[i][j]),
                w2: DVector::from_vec(w2),
            })
        }
        "scalar" => PredictorModel::Scalar(ScalarPolicy {
            reserve: reader.keyed_floats("reserve", 1)?[0],
        }),
        other => {
            return Err(reader.malformed(format!("unknown predictor kind {other:?}")));
        }
    };

    let standardizer = match reader.lines.next() {
        Some(line) if line.trim() == "standardizer" => {
            let dim = match &model {
                PredictorModel::Linear(p) => p.dim(),
                PredictorModel::Kernel(p) => p.train_features.ncols(),
                PredictorModel::Neural(p) => p.dim(),
                PredictorModel::Scalar(_) => {
                    return Err(reader.malformed("scalar policies take no standardizer"))
                }
            };
            Some(Standardizer {
                means: reader.keyed_floats("means", dim)?,
                stds: reader.keyed_floats("stds", dim)?,
            })
        }
        Some(line) if line.trim().is_empty() => None,
        Some(line) => {
            return Err(reader.malformed(format!("unexpected trailing line {line:?}")));
        }
        None => None,
    };

    Ok(SavedPredictor {
        model,
        standardizer,
    })
}
