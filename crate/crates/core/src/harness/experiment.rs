//! Replicated experiments: grid search over EM hyperparameters, seeded
//! train/validation/test splits, and aggregate reporting.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data_io::Standardizer;
use super::model_io::PredictorModel;
use super::HarnessError;
use crate::auction::{pct_of_max, total_revenue, Dataset};
use crate::baselines::{nof_fit, zero_policy};
use crate::em::{em_fit, EmConfig};
use crate::predictors::{KernelEmSolver, LinearEmSolver, NeuralEmSolver, SgdConfig};
use crate::simdata::{gen_simulated, split, SimConfig, SimVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    OvLinear,
    OvKernel,
    OvNeural,
    Nof,
    Zero,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::OvLinear => "ov-linear",
            Method::OvKernel => "ov-kernel",
            Method::OvNeural => "ov-neural",
            Method::Nof => "nof",
            Method::Zero => "zero",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ov-linear" => Ok(Method::OvLinear),
            "ov-kernel" => Ok(Method::OvKernel),
            "ov-neural" => Ok(Method::OvNeural),
            "nof" => Ok(Method::Nof),
            "zero" => Ok(Method::Zero),
            other => Err(format!(
                "unknown method {other:?} (expected ov-linear, ov-kernel, ov-neural, nof, zero)"
            )),
        }
    }
}

/// Hyperparameter grids. `sigma` entries are multipliers of the training
/// set's highest-bid standard deviation; everything else is used as-is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grids {
    pub sigma: Vec<f64>,
    pub lambda: Vec<f64>,
    pub degree: Vec<u32>,
    pub hidden_units: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub batch_size: Vec<usize>,
    pub epochs_per_mstep: Vec<usize>,
    pub patience: usize,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            sigma: vec![0.01, 0.05, 0.1, 0.5, 1.0],
            lambda: vec![1e-4, 1e-3, 1e-2, 1e-1, 1.0],
            degree: vec![2, 4],
            hidden_units: vec![5],
            learning_rate: vec![1e-3, 1e-2],
            batch_size: vec![32, 128],
            epochs_per_mstep: vec![1, 5],
            patience: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmSettings {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for EmSettings {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Simulated {
        variant: SimVariant,
        n_total: usize,
        dim: usize,
        noise_std: f64,
    },
    File {
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub method: Method,
    pub data: DataSource,
    pub split: SplitSizes,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub em: EmSettings,
}

fn default_replications() -> usize {
    10
}

/// Hyperparameters selected by grid search. Only the fields relevant to the
/// method are set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChosenParams {
    pub sigma: Option<f64>,
    pub lambda: Option<f64>,
    pub degree: Option<u32>,
    pub hidden_units: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs_per_mstep: Option<usize>,
}

/// One grid-search winner.
#[derive(Debug)]
pub struct FittedModel {
    pub params: ChosenParams,
    pub model: PredictorModel,
    pub valid_revenue: f64,
    pub standardizer: Option<Standardizer>,
}

fn sample_std(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 1.0;
    }
    let mean: f64 = values.iter().sum::<f64>() / n;
    let var: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    if std > 0.0 {
        std
    } else {
        1.0
    }
}

fn sorted(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    values
}

/// Fits one model per grid point and keeps the best validation revenue.
/// Candidates are enumerated with smaller `lambda` first, then smaller
/// `sigma`, and replacement is strict, so ties resolve toward smaller
/// `lambda` then smaller `sigma`. The winning fitted predictor is returned
/// as-is (no refit).
pub fn grid_search(
    method: Method,
    grids: &Grids,
    em: &EmSettings,
    train: &Dataset,
    valid: &Dataset,
    sgd_seed: u64,
) -> Result<FittedModel, HarnessError> {
    validate_grids(method, grids)?;
    match method {
        Method::Zero => {
            let policy = zero_policy();
            let valid_revenue =
                total_revenue(&vec![policy.reserve; valid.len()], valid)?;
            Ok(FittedModel {
                params: ChosenParams::default(),
                model: PredictorModel::Scalar(policy),
                valid_revenue,
                standardizer: None,
            })
        }
        Method::Nof => {
            let policy = nof_fit(train)?;
            let valid_revenue =
                total_revenue(&vec![policy.reserve; valid.len()], valid)?;
            Ok(FittedModel {
                params: ChosenParams::default(),
                model: PredictorModel::Scalar(policy),
                valid_revenue,
                standardizer: None,
            })
        }
        Method::OvLinear | Method::OvKernel | Method::OvNeural => {
            ov_grid_search(method, grids, em, train, valid, sgd_seed)
        }
    }
}

fn validate_grids(method: Method, grids: &Grids) -> Result<(), HarnessError> {
    let need = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(HarnessError::InvalidConfig(format!(
                "method {} requires a non-empty {what} grid",
                method.name()
            )))
        }
    };
    match method {
        Method::Nof | Method::Zero => Ok(()),
        Method::OvLinear => {
            need(!grids.sigma.is_empty(), "sigma")?;
            need(!grids.lambda.is_empty(), "lambda")
        }
        Method::OvKernel => {
            need(!grids.sigma.is_empty(), "sigma")?;
            need(!grids.lambda.is_empty(), "lambda")?;
            need(!grids.degree.is_empty(), "degree")
        }
        Method::OvNeural => {
            need(!grids.sigma.is_empty(), "sigma")?;
            need(!grids.lambda.is_empty(), "lambda")?;
            need(!grids.hidden_units.is_empty(), "hidden_units")?;
            need(!grids.learning_rate.is_empty(), "learning_rate")?;
            need(!grids.batch_size.is_empty(), "batch_size")?;
            need(!grids.epochs_per_mstep.is_empty(), "epochs_per_mstep")
        }
    }
}

struct GridPoint {
    params: ChosenParams,
    em_config: EmConfig,
}

fn ov_grid_points(method: Method, grids: &Grids, em: &EmSettings, bid_std: f64) -> Vec<GridPoint> {
    let lambdas = sorted(grids.lambda.clone());
    let sigmas = sorted(grids.sigma.clone());
    let mut points = Vec::new();
    let mut push = |lambda: f64, sigma_mult: f64, extra: ChosenParams| {
        let sigma = sigma_mult * bid_std;
        let mut em_config = EmConfig::new(sigma, lambda);
        em_config.tol = em.tol;
        em_config.max_iters = em.max_iters;
        points.push(GridPoint {
            params: ChosenParams {
                sigma: Some(sigma),
                lambda: Some(lambda),
                ..extra
            },
            em_config,
        });
    };
    match method {
        Method::OvLinear => {
            for &lambda in &lambdas {
                for &sigma in &sigmas {
                    push(lambda, sigma, ChosenParams::default());
                }
            }
        }
        Method::OvKernel => {
            for &degree in &grids.degree {
                for &lambda in &lambdas {
                    for &sigma in &sigmas {
                        push(
                            lambda,
                            sigma,
                            ChosenParams {
                                degree: Some(degree),
                                ..ChosenParams::default()
                            },
                        );
                    }
                }
            }
        }
        Method::OvNeural => {
            for &hidden in &grids.hidden_units {
                for &lr in &grids.learning_rate {
                    for &batch in &grids.batch_size {
                        for &epochs in &grids.epochs_per_mstep {
                            for &lambda in &lambdas {
                                for &sigma in &sigmas {
                                    push(
                                        lambda,
                                        sigma,
                                        ChosenParams {
                                            hidden_units: Some(hidden),
                                            learning_rate: Some(lr),
                                            batch_size: Some(batch),
                                            epochs_per_mstep: Some(epochs),
                                            ..ChosenParams::default()
                                        },
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
        Method::Nof | Method::Zero => unreachable!("baselines have no grid"),
    }
    points
}

fn ov_grid_search(
    method: Method,
    grids: &Grids,
    em: &EmSettings,
    train: &Dataset,
    valid: &Dataset,
    sgd_seed: u64,
) -> Result<FittedModel, HarnessError> {
    let bid_std = sample_std(&train.highest_bids());
    let points = ov_grid_points(method, grids, em, bid_std);
    let mut best: Option<FittedModel> = None;
    let mut last_error: Option<HarnessError> = None;

    for point in points {
        let fit = fit_point(method, &point, train, valid, sgd_seed);
        match fit {
            Ok(candidate) => {
                let better = best
                    .as_ref()
                    .map(|b| candidate.valid_revenue > b.valid_revenue)
                    .unwrap_or(true);
                if better {
                    best = Some(candidate);
                }
            }
            Err(e) => last_error = Some(e),
        }
    }
    best.ok_or_else(|| {
        HarnessError::AllPointsFailed(
            last_error
                .map(|e| e.to_string())
                .unwrap_or_else(|| "empty grid".into()),
        )
    })
}

fn fit_point(
    method: Method,
    point: &GridPoint,
    train: &Dataset,
    valid: &Dataset,
    sgd_seed: u64,
) -> Result<FittedModel, HarnessError> {
    let cfg = &point.em_config;
    let (model, valid_revenue) = match method {
        Method::OvLinear => {
            let mut solver = LinearEmSolver::new(train, valid, cfg.lambda, cfg.sigma)?;
            let (model, trace) = em_fit(&mut solver, train, valid, cfg)?;
            let rev = best_revenue(&trace);
            (PredictorModel::Linear(model), rev)
        }
        Method::OvKernel => {
            let degree = point.params.degree.expect("kernel point carries degree");
            let mut solver = KernelEmSolver::new(train, valid, degree, cfg.lambda, cfg.sigma)?;
            let (model, trace) = em_fit(&mut solver, train, valid, cfg)?;
            let rev = best_revenue(&trace);
            (PredictorModel::Kernel(model), rev)
        }
        Method::OvNeural => {
            let sgd = SgdConfig {
                learning_rate: point.params.learning_rate.expect("neural point"),
                batch_size: point.params.batch_size.expect("neural point"),
                epochs_per_mstep: point.params.epochs_per_mstep.expect("neural point"),
                patience: 5,
                seed: sgd_seed,
            };
            let hidden = point.params.hidden_units.expect("neural point");
            let mut solver =
                NeuralEmSolver::new(train, valid, hidden, cfg.lambda, cfg.sigma, sgd)?;
            let (model, trace) = em_fit(&mut solver, train, valid, cfg)?;
            let rev = best_revenue(&trace);
            (PredictorModel::Neural(model), rev)
        }
        Method::Nof | Method::Zero => unreachable!("baselines have no grid points"),
    };
    Ok(FittedModel {
        params: point.params.clone(),
        model,
        valid_revenue,
        standardizer: None,
    })
}

fn best_revenue(trace: &crate::em::EmTrace) -> f64 {
    trace
        .iterations
        .iter()
        .map(|it| it.valid_revenue)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// One replication's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult {
    pub replication: usize,
    pub test_pct_of_max: f64,
    pub valid_revenue: f64,
    pub chosen: ChosenParams,
}

/// Aggregated experiment outcome. Wall-clock timings are kept for the
/// human-readable table but excluded from the results file, which must be
/// byte-identical across reruns of the same config.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub replications: Vec<ReplicationResult>,
    pub mean_pct_of_max: f64,
    pub stderr_pct_of_max: f64,
    #[serde(skip)]
    pub wall_clock_secs: Vec<f64>,
}

impl ExperimentReport {
    /// Machine-readable results document (config echo, per-replication
    /// results, aggregate stats).
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Human-readable summary table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "method {}  replications {}  master seed {}",
            self.config.method.name(),
            self.config.replications,
            self.config.master_seed
        );
        let _ = writeln!(
            out,
            "{:>4}  {:>10}  {:>12}  {:>9}  params",
            "rep", "test %max", "valid rev", "secs"
        );
        for (r, wall) in self.replications.iter().zip(&self.wall_clock_secs) {
            let mut params = String::new();
            if let Some(s) = r.chosen.sigma {
                let _ = write!(params, "sigma={s:.4} ");
            }
            if let Some(l) = r.chosen.lambda {
                let _ = write!(params, "lambda={l:.0e} ");
            }
            if let Some(d) = r.chosen.degree {
                let _ = write!(params, "degree={d} ");
            }
            if let Some(h) = r.chosen.hidden_units {
                let _ = write!(params, "hidden={h} ");
            }
            if let Some(lr) = r.chosen.learning_rate {
                let _ = write!(params, "lr={lr:.0e} ");
            }
            if let Some(b) = r.chosen.batch_size {
                let _ = write!(params, "batch={b} ");
            }
            if let Some(e) = r.chosen.epochs_per_mstep {
                let _ = write!(params, "epochs={e}");
            }
            let _ = writeln!(
                out,
                "{:>4}  {:>10.2}  {:>12.3}  {:>9.2}  {}",
                r.replication, r.test_pct_of_max, r.valid_revenue, wall, params
            );
        }
        let _ = writeln!(
            out,
            "mean test pct_of_max {:.2} +- {:.2} (stderr over {} replications)",
            self.mean_pct_of_max,
            self.stderr_pct_of_max,
            self.replications.len()
        );
        out
    }
}

/// SplitMix64-style seed derivation. Salt 0 seeds the one-time data
/// generation; replication `r` uses salts `4r+2` and `4r+3` for its split
/// and its SGD stream.
fn mix_seed(master: u64, salt: u64) -> u64 {
    let mut z = master ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the configured experiment. The dataset is generated (or loaded)
/// once; each replication randomly re-creates the train/validation/test
/// split, grid-searches on train/validation, and scores the winner's test
/// percent-of-maximum. Mean and standard error aggregate over the
/// replications. Replications run in parallel; results are deterministic in
/// the master seed.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    if config.replications == 0 {
        return Err(HarnessError::InvalidConfig(
            "replications must be positive".into(),
        ));
    }
    validate_grids(config.method, &config.grids)?;

    let data = match &config.data {
        DataSource::File { path } => super::data_io::load_dataset(path)?,
        DataSource::Simulated {
            variant,
            n_total,
            dim,
            noise_std,
        } => gen_simulated(&SimConfig {
            n_total: *n_total,
            dim: *dim,
            noise_std: *noise_std,
            seed: mix_seed(config.master_seed, 0),
            variant: *variant,
        })?,
    };

    let outcomes: Vec<Result<(ReplicationResult, f64), HarnessError>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_replication(config, &data, rep))
        .collect();

    let mut replications = Vec::with_capacity(config.replications);
    let mut wall_clock_secs = Vec::with_capacity(config.replications);
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok((result, wall)) => {
                replications.push(result);
                wall_clock_secs.push(wall);
            }
            Err(e) => failures.push(e.to_string()),
        }
    }
    if !failures.is_empty() {
        return Err(HarnessError::InvalidConfig(format!(
            "{} of {} replications failed: {}",
            failures.len(),
            config.replications,
            failures.join("; ")
        )));
    }

    let n = replications.len() as f64;
    let mean: f64 = replications.iter().map(|r| r.test_pct_of_max).sum::<f64>() / n;
    let stderr = if replications.len() > 1 {
        let var: f64 = replications
            .iter()
            .map(|r| (r.test_pct_of_max - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };

    Ok(ExperimentReport {
        config: config.clone(),
        replications,
        mean_pct_of_max: mean,
        stderr_pct_of_max: stderr,
        wall_clock_secs,
    })
}

fn run_replication(
    config: &ExperimentConfig,
    data: &Dataset,
    rep: usize,
) -> Result<(ReplicationResult, f64), HarnessError> {
    let started = Instant::now();
    let salt = 4 * rep as u64;
    let split_seed = mix_seed(config.master_seed, salt + 2);
    let sgd_seed = mix_seed(config.master_seed, salt + 3);

    let (train, valid, test) = split(
        data,
        config.split.n_train,
        config.split.n_valid,
        config.split.n_test,
        split_seed,
    )?;

    let (train, valid, test, standardizer) = if config.standardize {
        let std = Standardizer::fit(&train);
        (
            std.apply(&train),
            std.apply(&valid),
            std.apply(&test),
            Some(std),
        )
    } else {
        (train, valid, test, None)
    };

    let mut fitted = grid_search(
        config.method,
        &config.grids,
        &config.em,
        &train,
        &valid,
        sgd_seed,
    )?;
    fitted.standardizer = standardizer;

    let reserves = fitted.model.predict_raw(&test)?;
    let test_pct = pct_of_max(&reserves, &test)?;

    Ok((
        ReplicationResult {
            replication: rep,
            test_pct_of_max: test_pct,
            valid_revenue: fitted.valid_revenue,
            chosen: fitted.params,
        },
        started.elapsed().as_secs_f64(),
    ))
}
