//! Binary classifiers producing probability scores: a Random Forest and an
//! SMO-trained SVM with Platt-calibrated outputs.

mod forest;
mod platt;
mod svm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::FoldId;

pub use forest::{DecisionTree, RandomForest, TreeNode};
pub use platt::{fit_platt, PlattParams};
pub use svm::{kernel_matrix, rbf_scale_gamma, smo_solve, SmoOptions, SmoSolution, SvmModel};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training data contains a single class")]
    SingleClass,
    #[error("training data is empty")]
    EmptyInput,
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("SMO stopped after {iterations} iterations without meeting the KKT tolerance")]
    NoConvergence {
        iterations: usize,
        /// Best iterate reached before stopping.
        model: Box<TrainedModel>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Linear,
    /// Gaussian kernel; gamma follows the "scale" heuristic at fit time.
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Rf { n_trees: usize },
    Svm { kernel: Kernel, c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub seed: u64,
}

impl ModelSpec {
    pub const DEFAULT_TREES: usize = 250;

    pub fn rf(n_trees: usize, seed: u64) -> Self {
        ModelSpec {
            kind: ModelKind::Rf { n_trees },
            seed,
        }
    }

    pub fn svm(kernel: Kernel, c: f64) -> Self {
        ModelSpec {
            kind: ModelKind::Svm { kernel, c },
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        match self.kind {
            ModelKind::Rf { n_trees } if n_trees == 0 => {
                Err(ClassifierError::InvalidSpec("n_trees must be at least 1".into()))
            }
            ModelKind::Svm { c, .. } if !(c > 0.0 && c.is_finite()) => {
                Err(ClassifierError::InvalidSpec(format!("C must be positive, got {c}")))
            }
            _ => Ok(()),
        }
    }
}

/// Short name used in cell identifiers: `rf250`, `svm_linear`, `svm_rbf_c0.5`.
impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ModelKind::Rf { n_trees } => write!(f, "rf{n_trees}"),
            ModelKind::Svm { kernel, c } => {
                let k = match kernel {
                    Kernel::Linear => "linear",
                    Kernel::Rbf => "rbf",
                };
                if c == 1.0 {
                    write!(f, "svm_{k}")
                } else {
                    write!(f, "svm_{k}_c{c}")
                }
            }
        }
    }
}

/// Parses `rf`, `rf:<trees>`, `svm_linear`, `svm_rbf`, `svm_linear:<C>`.
/// The seed is left at 0 for the caller to fill in.
impl FromStr for ModelSpec {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ClassifierError::InvalidSpec(format!("cannot parse model `{s}`"));
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        let spec = match head {
            "rf" => {
                let n = match arg {
                    Some(a) => a.parse().map_err(|_| bad())?,
                    None => Self::DEFAULT_TREES,
                };
                ModelSpec::rf(n, 0)
            }
            "svm_linear" | "svm_rbf" => {
                let c = match arg {
                    Some(a) => a.parse().map_err(|_| bad())?,
                    None => 1.0,
                };
                let kernel = if head == "svm_linear" {
                    Kernel::Linear
                } else {
                    Kernel::Rbf
                };
                ModelSpec::svm(kernel, c)
            }
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelBody {
    Rf(RandomForest),
    Svm(SvmModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub fitted_on: FoldId,
    pub input_dim: usize,
    pub body: ModelBody,
}

fn check_training(x: &[Vec<f64>], y: &[u8]) -> Result<usize, ClassifierError> {
    let d = x.first().map(Vec::len).ok_or(ClassifierError::EmptyInput)?;
    if y.len() != x.len() {
        return Err(ClassifierError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    for row in x {
        if row.len() != d {
            return Err(ClassifierError::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
    }
    let positives = y.iter().filter(|&&l| l == 1).count();
    if positives == 0 || positives == y.len() {
        return Err(ClassifierError::SingleClass);
    }
    Ok(d)
}

/// Random Forest with Gini splits over ⌈√D⌉ candidate features per node.
pub fn rf_train(
    x: &[Vec<f64>],
    y: &[u8],
    n_trees: usize,
    seed: u64,
    fitted_on: FoldId,
) -> Result<TrainedModel, ClassifierError> {
    let spec = ModelSpec::rf(n_trees, seed);
    spec.validate()?;
    let d = check_training(x, y)?;
    Ok(TrainedModel {
        spec,
        fitted_on,
        input_dim: d,
        body: ModelBody::Rf(RandomForest::fit(x, y, n_trees, seed)),
    })
}

/// Soft-margin SVM solved by SMO, then Platt-calibrated on its own training
/// decision values. Labels are 0/1 and mapped to -1/+1 internally.
pub fn svm_train(
    x: &[Vec<f64>],
    y: &[u8],
    kernel: Kernel,
    c: f64,
    fitted_on: FoldId,
) -> Result<TrainedModel, ClassifierError> {
    let spec = ModelSpec::svm(kernel, c);
    spec.validate()?;
    let d = check_training(x, y)?;
    let (model, converged, iterations) = SvmModel::fit(x, y, kernel, c, &SmoOptions::default());
    let trained = TrainedModel {
        spec,
        fitted_on,
        input_dim: d,
        body: ModelBody::Svm(model),
    };
    if converged {
        Ok(trained)
    } else {
        Err(ClassifierError::NoConvergence {
            iterations,
            model: Box::new(trained),
        })
    }
}

/// Trains whichever model `spec` describes.
pub fn train(
    spec: &ModelSpec,
    x: &[Vec<f64>],
    y: &[u8],
    fitted_on: FoldId,
) -> Result<TrainedModel, ClassifierError> {
    match spec.kind {
        ModelKind::Rf { n_trees } => rf_train(x, y, n_trees, spec.seed, fitted_on),
        ModelKind::Svm { kernel, c } => svm_train(x, y, kernel, c, fitted_on).map(|mut m| {
            m.spec.seed = spec.seed;
            m
        }),
    }
}

impl TrainedModel {
    /// Probability-like score of the positive (phone) class in `[0, 1]`.
    pub fn predict_score(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        if x.len() != self.input_dim {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(match &self.body {
            ModelBody::Rf(forest) => forest.vote_fraction(x),
            ModelBody::Svm(svm) => svm.probability(x),
        })
    }

    pub fn predict_label(&self, x: &[f64]) -> Result<u8, ClassifierError> {
        Ok((self.predict_score(x)? >= 0.5) as u8)
    }
}
