//! Supervised top-k feature selection (ANOVA F) and PCA, fitted per fold.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::FoldId;

#[derive(Debug, Error)]
pub enum ReduceError {
    #[error("feature selection needs both classes in the training data")]
    SingleClass,
    #[error("k = {k} is outside 1..={dim}")]
    KOutOfRange { k: usize, dim: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("variance target {0} is outside (0, 1]")]
    InvalidTarget(f64),
    #[error("row has {got} values, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot parse reduction `{0}` (expected none, kbest:<k> or pca[:<target>])")]
    Parse(String),
}

/// Which reduction to fit on each training fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReductionSpec {
    None,
    Kbest { k: usize },
    Pca { variance_target: f64 },
}

impl ReductionSpec {
    pub const DEFAULT_VARIANCE_TARGET: f64 = 0.95;
    /// Candidate subset sizes searched by the experiment grid.
    pub const K_GRID: [usize; 6] = [10, 20, 40, 80, 120, 250];

    pub fn pca() -> Self {
        ReductionSpec::Pca {
            variance_target: Self::DEFAULT_VARIANCE_TARGET,
        }
    }

    /// Clips `k` to the input dimensionality.
    pub fn clipped(self, dim: usize) -> Self {
        match self {
            ReductionSpec::Kbest { k } => ReductionSpec::Kbest { k: k.min(dim) },
            other => other,
        }
    }
}

impl fmt::Display for ReductionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReductionSpec::None => write!(f, "none"),
            ReductionSpec::Kbest { k } => write!(f, "kbest{k}"),
            ReductionSpec::Pca { variance_target } => write!(f, "pca{variance_target}"),
        }
    }
}

impl FromStr for ReductionSpec {
    type Err = ReduceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ReduceError::Parse(s.to_string());
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (s.trim(), None),
        };
        match (head, arg) {
            ("none", None) => Ok(ReductionSpec::None),
            ("kbest", Some(k)) => {
                let k: usize = k.parse().map_err(|_| bad())?;
                if k == 0 {
                    return Err(bad());
                }
                Ok(ReductionSpec::Kbest { k })
            }
            ("pca", None) => Ok(ReductionSpec::pca()),
            ("pca", Some(t)) => {
                let t: f64 = t.parse().map_err(|_| bad())?;
                if !(t > 0.0 && t <= 1.0) {
                    return Err(ReduceError::InvalidTarget(t));
                }
                Ok(ReductionSpec::Pca { variance_target: t })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FittedKind {
    Identity,
    Kbest {
        selected: Vec<usize>,
    },
    /// `components` are unit rows in descending-variance order.
    Pca {
        components: Vec<Vec<f64>>,
        column_means: Vec<f64>,
        explained_variance_ratios: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedReducer {
    pub fitted_on: FoldId,
    pub input_dim: usize,
    pub kind: FittedKind,
}

fn check_rows(x: &[Vec<f64>]) -> Result<usize, ReduceError> {
    let d = x
        .first()
        .map(Vec::len)
        .ok_or_else(|| ReduceError::DegenerateInput("no rows".into()))?;
    for row in x {
        if row.len() != d {
            return Err(ReduceError::DimensionMismatch {
                expected: d,
                got: row.len(),
            });
        }
    }
    Ok(d)
}

/// One-way ANOVA F statistic of every column between the two label groups.
/// Constant columns score 0; columns constant within each class but
/// differing between them score +inf.
pub fn anova_f(x: &[Vec<f64>], y: &[u8]) -> Result<Vec<f64>, ReduceError> {
    let d = check_rows(x)?;
    if y.len() != x.len() {
        return Err(ReduceError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let n1 = y.iter().filter(|&&l| l == 1).count();
    let n0 = y.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(ReduceError::SingleClass);
    }
    let n = y.len() as f64;
    let df_within = (y.len().saturating_sub(2)).max(1) as f64;
    let mut scores = Vec::with_capacity(d);
    for c in 0..d {
        let (mut s0, mut s1) = (0.0, 0.0);
        for (row, &l) in x.iter().zip(y) {
            if l == 1 {
                s1 += row[c];
            } else {
                s0 += row[c];
            }
        }
        let m1 = s1 / n1 as f64;
        let m0 = s0 / n0 as f64;
        let grand = (s0 + s1) / n;
        let mut within = 0.0;
        for (row, &l) in x.iter().zip(y) {
            let m = if l == 1 { m1 } else { m0 };
            within += (row[c] - m) * (row[c] - m);
        }
        let between = n1 as f64 * (m1 - grand).powi(2) + n0 as f64 * (m0 - grand).powi(2);
        let score = if between + within < 1e-12 {
            0.0
        } else if within == 0.0 {
            f64::INFINITY
        } else {
            between / (within / df_within)
        };
        scores.push(score);
    }
    Ok(scores)
}

/// Keeps the `k` columns with the highest F score (ties to the lower index).
pub fn kbest_fit(
    x: &[Vec<f64>],
    y: &[u8],
    k: usize,
    fitted_on: FoldId,
) -> Result<FittedReducer, ReduceError> {
    let d = check_rows(x)?;
    if k == 0 || k > d {
        return Err(ReduceError::KOutOfRange { k, dim: d });
    }
    let scores = anova_f(x, y)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut selected = order[..k].to_vec();
    selected.sort_unstable();
    Ok(FittedReducer {
        fitted_on,
        input_dim: d,
        kind: FittedKind::Kbest { selected },
    })
}

/// Principal components retaining at least `variance_target` of the
/// variance. Uses the n x n Gram matrix when there are fewer rows than
/// columns, the d x d covariance otherwise.
pub fn pca_fit(
    x: &[Vec<f64>],
    variance_target: f64,
    fitted_on: FoldId,
) -> Result<FittedReducer, ReduceError> {
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(ReduceError::InvalidTarget(variance_target));
    }
    let d = check_rows(x)?;
    let n = x.len();
    if n < 2 {
        return Err(ReduceError::DegenerateInput("PCA needs at least two rows".into()));
    }
    let mut means = vec![0.0; d];
    for row in x {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| x[i][j] - means[j]);
    let scale = (n - 1) as f64;
    if centered.iter().all(|v| *v == 0.0) {
        return Err(ReduceError::DegenerateInput("all rows are identical".into()));
    }

    // (eigenvalue of the covariance, unit component) pairs.
    let mut pairs: Vec<(f64, Vec<f64>)> = if n <= d {
        let gram = &centered * centered.transpose() / scale;
        let eig = SymmetricEigen::new(gram);
        eig.eigenvalues
            .iter()
            .zip(eig.eigenvectors.column_iter())
            .map(|(&lambda, u)| {
                let w = centered.transpose() * u;
                let norm = w.norm();
                let comp = if norm > 0.0 {
                    (w / norm).iter().copied().collect()
                } else {
                    vec![0.0; d]
                };
                (lambda.max(0.0), comp)
            })
            .collect()
    } else {
        let cov = centered.transpose() * &centered / scale;
        let eig = SymmetricEigen::new(cov);
        eig.eigenvalues
            .iter()
            .zip(eig.eigenvectors.column_iter())
            .map(|(&lambda, u)| (lambda.max(0.0), u.iter().copied().collect()))
            .collect()
    };
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let total: f64 = pairs.iter().map(|p| p.0).sum();
    if total <= 0.0 {
        return Err(ReduceError::DegenerateInput("zero total variance".into()));
    }
    let mut components = Vec::new();
    let mut ratios = Vec::new();
    let mut cumulative = 0.0;
    for (lambda, mut comp) in pairs {
        if lambda <= 0.0 {
            break;
        }
        let ratio = lambda / total;
        // Largest-magnitude coordinate positive (first one on ties).
        let lead = comp
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if v.abs() > comp[best].abs() { i } else { best });
        if comp[lead] < 0.0 {
            comp.iter_mut().for_each(|v| *v = -*v);
        }
        components.push(comp);
        ratios.push(ratio);
        cumulative += ratio;
        if cumulative >= variance_target - 1e-12 {
            break;
        }
    }
    Ok(FittedReducer {
        fitted_on,
        input_dim: d,
        kind: FittedKind::Pca {
            components,
            column_means: means,
            explained_variance_ratios: ratios,
        },
    })
}

/// Fits the reducer described by `spec` (k is clipped to the input width).
pub fn fit_reducer(
    spec: ReductionSpec,
    x: &[Vec<f64>],
    y: &[u8],
    fitted_on: FoldId,
) -> Result<FittedReducer, ReduceError> {
    let d = check_rows(x)?;
    match spec.clipped(d) {
        ReductionSpec::None => Ok(FittedReducer {
            fitted_on,
            input_dim: d,
            kind: FittedKind::Identity,
        }),
        ReductionSpec::Kbest { k } => kbest_fit(x, y, k, fitted_on),
        ReductionSpec::Pca { variance_target } => pca_fit(x, variance_target, fitted_on),
    }
}

impl FittedReducer {
    pub fn output_dim(&self) -> usize {
        match &self.kind {
            FittedKind::Identity => self.input_dim,
            FittedKind::Kbest { selected } => selected.len(),
            FittedKind::Pca { components, .. } => components.len(),
        }
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>, ReduceError> {
        if x.len() != self.input_dim {
            return Err(ReduceError::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(match &self.kind {
            FittedKind::Identity => x.to_vec(),
            FittedKind::Kbest { selected } => selected.iter().map(|&i| x[i]).collect(),
            FittedKind::Pca {
                components,
                column_means,
                ..
            } => components
                .iter()
                .map(|c| {
                    c.iter()
                        .zip(x.iter().zip(column_means))
                        .map(|(w, (v, m))| w * (v - m))
                        .sum()
                })
                .collect(),
        })
    }
}

/// Applies a fitted reducer row by row.
pub fn reduce_apply(r: &FittedReducer, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, ReduceError> {
    x.iter().map(|row| r.transform(row)).collect()
}
