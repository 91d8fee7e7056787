//! Soft-margin SVM dual solved by SMO with second-order working-set
//! selection (maximal violating pair for `i`, largest guaranteed objective
//! gain for `j`).

use serde::{Deserialize, Serialize};

use super::platt::{fit_platt, PlattParams};
use super::Kernel;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoOptions {
    /// Stop once the maximal KKT violation `m(α) - M(α)` is below this.
    pub tol: f64,
    /// Give up after this many consecutive iterations (in multiples of n)
    /// without an increase of the dual objective.
    pub stall_passes: usize,
    pub max_iter: usize,
}

impl Default for SmoOptions {
    fn default() -> Self {
        SmoOptions {
            tol: 1e-3,
            stall_passes: 10,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Intercept `b` of `f(x) = Σ α_i y_i K(x_i, x) + b`.
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Dual objective `Σα - ½ αᵀQα` after every iteration.
    pub objective_trace: Vec<f64>,
}

pub fn kernel_value(kernel: Kernel, gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    match kernel {
        Kernel::Linear => a.iter().zip(b).map(|(p, q)| p * q).sum(),
        Kernel::Rbf => {
            let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
            (-gamma * d2).exp()
        }
    }
}

pub fn kernel_matrix(kernel: Kernel, gamma: f64, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = kernel_value(kernel, gamma, &x[i], &x[j]);
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}

/// `1 / (D · mean column variance)`, falling back to 1 for constant data.
pub fn rbf_scale_gamma(x: &[Vec<f64>]) -> f64 {
    let n = x.len() as f64;
    let d = x.first().map_or(0, Vec::len);
    if d == 0 {
        return 1.0;
    }
    let mut total = 0.0;
    for c in 0..d {
        let m = x.iter().map(|r| r[c]).sum::<f64>() / n;
        total += x.iter().map(|r| (r[c] - m) * (r[c] - m)).sum::<f64>() / n;
    }
    let mean_var = total / d as f64;
    if mean_var > 0.0 && mean_var.is_finite() {
        1.0 / (d as f64 * mean_var)
    } else {
        1.0
    }
}

/// Maximises `Σα - ½ Σ α_i α_j y_i y_j K_ij` s.t. `0 ≤ α ≤ C`, `Σ α_i y_i = 0`.
/// `y` holds ±1.
pub fn smo_solve(k: &[Vec<f64>], y: &[f64], c: f64, opts: &SmoOptions) -> SmoSolution {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    // Gradient of ½αᵀQα - eᵀα.
    let mut grad = vec![-1.0; n];
    let is_upper = |a: f64| a >= c;
    let is_lower = |a: f64| a <= 0.0;
    let objective = |alpha: &[f64], grad: &[f64]| -> f64 {
        0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (1.0 - g)).sum::<f64>()
    };

    let mut trace = Vec::new();
    let mut best = 0.0f64;
    let mut stall = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        // i: maximal -y_t G_t over I_up.
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            let v = -y[t] * grad[t];
            let in_up = if y[t] > 0.0 { !is_upper(alpha[t]) } else { !is_lower(alpha[t]) };
            if in_up && v >= gmax {
                gmax = v;
                i = t;
            }
        }
        // j: second-order choice over I_low.
        let mut gmax2 = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut obj_min = f64::INFINITY;
        if i != usize::MAX {
            for t in 0..n {
                let in_low = if y[t] > 0.0 { !is_lower(alpha[t]) } else { !is_upper(alpha[t]) };
                if !in_low {
                    continue;
                }
                let v = y[t] * grad[t];
                gmax2 = gmax2.max(v);
                let grad_diff = gmax + v;
                if grad_diff > 0.0 {
                    let quad = k[i][i] + k[t][t] - 2.0 * k[i][t];
                    let obj = -(grad_diff * grad_diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j = t;
                    }
                }
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax + gmax2 < opts.tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (ai, aj) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * k[i][j];
        if y[i] != y[j] {
            let quad = (k[i][i] + k[j][j] + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (k[i][i] + k[j][j] - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k[i][t] * di + y[j] * k[j][t] * dj);
        }

        let obj = objective(&alpha, &grad);
        trace.push(obj);
        if obj > best + 1e-15 * best.abs().max(1.0) {
            best = obj;
            stall = 0;
        } else {
            stall += 1;
            if stall >= opts.stall_passes * n.max(1) {
                break;
            }
        }
    }

    // Intercept: average over free vectors, else midpoint of the feasible range.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if is_upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if is_lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum_free += yg;
            n_free += 1;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    };

    SmoSolution {
        alpha,
        bias: -rho,
        iterations,
        converged,
        objective_trace: trace,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub gamma: f64,
    pub c: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// `α_i · y_i` for each support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub platt: PlattParams,
    pub iterations: usize,
}

impl SvmModel {
    /// Returns the model, whether SMO converged, and the iteration count.
    pub(crate) fn fit(
        x: &[Vec<f64>],
        labels: &[u8],
        kernel: Kernel,
        c: f64,
        opts: &SmoOptions,
    ) -> (Self, bool, usize) {
        let gamma = match kernel {
            Kernel::Linear => 0.0,
            Kernel::Rbf => rbf_scale_gamma(x),
        };
        let y: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        let k = kernel_matrix(kernel, gamma, x);
        let sol = smo_solve(&k, &y, c, opts);

        let mut support_vectors = Vec::new();
        let mut coefficients = Vec::new();
        for (t, &a) in sol.alpha.iter().enumerate() {
            if a > 0.0 {
                support_vectors.push(x[t].clone());
                coefficients.push(a * y[t]);
            }
        }
        let decisions: Vec<f64> = (0..x.len())
            .map(|t| {
                sol.alpha
                    .iter()
                    .zip(&y)
                    .zip(&k[t])
                    .map(|((a, yy), kv)| a * yy * kv)
                    .sum::<f64>()
                    + sol.bias
            })
            .collect();
        let platt = fit_platt(&decisions, labels);
        let model = SvmModel {
            kernel,
            gamma,
            c,
            support_vectors,
            coefficients,
            bias: sol.bias,
            platt,
            iterations: sol.iterations,
        };
        (model, sol.converged, sol.iterations)
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, coef)| coef * kernel_value(self.kernel, self.gamma, sv, x))
            .sum::<f64>()
            + self.bias
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        self.platt.probability(self.decision(x))
    }
}
