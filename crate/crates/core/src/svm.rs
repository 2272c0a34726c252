//! C-SVM on precomputed kernels, trained by SMO, with one-vs-one voting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;

const TAU: f64 = 1e-12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SvmError {
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("kernel matrix has non-finite entries")]
    NonFinite,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("C must be positive and finite, got {0}")]
    BadC(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvmConfig {
    pub c: f64,
    /// Stop once the maximal KKT violation drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for CsvmConfig {
    fn default() -> Self {
        Self { c: 1.0, tolerance: 1e-3, max_iterations: 10_000_000 }
    }
}

/// Ten log-spaced values from 1e-4 to 1e4, endpoints exact.
pub fn c_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (0..10).map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 9.0)).collect();
    grid[0] = 1e-4;
    grid[9] = 1e4;
    grid
}

/// Solution of one binary dual problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub alpha: Vec<f64>,
    /// +1 / -1 per training point.
    pub y: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub iterations: usize,
    /// Dual objective after each SMO step (index 0 is the start, value 0).
    pub objective: Vec<f64>,
    pub converged: bool,
}

impl BinaryModel {
    pub fn support_vectors(&self) -> Vec<usize> {
        (0..self.alpha.len()).filter(|&i| self.alpha[i] > 0.0).collect()
    }

    /// `sum_i alpha_i y_i k_i + b` for one row of kernel values against the
    /// training points.
    pub fn decision(&self, kernel_row: &[f64]) -> f64 {
        self.alpha
            .iter()
            .zip(&self.y)
            .zip(kernel_row)
            .filter(|((a, _), _)| **a > 0.0)
            .map(|((a, y), k)| a * y * k)
            .sum::<f64>()
            + self.bias
    }

    /// `|sum alpha_i y_i|`.
    pub fn equality_residual(&self) -> f64 {
        self.alpha.iter().zip(&self.y).map(|(a, y)| a * y).sum::<f64>().abs()
    }
}

fn check_kernel(k: &Matrix<f64>, n: usize) -> Result<(), SvmError> {
    if k.shape() != (n, n) {
        return Err(SvmError::Shape(format!("kernel is {:?}, labels {n}", k.shape())));
    }
    if !k.all_finite() {
        return Err(SvmError::NonFinite);
    }
    Ok(())
}

/// Trains on a square kernel matrix with labels `+1` / `-1`.
pub fn smo_train(k: &Matrix<f64>, y: &[f64], config: &CsvmConfig) -> Result<BinaryModel, SvmError> {
    let n = y.len();
    check_kernel(k, n)?;
    let c = config.c;
    if !(c > 0.0 && c.is_finite()) {
        return Err(SvmError::BadC(c));
    }
    if !y.iter().any(|&v| v > 0.0) || !y.iter().any(|&v| v < 0.0) {
        return Err(SvmError::SingleClass);
    }
    let q = |i: usize, j: usize| y[i] * y[j] * k[(i, j)];
    let mut alpha = vec![0.0; n];
    // gradient of 0.5 a'Qa - e'a
    let mut grad = vec![-1.0; n];
    let mut objective = vec![0.0];
    let mut iterations = 0;
    let mut converged = false;
    let is_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let is_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    while iterations < config.max_iterations {
        let mut i = usize::MAX;
        let mut g_max = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut g_min = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if is_up(alpha[t], y[t]) && v > g_max {
                g_max = v;
                i = t;
            }
            if is_low(alpha[t], y[t]) && v < g_min {
                g_min = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || g_max - g_min < config.tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)];
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
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
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        // dual = -(primal form); change from the old gradient and the step
        let df = grad[i] * di + grad[j] * dj + 0.5 * (q(i, i) * di * di + q(j, j) * dj * dj) + q(i, j) * di * dj;
        objective.push(objective.last().copied().unwrap_or(0.0) - df);
        for (t, g) in grad.iter_mut().enumerate() {
            *g += q(t, i) * di + q(t, j) * dj;
        }
    }
    if !converged {
        log::warn!("SMO stopped after {iterations} iterations without meeting tolerance {}", config.tolerance);
    }

    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let (mut free, mut free_sum) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 { free_sum / free as f64 } else { (ub + lb) / 2.0 };
    Ok(BinaryModel { alpha, y: y.to_vec(), bias: -rho, c, iterations, objective, converged })
}

/// Per-point KKT violation of a trained model, using margins
/// `y_i f(x_i)`: zero for points that satisfy their condition.
pub fn kkt_residuals(k: &Matrix<f64>, model: &BinaryModel) -> Vec<f64> {
    (0..model.alpha.len())
        .map(|i| {
            let m = model.y[i] * model.decision(k.row(i));
            let a = model.alpha[i];
            if a <= 0.0 {
                (1.0 - m).max(0.0)
            } else if a >= model.c {
                (m - 1.0).max(0.0)
            } else {
                (m - 1.0).abs()
            }
        })
        .collect()
}

/// One binary model per class pair present in the training labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub classes: usize,
    pub pairs: Vec<PairModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    /// Class voted for by a nonnegative decision value.
    pub positive: usize,
    pub negative: usize,
    /// Positions in the training set that this model was fitted on.
    pub members: Vec<usize>,
    pub model: BinaryModel,
}

/// One-vs-one training; pairs are independent and fitted in parallel.
pub fn train_multiclass(
    k: &Matrix<f64>,
    labels: &[usize],
    classes: usize,
    config: &CsvmConfig,
) -> Result<SvmModel, SvmError> {
    check_kernel(k, labels.len())?;
    let present: Vec<usize> = (0..classes).filter(|c| labels.contains(c)).collect();
    if present.len() < 2 {
        return Err(SvmError::SingleClass);
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(SvmError::Shape(format!("label {bad} with {classes} classes")));
    }
    let pair_ids: Vec<(usize, usize)> =
        present.iter().enumerate().flat_map(|(a, &p)| present[a + 1..].iter().map(move |&q| (p, q))).collect();
    let pairs = pair_ids
        .par_iter()
        .map(|&(p, q)| {
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == p || labels[i] == q).collect();
            let sub = Matrix::from_fn(members.len(), members.len(), |a, b| k[(members[a], members[b])]);
            let y: Vec<f64> = members.iter().map(|&i| if labels[i] == p { 1.0 } else { -1.0 }).collect();
            smo_train(&sub, &y, config).map(|model| PairModel { positive: p, negative: q, members, model })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SvmModel { classes, pairs })
}

impl SvmModel {
    /// Labels for test points given their kernel values against every
    /// training point (`m x n_train`). Majority vote; ties go to the
    /// largest summed decision value, then to the smaller class.
    pub fn predict(&self, k_rows: &Matrix<f64>) -> Result<Vec<usize>, SvmError> {
        let n_train = self.pairs.iter().flat_map(|p| p.members.iter()).max().map_or(0, |m| m + 1);
        if k_rows.cols() < n_train {
            return Err(SvmError::Shape(format!("{} kernel columns for {n_train} training points", k_rows.cols())));
        }
        Ok((0..k_rows.rows())
            .map(|r| {
                let row = k_rows.row(r);
                let mut votes = vec![0usize; self.classes];
                let mut score = vec![0.0; self.classes];
                for p in &self.pairs {
                    let sub: Vec<f64> = p.members.iter().map(|&i| row[i]).collect();
                    let d = p.model.decision(&sub);
                    if d >= 0.0 {
                        votes[p.positive] += 1;
                    } else {
                        votes[p.negative] += 1;
                    }
                    score[p.positive] += d;
                    score[p.negative] -= d;
                }
                let mut best = 0;
                for c in 1..self.classes {
                    if votes[c] > votes[best] || (votes[c] == votes[best] && score[c] > score[best]) {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = c_grid();
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 1e-4);
        assert_eq!(g[9], 1e4);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert!((g[1].log10() + 4.0 - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn two_point_problem() {
        // dual: max a1 + a2 - (a1^2 + a2^2)/2 with a1 = a2 -> a = 1
        let k = Matrix::identity(2);
        let m = smo_train(&k, &[1.0, -1.0], &CsvmConfig { c: 10.0, ..Default::default() }).unwrap();
        assert!((m.alpha[0] - 1.0).abs() < 1e-12 && (m.alpha[1] - 1.0).abs() < 1e-12);
        assert!(m.bias.abs() < 1e-12);
        assert_eq!(m.support_vectors(), vec![0, 1]);
    }

    #[test]
    fn contradictory_duplicates_hit_the_bound() {
        let k = Matrix::from_vec(2, 2, vec![1.0; 4]);
        let m = smo_train(&k, &[1.0, -1.0], &CsvmConfig { c: 0.1, ..Default::default() }).unwrap();
        assert_eq!(m.alpha, vec![0.1, 0.1]);
    }

    #[test]
    fn errors() {
        let k = Matrix::identity(2);
        assert_eq!(smo_train(&k, &[1.0, 1.0], &CsvmConfig::default()), Err(SvmError::SingleClass));
        let mut bad = Matrix::identity(2);
        bad[(0, 1)] = f64::NAN;
        assert_eq!(smo_train(&bad, &[1.0, -1.0], &CsvmConfig::default()), Err(SvmError::NonFinite));
        assert_eq!(smo_train(&k, &[1.0, -1.0], &CsvmConfig { c: 0.0, ..Default::default() }), Err(SvmError::BadC(0.0)));
    }

    #[test]
    fn zero_decision_votes_positive() {
        let model = SvmModel {
            classes: 2,
            pairs: vec![PairModel {
                positive: 0,
                negative: 1,
                members: vec![0, 1],
                model: BinaryModel {
                    alpha: vec![0.0, 0.0],
                    y: vec![1.0, -1.0],
                    bias: 0.0,
                    c: 1.0,
                    iterations: 0,
                    objective: vec![0.0],
                    converged: true,
                },
            }],
        };
        assert_eq!(model.predict(&Matrix::zeros(1, 2)).unwrap(), vec![0]);
    }

    #[test]
    fn three_class_unanimous() {
        // one-hot features: class c sits on axis c
        let labels = vec![0, 0, 1, 1, 2, 2];
        let k = Matrix::from_fn(6, 6, |i, j| f64::from(u8::from(labels[i] == labels[j])));
        let model = train_multiclass(&k, &labels, 3, &CsvmConfig::default()).unwrap();
        assert_eq!(model.pairs.len(), 3);
        assert_eq!(model.predict(&k).unwrap(), labels);
    }
}
