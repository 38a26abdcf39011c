//! Logistic-regression variant of the weighted estimator.
//!
//! Each task is fitted by maximum likelihood (Newton/IRLS with step-halving,
//! started at zero). The noise covariance is diagonal with entries
//! `σ̂_k² = N⁻¹ Σᵢ p̂_ik(1 − p̂_ik)`; weights then come from the same closed form
//! as the linear model.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::data::{CoefficientMatrix, MultiTaskDataset, NoiseCovariance, TaskKind};
use crate::error::{Error, Result};
use crate::ols::TaskFit;
use crate::scalar::Real;
use crate::weights::{
    feasible_weight_solution, weighted_estimate, WeightSolution, WeightedEstimate,
};

/// Coefficient norm beyond which the MLE is declared non-existent.
pub const SEPARATION_NORM: f64 = 1e4;
/// Linear predictors beyond this magnitude saturate the logistic function in
/// double precision; reaching it means the likelihood is still climbing
/// towards a boundary.
pub const SATURATION_ETA: f64 = 35.0;
const MAX_HALVINGS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MleFit<T: Real> {
    pub beta: DVector<T>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: T,
}

#[derive(Debug, Clone)]
pub struct LogisticFit<T: Real> {
    pub b_hat: CoefficientMatrix<T>,
    pub sigma_eps_hat: NoiseCovariance<T>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
}

impl<T: Real> LogisticFit<T> {
    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

impl<T: Real> TaskFit<T> for LogisticFit<T> {
    fn coefficients(&self) -> &CoefficientMatrix<T> {
        &self.b_hat
    }

    fn noise_covariance(&self) -> &NoiseCovariance<T> {
        &self.sigma_eps_hat
    }
}

#[derive(Debug, Clone)]
pub struct WeightedLogistic<T: Real> {
    pub fit: LogisticFit<T>,
    pub solution: WeightSolution<T>,
    pub estimate: WeightedEstimate<T>,
}

/// `(p, 1 − p)` for `p = 1 / (1 + e^{−η})`, each computed without cancellation.
#[inline]
pub(crate) fn sigmoid_pair<T: Real>(eta: T) -> (T, T) {
    let one = T::one();
    (one / (one + (-eta).exp()), one / (one + eta.exp()))
}

/// `log(1 + e^η)`.
#[inline]
fn softplus<T: Real>(eta: T) -> T {
    if eta > T::zero() {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn log_likelihood<T: Real>(x: &DMatrix<T>, y: &[T], beta: &DVector<T>) -> T {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .fold(T::zero(), |acc, (&e, &yi)| acc + yi * e - softplus(e))
}

/// Maximum-likelihood logistic fit of response column `task`.
pub fn fit_logistic_mle<T: Real>(
    data: &MultiTaskDataset<T>,
    task: usize,
    opts: IrlsOptions,
) -> Result<MleFit<T>> {
    if task > data.k_aux() {
        return Err(Error::dims(format!("task {task} out of range")));
    }
    if data.task_kinds()[task] != TaskKind::Binary {
        return Err(Error::NonBinaryTask { task });
    }
    if data.n() <= data.p() {
        return Err(Error::TooFewSamples {
            n: data.n(),
            p: data.p(),
        });
    }
    let x = data.covariates();
    let y: Vec<T> = data.responses().column(task).iter().copied().collect();
    let (n, p) = (data.n(), data.p());
    let tol = T::lit(opts.tol);
    let saturation = T::lit(SATURATION_ETA);
    let separation_norm = T::lit(SEPARATION_NORM);

    let mut beta = DVector::<T>::zeros(p);
    let mut ll = log_likelihood(x, &y, &beta);
    let mut converged = false;
    let mut iterations = 0;
    let mut weighted_x = DMatrix::<T>::zeros(n, p);

    while iterations < opts.max_iter {
        iterations += 1;
        let eta = x * &beta;
        let max_eta = eta.iter().fold(T::zero(), |m, e| m.max(e.abs()));
        if max_eta > saturation {
            return Err(Error::Separation {
                task,
                norm: beta.norm().to_f64_lossy(),
            });
        }
        let mut resid = DVector::<T>::zeros(n);
        for i in 0..n {
            let (pi, qi) = sigmoid_pair(eta[i]);
            resid[i] = y[i] - pi;
            let wi = pi * qi;
            for j in 0..p {
                weighted_x[(i, j)] = x[(i, j)] * wi;
            }
        }
        let score = x.tr_mul(&resid);
        let hessian = crate::linalg::symmetrize(&weighted_x.tr_mul(x));
        let step = match Cholesky::new(hessian) {
            Some(ch) => ch.solve(&score),
            None => {
                return Err(Error::Separation {
                    task,
                    norm: beta.norm().to_f64_lossy(),
                })
            }
        };

        // Near the optimum the log-likelihood change drowns in round-off, so
        // a step counts as an ascent unless it loses more than that.
        let slack = T::tol(1e-13) * (T::one() + ll.abs());
        let mut scale = T::one();
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = &beta + &step * scale;
            let cand_ll = log_likelihood(x, &y, &candidate);
            if cand_ll >= ll - slack {
                accepted = Some((candidate, cand_ll));
                break;
            }
            scale *= T::lit(0.5);
        }
        let Some((next, next_ll)) = accepted else {
            // No ascent direction left at working precision.
            converged = true;
            break;
        };
        let moved = (&next - &beta).amax();
        beta = next;
        ll = next_ll;
        if beta.norm() > separation_norm {
            return Err(Error::Separation {
                task,
                norm: beta.norm().to_f64_lossy(),
            });
        }
        if moved <= tol {
            converged = true;
            break;
        }
    }
    Ok(MleFit {
        beta,
        converged,
        iterations,
        log_likelihood: ll,
    })
}

/// Diagonal `Σ̂_ε` with `σ̂_k² = N⁻¹ Σᵢ p̂_ik(1 − p̂_ik)`; off-diagonals are zero.
pub fn logistic_noise_variance<T: Real>(
    data: &MultiTaskDataset<T>,
    b_hat: &CoefficientMatrix<T>,
) -> Result<NoiseCovariance<T>> {
    if b_hat.p() != data.p() || b_hat.n_tasks() != data.k_aux() + 1 {
        return Err(Error::dims(format!(
            "B̂ is {}×{}, dataset has p = {} and {} tasks",
            b_hat.p(),
            b_hat.n_tasks(),
            data.p(),
            data.k_aux() + 1
        )));
    }
    let eta = data.covariates() * b_hat.entries();
    let inv_n = T::one() / T::from_usize_lossy(data.n());
    let variances: Vec<T> = eta
        .column_iter()
        .map(|col| {
            col.iter().fold(T::zero(), |acc, &e| {
                let (p, q) = sigmoid_pair(e);
                acc + p * q
            }) * inv_n
        })
        .collect();
    NoiseCovariance::diagonal(&variances)
}

/// Per-task MLEs for every response plus the diagonal noise variance.
pub fn fit_logistic_tasks<T: Real>(
    data: &MultiTaskDataset<T>,
    opts: IrlsOptions,
) -> Result<LogisticFit<T>> {
    let fits = (0..=data.k_aux())
        .into_par_iter()
        .map(|k| fit_logistic_mle(data, k, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut b = DMatrix::zeros(data.p(), fits.len());
    for (k, f) in fits.iter().enumerate() {
        b.set_column(k, &f.beta);
    }
    let b_hat = CoefficientMatrix::new(b)?;
    let sigma_eps_hat = logistic_noise_variance(data, &b_hat)?;
    Ok(LogisticFit {
        b_hat,
        sigma_eps_hat,
        converged: fits.iter().map(|f| f.converged).collect(),
        iterations: fits.iter().map(|f| f.iterations).collect(),
    })
}

/// Feasible weighted estimator for all-binary data. Tasks that hit the
/// iteration cap are flagged in `fit.converged`, not rejected.
pub fn fit_weighted_logistic<T: Real>(
    data: &MultiTaskDataset<T>,
    d: usize,
    opts: IrlsOptions,
) -> Result<WeightedLogistic<T>> {
    if let Some(task) = data
        .task_kinds()
        .iter()
        .position(|k| *k != TaskKind::Binary)
    {
        return Err(Error::NonBinaryTask { task });
    }
    let fit = fit_logistic_tasks(data, opts)?;
    let solution = feasible_weight_solution(&fit, d)?;
    let estimate = weighted_estimate(&fit, &solution.weight)?;
    Ok(WeightedLogistic {
        fit,
        solution,
        estimate,
    })
}
