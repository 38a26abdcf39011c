use nalgebra::{Cholesky, DVector};
use rand::Rng;
use rayon::prelude::*;

use super::generate::{
    ar_covariance, draw_bernoulli, draw_noise, gen_coefficients, gen_design, gen_low_quality_block,
    gen_noise_cov, RANK_THRESHOLD,
};
use super::rng::{substream, FIXED_MODEL, REPLICATION};
use super::{Scenario, SimConfig};
use crate::data::{CoefficientMatrix, MultiTaskDataset, NoiseCovariance, TaskKind, WeightVector};
use crate::error::{Error, Result};
use crate::glm::{fit_logistic_tasks, logistic_noise_variance, IrlsOptions};
use crate::linalg::{numerical_rank, sym_sqrt};
use crate::ols::{fit_multitask_ols, TaskEstimates, TaskFit};
use crate::weights::{feasible_weight_solution, oracle_weight, variance_functional};

/// Per-replication squared errors `‖β̂⁽⁰⁾ − β⁽⁰⁾‖²` for each estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct MseReport {
    pub config: SimConfig,
    pub labels: Vec<String>,
    /// `sq_errors[e][m]` for estimator `labels[e]` and replication `m`.
    pub sq_errors: Vec<Vec<f64>>,
    /// `‖β̂_ŵ* − β̂_w*‖₂` per replication.
    pub feasible_oracle_gap: Vec<f64>,
    /// Replications in which the feasible weight needed the pseudo-inverse.
    pub pseudo_inverse_reps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub mse: f64,
    pub sd: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; zero for a single value.
pub(crate) fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

impl MseReport {
    fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn errors(&self, label: &str) -> Option<&[f64]> {
        self.index(label).map(|i| self.sq_errors[i].as_slice())
    }

    /// Mean squared error over replications.
    pub fn mse(&self, label: &str) -> Option<f64> {
        self.errors(label).map(mean)
    }

    pub fn sd(&self, label: &str) -> Option<f64> {
        self.errors(label).map(sample_sd)
    }

    /// Monte-Carlo standard error of the MSE.
    pub fn std_error(&self, label: &str) -> Option<f64> {
        self.errors(label)
            .map(|e| sample_sd(e) / (e.len() as f64).sqrt())
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        self.labels
            .iter()
            .zip(&self.sq_errors)
            .map(|(label, e)| SummaryRow {
                label: label.clone(),
                mse: mean(e),
                sd: sample_sd(e),
            })
            .collect()
    }

    pub fn median_gap(&self) -> f64 {
        let mut g = self.feasible_oracle_gap.clone();
        g.sort_by(f64::total_cmp);
        let m = g.len();
        if m % 2 == 1 {
            g[m / 2]
        } else {
            0.5 * (g[m / 2 - 1] + g[m / 2])
        }
    }
}

pub const OLS: &str = "OLS";
pub const MLE: &str = "MLE";
pub const ORACLE: &str = "ORACLE";
pub const FEASIBLE: &str = "FEASIBLE";

pub fn feasible_prefix_label(k: usize) -> String {
    format!("FEASIBLE({k})")
}

struct RepOutcome {
    errors: Vec<f64>,
    gap: f64,
    pseudo_inverse: bool,
}

fn sq_dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm_squared()
}

fn labels(config: &SimConfig) -> Vec<String> {
    let base = if config.scenario == Scenario::Logistic {
        MLE
    } else {
        OLS
    };
    let mut labels = vec![base.to_owned(), ORACLE.to_owned(), FEASIBLE.to_owned()];
    if config.scenario == Scenario::LowQuality {
        labels.extend(config.k_grid.iter().map(|&k| feasible_prefix_label(k)));
    }
    labels
}

/// Draws `B` and `Σ_ε` for one replication (or for a fixed model).
fn draw_model<R: Rng + ?Sized>(
    config: &SimConfig,
    rng: &mut R,
) -> Result<(CoefficientMatrix<f64>, NoiseCovariance<f64>)> {
    let b1 = gen_coefficients(config.p, config.k_aux, config.d, rng)?;
    match config.scenario {
        Scenario::LowQuality => {
            let b = gen_low_quality_block(&b1, config.k_useless, rng)?;
            let sigma = gen_noise_cov(config.k_aux + config.k_useless, rng)?;
            Ok((b, sigma.scaled(config.noise_scale)))
        }
        _ => {
            let sigma = gen_noise_cov(config.k_aux, rng)?;
            Ok((b1, sigma.scaled(config.noise_scale)))
        }
    }
}

/// Rank used for the weights: the declared `d`, or the numerical rank of the
/// full matrix once low-quality tasks are appended.
fn working_rank(config: &SimConfig, b: &CoefficientMatrix<f64>) -> usize {
    match config.scenario {
        Scenario::LowQuality => numerical_rank(b.entries(), RANK_THRESHOLD),
        _ => config.d,
    }
}

fn linear_dataset<R: Rng + ?Sized>(
    config: &SimConfig,
    b: &CoefficientMatrix<f64>,
    sigma: &NoiseCovariance<f64>,
    rng: &mut R,
) -> Result<MultiTaskDataset<f64>> {
    let x = gen_design(config.n, config.p, config.ar_rho, rng)?;
    let eps = draw_noise(config.n, &sym_sqrt(sigma.entries()), rng);
    let y = &x * b.entries() + eps;
    let kinds = vec![TaskKind::Continuous; b.n_tasks()];
    MultiTaskDataset::new(x, y, kinds)
}

fn linear_replication<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<RepOutcome> {
    let (b, sigma) = draw_model(config, rng)?;
    let data = linear_dataset(config, &b, &sigma, rng)?;
    let fit = fit_multitask_ols(&data)?;
    let truth = b.primary();
    let d = working_rank(config, &b);

    let ols = fit.b_hat.primary();
    let oracle_est = fit.b_hat.entries() * oracle_weight(&b, &sigma, d)?.as_vector();
    let feasible = feasible_weight_solution(&fit, d)?;
    let feasible_est = fit.b_hat.entries() * feasible.weight.as_vector();

    let mut errors = vec![
        sq_dist(&ols, &truth),
        sq_dist(&oracle_est, &truth),
        sq_dist(&feasible_est, &truth),
    ];
    for &k in &config.k_grid {
        let sub = TaskEstimates::leading(&fit, k + 1)?;
        let d_k = numerical_rank(b.leading_tasks(k + 1)?.entries(), RANK_THRESHOLD);
        let w = feasible_weight_solution(&sub, d_k)?.weight;
        errors.push(sq_dist(&(sub.b_hat.entries() * w.as_vector()), &truth));
    }
    Ok(RepOutcome {
        errors,
        gap: (feasible_est - oracle_est).norm(),
        pseudo_inverse: feasible.pseudo_inverse,
    })
}

fn logistic_replication<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<RepOutcome> {
    let b = gen_coefficients(config.p, config.k_aux, config.d, rng)?;
    let x = gen_design(config.n, config.p, config.ar_rho, rng)?;
    let y = draw_bernoulli(&x, &b, rng);
    let data = MultiTaskDataset::new(x, y, vec![TaskKind::Binary; b.n_tasks()])?;
    let fit = fit_logistic_tasks(&data, IrlsOptions::default())?;
    if let Some(task) = fit.converged.iter().position(|c| !c) {
        return Err(Error::NotConverged {
            task,
            iterations: fit.iterations[task],
        });
    }
    // The population counterpart of the estimated variances: the same
    // average of p(1 − p), evaluated at the true coefficients.
    let sigma_true = logistic_noise_variance(&data, &b)?;
    let truth = b.primary();
    let mle = fit.b_hat.primary();
    let oracle_est = fit.b_hat.entries() * oracle_weight(&b, &sigma_true, config.d)?.as_vector();
    let feasible = feasible_weight_solution(&fit, config.d)?;
    let feasible_est = fit.coefficients().entries() * feasible.weight.as_vector();
    Ok(RepOutcome {
        errors: vec![
            sq_dist(&mle, &truth),
            sq_dist(&oracle_est, &truth),
            sq_dist(&feasible_est, &truth),
        ],
        gap: (feasible_est - oracle_est).norm(),
        pseudo_inverse: feasible.pseudo_inverse,
    })
}

/// Runs `M` independent replications of the configured scenario.
///
/// Replication `m` draws everything (`B`, `Σ_ε`, `X`, noise) from its own
/// substream of `config.seed`, so the report is bit-identical for a fixed
/// configuration regardless of scheduling.
pub fn run_replications(config: &SimConfig) -> Result<MseReport> {
    config.validate()?;
    let outcomes = (0..config.m_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(config.seed, REPLICATION, rep as u64);
            let result = match config.scenario {
                Scenario::Logistic => logistic_replication(config, &mut rng),
                _ => linear_replication(config, &mut rng),
            };
            result.map_err(|e| Error::Replication {
                rep,
                seed: config.seed,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = labels(config);
    let sq_errors = (0..labels.len())
        .map(|e| outcomes.iter().map(|o| o.errors[e]).collect())
        .collect();
    Ok(MseReport {
        config: config.clone(),
        labels,
        sq_errors,
        feasible_oracle_gap: outcomes.iter().map(|o| o.gap).collect(),
        pseudo_inverse_reps: outcomes.iter().filter(|o| o.pseudo_inverse).count(),
    })
}

/// Spread of `z_m = √N · αᵀ(β̂_ŵ* − β⁽⁰⁾)` against its limiting variance
/// `𝒫(w*) · αᵀΣ_xx⁻¹α`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalityReport {
    pub z: Vec<f64>,
    pub empirical_variance: f64,
    pub theoretical_variance: f64,
    pub ratio: f64,
}

/// `B` and `Σ_ε` are drawn once from the seed and held fixed; each
/// replication redraws the design and noise.
pub fn normality_check(config: &SimConfig, alpha: &[f64]) -> Result<NormalityReport> {
    config.validate()?;
    if matches!(config.scenario, Scenario::Logistic | Scenario::LowQuality) {
        return Err(Error::InvalidParameter(
            "normality check applies to the linear scenarios".into(),
        ));
    }
    if alpha.len() != config.p {
        return Err(Error::dims(format!(
            "alpha has length {}, p = {}",
            alpha.len(),
            config.p
        )));
    }
    if alpha.iter().all(|&a| a == 0.0) {
        return Err(Error::InvalidParameter("alpha must be non-zero".into()));
    }
    let alpha = DVector::from_column_slice(alpha);
    let mut model_rng = substream(config.seed, FIXED_MODEL, 0);
    let (b, sigma) = draw_model(config, &mut model_rng)?;
    let w_star: WeightVector<f64> = oracle_weight(&b, &sigma, config.d)?;
    let sigma_xx = ar_covariance(config.p, config.ar_rho);
    let chol = Cholesky::new(sigma_xx).ok_or(Error::SingularGram {
        condition: f64::INFINITY,
    })?;
    let quad = alpha.dot(&chol.solve(&alpha));
    let theoretical_variance = variance_functional(&w_star, &sigma)? * quad;

    let truth = b.primary();
    let root_n = (config.n as f64).sqrt();
    let z = (0..config.m_reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(config.seed, REPLICATION, rep as u64);
            let data = linear_dataset(config, &b, &sigma, &mut rng)?;
            let fit = fit_multitask_ols(&data)?;
            let w = feasible_weight_solution(&fit, config.d)?.weight;
            let est: DVector<f64> = fit.b_hat.entries() * w.as_vector();
            Ok(root_n * alpha.dot(&(est - &truth)))
        })
        .collect::<Result<Vec<f64>>>()?;
    let sd = sample_sd(&z);
    let empirical_variance = sd * sd;
    let ratio = if theoretical_variance > 0.0 {
        empirical_variance / theoretical_variance
    } else {
        f64::NAN
    };
    Ok(NormalityReport {
        z,
        empirical_variance,
        theoretical_variance,
        ratio,
    })
}
