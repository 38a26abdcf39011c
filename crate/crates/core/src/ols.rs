//! Per-task least squares and the residual noise covariance.

use nalgebra::{Cholesky, DMatrix};

use crate::data::{CoefficientMatrix, GramStatistics, MultiTaskDataset, NoiseCovariance};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen_desc, symmetrize};
use crate::scalar::Real;

/// Anything that provides a coefficient estimate `B̂` and a noise covariance
/// estimate `Σ̂_ε` for the weighting step.
pub trait TaskFit<T: Real> {
    fn coefficients(&self) -> &CoefficientMatrix<T>;
    fn noise_covariance(&self) -> &NoiseCovariance<T>;
}

/// A bare `(B̂, Σ̂_ε)` pair, e.g. a column subset of a larger fit.
#[derive(Debug, Clone)]
pub struct TaskEstimates<T: Real> {
    pub b_hat: CoefficientMatrix<T>,
    pub sigma_eps_hat: NoiseCovariance<T>,
}

impl<T: Real> TaskEstimates<T> {
    /// Primary task plus the first `count - 1` auxiliary tasks of `fit`.
    pub fn leading<F: TaskFit<T> + ?Sized>(fit: &F, count: usize) -> Result<Self> {
        Ok(Self {
            b_hat: fit.coefficients().leading_tasks(count)?,
            sigma_eps_hat: fit.noise_covariance().leading_block(count)?,
        })
    }
}

impl<T: Real> TaskFit<T> for TaskEstimates<T> {
    fn coefficients(&self) -> &CoefficientMatrix<T> {
        &self.b_hat
    }

    fn noise_covariance(&self) -> &NoiseCovariance<T> {
        &self.sigma_eps_hat
    }
}

#[derive(Debug, Clone)]
pub struct OlsFit<T: Real> {
    pub b_hat: CoefficientMatrix<T>,
    pub sigma_eps_hat: NoiseCovariance<T>,
    pub gram: GramStatistics<T>,
}

impl<T: Real> TaskFit<T> for OlsFit<T> {
    fn coefficients(&self) -> &CoefficientMatrix<T> {
        &self.b_hat
    }

    fn noise_covariance(&self) -> &NoiseCovariance<T> {
        &self.sigma_eps_hat
    }
}

/// Solves `Σ̂_xx B = Σ̂_xy` for every task at once.
pub fn fit_multitask_ols<T: Real>(data: &MultiTaskDataset<T>) -> Result<OlsFit<T>> {
    if data.n() <= data.p() {
        return Err(Error::TooFewSamples {
            n: data.n(),
            p: data.p(),
        });
    }
    let gram = GramStatistics::from_dataset(data);
    let (eigs, _) = sym_eigen_desc(&gram.sigma_xx_hat);
    let (top, bottom) = (eigs[0], eigs[eigs.len() - 1]);
    if !(bottom > T::tol(1e-12) * top) {
        let condition = if bottom > T::zero() {
            (top / bottom).to_f64_lossy()
        } else {
            f64::INFINITY
        };
        return Err(Error::SingularGram { condition });
    }
    let chol = Cholesky::new(gram.sigma_xx_hat.clone()).ok_or(Error::SingularGram {
        condition: (top / bottom).to_f64_lossy(),
    })?;
    let b_hat = CoefficientMatrix::new(chol.solve(&gram.sigma_xy_hat))?;
    let sigma_eps_hat = residual_covariance(data, &b_hat)?;
    Ok(OlsFit {
        b_hat,
        sigma_eps_hat,
        gram,
    })
}

/// `N⁻¹ Σᵢ rᵢ rᵢᵀ` with `rᵢ = Yᵢ − B̂ᵀXᵢ`.
pub fn residual_covariance<T: Real>(
    data: &MultiTaskDataset<T>,
    b_hat: &CoefficientMatrix<T>,
) -> Result<NoiseCovariance<T>> {
    let residuals = residuals(data, b_hat)?;
    let inv_n = T::one() / T::from_usize_lossy(data.n());
    Ok(NoiseCovariance::from_trusted(symmetrize(
        &(residuals.tr_mul(&residuals) * inv_n),
    )))
}

/// `N × (K + 1)` residual matrix `Y − X B̂`.
pub fn residuals<T: Real>(
    data: &MultiTaskDataset<T>,
    b_hat: &CoefficientMatrix<T>,
) -> Result<DMatrix<T>> {
    if b_hat.p() != data.p() || b_hat.n_tasks() != data.k_aux() + 1 {
        return Err(Error::dims(format!(
            "B̂ is {}×{}, dataset has p = {} and {} tasks",
            b_hat.p(),
            b_hat.n_tasks(),
            data.p(),
            data.k_aux() + 1
        )));
    }
    Ok(data.responses() - data.covariates() * b_hat.entries())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TaskKind;

    fn dataset(x: DMatrix<f64>, y: DMatrix<f64>) -> MultiTaskDataset<f64> {
        let k = y.ncols();
        MultiTaskDataset::new(x, y, vec![TaskKind::Continuous; k]).unwrap()
    }

    /// Direct 2×2 solve by Cramer's rule on the raw sums.
    fn cramer_2x2(x: &[[f64; 2]], y: &[f64]) -> [f64; 2] {
        let (mut a, mut b, mut c, mut u, mut v) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (row, &yi) in x.iter().zip(y) {
            a += row[0] * row[0];
            b += row[0] * row[1];
            c += row[1] * row[1];
            u += row[0] * yi;
            v += row[1] * yi;
        }
        let det = a * c - b * b;
        [(u * c - b * v) / det, (a * v - b * u) / det]
    }

    #[test]
    fn hand_dataset_matches_cramer() {
        let x = [[1.0, 0.5], [2.0, -1.0], [0.0, 1.5], [-1.0, 2.0], [3.0, 0.0]];
        let y = [1.2, 0.7, 2.1, 1.9, 3.3];
        let expected = cramer_2x2(&x, &y);
        let xm = DMatrix::from_fn(5, 2, |i, j| x[i][j]);
        let ym = DMatrix::from_column_slice(5, 1, &y);
        let fit = fit_multitask_ols(&dataset(xm, ym)).unwrap();
        for j in 0..2 {
            assert!((fit.b_hat.entries()[(j, 0)] - expected[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_samples() {
        let x = DMatrix::from_element(2, 3, 1.0);
        let y = DMatrix::from_element(2, 1, 1.0);
        assert!(matches!(
            fit_multitask_ols(&dataset(x, y)),
            Err(Error::TooFewSamples { n: 2, p: 3 })
        ));
    }

    #[test]
    fn collinear_covariates_are_singular() {
        let x = DMatrix::from_fn(6, 2, |i, _| i as f64 + 1.0);
        let y = DMatrix::from_fn(6, 1, |i, _| i as f64);
        assert!(matches!(
            fit_multitask_ols(&dataset(x, y)),
            Err(Error::SingularGram { .. })
        ));
    }

    #[test]
    fn residual_covariance_hand_case() {
        // One covariate that is orthogonal to nothing in particular; pass the
        // coefficient directly so the residuals are (1, −1, 0).
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 1.0]);
        let y = DMatrix::from_column_slice(3, 1, &[3.0, 1.0, 2.0]);
        let b = CoefficientMatrix::new(DMatrix::from_element(1, 1, 2.0)).unwrap();
        let s = residual_covariance(&dataset(x, y), &b).unwrap();
        assert!((s.entries()[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn duplicated_task_gives_equal_entries() {
        let x = DMatrix::from_fn(8, 2, |i, j| ((i * 3 + j * 5) % 7) as f64 - 3.0);
        let y0: Vec<f64> = (0..8).map(|i| (i as f64).sin()).collect();
        let y = DMatrix::from_fn(8, 2, |i, _| y0[i]);
        let fit = fit_multitask_ols(&dataset(x, y)).unwrap();
        let s = fit.sigma_eps_hat.entries();
        assert_eq!(s[(0, 0)], s[(1, 1)]);
        assert_eq!(s[(0, 0)], s[(0, 1)]);
    }

    #[test]
    fn dimension_mismatch_in_residuals() {
        let x = DMatrix::from_element(3, 1, 1.0);
        let y = DMatrix::from_element(3, 2, 1.0);
        let b = CoefficientMatrix::new(DMatrix::from_element(1, 3, 0.0)).unwrap();
        assert!(matches!(
            residual_covariance(&dataset(x, y), &b),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
