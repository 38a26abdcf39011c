//! Domain types shared across the crate and tabular ingestion.

mod csv_io;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::scalar::Real;

pub use csv_io::{
    fmt_num as csv_fmt_num, load_dataset, read_matrix_csv, write_dataset, write_matrix_csv, Schema,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Continuous,
    Binary,
}

/// `N` observations of `p` covariates paired with `K + 1` task responses.
/// Response column 0 is the primary task.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskDataset<T: Real> {
    covariates: DMatrix<T>,
    responses: DMatrix<T>,
    task_kinds: Vec<TaskKind>,
    covariate_names: Vec<String>,
    response_names: Vec<String>,
}

impl<T: Real> MultiTaskDataset<T> {
    /// Validates row counts and binary-column contents. `N > p` is checked at
    /// fit time, not here.
    pub fn new(
        covariates: DMatrix<T>,
        responses: DMatrix<T>,
        task_kinds: Vec<TaskKind>,
    ) -> Result<Self> {
        let covariate_names = (1..=covariates.ncols()).map(|j| format!("x{j}")).collect();
        let response_names = (0..responses.ncols()).map(|k| format!("y{k}")).collect();
        Self::with_names(
            covariates,
            responses,
            task_kinds,
            covariate_names,
            response_names,
        )
    }

    pub fn with_names(
        covariates: DMatrix<T>,
        responses: DMatrix<T>,
        task_kinds: Vec<TaskKind>,
        covariate_names: Vec<String>,
        response_names: Vec<String>,
    ) -> Result<Self> {
        if covariates.nrows() != responses.nrows() {
            return Err(Error::dims(format!(
                "{} covariate rows vs {} response rows",
                covariates.nrows(),
                responses.nrows()
            )));
        }
        if covariates.nrows() == 0 {
            return Err(Error::dims("dataset has no rows"));
        }
        if covariates.ncols() == 0 || responses.ncols() == 0 {
            return Err(Error::dims(
                "dataset needs at least one covariate and one response",
            ));
        }
        if task_kinds.len() != responses.ncols() {
            return Err(Error::dims(format!(
                "{} task kinds for {} response columns",
                task_kinds.len(),
                responses.ncols()
            )));
        }
        if covariate_names.len() != covariates.ncols() || response_names.len() != responses.ncols()
        {
            return Err(Error::dims("column names do not match matrix widths"));
        }
        for (k, kind) in task_kinds.iter().enumerate() {
            if *kind == TaskKind::Binary {
                for (i, &y) in responses.column(k).iter().enumerate() {
                    if y != T::zero() && y != T::one() {
                        return Err(Error::NonBinary {
                            row: i + 1,
                            column: response_names[k].clone(),
                            value: y.to_f64_lossy(),
                        });
                    }
                }
            }
        }
        Ok(Self {
            covariates,
            responses,
            task_kinds,
            covariate_names,
            response_names,
        })
    }

    pub fn n(&self) -> usize {
        self.covariates.nrows()
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    /// Number of auxiliary tasks `K`.
    pub fn k_aux(&self) -> usize {
        self.responses.ncols() - 1
    }

    pub fn covariates(&self) -> &DMatrix<T> {
        &self.covariates
    }

    pub fn responses(&self) -> &DMatrix<T> {
        &self.responses
    }

    pub fn task_kinds(&self) -> &[TaskKind] {
        &self.task_kinds
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn response_names(&self) -> &[String] {
        &self.response_names
    }

    /// Row subset in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            covariates: self.covariates.select_rows(rows),
            responses: self.responses.select_rows(rows),
            task_kinds: self.task_kinds.clone(),
            covariate_names: self.covariate_names.clone(),
            response_names: self.response_names.clone(),
        }
    }

    /// Response-column subset; `tasks[0]` becomes the new primary task.
    pub fn select_tasks(&self, tasks: &[usize]) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::dims("task selection is empty"));
        }
        if let Some(&bad) = tasks.iter().find(|&&k| k >= self.responses.ncols()) {
            return Err(Error::dims(format!("task index {bad} out of range")));
        }
        Ok(Self {
            covariates: self.covariates.clone(),
            responses: self.responses.select_columns(tasks),
            task_kinds: tasks.iter().map(|&k| self.task_kinds[k]).collect(),
            covariate_names: self.covariate_names.clone(),
            response_names: tasks
                .iter()
                .map(|&k| self.response_names[k].clone())
                .collect(),
        })
    }
}

/// The `p × (K + 1)` coefficient matrix `B`; column 0 is the primary
/// coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix<T: Real> {
    entries: DMatrix<T>,
    declared_rank: Option<usize>,
}

impl<T: Real> CoefficientMatrix<T> {
    pub fn new(entries: DMatrix<T>) -> Result<Self> {
        if entries.ncols() == 0 || entries.nrows() == 0 {
            return Err(Error::dims("coefficient matrix must be non-empty"));
        }
        Ok(Self {
            entries,
            declared_rank: None,
        })
    }

    pub fn with_rank(entries: DMatrix<T>, d: usize) -> Result<Self> {
        let mut b = Self::new(entries)?;
        if d == 0 || d > b.n_tasks() {
            return Err(Error::RankOutOfRange {
                d,
                max: b.n_tasks(),
            });
        }
        b.declared_rank = Some(d);
        Ok(b)
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<T> {
        self.entries
    }

    pub fn declared_rank(&self) -> Option<usize> {
        self.declared_rank
    }

    pub fn p(&self) -> usize {
        self.entries.nrows()
    }

    /// `K + 1`.
    pub fn n_tasks(&self) -> usize {
        self.entries.ncols()
    }

    pub fn primary(&self) -> DVector<T> {
        self.entries.column(0).clone_owned()
    }

    /// Leading `count` columns (primary plus the first `count - 1` auxiliary tasks).
    pub fn leading_tasks(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.n_tasks() {
            return Err(Error::dims(format!(
                "cannot take {count} of {} tasks",
                self.n_tasks()
            )));
        }
        Self::new(self.entries.columns(0, count).clone_owned())
    }
}

/// The `(K + 1) × (K + 1)` noise covariance `Σ_ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCovariance<T: Real> {
    entries: DMatrix<T>,
}

impl<T: Real> NoiseCovariance<T> {
    /// Checks symmetry (relative 1e-12) and positive semi-definiteness
    /// (eigenvalues ≥ −1e-10, scaled by the largest magnitude when above one).
    pub fn new(entries: DMatrix<T>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::dims("noise covariance must be square and non-empty"));
        }
        let scale = entries.iter().fold(T::zero(), |m, x| m.max(x.abs()));
        let sym_tol = T::tol(1e-12) * scale.max(T::one());
        let n = entries.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (entries[(i, j)] - entries[(j, i)]).abs() > sym_tol {
                    return Err(Error::InvalidParameter(format!(
                        "noise covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let (values, _) = sym_eigen_desc(&entries);
        let psd_tol = T::tol(1e-10) * values[0].abs().max(T::one());
        if values[n - 1] < -psd_tol {
            return Err(Error::InvalidParameter(format!(
                "noise covariance has negative eigenvalue {}",
                values[n - 1].to_f64_lossy()
            )));
        }
        Ok(Self { entries })
    }

    /// Skips validation; the caller guarantees a symmetric PSD matrix.
    pub(crate) fn from_trusted(entries: DMatrix<T>) -> Self {
        Self { entries }
    }

    pub fn diagonal(variances: &[T]) -> Result<Self> {
        if variances.iter().any(|&v| v < T::zero()) {
            return Err(Error::InvalidParameter("negative variance".into()));
        }
        if variances.is_empty() {
            return Err(Error::dims("noise covariance must be non-empty"));
        }
        Ok(Self {
            entries: DMatrix::from_diagonal(&DVector::from_column_slice(variances)),
        })
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Leading `count × count` block.
    pub fn leading_block(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.dim() {
            return Err(Error::dims(format!(
                "cannot take {count} of {} tasks",
                self.dim()
            )));
        }
        Ok(Self {
            entries: self.entries.view((0, 0), (count, count)).clone_owned(),
        })
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            entries: &self.entries * factor,
        }
    }
}

/// Combination weights over the `K + 1` per-task estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector<T: Real> {
    weights: DVector<T>,
}

impl<T: Real> WeightVector<T> {
    pub fn new(weights: DVector<T>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::dims("weight vector must be non-empty"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter(
                "weight vector has non-finite entries".into(),
            ));
        }
        Ok(Self { weights })
    }

    /// `e₁ = (1, 0, …, 0)`, the plain primary-task estimator.
    pub fn unit_primary(len: usize) -> Self {
        let mut weights = DVector::zeros(len);
        weights[0] = T::one();
        Self { weights }
    }

    pub fn as_vector(&self) -> &DVector<T> {
        &self.weights
    }

    pub fn as_slice(&self) -> &[T] {
        self.weights.as_slice()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Sample second-moment matrices `Σ̂_xx = N⁻¹ XᵀX` and `Σ̂_xy = N⁻¹ XᵀY`.
#[derive(Debug, Clone, PartialEq)]
pub struct GramStatistics<T: Real> {
    pub sigma_xx_hat: DMatrix<T>,
    pub sigma_xy_hat: DMatrix<T>,
}

impl<T: Real> GramStatistics<T> {
    pub fn from_dataset(data: &MultiTaskDataset<T>) -> Self {
        let inv_n = T::one() / T::from_usize_lossy(data.n());
        let x = data.covariates();
        let sigma_xx_hat = crate::linalg::symmetrize(&(x.tr_mul(x) * inv_n));
        let sigma_xy_hat = x.tr_mul(data.responses()) * inv_n;
        Self {
            sigma_xx_hat,
            sigma_xy_hat,
        }
    }
}

/// True iff `‖Bw − β⁽⁰⁾‖₂ ≤ tol · max(1, ‖β⁽⁰⁾‖₂)`.
pub fn validate_weight_feasibility<T: Real>(
    b: &CoefficientMatrix<T>,
    w: &WeightVector<T>,
    tol: T,
) -> Result<bool> {
    if w.len() != b.n_tasks() {
        return Err(Error::dims(format!(
            "weight of length {} for {} tasks",
            w.len(),
            b.n_tasks()
        )));
    }
    let primary = b.entries().column(0);
    let gap = (b.entries() * w.as_vector() - primary).norm();
    Ok(gap <= tol * primary.norm().max(T::one()))
}
