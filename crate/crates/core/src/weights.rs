//! Optimal combination weights over per-task estimators.
//!
//! For a coefficient matrix `B` of rank `d`, every weight `w` with
//! `Bw = β⁽⁰⁾` can be written as `e₁ + Θu`, where the columns of `Θ` are the
//! trailing `K + 1 − d` eigenvectors of `BᵀB`. The weight minimizing
//! `wᵀΣ_εw` over that affine set is
//!
//! ```text
//! w* = e₁ − Θ (ΘᵀΣ_εΘ)⁻¹ ΘᵀΣ_ε e₁
//! ```
//!
//! Plugging estimates `B̂`, `Σ̂_ε` into the same formula gives the feasible
//! weight `ŵ*`.

use nalgebra::{DMatrix, DVector};

use crate::data::{CoefficientMatrix, NoiseCovariance, WeightVector};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen_desc, sym_pinv_scaled};
use crate::ols::TaskFit;
use crate::scalar::Real;

/// Orthonormal basis `Θ` of the trailing eigenspace of `BᵀB`.
#[derive(Debug, Clone, PartialEq)]
pub struct NullSpaceBasis<T: Real> {
    pub theta: DMatrix<T>,
    pub rank_used: usize,
    /// All eigenvalues of `BᵀB`, descending. Entries past `rank_used` are the
    /// ones discarded into `Θ`; for an estimated `B̂` their size indicates how
    /// well the assumed rank fits.
    pub eigenvalues: DVector<T>,
}

impl<T: Real> NullSpaceBasis<T> {
    pub fn dim(&self) -> usize {
        self.theta.ncols()
    }

    pub fn trailing_eigenvalues(&self) -> &[T] {
        &self.eigenvalues.as_slice()[self.rank_used..]
    }
}

/// An optimal weight together with the basis it was built from.
#[derive(Debug, Clone)]
pub struct WeightSolution<T: Real> {
    pub weight: WeightVector<T>,
    pub basis: NullSpaceBasis<T>,
    /// `ΘᵀΣ_εΘ` was numerically singular and was inverted through a truncated
    /// eigendecomposition.
    pub pseudo_inverse: bool,
}

#[derive(Debug, Clone)]
pub struct WeightedEstimate<T: Real> {
    /// `B̂w`.
    pub beta_weighted: DVector<T>,
    pub weight: WeightVector<T>,
    /// `wᵀΣ̂_εw`.
    pub variance_functional: T,
}

fn check_rank(d: usize, n_tasks: usize) -> Result<()> {
    if d == 0 || d > n_tasks {
        Err(Error::RankOutOfRange { d, max: n_tasks })
    } else {
        Ok(())
    }
}

/// Eigenvectors of `BᵀB` at positions `d + 1 … K + 1` of the descending
/// eigenvalue order, each with its largest-magnitude entry made positive.
/// Empty when `d = K + 1`.
pub fn null_space_basis<T: Real>(b: &CoefficientMatrix<T>, d: usize) -> Result<NullSpaceBasis<T>> {
    let n_tasks = b.n_tasks();
    check_rank(d, n_tasks)?;
    let (eigenvalues, vectors) = sym_eigen_desc(&b.entries().tr_mul(b.entries()));
    let theta = vectors.columns(d, n_tasks - d).clone_owned();
    Ok(NullSpaceBasis {
        theta,
        rank_used: d,
        eigenvalues,
    })
}

/// `w* = e₁ − Θ(ΘᵀΣΘ)⁻¹ΘᵀΣe₁` with diagnostics.
pub fn solve_optimal_weight<T: Real>(
    b: &CoefficientMatrix<T>,
    sigma_eps: &NoiseCovariance<T>,
    d: usize,
) -> Result<WeightSolution<T>> {
    let n_tasks = b.n_tasks();
    check_rank(d, n_tasks)?;
    if sigma_eps.dim() != n_tasks {
        return Err(Error::dims(format!(
            "Σ_ε is {0}×{0} for {1} tasks",
            sigma_eps.dim(),
            n_tasks
        )));
    }
    let basis = null_space_basis(b, d)?;
    if basis.dim() == 0 {
        return Ok(WeightSolution {
            weight: WeightVector::unit_primary(n_tasks),
            basis,
            pseudo_inverse: false,
        });
    }
    let theta = &basis.theta;
    let sigma = sigma_eps.entries();
    let reduced = theta.tr_mul(&(sigma * theta));
    // Directions where ΘᵀΣΘ is negligible next to Σ itself are treated as
    // noiseless, so round-off in a near-zero Σ is never amplified.
    let scale = (0..n_tasks).fold(T::zero(), |m, i| m.max(sigma[(i, i)].abs()));
    let (reduced_inv, pseudo_inverse) = sym_pinv_scaled(&reduced, T::tol(1e-12), scale);
    let cross = theta.tr_mul(&sigma.column(0));
    let mut w = -(theta * (reduced_inv * cross));
    w[0] += T::one();
    Ok(WeightSolution {
        weight: WeightVector::new(w)?,
        basis,
        pseudo_inverse,
    })
}

/// Oracle weight from the true `B` and `Σ_ε`.
pub fn oracle_weight<T: Real>(
    b: &CoefficientMatrix<T>,
    sigma_eps: &NoiseCovariance<T>,
    d: usize,
) -> Result<WeightVector<T>> {
    solve_optimal_weight(b, sigma_eps, d).map(|s| s.weight)
}

/// Feasible weight from a fit's `B̂` and `Σ̂_ε`. No rank check is applied to
/// `B̂`; its trailing eigenvalues are reported in the returned basis.
pub fn feasible_weight_solution<T: Real, F: TaskFit<T> + ?Sized>(
    fit: &F,
    d: usize,
) -> Result<WeightSolution<T>> {
    solve_optimal_weight(fit.coefficients(), fit.noise_covariance(), d)
}

pub fn feasible_weight<T: Real, F: TaskFit<T> + ?Sized>(
    fit: &F,
    d: usize,
) -> Result<WeightVector<T>> {
    feasible_weight_solution(fit, d).map(|s| s.weight)
}

/// `𝒫(w) = wᵀΣ_εw`, clamped at zero against round-off.
pub fn variance_functional<T: Real>(
    w: &WeightVector<T>,
    sigma_eps: &NoiseCovariance<T>,
) -> Result<T> {
    if w.len() != sigma_eps.dim() {
        return Err(Error::dims(format!(
            "weight of length {} against {}×{} covariance",
            w.len(),
            sigma_eps.dim(),
            sigma_eps.dim()
        )));
    }
    let v = w.as_vector();
    Ok(v.dot(&(sigma_eps.entries() * v)).max(T::zero()))
}

/// `β̂_w = B̂w` together with `𝒫(w)` under the fit's `Σ̂_ε`.
pub fn weighted_estimate<T: Real, F: TaskFit<T> + ?Sized>(
    fit: &F,
    w: &WeightVector<T>,
) -> Result<WeightedEstimate<T>> {
    let b = fit.coefficients();
    if w.len() != b.n_tasks() {
        return Err(Error::dims(format!(
            "weight of length {} for {} tasks",
            w.len(),
            b.n_tasks()
        )));
    }
    let beta_weighted = b.entries() * w.as_vector();
    let variance_functional = variance_functional(w, fit.noise_covariance())?;
    Ok(WeightedEstimate {
        beta_weighted,
        weight: w.clone(),
        variance_functional,
    })
}

/// Independent check of the closed form: minimizes
/// `(e₁ + Θu)ᵀΣ_ε(e₁ + Θu)` by solving its normal equations
/// `(ΘᵀΣΘ)u = −ΘᵀΣe₁` with an LU factorization built from explicit loops,
/// followed by `iters` rounds of iterative refinement.
pub fn brute_force_optimal_weight<T: Real>(
    b: &CoefficientMatrix<T>,
    sigma_eps: &NoiseCovariance<T>,
    d: usize,
    iters: usize,
) -> Result<WeightVector<T>> {
    let n_tasks = b.n_tasks();
    check_rank(d, n_tasks)?;
    if sigma_eps.dim() != n_tasks {
        return Err(Error::dims("Σ_ε does not match the number of tasks"));
    }
    let basis = null_space_basis(b, d)?;
    let m = basis.dim();
    let mut w = vec![T::zero(); n_tasks];
    w[0] = T::one();
    if m == 0 {
        return WeightVector::new(DVector::from_vec(w));
    }
    let theta = &basis.theta;
    let sigma = sigma_eps.entries();

    // ΣΘ, ΘᵀΣΘ and −ΘᵀΣe₁ by explicit summation.
    let mut sigma_theta = vec![vec![T::zero(); m]; n_tasks];
    for i in 0..n_tasks {
        for c in 0..m {
            let mut acc = T::zero();
            for k in 0..n_tasks {
                acc += sigma[(i, k)] * theta[(k, c)];
            }
            sigma_theta[i][c] = acc;
        }
    }
    let mut a = vec![vec![T::zero(); m]; m];
    let mut rhs = vec![T::zero(); m];
    for r in 0..m {
        for c in 0..m {
            let mut acc = T::zero();
            for i in 0..n_tasks {
                acc += theta[(i, r)] * sigma_theta[i][c];
            }
            a[r][c] = acc;
        }
        // (ΘᵀΣe₁)_r = Σ_i θ_ir σ_i0 = (ΣΘ)_0r by symmetry of Σ.
        rhs[r] = -sigma_theta[0][r];
    }

    let lu = LuFactors::new(&a);
    let mut u = lu.solve(&rhs);
    for _ in 0..iters {
        let residual: Vec<T> = (0..m)
            .map(|r| rhs[r] - (0..m).fold(T::zero(), |acc, c| acc + a[r][c] * u[c]))
            .collect();
        let delta = lu.solve(&residual);
        for (ui, di) in u.iter_mut().zip(delta) {
            *ui += di;
        }
    }
    for (i, wi) in w.iter_mut().enumerate() {
        for (c, uc) in u.iter().enumerate() {
            *wi += theta[(i, c)] * *uc;
        }
    }
    WeightVector::new(DVector::from_vec(w))
}

/// Doolittle LU with partial pivoting on a dense row-major matrix.
struct LuFactors<T> {
    lu: Vec<Vec<T>>,
    perm: Vec<usize>,
}

impl<T: Real> LuFactors<T> {
    fn new(a: &[Vec<T>]) -> Self {
        let n = a.len();
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let pivot = (k..n)
                .max_by(|&i, &j| {
                    lu[i][k]
                        .abs()
                        .partial_cmp(&lu[j][k].abs())
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap_or(k);
            lu.swap(k, pivot);
            perm.swap(k, pivot);
            let diag = lu[k][k];
            if diag == T::zero() {
                continue;
            }
            for i in (k + 1)..n {
                let factor = lu[i][k] / diag;
                lu[i][k] = factor;
                for j in (k + 1)..n {
                    let upper = lu[k][j];
                    lu[i][j] -= factor * upper;
                }
            }
        }
        Self { lu, perm }
    }

    fn solve(&self, b: &[T]) -> Vec<T> {
        let n = b.len();
        let mut y: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[i][j];
                y[i] = y[i] - l * y[j];
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let u = self.lu[i][j];
                y[i] = y[i] - u * y[j];
            }
            y[i] /= self.lu[i][i];
        }
        y
    }
}
