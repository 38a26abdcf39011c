//! Data-generating processes for the simulation studies.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::data::{CoefficientMatrix, NoiseCovariance};
use crate::error::{Error, Result};
use crate::linalg::{numerical_rank, op_norm, sym_eigen_desc, symmetrize};

/// Eigenvalues of `BᵀB` above this fraction of the largest count towards the rank.
pub const RANK_THRESHOLD: f64 = 1e-10;

fn gaussian_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    variance: f64,
    rng: &mut R,
) -> DMatrix<f64> {
    let normal = Normal::new(0.0, variance.sqrt()).expect("finite variance");
    // Row-major fill keeps the draw order independent of nalgebra's storage.
    let values: Vec<f64> = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    DMatrix::from_row_slice(rows, cols, &values)
}

/// `n × p` design with i.i.d. rows `N(0, Σ_xx)`, `Σ_xx[j₁, j₂] = ρ^{|j₁ − j₂|}`,
/// drawn through the AR(1) recursion `x_j = ρ x_{j−1} + √(1 − ρ²) z_j`.
pub fn gen_design<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    rho: f64,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!(
            "design correlation {rho} not in [0, 1)"
        )));
    }
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter(
            "design needs n ≥ 1 and p ≥ 1".into(),
        ));
    }
    let innovation = (1.0 - rho * rho).sqrt();
    let mut values = Vec::with_capacity(n * p);
    for _ in 0..n {
        let mut prev: f64 = rng.sample(StandardNormal);
        values.push(prev);
        for _ in 1..p {
            let z: f64 = rng.sample(StandardNormal);
            prev = rho * prev + innovation * z;
            values.push(prev);
        }
    }
    Ok(DMatrix::from_row_slice(n, p, &values))
}

/// Population covariance `ρ^{|j₁ − j₂|}` of [`gen_design`].
pub fn ar_covariance(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

/// Band pattern: `φ_ij = 0` when `i ≤ j ≤ i + K − d + 1` (1-based), else 1.
pub fn band_mixing(k_aux: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, k_aux + 1, |i0, j0| {
        let (i, j) = (i0 + 1, j0 + 1);
        if i <= j && j + d <= i + k_aux + 1 {
            0.0
        } else {
            1.0
        }
    })
}

fn draw_banded<R: Rng + ?Sized>(p: usize, k_aux: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    let phi1 = gaussian_matrix(p, d, 1.0 / (p as f64).sqrt(), rng);
    let b = phi1 * band_mixing(k_aux, d);
    let norm = op_norm(&b);
    if norm > 0.0 {
        b / norm
    } else {
        b
    }
}

/// `B = Φ₁Φ₂ / ‖Φ₁Φ₂‖_op` with Gaussian `Φ₁` (`p × d`) and banded 0/1 `Φ₂`.
/// The numerical rank is verified; a mismatching draw is resampled once.
pub fn gen_coefficients<R: Rng + ?Sized>(
    p: usize,
    k_aux: usize,
    d: usize,
    rng: &mut R,
) -> Result<CoefficientMatrix<f64>> {
    if d == 0 || d > k_aux + 1 {
        return Err(Error::RankOutOfRange { d, max: k_aux + 1 });
    }
    if p == 0 {
        return Err(Error::InvalidParameter("p must be at least 1".into()));
    }
    let mut found = 0;
    for _ in 0..2 {
        let b = draw_banded(p, k_aux, d, rng);
        found = numerical_rank(&b, RANK_THRESHOLD);
        if found == d {
            return CoefficientMatrix::with_rank(b, d);
        }
    }
    Err(Error::DegenerateDraw { expected: d, found })
}

/// `Σ_ε = Σ̃Σ̃ᵀ / ‖Σ̃‖²_op` with Gaussian `Σ̃` of size `(K + 1) × (K + 1)`.
pub fn gen_noise_cov<R: Rng + ?Sized>(k_aux: usize, rng: &mut R) -> Result<NoiseCovariance<f64>> {
    let dim = k_aux + 1;
    let tilde = gaussian_matrix(dim, dim, 1.0 / (dim as f64).sqrt(), rng);
    let norm = op_norm(&tilde);
    if norm == 0.0 {
        return Err(Error::DegenerateDraw {
            expected: dim,
            found: 0,
        });
    }
    let sigma = symmetrize(&(&tilde * tilde.transpose() / (norm * norm)));
    NoiseCovariance::new(sigma)
}

/// `(I − P_{B₁}) B₂`, where `P_{B₁}` projects onto the column space of `B₁`.
/// The projector is built from an orthonormal basis of that space, so it
/// also handles a rank-deficient `B₁`.
pub fn project_out(b1: &DMatrix<f64>, b2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b1.nrows() != b2.nrows() {
        return Err(Error::dims("B₁ and B₂ must have the same number of rows"));
    }
    let (values, vectors) = sym_eigen_desc(&b1.tr_mul(b1));
    let top = values.get(0).copied().unwrap_or(0.0);
    let rank = values
        .iter()
        .filter(|&&l| top > 0.0 && l > RANK_THRESHOLD * top)
        .count();
    if rank == 0 {
        return Err(Error::InvalidParameter("B₁ has rank zero".into()));
    }
    let mut basis = b1 * vectors.columns(0, rank);
    for (c, mut col) in basis.column_iter_mut().enumerate() {
        col /= values[c].sqrt();
    }
    Ok(b2 - &basis * basis.tr_mul(b2))
}

/// Appends `K′` low-quality tasks to `B₁`: a full-rank block drawn by the
/// banded recipe, projected onto the orthogonal complement of `col(B₁)`.
pub fn gen_low_quality_block<R: Rng + ?Sized>(
    b1: &CoefficientMatrix<f64>,
    k_prime: usize,
    rng: &mut R,
) -> Result<CoefficientMatrix<f64>> {
    if k_prime == 0 {
        return Err(Error::InvalidParameter("k_prime must be at least 1".into()));
    }
    let p = b1.p();
    let b2 = if k_prime == 1 {
        // The band covers the single entry of a 1×1 Φ₂; use Φ₂ = [1].
        let col = gaussian_matrix(p, 1, 1.0 / (p as f64).sqrt(), rng);
        let norm = col.norm();
        col / norm
    } else {
        gen_coefficients(p, k_prime - 1, k_prime, rng)?.into_entries()
    };
    let b2_star = project_out(b1.entries(), &b2)?;
    let mut b = DMatrix::zeros(p, b1.n_tasks() + k_prime);
    b.columns_mut(0, b1.n_tasks()).copy_from(b1.entries());
    b.columns_mut(b1.n_tasks(), k_prime).copy_from(&b2_star);
    CoefficientMatrix::new(b)
}

/// `n × dim` Gaussian noise with covariance `SSᵀ` for a symmetric factor `S`.
pub fn draw_noise<R: Rng + ?Sized>(n: usize, factor: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
    let z = gaussian_matrix(n, factor.nrows(), 1.0, rng);
    z * factor
}

/// Planted ground truth for selection studies.
#[derive(Debug, Clone)]
pub struct PlantedTasks {
    pub coefficients: CoefficientMatrix<f64>,
    pub noise: NoiseCovariance<f64>,
    pub covariates: DMatrix<f64>,
    pub responses: DMatrix<f64>,
    /// Auxiliary indices (1-based task numbering) of the low-quality tasks.
    pub useless: Vec<usize>,
}

/// Primary task plus `n_useful` auxiliary tasks whose coefficients are
/// Gaussian combinations of `rank` shared directions, followed by `n_useless`
/// tasks orthogonal to that span. Coefficients are scaled to operator norm
/// `signal`; noise is drawn with [`gen_noise_cov`].
pub fn gen_planted_tasks<R: Rng + ?Sized>(
    n: usize,
    p: usize,
    n_useful: usize,
    rank: usize,
    n_useless: usize,
    signal: f64,
    rng: &mut R,
) -> Result<PlantedTasks> {
    if rank == 0 || rank > n_useful + 1 || rank > p {
        return Err(Error::RankOutOfRange {
            d: rank,
            max: (n_useful + 1).min(p),
        });
    }
    let mut b1 = None;
    for _ in 0..2 {
        let directions = gaussian_matrix(p, rank, 1.0, rng);
        let mixing = gaussian_matrix(rank, n_useful + 1, 1.0, rng);
        let b = directions * mixing;
        if numerical_rank(&b, RANK_THRESHOLD) == rank {
            b1 = Some(CoefficientMatrix::with_rank(&b / op_norm(&b), rank)?);
            break;
        }
    }
    let b1 = b1.ok_or(Error::DegenerateDraw {
        expected: rank,
        found: 0,
    })?;
    let b = if n_useless > 0 {
        gen_low_quality_block(&b1, n_useless, rng)?
    } else {
        b1
    };
    let b = CoefficientMatrix::new(b.entries() * (signal / op_norm(b.entries())))?;
    let noise = gen_noise_cov(n_useful + n_useless, rng)?;
    let covariates = gen_design(n, p, 0.5, rng)?;
    let eps = draw_noise(n, &crate::linalg::sym_sqrt(noise.entries()), rng);
    let responses = &covariates * b.entries() + eps;
    Ok(PlantedTasks {
        coefficients: b,
        noise,
        covariates,
        responses,
        useless: (n_useful + 1..=n_useful + n_useless).collect(),
    })
}

/// Binary responses with `P(Y = 1) = 1 / (1 + exp(−Xβ))` per task.
pub fn draw_bernoulli<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    b: &CoefficientMatrix<f64>,
    rng: &mut R,
) -> DMatrix<f64> {
    let eta = x * b.entries();
    let (n, k) = eta.shape();
    let mut y = DMatrix::zeros(n, k);
    for i in 0..n {
        for j in 0..k {
            let prob = 1.0 / (1.0 + (-eta[(i, j)]).exp());
            let u: f64 = rng.random();
            y[(i, j)] = if u < prob { 1.0 } else { 0.0 };
        }
    }
    y
}

/// Column norms, handy for checking planted structure.
pub fn column_norms(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.norm()))
}
