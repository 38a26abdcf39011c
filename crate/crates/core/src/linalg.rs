//! Small dense helpers built on nalgebra's symmetric eigensolver.

use nalgebra::{DMatrix, DVector};

use crate::scalar::Real;

/// `(A + Aᵀ) / 2`.
pub fn symmetrize<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    let half = T::lit(0.5);
    (a + a.transpose()) * half
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order. Columns of the returned matrix are the matching
/// eigenvectors, sign-normalized with [`normalize_sign`].
pub fn sym_eigen_desc<T: Real>(a: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let n = a.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let sym = symmetrize(a);
    let (evals, evecs) = {
        let eig = sym.clone().symmetric_eigen();
        if eig
            .eigenvalues
            .iter()
            .chain(eig.eigenvectors.iter())
            .all(|v| v.is_finite())
        {
            (eig.eigenvalues, eig.eigenvectors)
        } else {
            jacobi_eigen(sym)
        }
    };
    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps the solver's order for exactly equal eigenvalues;
    // NaN (only from non-finite input) sorts last.
    order.sort_by(|&i, &j| {
        let (a, b) = (evals[i], evals[j]);
        #[allow(clippy::eq_op)]
        match (a == a, b == b) {
            (true, true) => b.partial_cmp(&a).unwrap_or(std::cmp::Ordering::Equal),
            (x, y) => y.cmp(&x),
        }
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| evals[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = evecs.column(src).clone_owned();
        normalize_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Cyclic Jacobi rotations. Slower than the tridiagonal QR solver but immune
/// to the breakdown that solver shows on matrices with exactly zero rows.
fn jacobi_eigen<T: Real>(mut a: DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let n = a.nrows();
    let mut v = DMatrix::<T>::identity(n, n);
    let two = T::lit(2.0);
    for _sweep in 0..100 {
        let off = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .fold(T::zero(), |acc, (i, j)| acc + a[(i, j)] * a[(i, j)]);
        let diag = (0..n).fold(T::zero(), |acc, i| acc + a[(i, i)] * a[(i, i)]);
        if off <= T::EPS * T::EPS * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (two * apq);
                let sign = if theta >= T::zero() {
                    T::one()
                } else {
                    -T::one()
                };
                let t = sign / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (a.diagonal(), v)
}

/// Flip `v` so that its entry of largest magnitude is positive. Entries whose
/// magnitude is within a few ulps of the maximum count as tied and the lowest
/// index wins.
pub fn normalize_sign<T: Real>(v: &mut DVector<T>) {
    let max_abs = v.iter().fold(T::zero(), |m, x| m.max(x.abs()));
    if max_abs == T::zero() {
        return;
    }
    let cutoff = max_abs * (T::one() - T::EPS * T::lit(64.0));
    if let Some(lead) = v.iter().position(|x| x.abs() >= cutoff) {
        if v[lead] < T::zero() {
            v.neg_mut();
        }
    }
}

/// Largest singular value.
pub fn op_norm<T: Real>(a: &DMatrix<T>) -> T {
    if a.is_empty() {
        return T::zero();
    }
    // The smaller of the two Gram matrices has the same top eigenvalue.
    let gram = if a.nrows() >= a.ncols() {
        a.tr_mul(a)
    } else {
        a * a.transpose()
    };
    let (values, _) = sym_eigen_desc(&gram);
    values[0].max(T::zero()).sqrt()
}

/// Count of eigenvalues of `AᵀA` above `rel · λ_max`.
pub fn numerical_rank<T: Real>(a: &DMatrix<T>, rel: T) -> usize {
    if a.is_empty() {
        return 0;
    }
    let (values, _) = sym_eigen_desc(&a.tr_mul(a));
    let top = values[0];
    if top <= T::zero() {
        return 0;
    }
    values.iter().filter(|&&l| l > rel * top).count()
}

/// Symmetric square root of a positive semi-definite matrix; negative
/// eigenvalues from round-off are clamped to zero.
pub fn sym_sqrt<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    let (values, vectors) = sym_eigen_desc(a);
    let roots = values.map(|l| l.max(T::zero()).sqrt());
    &vectors * DMatrix::from_diagonal(&roots) * vectors.transpose()
}

/// Inverse of a symmetric matrix via its eigendecomposition. Eigenvalues at or
/// below `rel · λ_max` are dropped (Moore–Penrose pseudo-inverse); the flag
/// reports whether any were.
pub fn sym_pinv<T: Real>(a: &DMatrix<T>, rel: T) -> (DMatrix<T>, bool) {
    sym_pinv_scaled(a, rel, T::zero())
}

/// As [`sym_pinv`], but the cutoff is `rel · max(λ_max, scale)`. Use `scale`
/// when `a` is a compression of a larger matrix whose magnitude sets what
/// counts as numerically zero.
pub fn sym_pinv_scaled<T: Real>(a: &DMatrix<T>, rel: T, scale: T) -> (DMatrix<T>, bool) {
    let n = a.nrows();
    if n == 0 {
        return (DMatrix::zeros(0, 0), false);
    }
    let (values, vectors) = sym_eigen_desc(a);
    let top = values
        .iter()
        .fold(T::zero(), |m, l| m.max(l.abs()))
        .max(scale.abs());
    let cutoff = rel * top;
    let mut truncated = false;
    let inv = values.map(|l| {
        if top > T::zero() && l > cutoff {
            T::one() / l
        } else {
            truncated = true;
            T::zero()
        }
    });
    (
        &vectors * DMatrix::from_diagonal(&inv) * vectors.transpose(),
        truncated,
    )
}
