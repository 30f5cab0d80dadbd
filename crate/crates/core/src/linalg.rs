//! Small complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Eigen-decomposition of a Hermitian matrix with eigenpairs sorted by
/// nonincreasing eigenvalue.
pub fn hermitian_eigen_desc(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Largest absolute deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Rotates `v` by a global phase so its largest-magnitude entry is real and
/// positive. The first entry wins ties.
pub fn normalize_phase(v: &mut CVector) {
    let mut best = 0;
    let mut best_norm = -1.0;
    for (i, z) in v.iter().enumerate() {
        let n = z.norm();
        if n > best_norm * (1.0 + 1e-12) {
            best = i;
            best_norm = n;
        }
    }
    if best_norm > 0.0 {
        let rot = v[best].conj() / best_norm;
        v.iter_mut().for_each(|z| *z *= rot);
    }
}

/// Dominant right singular pair of a matrix.
#[derive(Debug, Clone)]
pub struct DominantSingular {
    /// Unit-norm right singular vector, phase-normalized.
    pub vector: CVector,
    pub sigma_max: f64,
    pub sigma_second: f64,
    /// Top singular value is (numerically) repeated.
    pub degenerate: bool,
}

/// Top right singular vector of `a` via the smaller of the two Gram matrices.
pub fn dominant_right_singular(a: &CMatrix) -> Result<DominantSingular> {
    let (p, m) = a.shape();
    if p == 0 || m == 0 {
        return Err(Error::Empty);
    }
    let scale = a.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
    if scale == 0.0 {
        return Err(Error::ZeroMatrix);
    }
    let (values, mut vector) = if p >= m {
        let gram = a.adjoint() * a;
        let (vals, vecs) = hermitian_eigen_desc(&gram);
        (vals, vecs.column(0).into_owned())
    } else {
        let gram = a * a.adjoint();
        let (vals, vecs) = hermitian_eigen_desc(&gram);
        let v = a.adjoint() * vecs.column(0);
        (vals, v)
    };
    let norm = vector.norm();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroMatrix);
    }
    vector.unscale_mut(norm);
    normalize_phase(&mut vector);
    let sigma_max = values[0].max(0.0).sqrt();
    let sigma_second = values.get(1).copied().unwrap_or(0.0).max(0.0).sqrt();
    let sigma_max = sigma_max.max((a * &vector).norm());
    Ok(DominantSingular {
        degenerate: m > 1 && (sigma_max - sigma_second) < 1e-10 * sigma_max,
        vector,
        sigma_max,
        sigma_second,
    })
}

/// Relative Frobenius distance ‖a − b‖_F / ‖b‖_F.
pub fn relative_frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    let denom = b.norm();
    if denom == 0.0 {
        a.norm()
    } else {
        (a - b).norm() / denom
    }
}
