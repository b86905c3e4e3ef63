//! Cyclic Jacobi eigendecomposition for the small symmetric covariance
//! matrices produced by blocked PCA.

use super::CodecError;

const SYMMETRY_TOL: f64 = 1e-9;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;
pub const MAX_DIM: usize = 64;

/// `A = V diag(values) Vᵀ`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub dim: usize,
    /// Descending.
    pub values: Vec<f64>,
    /// Row-major `dim × dim`; column `j` is the eigenvector of `values[j]`,
    /// signed so that its largest-magnitude entry is positive.
    pub vectors: Vec<f64>,
    pub sweeps: usize,
}

impl SymmetricEigen {
    pub fn vector(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.vectors[i * self.dim + j]).collect()
    }
}

/// Eigenpairs of the row-major `dim × dim` symmetric matrix `a`.
pub fn symmetric_eigendecomposition(a: &[f64], dim: usize) -> Result<SymmetricEigen, CodecError> {
    if dim == 0 || dim > MAX_DIM || a.len() != dim * dim {
        return Err(CodecError::InvalidConfig(format!(
            "eigendecomposition needs a square matrix of side 1..={MAX_DIM}"
        )));
    }
    for i in 0..dim {
        for j in i + 1..dim {
            if (a[i * dim + j] - a[j * dim + i]).abs() > SYMMETRY_TOL {
                return Err(CodecError::NotSymmetric);
            }
        }
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(CodecError::InvalidConfig("matrix has non-finite entries".into()));
    }

    let n = dim;
    // work on the symmetrized copy
    let mut m: Vec<f64> = (0..n * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            0.5 * (a[i * n + j] + a[j * n + i])
        })
        .collect();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        let off =
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| m[i * n + j].abs()).fold(0.0, f64::max);
        if off < OFF_DIAGONAL_TOL {
            break;
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // columns p, q
                for k in 0..n {
                    let (mkp, mkq) = (m[k * n + p], m[k * n + q]);
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                // rows p, q
                for k in 0..n {
                    let (mpk, mqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[y * n + y].total_cmp(&m[x * n + x]));
    let values: Vec<f64> = order.iter().map(|&j| m[j * n + j]).collect();
    let mut vectors = vec![0.0; n * n];
    for (dst, &src) in order.iter().enumerate() {
        let mut lead = 0;
        for i in 0..n {
            if v[i * n + src].abs() > v[lead * n + src].abs() {
                lead = i;
            }
        }
        let sign = if v[lead * n + src] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[i * n + dst] = sign * v[i * n + src];
        }
    }
    Ok(SymmetricEigen { dim: n, values, vectors, sweeps })
}
