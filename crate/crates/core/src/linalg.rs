//! Dense symmetric linear algebra on [`Tensor`]: Cholesky factorisation,
//! triangular solves, sample correlation and a symmetric eigensolver.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Pivots below this are treated as exactly singular and jittered.
pub const PIVOT_FLOOR: f64 = 1e-10;
/// Pivots below this are a genuine loss of positive semi-definiteness.
pub const PIVOT_NEGATIVE: f64 = -1e-8;

fn check_square(a: &Tensor, what: &str) -> Result<usize> {
    if a.rows() != a.cols() {
        return Err(Error::shape(format!("{what} needs a square matrix, got {:?}", a.shape())));
    }
    Ok(a.rows())
}

/// Lower-triangular `L` with `L Lᵀ = A` for a symmetric PSD `A`. Pivots in
/// `[PIVOT_NEGATIVE, PIVOT_FLOOR)` are lifted to `PIVOT_FLOOR`.
pub fn cholesky(a: &Tensor) -> Result<Tensor> {
    let n = check_square(a, "cholesky")?;
    let mut l = Tensor::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < PIVOT_NEGATIVE || !d.is_finite() {
            return Err(Error::NotPsd { pivot: d, index: j });
        }
        let ljj = libm::sqrt(d.max(PIVOT_FLOOR));
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn solve_lower(l: &Tensor, b: &Tensor) -> Result<Tensor> {
    let n = check_square(l, "triangular solve")?;
    if b.rows() != n {
        return Err(Error::shape(format!("solve with {n}x{n} factor and {:?} rhs", b.shape())));
    }
    let mut x = b.clone();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(x)
}

/// Inverse of a lower-triangular matrix.
pub fn invert_lower(l: &Tensor) -> Result<Tensor> {
    let n = check_square(l, "triangular inverse")?;
    solve_lower(l, &Tensor::identity(n))
}

/// Pearson correlation between the rows of an `m × n` sample matrix.
pub fn correlation_rows(x: &Tensor) -> Result<Tensor> {
    let (m, n) = x.shape();
    if n < 2 {
        return Err(Error::InsufficientData(format!("correlation needs 2 columns, got {n}")));
    }
    let means: Vec<f64> = (0..m).map(|i| x.row(i).iter().sum::<f64>() / n as f64).collect();
    let mut cov = Tensor::zeros(m, m);
    for i in 0..m {
        for k in i..m {
            let s: f64 = x.row(i).iter().zip(x.row(k)).map(|(a, b)| (a - means[i]) * (b - means[k])).sum();
            cov[(i, k)] = s;
            cov[(k, i)] = s;
        }
    }
    let sd: Vec<f64> = (0..m).map(|i| libm::sqrt(cov[(i, i)])).collect();
    if sd.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::SingularSampleCorrelation);
    }
    Ok(Tensor::from_fn(m, m, |i, k| if i == k { 1.0 } else { cov[(i, k)] / (sd[i] * sd[k]) }))
}

/// Eigen-decomposition of a symmetric matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors as columns.
pub fn symmetric_eigen(a: &Tensor) -> Result<(Vec<f64>, Tensor)> {
    let n = check_square(a, "eigen-decomposition")?;
    let mat = nalgebra::DMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let eig = nalgebra::SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Tensor::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, standard_normal};

    fn spd(n: usize, seed: u64) -> Tensor {
        let mut r = seeded(seed);
        let b = Tensor::from_fn(n, n, |_, _| standard_normal(&mut r));
        let mut a = b.matmul_nt(&b).unwrap();
        for i in 0..n {
            a[(i, i)] += 0.5;
        }
        a
    }

    #[test]
    fn cholesky_reconstructs_input() {
        let a = spd(6, 1);
        let l = cholesky(&a).unwrap();
        assert!(l.matmul_nt(&l).unwrap().max_abs_diff(&a) < 1e-12);
        for i in 0..6 {
            for j in i + 1..6 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite_and_jitters_singular() {
        let bad = Tensor::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap();
        assert!(matches!(cholesky(&bad), Err(Error::NotPsd { index: 1, .. })));
        let singular = Tensor::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let l = cholesky(&singular).unwrap();
        assert!((l[(1, 1)] - PIVOT_FLOOR.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn triangular_inverse() {
        let l = cholesky(&spd(5, 2)).unwrap();
        let inv = invert_lower(&l).unwrap();
        assert!(l.matmul(&inv).unwrap().max_abs_diff(&Tensor::identity(5)) < 1e-12);
    }

    #[test]
    fn correlation_of_linear_pair() {
        let x = Tensor::from_rows(&[[1.0, 2.0, 3.0, 4.0], [2.0, 4.0, 6.0, 8.5], [4.0, 3.0, 2.0, 1.0]]).unwrap();
        let c = correlation_rows(&x).unwrap();
        assert!((c[(0, 2)] + 1.0).abs() < 1e-14);
        assert!(c[(0, 1)] > 0.99);
        let flat = Tensor::from_rows(&[[1.0, 1.0, 1.0], [1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(correlation_rows(&flat).unwrap_err(), Error::SingularSampleCorrelation);
    }

    #[test]
    fn eigen_reconstructs_and_sorts() {
        let a = spd(7, 3);
        let (vals, vecs) = symmetric_eigen(&a).unwrap();
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        let lam = Tensor::from_fn(7, 7, |i, j| if i == j { vals[i] } else { 0.0 });
        let back = vecs.matmul(&lam).unwrap().matmul_nt(&vecs).unwrap();
        assert!(back.max_abs_diff(&a) < 1e-10);
    }
}
