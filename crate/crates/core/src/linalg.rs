//! Standardization, correlation matrices, a cyclic Jacobi eigensolver and a
//! Cholesky solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::AttributeMatrix;
use crate::matrix::{dot, Matrix};

/// Off-diagonal magnitude at which Jacobi sweeps stop.
pub const JACOBI_TOLERANCE: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Column means and population standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Scaler {
    /// Fits column-wise mean and `n`-denominator sd. A column whose sd is zero
    /// (or lost in rounding next to its mean) is reported by name.
    pub fn fit(values: &Matrix, names: &[String]) -> Result<Self> {
        let (n, p) = (values.rows(), values.cols());
        let mut means = vec![0.0; p];
        for r in values.row_iter() {
            for (m, v) in means.iter_mut().zip(r) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n as f64;
        }
        let mut ss = vec![0.0; p];
        for r in values.row_iter() {
            for ((s, v), m) in ss.iter_mut().zip(r).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        let sds: Vec<f64> = ss.iter().map(|s| (s / n as f64).sqrt()).collect();
        for (j, (&sd, &m)) in sds.iter().zip(&means).enumerate() {
            if !(sd > 1e-12 * m.abs().max(1.0)) {
                let name = names.get(j).cloned().unwrap_or_else(|| format!("column {j}"));
                return Err(Error::ConstantColumn(name));
            }
        }
        Ok(Self { means, sds })
    }

    pub fn transform(&self, values: &Matrix) -> Result<Matrix> {
        if values.cols() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                got: values.cols(),
            });
        }
        let mut out = values.clone();
        for i in 0..out.rows() {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.means).zip(&self.sds) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Column z-scores together with the scaler that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedMatrix {
    pub values: Matrix,
    pub scaler: Scaler,
    pub names: Vec<String>,
}

pub fn standardize(matrix: &AttributeMatrix) -> Result<StandardizedMatrix> {
    standardize_values(&matrix.values, &matrix.attribute_names)
}

pub fn standardize_values(values: &Matrix, names: &[String]) -> Result<StandardizedMatrix> {
    let scaler = Scaler::fit(values, names)?;
    let values = scaler.transform(values)?;
    Ok(StandardizedMatrix {
        values,
        scaler,
        names: names.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub values: Matrix,
    pub names: Vec<String>,
}

impl CorrelationMatrix {
    pub fn dim(&self) -> usize {
        self.values.rows()
    }
}

/// `R = XᵀX / n` on z-scores, symmetric by construction, unit diagonal forced
/// and entries clamped to `[-1, 1]`.
pub fn correlation(std: &StandardizedMatrix) -> CorrelationMatrix {
    let n = std.values.rows() as f64;
    let mut r = std.values.gram();
    let p = r.rows();
    for i in 0..p {
        for j in 0..p {
            r[(i, j)] = if i == j { 1.0 } else { (r[(i, j)] / n).clamp(-1.0, 1.0) };
        }
    }
    CorrelationMatrix {
        values: r,
        names: std.names.clone(),
    }
}

/// Eigenvalues in descending order; column `k` of `vectors` pairs with
/// `values[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: Matrix,
    pub sweeps: usize,
}

impl EigenSystem {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }

    /// `max_k ‖A v_k − λ_k v_k‖∞`.
    pub fn residual(&self, a: &Matrix) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, &lambda) in self.values.iter().enumerate() {
            let v = self.vector(k);
            let av = a.mat_vec(&v);
            for (x, y) in av.iter().zip(&v) {
                worst = worst.max((x - lambda * y).abs());
            }
        }
        worst
    }

    /// `max |VᵀV − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        self.vectors.gram().max_abs_diff(&Matrix::identity(self.values.len()))
    }

    /// `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let p = self.values.len();
        Matrix::from_fn(p, p, |i, j| {
            (0..p)
                .map(|k| self.vectors[(i, k)] * self.values[k] * self.vectors[(j, k)])
                .sum()
        })
    }
}

/// Full symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps run until every off-diagonal magnitude is at most
/// [`JACOBI_TOLERANCE`]. The input is copied; ties in the sorted spectrum keep
/// ascending diagonal position.
pub fn symmetric_eigen(a: &Matrix) -> Result<EigenSystem> {
    let p = a.rows();
    if a.cols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: a.cols(),
        });
    }
    let mut asym: f64 = 0.0;
    for i in 0..p {
        for j in 0..i {
            asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    let scale = a.as_slice().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric(asym));
    }

    let mut m = a.clone();
    let mut v = Matrix::identity(p);
    let off = |m: &Matrix| {
        let mut worst: f64 = 0.0;
        for i in 0..p {
            for j in (i + 1)..p {
                worst = worst.max(m[(i, j)].abs());
            }
        }
        worst
    };

    let mut sweeps = 0;
    while off(&m) > JACOBI_TOLERANCE {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                off_diag: off(&m),
            });
        }
        sweeps += 1;
        for i in 0..p {
            for j in (i + 1)..p {
                let apq = m[(i, j)];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                rotate(&mut m, &mut v, i, j);
            }
        }
    }

    let mut order: Vec<usize> = (0..p).collect();
    // stable: equal eigenvalues keep ascending original index
    order.sort_by(|&x, &y| m[(y, y)].total_cmp(&m[(x, x)]));
    let values = order.iter().map(|&k| m[(k, k)]).collect();
    let vectors = Matrix::from_fn(p, p, |i, k| v[(i, order[k])]);
    Ok(EigenSystem {
        values,
        vectors,
        sweeps,
    })
}

/// Annihilates `m[(p, q)]` with a plane rotation and accumulates it into `v`.
fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let n = m.rows();
    let apq = m[(p, q)];
    let app = m[(p, p)];
    let aqq = m[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    // theta = ±inf (tiny apq) gives t = 0, a no-op rotation
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = m[(k, p)];
        let akq = m[(k, q)];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        m[(k, p)] = new_kp;
        m[(p, k)] = new_kp;
        m[(k, q)] = new_kq;
        m[(q, k)] = new_kq;
    }
    m[(p, p)] = app - t * apq;
    m[(q, q)] = aqq + t * apq;
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Matrix) -> Result<Matrix> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    for j in 0..n {
        let d = a[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if !(d > 1e-13 * scale.max(f64::MIN_POSITIVE)) {
            return Err(Error::Singular);
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let s = a[(i, j)] - dot(&l.row(i)[..j], &l.row(j)[..j]);
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `A x = b` for symmetric positive-definite `A`.
pub fn solve_spd(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    if b.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: b.len(),
        });
    }
    let l = cholesky(a)?;
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - dot(&l.row(i)[..i], &y[..i])) / l[(i, i)];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| l[(k, i)] * x[k]).sum();
        x[i] = (y[i] - s) / l[(i, i)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("x{j}")).collect()
    }

    fn equicorrelation(p: usize, r: f64) -> Matrix {
        Matrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { r })
    }

    #[test]
    fn standardize_hand_example() {
        let x = Matrix::from_rows(&[vec![1.0, 10.0], vec![2.0, 0.0], vec![3.0, 5.0]]);
        let s = standardize_values(&x, &names(2)).unwrap();
        // population sd of {1,2,3} is sqrt(2/3)
        let z = 1.0 / (2.0f64 / 3.0).sqrt();
        let col = s.values.column(0);
        assert!((col[0] + z).abs() < 1e-12 && col[1].abs() < 1e-15 && (col[2] - z).abs() < 1e-12);
        assert!((z - 1.224_744_871_391_589).abs() < 1e-12);
    }

    #[test]
    fn standardize_is_idempotent() {
        let x = Matrix::from_rows(&[vec![1.0, 4.0], vec![2.0, -1.0], vec![7.0, 3.0], vec![0.5, 0.0]]);
        let once = standardize_values(&x, &names(2)).unwrap();
        let twice = standardize_values(&once.values, &names(2)).unwrap();
        assert!(once.values.max_abs_diff(&twice.values) < 1e-9);
    }

    #[test]
    fn constant_column_is_named() {
        let x = Matrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]]);
        let err = standardize_values(&x, &["a".into(), "flat".into()]).unwrap_err();
        assert!(matches!(err, Error::ConstantColumn(c) if c == "flat"));
    }

    #[test]
    fn identical_columns_correlate_perfectly() {
        let x = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![4.0, 4.0]]);
        let r = correlation(&standardize_values(&x, &names(2)).unwrap());
        assert!((r.values[(0, 1)] - 1.0).abs() < 1e-12);
        assert_eq!(r.values[(0, 0)], 1.0);
    }

    #[test]
    fn constructed_half_correlation() {
        // y = 0.5 x + sqrt(0.75) z with z centred, unit-variance and orthogonal to x
        let x = [1.0, -1.0, 1.0, -1.0];
        let z = [1.0, 1.0, -1.0, -1.0];
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| vec![x[i], 0.5 * x[i] + 0.75f64.sqrt() * z[i]])
            .collect();
        let r = correlation(&standardize_values(&Matrix::from_rows(&rows), &names(2)).unwrap());
        assert!((r.values[(0, 1)] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn identity_spectrum() {
        let e = symmetric_eigen(&Matrix::identity(4)).unwrap();
        assert_eq!(e.values, vec![1.0; 4]);
        assert_eq!(e.sweeps, 0);
    }

    #[test]
    fn two_by_two_analytic() {
        let e = symmetric_eigen(&equicorrelation(2, 0.6)).unwrap();
        assert!((e.values[0] - 1.6).abs() < 1e-12);
        assert!((e.values[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn equicorrelation_analytic() {
        let a = equicorrelation(5, 0.3);
        let e = symmetric_eigen(&a).unwrap();
        assert!((e.values[0] - 2.2).abs() < 1e-12);
        for &l in &e.values[1..] {
            assert!((l - 0.7).abs() < 1e-12);
        }
        assert!(e.residual(&a) < 1e-10);
        assert!(e.orthonormality_error() < 1e-12);
        assert!(e.reconstruct().max_abs_diff(&a) < 1e-12);
    }

    #[test]
    fn rejects_asymmetric_input() {
        let a = Matrix::from_rows(&[vec![1.0, 0.5], vec![0.2, 1.0]]);
        assert!(matches!(symmetric_eigen(&a), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn spd_solve_roundtrip() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]]);
        let b = [1.0, 2.0, 3.0];
        let x = solve_spd(&a, &b).unwrap();
        for (ax, bi) in a.mat_vec(&x).iter().zip(&b) {
            assert!((ax - bi).abs() < 1e-12);
        }
        let singular = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(matches!(solve_spd(&singular, &[1.0, 1.0]), Err(Error::Singular)));
    }
}
