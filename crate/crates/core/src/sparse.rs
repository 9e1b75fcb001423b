//! Compressed sparse row storage for the real symmetric bath matrices and
//! the handful of Krylov kernels built on top of it.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

/// Rows above this count use a parallel matrix-vector product.
const PAR_ROWS: usize = 8192;

/// Real sparse matrix in CSR layout.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n x n` matrix from (row, col, value) triplets. Duplicate
    /// entries are summed, explicit zeros are kept.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) out of bounds for n = {n}");
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx, values }
    }

    /// Symmetric tridiagonal matrix with the given diagonal and off-diagonal.
    pub fn tridiagonal(diag: &[f64], off: &[f64]) -> Self {
        let n = diag.len();
        assert!(off.len() + 1 == n || (n == 0 && off.is_empty()));
        let mut t = Vec::with_capacity(3 * n);
        for (i, &d) in diag.iter().enumerate() {
            t.push((i, i, d));
        }
        for (i, &b) in off.iter().enumerate() {
            t.push((i, i + 1, b));
            t.push((i + 1, i, b));
        }
        Self::from_triplets(n, &t)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterates over the stored entries of row `i` as (column, value).
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        match self.col_idx[a..b].binary_search(&j) {
            Ok(k) => self.values[a + k],
            Err(_) => 0.0,
        }
    }

    /// Exact structural and numerical symmetry check.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| self.get(j, i) == v))
    }

    /// Infinity norm; an upper bound on the spectral radius.
    pub fn max_abs_row_sum(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Gershgorin interval enclosing the spectrum of a symmetric matrix.
    pub fn gershgorin_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.n {
            let mut d = 0.0;
            let mut r = 0.0;
            for (j, v) in self.row(i) {
                if j == i {
                    d += v;
                } else {
                    r += v.abs();
                }
            }
            lo = lo.min(d - r);
            hi = hi.max(d + r);
        }
        (lo, hi)
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let kernel = |(i, yi): (usize, &mut f64)| {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        };
        if self.n >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(kernel);
        } else {
            y.iter_mut().enumerate().for_each(kernel);
        }
    }

    /// y = A x for complex x.
    pub fn mul_vec_c(&self, x: &[C64], y: &mut [C64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        let kernel = |(i, yi): (usize, &mut C64)| {
            let mut acc = C64::new(0.0, 0.0);
            for (j, v) in self.row(i) {
                acc += x[j] * v;
            }
            *yi = acc;
        };
        if self.n >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(kernel);
        } else {
            y.iter_mut().enumerate().for_each(kernel);
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Outcome of an iterative linear solve.
#[derive(Clone, Debug)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final ‖b − A x‖ / ‖b‖.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Conjugate gradients for `(A + shift I) x = b` with a symmetric positive
/// definite shifted matrix.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    shift: f64,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> (Vec<f64>, SolveReport) {
    let n = a.dim();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return (x, SolveReport { iterations: 0, relative_residual: 0.0, converged: true });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut it = 0;
    while it < max_iter {
        if rr.sqrt() <= rel_tol * bnorm {
            break;
        }
        a.mul_vec(&p, &mut ap);
        for (api, pi) in ap.iter_mut().zip(&p) {
            *api += shift * pi;
        }
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // Not positive definite along p.
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        it += 1;
    }
    // Recompute the true residual rather than trusting the recurrence.
    a.mul_vec(&x, &mut ap);
    let res: f64 = ap
        .iter()
        .zip(&x)
        .zip(b)
        .map(|((axi, xi), bi)| (bi - axi - shift * xi).powi(2))
        .sum::<f64>()
        .sqrt();
    let rel = res / bnorm;
    (x, SolveReport { iterations: it, relative_residual: rel, converged: rel <= rel_tol * 10.0 })
}

/// MINRES for symmetric, possibly indefinite `(A − shift I) x = b`.
pub fn minres(
    a: &CsrMatrix,
    shift: f64,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> (Vec<f64>, SolveReport) {
    minres_op(|x, y| a.mul_vec(x, y), shift, b, rel_tol, max_iter)
}

/// [`minres`] for any symmetric operator given as `y = A x`.
pub fn minres_op<F: Fn(&[f64], &mut [f64])>(
    a: F,
    shift: f64,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> (Vec<f64>, SolveReport) {
    // Paige-Saunders recurrence, following the standard textbook layout.
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return (x, SolveReport { iterations: 0, relative_residual: 0.0, converged: true });
    }
    let mut v_old = vec![0.0; n];
    let mut v: Vec<f64> = b.iter().map(|bi| bi / bnorm).collect();
    let mut w_old = vec![0.0; n];
    let mut w_older = vec![0.0; n];
    let mut beta = bnorm;
    let mut eta = bnorm;
    let (mut c_old, mut c) = (1.0, 1.0);
    let (mut s_old, mut s) = (0.0, 0.0);
    let mut av = vec![0.0; n];
    let mut it = 0;
    let mut resid = bnorm;
    while it < max_iter && resid > rel_tol * bnorm {
        a(&v, &mut av);
        let mut alpha = 0.0;
        for i in 0..n {
            av[i] -= shift * v[i];
            alpha += av[i] * v[i];
        }
        for i in 0..n {
            av[i] -= alpha * v[i] + beta * v_old[i];
        }
        let beta_new = norm2(&av);
        let delta = c * alpha - c_old * s * beta;
        let rho1 = (delta * delta + beta_new * beta_new).sqrt();
        let rho2 = s * alpha + c_old * c * beta;
        let rho3 = s_old * beta;
        let c_new = delta / rho1;
        let s_new = beta_new / rho1;
        let mut w = vec![0.0; n];
        for i in 0..n {
            w[i] = (v[i] - rho3 * w_older[i] - rho2 * w_old[i]) / rho1;
            x[i] += c_new * eta * w[i];
        }
        eta *= -s_new;
        resid = eta.abs();
        w_older = std::mem::replace(&mut w_old, w);
        v_old = std::mem::replace(&mut v, av.iter().map(|t| t / beta_new.max(f64::MIN_POSITIVE)).collect());
        beta = beta_new;
        c_old = c;
        s_old = s;
        c = c_new;
        s = s_new;
        it += 1;
        if beta_new == 0.0 {
            break;
        }
    }
    a(&x, &mut av);
    let res: f64 = av
        .iter()
        .zip(&x)
        .zip(b)
        .map(|((axi, xi), bi)| (bi - axi + shift * xi).powi(2))
        .sum::<f64>()
        .sqrt();
    let rel = res / bnorm;
    (x, SolveReport { iterations: it, relative_residual: rel, converged: rel <= rel_tol * 10.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> CsrMatrix {
        CsrMatrix::tridiagonal(&vec![2.0; n], &vec![-1.0; n - 1])
    }

    #[test]
    fn duplicate_triplets_are_summed() {
        let m = CsrMatrix::from_triplets(2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 3.0)]);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.nnz(), 2);
        assert!(m.is_symmetric());
    }

    #[test]
    fn matvec_matches_dense() {
        let m = laplacian(7);
        let x: Vec<f64> = (0..7).map(|i| (i as f64).sin()).collect();
        let mut y = vec![0.0; 7];
        m.mul_vec(&x, &mut y);
        let yd = m.to_dense() * nalgebra::DVector::from_vec(x);
        for i in 0..7 {
            assert!((y[i] - yd[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn cg_and_minres_solve_shifted_systems() {
        let m = laplacian(50);
        let b: Vec<f64> = (0..50).map(|i| 1.0 + i as f64 * 0.01).collect();
        let (x, rep) = conjugate_gradient(&m, 0.5, &b, 1e-13, 500);
        assert!(rep.converged, "{rep:?}");
        let (x2, rep2) = minres(&m, -0.5, &b, 1e-13, 500);
        assert!(rep2.converged, "{rep2:?}");
        for (a, c) in x.iter().zip(&x2) {
            assert!((a - c).abs() < 1e-10);
        }
        // Indefinite shift: interior of the spectrum [0, 4].
        let (_, rep3) = minres(&m, 1.3, &b, 1e-10, 5000);
        assert!(rep3.converged, "{rep3:?}");
    }

    #[test]
    fn gershgorin_encloses_laplacian() {
        let (lo, hi) = laplacian(10).gershgorin_bounds();
        assert_eq!((lo, hi), (0.0, 4.0));
    }
}
