//! Sparse linear algebra for the face-based stencils: triplet storage plus
//! Jacobi-preconditioned conjugate gradients (symmetric pressure systems) and
//! BiCGSTAB (momentum and scalar transport).

#[derive(Debug, thiserror::Error)]
pub enum LinalgError {
    #[error("{method} breakdown at iteration {iter} (rho = {rho:e})")]
    Breakdown {
        method: &'static str,
        iter: usize,
        rho: f64,
    },
    #[error("non-positive diagonal at row {0}: {1}")]
    BadDiagonal(usize, f64),
}

/// Sparse matrix in diagonal + off-diagonal triplet form.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub n: usize,
    pub diag: Vec<f64>,
    /// (row, col, coefficient), col != row.
    pub off: Vec<(usize, usize, f64)>,
}

impl SparseMatrix {
    pub fn new(n: usize) -> Self {
        SparseMatrix {
            n,
            diag: vec![0.0; n],
            off: Vec::new(),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, coef: f64) {
        if row == col {
            self.diag[row] += coef;
        } else {
            self.off.push((row, col, coef));
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            y[i] = self.diag[i] * x[i];
        }
        for &(r, c, a) in &self.off {
            y[r] += a * x[c];
        }
    }

    /// r = A x - b
    pub fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n];
        self.matvec(x, &mut r);
        for i in 0..self.n {
            r[i] -= b[i];
        }
        r
    }

    /// Dense transpose-free row dump, used only by small test oracles.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            a[i][i] = self.diag[i];
        }
        for &(r, c, v) in &self.off {
            a[r][c] += v;
        }
        a
    }

    pub fn check_positive_diagonal(&self) -> Result<(), LinalgError> {
        for (i, &d) in self.diag.iter().enumerate() {
            if !(d > 0.0) {
                return Err(LinalgError::BadDiagonal(i, d));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    pub initial_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned conjugate gradients for SPD systems. Converges to
/// `rel_tol` times the initial residual norm or `abs_tol`, whichever is hit
/// first.
pub fn solve_cg(
    a: &SparseMatrix,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    abs_tol: f64,
    max_iter: usize,
) -> Result<SolveStats, LinalgError> {
    let n = a.n;
    let mut r = a.residual(x, b);
    for v in r.iter_mut() {
        *v = -*v;
    }
    let r0 = norm(&r);
    if r0 <= abs_tol {
        return Ok(SolveStats {
            iterations: 0,
            residual: r0,
            initial_residual: r0,
        });
    }
    let inv_diag: Vec<f64> = a.diag.iter().map(|&d| if d != 0.0 { 1.0 / d } else { 0.0 }).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut res = r0;
    for it in 1..=max_iter {
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            // A curvature at round-off scale means the search direction has
            // degenerated into noise (residual at the attainable floor):
            // stop with the current iterate. Clearly negative curvature is a
            // genuine non-SPD breakdown.
            let scale = norm(&p) * norm(&ap);
            if pap.abs() <= 1e-14 * scale {
                return Ok(SolveStats {
                    iterations: it,
                    residual: res,
                    initial_residual: r0,
                });
            }
            return Err(LinalgError::Breakdown {
                method: "cg",
                iter: it,
                rho: pap,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm(&r);
        if res <= rel_tol * r0 || res <= abs_tol {
            return Ok(SolveStats {
                iterations: it,
                residual: res,
                initial_residual: r0,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok(SolveStats {
        iterations: max_iter,
        residual: res,
        initial_residual: r0,
    })
}

/// Jacobi-preconditioned BiCGSTAB for nonsymmetric systems.
pub fn solve_bicgstab(
    a: &SparseMatrix,
    b: &[f64],
    x: &mut [f64],
    rel_tol: f64,
    abs_tol: f64,
    max_iter: usize,
) -> Result<SolveStats, LinalgError> {
    let n = a.n;
    let inv_diag: Vec<f64> = a.diag.iter().map(|&d| if d != 0.0 { 1.0 / d } else { 0.0 }).collect();
    let mut r = a.residual(x, b);
    for v in r.iter_mut() {
        *v = -*v;
    }
    let r0 = norm(&r);
    if r0 <= abs_tol {
        return Ok(SolveStats {
            iterations: 0,
            residual: r0,
            initial_residual: r0,
        });
    }
    let r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut res = r0;
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 {
            return Err(LinalgError::Breakdown {
                method: "bicgstab",
                iter: it,
                rho: rho_new,
            });
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat: Vec<f64> = p.iter().zip(&inv_diag).map(|(pi, di)| pi * di).collect();
        a.matvec(&p_hat, &mut v);
        alpha = rho / dot(&r_hat, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm(&s) <= rel_tol * r0 || norm(&s) <= abs_tol {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok(SolveStats {
                iterations: it,
                residual: norm(&s),
                initial_residual: r0,
            });
        }
        let s_hat: Vec<f64> = s.iter().zip(&inv_diag).map(|(si, di)| si * di).collect();
        let mut t = vec![0.0; n];
        a.matvec(&s_hat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r);
        if res <= rel_tol * r0 || res <= abs_tol {
            return Ok(SolveStats {
                iterations: it,
                residual: res,
                initial_residual: r0,
            });
        }
        if omega == 0.0 {
            return Err(LinalgError::Breakdown {
                method: "bicgstab",
                iter: it,
                rho: omega,
            });
        }
    }
    Ok(SolveStats {
        iterations: max_iter,
        residual: res,
        initial_residual: r0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> SparseMatrix {
        let mut a = SparseMatrix::new(n);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.add(i, i + 1, -1.0);
            }
        }
        a
    }

    #[test]
    fn cg_solves_laplacian() {
        let n = 50;
        let a = laplacian_1d(n);
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&x_true, &mut b);
        let mut x = vec![0.0; n];
        let stats = solve_cg(&a, &b, &mut x, 1e-12, 1e-300, 500).unwrap();
        assert!(stats.residual <= 1e-12 * stats.initial_residual);
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn bicgstab_solves_nonsymmetric() {
        let n = 40;
        let mut a = laplacian_1d(n);
        // Add an advection-like skew part.
        for i in 0..n - 1 {
            a.add(i, i + 1, 0.4);
            a.add(i + 1, i, -0.4);
        }
        let x_true: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.1).cos()).collect();
        let mut b = vec![0.0; n];
        a.matvec(&x_true, &mut b);
        let mut x = vec![0.0; n];
        let stats = solve_bicgstab(&a, &b, &mut x, 1e-12, 1e-300, 1000).unwrap();
        assert!(stats.residual <= 1e-10 * stats.initial_residual.max(1.0));
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn diagonal_check() {
        let mut a = SparseMatrix::new(3);
        a.add(0, 0, 1.0);
        a.add(1, 1, 1.0);
        assert!(a.check_positive_diagonal().is_err());
        a.add(2, 2, 0.5);
        assert!(a.check_positive_diagonal().is_ok());
    }
}
