//! Small deterministic linear solvers used by the difference schemes.
//!
//! The tridiagonal solve backs the one-dimensional two-point problems; the
//! compressed sparse rows with conjugate gradients back the two- and
//! three-dimensional finite-volume systems. Everything here is sequential
//! and allocation-light so repeated solves are bit-reproducible.

use crate::error::{Error, Result};

/// Default relative residual target for conjugate gradients.
pub const CG_TOL_REL: f64 = 1e-13;
/// Hard cap on conjugate-gradient iterations.
pub const CG_MAX_ITER: usize = 200_000;

/// Solve a tridiagonal system by the standard forward sweep.
///
/// `sub` has length n−1 (below the diagonal), `diag` length n, `sup` length
/// n−1. Fails when a pivot collapses.
pub fn thomas_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    assert_eq!(sub.len(), n - 1);
    assert_eq!(sup.len(), n - 1);
    assert_eq!(rhs.len(), n);
    let mut c = vec![0.0; n - 1];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv.abs() < 1e-300 {
        return Err(Error::SolverFailure("tridiagonal pivot collapse".into()));
    }
    if n > 1 {
        c[0] = sup[0] / piv;
    }
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - sub[i - 1] * c[i - 1];
        if piv.abs() < 1e-300 {
            return Err(Error::SolverFailure("tridiagonal pivot collapse".into()));
        }
        if i < n - 1 {
            c[i] = sup[i] / piv;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Symmetric positive definite matrix in compressed sparse row form.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

/// Row-by-row builder; entries within a row may arrive in any order and
/// duplicate columns accumulate.
pub struct CsrBuilder {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl CsrBuilder {
    pub fn new(n: usize) -> Self {
        CsrBuilder { n, rows: vec![Vec::new(); n] }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.rows[i].push((j, v));
    }

    pub fn build(self) -> CsrMatrix {
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in self.rows {
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for (j, v) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            for (j, v) in merged {
                col_idx.push(j);
                vals.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix { n: self.n, row_ptr, col_idx, vals }
    }
}

impl CsrMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    d[i] = self.vals[k];
                }
            }
        }
        d
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k], self.vals[k]))
    }

    /// Add `shift[i]` to each diagonal entry. Every row must already hold a
    /// diagonal slot, which assembled difference operators always do.
    pub fn add_to_diagonal(&mut self, shift: &[f64]) {
        assert_eq!(shift.len(), self.n);
        for i in 0..self.n {
            let mut hit = false;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    self.vals[k] += shift[i];
                    hit = true;
                }
            }
            assert!(hit, "row {i} has no diagonal entry");
        }
    }
}

/// Jacobi-preconditioned conjugate gradients for SPD systems.
///
/// Converges to relative residual `tol_rel` in the Euclidean norm of the
/// right side; iteration order is fixed, so results are reproducible.
pub fn cg_solve(a: &CsrMatrix, rhs: &[f64], tol_rel: f64, x0: Option<&[f64]>) -> Result<Vec<f64>> {
    let n = a.n();
    assert_eq!(rhs.len(), n);
    let rhs_norm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rhs_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| {
            if d.abs() < 1e-300 {
                0.0
            } else {
                1.0 / d
            }
        })
        .collect();

    let mut x = match x0 {
        Some(g) => g.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = vec![0.0; n];
    a.mul_vec(&x, &mut r);
    for i in 0..n {
        r[i] = rhs[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    let target = tol_rel * rhs_norm;

    for _ in 0..CG_MAX_ITER {
        let rnorm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rnorm <= target {
            return Ok(x);
        }
        a.mul_vec(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            return Err(Error::SolverFailure(
                "conjugate gradients met a nonpositive curvature direction".into(),
            ));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverFailure("conjugate gradients exhausted the iteration cap".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_reproduces_dense_solve() {
        // Discrete second difference with Dirichlet ends: u'' = -2 gives the
        // parabola x(1 - x) exactly at the nodes.
        let n = 11;
        let h = 1.0 / (n as f64 + 1.0);
        let sub = vec![-1.0; n - 1];
        let sup = vec![-1.0; n - 1];
        let diag = vec![2.0; n];
        let rhs = vec![2.0 * h * h; n];
        let u = thomas_solve(&sub, &diag, &sup, &rhs).unwrap();
        for (i, ui) in u.iter().enumerate() {
            let x = (i as f64 + 1.0) * h;
            assert!((ui - x * (1.0 - x)).abs() < 1e-14);
        }
    }

    #[test]
    fn cg_matches_thomas_on_tridiagonal() {
        let n = 64;
        let mut b = CsrBuilder::new(n);
        let mut diag = vec![0.0; n];
        for i in 0..n {
            let d = 2.0 + 0.01 * i as f64;
            diag[i] = d;
            b.add(i, i, d);
            if i + 1 < n {
                b.add(i, i + 1, -1.0);
                b.add(i + 1, i, -1.0);
            }
        }
        let a = b.build();
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let sub = vec![-1.0; n - 1];
        let sup = vec![-1.0; n - 1];
        let direct = thomas_solve(&sub, &diag, &sup, &rhs).unwrap();
        let iterative = cg_solve(&a, &rhs, 1e-14, None).unwrap();
        for (d, it) in direct.iter().zip(&iterative) {
            assert!((d - it).abs() < 1e-10);
        }
    }

    #[test]
    fn cg_is_deterministic() {
        let n = 100;
        let mut b = CsrBuilder::new(n);
        for i in 0..n {
            b.add(i, i, 4.0);
            if i + 1 < n {
                b.add(i, i + 1, -1.0);
                b.add(i + 1, i, -1.0);
            }
            if i + 10 < n {
                b.add(i, i + 10, -0.5);
                b.add(i + 10, i, -0.5);
            }
        }
        let a = b.build();
        let rhs: Vec<f64> = (0..n).map(|i| ((i * i) as f64).cos()).collect();
        let s1 = cg_solve(&a, &rhs, 1e-13, None).unwrap();
        let s2 = cg_solve(&a, &rhs, 1e-13, None).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn duplicate_entries_accumulate() {
        let mut b = CsrBuilder::new(2);
        b.add(0, 0, 1.5);
        b.add(0, 0, 0.5);
        b.add(1, 1, 3.0);
        let a = b.build();
        let mut y = vec![0.0; 2];
        a.mul_vec(&[1.0, 1.0], &mut y);
        assert_eq!(y, vec![2.0, 3.0]);
    }
}
