//! Dense and iterative linear solvers used by the steady-state and
//! propagation code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::operators::{SparseMatrix, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

pub(crate) fn norm_inf(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Dense LU with partial pivoting followed by two steps of iterative
/// refinement. Fails when a pivot falls below `pivot_floor` relative to the
/// largest pivot.
pub(crate) struct DenseLu {
    matrix: DMatrix<C64>,
    lu: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl DenseLu {
    pub fn new(matrix: DMatrix<C64>, pivot_floor: f64) -> Result<Self> {
        let lu = matrix.clone().lu();
        let u = lu.u();
        let pivots: Vec<f64> = u.diagonal().iter().map(|z| z.norm()).collect();
        let max = pivots.iter().cloned().fold(0.0, f64::max);
        let min = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(max > 0.0) || min < pivot_floor * max {
            return Err(Error::Degeneracy(format!("pivot ratio {:e} below {pivot_floor:e}", min / max)));
        }
        Ok(DenseLu { matrix, lu })
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let rhs = DVector::from_column_slice(b);
        let mut x = self.lu.solve(&rhs).expect("pivots were checked at factorization");
        for _ in 0..2 {
            let r = &rhs - &self.matrix * &x;
            if let Some(dx) = self.lu.solve(&r) {
                x += dx;
            }
        }
        x.as_slice().to_vec()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }
}

/// Incomplete LU factorization with zero fill-in. Zero pivots are replaced by
/// a small shift so the factorization always exists; it is only used as a
/// preconditioner.
pub(crate) struct Ilu0 {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C64>,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &SparseMatrix) -> Self {
        let (indptr, indices, data) = a.raw_parts();
        let n = a.rows();
        let mut indptr = indptr.to_vec();
        let mut indices = indices.to_vec();
        let mut values = data.to_vec();
        // Every row needs a diagonal slot.
        if (0..n).any(|r| indices[indptr[r]..indptr[r + 1]].binary_search(&r).is_err()) {
            let mut triplets: Vec<(usize, usize, C64)> = a.iter().collect();
            triplets.extend((0..n).map(|r| (r, r, ZERO)));
            let mut ni = vec![0usize; n + 1];
            triplets.sort_unstable_by_key(|x| (x.0, x.1));
            let mut idx = Vec::new();
            let mut val: Vec<C64> = Vec::new();
            let mut last = None;
            for (r, c, v) in triplets {
                if last == Some((r, c)) {
                    *val.last_mut().unwrap() += v;
                } else {
                    idx.push(c);
                    val.push(v);
                    ni[r + 1] += 1;
                    last = Some((r, c));
                }
            }
            for r in 0..n {
                ni[r + 1] += ni[r];
            }
            indptr = ni;
            indices = idx;
            values = val;
        }
        let diag: Vec<usize> = (0..n)
            .map(|r| indptr[r] + indices[indptr[r]..indptr[r + 1]].binary_search(&r).unwrap())
            .collect();
        let scale = values.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        for i in 0..n {
            for kk in indptr[i]..diag[i] {
                let k = indices[kk];
                let mut pivot = values[diag[k]];
                if pivot.norm() < 1e-12 * scale {
                    pivot = C64::new(1e-3 * scale, 0.0);
                    values[diag[k]] = pivot;
                }
                let factor = values[kk] / pivot;
                values[kk] = factor;
                // a_ij -= factor * u_kj for j > k present in row i
                let mut jj = kk + 1;
                for uk in diag[k] + 1..indptr[k + 1] {
                    let j = indices[uk];
                    while jj < indptr[i + 1] && indices[jj] < j {
                        jj += 1;
                    }
                    if jj < indptr[i + 1] && indices[jj] == j {
                        let u = values[uk];
                        values[jj] -= factor * u;
                    }
                }
            }
            if values[diag[i]].norm() < 1e-12 * scale {
                values[diag[i]] = C64::new(1e-3 * scale, 0.0);
            }
        }
        Ilu0 { n, indptr, indices, values, diag }
    }

    pub fn apply(&self, b: &[C64]) -> Vec<C64> {
        let mut y = b.to_vec();
        for i in 0..self.n {
            let mut acc = y[i];
            for k in self.indptr[i]..self.diag[i] {
                acc -= self.values[k] * y[self.indices[k]];
            }
            y[i] = acc;
        }
        for i in (0..self.n).rev() {
            let mut acc = y[i];
            for k in self.diag[i] + 1..self.indptr[i + 1] {
                acc -= self.values[k] * y[self.indices[k]];
            }
            y[i] = acc / self.values[self.diag[i]];
        }
        y
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    pub restart: usize,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        GmresOptions { restart: 60, tolerance: 1e-13, max_iterations: 20_000 }
    }
}

/// Right-preconditioned restarted GMRES. Converges when
/// `‖b − Ax‖₂ ≤ tolerance · ‖b‖₂`, or returns the current iterate once a
/// restart cycle no longer reduces the true residual (roundoff floor). The
/// caller is expected to check the residual it cares about.
pub(crate) fn gmres(a: &SparseMatrix, b: &[C64], precond: &Ilu0, opts: &GmresOptions) -> Result<Vec<C64>> {
    let n = b.len();
    let bnorm = norm2(b).max(1e-300);
    let mut x = vec![ZERO; n];
    let m = opts.restart.max(1);
    let mut iterations = 0;
    let mut residual = 1.0;
    let mut previous = f64::INFINITY;
    while iterations < opts.max_iterations {
        let ax = a.matvec(&x);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        residual = beta / bnorm;
        if residual <= opts.tolerance || (residual > 0.5 * previous && residual < 1e-8) {
            return Ok(x);
        }
        previous = residual;
        let mut v: Vec<Vec<C64>> = vec![r.iter().map(|z| z / beta).collect()];
        let mut z_basis: Vec<Vec<C64>> = Vec::with_capacity(m);
        let mut h = vec![vec![ZERO; m]; m + 1];
        let mut cs = vec![ZERO; m];
        let mut sn = vec![ZERO; m];
        let mut g = vec![ZERO; m + 1];
        g[0] = C64::new(beta, 0.0);
        let mut k_used = 0;
        for k in 0..m {
            iterations += 1;
            let z = precond.apply(&v[k]);
            let mut w = a.matvec(&z);
            z_basis.push(z);
            for (i, vi) in v.iter().enumerate() {
                let hik = dot(vi, &w);
                h[i][k] = hik;
                w.iter_mut().zip(vi).for_each(|(wj, vj)| *wj -= hik * vj);
            }
            let wnorm = norm2(&w);
            h[k + 1][k] = C64::new(wnorm, 0.0);
            for i in 0..k {
                let temp = cs[i].conj() * h[i][k] + sn[i].conj() * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = temp;
            }
            let (c, s) = givens(h[k][k], h[k + 1][k]);
            cs[k] = c;
            sn[k] = s;
            h[k][k] = c.conj() * h[k][k] + s.conj() * h[k + 1][k];
            h[k + 1][k] = ZERO;
            g[k + 1] = -s * g[k];
            g[k] = c.conj() * g[k];
            k_used = k + 1;
            residual = g[k + 1].norm() / bnorm;
            if residual <= opts.tolerance || wnorm == 0.0 {
                break;
            }
            v.push(w.iter().map(|z| z / wnorm).collect());
        }
        let mut y = vec![ZERO; k_used];
        for i in (0..k_used).rev() {
            let mut acc = g[i];
            for j in i + 1..k_used {
                acc -= h[i][j] * y[j];
            }
            y[i] = acc / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            x.iter_mut().zip(&z_basis[j]).for_each(|(xi, zi)| *xi += yj * zi);
        }
    }
    Err(Error::Solver { message: format!("GMRES did not converge in {} iterations", opts.max_iterations), residual })
}

/// Rotation `[c̄ s̄; −s c]` mapping `(a, b)` to `(ρ, 0)`.
fn givens(a: C64, b: C64) -> (C64, C64) {
    let rho = (a.norm_sqr() + b.norm_sqr()).sqrt();
    if rho == 0.0 {
        return (C64::new(1.0, 0.0), ZERO);
    }
    (a / rho, b / rho)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub(crate) fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let herm = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}
