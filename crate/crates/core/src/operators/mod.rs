//! Truncated mode operators, tensor embedding, and the Liouvillian
//! superoperator.
//!
//! Vectorization is column-stacking throughout the crate: the density-matrix
//! element `(i, j)` of an `n × n` matrix lives at vector index `j * n + i`.
//! With this convention `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`.

mod sparse;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub use sparse::SparseMatrix;

pub type C64 = Complex64;

/// Matrices with `rows ≤ DENSE_DIM_LIMIT` default to dense storage.
pub const DENSE_DIM_LIMIT: usize = 16;

/// Hermiticity tolerance applied to Hamiltonians on input.
pub const HERMITICITY_TOL: f64 = 1e-12;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// A complex matrix in dense or sparse storage. All arithmetic accepts either
/// storage and picks the result storage from the operands.
#[derive(Debug, Clone, PartialEq)]
pub enum ComplexMatrix {
    Dense(DMatrix<C64>),
    Sparse(SparseMatrix),
}

impl ComplexMatrix {
    /// Stores `m` densely when it is small or well filled, sparsely otherwise.
    pub fn auto(m: SparseMatrix) -> Self {
        if m.rows() <= DENSE_DIM_LIMIT || m.fill_ratio() > 0.3 {
            ComplexMatrix::Dense(m.to_dense())
        } else {
            ComplexMatrix::Sparse(m)
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::auto(SparseMatrix::identity(n))
    }

    pub fn rows(&self) -> usize {
        match self {
            ComplexMatrix::Dense(m) => m.nrows(),
            ComplexMatrix::Sparse(m) => m.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            ComplexMatrix::Dense(m) => m.ncols(),
            ComplexMatrix::Sparse(m) => m.cols(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, ComplexMatrix::Sparse(_))
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        match self {
            ComplexMatrix::Dense(m) => m[(r, c)],
            ComplexMatrix::Sparse(m) => m.get(r, c),
        }
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        match self {
            ComplexMatrix::Dense(m) => m.clone(),
            ComplexMatrix::Sparse(m) => m.to_dense(),
        }
    }

    pub fn to_sparse(&self) -> SparseMatrix {
        match self {
            ComplexMatrix::Dense(m) => SparseMatrix::from_dense(m),
            ComplexMatrix::Sparse(m) => m.clone(),
        }
    }

    pub fn adjoint(&self) -> Self {
        match self {
            ComplexMatrix::Dense(m) => ComplexMatrix::Dense(m.adjoint()),
            ComplexMatrix::Sparse(m) => ComplexMatrix::Sparse(m.adjoint()),
        }
    }

    pub fn scale(&self, factor: C64) -> Self {
        match self {
            ComplexMatrix::Dense(m) => ComplexMatrix::Dense(m * factor),
            ComplexMatrix::Sparse(m) => ComplexMatrix::Sparse(m.scale(factor)),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(match (self, other) {
            (ComplexMatrix::Dense(a), ComplexMatrix::Dense(b)) => ComplexMatrix::Dense(a + b),
            _ => ComplexMatrix::auto(self.to_sparse().add(&other.to_sparse())),
        })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols() != other.rows() {
            return Err(Error::Layout(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows(),
                self.cols(),
                other.rows(),
                other.cols()
            )));
        }
        Ok(match (self, other) {
            (ComplexMatrix::Dense(a), ComplexMatrix::Dense(b)) => ComplexMatrix::Dense(a * b),
            _ => ComplexMatrix::auto(self.to_sparse().matmul(&other.to_sparse())),
        })
    }

    pub fn kron(&self, other: &Self) -> Self {
        match (self, other) {
            (ComplexMatrix::Dense(a), ComplexMatrix::Dense(b))
                if a.nrows() * b.nrows() <= DENSE_DIM_LIMIT =>
            {
                ComplexMatrix::Dense(a.kronecker(b))
            }
            _ => ComplexMatrix::auto(self.to_sparse().kron(&other.to_sparse())),
        }
    }

    /// Largest entry-wise deviation from Hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.to_dense();
        (&d - d.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.rows() != other.rows() || self.cols() != other.cols() {
            return Err(Error::Layout(format!(
                "shape mismatch: {}x{} vs {}x{}",
                self.rows(),
                self.cols(),
                other.rows(),
                other.cols()
            )));
        }
        Ok(())
    }
}

/// Tensor-product structure `[d_emitter, d_sensor1, …]` with the emitter in
/// slot 0 and slot 0 the most significant digit of the basis index.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SpaceLayout {
    dims: Vec<usize>,
}

impl SpaceLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        match dims.first() {
            Some(2) => {}
            Some(&d) => {
                return Err(Error::Layout(format!("emitter slot must have dimension 2, got {d}")))
            }
            None => return Err(Error::Layout("empty layout".into())),
        }
        if let Some(&d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidDimension(d));
        }
        Ok(SpaceLayout { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn slots(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Occupation of every slot for basis index `index`.
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, &d) in self.dims.iter().enumerate().rev() {
            out[slot] = index % d;
            index /= d;
        }
        out
    }
}

/// Lowering operator on a `dim`-level ladder: `√m` at `(m−1, m)`.
pub fn annihilation_op(dim: usize) -> Result<ComplexMatrix> {
    if dim < 2 {
        return Err(Error::InvalidDimension(dim));
    }
    let triplets = (1..dim).map(|m| (m - 1, m, C64::new((m as f64).sqrt(), 0.0))).collect();
    Ok(ComplexMatrix::auto(SparseMatrix::from_triplets(dim, dim, triplets)))
}

/// Embeds `op` at `slot`: `1 ⊗ … ⊗ op ⊗ … ⊗ 1`.
pub fn lift(op: &ComplexMatrix, slot: usize, layout: &SpaceLayout) -> Result<ComplexMatrix> {
    let dims = layout.dims();
    if slot >= dims.len() {
        return Err(Error::Layout(format!("slot {slot} out of range for {} slots", dims.len())));
    }
    if op.rows() != dims[slot] || op.cols() != dims[slot] {
        return Err(Error::Layout(format!(
            "operator of size {}x{} does not fit slot {slot} of dimension {}",
            op.rows(),
            op.cols(),
            dims[slot]
        )));
    }
    let left: usize = dims[..slot].iter().product();
    let right: usize = dims[slot + 1..].iter().product();
    let lifted = SparseMatrix::identity(left).kron(&op.to_sparse()).kron(&SparseMatrix::identity(right));
    Ok(ComplexMatrix::auto(lifted))
}

/// A collapse channel `rate · (2cρc† − c†cρ − ρc†c) / 2`.
#[derive(Debug, Clone)]
pub struct Dissipator {
    pub rate: f64,
    pub op: ComplexMatrix,
}

impl Dissipator {
    pub fn new(rate: f64, op: ComplexMatrix) -> Self {
        Dissipator { rate, op }
    }
}

/// The generator of `∂ρ = i[ρ, H] + Σ (rate/2)(2cρc† − c†cρ − ρc†c)` acting on
/// column-stacked density matrices.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    generator: SparseMatrix,
    layout: SpaceLayout,
}

impl Liouvillian {
    pub fn generator(&self) -> &SparseMatrix {
        &self.generator
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    /// Hilbert-space dimension (the generator is `dim² × dim²`).
    pub fn dim(&self) -> usize {
        self.layout.total_dim()
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.generator.matvec(x)
    }

    /// `max_q |Σ_k L[(k,k), q]|`, i.e. the largest entry of `vec(1)ᵀ L`.
    pub fn trace_defect(&self) -> f64 {
        let n = self.dim();
        let mut sums = vec![ZERO; n * n];
        for k in 0..n {
            for (q, v) in self.generator.row(vec_index(k, k, n)) {
                sums[q] += v;
            }
        }
        sums.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Generator of the rescaled variables `ρ'ᵢⱼ = ρᵢⱼ / (sᵢ sⱼ)`, i.e.
    /// `D⁻¹ L D` with `D = diag(sᵢ sⱼ)`. Exact similarity; the spectrum is
    /// unchanged.
    pub fn rescaled(&self, scale: &[f64]) -> SparseMatrix {
        let n = self.dim();
        assert_eq!(scale.len(), n, "one scale factor per basis state");
        let d = |p: usize| scale[p % n] * scale[p / n];
        self.generator.map_entries(|p, q, v| v * (d(q) / d(p)))
    }
}

/// Position of density-matrix element `(i, j)` in the column-stacked vector.
pub fn vec_index(i: usize, j: usize, n: usize) -> usize {
    j * n + i
}

pub fn vectorize(m: &DMatrix<C64>) -> Vec<C64> {
    // nalgebra stores column-major, which is exactly column stacking.
    m.as_slice().to_vec()
}

pub fn unvectorize(v: &[C64], n: usize) -> DMatrix<C64> {
    assert_eq!(v.len(), n * n);
    DMatrix::from_column_slice(n, n, v)
}

fn validate_inputs(
    h: &ComplexMatrix,
    dissipators: &[Dissipator],
    layout: &SpaceLayout,
) -> Result<()> {
    let n = layout.total_dim();
    if h.rows() != n || h.cols() != n {
        return Err(Error::Model(format!("Hamiltonian is {}x{}, layout needs {n}x{n}", h.rows(), h.cols())));
    }
    let defect = h.hermiticity_defect();
    if defect > HERMITICITY_TOL {
        return Err(Error::Model(format!("Hamiltonian is not Hermitian (defect {defect:e})")));
    }
    for d in dissipators {
        if !(d.rate >= 0.0) || !d.rate.is_finite() {
            return Err(Error::Model(format!("dissipation rate must be nonnegative, got {}", d.rate)));
        }
        if d.op.rows() != n || d.op.cols() != n {
            return Err(Error::Model(format!(
                "collapse operator is {}x{}, layout needs {n}x{n}",
                d.op.rows(),
                d.op.cols()
            )));
        }
    }
    Ok(())
}

/// Assembles the Liouvillian from Kronecker products.
pub fn build_liouvillian(
    h: &ComplexMatrix,
    dissipators: &[Dissipator],
    layout: &SpaceLayout,
) -> Result<Liouvillian> {
    validate_inputs(h, dissipators, layout)?;
    let n = layout.total_dim();
    let id = SparseMatrix::identity(n);
    let h = h.to_sparse();

    // i[ρ, H] = −i Hρ + i ρH
    let mut generator = id.kron(&h).scale(-I).add(&h.transpose().kron(&id).scale(I));
    for d in dissipators.iter().filter(|d| d.rate > 0.0) {
        let c = d.op.to_sparse();
        let cdc = c.adjoint().matmul(&c);
        let half = C64::new(d.rate / 2.0, 0.0);
        let jump = c.conj().kron(&c).scale(C64::new(d.rate, 0.0));
        let anti = id.kron(&cdc).add(&cdc.transpose().kron(&id)).scale(-half);
        generator = generator.add(&jump).add(&anti);
    }
    Ok(Liouvillian { generator, layout: layout.clone() })
}

/// Dense generator built column by column from the action of the master
/// equation on matrix units `|i⟩⟨j|`. Independent of the Kronecker route in
/// [`build_liouvillian`].
pub fn build_liouvillian_dense(
    h: &ComplexMatrix,
    dissipators: &[Dissipator],
    layout: &SpaceLayout,
) -> Result<DMatrix<C64>> {
    validate_inputs(h, dissipators, layout)?;
    let n = layout.total_dim();
    let h = h.to_dense();
    let channels: Vec<(f64, DMatrix<C64>, DMatrix<C64>)> = dissipators
        .iter()
        .map(|d| {
            let c = d.op.to_dense();
            let cdc = c.adjoint() * &c;
            (d.rate, c, cdc)
        })
        .collect();
    let mut out = DMatrix::zeros(n * n, n * n);
    let mut unit = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            unit[(i, j)] = ONE;
            let mut drho = (&unit * &h - &h * &unit) * I;
            for (rate, c, cdc) in &channels {
                let term = c * &unit * c.adjoint() * C64::new(2.0, 0.0) - cdc * &unit - &unit * cdc;
                drho += term * C64::new(rate / 2.0, 0.0);
            }
            out.set_column(vec_index(i, j, n), &nalgebra::DVector::from_column_slice(drho.as_slice()));
            unit[(i, j)] = ZERO;
        }
    }
    Ok(out)
}
