//! Stationary density matrices of a Liouvillian and their validation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gmres, hermitian_eigenvalues, norm_inf, DenseLu, GmresOptions, Ilu0};
use crate::operators::{unvectorize, vec_index, vectorize, ComplexMatrix, Liouvillian, SpaceLayout, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: DMatrix<C64>,
    layout: SpaceLayout,
}

impl DensityMatrix {
    pub fn new(matrix: DMatrix<C64>, layout: SpaceLayout) -> Result<Self> {
        let n = layout.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::Layout(format!(
                "density matrix is {}x{}, layout needs {n}x{n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(DensityMatrix { matrix, layout })
    }

    pub fn from_vector(v: &[C64], layout: SpaceLayout) -> Result<Self> {
        let n = layout.total_dim();
        if v.len() != n * n {
            return Err(Error::Layout(format!("vector of length {} for dimension {n}", v.len())));
        }
        Self::new(unvectorize(v, n), layout)
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn to_vector(&self) -> Vec<C64> {
        vectorize(&self.matrix)
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    /// `Tr[A ρ]`.
    pub fn expectation(&self, op: &ComplexMatrix) -> C64 {
        match op {
            ComplexMatrix::Dense(a) => (a * &self.matrix).trace(),
            ComplexMatrix::Sparse(a) => a.iter().map(|(r, c, v)| v * self.matrix[(c, r)]).sum(),
        }
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.matrix).first().copied().unwrap_or(0.0)
    }

    /// `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        0.5 * hermitian_eigenvalues(&(&self.matrix - &other.matrix)).iter().map(|e| e.abs()).sum::<f64>()
    }

    /// The product state with every slot in its lowest level.
    pub fn ground(layout: SpaceLayout) -> Self {
        let n = layout.total_dim();
        let mut m = DMatrix::zeros(n, n);
        m[(0, 0)] = C64::new(1.0, 0.0);
        DensityMatrix { matrix: m, layout }
    }

    pub fn maximally_mixed(layout: SpaceLayout) -> Self {
        let n = layout.total_dim();
        let m = DMatrix::identity(n, n) * C64::new(1.0 / n as f64, 0.0);
        DensityMatrix { matrix: m, layout }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverMethod {
    /// Direct factorization up to the row cap, iterative above it.
    Auto,
    Direct,
    Iterative,
}

#[derive(Debug, Clone)]
pub struct SteadyStateOptions {
    pub method: SolverMethod,
    /// Per-basis-state scale `s_i`; the solve runs in the variables
    /// `ρ_ij / (s_i s_j)`, which keeps weakly populated sectors at unit
    /// magnitude. `None` means no rescaling.
    pub scale: Option<Vec<f64>>,
    /// Largest generator (rows) handled by the dense direct path.
    pub direct_cap_rows: usize,
    /// Pivot ratio below which the system is declared degenerate.
    pub pivot_floor: f64,
    /// Also probe for a second stationary state (costs one extra solve).
    pub check_uniqueness: bool,
    pub gmres: GmresOptions,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        SteadyStateOptions {
            method: SolverMethod::Auto,
            scale: None,
            direct_cap_rows: 1024,
            pivot_floor: 1e-14,
            check_uniqueness: false,
            gmres: GmresOptions::default(),
        }
    }
}

pub fn solve_steady_state(l: &Liouvillian) -> Result<DensityMatrix> {
    solve_steady_state_with(l, &SteadyStateOptions::default())
}

/// Solves `L vec(ρ) = 0` with `Tr ρ = 1`.
///
/// The trace constraint replaces the population row (`(k,k)` row) of largest
/// diagonal magnitude among those of largest trace weight; the population rows are the linearly dependent ones
/// for a trace-preserving generator.
pub fn solve_steady_state_with(l: &Liouvillian, opts: &SteadyStateOptions) -> Result<DensityMatrix> {
    let n = l.dim();
    let defect = l.trace_defect();
    let lnorm = l.generator().norm_inf();
    if defect > 1e-10 * lnorm.max(1.0) {
        return Err(Error::Model(format!("generator is not trace preserving (defect {defect:e})")));
    }
    let scale = match &opts.scale {
        Some(s) => {
            if s.len() != n || s.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::Parameter("scale must hold one positive factor per basis state".into()));
            }
            s.clone()
        }
        None => vec![1.0; n],
    };
    let d = |p: usize| scale[p % n] * scale[p / n];
    let mut generator = l.rescaled(&scale);

    // The replaced row is only satisfied through the trace constraint, so its
    // residual is amplified by (largest weight)/(its weight): restrict to
    // the heaviest population rows before maximizing the diagonal.
    let heaviest = (0..n).map(|k| d(vec_index(k, k, n))).fold(0.0, f64::max);
    let replaced = (0..n)
        .map(|k| vec_index(k, k, n))
        .filter(|&p| d(p) >= heaviest * (1.0 - 1e-12))
        .max_by(|&a, &b| generator.get(a, a).norm().partial_cmp(&generator.get(b, b).norm()).unwrap())
        .expect("nonempty space");
    let trace_row: Vec<(usize, C64)> =
        (0..n).map(|k| vec_index(k, k, n)).map(|p| (p, C64::new(d(p), 0.0))).collect();
    let full_generator = generator.clone();
    generator.replace_row(replaced, &trace_row);
    let mut rhs = vec![C64::new(0.0, 0.0); n * n];
    rhs[replaced] = C64::new(1.0, 0.0);

    let rows = n * n;
    let direct = match opts.method {
        SolverMethod::Direct => true,
        SolverMethod::Iterative => false,
        SolverMethod::Auto => rows <= opts.direct_cap_rows,
    };
    let scaled = if direct {
        let lu = DenseLu::new(generator.to_dense(), opts.pivot_floor)?;
        let x = lu.solve(&rhs);
        if opts.check_uniqueness {
            check_second_candidate(&full_generator.to_dense(), lu.matrix(), replaced, &x)?;
        }
        x
    } else {
        let ilu = Ilu0::new(&generator);
        gmres(&generator, &rhs, &ilu, &opts.gmres)?
    };

    let physical: Vec<C64> = scaled.iter().enumerate().map(|(p, v)| v * d(p)).collect();
    let residual = norm_inf(&l.apply(&physical));
    if residual > 1e-10 * lnorm {
        return Err(Error::Solver {
            message: "stationary residual above 1e-10·‖L‖".into(),
            residual: residual / lnorm,
        });
    }
    DensityMatrix::from_vector(&physical, l.layout().clone())
}

/// Inverse iteration on the bordered system whose constraint row is the found
/// stationary vector itself. A second stationary state orthogonal to the first
/// would make that system singular; its smallest singular value is estimated
/// and compared against the generator norm.
fn check_second_candidate(
    generator: &DMatrix<C64>,
    bordered: &DMatrix<C64>,
    replaced: usize,
    x: &[C64],
) -> Result<()> {
    let size = x.len();
    let xnorm = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let mut probe = bordered.clone();
    for q in 0..size {
        probe[(replaced, q)] = x[q].conj() / xnorm;
    }
    let gnorm = generator
        .row_iter()
        .map(|r| r.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1e-300);
    let lu = match DenseLu::new(probe.clone(), 1e-15) {
        Ok(lu) => lu,
        Err(_) => return Err(Error::Degeneracy("bordered system with the found state is singular".into())),
    };
    // Deterministic start with components spread over the whole space.
    let mut y: Vec<C64> = (0..size)
        .map(|k| C64::new(((k * 7919) % 104729) as f64 / 104729.0 - 0.5, ((k * 104723) % 7907) as f64 / 7907.0 - 0.5))
        .collect();
    let mut sigma = f64::INFINITY;
    for _ in 0..4 {
        let ynorm = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        y.iter_mut().for_each(|v| *v /= ynorm);
        let z = lu.solve(&y);
        let znorm = z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        sigma = sigma.min(1.0 / znorm);
        y = z;
    }
    let ynorm = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let yv = nalgebra::DVector::from_iterator(size, y.iter().map(|v| v / ynorm));
    let candidate_residual = norm_inf((generator * &yv).as_slice());
    if sigma < 1e-10 * gnorm && candidate_residual < 1e-10 * gnorm {
        return Err(Error::Degeneracy(format!(
            "second stationary candidate with residual {:e}",
            candidate_residual / gnorm
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub hermiticity: f64,
    pub trace: f64,
    /// Smallest acceptable eigenvalue (a small negative number).
    pub positivity: f64,
    /// Residual `‖L vec(ρ)‖∞` relative to `‖L‖∞`.
    pub residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { hermiticity: 1e-10, trace: 1e-10, positivity: -1e-8, residual: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ValidationReport {
    pub hermiticity_defect: f64,
    pub trace_defect: f64,
    pub min_eigenvalue: f64,
    /// `min_eigenvalue` clamped at zero when it sits within the positivity
    /// tolerance. Reporting only.
    pub min_eigenvalue_clamped: f64,
    pub residual: Option<f64>,
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn validate_density_matrix(
    rho: &DensityMatrix,
    generator: Option<&Liouvillian>,
    tol: &Tolerances,
) -> ValidationReport {
    let hermiticity_defect = rho.hermiticity_defect();
    let trace_defect = (rho.trace() - C64::new(1.0, 0.0)).norm();
    let min_eigenvalue = rho.min_eigenvalue();
    let min_eigenvalue_clamped =
        if min_eigenvalue < 0.0 && min_eigenvalue >= tol.positivity { 0.0 } else { min_eigenvalue };
    let residual = generator.map(|l| norm_inf(&l.apply(&rho.to_vector())) / l.generator().norm_inf().max(1e-300));
    let mut failures = Vec::new();
    if hermiticity_defect > tol.hermiticity {
        failures.push(format!("hermiticity defect {hermiticity_defect:e}"));
    }
    if trace_defect > tol.trace {
        failures.push(format!("trace defect {trace_defect:e}"));
    }
    if min_eigenvalue < tol.positivity {
        failures.push(format!("negative eigenvalue {min_eigenvalue:e}"));
    }
    if let Some(r) = residual {
        if r > tol.residual {
            failures.push(format!("stationary residual {r:e}"));
        }
    }
    ValidationReport { hermiticity_defect, trace_defect, min_eigenvalue, min_eigenvalue_clamped, residual, failures }
}
