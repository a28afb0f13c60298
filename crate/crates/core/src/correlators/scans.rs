//! Correlation scans over one or two frequency axes.

use serde::{Deserialize, Serialize};

use super::{CorrelationRequest, EvalOptions, Normalization};
use crate::error::{Error, Result};
use crate::grid::{evaluate_grid, Axis, GridTemplate, Observable, ResultGrid};
use crate::model::SystemParams;
use crate::parallel::{Parallelism, Pool};

/// Degenerate `g^{(N)}_Γ(ω̃)`: one sensor of bundle order N at ω̃, its N-th
/// ladder moment normalized by the N-th power of its population.
pub fn autocorrelation_scan(
    params: &SystemParams,
    order: usize,
    linewidth: f64,
    grid: &[f64],
    opts: &EvalOptions,
) -> Result<ResultGrid> {
    if !(2..=4).contains(&order) {
        return Err(Error::Parameter(format!("autocorrelation order {order} is not one of 2, 3, 4")));
    }
    if grid.is_empty() {
        return Err(Error::Parameter("frequency grid is empty".into()));
    }
    let request = CorrelationRequest::uniform(&[order], &[0.0], linewidth)?.with_normalization(Normalization::Photon);
    evaluate_grid(
        params,
        &Observable::Correlation { request },
        &GridTemplate::free(vec![0.0], &[0]),
        vec![Axis::new("frequency", grid.to_vec())],
        &Pool::new(Parallelism::Global)?,
        opts,
    )
}

/// Correlation map with the frequencies of groups `free[0]` and `free[1]`
/// running over the two axes; all other fields of `request` stay fixed.
pub fn map2d(
    params: &SystemParams,
    request: &CorrelationRequest,
    free: [usize; 2],
    axes: [Axis; 2],
    opts: &EvalOptions,
) -> Result<ResultGrid> {
    request.validate()?;
    if free[0] == free[1] || free.iter().any(|&g| g >= request.groups()) {
        return Err(Error::Parameter(format!("free groups {free:?} are not two distinct groups of the request")));
    }
    evaluate_grid(
        params,
        &Observable::Correlation { request: request.clone() },
        &GridTemplate::free(request.frequencies.clone(), &free),
        axes.to_vec(),
        &Pool::new(Parallelism::Global)?,
        opts,
    )
}

/// The plane `Σ c_μ ω̃_μ = offset` in a three-group frequency space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub coefficients: Vec<f64>,
    pub offset: f64,
}

impl Plane {
    /// Pins `ω̃_k = value`.
    pub fn pinned(groups: usize, k: usize, value: f64) -> Self {
        let mut coefficients = vec![0.0; groups];
        coefficients[k] = 1.0;
        Plane { coefficients, offset: value }
    }

    /// The last group with a nonzero coefficient is solved for; the other two
    /// span the grid, in group order.
    pub fn template(&self) -> Result<(GridTemplate, [usize; 2])> {
        let c = &self.coefficients;
        if c.len() != 3 || c.iter().chain([&self.offset]).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("a plane needs three finite coefficients and a finite offset".into()));
        }
        let pinned = (0..3).rev().find(|&k| c[k] != 0.0).ok_or_else(|| Error::Parameter("plane has no normal".into()))?;
        let free: Vec<usize> = (0..3).filter(|&k| k != pinned).collect();
        let mut base = vec![0.0; 3];
        base[pinned] = self.offset / c[pinned];
        let directions = free
            .iter()
            .map(|&f| {
                let mut d = vec![0.0; 3];
                d[f] = 1.0;
                d[pinned] = -c[f] / c[pinned];
                d
            })
            .collect();
        Ok((GridTemplate { base, directions }, [free[0], free[1]]))
    }
}

/// Slice of a three-group correlation volume along `plane`.
pub fn cut3d(
    params: &SystemParams,
    request: &CorrelationRequest,
    plane: &Plane,
    axes: [Axis; 2],
    opts: &EvalOptions,
) -> Result<ResultGrid> {
    request.validate()?;
    if request.groups() != 3 {
        return Err(Error::Parameter(format!("a volume cut needs three groups, got {}", request.groups())));
    }
    let (template, _) = plane.template()?;
    evaluate_grid(
        params,
        &Observable::Correlation { request: request.clone() },
        &template,
        axes.to_vec(),
        &Pool::new(Parallelism::Global)?,
        opts,
    )
}
