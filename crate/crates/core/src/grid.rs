//! Result grids: axes, per-point values with their convergence records, and
//! the metadata needed to reproduce them.

use serde::{Deserialize, Serialize};

use crate::correlators::{g_tau_outcome, g_zero_delay, population_outcome, CorrelationRequest, EvalOptions, Outcome};
use crate::error::{Error, Result};
use crate::model::{dressed_splitting, SystemParams};
use crate::parallel::Pool;

/// Why a point carries no value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Flag {
    Ok = 0,
    /// Zero denominator: nothing reaches the sensors.
    Undefined = 1,
    Precision = 2,
    Convergence = 3,
    Truncation = 4,
    Solver = 5,
    Degeneracy = 6,
    Propagation = 7,
    Invalid = 8,
    Other = 9,
}

impl Flag {
    const ALL: [Flag; 10] = [
        Flag::Ok,
        Flag::Undefined,
        Flag::Precision,
        Flag::Convergence,
        Flag::Truncation,
        Flag::Solver,
        Flag::Degeneracy,
        Flag::Propagation,
        Flag::Invalid,
        Flag::Other,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Flag> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Flag::Ok => "ok",
            Flag::Undefined => "undefined",
            Flag::Precision => "precision",
            Flag::Convergence => "convergence",
            Flag::Truncation => "truncation",
            Flag::Solver => "solver",
            Flag::Degeneracy => "degeneracy",
            Flag::Propagation => "propagation",
            Flag::Invalid => "invalid",
            Flag::Other => "other",
        }
    }

    pub fn from_name(name: &str) -> Option<Flag> {
        Self::ALL.iter().copied().find(|f| f.name() == name)
    }

    pub fn from_error(e: &Error) -> Flag {
        match e {
            Error::Undefined(_) => Flag::Undefined,
            Error::Precision { .. } => Flag::Precision,
            Error::Convergence { .. } => Flag::Convergence,
            Error::Truncation { .. } => Flag::Truncation,
            Error::Solver { .. } => Flag::Solver,
            Error::Degeneracy(_) => Flag::Degeneracy,
            Error::Propagation(_) => Flag::Propagation,
            Error::Invalid(_) => Flag::Invalid,
            _ => Flag::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Axis { name: name.into(), values }
    }

    /// `points` evenly spaced values from `min` to `max` inclusive.
    pub fn linear(name: impl Into<String>, min: f64, max: f64, points: usize) -> Result<Self> {
        if points == 0 || !min.is_finite() || !max.is_finite() || (points > 1 && max <= min) {
            return Err(Error::Parameter(format!("bad axis [{min}, {max}] with {points} points")));
        }
        let values = if points == 1 {
            vec![min]
        } else {
            let step = (max - min) / (points - 1) as f64;
            (0..points).map(|k| if k == points - 1 { max } else { min + step * k as f64 }).collect()
        };
        Ok(Axis { name: name.into(), values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> f64 {
        if self.values.len() < 2 {
            0.0
        } else {
            self.values[1] - self.values[0]
        }
    }
}

/// Group frequencies as an affine function of the free axes:
/// `ω = base + Σ_a x_a · directions[a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTemplate {
    pub base: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
}

impl GridTemplate {
    /// No free axes.
    pub fn fixed(base: Vec<f64>) -> Self {
        GridTemplate { base, directions: Vec::new() }
    }

    /// Each free axis sets the frequency of one group directly.
    pub fn free(base: Vec<f64>, free: &[usize]) -> Self {
        let n = base.len();
        let directions = free
            .iter()
            .map(|&g| {
                let mut d = vec![0.0; n];
                d[g] = 1.0;
                d
            })
            .collect();
        GridTemplate { base, directions }
    }

    pub fn frequencies(&self, coords: &[f64]) -> Vec<f64> {
        let mut w = self.base.clone();
        for (x, d) in coords.iter().zip(&self.directions) {
            for (wi, di) in w.iter_mut().zip(d) {
                *wi += x * di;
            }
        }
        w
    }

    pub fn validate(&self, groups: usize, free_axes: usize) -> Result<()> {
        if self.base.len() != groups || self.directions.iter().any(|d| d.len() != groups) {
            return Err(Error::Parameter(format!("frequency template does not match {groups} groups")));
        }
        if self.directions.len() != free_axes {
            return Err(Error::Parameter(format!(
                "template has {} directions for {free_axes} axes",
                self.directions.len()
            )));
        }
        if self.base.iter().chain(self.directions.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("frequency template must be finite".into()));
        }
        Ok(())
    }
}

/// What is computed at each grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observable {
    /// Population of one single-photon sensor, normalized to unit sum over
    /// the grid.
    Spectrum {
        linewidth: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
    },
    /// Sensor correlation; the request's own frequencies are ignored in
    /// favor of the grid template.
    Correlation { request: CorrelationRequest },
}

impl Observable {
    pub fn groups(&self) -> usize {
        match self {
            Observable::Spectrum { .. } => 1,
            Observable::Correlation { request } => request.groups(),
        }
    }

    /// Values produced by one frequency tuple (the delay count, or 1).
    pub fn values_per_point(&self) -> usize {
        match self {
            Observable::Correlation { request } => request.delay.as_ref().map_or(1, |d| d.tau.len()),
            _ => 1,
        }
    }

    pub fn delay_axis(&self) -> Option<Axis> {
        match self {
            Observable::Correlation { request } => request.delay.as_ref().map(|d| Axis::new("tau", d.tau.clone())),
            _ => None,
        }
    }

    pub fn is_normalized(&self) -> bool {
        matches!(self, Observable::Spectrum { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Observable::Spectrum { linewidth, epsilon } => {
                if !(linewidth.is_finite() && *linewidth > 0.0) {
                    return Err(Error::Parameter("linewidth must be positive".into()));
                }
                if let Some(e) = epsilon {
                    if !(e.is_finite() && *e > 0.0) {
                        return Err(Error::Parameter("epsilon must be positive".into()));
                    }
                }
                Ok(())
            }
            Observable::Correlation { request } => request.validate(),
        }
    }
}

/// Evaluates one frequency tuple. Failures become flagged NaN values.
pub fn evaluate_point(params: &SystemParams, observable: &Observable, frequencies: &[f64], opts: &EvalOptions) -> Outcome {
    let result = match observable {
        Observable::Spectrum { linewidth, epsilon } => {
            population_outcome(params, frequencies[0], *linewidth, *epsilon, opts)
        }
        Observable::Correlation { request } => {
            let mut r = request.clone();
            r.frequencies = frequencies.to_vec();
            if r.delay.is_some() {
                g_tau_outcome(params, &r, opts)
            } else {
                g_zero_delay(params, &r, opts)
            }
        }
    };
    result.unwrap_or_else(|e| Outcome::flagged(observable.values_per_point(), f64::NAN, Flag::from_error(&e)))
}

/// Coordinates of point `index` on the free axes, slowest axis first.
pub fn point_coordinates(axes: &[Axis], mut index: usize) -> Vec<f64> {
    let mut coords = vec![0.0; axes.len()];
    for (a, axis) in axes.iter().enumerate().rev() {
        coords[a] = axis.values[index % axis.len()];
        index /= axis.len();
    }
    coords
}

pub fn point_count(axes: &[Axis]) -> usize {
    axes.iter().map(Axis::len).product()
}

/// Evaluates every point of the grid spanned by `axes`.
pub fn evaluate_grid(
    params: &SystemParams,
    observable: &Observable,
    template: &GridTemplate,
    axes: Vec<Axis>,
    pool: &Pool,
    opts: &EvalOptions,
) -> Result<ResultGrid> {
    params.validate()?;
    observable.validate()?;
    template.validate(observable.groups(), axes.len())?;
    if axes.iter().any(Axis::is_empty) {
        return Err(Error::Parameter("grid axes must be nonempty".into()));
    }
    let indices: Vec<usize> = (0..point_count(&axes)).collect();
    let outcomes = pool.map(&indices, |&i| {
        evaluate_point(params, observable, &template.frequencies(&point_coordinates(&axes, i)), opts)
    });
    let mut all_axes = axes;
    all_axes.extend(observable.delay_axis());
    Ok(ResultGrid::from_outcomes(params, observable.clone(), template.clone(), all_axes, outcomes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub points: usize,
    pub flagged: usize,
    /// Largest relative change under ε → ε/2 over unflagged values.
    pub max_change: Option<f64>,
    pub epsilon_min: Option<f64>,
    pub epsilon_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: String,
    pub version: String,
    pub params: SystemParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splitting: Option<f64>,
    pub observable: Observable,
    pub template: GridTemplate,
    pub normalized: bool,
    pub summary: Summary,
    /// Echo of the configuration that produced the grid.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

/// Values on the product of `axes` in row-major order (first axis slowest).
/// A delay axis, when present, is last.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultGrid {
    pub axes: Vec<Axis>,
    pub values: Vec<f64>,
    pub changes: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub flags: Vec<Flag>,
    pub metadata: Metadata,
}

impl ResultGrid {
    /// Assembles point outcomes, in grid order, into a grid. Normalizing
    /// observables are rescaled to unit sum.
    pub fn from_outcomes(
        params: &SystemParams,
        observable: Observable,
        template: GridTemplate,
        axes: Vec<Axis>,
        outcomes: Vec<Outcome>,
    ) -> Self {
        let mut values = Vec::new();
        let mut changes = Vec::new();
        let mut epsilons = Vec::new();
        let mut flags = Vec::new();
        for o in outcomes {
            epsilons.extend(std::iter::repeat_n(o.epsilon, o.values.len()));
            flags.extend(std::iter::repeat_n(o.flag, o.values.len()));
            values.extend(o.values);
            changes.extend(o.changes);
        }
        let normalized = observable.is_normalized();
        let metadata = Metadata {
            tool: "mollow".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            params: *params,
            splitting: dressed_splitting(params).ok().map(|d| d.omega_plus),
            observable,
            template,
            normalized,
            summary: Summary { points: 0, flagged: 0, max_change: None, epsilon_min: None, epsilon_max: None },
            config: serde_json::Value::Null,
            timestamp: None,
        };
        let mut grid = ResultGrid { axes, values, changes, epsilons, flags, metadata };
        if normalized {
            let total: f64 = grid.values.iter().filter(|v| v.is_finite()).sum();
            if total > 0.0 {
                grid.values.iter_mut().for_each(|v| *v /= total);
            }
        }
        grid.metadata.summary = grid.summarize();
        grid
    }

    pub fn summarize(&self) -> Summary {
        let ok = |i: &usize| self.flags[*i] == Flag::Ok;
        let idx: Vec<usize> = (0..self.values.len()).filter(ok).collect();
        let fold = |it: &mut dyn Iterator<Item = f64>, f: fn(f64, f64) -> f64| it.reduce(f);
        Summary {
            points: self.values.len(),
            flagged: self.values.len() - idx.len(),
            max_change: fold(&mut idx.iter().map(|&i| self.changes[i]), f64::max),
            epsilon_min: fold(&mut idx.iter().map(|&i| self.epsilons[i]), f64::min),
            epsilon_max: fold(&mut idx.iter().map(|&i| self.epsilons[i]), f64::max),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Axis::len).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, at: &[usize]) -> usize {
        at.iter().zip(&self.axes).fold(0, |acc, (&k, a)| acc * a.len() + k)
    }

    pub fn get(&self, at: &[usize]) -> f64 {
        self.values[self.index(at)]
    }

    /// Axis values of flat position `index`.
    pub fn coordinates(&self, index: usize) -> Vec<f64> {
        point_coordinates(&self.axes, index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_axis_hits_both_ends() {
        let a = Axis::linear("w", -1.2, 1.2, 101).unwrap();
        assert_eq!(a.values[0], -1.2);
        assert_eq!(a.values[100], 1.2);
        assert!((a.values[50]).abs() < 1e-15);
        assert!(Axis::linear("w", 1.0, 0.0, 3).is_err());
        assert_eq!(Axis::linear("w", 2.0, 2.0, 1).unwrap().values, vec![2.0]);
    }

    #[test]
    fn coordinates_are_row_major() {
        let axes = vec![Axis::new("a", vec![0.0, 1.0]), Axis::new("b", vec![10.0, 20.0, 30.0])];
        assert_eq!(point_coordinates(&axes, 0), vec![0.0, 10.0]);
        assert_eq!(point_coordinates(&axes, 2), vec![0.0, 30.0]);
        assert_eq!(point_coordinates(&axes, 4), vec![1.0, 20.0]);
    }

    #[test]
    fn affine_template() {
        let t = GridTemplate { base: vec![0.0, 0.0, 5.0], directions: vec![vec![1.0, 0.0, -2.0], vec![0.0, 1.0, -3.0]] };
        assert_eq!(t.frequencies(&[1.0, 2.0]), vec![1.0, 2.0, -3.0]);
        assert!(t.validate(3, 2).is_ok());
        assert!(t.validate(2, 2).is_err());
    }

    #[test]
    fn flag_codes_round_trip() {
        for f in Flag::ALL {
            assert_eq!(Flag::from_code(f.code()), Some(f));
            assert_eq!(Flag::from_name(f.name()), Some(f));
        }
        assert_eq!(Flag::from_code(200), None);
    }
}
