//! Leapfrog bookkeeping on the dressed ladder.
//!
//! Photons emitted jointly through a leapfrog transition have individually
//! arbitrary energies but a fixed sum: `Σ c_μ ω̃_μ = Δ` with
//! `Δ ∈ {−Ω₊, 0, +Ω₊}`. The conditions here are purely geometric; magnitudes
//! come from [`crate::correlators`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, GridTemplate, ResultGrid};

/// Which transition of the triplet the photons add up to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `Δ = −Ω₊`
    Lower,
    /// `Δ = 0`
    Central,
    /// `Δ = +Ω₊`
    Upper,
}

impl Branch {
    pub const ALL: [Branch; 3] = [Branch::Lower, Branch::Central, Branch::Upper];

    pub fn sign(self) -> f64 {
        match self {
            Branch::Lower => -1.0,
            Branch::Central => 0.0,
            Branch::Upper => 1.0,
        }
    }

    pub fn delta(self, omega_plus: f64) -> f64 {
        self.sign() * omega_plus
    }

    pub fn from_sign(sign: i32) -> Option<Branch> {
        match sign {
            -1 => Some(Branch::Lower),
            0 => Some(Branch::Central),
            1 => Some(Branch::Upper),
            _ => None,
        }
    }
}

/// `Σ c_μ ω̃_μ = Δ`. A zero coefficient leaves that group unconstrained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeapfrogCondition {
    pub coefficients: Vec<usize>,
    pub branch: Branch,
    pub delta: f64,
}

impl LeapfrogCondition {
    pub fn new(coefficients: Vec<usize>, branch: Branch, omega_plus: f64) -> Result<Self> {
        check_splitting(omega_plus)?;
        let c = LeapfrogCondition { coefficients, branch, delta: branch.delta(omega_plus) };
        if c.order() < 2 {
            return Err(Error::Parameter(format!("a leapfrog involves at least two photons, got {:?}", c.coefficients)));
        }
        Ok(c)
    }

    /// Number of photons involved.
    pub fn order(&self) -> usize {
        self.coefficients.iter().sum()
    }

    /// `Σ c_μ ω̃_μ − Δ`.
    pub fn residual(&self, frequencies: &[f64]) -> f64 {
        self.coefficients.iter().zip(frequencies).map(|(&c, w)| c as f64 * w).sum::<f64>() - self.delta
    }

    /// Euclidean distance of a frequency tuple from the hyperplane.
    pub fn distance(&self, frequencies: &[f64]) -> f64 {
        let norm = self.coefficients.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
        self.residual(frequencies).abs() / norm
    }

    pub fn contains(&self, frequencies: &[f64], tolerance: f64) -> bool {
        self.distance(frequencies) <= tolerance
    }

    pub fn label(&self) -> String {
        let terms: Vec<String> = self
            .coefficients
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| if c == 1 { format!("w{}", i + 1) } else { format!("{c}w{}", i + 1) })
            .collect();
        let rhs = match self.branch {
            Branch::Lower => "-W+",
            Branch::Central => "0",
            Branch::Upper => "+W+",
        };
        format!("{} = {rhs}", terms.join(" + "))
    }
}

fn check_splitting(omega_plus: f64) -> Result<()> {
    if omega_plus.is_finite() && omega_plus > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("splitting must be positive, got {omega_plus}")))
    }
}

fn check_partition(partition: &[usize]) -> Result<()> {
    if partition.is_empty() || partition.contains(&0) {
        return Err(Error::Parameter(format!("invalid partition {partition:?}")));
    }
    Ok(())
}

/// Every count vector `0 ≤ k_μ ≤ n_μ`, in lexicographic order.
fn sub_multisets(partition: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &n in partition {
        out = out.into_iter().flat_map(|head| (0..=n).map(move |k| [head.clone(), vec![k]].concat())).collect();
    }
    out
}

/// All leapfrog conditions a correlator of the given partition can see.
///
/// With several groups these are the photon sub-multisets that draw from at
/// least two groups: the full condition `Σ n_μ ω̃_μ = Δ` and the cascades of
/// smaller leapfrogs across groups. A single group of order N sees
/// `k ω̃ = Δ` for `k = 2..=N`. Conditions are ordered by decreasing order,
/// then by coefficients, then by branch.
pub fn enumerate_conditions(partition: &[usize], omega_plus: f64) -> Result<Vec<LeapfrogCondition>> {
    check_partition(partition)?;
    check_splitting(omega_plus)?;
    let mut families: Vec<Vec<usize>> = sub_multisets(partition)
        .into_iter()
        .filter(|c| {
            let order: usize = c.iter().sum();
            let groups = c.iter().filter(|&&k| k > 0).count();
            order >= 2 && (groups >= 2 || partition.len() == 1)
        })
        .collect();
    families.sort_by(|a, b| b.iter().sum::<usize>().cmp(&a.iter().sum::<usize>()).then_with(|| b.cmp(a)));
    Ok(families
        .into_iter()
        .flat_map(|c| Branch::ALL.map(|b| LeapfrogCondition { coefficients: c.clone(), branch: b, delta: b.delta(omega_plus) }))
        .collect())
}

/// Smallest distance from any proper partial sum of the photon energies to
/// a real transition `{0, ±Ω₊}`. Single photons count as partial sums.
pub fn real_state_clearance(partition: &[usize], frequencies: &[f64], omega_plus: f64) -> f64 {
    let subsets = proper_subsets(partition);
    clearance(&subsets, frequencies, omega_plus)
}

fn proper_subsets(partition: &[usize]) -> Vec<Vec<usize>> {
    sub_multisets(partition)
        .into_iter()
        .filter(|k| k.iter().any(|&v| v > 0) && k.as_slice() != partition)
        .collect()
}

fn clearance(subsets: &[Vec<usize>], frequencies: &[f64], omega_plus: f64) -> f64 {
    subsets
        .iter()
        .map(|k| {
            let s: f64 = k.iter().zip(frequencies).map(|(&c, w)| c as f64 * w).sum();
            [-omega_plus, 0.0, omega_plus].iter().map(|t| (s - t).abs()).fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rationale {
    /// One group: the assignment is fixed by the condition and happens to
    /// clear every real transition.
    DegenerateBundle,
    /// The assignment maximizing the clearance from real transitions.
    AvoidsRealStates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterRecommendation {
    pub frequencies: Vec<f64>,
    pub condition: LeapfrogCondition,
    pub omega_plus: f64,
    /// Requested margin in units of the linewidth.
    pub margin: f64,
    pub linewidth: f64,
    /// Achieved clearance in frequency units.
    pub clearance: f64,
    pub rationale: Rationale,
}

impl FilterRecommendation {
    /// Whether the frequencies satisfy the condition and clear every real
    /// transition by the margin.
    pub fn verify(&self, partition: &[usize]) -> bool {
        self.condition.contains(&self.frequencies, 1e-9 * self.omega_plus)
            && real_state_clearance(partition, &self.frequencies, self.omega_plus)
                >= self.margin * self.linewidth * (1.0 - 1e-9)
    }
}

/// Grid resolution of the search, per unit of `Ω₊`.
const SEARCH_STEPS: i64 = 240;
/// Cap on the number of candidates of the coarse search.
const SEARCH_BUDGET: f64 = 1e6;

/// Frequencies on `Σ n_μ ω̃_μ = Δ` whose partial sums stay at least
/// `margin·linewidth` away from every real transition.
///
/// All frequencies are kept within `[−Ω₊, Ω₊]`. Among assignments of maximal
/// clearance the one with the smallest `Σ ω̃_μ²` wins, then the
/// lexicographically greatest.
pub fn recommend_filters(
    partition: &[usize],
    branch: Branch,
    omega_plus: f64,
    margin: f64,
    linewidth: f64,
) -> Result<FilterRecommendation> {
    check_partition(partition)?;
    check_splitting(omega_plus)?;
    if !(margin.is_finite() && margin > 0.0) {
        return Err(Error::Parameter(format!("margin must be positive, got {margin}")));
    }
    if !(linewidth.is_finite() && linewidth > 0.0) {
        return Err(Error::Parameter(format!("linewidth must be positive, got {linewidth}")));
    }
    let condition = LeapfrogCondition::new(partition.to_vec(), branch, omega_plus)?;
    if condition.order() < 2 {
        return Err(Error::Parameter("a single photon is not a leapfrog".into()));
    }
    let subsets = proper_subsets(partition);
    let groups = partition.len();
    let last = groups - 1;
    let delta = branch.delta(omega_plus);
    let complete = |free: &[f64]| -> Option<Vec<f64>> {
        let rest: f64 = free.iter().zip(partition).map(|(w, &n)| n as f64 * w).sum();
        let w = (delta - rest) / partition[last] as f64;
        (w.abs() <= omega_plus * (1.0 + 1e-12)).then(|| [free, &[w]].concat())
    };
    let tol = 1e-10 * omega_plus;
    let better = |a: &(f64, Vec<f64>), b: &(f64, Vec<f64>)| -> bool {
        if a.0 > b.0 + tol {
            return true;
        }
        if a.0 < b.0 - tol {
            return false;
        }
        let na: f64 = a.1.iter().map(|w| w * w).sum();
        let nb: f64 = b.1.iter().map(|w| w * w).sum();
        if na < nb - tol * omega_plus {
            return true;
        }
        if na > nb + tol * omega_plus {
            return false;
        }
        a.1.iter().zip(&b.1).find(|(x, y)| (*x - *y).abs() > tol).is_some_and(|(x, y)| x > y)
    };
    let score = |w: Vec<f64>| (clearance(&subsets, &w, omega_plus), w);

    let mut best = if groups == 1 {
        let w = complete(&[]).ok_or_else(|| Error::Parameter("condition has no solution in range".into()))?;
        score(w)
    } else {
        let free = groups - 1;
        let per_axis = SEARCH_BUDGET.powf(1.0 / free as f64).floor() as i64;
        let half = (per_axis / 2).min(SEARCH_STEPS);
        let step = omega_plus / half as f64;
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut index = vec![-half; free];
        loop {
            let point: Vec<f64> = index.iter().map(|&k| k as f64 * step).collect();
            if let Some(w) = complete(&point) {
                let candidate = score(w);
                if best.as_ref().is_none_or(|b| better(&candidate, b)) {
                    best = Some(candidate);
                }
            }
            let mut axis = 0;
            loop {
                if axis == free {
                    break;
                }
                index[axis] += 1;
                if index[axis] <= half {
                    break;
                }
                index[axis] = -half;
                axis += 1;
            }
            if axis == free {
                break;
            }
        }
        let mut best = best.ok_or_else(|| Error::Parameter("condition has no solution in range".into()))?;
        let moves: Vec<Vec<i32>> = (0..3usize.pow(free as u32))
            .map(|m| (0..free).map(|a| (m / 3usize.pow(a as u32) % 3) as i32 - 1).collect::<Vec<i32>>())
            .filter(|d| d.iter().any(|&v| v != 0))
            .collect();
        let mut h = step;
        while h > 1e-13 * omega_plus {
            let mut improved = false;
            for d in &moves {
                let point: Vec<f64> = best.1[..free].iter().zip(d).map(|(w, &s)| w + s as f64 * h).collect();
                if point.iter().any(|w| w.abs() > omega_plus) {
                    continue;
                }
                if let Some(w) = complete(&point) {
                    let candidate = score(w);
                    // Only strict gains here: ties were settled on the grid.
                    if candidate.0 > best.0 + tol {
                        best = candidate;
                        improved = true;
                    }
                }
            }
            if !improved {
                h /= 2.0;
            }
        }
        best
    };
    // Snap to the condition exactly.
    if let Some(w) = complete(&best.1[..groups - 1]) {
        best = score(w);
    }
    let required = margin * linewidth;
    if best.0 < required * (1.0 - 1e-9) {
        return Err(Error::Feasibility { requested: margin, best: best.0 / linewidth });
    }
    Ok(FilterRecommendation {
        frequencies: best.1,
        condition,
        omega_plus,
        margin,
        linewidth,
        clearance: best.0,
        rationale: if groups == 1 { Rationale::DegenerateBundle } else { Rationale::AvoidsRealStates },
    })
}

/// A condition drawn over a result grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayLine {
    pub condition: LeapfrogCondition,
    pub label: String,
    /// Vertices in grid coordinates, one coordinate per plotted axis.
    pub points: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCondition {
    pub condition: LeapfrogCondition,
    pub reason: String,
}

/// Line overlays for a one- or two-axis frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub axes: Vec<String>,
    pub lines: Vec<OverlayLine>,
    pub skipped: Vec<SkippedCondition>,
}

pub fn annotate(grid: &ResultGrid, conditions: &[LeapfrogCondition]) -> Result<Overlay> {
    annotate_template(&grid.metadata.template, &grid.axes, conditions)
}

/// Intersects every condition with the grid spanned by `template` over
/// `axes`, clipped to the axis ranges. The leading axes are the frequency
/// axes; one trailing delay axis, if present, is spanned vertically.
pub fn annotate_template(template: &GridTemplate, axes: &[Axis], conditions: &[LeapfrogCondition]) -> Result<Overlay> {
    let free = template.directions.len();
    if !(1..=2).contains(&free) || axes.len() < free || axes.len() > 2 {
        return Err(Error::Parameter(format!(
            "overlays need one or two frequency axes and at most two axes, got {free} frequency axes of {}",
            axes.len()
        )));
    }
    if axes.iter().any(|a| a.is_empty()) {
        return Err(Error::Parameter("overlay axes must not be empty".into()));
    }
    let ranges: Vec<(f64, f64)> = axes
        .iter()
        .map(|a| a.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))))
        .collect();
    let mut overlay = Overlay { axes: axes.iter().map(|a| a.name.clone()).collect(), lines: vec![], skipped: vec![] };
    for condition in conditions {
        if condition.coefficients.len() != template.base.len() {
            return Err(Error::Parameter(format!(
                "condition {} has {} coefficients for a {}-group grid",
                condition.label(),
                condition.coefficients.len(),
                template.base.len()
            )));
        }
        // In grid coordinates the condition reads a·x = b.
        let dot = |v: &[f64]| condition.coefficients.iter().zip(v).map(|(&c, x)| c as f64 * x).sum::<f64>();
        let a: Vec<f64> = template.directions.iter().map(|d| dot(d)).collect();
        let b = condition.delta - dot(&template.base);
        let skip = |reason: &str| SkippedCondition { condition: condition.clone(), reason: reason.to_string() };
        let scale = a.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if scale == 0.0 {
            overlay.skipped.push(skip(if b.abs() <= 1e-12 * condition.delta.abs().max(1.0) {
                "condition holds on the whole grid"
            } else {
                "condition does not involve the grid axes and is not met"
            }));
            continue;
        }
        let points = if free == 1 {
            let x = b / a[0];
            let (lo, hi) = ranges[0];
            if x < lo - 1e-12 * (hi - lo).max(1.0) || x > hi + 1e-12 * (hi - lo).max(1.0) {
                None
            } else if axes.len() == 2 {
                Some(vec![vec![x, ranges[1].0], vec![x, ranges[1].1]])
            } else {
                Some(vec![vec![x]])
            }
        } else {
            clip_line(a[0], a[1], b, ranges[0], ranges[1])
        };
        match points {
            Some(points) => overlay.lines.push(OverlayLine { condition: condition.clone(), label: condition.label(), points }),
            None => overlay.skipped.push(skip("condition lies outside the axes")),
        }
    }
    Ok(overlay)
}

/// Segment of `a0·x + a1·y = b` inside the box, if any.
fn clip_line(a0: f64, a1: f64, b: f64, xr: (f64, f64), yr: (f64, f64)) -> Option<Vec<Vec<f64>>> {
    let tol_x = 1e-12 * (xr.1 - xr.0).abs().max(1.0);
    let tol_y = 1e-12 * (yr.1 - yr.0).abs().max(1.0);
    let inside = |x: f64, y: f64| x >= xr.0 - tol_x && x <= xr.1 + tol_x && y >= yr.0 - tol_y && y <= yr.1 + tol_y;
    let mut hits: Vec<[f64; 2]> = vec![];
    if a1 != 0.0 {
        for x in [xr.0, xr.1] {
            let y = (b - a0 * x) / a1;
            if inside(x, y) {
                hits.push([x, y.clamp(yr.0, yr.1)]);
            }
        }
    }
    if a0 != 0.0 {
        for y in [yr.0, yr.1] {
            let x = (b - a1 * y) / a0;
            if inside(x, y) {
                hits.push([x.clamp(xr.0, xr.1), y]);
            }
        }
    }
    if hits.is_empty() {
        return None;
    }
    // Order along the line direction (−a1, a0) and keep the extremes.
    let t = |p: &[f64; 2]| -a1 * p[0] + a0 * p[1];
    hits.sort_by(|p, q| t(p).total_cmp(&t(q)));
    let first = hits[0];
    let last = hits[hits.len() - 1];
    Some(vec![first.to_vec(), last.to_vec()])
}

#[cfg(test)]
mod tests;
