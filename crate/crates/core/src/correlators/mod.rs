//! Frequency-resolved photon correlations by the sensor method.
//!
//! Each photon group μ is detected by one sensor mode of bundle order `n_μ`
//! coupled to the emitter with a small strength ε. Sensor moments scale as
//! `ε^{2Σn}`, so every steady state is solved in variables rescaled by
//! per-sensor excitation amplitudes (see [`sensor_amplitudes`]), and every
//! reported value is confirmed against a second run at ε/2.

mod scans;
mod spectrum;

pub use scans::{autocorrelation_scan, cut3d, map2d, Plane};
pub use spectrum::{spectrum_scan, wk_spectrum_oracle, OracleOptions};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, Flag, GridTemplate, Observable, ResultGrid};
use crate::model::{build_model, default_coupling, dressed_splitting, CompositeModel, SensorSpec, SystemParams};
use crate::operators::{vec_index, vectorize, C64};
use crate::propagate::{propagate_expm, propagate_rk45, Rk45Options};
use crate::steady_state::{
    solve_steady_state_with, validate_density_matrix, DensityMatrix, SteadyStateOptions, Tolerances,
};

/// How the joint moment is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `Π ⟨ξ_μ†^{n_μ} ξ_μ^{n_μ}⟩`: each group counts as one bundle.
    #[default]
    Bundle,
    /// `Π ⟨ξ_μ†ξ_μ⟩^{n_μ}`: each group counts as `n_μ` separate photons.
    Photon,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySpec {
    /// Groups detected first when the delay is positive.
    pub first: Vec<usize>,
    /// Strictly increasing delays.
    pub tau: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRequest {
    /// Bundle order of each group.
    pub partition: Vec<usize>,
    pub frequencies: Vec<f64>,
    pub linewidths: Vec<f64>,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<DelaySpec>,
    /// Starting coupling; defaults to `0.05·√(γ_σ·min Γ)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl CorrelationRequest {
    pub fn new(partition: Vec<usize>, frequencies: Vec<f64>, linewidths: Vec<f64>) -> Result<Self> {
        let r = CorrelationRequest {
            partition,
            frequencies,
            linewidths,
            normalization: Normalization::Bundle,
            delay: None,
            epsilon: None,
        };
        r.validate()?;
        Ok(r)
    }

    /// All groups share one linewidth.
    pub fn uniform(partition: &[usize], frequencies: &[f64], linewidth: f64) -> Result<Self> {
        Self::new(partition.to_vec(), frequencies.to_vec(), vec![linewidth; partition.len()])
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        self.epsilon = Some(epsilon);
        self.validate()?;
        Ok(self)
    }

    pub fn with_delay(mut self, first: Vec<usize>, tau: Vec<f64>) -> Result<Self> {
        self.delay = Some(DelaySpec { first, tau });
        self.validate()?;
        Ok(self)
    }

    pub fn groups(&self) -> usize {
        self.partition.len()
    }

    pub fn min_linewidth(&self) -> f64 {
        self.linewidths.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.partition.len();
        if n == 0 {
            return Err(Error::Parameter("partition is empty".into()));
        }
        if self.frequencies.len() != n || self.linewidths.len() != n {
            return Err(Error::Parameter(format!(
                "partition has {n} groups but {} frequencies and {} linewidths",
                self.frequencies.len(),
                self.linewidths.len()
            )));
        }
        if self.partition.contains(&0) {
            return Err(Error::Parameter("bundle orders must be at least 1".into()));
        }
        if self.frequencies.iter().any(|w| !w.is_finite()) {
            return Err(Error::Parameter("frequencies must be finite".into()));
        }
        if self.linewidths.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::Parameter("linewidths must be positive".into()));
        }
        if let Some(eps) = self.epsilon {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::Parameter(format!("epsilon must be positive, got {eps}")));
            }
        }
        if let Some(d) = &self.delay {
            if d.tau.is_empty() || d.tau.iter().any(|t| !t.is_finite()) || d.tau.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Parameter("delays must be finite and strictly increasing".into()));
            }
            let mut first = d.first.clone();
            first.sort_unstable();
            first.dedup();
            if first.len() != d.first.len() || first.is_empty() || first.len() >= n || first.iter().any(|&i| i >= n) {
                return Err(Error::Parameter(
                    "the first-detected groups must be a nonempty proper subset of the partition".into(),
                ));
            }
        }
        Ok(())
    }

    fn sensors(&self, extra_truncation: usize) -> Result<Vec<SensorSpec>> {
        self.partition
            .iter()
            .zip(&self.frequencies)
            .zip(&self.linewidths)
            .map(|((&n, &w), &g)| SensorSpec::new(w, g, n)?.with_truncation(n + 1 + extra_truncation))
            .collect()
    }

    fn starting_epsilon(&self, params: &SystemParams) -> f64 {
        self.epsilon.unwrap_or_else(|| default_coupling(params.gamma, self.min_linewidth()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Largest accepted relative change of a value when ε is halved.
    pub tolerance: f64,
    /// Smallest accepted normalizer, relative to its expected size.
    pub floor: f64,
    pub max_doublings: usize,
    /// Extra halvings of ε tried before declaring non-convergence.
    pub max_halvings: usize,
    /// Recompute with one more level in every sensor and require agreement.
    pub check_truncation: bool,
    pub validation: Tolerances,
    /// Largest total dimension propagated with dense exponentials.
    pub dense_propagation_dim: usize,
    pub rk45: Rk45Options,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            tolerance: 0.005,
            floor: 1e-12,
            max_doublings: 6,
            max_halvings: 4,
            check_truncation: false,
            validation: Tolerances::default(),
            dense_propagation_dim: 32,
            rk45: Rk45Options::default(),
        }
    }
}

/// Values of one evaluation together with their convergence record.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub values: Vec<f64>,
    /// Relative change of each value when ε is halved.
    pub changes: Vec<f64>,
    /// The coupling the values were computed at.
    pub epsilon: f64,
    pub flag: Flag,
    /// Relative change under one more truncation level, when checked.
    pub truncation_change: Option<f64>,
}

impl Outcome {
    pub(crate) fn flagged(len: usize, epsilon: f64, flag: Flag) -> Self {
        Outcome { values: vec![f64::NAN; len], changes: vec![f64::NAN; len], epsilon, flag, truncation_change: None }
    }

    pub fn value(&self) -> f64 {
        self.values[0]
    }

    pub fn max_change(&self) -> f64 {
        self.changes.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_ok(&self) -> bool {
        self.flag == Flag::Ok
    }
}

/// Normally ordered sensor moments of one steady state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentTable {
    /// `⟨:Π ξ_μ†^{n_μ} ξ_μ^{n_μ}:⟩`.
    pub joint: f64,
    /// `⟨ξ_μ†^{n_μ} ξ_μ^{n_μ}⟩` per group.
    pub bundles: Vec<f64>,
    /// `⟨ξ_μ†ξ_μ⟩` per group.
    pub populations: Vec<f64>,
}

impl MomentTable {
    pub fn denominator(&self, partition: &[usize], normalization: Normalization) -> f64 {
        match normalization {
            Normalization::Bundle => self.bundles.iter().product(),
            Normalization::Photon => self.populations.iter().zip(partition).map(|(p, &n)| p.powi(n as i32)).product(),
        }
    }

    pub fn ratio(&self, partition: &[usize], normalization: Normalization) -> f64 {
        self.joint / self.denominator(partition, normalization)
    }

    /// Fails when a normalizer, divided by its expected size `r_μ^{2n_μ}`,
    /// falls below `floor`. Unit amplitudes give an absolute floor.
    pub fn check_floor(&self, partition: &[usize], amplitudes: &[f64], floor: f64) -> Result<()> {
        for (mu, &n) in partition.iter().enumerate() {
            let r2 = amplitudes[mu] * amplitudes[mu];
            for (moment, expected) in [(self.bundles[mu], r2.powi(n as i32)), (self.populations[mu], r2)] {
                if !(moment / expected >= floor) {
                    return Err(Error::Precision { moment: moment / expected, floor });
                }
            }
        }
        Ok(())
    }
}

/// `m!/(m−k)!`, zero for `m < k`.
fn falling_factorial(m: usize, k: usize) -> f64 {
    if m < k {
        0.0
    } else {
        (m - k + 1..=m).map(|x| x as f64).product()
    }
}

/// `Σᵢ w(digits(i)) ρᵢᵢ` for an operator diagonal in the Fock basis.
fn diagonal_expectation(rho: &DensityMatrix, weight: impl Fn(&[usize]) -> f64) -> Result<f64> {
    let layout = rho.layout();
    let m = rho.matrix();
    let (mut re, mut im) = (0.0, 0.0);
    for i in 0..rho.dim() {
        let w = weight(&layout.digits(i));
        if w != 0.0 {
            re += w * m[(i, i)].re;
            im += w * m[(i, i)].im;
        }
    }
    if im.abs() > 1e-10 * re.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Invalid(format!("moment {re:e} has imaginary part {im:e}")));
    }
    Ok(re)
}

/// Joint moment, bundle normalizers and populations for the sensors of
/// `model`, in the order of `partition`.
pub fn sensor_moments(model: &CompositeModel, rho: &DensityMatrix, partition: &[usize]) -> Result<MomentTable> {
    if partition.len() != model.sensors.len() {
        return Err(Error::Parameter(format!(
            "partition has {} groups but the model has {} sensors",
            partition.len(),
            model.sensors.len()
        )));
    }
    for (mu, (&n, s)) in partition.iter().zip(&model.sensors).enumerate() {
        if n + 1 > s.truncation {
            return Err(Error::Parameter(format!("sensor {mu} truncation {} cannot hold {n} photons", s.truncation)));
        }
    }
    let joint = diagonal_expectation(rho, |d| partition.iter().enumerate().map(|(mu, &n)| falling_factorial(d[mu + 1], n)).product())?;
    let mut bundles = Vec::with_capacity(partition.len());
    let mut populations = Vec::with_capacity(partition.len());
    for (mu, &n) in partition.iter().enumerate() {
        bundles.push(diagonal_expectation(rho, |d| falling_factorial(d[mu + 1], n))?);
        populations.push(diagonal_expectation(rho, |d| d[mu + 1] as f64)?);
    }
    Ok(MomentTable { joint, bundles, populations })
}

/// Steady-state excited population of the bare emitter.
fn emitter_population(p: &SystemParams) -> f64 {
    let o2 = p.rabi * p.rabi;
    o2 / (p.gamma * p.gamma / 4.0 + p.detuning * p.detuning + 2.0 * o2)
}

/// Amplitude `r_μ = √⟨ξ_μ†ξ_μ⟩` of each sensor, from a solve of the emitter
/// with that sensor alone. The solve itself is rescaled by a Lorentzian
/// estimate so weakly excited sensors are resolved too.
pub fn sensor_amplitudes(params: &SystemParams, sensors: &[SensorSpec], epsilon: f64) -> Result<Vec<f64>> {
    let emitted = emitter_population(params);
    if !(emitted > 1e-14) {
        return Err(Error::Undefined("the emitter is not excited, so every sensor moment vanishes".into()));
    }
    let peaks = match dressed_splitting(params) {
        Ok(d) => vec![0.0, d.omega_plus, -d.omega_plus],
        Err(_) => vec![0.0, params.detuning],
    };
    sensors
        .iter()
        .map(|s| {
            let offset = peaks.iter().map(|p| (s.frequency - p).abs()).fold(f64::INFINITY, f64::min);
            let width = 0.5 * (s.linewidth + params.gamma);
            let guess = epsilon * (emitted / (width * width + offset * offset)).sqrt();
            let single = SensorSpec::new(s.frequency, s.linewidth, 1)?;
            let model = build_model(*params, &[single], epsilon)?;
            let opts = SteadyStateOptions { scale: Some(model.excitation_scale(&[guess])), ..Default::default() };
            let rho = solve_steady_state_with(model.liouvillian(), &opts)?;
            let population = diagonal_expectation(&rho, |d| d[1] as f64)?;
            if !(population > 0.0) {
                return Err(Error::Undefined(format!("sensor at {} is never excited", s.frequency)));
            }
            Ok(population.sqrt())
        })
        .collect()
}

/// A validated steady state together with the rescaling it was solved in.
struct Solved {
    model: CompositeModel,
    amplitudes: Vec<f64>,
    scale: Vec<f64>,
    rho: DensityMatrix,
}

fn solve_point(params: &SystemParams, sensors: &[SensorSpec], epsilon: f64, opts: &EvalOptions) -> Result<Solved> {
    let amplitudes = sensor_amplitudes(params, sensors, epsilon)?;
    let model = build_model(*params, sensors, epsilon)?;
    let scale = model.excitation_scale(&amplitudes);
    let ss = SteadyStateOptions { scale: Some(scale.clone()), ..Default::default() };
    let rho = solve_steady_state_with(model.liouvillian(), &ss)?;
    let report = validate_density_matrix(&rho, Some(model.liouvillian()), &opts.validation);
    if !report.is_valid() {
        return Err(Error::Invalid(report.failures.join("; ")));
    }
    Ok(Solved { model, amplitudes, scale, rho })
}

/// Relative differences between a coarse and a fine evaluation. Curves are
/// compared against a floor of 1% of their largest magnitude so that values
/// crossing zero do not dominate.
fn relative_changes(coarse: &[f64], fine: &[f64]) -> Vec<f64> {
    let peak = fine.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let floor = if fine.len() > 1 { 0.01 * peak } else { 0.0 };
    coarse
        .iter()
        .zip(fine)
        .map(|(c, f)| {
            let d = (c - f).abs();
            if d == 0.0 {
                0.0
            } else {
                let r = d / f.abs().max(floor);
                if r.is_nan() {
                    f64::INFINITY
                } else {
                    r
                }
            }
        })
        .collect()
}

/// Runs `eval(ε, extra_truncation)` under the coupling protocol: double ε
/// while moments sit below the noise floor, confirm against ε/2, halve
/// further while the two disagree.
fn converge(
    epsilon0: f64,
    len: usize,
    opts: &EvalOptions,
    eval: impl Fn(f64, usize) -> Result<Vec<f64>>,
) -> Result<Outcome> {
    let mut eps = epsilon0;
    let mut doublings = 0;
    let (mut coarse, mut fine) = loop {
        match eval(eps, 0).and_then(|c| eval(eps / 2.0, 0).map(|f| (c, f))) {
            Ok(pair) => break pair,
            Err(Error::Precision { .. }) if doublings < opts.max_doublings => {
                eps *= 2.0;
                doublings += 1;
            }
            Err(Error::Undefined(_)) => return Ok(Outcome::flagged(len, eps, Flag::Undefined)),
            Err(e) => return Err(e),
        }
    };
    let mut halvings = 0;
    loop {
        let changes = relative_changes(&coarse, &fine);
        let (worst, at) =
            changes.iter().enumerate().fold((0.0, 0), |acc, (i, &c)| if c > acc.0 { (c, i) } else { acc });
        if worst < opts.tolerance {
            let mut out = Outcome { values: coarse, changes, epsilon: eps, flag: Flag::Ok, truncation_change: None };
            if opts.check_truncation {
                let deeper = eval(eps, 1)?;
                let delta = relative_changes(&out.values, &deeper);
                let (worst, at) =
                    delta.iter().enumerate().fold((0.0, 0), |acc, (i, &c)| if c > acc.0 { (c, i) } else { acc });
                if worst >= opts.tolerance {
                    return Err(Error::Truncation { coarse: out.values[at], fine: deeper[at] });
                }
                out.truncation_change = Some(worst);
            }
            return Ok(out);
        }
        if halvings >= opts.max_halvings {
            return Err(Error::Convergence { epsilon: eps, coarse: coarse[at], fine: fine[at] });
        }
        eps /= 2.0;
        halvings += 1;
        coarse = fine;
        fine = eval(eps / 2.0, 0)?;
    }
}

fn zero_delay_at(
    params: &SystemParams,
    request: &CorrelationRequest,
    epsilon: f64,
    extra: usize,
    opts: &EvalOptions,
) -> Result<f64> {
    let solved = solve_point(params, &request.sensors(extra)?, epsilon, opts)?;
    let table = sensor_moments(&solved.model, &solved.rho, &request.partition)?;
    table.check_floor(&request.partition, &solved.amplitudes, opts.floor)?;
    Ok(table.ratio(&request.partition, request.normalization))
}

/// `g^{(N)}_{n_1…n_N}(ω̃_1,…,ω̃_N)` at zero delay.
pub fn g_zero_delay(params: &SystemParams, request: &CorrelationRequest, opts: &EvalOptions) -> Result<Outcome> {
    params.validate()?;
    request.validate()?;
    if request.delay.is_some() {
        return Err(Error::Parameter("zero-delay correlation requested with a delay grid".into()));
    }
    converge(request.starting_epsilon(params), 1, opts, |eps, extra| {
        zero_delay_at(params, request, eps, extra, opts).map(|g| vec![g])
    })
}

/// `Tr[M_probe e^{Lτ}(A ρ A†)]` for each `τ` in `times` (ascending,
/// nonnegative), with `A = Π_{herald} ξ^{n}` and `M = Π_{probe} ξ†^{n}ξ^{n}`.
/// Propagation runs in the rescaled variables.
fn regression(
    solved: &Solved,
    partition: &[usize],
    herald: &[usize],
    probe: &[usize],
    times: &[f64],
    opts: &EvalOptions,
) -> Result<Vec<f64>> {
    if times.is_empty() {
        return Ok(Vec::new());
    }
    let n = solved.model.total_dim();
    let s = &solved.scale;
    let mut a = DMatrix::<C64>::identity(n, n);
    let mut herald_size = 1.0;
    for &mu in herald {
        let xi = solved.model.xi[mu].to_dense();
        for _ in 0..partition[mu] {
            a = &xi * a;
        }
        herald_size *= solved.amplitudes[mu].powi(2 * partition[mu] as i32);
    }
    let rho = solved.rho.matrix();
    let scaled = DMatrix::from_fn(n, n, |i, j| rho[(i, j)] / (s[i] * s[j]));
    let conditioned = &a * scaled * a.adjoint();
    let weights: Vec<f64> = (0..n)
        .map(|i| {
            let d = solved.model.layout.digits(i);
            let m: f64 = probe.iter().map(|&mu| falling_factorial(d[mu + 1], partition[mu])).product();
            m * s[i] * s[i] * herald_size
        })
        .collect();
    let generator = solved.model.liouvillian().rescaled(s);
    let x0 = vectorize(&conditioned);
    let states = if n <= opts.dense_propagation_dim {
        propagate_expm(&generator.to_dense(), &x0, times)?
    } else {
        propagate_rk45(&generator, &x0, times, &opts.rk45)?
    };
    Ok(states.iter().map(|x| (0..n).map(|i| weights[i] * x[vec_index(i, i, n)].re).sum()).collect())
}

fn delay_at(
    params: &SystemParams,
    request: &CorrelationRequest,
    epsilon: f64,
    extra: usize,
    opts: &EvalOptions,
) -> Result<Vec<f64>> {
    let delay = request.delay.as_ref().expect("delay request");
    let solved = solve_point(params, &request.sensors(extra)?, epsilon, opts)?;
    let table = sensor_moments(&solved.model, &solved.rho, &request.partition)?;
    table.check_floor(&request.partition, &solved.amplitudes, opts.floor)?;
    let denominator = table.denominator(&request.partition, request.normalization);
    let first = &delay.first;
    let second: Vec<usize> = (0..request.groups()).filter(|mu| !first.contains(mu)).collect();

    let forward: Vec<f64> = delay.tau.iter().copied().filter(|t| *t >= 0.0).collect();
    let backward: Vec<f64> = delay.tau.iter().rev().copied().filter(|t| *t < 0.0).map(|t| -t).collect();
    let ahead = regression(&solved, &request.partition, first, &second, &forward, opts)?;
    let behind = regression(&solved, &request.partition, &second, first, &backward, opts)?;
    let mut out: Vec<f64> = behind.into_iter().rev().collect();
    out.extend(ahead);
    Ok(out.into_iter().map(|v| v / denominator).collect())
}

/// Delay-resolved correlation between the first-detected groups and the
/// rest. Negative delays exchange the two roles.
pub fn g_tau_outcome(params: &SystemParams, request: &CorrelationRequest, opts: &EvalOptions) -> Result<Outcome> {
    params.validate()?;
    request.validate()?;
    let delay = request
        .delay
        .as_ref()
        .ok_or_else(|| Error::Parameter("delay-resolved correlation needs a delay grid".into()))?;
    converge(request.starting_epsilon(params), delay.tau.len(), opts, |eps, extra| {
        delay_at(params, request, eps, extra, opts)
    })
}

/// [`g_tau_outcome`] packaged as a grid over the delay axis.
pub fn g_tau(params: &SystemParams, request: &CorrelationRequest, opts: &EvalOptions) -> Result<ResultGrid> {
    let outcome = g_tau_outcome(params, request, opts)?;
    let tau = request.delay.as_ref().map(|d| d.tau.clone()).unwrap_or_default();
    let observable = Observable::Correlation { request: request.clone() };
    let template = GridTemplate::fixed(request.frequencies.clone());
    Ok(ResultGrid::from_outcomes(params, observable, template, vec![Axis::new("tau", tau)], vec![outcome]))
}

/// Sensor population `⟨ξ†ξ⟩/ε²` of a single one-photon sensor.
fn population_at(
    params: &SystemParams,
    frequency: f64,
    linewidth: f64,
    epsilon: f64,
    extra: usize,
    opts: &EvalOptions,
) -> Result<f64> {
    let sensor = SensorSpec::new(frequency, linewidth, 1)?.with_truncation(2 + extra)?;
    let solved = solve_point(params, &[sensor], epsilon, opts)?;
    let table = sensor_moments(&solved.model, &solved.rho, &[1])?;
    table.check_floor(&[1], &solved.amplitudes, opts.floor)?;
    Ok(table.populations[0] / (epsilon * epsilon))
}

pub(crate) fn population_outcome(
    params: &SystemParams,
    frequency: f64,
    linewidth: f64,
    epsilon: Option<f64>,
    opts: &EvalOptions,
) -> Result<Outcome> {
    params.validate()?;
    let eps0 = epsilon.unwrap_or_else(|| default_coupling(params.gamma, linewidth));
    converge(eps0, 1, opts, |eps, extra| population_at(params, frequency, linewidth, eps, extra, opts).map(|v| vec![v]))
}
