//! Filtered emission spectra: sensor populations, and an independent route
//! through the emitter's two-time correlation.

use serde_json::json;

use super::{EvalOptions, Outcome};
use crate::error::{Error, Result};
use crate::grid::{evaluate_grid, Axis, Flag, GridTemplate, Observable, ResultGrid};
use crate::model::{build_model, SystemParams};
use crate::operators::{vectorize, C64};
use crate::parallel::{Parallelism, Pool};
use crate::propagate::propagate_expm;
use crate::steady_state::solve_steady_state;

/// `S_Γ(ω̃) ∝ ⟨ξ†ξ⟩` of a single sensor scanned over `grid`, normalized to
/// unit sum.
pub fn spectrum_scan(params: &SystemParams, linewidth: f64, grid: &[f64], opts: &EvalOptions) -> Result<ResultGrid> {
    if grid.is_empty() {
        return Err(Error::Parameter("spectrum grid is empty".into()));
    }
    evaluate_grid(
        params,
        &Observable::Spectrum { linewidth, epsilon: None },
        &GridTemplate::free(vec![0.0], &[0]),
        vec![Axis::new("frequency", grid.to_vec())],
        &Pool::new(Parallelism::Global)?,
        opts,
    )
}

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    /// Integration window; by default long enough for the filtered
    /// correlation to decay by about 1e-7.
    pub window: Option<f64>,
    /// Time step; by default a fraction of the fastest relevant period.
    pub step: Option<f64>,
    /// Largest acceptable remaining correlation at the window end, relative
    /// to its peak.
    pub decay_threshold: f64,
    /// Drop the elastic part `|⟨σ⟩|²` of the correlation, leaving the
    /// incoherent triplet.
    pub incoherent: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { window: None, step: None, decay_threshold: 1e-6, incoherent: false }
    }
}

/// Filtered spectrum from `C(τ) = ⟨σ†(0)σ(τ)⟩` of the bare emitter: the
/// Lorentzian filter of full width Γ becomes the factor `e^{−Γτ/2}`, and
/// `S(ω̃) = Re ∫₀^T e^{iω̃τ} C(τ) e^{−Γτ/2} dτ` by Simpson's rule.
pub fn wk_spectrum_oracle(
    params: &SystemParams,
    linewidth: f64,
    grid: &[f64],
    oracle: &OracleOptions,
) -> Result<ResultGrid> {
    params.validate()?;
    if grid.is_empty() {
        return Err(Error::Parameter("spectrum grid is empty".into()));
    }
    if !(linewidth.is_finite() && linewidth > 0.0) {
        return Err(Error::Parameter("linewidth must be positive".into()));
    }
    let model = build_model(*params, &[], 1.0)?;
    let rho = solve_steady_state(model.liouvillian())?;
    let sigma = model.sigma.to_dense();
    let x0 = vectorize(&(rho.matrix() * sigma.adjoint()));
    let generator = model.liouvillian().generator().to_dense();

    let omega_0 = (4.0 * params.rabi * params.rabi + params.detuning * params.detuning).sqrt();
    let span = grid.iter().map(|w| w.abs()).fold(0.0, f64::max) + omega_0 + params.gamma + linewidth;
    let window = oracle.window.unwrap_or(2.0 * 1e7f64.ln() / linewidth);
    let step = oracle.step.unwrap_or((0.2 / span).min(0.01));
    let mut intervals = (window / step).ceil() as usize;
    intervals += intervals % 2;
    let dt = window / intervals as f64;
    let times: Vec<f64> = (0..=intervals).map(|k| k as f64 * dt).collect();
    let states = propagate_expm(&generator, &x0, &times)?;
    let n = sigma.nrows();
    let elastic = if oracle.incoherent { rho.expectation(&model.sigma).norm_sqr() } else { 0.0 };
    let filtered: Vec<C64> = states
        .iter()
        .zip(&times)
        .map(|(x, t)| {
            let c: C64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| sigma[(i, j)] * x[i * n + j]).sum();
            (c - elastic) * (-0.5 * linewidth * t).exp()
        })
        .collect();
    let peak = filtered.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Oracle("the emitter does not radiate".into()));
    }
    let tail = filtered[intervals].norm() / peak;
    if tail > oracle.decay_threshold {
        return Err(Error::Oracle(format!(
            "correlation has only decayed to {tail:e} of its peak over a window of {window}"
        )));
    }

    let values: Vec<f64> = grid
        .iter()
        .map(|&w| {
            let sum: f64 = filtered
                .iter()
                .zip(&times)
                .enumerate()
                .map(|(k, (f, t))| {
                    let weight = if k == 0 || k == intervals {
                        1.0
                    } else if k % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    weight * (C64::from_polar(1.0, w * t) * f).re
                })
                .sum();
            sum * dt / 3.0
        })
        .collect();
    let outcomes = values
        .into_iter()
        .map(|v| Outcome { values: vec![v], changes: vec![0.0], epsilon: 0.0, flag: Flag::Ok, truncation_change: None })
        .collect();
    let mut out = ResultGrid::from_outcomes(
        params,
        Observable::Spectrum { linewidth, epsilon: None },
        GridTemplate::free(vec![0.0], &[0]),
        vec![Axis::new("frequency", grid.to_vec())],
        outcomes,
    );
    out.metadata.config =
        json!({ "method": "two-time correlation", "window": window, "step": dt, "incoherent": oracle.incoherent });
    Ok(out)
}
