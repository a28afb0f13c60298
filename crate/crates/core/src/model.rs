//! The driven two-level emitter, its filter sensors, and the dressed-state
//! splitting of the Mollow triplet.
//!
//! All frequencies are measured from the laser (`ω̃ = ω − ω_L`) and expressed
//! in the same unit as the emitter decay rate `γ_σ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{
    annihilation_op, build_liouvillian, lift, ComplexMatrix, Dissipator, Liouvillian, SpaceLayout,
    C64,
};

/// Default upper bound on the composite Hilbert-space dimension.
pub const DEFAULT_DIM_CAP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Emitter–laser detuning `ω̃_σ = ω_σ − ω_L`.
    pub detuning: f64,
    /// Coherent drive amplitude `Ω`.
    pub rabi: f64,
    /// Emitter decay rate `γ_σ`.
    pub gamma: f64,
}

impl SystemParams {
    pub fn new(rabi: f64, detuning: f64) -> Result<Self> {
        let p = SystemParams { detuning, rabi, gamma: 1.0 };
        p.validate()?;
        Ok(p)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        self.gamma = gamma;
        self.validate()?;
        Ok(self)
    }

    /// Parameters whose triplet splitting equals `target_splitting`.
    pub fn from_splitting(target_splitting: f64, detuning: f64) -> Result<Self> {
        let rabi = drive_for_target_splitting(target_splitting, detuning, 1.0)?;
        Self::new(rabi, detuning)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::Parameter(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.rabi >= 0.0) || !self.rabi.is_finite() {
            return Err(Error::Parameter(format!("drive amplitude must be nonnegative, got {}", self.rabi)));
        }
        if !self.detuning.is_finite() {
            return Err(Error::Parameter("detuning must be finite".into()));
        }
        Ok(())
    }
}

/// One filter mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    /// Center frequency `ω̃_k`.
    pub frequency: f64,
    /// Linewidth `Γ_k` (the sensor decay rate).
    pub linewidth: f64,
    /// Number of photons `n_μ` detected jointly by this sensor.
    pub bundle_order: usize,
    /// Fock-space truncation `d_k ≥ n_μ + 1`.
    pub truncation: usize,
}

impl SensorSpec {
    pub fn new(frequency: f64, linewidth: f64, bundle_order: usize) -> Result<Self> {
        let s = SensorSpec { frequency, linewidth, bundle_order, truncation: bundle_order + 1 };
        s.validate()?;
        Ok(s)
    }

    pub fn with_truncation(mut self, truncation: usize) -> Result<Self> {
        self.truncation = truncation;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.linewidth > 0.0) || !self.linewidth.is_finite() {
            return Err(Error::Parameter(format!("sensor linewidth must be positive, got {}", self.linewidth)));
        }
        if !self.frequency.is_finite() {
            return Err(Error::Parameter("sensor frequency must be finite".into()));
        }
        if self.bundle_order == 0 {
            return Err(Error::Parameter("bundle order must be at least 1".into()));
        }
        if self.truncation < self.bundle_order + 1 {
            return Err(Error::Parameter(format!(
                "truncation {} cannot hold a bundle of {} photons",
                self.truncation, self.bundle_order
            )));
        }
        Ok(())
    }
}

/// Emitter plus sensors, assembled on the tensor-product space.
#[derive(Debug, Clone)]
pub struct CompositeModel {
    pub params: SystemParams,
    pub sensors: Vec<SensorSpec>,
    pub coupling: f64,
    pub layout: SpaceLayout,
    pub hamiltonian: ComplexMatrix,
    pub dissipators: Vec<Dissipator>,
    /// Emitter lowering operator, lifted.
    pub sigma: ComplexMatrix,
    /// Sensor lowering operators, lifted, in sensor order.
    pub xi: Vec<ComplexMatrix>,
    liouvillian: Liouvillian,
}

impl CompositeModel {
    pub fn liouvillian(&self) -> &Liouvillian {
        &self.liouvillian
    }

    pub fn total_dim(&self) -> usize {
        self.layout.total_dim()
    }

    /// Per-basis-state scale factors `Π_μ amplitude_μ^{n_μ}` where `n_μ` is the
    /// occupation of sensor `μ`.
    pub fn excitation_scale(&self, amplitudes: &[f64]) -> Vec<f64> {
        assert_eq!(amplitudes.len(), self.sensors.len());
        (0..self.total_dim())
            .map(|i| {
                self.layout.digits(i)[1..]
                    .iter()
                    .zip(amplitudes)
                    .map(|(&n, &a)| a.powi(n as i32))
                    .product()
            })
            .collect()
    }
}

fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

pub fn build_model(params: SystemParams, sensors: &[SensorSpec], coupling: f64) -> Result<CompositeModel> {
    build_model_with_cap(params, sensors, coupling, DEFAULT_DIM_CAP)
}

pub fn build_model_with_cap(
    params: SystemParams,
    sensors: &[SensorSpec],
    coupling: f64,
    cap: usize,
) -> Result<CompositeModel> {
    params.validate()?;
    if !(coupling > 0.0) || !coupling.is_finite() {
        return Err(Error::Parameter(format!("coupling must be positive, got {coupling}")));
    }
    for s in sensors {
        s.validate()?;
    }
    let dims: Vec<usize> = std::iter::once(2).chain(sensors.iter().map(|s| s.truncation)).collect();
    let total = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).unwrap_or(usize::MAX);
    if total > cap {
        return Err(Error::Capacity { total, cap });
    }
    let layout = SpaceLayout::new(dims)?;

    let sigma = lift(&annihilation_op(2)?, 0, &layout)?;
    let sigma_dag = sigma.adjoint();
    let mut hamiltonian = sigma_dag
        .matmul(&sigma)?
        .scale(real(params.detuning))
        .add(&sigma_dag.add(&sigma)?.scale(real(params.rabi)))?;
    let mut dissipators = vec![Dissipator::new(params.gamma, sigma.clone())];
    let mut xi = Vec::with_capacity(sensors.len());
    for (k, s) in sensors.iter().enumerate() {
        let x = lift(&annihilation_op(s.truncation)?, k + 1, &layout)?;
        let x_dag = x.adjoint();
        let free = x_dag.matmul(&x)?.scale(real(s.frequency));
        let exchange = sigma_dag.matmul(&x)?.add(&x_dag.matmul(&sigma)?)?.scale(real(coupling));
        hamiltonian = hamiltonian.add(&free)?.add(&exchange)?;
        dissipators.push(Dissipator::new(s.linewidth, x.clone()));
        xi.push(x);
    }
    let liouvillian = build_liouvillian(&hamiltonian, &dissipators, &layout)?;
    Ok(CompositeModel {
        params,
        sensors: sensors.to_vec(),
        coupling,
        layout,
        hamiltonian,
        dissipators,
        sigma,
        xi,
        liouvillian,
    })
}

/// Default sensor coupling `0.05·√(γ_σ·min Γ)`.
pub fn default_coupling(gamma: f64, min_linewidth: f64) -> f64 {
    0.05 * (gamma * min_linewidth).sqrt()
}

/// Triplet splitting data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DressedInfo {
    /// `Ω₀ = √(4Ω² + ω̃_σ²)`.
    pub omega_0: f64,
    /// Splitting between the central peak and each sideband.
    pub omega_plus: f64,
}

impl DressedInfo {
    /// Peak positions `{−Ω₊, 0, +Ω₊}`.
    pub fn peaks(&self) -> [f64; 3] {
        [-self.omega_plus, 0.0, self.omega_plus]
    }
}

/// `Ω₊ = √(8Ω₀² − 6γ² + √(9γ⁴ + 16Ω₀⁴ − 24γ²(16Ω² + Ω₀²))) / (2√3)`.
///
/// The commonly typeset version of this formula carries `9γ` rather than
/// `9γ⁴` under the inner root, which is not dimensionally consistent; the
/// homogeneous form is used here (see [`dressed_splitting_as_typeset`]).
pub fn dressed_splitting(params: &SystemParams) -> Result<DressedInfo> {
    splitting_with_constant(params, 9.0 * params.gamma.powi(4))
}

/// The splitting with the inner constant taken literally as `9γ`. Only
/// differs from [`dressed_splitting`] when `γ ≠ 1`.
pub fn dressed_splitting_as_typeset(params: &SystemParams) -> Result<DressedInfo> {
    splitting_with_constant(params, 9.0 * params.gamma)
}

fn splitting_with_constant(params: &SystemParams, constant: f64) -> Result<DressedInfo> {
    params.validate()?;
    let g2 = params.gamma * params.gamma;
    let omega_0_sq = 4.0 * params.rabi * params.rabi + params.detuning * params.detuning;
    let discriminant = constant + 16.0 * omega_0_sq * omega_0_sq
        - 24.0 * g2 * (16.0 * params.rabi * params.rabi + omega_0_sq);
    if discriminant < 0.0 {
        return Err(Error::Regime(format!("negative discriminant {discriminant:e}")));
    }
    let outer = 8.0 * omega_0_sq - 6.0 * g2 + discriminant.sqrt();
    if !(outer > 0.0) {
        return Err(Error::Regime(format!("no real splitting (radicand {outer:e})")));
    }
    Ok(DressedInfo { omega_0: omega_0_sq.sqrt(), omega_plus: outer.sqrt() / (2.0 * 3f64.sqrt()) })
}

/// Finds the drive amplitude `Ω` whose splitting is `target` at the given
/// detuning, by bisection on [`dressed_splitting`].
pub fn drive_for_target_splitting(target: f64, detuning: f64, gamma: f64) -> Result<f64> {
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::Parameter(format!("target splitting must be positive, got {target}")));
    }
    // Points outside the triplet regime count as "below target".
    let excess = |rabi: f64| -> f64 {
        let p = SystemParams { detuning, rabi, gamma };
        match dressed_splitting(&p) {
            Ok(info) => info.omega_plus - target,
            Err(_) => -target,
        }
    };
    let guess = ((target * target - detuning * detuning).max(0.0)).sqrt() / 2.0;
    let mut hi = guess.max(gamma).max(target / 2.0) * 2.0;
    let mut expansions = 0;
    while excess(hi) <= 0.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::Parameter(format!("no drive reaches splitting {target}")));
        }
    }
    let mut lo = 0.0;
    if excess(lo) > 0.0 {
        return Err(Error::Parameter(format!(
            "splitting {target} is below the undriven value at detuning {detuning}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_emitter_hamiltonian_at_resonance() {
        let params = SystemParams::new(5.0, 0.0).unwrap();
        let m = build_model(params, &[], 0.1).unwrap();
        assert_eq!(m.total_dim(), 2);
        let h = m.hamiltonian.to_dense();
        assert_eq!(h[(0, 1)], real(5.0));
        assert_eq!(h[(1, 0)], real(5.0));
        assert_eq!(h[(0, 0)], real(0.0));
        assert_eq!(h[(1, 1)], real(0.0));
    }

    #[test]
    fn two_sensor_bookkeeping() {
        let params = SystemParams::new(5.0, 0.0).unwrap();
        let sensors = [SensorSpec::new(1.0, 2.0, 1).unwrap(), SensorSpec::new(-1.0, 3.0, 1).unwrap()];
        let m = build_model(params, &sensors, 0.1).unwrap();
        assert_eq!(m.layout.dims(), &[2, 2, 2]);
        assert_eq!(m.total_dim(), 8);
        let rates: Vec<f64> = m.dissipators.iter().map(|d| d.rate).collect();
        assert_eq!(rates, vec![1.0, 2.0, 3.0]);
        assert_eq!(m.dissipators[1].op, m.xi[0]);
        assert_eq!(m.dissipators[2].op, m.xi[1]);
        assert!(m.hamiltonian.hermiticity_defect() < 1e-12);
    }

    #[test]
    fn bundle_sensor_has_ladder_entries() {
        let params = SystemParams::new(5.0, 0.0).unwrap();
        let s = SensorSpec::new(0.0, 1.0, 2).unwrap();
        assert_eq!(s.truncation, 3);
        let m = build_model(params, &[s], 0.1).unwrap();
        assert_eq!(m.layout.dims(), &[2, 3]);
        // |g,2⟩ (index 2) → √2 |g,1⟩ (index 1)
        assert!((m.xi[0].get(1, 2).re - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn parameter_errors() {
        let params = SystemParams::new(1.0, 0.0).unwrap();
        assert!(matches!(build_model(params, &[], 0.0), Err(Error::Parameter(_))));
        let big = SensorSpec::new(0.0, 1.0, 1).unwrap().with_truncation(20).unwrap();
        assert!(matches!(
            build_model(params, &[big, big, big], 0.1),
            Err(Error::Capacity { total: 16000, .. })
        ));
        assert!(SensorSpec::new(0.0, 1.0, 2).unwrap().with_truncation(2).is_err());
        assert!(SensorSpec::new(0.0, 0.0, 1).is_err());
        assert!(SystemParams::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn splitting_at_resonant_drive() {
        let info = dressed_splitting(&SystemParams::new(5.0, 0.0).unwrap()).unwrap();
        assert!((info.omega_0 - 10.0).abs() < 1e-12);
        // √(794 + √148009) / (2√3)
        let expected = (794.0 + 148009f64.sqrt()).sqrt() / (2.0 * 3f64.sqrt());
        assert!((info.omega_plus - expected).abs() < 1e-12);
        assert!(info.omega_plus < info.omega_0);
    }

    #[test]
    fn splitting_approaches_omega_0() {
        let p = SystemParams::new(150.0, 0.0).unwrap();
        let info = dressed_splitting(&p).unwrap();
        assert!((info.omega_0 - 300.0).abs() < 1e-9);
        assert!((info.omega_plus - info.omega_0).abs() / info.omega_0 < 1e-3);
        let p = SystemParams::new(50.0, 0.0).unwrap();
        let info = dressed_splitting(&p).unwrap();
        assert!((info.omega_plus - info.omega_0).abs() / info.omega_0 < 1e-2);
    }

    #[test]
    fn undriven_resonant_emitter_is_out_of_regime() {
        let p = SystemParams::new(0.0, 0.0).unwrap();
        assert!(matches!(dressed_splitting(&p), Err(Error::Regime(_))));
    }

    #[test]
    fn typeset_form_matches_at_unit_gamma_only() {
        let p = SystemParams::new(5.0, 1.0).unwrap();
        let a = dressed_splitting(&p).unwrap().omega_plus;
        let b = dressed_splitting_as_typeset(&p).unwrap().omega_plus;
        assert_eq!(a, b);
        let p = p.with_gamma(2.0).unwrap();
        let a = dressed_splitting(&p).unwrap().omega_plus;
        let b = dressed_splitting_as_typeset(&p).unwrap().omega_plus;
        assert!(a != b);
    }

    #[test]
    fn homogeneous_form_scales_with_gamma() {
        let p = SystemParams::new(5.0, 1.5).unwrap();
        let scaled = SystemParams { rabi: 15.0, detuning: 4.5, gamma: 3.0 };
        let a = dressed_splitting(&p).unwrap().omega_plus;
        let b = dressed_splitting(&scaled).unwrap().omega_plus;
        assert!((3.0 * a - b).abs() < 1e-10 * b);
    }

    #[test]
    fn drive_for_detuned_splitting() {
        let rabi = drive_for_target_splitting(300.0, 200.0, 1.0).unwrap();
        let guess = (300f64.powi(2) - 200f64.powi(2)).sqrt() / 2.0;
        assert!((rabi - guess).abs() / guess < 1e-2);
        let p = SystemParams::new(rabi, 200.0).unwrap();
        assert!((dressed_splitting(&p).unwrap().omega_plus - 300.0).abs() < 1e-4);
    }

    #[test]
    fn drive_at_resonance_is_half_the_splitting() {
        let rabi = drive_for_target_splitting(1000.0, 0.0, 1.0).unwrap();
        assert!((rabi - 500.0).abs() / 500.0 < 1e-5);
        assert!(matches!(drive_for_target_splitting(0.0, 0.0, 1.0), Err(Error::Parameter(_))));
        assert!(matches!(drive_for_target_splitting(100.0, 200.0, 1.0), Err(Error::Parameter(_))));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn drive_round_trip(target in 10.0f64..1000.0, frac in 0.0f64..0.9) {
                let detuning = frac * target;
                let rabi = drive_for_target_splitting(target, detuning, 1.0).unwrap();
                let p = SystemParams::new(rabi, detuning).unwrap();
                let back = dressed_splitting(&p).unwrap().omega_plus;
                prop_assert!((back - target).abs() / target < 1e-6);
                let again = drive_for_target_splitting(back, detuning, 1.0).unwrap();
                prop_assert!((again - rabi).abs() / rabi < 1e-6);
            }

            #[test]
            fn hamiltonian_is_hermitian(
                rabi in 0.0f64..50.0,
                detuning in -50.0f64..50.0,
                w1 in -100.0f64..100.0,
                w2 in -100.0f64..100.0,
                n in 1usize..3,
            ) {
                let p = SystemParams::new(rabi, detuning).unwrap();
                let s = [SensorSpec::new(w1, 2.0, n).unwrap(), SensorSpec::new(w2, 5.0, 1).unwrap()];
                let m = build_model(p, &s, 0.3).unwrap();
                prop_assert!(m.hamiltonian.hermiticity_defect() < 1e-12);
            }
        }
    }
}
