//! Time evolution of vectorized density matrices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm_inf;
use crate::operators::{Liouvillian, SparseMatrix, C64};
use crate::steady_state::DensityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Rk45Options {
    pub rtol: f64,
    /// Absolute tolerance relative to `‖x₀‖∞`.
    pub atol_rel: f64,
    pub max_steps: usize,
}

impl Default for Rk45Options {
    fn default() -> Self {
        Rk45Options { rtol: 1e-9, atol_rel: 1e-13, max_steps: 2_000_000 }
    }
}

/// Evaluates `exp(A t) x₀` at each of `times` (nonnegative, nondecreasing)
/// with an adaptive Dormand–Prince 5(4) integrator.
pub fn propagate_rk45(a: &SparseMatrix, x0: &[C64], times: &[f64], opts: &Rk45Options) -> Result<Vec<Vec<C64>>> {
    check_times(times)?;
    const C2: f64 = 1.0 / 5.0;
    const C3: f64 = 3.0 / 10.0;
    const C4: f64 = 4.0 / 5.0;
    const C5: f64 = 8.0 / 9.0;
    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    const E1: f64 = 71.0 / 57600.0;
    const E3: f64 = -71.0 / 16695.0;
    const E4: f64 = 71.0 / 1920.0;
    const E5: f64 = -17253.0 / 339200.0;
    const E6: f64 = 22.0 / 525.0;
    const E7: f64 = -1.0 / 40.0;
    let _ = (C2, C3, C4, C5);

    let n = x0.len();
    let atol = opts.atol_rel * norm_inf(x0).max(1e-300);
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut h = (1.0 / a.norm_inf().max(1e-12)).min(times.last().copied().unwrap_or(0.0).max(1e-12));
    let mut out = Vec::with_capacity(times.len());
    let mut k1 = a.matvec(&x);
    let mut steps = 0;
    let combo = |x: &[C64], ks: &[(&[C64], f64)], h: f64| -> Vec<C64> {
        let mut y = x.to_vec();
        for (k, c) in ks {
            if *c != 0.0 {
                let f = h * c;
                y.iter_mut().zip(k.iter()).for_each(|(yi, ki)| *yi += ki * f);
            }
        }
        y
    };
    for &target in times {
        while t < target {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Propagation(format!("step limit reached at t = {t}")));
            }
            let step = h.min(target - t);
            let k2 = a.matvec(&combo(&x, &[(&k1, A21)], step));
            let k3 = a.matvec(&combo(&x, &[(&k1, A31), (&k2, A32)], step));
            let k4 = a.matvec(&combo(&x, &[(&k1, A41), (&k2, A42), (&k3, A43)], step));
            let k5 = a.matvec(&combo(&x, &[(&k1, A51), (&k2, A52), (&k3, A53), (&k4, A54)], step));
            let k6 = a.matvec(&combo(&x, &[(&k1, A61), (&k2, A62), (&k3, A63), (&k4, A64), (&k5, A65)], step));
            let y = combo(&x, &[(&k1, B1), (&k3, B3), (&k4, B4), (&k5, B5), (&k6, B6)], step);
            let k7 = a.matvec(&y);
            let mut err = 0.0f64;
            for i in 0..n {
                let e = step * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = atol + opts.rtol * x[i].norm().max(y[i].norm());
                err = err.max(e.norm() / sc);
            }
            if !err.is_finite() {
                return Err(Error::Propagation(format!("non-finite error estimate at t = {t}")));
            }
            if err <= 1.0 {
                t += step;
                if target - t < 1e-14 * target.abs().max(1.0) {
                    t = target;
                }
                x = y;
                k1 = k7;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 || step == h {
                h *= factor;
            } else {
                h = step * factor;
            }
            if h < 1e-14 * target.abs().max(1e-300) {
                return Err(Error::Propagation(format!("step size underflow at t = {t}")));
            }
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// Evaluates `exp(A t) x₀` at each of `times` with dense matrix exponentials,
/// reusing the propagator across equal steps.
pub fn propagate_expm(a: &DMatrix<C64>, x0: &[C64], times: &[f64]) -> Result<Vec<Vec<C64>>> {
    check_times(times)?;
    let mut x = DVector::from_column_slice(x0);
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut cached: Option<(f64, DMatrix<C64>)> = None;
    for &target in times {
        let dt = target - t;
        if dt > 0.0 {
            let reuse = matches!(&cached, Some((h, _)) if (h - dt).abs() <= 1e-12 * dt);
            if !reuse {
                cached = Some((dt, (a * C64::new(dt, 0.0)).exp()));
            }
            x = &cached.as_ref().unwrap().1 * x;
            t = target;
        }
        out.push(x.as_slice().to_vec());
    }
    Ok(out)
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !(t >= &0.0) || !t.is_finite()) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Propagation("times must be finite, nonnegative and nondecreasing".into()));
    }
    Ok(())
}

/// `ρ(t)` under `l` starting from `rho`.
pub fn evolve(l: &Liouvillian, rho: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    let x = propagate_rk45(l.generator(), &rho.to_vector(), &[t], &Rk45Options::default())?;
    DensityMatrix::from_vector(&x[0], l.layout().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, SensorSpec, SystemParams};
    use crate::steady_state::solve_steady_state;

    fn model() -> crate::model::CompositeModel {
        let p = SystemParams::new(2.0, 0.5).unwrap();
        let sensors = [SensorSpec::new(2.0, 1.5, 1).unwrap(), SensorSpec::new(-1.0, 1.0, 2).unwrap()];
        build_model(p, &sensors, 0.3).unwrap()
    }

    #[test]
    fn rk45_matches_matrix_exponential() {
        let m = model();
        let l = m.liouvillian();
        let rho = DensityMatrix::maximally_mixed(m.layout.clone());
        let times: Vec<f64> = (0..=20).map(|k| 0.25 * k as f64).collect();
        let rk = propagate_rk45(l.generator(), &rho.to_vector(), &times, &Rk45Options::default()).unwrap();
        let ex = propagate_expm(&l.generator().to_dense(), &rho.to_vector(), &times).unwrap();
        for (a, b) in rk.iter().zip(&ex) {
            let diff = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
            assert!(diff < 1e-8, "{diff}");
        }
    }

    #[test]
    fn evolution_preserves_trace_and_hermiticity() {
        let m = model();
        let mut rho = DensityMatrix::ground(m.layout.clone());
        for _ in 0..10 {
            rho = evolve(m.liouvillian(), &rho, 0.37).unwrap();
            assert!((rho.trace() - C64::new(1.0, 0.0)).norm() < 1e-10);
            assert!(rho.hermiticity_defect() < 1e-10);
        }
    }

    #[test]
    fn steady_state_is_a_fixed_point() {
        let m = model();
        let rho = solve_steady_state(m.liouvillian()).unwrap();
        let later = evolve(m.liouvillian(), &rho, 10.0).unwrap();
        assert!(rho.trace_distance(&later) < 1e-8);
    }

    #[test]
    fn long_propagation_reaches_bloch_steady_state() {
        let m = build_model(SystemParams::new(0.5, 0.0).unwrap(), &[], 1.0).unwrap();
        let rho = evolve(m.liouvillian(), &DensityMatrix::ground(m.layout.clone()), 40.0).unwrap();
        assert!((rho.matrix()[(1, 1)].re - 1.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn rejects_decreasing_times() {
        let m = model();
        let x = DensityMatrix::ground(m.layout.clone()).to_vector();
        assert!(propagate_rk45(m.liouvillian().generator(), &x, &[1.0, 0.5], &Rk45Options::default()).is_err());
    }
}
