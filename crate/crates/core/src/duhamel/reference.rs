use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::operator::{pack, unpack, Packed};
use crate::error::{NskqError, Result};
use crate::linear::build_symbol;
use crate::nonlinear::{compute_all, DuContraction, Method, ProductEngine};
use crate::params::ModelParams;
use crate::spectral::{FlowState, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOptions {
    pub nonlinear: bool,
    pub contraction: DuContraction,
    /// Initial number of steps per unit time.
    pub min_steps: usize,
    /// Cap on steps per unit time before giving up.
    pub max_steps: usize,
    /// Target for the Richardson estimate, relative to the largest coefficient.
    pub rel_tol: f64,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            nonlinear: true,
            contraction: DuContraction::default(),
            min_steps: 256,
            max_steps: 1 << 20,
            rel_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReferenceResult {
    pub trajectory: Trajectory,
    /// Steps per unit time of the accepted (finer) run.
    pub steps_per_unit: usize,
    /// `max |y_h - y_{h/2}| / 15`, relative.
    pub error_estimate: f64,
}

struct Rhs<'a> {
    params: &'a ModelParams,
    engine: ProductEngine,
    /// Dense symbol per mode, row-major `(d+1)²`.
    symbols: Vec<Vec<Complex64>>,
    opts: &'a ReferenceOptions,
    real: bool,
}

impl Rhs<'_> {
    fn eval(&self, data: &FlowState, v: &Packed) -> Result<Packed> {
        let w = data.dim() + 1;
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        out.par_chunks_mut(w).enumerate().for_each(|(idx, o)| {
            let m = &self.symbols[idx];
            let x = &v[idx * w..(idx + 1) * w];
            for (i, oi) in o.iter_mut().enumerate() {
                *oi = -(0..w).map(|j| m[i * w + j] * x[j]).sum::<Complex64>();
            }
        });
        if self.opts.nonlinear {
            let state = unpack(v, data.lattice(), 0.0, self.real);
            let nl = compute_all(&self.engine, &state, self.params, self.opts.contraction)?;
            let forced = pack(&FlowState { a: nl.f_hat, u: nl.g_hat, t: 0.0 });
            out.iter_mut().zip(forced).for_each(|(o, f)| *o += f);
        }
        Ok(out)
    }

    fn rk4_step(&self, data: &FlowState, v: &Packed, h: f64) -> Result<Packed> {
        let shift = |base: &Packed, k: &Packed, s: f64| -> Packed {
            base.iter().zip(k).map(|(b, k)| b + k * s).collect()
        };
        let k1 = self.eval(data, v)?;
        let k2 = self.eval(data, &shift(v, &k1, 0.5 * h))?;
        let k3 = self.eval(data, &shift(v, &k2, 0.5 * h))?;
        let k4 = self.eval(data, &shift(v, &k3, h))?;
        Ok(v
            .iter()
            .enumerate()
            .map(|(i, x)| x + (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) * (h / 6.0))
            .collect())
    }

    fn run(&self, data: &FlowState, times: &[f64], per_unit: usize) -> Result<Vec<Packed>> {
        let mut v = pack(data);
        let mut t = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &target in times {
            let steps = ((target - t) * per_unit as f64).ceil().max(1.0) as usize;
            let h = (target - t) / steps as f64;
            for _ in 0..steps {
                v = self.rk4_step(data, &v, h)?;
            }
            if v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                return Err(NskqError::Stability(format!("non-finite state at {per_unit} steps per unit")));
            }
            out.push(v.clone());
            t = target;
        }
        Ok(out)
    }
}

/// Classical RK4 on the frequency-space ODE `v' = -A(ξ)v + N(v)`, with the
/// linear part applied through the dense symbol.
///
/// The step count doubles until two consecutive runs agree to
/// `15 · rel_tol` at every output time.
pub fn reference_integrate(
    data: &FlowState,
    params: &ModelParams,
    times: &[f64],
    opts: &ReferenceOptions,
) -> Result<ReferenceResult> {
    data.check()?;
    if times.is_empty() || times[0] <= 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(NskqError::InvalidConfig("reference times must be positive and increasing".into()));
    }
    if opts.min_steps == 0 || opts.max_steps < opts.min_steps {
        return Err(NskqError::InvalidConfig("bad reference step bounds".into()));
    }
    let lat = data.lattice();
    let rhs = Rhs {
        params,
        engine: ProductEngine::new(lat, Method::Fast)?,
        symbols: (0..lat.len()).map(|idx| build_symbol(&lat.xi_vec(idx), params).entries).collect(),
        opts,
        real: data.components().all(|c| c.is_real()),
    };
    let mut per_unit = opts.min_steps;
    let mut coarse: Option<Vec<Packed>> = None;
    loop {
        let fine = match rhs.run(data, times, per_unit) {
            Ok(f) => Some(f),
            Err(NskqError::Stability(_)) => None,
            Err(e) => return Err(e),
        };
        if let (Some(c), Some(f)) = (&coarse, &fine) {
            let scale = f.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
            let diff = c
                .iter()
                .flatten()
                .zip(f.iter().flatten())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            let est = if scale > 0.0 { diff / (15.0 * scale) } else { diff };
            if est <= opts.rel_tol {
                let states = f.iter().zip(times).map(|(p, &t)| unpack(p, lat, t, rhs.real)).collect();
                return Ok(ReferenceResult {
                    trajectory: Trajectory::new(states)?,
                    steps_per_unit: per_unit,
                    error_estimate: est,
                });
            }
        }
        coarse = fine;
        per_unit *= 2;
        if per_unit > opts.max_steps {
            return Err(NskqError::Stability(format!(
                "no Richardson agreement below {} steps per unit time",
                opts.max_steps
            )));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::evolve_state;
    use crate::spectral::{LatticeSpec, SpectralField};
    use std::f64::consts::PI;

    fn lattice() -> std::sync::Arc<crate::spectral::FrequencyLattice> {
        LatticeSpec::new(2, 8, 2.0 * PI).build().unwrap()
    }

    #[test]
    fn zero_data_stays_zero() {
        let lat = lattice();
        let r = reference_integrate(&FlowState::zeros(&lat, 0.0), &ModelParams::default(), &[0.1], &Default::default())
            .unwrap();
        assert!(r.trajectory.is_zero());
    }

    #[test]
    fn linear_run_matches_semigroup() {
        let lat = lattice();
        let p = ModelParams::default();
        let mut data = FlowState::zeros(&lat, 0.0);
        data.a = SpectralField::single_mode(&lat, &[1, 2], Complex64::new(0.3, 0.1)).unwrap();
        data.u[1] = SpectralField::single_mode(&lat, &[2, 0], Complex64::new(0.0, 0.2)).unwrap();
        let opts = ReferenceOptions { nonlinear: false, ..Default::default() };
        let r = reference_integrate(&data, &p, &[0.05, 0.2], &opts).unwrap();
        for s in r.trajectory.states() {
            let exact = evolve_state(s.t, &data, &p);
            assert!(s.max_abs_diff(&exact) <= 1e-8 * data.max_abs(), "{}", s.max_abs_diff(&exact));
        }
    }

    #[test]
    fn decoupled_transverse_mode_is_heat_flow() {
        let lat = lattice();
        let p = ModelParams::new(0.7, 0.2, 1.0, 1.0).unwrap();
        let mut data = FlowState::zeros(&lat, 0.0);
        // k = (0, 1) with u along e₁ is divergence free and decoupled from a.
        data.u[0] = SpectralField::single_mode(&lat, &[0, 1], Complex64::new(1.0, 0.0)).unwrap();
        let opts = ReferenceOptions { nonlinear: false, ..Default::default() };
        let t = 0.3;
        let r = reference_integrate(&data, &p, &[t], &opts).unwrap();
        let idx = lat.index_of(&[0, 1]).unwrap();
        let got = r.trajectory.last().u[0].coeffs()[idx];
        let want = (-p.mu * t * lat.magnitude(idx).powi(2)).exp();
        assert!((got.re - want).abs() < 1e-9 && got.im.abs() < 1e-12);
    }
}
