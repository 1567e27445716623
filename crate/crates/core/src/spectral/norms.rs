//! Pseudo-measure, Kato and time-weighted norms on lattice fields.
//!
//! Every supremum over frequency becomes a maximum over interior lattice
//! modes; the zero mode only enters when the order `r` is zero.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::{FlowState, SpectralField};
use super::lattice::FrequencyLattice;
use super::trajectory::Trajectory;
use crate::error::{NskqError, Result};

/// Largest exponent accepted by exponential weights before reporting saturation.
pub const SATURATION_EXPONENT: f64 = 700.0;

const PAR_THRESHOLD: usize = 4096;

/// `max_ξ |ξ|^r · e^{w(ξ)} · |û(ξ)|` over interior modes, with `w` an exponent
/// per lattice index. Errors on non-finite input or a saturated weight.
pub fn pm_norm_weighted(
    field: &SpectralField,
    r: f64,
    exponent: impl Fn(usize) -> f64 + Sync,
) -> Result<f64> {
    check_r(r)?;
    pm_with_table(field, &weight_table(field.lattice(), r), exponent)
}

fn check_r(r: f64) -> Result<()> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(NskqError::InvalidConfig(format!("PM order must be >= 0, got {r}")))
    }
}

/// `|ξ|^r` per lattice index, zero on modes the norm ignores.
fn weight_table(lat: &FrequencyLattice, r: f64) -> Vec<f64> {
    (0..lat.len())
        .map(|idx| {
            if !lat.is_interior(idx) || (r > 0.0 && idx == lat.zero_index()) {
                0.0
            } else if r == 0.0 {
                1.0
            } else {
                lat.magnitude(idx).powf(r)
            }
        })
        .collect()
}

fn pm_with_table(field: &SpectralField, table: &[f64], exponent: impl Fn(usize) -> f64 + Sync) -> Result<f64> {
    let lat = field.lattice();
    let coeffs = field.coeffs();
    let term = |idx: usize| -> Result<f64> {
        let c = coeffs[idx];
        if !(c.re.is_finite() && c.im.is_finite()) {
            return Err(NskqError::InvalidField(format!(
                "non-finite coefficient at mode {:?}",
                lat.wavenumber(idx)
            )));
        }
        let weight = table[idx];
        if weight == 0.0 || c == Complex64::new(0.0, 0.0) {
            return Ok(0.0);
        }
        let w = exponent(idx);
        if w > SATURATION_EXPONENT {
            return Err(NskqError::Saturation {
                exponent: w,
                xi_mag: lat.magnitude(idx),
            });
        }
        let amp = c.norm() * weight;
        Ok(if w == 0.0 { amp } else { amp * w.exp() })
    };
    if coeffs.len() >= PAR_THRESHOLD {
        (0..coeffs.len())
            .into_par_iter()
            .map(term)
            .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
    } else {
        (0..coeffs.len()).try_fold(0.0, |acc: f64, i| Ok(acc.max(term(i)?)))
    }
}

/// `‖f‖_{PM^r}` on the lattice.
pub fn pm_norm(field: &SpectralField, r: f64) -> Result<f64> {
    pm_norm_weighted(field, r, |_| 0.0)
}

/// Kato norm `sup_t t^{1/p} ‖f(t)‖_{PM^{r+2/p}}` over samples with `0 < t <= horizon`.
pub fn kato_norm<'a>(
    samples: impl IntoIterator<Item = (f64, &'a SpectralField)>,
    p: f64,
    r: f64,
    horizon: f64,
) -> Result<f64> {
    kato_norm_weighted(samples, p, r, horizon, |_, _| 0.0)
}

/// Kato norm after multiplying each coefficient by `e^{w(t, idx)}`.
pub fn kato_norm_weighted<'a>(
    samples: impl IntoIterator<Item = (f64, &'a SpectralField)>,
    p: f64,
    r: f64,
    horizon: f64,
    exponent: impl Fn(f64, usize) -> f64 + Sync,
) -> Result<f64> {
    check_p(p)?;
    check_r(r)?;
    let mut seen = false;
    let mut best = 0.0f64;
    let mut table: Option<(usize, Vec<f64>)> = None;
    for (t, field) in samples {
        seen = true;
        if !(t > 0.0 && t <= horizon) {
            continue;
        }
        let lat = field.lattice();
        let key = Arc::as_ptr(lat) as usize;
        if table.as_ref().is_none_or(|(k, _)| *k != key) {
            table = Some((key, weight_table(lat, r + 2.0 / p)));
        }
        let weights = &table.as_ref().expect("filled above").1;
        let pm = pm_with_table(field, weights, |idx| exponent(t, idx))?;
        best = best.max(t.powf(1.0 / p) * pm);
    }
    if !seen {
        return Err(NskqError::EmptyTrajectory);
    }
    Ok(best)
}

fn check_p(p: f64) -> Result<()> {
    if p > 2.0 && p.is_finite() {
        Ok(())
    } else {
        Err(NskqError::InvalidConfig(format!("Kato exponent must exceed 2, got {p}")))
    }
}

/// The three Kato terms that make up the `X_T` norm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct XParts {
    /// `‖a‖_{K^{p,d-1}}`
    pub a_low: f64,
    /// `‖a‖_{K^{p,d}}`
    pub a_high: f64,
    /// `max_j ‖u_j‖_{K^{p,d-1}}`
    pub u: f64,
}

impl XParts {
    pub fn total(&self) -> f64 {
        self.a_low.max(self.a_high) + self.u
    }
}

/// Components of `X_T` with an optional exponential weight `e^{w(t, idx)}`.
pub fn x_parts_weighted(
    traj: &Trajectory,
    p: f64,
    horizon: f64,
    exponent: impl Fn(f64, usize) -> f64 + Sync,
) -> Result<XParts> {
    let d = traj.lattice().dim() as f64;
    let states = traj.states();
    let a = || states.iter().map(|s| (s.t, &s.a));
    let a_low = kato_norm_weighted(a(), p, d - 1.0, horizon, &exponent)?;
    let a_high = kato_norm_weighted(a(), p, d, horizon, &exponent)?;
    let mut u = 0.0f64;
    for j in 0..traj.lattice().dim() {
        let comp = states.iter().map(|s| (s.t, &s.u[j]));
        u = u.max(kato_norm_weighted(comp, p, d - 1.0, horizon, &exponent)?);
    }
    Ok(XParts { a_low, a_high, u })
}

/// `‖(a,u)‖_{X_T}`.
pub fn x_norm(traj: &Trajectory, p: f64, horizon: f64) -> Result<f64> {
    Ok(x_parts_weighted(traj, p, horizon, |_, _| 0.0)?.total())
}

/// `‖(a,u)‖_{Y_T}`: the `X_T` norm of `e^{c0 √t |D|}(a,u)`.
pub fn y_norm(traj: &Trajectory, p: f64, horizon: f64, c0: f64) -> Result<f64> {
    if !(c0 >= 0.0 && c0.is_finite()) {
        return Err(NskqError::InvalidConfig(format!("weight rate must be >= 0, got {c0}")));
    }
    let lat = traj.lattice().clone();
    Ok(x_parts_weighted(traj, p, horizon, |t, idx| c0 * t.sqrt() * lat.magnitude(idx))?.total())
}

/// `‖(a₀, |D|a₀, u₀)‖_{PM^{d-1}}`, taken as the largest component norm.
pub fn data_norm(state: &FlowState) -> Result<f64> {
    data_norm_shifted(state, 0.0)
}

/// Data norm in `PM^{d-1+δ}`: `max(‖a₀‖_{d-1+δ}, ‖a₀‖_{d+δ}, max_j ‖u₀_j‖_{d-1+δ})`.
pub fn data_norm_shifted(state: &FlowState, delta: f64) -> Result<f64> {
    let d = state.dim() as f64;
    let mut n = pm_norm(&state.a, d - 1.0 + delta)?.max(pm_norm(&state.a, d + delta)?);
    for c in &state.u {
        n = n.max(pm_norm(c, d - 1.0 + delta)?);
    }
    Ok(n)
}

/// Norm series of a run, one entry per time node.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub p: f64,
    pub horizon: f64,
    pub times: Vec<f64>,
    /// `‖a(t)‖_{PM^{d-1+2/p}}` per node.
    pub pm_a: Vec<f64>,
    /// `max_j ‖u_j(t)‖_{PM^{d-1+2/p}}` per node.
    pub pm_u: Vec<f64>,
    pub x_parts: XParts,
    pub x_norm: f64,
    /// `None` when the analytic weight saturated or was not requested.
    pub y_norm: Option<f64>,
}

impl NormReport {
    pub fn compute(traj: &Trajectory, p: f64, horizon: f64, c0: Option<f64>) -> Result<Self> {
        let d = traj.lattice().dim() as f64;
        let r = d - 1.0 + 2.0 / p;
        let mut pm_a = Vec::with_capacity(traj.len());
        let mut pm_u = Vec::with_capacity(traj.len());
        for s in traj.states() {
            pm_a.push(pm_norm(&s.a, r)?);
            let mut m = 0.0f64;
            for c in &s.u {
                m = m.max(pm_norm(c, r)?);
            }
            pm_u.push(m);
        }
        let x_parts = x_parts_weighted(traj, p, horizon, |_, _| 0.0)?;
        let y_norm = match c0 {
            Some(c0) => match y_norm(traj, p, horizon, c0) {
                Ok(v) => Some(v),
                Err(NskqError::Saturation { .. }) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        Ok(Self {
            p,
            horizon,
            times: traj.times(),
            pm_a,
            pm_u,
            x_parts,
            x_norm: x_parts.total(),
            y_norm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::FrequencyLattice;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn lattice(n: usize) -> Arc<FrequencyLattice> {
        Arc::new(FrequencyLattice::new(2, n, 2.0 * PI).unwrap())
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn inverse_square_spectrum_has_unit_pm2() {
        let lat = lattice(32);
        let f = SpectralField::from_fn(&lat, true, |i| {
            let m = lat.magnitude(i);
            if m > 0.0 { c(m.powi(-2)) } else { c(0.0) }
        });
        assert!((pm_norm(&f, 2.0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn trivial_pm_values() {
        let lat = lattice(16);
        assert_eq!(pm_norm(&SpectralField::zeros(&lat, true), 1.5).unwrap(), 0.0);
        let f = SpectralField::single_mode(&lat, &[1, 0], c(3.0)).unwrap();
        assert_eq!(pm_norm(&f, 1.0).unwrap(), 3.0);
    }

    #[test]
    fn zero_mode_only_counts_at_order_zero() {
        let lat = lattice(8);
        let mut f = SpectralField::zeros(&lat, true);
        f.coeffs_mut()[0] = c(5.0);
        assert_eq!(pm_norm(&f, 0.0).unwrap(), 5.0);
        assert_eq!(pm_norm(&f, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn extreme_modes_are_ignored() {
        let lat = lattice(8);
        let mut f = SpectralField::zeros(&lat, false);
        f.coeffs_mut()[lat.index_of(&[-4, 0]).unwrap()] = c(9.0);
        assert_eq!(pm_norm(&f, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn nan_is_rejected() {
        let lat = lattice(8);
        let mut f = SpectralField::zeros(&lat, false);
        f.coeffs_mut()[5] = Complex64::new(0.0, f64::NAN);
        assert!(matches!(pm_norm(&f, 1.0), Err(NskqError::InvalidField(_))));
    }

    #[test]
    fn heat_kato_norm_matches_analytic_sup() {
        // û(t) = e^{-t|ξ|^2}|ξ|^{-1}; t^{1/3}|ξ|^{1+2/3}û = (t|ξ|^2)^{1/3} e^{-t|ξ|^2}.
        let lat = lattice(16);
        let base = SpectralField::from_fn(&lat, true, |i| {
            let m = lat.magnitude(i);
            if m > 0.0 { c(1.0 / m) } else { c(0.0) }
        });
        let times: Vec<f64> = (0..4000).map(|k| 1e-4 * 1.004f64.powi(k)).collect();
        let fields: Vec<SpectralField> = times
            .iter()
            .map(|&t| {
                SpectralField::from_fn(&lat, true, |i| {
                    base.coeffs()[i] * (-t * lat.magnitude(i).powi(2)).exp()
                })
            })
            .collect();
        let k = kato_norm(times.iter().copied().zip(&fields), 3.0, 1.0, 1.0).unwrap();
        let exact = (1.0f64 / 3.0).powf(1.0 / 3.0) * (-1.0f64 / 3.0).exp();
        assert!((exact - 0.496_8).abs() < 1e-4);
        assert!((k - exact).abs() < 1e-5, "{k} vs {exact}");
    }

    #[test]
    fn stationary_mode_kato_norm() {
        let lat = lattice(16);
        let f = SpectralField::single_mode(&lat, &[1, 0], c(1.0)).unwrap();
        let samples = [(0.25, &f), (0.5, &f), (1.0, &f)];
        assert!((kato_norm(samples, 3.0, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(
            kato_norm(std::iter::empty(), 3.0, 0.0, 1.0),
            Err(NskqError::EmptyTrajectory)
        ));
    }

    fn single_u_traj(lat: &Arc<FrequencyLattice>, times: &[f64]) -> Trajectory {
        let states = times
            .iter()
            .map(|&t| {
                let mut s = FlowState::zeros(lat, t);
                s.u[1] = SpectralField::single_mode(lat, &[1, 0], c(0.7)).unwrap();
                s
            })
            .collect();
        Trajectory::new(states).unwrap()
    }

    #[test]
    fn x_and_y_norms_for_single_mode() {
        let lat = lattice(16);
        let tr = single_u_traj(&lat, &[0.5, 1.0]);
        let x = x_norm(&tr, 3.0, 1.0).unwrap();
        let u1: Vec<_> = tr.states().iter().map(|s| (s.t, &s.u[1])).collect();
        assert_eq!(x, kato_norm(u1, 3.0, 1.0, 1.0).unwrap());
        assert_eq!(y_norm(&tr, 3.0, 1.0, 0.0).unwrap(), x);
        let y = y_norm(&tr, 3.0, 1.0, 1.0).unwrap();
        assert!((y - std::f64::consts::E * x).abs() < 1e-14);
        let zero = Trajectory::zeros(&lat, &[0.5, 1.0]).unwrap();
        assert_eq!(x_norm(&zero, 3.0, 1.0).unwrap(), 0.0);
        assert_eq!(y_norm(&zero, 3.0, 1.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn y_norm_flags_saturation() {
        let lat = lattice(16);
        let tr = single_u_traj(&lat, &[1.0]);
        assert!(matches!(
            y_norm(&tr, 3.0, 1.0, 1000.0),
            Err(NskqError::Saturation { .. })
        ));
    }

    fn random_field(lat: &Arc<FrequencyLattice>, vals: &[f64]) -> SpectralField {
        SpectralField::from_fn(lat, false, |i| Complex64::new(vals[i % vals.len()], vals[(i * 7 + 3) % vals.len()]))
    }

    proptest! {
        #[test]
        fn pm_is_absolutely_homogeneous(vals in prop::collection::vec(-5.0f64..5.0, 64), s in -10.0f64..10.0, r in 0.0f64..3.0) {
            let lat = lattice(8);
            let f = random_field(&lat, &vals);
            let lhs = pm_norm(&f.scaled(s), r).unwrap();
            let rhs = s.abs() * pm_norm(&f, r).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
        }

        #[test]
        fn pm_triangle_inequality(x in prop::collection::vec(-5.0f64..5.0, 64), y in prop::collection::vec(-5.0f64..5.0, 64), r in 0.0f64..3.0) {
            let lat = lattice(8);
            let f = random_field(&lat, &x);
            let g = random_field(&lat, &y);
            let mut sum = f.clone();
            sum.axpy(1.0, &g).unwrap();
            let lhs = pm_norm(&sum, r).unwrap();
            prop_assert!(lhs <= pm_norm(&f, r).unwrap() + pm_norm(&g, r).unwrap() + 1e-12);
        }

        #[test]
        fn pm_monotone_in_order_above_unit_frequency(vals in prop::collection::vec(-5.0f64..5.0, 64), r in 0.0f64..2.0, dr in 0.0f64..2.0) {
            let lat = lattice(8);
            let f = random_field(&lat, &vals);
            prop_assert!(pm_norm(&f, r).unwrap() <= pm_norm(&f, r + dr).unwrap() * (1.0 + 1e-14));
        }

        #[test]
        fn refining_the_lattice_never_decreases_pm(amp in 0.1f64..4.0, decay in 0.0f64..3.0, r in 0.0f64..3.0) {
            let spectrum = |lat: &Arc<FrequencyLattice>| SpectralField::from_fn(lat, true, |i| {
                let m = lat.magnitude(i);
                c(amp * (1.0 + m).powf(-decay) * (m * 0.37).cos())
            });
            let coarse = pm_norm(&spectrum(&lattice(8)), r).unwrap();
            let fine = pm_norm(&spectrum(&lattice(16)), r).unwrap();
            prop_assert!(fine >= coarse);
        }

        #[test]
        fn y_dominates_x(vals in prop::collection::vec(-1.0f64..1.0, 64), c0 in 0.0f64..0.5) {
            let lat = lattice(8);
            let states = [0.1, 0.4, 1.0].iter().map(|&t| {
                let mut s = FlowState::zeros(&lat, t);
                s.a = random_field(&lat, &vals);
                s.u[0] = random_field(&lat, &vals[5..]);
                s
            }).collect();
            let tr = Trajectory::new(states).unwrap();
            let x = x_norm(&tr, 3.0, 1.0).unwrap();
            let y = y_norm(&tr, 3.0, 1.0, c0).unwrap();
            prop_assert!(y >= x);
            if c0 > 1e-3 && x > 0.0 {
                prop_assert!(y > x);
            }
        }
    }
}
