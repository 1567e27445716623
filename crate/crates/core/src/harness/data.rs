use std::path::PathBuf;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NskqError, Result};
use crate::spectral::{snapshot, FlowState, FrequencyLattice, SpectralField};

/// Named initial-data generators.
///
/// Radial generators put `a · profile_a(|ξ|)` on `a` and `u · profile_u(|ξ|)`
/// on every velocity component, over the support: interior nonzero modes,
/// restricted to the dealiased band when `dealiased` is set and to
/// `|ξ| <= cutoff` when a cutoff is given.
///
/// Random phases come from `ChaCha8Rng::seed_from_u64(seed)`. Components are
/// visited in the order `a, u_1, ..., u_d`, modes in lattice index order; for
/// each conjugate pair the lower index draws `φ = rng.gen_range(0.0..2π)`,
/// gets `e^{iφ}` and its partner `e^{-iφ}`. Self-conjugate modes stay real.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSpec {
    Zero,
    /// Conjugate pair `±k` with `â(k) = a`, `û_j(k) = u[j]` (missing entries are 0).
    SingleMode {
        k: Vec<i32>,
        a: f64,
        #[serde(default)]
        u: Vec<f64>,
    },
    /// `â = a|ξ|^{-a_exponent}`, `û_j = u|ξ|^{-exponent}`; `a_exponent`
    /// defaults to `exponent`.
    PowerLaw {
        exponent: f64,
        a: f64,
        u: f64,
        #[serde(default)]
        a_exponent: Option<f64>,
        #[serde(default)]
        cutoff: Option<f64>,
        #[serde(default = "yes")]
        dealiased: bool,
        #[serde(default)]
        random_phase: bool,
    },
    /// `â = a e^{-σ₀|ξ|}`, `û_j = u e^{-σ₀|ξ|}`.
    ExpTail {
        sigma0: f64,
        a: f64,
        u: f64,
        #[serde(default)]
        cutoff: Option<f64>,
        #[serde(default = "yes")]
        dealiased: bool,
        #[serde(default)]
        random_phase: bool,
    },
    /// Binary snapshot written by `spectral::snapshot::save`.
    Snapshot { path: PathBuf },
}

fn yes() -> bool {
    true
}

impl Default for DataSpec {
    fn default() -> Self {
        Self::Zero
    }
}

impl DataSpec {
    pub const GENERATORS: [&'static str; 5] = ["zero", "single_mode", "power_law", "exp_tail", "snapshot"];

    /// Parses a generator object, reporting unknown names as such.
    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        if let Some(name) = value.get("generator").and_then(|g| g.as_str()) {
            if !Self::GENERATORS.contains(&name) {
                return Err(NskqError::UnknownGenerator(name.to_string()));
            }
        }
        Ok(serde_json::from_value(value)?)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NskqError::InvalidConfig(m.to_string()));
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match self {
            Self::Zero | Self::Snapshot { .. } => Ok(()),
            Self::SingleMode { a, u, .. } => {
                if finite(&[*a]) && finite(u) { Ok(()) } else { bad("single-mode amplitudes must be finite") }
            }
            Self::PowerLaw { exponent, a, u, a_exponent, cutoff, .. } => {
                if !finite(&[*exponent, *a, *u, a_exponent.unwrap_or(0.0)]) {
                    return bad("power-law parameters must be finite");
                }
                check_cutoff(*cutoff)
            }
            Self::ExpTail { sigma0, a, u, cutoff, .. } => {
                if !(sigma0.is_finite() && *sigma0 >= 0.0 && finite(&[*a, *u])) {
                    return bad("exp-tail needs sigma0 >= 0 and finite amplitudes");
                }
                check_cutoff(*cutoff)
            }
        }
    }

    /// Support mask of the radial generators.
    fn support(lat: &FrequencyLattice, cutoff: Option<f64>, dealiased: bool) -> impl Fn(usize) -> bool + '_ {
        move |idx| {
            idx != lat.zero_index()
                && lat.is_interior(idx)
                && (!dealiased || lat.is_dealiased(idx))
                && cutoff.is_none_or(|c| lat.magnitude(idx) <= c)
        }
    }

    /// Closed-form `‖a₀‖_{PM^r}`, for the generators where it has one.
    pub fn expected_pm_a(&self, lat: &FrequencyLattice, r: f64) -> Option<f64> {
        match self {
            Self::Zero => Some(0.0),
            Self::SingleMode { k, a, .. } => {
                let idx = lat.index_of(k)?;
                Some(a.abs() * lat.magnitude(idx).powf(r))
            }
            Self::PowerLaw { exponent, a, a_exponent, cutoff, dealiased, .. } => {
                let g = a_exponent.unwrap_or(*exponent);
                let keep = Self::support(lat, *cutoff, *dealiased);
                let mags = (0..lat.len()).filter(|&i| keep(i)).map(|i| lat.magnitude(i));
                let (lo, hi) = mags.fold((f64::INFINITY, 0.0f64), |(lo, hi), m| (lo.min(m), hi.max(m)));
                if hi == 0.0 {
                    return Some(0.0);
                }
                let e = r - g;
                let m = if e == 0.0 { 1.0 } else if e > 0.0 { hi.powf(e) } else { lo.powf(e) };
                Some(a.abs() * m)
            }
            Self::ExpTail { .. } | Self::Snapshot { .. } => None,
        }
    }
}

fn check_cutoff(cutoff: Option<f64>) -> Result<()> {
    match cutoff {
        Some(c) if !(c > 0.0) => Err(NskqError::InvalidConfig(format!("cutoff must be positive, got {c}"))),
        _ => Ok(()),
    }
}

fn radial_field(
    lat: &Arc<FrequencyLattice>,
    keep: &dyn Fn(usize) -> bool,
    amp: f64,
    profile: &dyn Fn(f64) -> f64,
) -> SpectralField {
    SpectralField::from_fn(lat, true, |idx| {
        if keep(idx) {
            Complex64::new(amp * profile(lat.magnitude(idx)), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

fn apply_phases(field: &mut SpectralField, rng: &mut ChaCha8Rng) {
    let lat = Arc::clone(field.lattice());
    let c = field.coeffs_mut();
    for idx in 0..c.len() {
        let j = lat.negated(idx);
        if j > idx && lat.is_interior(idx) {
            let rot = Complex64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU));
            c[idx] *= rot;
            c[j] *= rot.conj();
        }
    }
}

/// Builds the initial state of a generator on `lat`; `seed` drives the
/// random phases.
pub fn generate_initial_data(spec: &DataSpec, lat: &Arc<FrequencyLattice>, seed: u64) -> Result<FlowState> {
    spec.validate()?;
    let d = lat.dim();
    let radial = |a: f64, u: f64, pa: &dyn Fn(f64) -> f64, pu: &dyn Fn(f64) -> f64, keep: &dyn Fn(usize) -> bool, phase: bool| {
        let mut comps = vec![radial_field(lat, keep, a, pa)];
        comps.extend((0..d).map(|_| radial_field(lat, keep, u, pu)));
        if phase {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            comps.iter_mut().for_each(|c| apply_phases(c, &mut rng));
        }
        let a = comps.remove(0);
        FlowState::new(a, comps, 0.0)
    };
    match spec {
        DataSpec::Zero => Ok(FlowState::zeros(lat, 0.0)),
        DataSpec::SingleMode { k, a, u } => {
            if k.len() != d {
                return Err(NskqError::InvalidConfig(format!("mode {k:?} is not {d}-dimensional")));
            }
            if u.len() > d {
                return Err(NskqError::InvalidConfig(format!("{} velocity amplitudes for d = {d}", u.len())));
            }
            let field = |v: f64| SpectralField::single_mode(lat, k, Complex64::new(v, 0.0));
            let us = (0..d).map(|j| field(u.get(j).copied().unwrap_or(0.0))).collect::<Result<Vec<_>>>()?;
            FlowState::new(field(*a)?, us, 0.0)
        }
        DataSpec::PowerLaw { exponent, a, u, a_exponent, cutoff, dealiased, random_phase } => {
            let ga = a_exponent.unwrap_or(*exponent);
            let keep = DataSpec::support(lat, *cutoff, *dealiased);
            radial(*a, *u, &|s| s.powf(-ga), &|s| s.powf(-exponent), &keep, *random_phase)
        }
        DataSpec::ExpTail { sigma0, a, u, cutoff, dealiased, random_phase } => {
            let keep = DataSpec::support(lat, *cutoff, *dealiased);
            let prof = |s: f64| (-sigma0 * s).exp();
            radial(*a, *u, &prof, &prof, &keep, *random_phase)
        }
        DataSpec::Snapshot { path } => {
            let state = snapshot::load(path, Some(lat))?;
            Ok(FlowState { t: 0.0, ..state })
        }
    }
}
