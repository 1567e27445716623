use std::sync::Arc;

use num_complex::Complex64;

use super::lattice::FrequencyLattice;
use crate::error::{NskqError, Result};

/// Fourier coefficients of a scalar field on a lattice.
#[derive(Clone, Debug)]
pub struct SpectralField {
    lattice: Arc<FrequencyLattice>,
    coeffs: Vec<Complex64>,
    real: bool,
}

impl SpectralField {
    pub fn zeros(lattice: &Arc<FrequencyLattice>, real: bool) -> Self {
        Self {
            lattice: Arc::clone(lattice),
            coeffs: vec![Complex64::new(0.0, 0.0); lattice.len()],
            real,
        }
    }

    /// Builds a field from a closure over lattice indices.
    pub fn from_fn(
        lattice: &Arc<FrequencyLattice>,
        real: bool,
        mut f: impl FnMut(usize) -> Complex64,
    ) -> Self {
        let coeffs = (0..lattice.len()).map(&mut f).collect();
        Self {
            lattice: Arc::clone(lattice),
            coeffs,
            real,
        }
    }

    pub fn from_coeffs(
        lattice: &Arc<FrequencyLattice>,
        coeffs: Vec<Complex64>,
        real: bool,
    ) -> Result<Self> {
        if coeffs.len() != lattice.len() {
            return Err(NskqError::InvalidField(format!(
                "expected {} coefficients, got {}",
                lattice.len(),
                coeffs.len()
            )));
        }
        Ok(Self {
            lattice: Arc::clone(lattice),
            coeffs,
            real,
        })
    }

    /// A real field supported on the conjugate pair `±k`, with `û(k) = value`.
    pub fn single_mode(
        lattice: &Arc<FrequencyLattice>,
        k: &[i32],
        value: Complex64,
    ) -> Result<Self> {
        let idx = lattice
            .index_of(k)
            .filter(|&i| lattice.is_interior(i))
            .ok_or_else(|| NskqError::InvalidField(format!("mode {k:?} not on lattice")))?;
        let mut field = Self::zeros(lattice, true);
        let neg = lattice.negated(idx);
        if neg == idx {
            field.coeffs[idx] = Complex64::new(value.re, 0.0);
        } else {
            field.coeffs[idx] = value;
            field.coeffs[neg] = value.conj();
        }
        Ok(field)
    }

    pub fn lattice(&self) -> &Arc<FrequencyLattice> {
        &self.lattice
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn set_real(&mut self, real: bool) {
        self.real = real;
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    /// Errors on any non-finite coefficient.
    pub fn validate(&self) -> Result<()> {
        match self.coeffs.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            Some(i) => Err(NskqError::InvalidField(format!(
                "non-finite coefficient at mode {:?}",
                self.lattice.wavenumber(i)
            ))),
            None => Ok(()),
        }
    }

    /// Largest violation of `û(-ξ) = conj(û(ξ))` over paired modes.
    pub fn conjugate_asymmetry(&self) -> f64 {
        (0..self.coeffs.len())
            .filter(|&i| self.lattice.is_interior(i))
            .map(|i| (self.coeffs[self.lattice.negated(i)] - self.coeffs[i].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Replaces coefficients by their conjugate-symmetric part.
    pub fn symmetrize(&mut self) {
        let lat = Arc::clone(&self.lattice);
        for i in 0..self.coeffs.len() {
            if !lat.is_interior(i) {
                self.coeffs[i] = Complex64::new(0.0, 0.0);
                continue;
            }
            let j = lat.negated(i);
            if j < i {
                continue;
            }
            let avg = 0.5 * (self.coeffs[i] + self.coeffs[j].conj());
            self.coeffs[i] = avg;
            self.coeffs[j] = avg.conj();
        }
        self.real = true;
    }

    pub fn check_same_lattice(&self, other: &SpectralField) -> Result<()> {
        if self.lattice.same_as(&other.lattice) {
            Ok(())
        } else {
            Err(NskqError::LatticeMismatch(format!(
                "{:?} vs {:?}",
                self.lattice.spec(),
                other.lattice.spec()
            )))
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= s);
        out
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &SpectralField) -> Result<()> {
        self.check_same_lattice(other)?;
        for (c, o) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *c += o * s;
        }
        self.real &= other.real;
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Log-density perturbation `a` and velocity `u` at one time.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub a: SpectralField,
    pub u: Vec<SpectralField>,
    pub t: f64,
}

impl FlowState {
    pub fn new(a: SpectralField, u: Vec<SpectralField>, t: f64) -> Result<Self> {
        let state = Self { a, u, t };
        state.check()?;
        Ok(state)
    }

    pub fn zeros(lattice: &Arc<FrequencyLattice>, t: f64) -> Self {
        Self {
            a: SpectralField::zeros(lattice, true),
            u: (0..lattice.dim())
                .map(|_| SpectralField::zeros(lattice, true))
                .collect(),
            t,
        }
    }

    pub fn lattice(&self) -> &Arc<FrequencyLattice> {
        self.a.lattice()
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// Enforces one lattice, `d` velocity components and finite values.
    pub fn check(&self) -> Result<()> {
        let d = self.a.lattice().dim();
        if self.u.len() != d {
            return Err(NskqError::InvalidField(format!(
                "velocity has {} components on a {d}-dimensional lattice",
                self.u.len()
            )));
        }
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(NskqError::InvalidField(format!("bad time stamp {}", self.t)));
        }
        for c in &self.u {
            self.a.check_same_lattice(c)?;
        }
        self.components().try_for_each(SpectralField::validate)
    }

    pub fn components(&self) -> impl Iterator<Item = &SpectralField> {
        std::iter::once(&self.a).chain(self.u.iter())
    }

    pub fn components_mut(&mut self) -> impl Iterator<Item = &mut SpectralField> {
        std::iter::once(&mut self.a).chain(self.u.iter_mut())
    }

    pub fn is_zero(&self) -> bool {
        self.components().all(SpectralField::is_zero)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            a: self.a.scaled(s),
            u: self.u.iter().map(|c| c.scaled(s)).collect(),
            t: self.t,
        }
    }

    /// `self += s * other` componentwise.
    pub fn axpy(&mut self, s: f64, other: &FlowState) -> Result<()> {
        self.a.axpy(s, &other.a)?;
        for (c, o) in self.u.iter_mut().zip(&other.u) {
            c.axpy(s, o)?;
        }
        Ok(())
    }

    /// Largest coefficient magnitude over all components.
    pub fn max_abs(&self) -> f64 {
        self.components().map(SpectralField::max_abs).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &FlowState) -> f64 {
        self.components()
            .zip(other.components())
            .map(|(x, y)| x.max_abs_diff(y))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn lattice() -> Arc<FrequencyLattice> {
        Arc::new(FrequencyLattice::new(2, 8, 2.0 * PI).unwrap())
    }

    #[test]
    fn single_mode_is_conjugate_symmetric() {
        let lat = lattice();
        let f = SpectralField::single_mode(&lat, &[1, 2], Complex64::new(0.3, -0.7)).unwrap();
        assert_eq!(f.conjugate_asymmetry(), 0.0);
        let neg = lat.index_of(&[-1, -2]).unwrap();
        assert_eq!(f.coeffs()[neg], Complex64::new(0.3, 0.7));
    }

    #[test]
    fn validate_rejects_nan() {
        let lat = lattice();
        let mut f = SpectralField::zeros(&lat, false);
        f.coeffs_mut()[3] = Complex64::new(f64::NAN, 0.0);
        assert!(f.validate().is_err());
    }

    #[test]
    fn mismatched_lattices_are_rejected() {
        let a = SpectralField::zeros(&lattice(), true);
        let other = Arc::new(FrequencyLattice::new(2, 16, 2.0 * PI).unwrap());
        let mut b = SpectralField::zeros(&other, true);
        assert!(b.axpy(1.0, &a).is_err());
        let state = FlowState::new(a, vec![b.clone(), b], 0.0);
        assert!(matches!(state, Err(NskqError::LatticeMismatch(_))));
    }

    #[test]
    fn symmetrize_projects() {
        let lat = lattice();
        let mut f = SpectralField::from_fn(&lat, false, |i| Complex64::new(i as f64, 1.0));
        f.symmetrize();
        assert!(f.conjugate_asymmetry() < 1e-15);
        assert!(f.is_real());
    }
}
