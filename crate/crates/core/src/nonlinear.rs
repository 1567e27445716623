//! Quadratic terms `f = -u·∇a`, `g1 = -u·∇u`, `g2 = μ∇a·∇u + (μ+ν)∇a·Du`
//! and `g3 = (κ/2)∇(∇a·∇a)`.
//!
//! Every term is a sum of products of spectral derivatives. The oracle path
//! convolves coefficients directly; the fast path multiplies on the physical
//! grid. Both keep only modes with `max |k_i| <= (N-1)/3` in inputs and
//! output, so they compute the same truncated convolution.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NskqError, Result};
use crate::fft::FftNd;
use crate::params::ModelParams;
use crate::spectral::{FlowState, FrequencyLattice, SpectralField};

/// Contraction used for `∇a·Du` in `g2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DuContraction {
    /// `(∇a·Du)_j = Σ_k ∂_k a ∂_j u_k`
    #[default]
    Transpose,
    /// `(∇a·Du)_j = Σ_k ∂_k a ∂_k u_j`
    Direct,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Oracle,
    #[default]
    Fast,
}

/// Largest `N` accepted by the direct-convolution path.
pub const ORACLE_MAX_MODES: usize = 32;

#[derive(Clone, Debug)]
pub struct NonlinearOutput {
    pub f_hat: SpectralField,
    pub g_hat: Vec<SpectralField>,
    pub method: Method,
}

/// Evaluates sums of dealiased products on one lattice.
pub struct ProductEngine {
    lattice: Arc<FrequencyLattice>,
    method: Method,
    fft: Option<FftNd>,
    kept: Vec<usize>,
}

impl std::fmt::Debug for ProductEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProductEngine")
            .field("lattice", &self.lattice.spec())
            .field("method", &self.method)
            .finish()
    }
}

impl ProductEngine {
    pub fn new(lattice: &Arc<FrequencyLattice>, method: Method) -> Result<Self> {
        if method == Method::Oracle && lattice.modes() > ORACLE_MAX_MODES {
            return Err(NskqError::InvalidConfig(format!(
                "direct convolution is limited to N <= {ORACLE_MAX_MODES}"
            )));
        }
        let fft = (method == Method::Fast).then(|| FftNd::new(lattice.dim(), lattice.modes()));
        let kept = (0..lattice.len()).filter(|&i| lattice.is_dealiased(i)).collect();
        Ok(Self { lattice: Arc::clone(lattice), method, fft, kept })
    }

    pub fn lattice(&self) -> &Arc<FrequencyLattice> {
        &self.lattice
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// `Σ c · (fields[i] * fields[j])` over `(i, j, c)`, dealiased.
    pub fn sum_products(&self, fields: &[SpectralField], pairs: &[(usize, usize, f64)]) -> SpectralField {
        self.sum_products_many(fields, &[pairs]).pop().expect("one group")
    }

    /// One dealiased sum of products per group, sharing the transforms of
    /// the fields between groups.
    pub fn sum_products_many(&self, fields: &[SpectralField], groups: &[&[(usize, usize, f64)]]) -> Vec<SpectralField> {
        let real = fields.iter().all(SpectralField::is_real);
        let lat = &self.lattice;
        let all = match self.method {
            Method::Fast => self.fast(fields, groups),
            Method::Oracle => groups.iter().map(|g| self.oracle(fields, g)).collect(),
        };
        all.into_iter()
            .map(|coeffs| {
                let mut out = SpectralField::from_coeffs(lat, coeffs, real).expect("length matches lattice");
                for (i, c) in out.coeffs_mut().iter_mut().enumerate() {
                    if !lat.is_dealiased(i) {
                        *c = Complex64::new(0.0, 0.0);
                    }
                }
                out
            })
            .collect()
    }

    fn fast(&self, fields: &[SpectralField], groups: &[&[(usize, usize, f64)]]) -> Vec<Vec<Complex64>> {
        let fft = self.fft.as_ref().expect("fast engine owns a plan");
        let lat = &self.lattice;
        let mut used = vec![false; fields.len()];
        for &(i, j, _) in groups.iter().flat_map(|g| g.iter()) {
            used[i] = true;
            used[j] = true;
        }
        let physical: Vec<Option<Vec<Complex64>>> = fields
            .par_iter()
            .zip(used.par_iter())
            .map(|(f, &u)| {
                u.then(|| {
                    let mut buf = vec![Complex64::new(0.0, 0.0); lat.len()];
                    for &k in &self.kept {
                        buf[k] = f.coeffs()[k];
                    }
                    fft.inverse(&mut buf);
                    buf
                })
            })
            .collect();
        let norm = 1.0 / lat.len() as f64;
        groups
            .par_iter()
            .map(|pairs| {
                let mut acc = vec![Complex64::new(0.0, 0.0); lat.len()];
                for &(i, j, c) in pairs.iter() {
                    let (x, y) = (physical[i].as_ref().unwrap(), physical[j].as_ref().unwrap());
                    for ((o, p), q) in acc.iter_mut().zip(x).zip(y) {
                        *o += p * q * c;
                    }
                }
                fft.forward(&mut acc);
                acc.iter_mut().for_each(|z| *z *= norm);
                acc
            })
            .collect()
    }

    fn oracle(&self, fields: &[SpectralField], pairs: &[(usize, usize, f64)]) -> Vec<Complex64> {
        let lat = &self.lattice;
        let cutoff = lat.dealias_cutoff() as i32;
        let d = lat.dim();
        let mut out = vec![Complex64::new(0.0, 0.0); lat.len()];
        let values: Vec<(usize, Complex64)> = self
            .kept
            .par_iter()
            .map(|&xi| {
                let kx = lat.wavenumber(xi);
                let mut diff = vec![0i32; d];
                let mut acc = Complex64::new(0.0, 0.0);
                for &eta in &self.kept {
                    let ke = lat.wavenumber(eta);
                    let mut inside = true;
                    for a in 0..d {
                        diff[a] = kx[a] - ke[a];
                        inside &= diff[a].abs() <= cutoff;
                    }
                    if !inside {
                        continue;
                    }
                    let rest = lat.index_of(&diff).expect("inside the dealiased band");
                    for &(i, j, c) in pairs {
                        acc += fields[i].coeffs()[rest] * fields[j].coeffs()[eta] * c;
                    }
                }
                (xi, acc)
            })
            .collect();
        for (i, v) in values {
            out[i] = v;
        }
        out
    }
}

/// `∂_axis f`, i.e. coefficients times `iξ_axis`.
pub fn derivative(f: &SpectralField, axis: usize) -> SpectralField {
    let lat = f.lattice().clone();
    SpectralField::from_fn(&lat, f.is_real(), |i| f.coeffs()[i] * Complex64::new(0.0, lat.xi(i, axis)))
}

fn check_pair(x: &SpectralField, ys: &[&SpectralField], engine: &ProductEngine) -> Result<()> {
    let lat = engine.lattice();
    if !x.lattice().same_as(lat) {
        return Err(NskqError::LatticeMismatch("field not on the engine lattice".into()));
    }
    for y in ys {
        x.check_same_lattice(y)?;
    }
    Ok(())
}

/// `f(u, a) = -u·∇a`.
pub fn bilinear_f(engine: &ProductEngine, u: &[SpectralField], a: &SpectralField) -> Result<SpectralField> {
    check_pair(a, &u.iter().collect::<Vec<_>>(), engine)?;
    let d = u.len();
    let mut fields: Vec<SpectralField> = u.to_vec();
    fields.extend((0..d).map(|k| derivative(a, k)));
    let pairs: Vec<_> = (0..d).map(|k| (k, d + k, -1.0)).collect();
    Ok(engine.sum_products(&fields, &pairs))
}

/// `g1(u, v)_j = -Σ_k u_k ∂_k v_j`.
pub fn bilinear_g1(engine: &ProductEngine, u: &[SpectralField], v: &[SpectralField]) -> Result<Vec<SpectralField>> {
    let d = u.len();
    check_pair(&u[0], &u.iter().chain(v).collect::<Vec<_>>(), engine)?;
    let mut fields: Vec<SpectralField> = u.to_vec();
    for vj in v {
        fields.extend((0..d).map(|k| derivative(vj, k)));
    }
    Ok((0..d)
        .map(|j| {
            let pairs: Vec<_> = (0..d).map(|k| (k, d + j * d + k, -1.0)).collect();
            engine.sum_products(&fields, &pairs)
        })
        .collect())
}

/// `g2(a, u)_j = μ Σ_k ∂_k a ∂_k u_j + (μ+ν) (∇a·Du)_j`.
pub fn bilinear_g2(
    engine: &ProductEngine,
    a: &SpectralField,
    u: &[SpectralField],
    params: &ModelParams,
    contraction: DuContraction,
) -> Result<Vec<SpectralField>> {
    check_pair(a, &u.iter().collect::<Vec<_>>(), engine)?;
    let d = u.len();
    let mut fields: Vec<SpectralField> = (0..d).map(|k| derivative(a, k)).collect();
    // fields[d + j*d + k] = ∂_k u_j
    for uj in u {
        fields.extend((0..d).map(|k| derivative(uj, k)));
    }
    let du = |j: usize, k: usize| d + j * d + k;
    Ok((0..d)
        .map(|j| {
            let mut pairs = Vec::with_capacity(2 * d);
            for k in 0..d {
                pairs.push((k, du(j, k), params.mu));
                let second = match contraction {
                    DuContraction::Transpose => du(k, j),
                    DuContraction::Direct => du(j, k),
                };
                pairs.push((k, second, params.mu + params.nu));
            }
            engine.sum_products(&fields, &pairs)
        })
        .collect())
}

/// `g3(a, b)_j = (κ/2) ∂_j (∇a·∇b)`.
pub fn bilinear_g3(engine: &ProductEngine, a: &SpectralField, b: &SpectralField, kappa: f64) -> Result<Vec<SpectralField>> {
    check_pair(a, &[b], engine)?;
    let d = a.lattice().dim();
    let mut fields: Vec<SpectralField> = (0..d).map(|k| derivative(a, k)).collect();
    fields.extend((0..d).map(|k| derivative(b, k)));
    let pairs: Vec<_> = (0..d).map(|k| (k, d + k, 0.5 * kappa)).collect();
    let inner = engine.sum_products(&fields, &pairs);
    Ok((0..d).map(|j| derivative(&inner, j)).collect())
}

pub fn compute_f(engine: &ProductEngine, state: &FlowState) -> Result<SpectralField> {
    bilinear_f(engine, &state.u, &state.a)
}

pub fn compute_g1(engine: &ProductEngine, state: &FlowState) -> Result<Vec<SpectralField>> {
    bilinear_g1(engine, &state.u, &state.u)
}

pub fn compute_g2(
    engine: &ProductEngine,
    state: &FlowState,
    params: &ModelParams,
    contraction: DuContraction,
) -> Result<Vec<SpectralField>> {
    bilinear_g2(engine, &state.a, &state.u, params, contraction)
}

pub fn compute_g3(engine: &ProductEngine, state: &FlowState, params: &ModelParams) -> Result<Vec<SpectralField>> {
    bilinear_g3(engine, &state.a, &state.a, params.kappa)
}

/// `(f, g1 + g2 + g3)` at one state, with every derivative transformed once.
pub fn compute_all(
    engine: &ProductEngine,
    state: &FlowState,
    params: &ModelParams,
    contraction: DuContraction,
) -> Result<NonlinearOutput> {
    state.check()?;
    check_pair(&state.a, &state.u.iter().collect::<Vec<_>>(), engine)?;
    let d = state.dim();
    // [∂_k a | u_k | ∂_k u_j at 2d + j*d + k]
    let mut fields: Vec<SpectralField> = (0..d).map(|k| derivative(&state.a, k)).collect();
    fields.extend(state.u.iter().cloned());
    for uj in &state.u {
        fields.extend((0..d).map(|k| derivative(uj, k)));
    }
    let (da, u, du) = (|k: usize| k, |k: usize| d + k, |j: usize, k: usize| 2 * d + j * d + k);
    let mut groups: Vec<Vec<(usize, usize, f64)>> = Vec::with_capacity(d + 2);
    groups.push((0..d).map(|k| (u(k), da(k), -1.0)).collect());
    for j in 0..d {
        let mut g = Vec::with_capacity(3 * d);
        for k in 0..d {
            g.push((u(k), du(j, k), -1.0));
            g.push((da(k), du(j, k), params.mu));
            let second = match contraction {
                DuContraction::Transpose => du(k, j),
                DuContraction::Direct => du(j, k),
            };
            g.push((da(k), second, params.mu + params.nu));
        }
        groups.push(g);
    }
    groups.push((0..d).map(|k| (da(k), da(k), 0.5 * params.kappa)).collect());
    let refs: Vec<&[(usize, usize, f64)]> = groups.iter().map(Vec::as_slice).collect();
    let mut out = engine.sum_products_many(&fields, &refs);
    let inner = out.pop().expect("g3 group");
    let f_hat = out.remove(0);
    let g_hat = out
        .into_iter()
        .enumerate()
        .map(|(j, mut g)| {
            g.axpy(1.0, &derivative(&inner, j))?;
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NonlinearOutput { f_hat, g_hat, method: engine.method() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::LatticeSpec;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lattice() -> Arc<FrequencyLattice> {
        LatticeSpec::new(2, 16, 2.0 * PI).build().unwrap()
    }

    fn at(f: &SpectralField, k: &[i32]) -> Complex64 {
        f.coeffs()[f.lattice().index_of(k).unwrap()]
    }

    fn state_with(lat: &Arc<FrequencyLattice>, a: Option<(&[i32], f64)>, u: Option<(&[i32], [f64; 2])>) -> FlowState {
        let mut s = FlowState::zeros(lat, 0.0);
        if let Some((k, v)) = a {
            s.a = SpectralField::single_mode(lat, k, c(v, 0.0)).unwrap();
        }
        if let Some((k, v)) = u {
            for j in 0..2 {
                s.u[j] = SpectralField::single_mode(lat, k, c(v[j], 0.0)).unwrap();
            }
        }
        s
    }

    #[test]
    fn f_single_mode_examples() {
        let lat = lattice();
        for method in [Method::Oracle, Method::Fast] {
            let e = ProductEngine::new(&lat, method).unwrap();
            let s = state_with(&lat, Some((&[0, 1], 1.0)), Some((&[1, 0], [1.0, 0.0])));
            assert!(at(&compute_f(&e, &s).unwrap(), &[1, 1]).norm() < 1e-15);
            let s = state_with(&lat, Some((&[1, 0], 1.0)), Some((&[1, 0], [1.0, 0.0])));
            assert!((at(&compute_f(&e, &s).unwrap(), &[2, 0]) - c(0.0, -1.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn g1_single_mode_examples() {
        let lat = lattice();
        let e = ProductEngine::new(&lat, Method::Fast).unwrap();
        let s = state_with(&lat, None, Some((&[1, 0], [1.0, 0.0])));
        let g = compute_g1(&e, &s).unwrap();
        assert!((at(&g[0], &[2, 0]) - c(0.0, -1.0)).norm() < 1e-14);
        assert!(at(&g[1], &[2, 0]).norm() < 1e-14);
        let s = state_with(&lat, None, Some((&[1, 0], [0.0, 1.0])));
        let g = compute_g1(&e, &s).unwrap();
        assert!(at(&g[0], &[2, 0]).norm() < 1e-15 && at(&g[1], &[2, 0]).norm() < 1e-15);
    }

    #[test]
    fn g2_two_mode_example() {
        let lat = lattice();
        let p = ModelParams::new(1.0, 0.5, 1.0, 1.0).unwrap();
        let e = ProductEngine::new(&lat, Method::Oracle).unwrap();
        let mut s = state_with(&lat, Some((&[1, 0], 1.0)), None);
        s.u[0] = SpectralField::single_mode(&lat, &[0, 1], c(1.0, 0.0)).unwrap();
        let g = compute_g2(&e, &s, &p, DuContraction::Transpose).unwrap();
        assert!(at(&g[0], &[1, 1]).norm() < 1e-15);
        assert!((at(&g[1], &[1, 1]) - c(-1.5, 0.0)).norm() < 1e-14);
        // The direct reading duplicates the first term, which vanishes here.
        let g = compute_g2(&e, &s, &p, DuContraction::Direct).unwrap();
        assert!(at(&g[1], &[1, 1]).norm() < 1e-15);
        let zero_a = state_with(&lat, None, Some((&[2, 1], [0.3, 0.4])));
        let g = compute_g2(&e, &zero_a, &p, DuContraction::Transpose).unwrap();
        assert!(g.iter().all(SpectralField::is_zero));
    }

    #[test]
    fn g3_single_mode_example() {
        let lat = lattice();
        let e = ProductEngine::new(&lat, Method::Fast).unwrap();
        let s = state_with(&lat, Some((&[1, 0], 1.0)), None);
        let g = compute_g3(&e, &s, &ModelParams::default()).unwrap();
        assert!((at(&g[0], &[2, 0]) - c(0.0, -1.0)).norm() < 1e-14);
        assert!(at(&g[1], &[2, 0]).norm() < 1e-15);
        let zero = FlowState::zeros(&lat, 0.0);
        assert!(compute_g3(&e, &zero, &ModelParams::default()).unwrap().iter().all(SpectralField::is_zero));
    }

    #[test]
    fn fast_path_zeroes_dealiased_band() {
        let lat = lattice();
        let e = ProductEngine::new(&lat, Method::Fast).unwrap();
        let s = state_with(&lat, Some((&[5, 5], 1.0)), Some((&[4, -5], [1.0, 0.5])));
        let out = compute_all(&e, &s, &ModelParams::default(), DuContraction::Transpose).unwrap();
        for f in std::iter::once(&out.f_hat).chain(&out.g_hat) {
            for i in 0..lat.len() {
                if !lat.is_dealiased(i) {
                    assert_eq!(f.coeffs()[i], c(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn oracle_rejects_large_lattices() {
        let lat = LatticeSpec::new(2, 64, 2.0 * PI).build().unwrap();
        assert!(ProductEngine::new(&lat, Method::Oracle).is_err());
    }
}
