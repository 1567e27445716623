//! The linearized symbol `A(ξ)`, its decaying semigroup `e^{-tA(ξ)}` and
//! measurement of the parabolic decay constant.
//!
//! On `(â, û)` the symbol splits into the transverse heat channel with rate
//! `μ|ξ|²` and the compressible block
//! `B = [[0, i s], [i s (α + κ s²), b s²]]` acting on `(â, v̂)`, where
//! `s = |ξ|`, `b = 2μ + ν` and `v̂ = (ξ/s)·û`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NskqError, Result};
use crate::params::ModelParams;
use crate::quadrature::integrate_gk;
use crate::spectral::{FlowState, FrequencyLattice};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Dense `(d+1)×(d+1)` symbol, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolMatrix {
    pub xi: Vec<f64>,
    pub entries: Vec<Complex64>,
}

impl SymbolMatrix {
    pub fn size(&self) -> usize {
        self.xi.len() + 1
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.entries[row * self.size() + col]
    }
}

pub fn build_symbol(xi: &[f64], params: &ModelParams) -> SymbolMatrix {
    let d = xi.len();
    let n = d + 1;
    let s2: f64 = xi.iter().map(|x| x * x).sum();
    let mut m = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..d {
        m[j + 1] = I * xi[j];
        m[(j + 1) * n] = I * (params.alpha * xi[j] + params.kappa * xi[j] * s2);
        for k in 0..d {
            let diag = if j == k { params.mu * s2 } else { 0.0 };
            m[(j + 1) * n + k + 1] = Complex64::new(diag + (params.mu + params.nu) * xi[j] * xi[k], 0.0);
        }
    }
    SymbolMatrix { xi: xi.to_vec(), entries: m }
}

/// Eigenvalues `(λ₋, λ₊)` of the compressible block at `|ξ| = s`.
pub fn block_eigenvalues(s: f64, params: &ModelParams) -> (Complex64, Complex64) {
    let m = 0.5 * params.b() * s * s;
    let det = s * s * (params.alpha + params.kappa * s * s);
    let disc = m * m - det;
    if disc >= 0.0 {
        let r = disc.sqrt();
        // λ₋ = det/λ₊ avoids cancellation at low frequency.
        let plus = m + r;
        let minus = if plus > 0.0 { det / plus } else { 0.0 };
        (Complex64::new(minus, 0.0), Complex64::new(plus, 0.0))
    } else {
        let w = (-disc).sqrt();
        (Complex64::new(m, -w), Complex64::new(m, w))
    }
}

/// Frequency-wise propagator `e^{-τA(ξ)}` in block form.
///
/// The compressible block is `[[e00, i·e01], [i·e10, e11]]` with real entries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockPropagator {
    pub e00: f64,
    pub e01: f64,
    pub e10: f64,
    pub e11: f64,
    pub transverse: f64,
}

impl BlockPropagator {
    pub const IDENTITY: Self = Self { e00: 1.0, e01: 0.0, e10: 0.0, e11: 1.0, transverse: 1.0 };

    pub fn new(tau: f64, s: f64, params: &ModelParams) -> Self {
        if tau == 0.0 || s == 0.0 {
            return Self::IDENTITY;
        }
        let s2 = s * s;
        let q = params.alpha + params.kappa * s2;
        let m = 0.5 * params.b() * s2;
        let det = s2 * q;
        let disc = m * m - det;
        // ec = e^{-τm} cosh(τΔ), es = e^{-τm} sinh(τΔ)/Δ
        let (ec, es) = if disc.abs() < 1e-16 * m * m {
            let z = tau * tau * disc;
            let decay = (-tau * m).exp();
            let c = 1.0 + z / 2.0 + z * z / 24.0 + z * z * z / 720.0;
            let sh = tau * (1.0 + z / 6.0 + z * z / 120.0 + z * z * z / 5040.0);
            (decay * c, decay * sh)
        } else if disc > 0.0 {
            let r = disc.sqrt();
            let slow = det / (m + r);
            let e_slow = (-tau * slow).exp();
            let x = (-2.0 * tau * r).exp_m1();
            (e_slow * (1.0 + 0.5 * x), -e_slow * x / (2.0 * r))
        } else {
            let w = (-disc).sqrt();
            let decay = (-tau * m).exp();
            (decay * (w * tau).cos(), decay * (w * tau).sin() / w)
        };
        Self {
            e00: ec + es * m,
            e01: -es * s,
            e10: -es * s * q,
            e11: ec - es * m,
            transverse: (-params.mu * s2 * tau).exp(),
        }
    }

    /// Applies the propagator to `(â, û)` at frequency `xi`.
    pub fn apply(&self, xi: &[f64], a: Complex64, u: &[Complex64], out_u: &mut [Complex64]) -> Complex64 {
        let s = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
        if *self == Self::IDENTITY {
            out_u.copy_from_slice(u);
            return a;
        }
        if s == 0.0 {
            // Only scalar blocks occur at ξ = 0.
            for (o, c) in out_u.iter_mut().zip(u) {
                *o = c * self.transverse;
            }
            return a * self.e00;
        }
        let v: Complex64 = xi.iter().zip(u).map(|(x, c)| c * (x / s)).sum();
        let a_new = a * self.e00 + I * v * self.e01;
        let v_new = I * a * self.e10 + v * self.e11;
        for ((o, c), x) in out_u.iter_mut().zip(u).zip(xi) {
            let perp = c - v * (x / s);
            *o = v_new * (x / s) + perp * self.transverse;
        }
        a_new
    }

    /// `self + w · other`, entrywise. Weighted sums of propagators act as
    /// the same weighted sums of their outputs.
    pub fn add_scaled(&mut self, w: f64, other: &Self) {
        self.e00 += w * other.e00;
        self.e01 += w * other.e01;
        self.e10 += w * other.e10;
        self.e11 += w * other.e11;
        self.transverse += w * other.transverse;
    }

    pub const ZERO: Self = Self { e00: 0.0, e01: 0.0, e10: 0.0, e11: 0.0, transverse: 0.0 };

    /// Operator norm in the weighted variables `(â, |ξ|â, û)`, i.e. the norm
    /// `(1 + s²)|â|² + |û|²`.
    pub fn weighted_gain(&self, s: f64) -> f64 {
        let w = (1.0 + s * s).sqrt();
        let m01 = self.e01 * w;
        let m10 = self.e10 / w;
        let frob = self.e00 * self.e00 + m01 * m01 + m10 * m10 + self.e11 * self.e11;
        // det of [[e00, i m01], [i m10, e11]] = e00 e11 + m01 m10 (real).
        let det = self.e00 * self.e11 + m01 * m10;
        let disc = (frob * frob - 4.0 * det * det).max(0.0);
        let sigma2 = 0.5 * (frob + disc.sqrt());
        sigma2.sqrt().max(self.transverse)
    }
}

/// `e^{-tA(ξ)} v` for a `(d+1)`-vector `v = (â, û)`.
pub fn semigroup_apply(t: f64, xi: &[f64], v: &[Complex64], params: &ModelParams) -> Result<Vec<Complex64>> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(NskqError::InvalidConfig(format!("time must be nonnegative, got {t}")));
    }
    if v.len() != xi.len() + 1 {
        return Err(NskqError::InvalidField(format!(
            "vector of length {} for {}-dimensional frequency",
            v.len(),
            xi.len()
        )));
    }
    let s = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    let prop = BlockPropagator::new(t, s, params);
    let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
    out[0] = prop.apply(xi, v[0], &v[1..], &mut out[1..]);
    Ok(out)
}

/// Applies `e^{-tA(D)}` to a whole state, preserving its time stamp.
pub fn evolve_state(t: f64, state: &FlowState, params: &ModelParams) -> FlowState {
    let lat = state.lattice();
    let mut out = state.clone();
    let d = lat.dim();
    let mut xi = vec![0.0; d];
    let mut u = vec![Complex64::new(0.0, 0.0); d];
    let mut u_new = vec![Complex64::new(0.0, 0.0); d];
    for idx in 0..lat.len() {
        let s = lat.magnitude(idx);
        if s == 0.0 {
            continue;
        }
        for j in 0..d {
            xi[j] = lat.xi(idx, j);
            u[j] = state.u[j].coeffs()[idx];
        }
        let prop = BlockPropagator::new(t, s, params);
        out.a.coeffs_mut()[idx] = prop.apply(&xi, state.a.coeffs()[idx], &u, &mut u_new);
        for j in 0..d {
            out.u[j].coeffs_mut()[idx] = u_new[j];
        }
    }
    out
}

/// Dense matrix exponential by Taylor series with scaling and squaring.
pub fn expm_dense(m: &[Complex64], n: usize) -> Vec<Complex64> {
    let norm = (0..n)
        .map(|i| (0..n).map(|j| m[i * n + j].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.25 { (norm / 0.25).log2().ceil() as u32 } else { 0 };
    let scale = 0.5f64.powi(squarings as i32);
    let a: Vec<Complex64> = m.iter().map(|z| z * scale).collect();
    let mut result = identity(n);
    let mut term = identity(n);
    for k in 1..=30 {
        term = matmul(&term, &a, n);
        term.iter_mut().for_each(|z| *z /= k as f64);
        let mut biggest = 0.0f64;
        for (r, t) in result.iter_mut().zip(&term) {
            *r += t;
            biggest = biggest.max(t.norm());
        }
        if biggest < 1e-18 {
            break;
        }
    }
    for _ in 0..squarings {
        result = matmul(&result, &result, n);
    }
    result
}

fn identity(n: usize) -> Vec<Complex64> {
    let mut m = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        m[i * n + i] = Complex64::new(1.0, 0.0);
    }
    m
}

fn matmul(a: &[Complex64], b: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

/// Reference `e^{-tA(ξ)} v` through the dense exponential.
pub fn semigroup_apply_dense(t: f64, xi: &[f64], v: &[Complex64], params: &ModelParams) -> Vec<Complex64> {
    let sym = build_symbol(xi, params);
    let n = sym.size();
    let neg: Vec<Complex64> = sym.entries.iter().map(|z| -z * t).collect();
    let e = expm_dense(&neg, n);
    (0..n).map(|i| (0..n).map(|j| e[i * n + j] * v[j]).sum()).collect()
}

/// Outcome of the decay-constant measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// `min(μ, inf Re λ₋/|ξ|²)`.
    pub c0_spectral: f64,
    /// Largest candidate rate with a bounded amplification.
    pub c0_measured: f64,
    /// Largest weighted amplification times `e^{c0 t|ξ|²}` at the measured rate.
    pub c_measured: f64,
    pub worst_t: f64,
    pub worst_xi: f64,
    /// Samples examined (shell, time) with `t|ξ|² <= y_max`.
    pub samples: usize,
    pub y_max: f64,
}

/// Resolution of the log-spaced `c0` candidate set.
pub const C0_RESOLUTION: f64 = 1e-3;

struct DecaySample {
    t: f64,
    s: f64,
    y: f64,
    log_gain: f64,
}

fn sup_weighted(samples: &[DecaySample], c0: f64, y_cap: f64) -> (f64, usize) {
    samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.y <= y_cap)
        .map(|(i, s)| (s.log_gain + c0 * s.y, i))
        .fold((f64::NEG_INFINITY, 0), |acc, x| if x.0 > acc.0 { x } else { acc })
}

/// Measures `(C, c0)` such that the weighted amplification of `e^{-tA(ξ)}`
/// stays below `C e^{-c0 t|ξ|²}` for every lattice shell and grid time with
/// `t|ξ|² <= y_max`.
///
/// `c0` is the largest candidate (log-spaced, relative step `C0_RESOLUTION`)
/// whose weighted amplification on `[0, y_max]` does not exceed its value on
/// `[0, y_max/2]`, i.e. shows no growth over the second half of the range.
pub fn decay_constant(
    params: &ModelParams,
    lattice: &FrequencyLattice,
    t_grid: &[f64],
    y_max: f64,
) -> Result<DecayReport> {
    if t_grid.is_empty() || lattice.shell_radii().len() < 2 {
        return Err(NskqError::InvalidConfig("decay measurement needs nonempty grids".into()));
    }
    let radii = &lattice.shell_radii()[1..];
    for &s in radii {
        let (lo, _) = block_eigenvalues(s, params);
        if lo.re <= 0.0 || params.mu <= 0.0 {
            return Err(NskqError::InvalidParams(format!("non-decaying mode at |xi| = {s}")));
        }
    }
    let samples: Vec<DecaySample> = radii
        .par_iter()
        .flat_map_iter(|&s| {
            t_grid.iter().filter_map(move |&t| {
                let y = t * s * s;
                (t >= 0.0 && y <= y_max).then(|| {
                    let g = BlockPropagator::new(t, s, params).weighted_gain(s);
                    DecaySample { t, s, y, log_gain: g.ln() }
                })
            })
        })
        .collect();
    if samples.is_empty() {
        return Err(NskqError::InvalidConfig("no (t, xi) sample inside the y range".into()));
    }
    let bounded = |c0: f64| {
        let full = sup_weighted(&samples, c0, y_max).0;
        let half = sup_weighted(&samples, c0, 0.5 * y_max).0;
        full <= half + 1e-6
    };
    let ratio = 1.0 + C0_RESOLUTION;
    let c_min = 1e-4f64;
    let count = ((1e2f64 / c_min).ln() / ratio.ln()).ceil() as i64;
    let candidate = |k: i64| c_min * ratio.powi(k as i32);
    // Largest k with bounded(candidate(k)); bounded is monotone in c0.
    let (mut lo, mut hi) = (-1i64, count + 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if bounded(candidate(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if lo < 0 {
        return Err(NskqError::InvalidParams("no positive decay rate found".into()));
    }
    let c0 = candidate(lo);
    let (log_c, worst) = sup_weighted(&samples, c0, y_max);
    Ok(DecayReport {
        c0_spectral: params.spectral_c0(),
        c0_measured: c0,
        c_measured: log_c.exp(),
        worst_t: samples[worst].t,
        worst_xi: samples[worst].s,
        samples: samples.len(),
        y_max,
    })
}

/// Weighted size `sqrt((1+|ξ|²)|â|² + |û|²)` of a `(d+1)`-vector.
pub fn weighted_magnitude(s: f64, v: &[Complex64]) -> f64 {
    let a = v[0].norm_sqr() * (1.0 + s * s);
    (a + v[1..].iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
}

/// Ratio between the weighted size of the Duhamel term
/// `∫₀ᵗ e^{-(t-τ)A(ξ)} F(τ) dτ` and the scalar majorant
/// `∫₀ᵗ e^{-c0|ξ|²(t-τ)} |F(τ)|_w dτ`. Lemma-type estimates require the
/// ratio to stay below the measured `C`. Returns 0 when the majorant vanishes.
pub fn duhamel_bound_check(
    t: f64,
    xi: &[f64],
    forcing: impl Fn(f64) -> Vec<Complex64>,
    params: &ModelParams,
    c0: f64,
    rel_tol: f64,
) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    let s = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n = xi.len() + 1;
    let abs_tol = 1e-300;
    let mut num = vec![Complex64::new(0.0, 0.0); n];
    for comp in 0..n {
        let part = |tau: f64, im: bool| -> Result<f64> {
            Ok(integrate_gk(
                |tau| {
                    let w = semigroup_apply(t - tau, xi, &forcing(tau), params).expect("valid input");
                    if im { w[comp].im } else { w[comp].re }
                },
                0.0,
                tau,
                abs_tol,
                rel_tol,
                4000,
            )?
            .value)
        };
        num[comp] = Complex64::new(part(t, false)?, part(t, true)?);
    }
    let den = integrate_gk(
        |tau| (-c0 * s * s * (t - tau)).exp() * weighted_magnitude(s, &forcing(tau)),
        0.0,
        t,
        abs_tol,
        rel_tol,
        4000,
    )?
    .value;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(weighted_magnitude(s, &num) / den)
}
