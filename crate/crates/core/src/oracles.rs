//! Quadrature checks of the convolution and time-integral estimates behind
//! the bilinear bounds.
//!
//! The convolution `I(ξ) = ∫ |ξ-η|^{-α} |η|^{-β} dη` is split into the ball
//! of radius `s|ξ|` around the origin, the same ball around `ξ`, and the
//! rest. Each piece is integrated in polar coordinates centred at one of the
//! singularities, which leaves a smooth angular integrand; the unbounded
//! exterior is mapped to `u = 1/ρ` so no truncation is needed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{NskqError, Result};
use crate::quadrature::{integrate_gk, integrate_tanh_sinh};

/// `α + β - d` below this value is reported as a slow-convergence case.
pub const NEAR_BOUNDARY: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub d: usize,
    pub alpha: f64,
    pub beta: f64,
    pub xi: Vec<f64>,
    /// Radius of the balls around the singularities, as a fraction of `|ξ|`.
    pub split: f64,
    pub rel_tol: f64,
}

impl QuadratureSpec {
    pub fn new(d: usize, alpha: f64, beta: f64, xi: Vec<f64>) -> Self {
        Self { d, alpha, beta, xi, split: 0.5, rel_tol: 1e-10 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d == 2 || self.d == 3) || self.xi.len() != self.d {
            return Err(NskqError::InvalidConfig("convolution quadrature needs d in {2, 3}".into()));
        }
        if !(self.alpha < self.d as f64 && self.beta < self.d as f64 && self.alpha + self.beta > self.d as f64) {
            return Err(NskqError::DivergentIntegral(format!(
                "need alpha, beta < d < alpha + beta; got alpha={}, beta={}, d={}",
                self.alpha, self.beta, self.d
            )));
        }
        if !(self.split > 0.0 && self.split <= 0.5) || !(self.rel_tol > 0.0) {
            return Err(NskqError::InvalidConfig("split must lie in (0, 1/2] and rel_tol > 0".into()));
        }
        if !(norm(&self.xi) > 0.0) {
            return Err(NskqError::InvalidConfig("ξ must be nonzero".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RieszResult {
    pub value: f64,
    /// Ball at 0, ball at ξ, and the remainder.
    pub regions: [f64; 3],
    pub error: f64,
    pub evals: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `∫_{φ_lo}^{π} w(φ) (ρ² - 2ρr cos φ + r²)^{-α/2} dφ`, where `w` is the
/// surface measure of the unit sphere in polar angle.
fn angular(d: usize, rho: f64, r: f64, alpha: f64, phi_lo: f64, tol: f64, evals: &mut usize) -> Result<f64> {
    let f = |phi: f64| {
        let q = (rho - r).powi(2) + 2.0 * rho * r * (1.0 - phi.cos());
        let w = if d == 2 { 2.0 } else { 2.0 * PI * phi.sin() };
        w * q.powf(-0.5 * alpha)
    };
    let q = integrate_gk(f, phi_lo, PI, 0.0, tol, 200)?;
    *evals += q.evals;
    Ok(q.value)
}

/// Ball `|η| < s r` in polar coordinates around the origin.
fn ball(d: usize, r: f64, near: f64, far: f64, s: f64, tol: f64) -> Result<(f64, f64, usize)> {
    let mut evals = 0;
    let mut err = None;
    let q = integrate_tanh_sinh(
        |rho, _, _| {
            if rho <= 0.0 {
                return 0.0;
            }
            match angular(d, rho, r, far, 0.0, 0.1 * tol, &mut evals) {
                Ok(a) => rho.powf(d as f64 - 1.0 - near) * a,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        0.0,
        s * r,
        tol,
    );
    if let Some(e) = err {
        return Err(e);
    }
    let q = q?;
    Ok((q.value, q.error, evals + q.evals))
}

/// `|η| >= s r` and `|η - ξ| >= s r`, polar around the origin.
fn remainder(spec: &QuadratureSpec, r: f64) -> Result<(f64, f64, usize)> {
    let (d, a, b, s, tol) = (spec.d, spec.alpha, spec.beta, spec.split, spec.rel_tol);
    let df = d as f64;
    let mut evals = 0;
    let mut err: Option<NskqError> = None;
    let mut total = 0.0;
    let mut error = 0.0;
    // Inner shells: the cap around ξ is cut out for (1-s) r < ρ < (1+s) r.
    let mut pieces = vec![];
    if s < 0.5 {
        pieces.push((s * r, (1.0 - s) * r));
    }
    pieces.push(((1.0 - s).max(s) * r, (1.0 + s) * r));
    for (lo, hi) in pieces {
        let q = integrate_tanh_sinh(
            |rho, _, _| {
                let c = (rho * rho + r * r - s * s * r * r) / (2.0 * rho * r);
                let phi_lo = c.clamp(-1.0, 1.0).acos();
                match angular(d, rho, r, a, phi_lo, 0.1 * tol, &mut evals) {
                    Ok(v) => rho.powf(df - 1.0 - b) * v,
                    Err(e) => {
                        err.get_or_insert(e);
                        f64::NAN
                    }
                }
            },
            lo,
            hi,
            tol,
        );
        if let Some(e) = err.take() {
            return Err(e);
        }
        let q = q?;
        total += q.value;
        error += q.error;
        evals += q.evals;
    }
    // Exterior ρ > (1+s) r with u = 1/ρ: integrand u^{α+β-d-1} ∫|ω - uξ|^{-α}.
    let q = integrate_tanh_sinh(
        |_, u, _| {
            if u <= 0.0 {
                return 0.0;
            }
            match angular(d, 1.0, u * r, a, 0.0, 0.1 * tol, &mut evals) {
                Ok(v) => u.powf(a + b - df - 1.0) * v,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        0.0,
        1.0 / ((1.0 + s) * r),
        tol,
    );
    if let Some(e) = err {
        return Err(e);
    }
    let q = q?;
    Ok((total + q.value, error + q.error, evals + q.evals))
}

/// `I(ξ) = ∫ dη / (|ξ-η|^α |η|^β)` with its three-region breakdown.
pub fn riesz_convolution(spec: &QuadratureSpec) -> Result<RieszResult> {
    spec.validate()?;
    let r = norm(&spec.xi);
    let (i1, e1, n1) = ball(spec.d, r, spec.beta, spec.alpha, spec.split, spec.rel_tol)?;
    let (i2, e2, n2) = ball(spec.d, r, spec.alpha, spec.beta, spec.split, spec.rel_tol)?;
    let (i3, e3, n3) = remainder(spec, r)?;
    Ok(RieszResult {
        value: i1 + i2 + i3,
        regions: [i1, i2, i3],
        error: e1 + e2 + e3,
        evals: n1 + n2 + n3,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvSample {
    pub xi: Vec<f64>,
    pub value: f64,
    /// `I(ξ) |ξ|^{α+β-d}`.
    pub normalized: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub d: usize,
    pub alpha: f64,
    pub beta: f64,
    pub samples: Vec<ConvSample>,
    /// Mean of the normalised values.
    pub constant: f64,
    /// `max |normalized / constant - 1|`.
    pub max_deviation: f64,
    pub near_boundary: bool,
}

impl LemmaReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_deviation <= tol && self.constant.is_finite()
    }
}

/// `|ξ| ∈ {0.5, 1, 2, 4, 8}` along directions that turn with the sample index.
pub fn default_xi_samples(d: usize) -> Vec<Vec<f64>> {
    [0.5, 1.0, 2.0, 4.0, 8.0]
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let th = 0.7 * i as f64;
            let mut v = vec![m * th.cos(), m * th.sin()];
            if d == 3 {
                let ph = 0.4 + 0.5 * i as f64;
                v = vec![v[0] * ph.sin(), v[1] * ph.sin(), m * ph.cos()];
            }
            v
        })
        .collect()
}

/// Constancy of `I(ξ)|ξ|^{α+β-d}` over the given samples.
pub fn verify_convolution(d: usize, alpha: f64, beta: f64, xi_samples: &[Vec<f64>], rel_tol: f64) -> Result<LemmaReport> {
    if xi_samples.is_empty() {
        return Err(NskqError::InvalidConfig("no ξ samples".into()));
    }
    let samples: Vec<ConvSample> = xi_samples
        .par_iter()
        .map(|xi| {
            let spec = QuadratureSpec { rel_tol, ..QuadratureSpec::new(d, alpha, beta, xi.clone()) };
            let r = riesz_convolution(&spec)?;
            Ok(ConvSample {
                xi: xi.clone(),
                value: r.value,
                normalized: r.value * norm(xi).powf(alpha + beta - d as f64),
                error: r.error,
            })
        })
        .collect::<Result<_>>()?;
    let constant = samples.iter().map(|s| s.normalized).sum::<f64>() / samples.len() as f64;
    let max_deviation = samples.iter().map(|s| (s.normalized / constant - 1.0).abs()).fold(0.0, f64::max);
    Ok(LemmaReport {
        d,
        alpha,
        beta,
        samples,
        constant,
        max_deviation,
        near_boundary: alpha + beta - (d as f64) < NEAR_BOUNDARY,
    })
}

/// The pairing `α = d-1+2/p`, `β = d-2+2/p` of the `f`, `g1`, `g2` terms.
pub fn verify_mixed_convolution(d: usize, p: f64, xi_samples: &[Vec<f64>]) -> Result<LemmaReport> {
    if !(p > 2.0) || !(d as f64 - 3.0 + 4.0 / p > 0.0) {
        return Err(NskqError::InvalidConfig("need p > 2 and d - 3 + 4/p > 0".into()));
    }
    let df = d as f64;
    verify_convolution(d, df - 1.0 + 2.0 / p, df - 2.0 + 2.0 / p, xi_samples, 1e-10)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaResult {
    pub integral: f64,
    /// `t^{-1/p} δ^{-(1-1/p)} |ξ|^{-(2-2/p)} B`; infinite when `δ|ξ|² = 0`.
    pub bound: f64,
    /// `∫₀¹ (1-σ)^{-(1-1/p)} σ^{-2/p} dσ`, computed by quadrature.
    pub beta_const: f64,
    pub error: f64,
}

/// `∫₀¹ (1-σ)^{-(1-1/p)} σ^{-2/p} dσ`.
pub fn beta_sigma_integral(p: f64) -> Result<f64> {
    if !(p > 2.0) {
        return Err(NskqError::InvalidConfig("need p > 2".into()));
    }
    let q = integrate_tanh_sinh(
        |_, s, one_minus| one_minus.powf(-(1.0 - 1.0 / p)) * s.powf(-2.0 / p),
        0.0,
        1.0,
        1e-14,
    )?;
    Ok(q.value)
}

/// `∫₀ᵗ e^{-δ(t-s)|ξ|²} s^{-2/p} ds` and its beta-function bound.
pub fn beta_time_integral(p: f64, t: f64, delta_coef: f64, xi_mag: f64) -> Result<BetaResult> {
    if !(t > 0.0 && delta_coef >= 0.0 && xi_mag >= 0.0) {
        return Err(NskqError::InvalidConfig("need t > 0 and nonnegative δ, |ξ|".into()));
    }
    let beta_const = beta_sigma_integral(p)?;
    let k = delta_coef * t * xi_mag * xi_mag;
    // s = tσ: t^{1-2/p} ∫₀¹ e^{-k(1-σ)} σ^{-2/p} dσ
    let q = integrate_tanh_sinh(|_, s, om| (-k * om).exp() * s.powf(-2.0 / p), 0.0, 1.0, 1e-13)?;
    let scale = t.powf(1.0 - 2.0 / p);
    let bound = if delta_coef * xi_mag > 0.0 {
        t.powf(-1.0 / p) * delta_coef.powf(-(1.0 - 1.0 / p)) * xi_mag.powf(-(2.0 - 2.0 / p)) * beta_const
    } else {
        f64::INFINITY
    };
    Ok(BetaResult { integral: scale * q.value, bound, beta_const, error: scale * q.error })
}
