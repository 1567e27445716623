use serde::{Deserialize, Serialize};

use crate::spectral::{FlowState, SpectralField};

/// Shells with `|û| < NOISE_FLOOR · max|û|` are left out of the fit.
pub const NOISE_FLOOR: f64 = 1e-14;
pub const MIN_SHELLS: usize = 4;
/// Outer-half rate over inner-half rate above which a spectrum is flagged
/// as decaying faster than any exponential.
pub const SUPER_EXP_RATIO: f64 = 1.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusEstimate {
    pub t: f64,
    /// Fitted exponential rate, `None` when fewer than `MIN_SHELLS` shells
    /// sit above the noise floor.
    pub sigma_hat: Option<f64>,
    /// RMS residual of the log fit.
    pub residual: f64,
    /// One standard error of `sigma_hat`; the confidence band is `±2·sigma_se`.
    pub sigma_se: f64,
    /// `[|ξ|_lo, |ξ|_hi]` of the fit window.
    pub window: [f64; 2],
    pub shells: usize,
    /// Some resolved shells were dropped for sitting under the noise floor.
    pub noise_floor_hit: bool,
    pub super_exponential: bool,
}

impl RadiusEstimate {
    fn undefined(t: f64) -> Self {
        Self {
            t,
            sigma_hat: None,
            residual: 0.0,
            sigma_se: 0.0,
            window: [0.0, 0.0],
            shells: 0,
            noise_floor_hit: true,
            super_exponential: false,
        }
    }
}

/// `(|ξ|, max over the shell of |ξ|^r |û|)` for every nonzero shell above
/// the noise floor, by increasing radius, and whether any shell was cut.
pub fn shell_profile(field: &SpectralField, r: f64) -> (Vec<(f64, f64)>, bool) {
    let lat = field.lattice();
    let radii = lat.shell_radii();
    let mut peak = vec![0.0f64; radii.len()];
    let mut top = 0.0f64;
    for (idx, z) in field.coeffs().iter().enumerate() {
        if let Some(s) = lat.shell_of(idx) {
            peak[s] = peak[s].max(z.norm());
            top = top.max(z.norm());
        }
    }
    if top == 0.0 {
        return (Vec::new(), false);
    }
    let floor = NOISE_FLOOR * top;
    let mut cut = false;
    let mut out = Vec::new();
    for (s, (&rad, &v)) in radii.iter().zip(&peak).enumerate() {
        if s == 0 {
            continue;
        }
        if v < floor {
            cut = true;
        } else {
            out.push((rad, rad.powf(r) * v));
        }
    }
    (out, cut)
}

struct Fit {
    sigma: f64,
    rms: f64,
    /// Standard error of `sigma` from the normal-equation covariance.
    se: f64,
}

/// Least squares for `ln v ≈ c + γ ln s - σ s`.
fn fit(points: &[(f64, f64)]) -> Option<Fit> {
    if points.len() < MIN_SHELLS {
        return None;
    }
    let scale = points.iter().map(|p| p.0).fold(0.0, f64::max);
    let rows: Vec<([f64; 3], f64)> = points
        .iter()
        .map(|&(s, v)| {
            let x = s / scale;
            ([1.0, x, x.ln()], v.ln())
        })
        .collect();
    let mut m = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for (row, y) in &rows {
        for i in 0..3 {
            b[i] += row[i] * y;
            for j in 0..3 {
                m[i][j] += row[i] * row[j];
            }
        }
    }
    let coef = solve3(m, b)?;
    let rss: f64 = rows
        .iter()
        .map(|(row, y)| (y - row.iter().zip(&coef).map(|(a, c)| a * c).sum::<f64>()).powi(2))
        .sum();
    let n = rows.len() as f64;
    let inv11 = solve3(m, [0.0, 1.0, 0.0])?[1].max(0.0);
    let se = (rss / (n - 3.0) * inv11).sqrt() / scale;
    Some(Fit { sigma: -coef[1] / scale, rms: (rss / n).sqrt(), se })
}

fn solve3(mut m: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|k| m[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / m[i][i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Exponential decay rate of one field's spectrum over the top half of the
/// resolved band.
pub fn estimate_radius_field(field: &SpectralField, r: f64, t: f64) -> RadiusEstimate {
    estimate_profile(shell_profile(field, r), t)
}

/// Radius of a state: the smallest component estimate. Identically zero
/// components carry no constraint.
pub fn estimate_radius(state: &FlowState, r: f64) -> RadiusEstimate {
    let mut best: Option<RadiusEstimate> = None;
    let mut any_undefined = None;
    for c in state.components().filter(|c| !c.is_zero()) {
        let e = estimate_radius_field(c, r, state.t);
        match e.sigma_hat {
            None => any_undefined = Some(e),
            Some(s) => {
                if best.as_ref().and_then(|b| b.sigma_hat).is_none_or(|b| s < b) {
                    best = Some(e);
                }
            }
        }
    }
    best.or(any_undefined).unwrap_or_else(|| RadiusEstimate::undefined(state.t))
}

fn estimate_profile((profile, cut): (Vec<(f64, f64)>, bool), t: f64) -> RadiusEstimate {
    let Some(&(top, _)) = profile.last() else {
        return RadiusEstimate::undefined(t);
    };
    let window: Vec<(f64, f64)> = profile.into_iter().filter(|p| p.0 >= 0.5 * top).collect();
    let Some(Fit { sigma, rms: residual, se }) = fit(&window) else {
        return RadiusEstimate { noise_floor_hit: cut, ..RadiusEstimate::undefined(t) };
    };
    let half = window.len() / 2;
    let super_exponential = match (fit(&window[..half]), fit(&window[half..])) {
        (Some(lo), Some(hi)) => hi.sigma > SUPER_EXP_RATIO * lo.sigma.max(0.0) && hi.sigma > 0.0,
        _ => false,
    };
    RadiusEstimate {
        t,
        sigma_hat: Some(sigma.max(0.0)),
        residual,
        sigma_se: se,
        window: [window[0].0, top],
        shells: window.len(),
        noise_floor_hit: cut,
        super_exponential,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::LatticeSpec;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn synthetic(period: f64, n: usize, spec: impl Fn(f64) -> f64) -> SpectralField {
        let lat = LatticeSpec::new(2, n, period).build().unwrap();
        let mags = lat.magnitudes().to_vec();
        SpectralField::from_fn(&lat, true, |idx| {
            if idx == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(spec(mags[idx]), 0.0)
            }
        })
    }

    #[test]
    fn pure_exponential() {
        let f = synthetic(2.0 * PI, 128, |s| (-2.0 * s).exp());
        let e = estimate_radius_field(&f, 0.0, 0.0);
        let s = e.sigma_hat.unwrap();
        assert!((s - 2.0).abs() < 0.1, "{s}");
        assert!(!e.super_exponential);
    }

    #[test]
    fn polynomial_prefactor_is_absorbed() {
        let f = synthetic(2.0 * PI, 128, |s| s.powi(-3) * (-0.5 * s).exp());
        let s = estimate_radius_field(&f, 0.0, 0.0).sigma_hat.unwrap();
        assert!((s - 0.5).abs() < 0.025, "{s}");
    }

    #[test]
    fn standard_error_tracks_noise() {
        let clean = fit(&(1..40).map(|k| (k as f64, (-0.7 * k as f64).exp())).collect::<Vec<_>>()).unwrap();
        assert!((clean.sigma - 0.7).abs() < 1e-10 && clean.se < 1e-9, "{} {}", clean.sigma, clean.se);
        let wobble = |k: usize| if k % 2 == 0 { 0.05 } else { -0.05 };
        let noisy = fit(&(1..40).map(|k| (k as f64, (-0.7 * k as f64 + wobble(k)).exp())).collect::<Vec<_>>()).unwrap();
        assert!(noisy.se > 1e-4 && (noisy.sigma - 0.7).abs() < 4.0 * noisy.se, "{} {}", noisy.sigma, noisy.se);
    }

    #[test]
    fn gaussian_is_flagged() {
        let f = synthetic(2.0 * PI, 128, |s| (-s * s).exp());
        assert!(estimate_radius_field(&f, 0.0, 0.0).super_exponential);
    }

    #[test]
    fn below_floor_is_undefined() {
        let f = synthetic(2.0 * PI, 16, |s| if s < 1.5 { 1.0 } else { 0.0 });
        assert!(estimate_radius_field(&f, 0.0, 0.0).sigma_hat.is_none());
        let lat = LatticeSpec::new(2, 8, 1.0).build().unwrap();
        assert!(estimate_radius(&FlowState::zeros(&lat, 0.0), 1.0).sigma_hat.is_none());
    }

    #[test]
    fn dilation_scales_the_rate() {
        // Same coefficients on a box twice as large: |ξ| halves, the rate doubles.
        let a = synthetic(2.0 * PI, 64, |s| (-1.0 * s).exp());
        let b = SpectralField::from_coeffs(
            &LatticeSpec::new(2, 64, 4.0 * PI).build().unwrap(),
            a.coeffs().to_vec(),
            true,
        )
        .unwrap();
        let sa = estimate_radius_field(&a, 0.0, 0.0).sigma_hat.unwrap();
        let sb = estimate_radius_field(&b, 0.0, 0.0).sigma_hat.unwrap();
        assert!((sb / sa - 2.0).abs() < 1e-9, "{sa} {sb}");
    }
}
