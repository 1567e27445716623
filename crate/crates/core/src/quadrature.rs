//! One-dimensional quadrature rules: Gauss-Legendre, adaptive
//! Gauss-Kronrod (7/15) and tanh-sinh for endpoint singularities.

use std::collections::BinaryHeap;
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{NskqError, Result};

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 1 {
        return (vec![0.0], vec![2.0]);
    }
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// Stops when the summed error estimate is below `max(abs_tol, rel_tol·|I|)`.
pub fn integrate_gk(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> Result<Quad> {
    if a == b {
        return Ok(Quad { value: 0.0, error: 0.0, evals: 0 });
    }
    let (value, error) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut err = error;
    let mut evals = 15;
    loop {
        if !total.is_finite() {
            return Err(NskqError::Quadrature(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(Quad { value: total, error: err, evals });
        }
        if heap.len() >= max_segments {
            return Err(NskqError::Quadrature(format!(
                "error {err:.3e} after {} segments on [{a}, {b}]",
                heap.len()
            )));
        }
        let seg = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (seg.a + seg.b);
        let (v1, e1) = gk15(&mut f, seg.a, mid);
        let (v2, e2) = gk15(&mut f, mid, seg.b);
        evals += 30;
        total += v1 + v2 - seg.value;
        err += e1 + e2 - seg.error;
        heap.push(Segment { a: seg.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: seg.b, value: v2, error: e2 });
        // Refresh the running error sum to shed accumulated rounding.
        if evals % 3000 == 0 {
            err = heap.iter().map(|s| s.error).sum();
            total = heap.iter().map(|s| s.value).sum();
        }
    }
}

/// Tanh-sinh integration over `[a, b]`.
///
/// The integrand receives `(x, x - a, b - x)` with both offsets computed
/// without cancellation, so endpoint singularities like `(b - x)^{-γ}` can be
/// evaluated accurately next to the endpoint.
pub fn integrate_tanh_sinh(
    mut f: impl FnMut(f64, f64, f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<Quad> {
    let half = 0.5 * (b - a);
    let tmax = 6.5;
    let mut eval = |t: f64| -> f64 {
        let s = FRAC_PI_2 * t.sinh();
        let cosh_s = s.cosh();
        // 1 - tanh(s) = 2 / (1 + e^{2s}) stays accurate for large s.
        let one_minus = 2.0 / (1.0 + (2.0 * s).exp());
        let one_plus = 2.0 / (1.0 + (-2.0 * s).exp());
        let w = FRAC_PI_2 * t.cosh() / (cosh_s * cosh_s);
        if w == 0.0 {
            return 0.0;
        }
        let xa = half * one_plus;
        let xb = half * one_minus;
        let x = if t < 0.0 { a + xa } else { b - xb };
        let v = f(x, xa, xb);
        if v.is_finite() { v * w * half } else { 0.0 }
    };
    let mut h = 1.0;
    let mut sum = eval(0.0);
    let mut k = 1;
    while k as f64 * h <= tmax {
        let t = k as f64 * h;
        sum += eval(t) + eval(-t);
        k += 1;
    }
    let mut prev = sum * h;
    let mut evals = 2 * k - 1;
    for _ in 0..12 {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= tmax {
            let t = k as f64 * h;
            sum += eval(t) + eval(-t);
            k += 2;
            evals += 2;
        }
        let cur = sum * h;
        if !cur.is_finite() {
            return Err(NskqError::Quadrature("non-finite tanh-sinh sum".into()));
        }
        let err = (cur - prev).abs();
        if err <= rel_tol * cur.abs() && h < 0.2 {
            return Ok(Quad { value: cur, error: err, evals });
        }
        prev = cur;
    }
    Err(NskqError::Quadrature(format!(
        "tanh-sinh did not reach relative tolerance {rel_tol:.1e}"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for n in 1..=12 {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn gk_handles_smooth_and_peaked_integrands() {
        let q = integrate_gk(|x| x.exp(), 0.0, 1.0, 0.0, 1e-13, 100).unwrap();
        assert!((q.value - (1f64.exp() - 1.0)).abs() < 1e-13);
        let q = integrate_gk(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 0.0, 1e-10, 2000).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((q.value / exact - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gk_reports_failure() {
        assert!(integrate_gk(|x| 1.0 / x, 0.0, 1.0, 0.0, 1e-10, 50).is_err());
    }

    #[test]
    fn tanh_sinh_endpoint_singularity() {
        // ∫_0^1 x^{-1/2} (1-x)^{-1/2} dx = π
        let q = integrate_tanh_sinh(|_, xa: f64, xb: f64| (xa * xb).powf(-0.5), 0.0, 1.0, 1e-12)
            .unwrap();
        assert!((q.value - PI).abs() < 1e-10, "{}", q.value);
    }
}
