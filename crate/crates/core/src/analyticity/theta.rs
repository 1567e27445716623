use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NskqError, Result};

/// `θ(t, ξ, ε) = -λ² t / (4(1-ε) c0 T) + λ t |ξ| / √T`.
pub fn theta_weight(t: f64, xi_mag: f64, eps: f64, lambda: f64, horizon: f64, c0: f64) -> f64 {
    -theta_offset(t, eps, lambda, horizon, c0) + lambda * t / horizon.sqrt() * xi_mag
}

/// `λ² t / (4(1-ε) c0 T)`, the constant lost in the near-subadditivity of `θ`.
pub fn theta_offset(t: f64, eps: f64, lambda: f64, horizon: f64, c0: f64) -> f64 {
    lambda * lambda * t / (4.0 * (1.0 - eps) * c0 * horizon)
}

/// `λ_T = sqrt(4(1-ε)/p · |ln(η_ε / (T n^{1/p}))|)`.
pub fn bootstrap_lambda(horizon: f64, p: f64, eps: f64, eta_eps: f64, data_norm: f64) -> Result<f64> {
    if !(horizon > 0.0 && data_norm > 0.0 && eta_eps > 0.0) {
        return Err(NskqError::InvalidConfig("horizon, eta and data norm must be positive".into()));
    }
    if !(eps > 0.0 && eps < 1.0) || !(p > 2.0) {
        return Err(NskqError::InvalidConfig("need 0 < eps < 1 and p > 2".into()));
    }
    let arg = eta_eps / (horizon * data_norm.powf(1.0 / p));
    Ok((4.0 * (1.0 - eps) / p * arg.ln().abs()).sqrt())
}

/// `(√t - √s)|ξ|(1 - (√t + √s)|ξ|/2)`, bounded by 2 for `0 <= s <= t`.
pub fn weight_gap(t: f64, s: f64, xi_mag: f64) -> f64 {
    let (rt, rs) = (t.sqrt(), s.sqrt());
    (rt - rs) * xi_mag * (1.0 - (rt + rs) * xi_mag / 2.0)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    /// Largest `lhs - rhs` seen; nonpositive when the inequality holds.
    pub worst_margin: f64,
}

impl SuiteResult {
    fn new(name: &str) -> Self {
        Self { name: name.into(), worst_margin: f64::NEG_INFINITY, ..Default::default() }
    }

    /// Records `lhs <= rhs` up to rounding relative to `scale`.
    fn record(&mut self, lhs: f64, rhs: f64, scale: f64) {
        self.samples += 1;
        let margin = lhs - rhs;
        self.worst_margin = self.worst_margin.max(margin);
        if margin > 1e-12 * scale.abs().max(1.0) {
            self.violations += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.samples > 0 && self.violations == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub seed: u64,
    /// Exponential-weight gap `I <= 2`, split by `√t|ξ| >= 2` and `< 2`.
    pub weight_gap: SuiteResult,
    /// Case `√t|ξ| >= 2`: `I <= 0`.
    pub weight_gap_outer: SuiteResult,
    /// Case `√t|ξ| < 2`: `I < 2` through `(√t-√s)|ξ| < 2`.
    pub weight_gap_inner: SuiteResult,
    pub theta_additive: SuiteResult,
    /// `θ - c0 t|ξ|² <= ε c0 t|ξ|²`.
    pub theta_square: SuiteResult,
    /// The sharper `θ <= (1-ε) c0 t|ξ|²` that implies it.
    pub theta_square_sharp: SuiteResult,
    pub theta_subadditive: SuiteResult,
}

impl InequalityReport {
    pub fn suites(&self) -> [&SuiteResult; 7] {
        [
            &self.weight_gap,
            &self.weight_gap_outer,
            &self.weight_gap_inner,
            &self.theta_additive,
            &self.theta_square,
            &self.theta_square_sharp,
            &self.theta_subadditive,
        ]
    }

    pub fn passed(&self) -> bool {
        self.suites().iter().all(|s| s.passed())
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let r = log_uniform(rng, 1e-3, 1e3);
    let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x * r / n).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Randomised checks of the exponential-weight gap and the `θ` properties,
/// `samples` tuples per suite.
pub fn run_inequality_suites(samples: usize, seed: u64) -> InequalityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gap = SuiteResult::new("weight_gap");
    let mut outer = SuiteResult::new("weight_gap_outer");
    let mut inner = SuiteResult::new("weight_gap_inner");
    for _ in 0..samples {
        let t = log_uniform(&mut rng, 1e-6, 1e2);
        let s = t * rng.gen_range(0.0..=1.0);
        let xi = log_uniform(&mut rng, 1e-3, 1e4);
        let i = weight_gap(t, s, xi);
        gap.record(i, 2.0, 2.0);
        if t.sqrt() * xi >= 2.0 {
            outer.record(i, 0.0, (t.sqrt() * xi).powi(2));
        } else {
            inner.record((t.sqrt() - s.sqrt()) * xi, 2.0, 2.0);
        }
    }
    let mut additive = SuiteResult::new("theta_additive");
    let mut square = SuiteResult::new("theta_square");
    let mut sharp = SuiteResult::new("theta_square_sharp");
    let mut sub = SuiteResult::new("theta_subadditive");
    for _ in 0..samples {
        let d = if rng.gen_bool(0.5) { 2 } else { 3 };
        let horizon = log_uniform(&mut rng, 1e-4, 1e1);
        let t = horizon * rng.gen_range(0.0..=1.0);
        let s = t * rng.gen_range(0.0..=1.0);
        let eps = rng.gen_range(1e-3..0.999);
        let lambda = log_uniform(&mut rng, 1e-3, 1e1);
        let c0 = log_uniform(&mut rng, 1e-2, 2.0);
        let xi = random_vec(&mut rng, d);
        let eta = random_vec(&mut rng, d);
        let x = norm(&xi);
        let th = |t: f64, m: f64| theta_weight(t, m, eps, lambda, horizon, c0);
        let whole = th(t, x);
        let split = th(t - s, x) + th(s, x);
        let scale = whole.abs() + split.abs() + theta_offset(t, eps, lambda, horizon, c0);
        additive.record((whole - split).abs(), 0.0, scale);
        let heat = c0 * t * x * x;
        square.record(whole - heat, eps * heat, scale + heat);
        sharp.record(whole, (1.0 - eps) * heat, scale + heat);
        let diff: Vec<f64> = xi.iter().zip(&eta).map(|(a, b)| a - b).collect();
        let rhs = th(t, norm(&diff)) + th(t, norm(&eta)) + theta_offset(t, eps, lambda, horizon, c0);
        sub.record(whole, rhs, scale + rhs.abs());
    }
    InequalityReport {
        seed,
        weight_gap: gap,
        weight_gap_outer: outer,
        weight_gap_inner: inner,
        theta_additive: additive,
        theta_square: square,
        theta_square_sharp: sharp,
        theta_subadditive: sub,
    }
}
