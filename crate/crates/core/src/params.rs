use serde::{Deserialize, Serialize};

use crate::error::{NskqError, Result};
use crate::nonlinear::DuContraction;

/// Physical constants and the parabolic decay rate `c0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct ModelParams {
    pub mu: f64,
    pub nu: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub c0: f64,
}

#[derive(Deserialize)]
struct RawParams {
    mu: f64,
    nu: f64,
    kappa: f64,
    alpha: f64,
    #[serde(default)]
    c0: Option<f64>,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = NskqError;

    fn try_from(raw: RawParams) -> Result<Self> {
        let p = Self::new(raw.mu, raw.nu, raw.kappa, raw.alpha)?;
        match raw.c0 {
            Some(c0) => p.with_c0(c0),
            None => Ok(p),
        }
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::new(1.0, 1.0, 1.0, 1.0).expect("unit parameters are valid")
    }
}

impl ModelParams {
    /// Validates the constants and sets `c0` to its spectral prediction.
    pub fn new(mu: f64, nu: f64, kappa: f64, alpha: f64) -> Result<Self> {
        let finite = [mu, nu, kappa, alpha].iter().all(|x| x.is_finite());
        if !finite || mu <= 0.0 || mu + nu <= 0.0 || kappa <= 0.0 || alpha <= 0.0 {
            return Err(NskqError::InvalidParams(format!(
                "need mu > 0, mu + nu > 0, kappa > 0, alpha > 0 (got {mu}, {nu}, {kappa}, {alpha})"
            )));
        }
        let mut p = Self { mu, nu, kappa, alpha, c0: 0.0 };
        p.c0 = p.spectral_c0();
        Ok(p)
    }

    /// Replaces `c0`, e.g. by a measured value.
    pub fn with_c0(mut self, c0: f64) -> Result<Self> {
        if !(c0.is_finite() && c0 > 0.0) {
            return Err(NskqError::InvalidParams(format!("c0 must be positive, got {c0}")));
        }
        self.c0 = c0;
        Ok(self)
    }

    /// `2μ + ν`, the compressible diffusion coefficient.
    pub fn b(&self) -> f64 {
        2.0 * self.mu + self.nu
    }

    /// `min(μ, inf_ξ Re λ₋(ξ)/|ξ|²)`; the infimum is the high-frequency limit.
    pub fn spectral_c0(&self) -> f64 {
        let b = self.b();
        let high = 0.5 * (b - (b * b - 4.0 * self.kappa).max(0.0).sqrt());
        self.mu.min(high)
    }
}

/// Time grid on `]0, T]`: geometric nodes `T q^{M-k}`, optionally refined
/// so no step exceeds `max_step`, plus extra nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub nodes: usize,
    pub ratio: f64,
    pub max_step: Option<f64>,
    pub extra: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nodes: 48,
            ratio: 0.8,
            max_step: None,
            extra: Vec::new(),
        }
    }
}

/// Kato exponent, horizon and iteration controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub p: f64,
    pub delta: f64,
    pub horizon: f64,
    pub grid: GridSpec,
    /// Gauss-Legendre nodes per grid interval.
    pub quad_nodes: usize,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub max_iter: usize,
    /// Consecutive increment growths that count as divergence.
    pub divergence_window: usize,
    pub nonlinear: bool,
    pub contraction: DuContraction,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            p: 3.0,
            delta: 2.0 / 3.0,
            horizon: 1.0,
            grid: GridSpec::default(),
            quad_nodes: 8,
            tol_abs: 1e-13,
            tol_rel: 1e-10,
            max_iter: 200,
            divergence_window: 5,
            nonlinear: true,
            contraction: DuContraction::Transpose,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: String| Err(NskqError::InvalidConfig(m));
        if !(self.p > 2.0 && self.p.is_finite()) {
            return bad(format!("p must exceed 2, got {}", self.p));
        }
        if dim as f64 - 3.0 + 4.0 / self.p <= 0.0 {
            return bad(format!("d - 3 + 4/p must be positive (d = {dim}, p = {})", self.p));
        }
        if !(self.delta > 0.0 && self.delta <= 2.0 / self.p + 1e-15) {
            return bad(format!("delta must lie in (0, 2/p], got {}", self.delta));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.grid.nodes < 2 || !(self.grid.ratio > 0.0 && self.grid.ratio < 1.0) {
            return bad("grid needs >= 2 nodes and a ratio in (0, 1)".into());
        }
        if self.quad_nodes == 0 || self.max_iter == 0 || self.divergence_window == 0 {
            return bad("quadrature nodes, iteration cap and divergence window must be >= 1".into());
        }
        if self.tol_abs < 0.0 || self.tol_rel < 0.0 {
            return bad("tolerances must be nonnegative".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_parameters_give_golden_ratio_rate() {
        let p = ModelParams::default();
        assert!((p.c0 - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn complex_branch_uses_half_trace() {
        // b^2 < 4κ: Re λ/|ξ|² = b/2 at high frequency.
        let p = ModelParams::new(1.0, 0.0, 10.0, 1.0).unwrap();
        assert_eq!(p.c0, 1.0);
        let p = ModelParams::new(0.5, -0.25, 10.0, 1.0).unwrap();
        assert_eq!(p.c0, 0.375);
    }

    #[test]
    fn rejects_nonphysical_constants() {
        assert!(ModelParams::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, -1.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.0, -1.0).is_err());
        assert!(ModelParams::default().with_c0(0.0).is_err());
    }

    #[test]
    fn json_without_c0_computes_it() {
        let p: ModelParams =
            serde_json::from_str(r#"{"mu":1,"nu":1,"kappa":1,"alpha":1}"#).unwrap();
        assert_eq!(p, ModelParams::default());
        let p: ModelParams =
            serde_json::from_str(r#"{"mu":1,"nu":1,"kappa":1,"alpha":1,"c0":0.25}"#).unwrap();
        assert_eq!(p.c0, 0.25);
        assert!(serde_json::from_str::<ModelParams>(r#"{"mu":-1,"nu":1,"kappa":1,"alpha":1}"#).is_err());
    }

    #[test]
    fn solver_config_hypotheses() {
        let mut cfg = SolverConfig::default();
        assert!(cfg.validate(2).is_ok());
        cfg.p = 2.0;
        assert!(cfg.validate(2).is_err());
        cfg.p = 3.0;
        cfg.delta = 0.7;
        assert!(cfg.validate(2).is_err());
        cfg.delta = 2.0 / 3.0;
        cfg.p = 5.0;
        cfg.delta = 0.4;
        // d = 2: 2 - 3 + 4/5 < 0
        assert!(cfg.validate(2).is_err());
        assert!(cfg.validate(3).is_ok());
    }
}
