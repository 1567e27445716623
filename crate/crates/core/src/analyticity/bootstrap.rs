use serde::{Deserialize, Serialize};

use super::radius::{estimate_radius, RadiusEstimate};
use super::theta::{bootstrap_lambda, theta_weight};
use crate::error::{NskqError, Result};
use crate::spectral::norms::{data_norm_shifted, x_norm, x_parts_weighted};
use crate::spectral::{FlowState, Trajectory};

/// Inputs of the near-zero bootstrap. `c` and `c_eps` are measured
/// constants of the weighted quadratic estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub epsilon: f64,
    pub c: f64,
    pub c_eps: f64,
    pub eta_eps: f64,
    pub p: f64,
    /// Horizons `T` to test; each must lie in the trajectory's time range.
    pub horizons: Vec<f64>,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            c: 1.0,
            c_eps: 1.0,
            eta_eps: 1.0,
            p: 3.0,
            horizons: (4..=10).map(|k| 2f64.powi(-k)).collect(),
        }
    }
}

impl BootstrapConfig {
    /// `μ = 1 / (2(2C + 4))`.
    pub fn mu_boot(&self) -> f64 {
        0.5 / (2.0 * self.c + 4.0)
    }

    /// `D_ε = 1 / (C_ε · 4μ · C)`.
    pub fn d_eps(&self) -> f64 {
        1.0 / (self.c_eps * 4.0 * self.mu_boot() * self.c)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.epsilon > 0.0
            && self.epsilon < 1.0
            && self.c > 0.0
            && self.c_eps > 0.0
            && self.eta_eps > 0.0
            && self.p > 2.0
            && self.horizons.iter().all(|&t| t > 0.0);
        if ok {
            Ok(())
        } else {
            Err(NskqError::InvalidConfig("bootstrap constants out of range".into()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRow {
    pub horizon: f64,
    pub lambda_t: f64,
    /// `‖(a̲, u̲)‖_{X_T}`; `None` when the weight saturated.
    pub weighted_norm: Option<f64>,
    /// `D_ε e^{-λ_T² / (4(1-ε)c0)}`.
    pub bound: f64,
    pub h_holds: Option<bool>,
    /// `C ‖e^{εc0tΔ}U₀‖_X + C_ε e^{λ²/(4(1-ε)c0)} ‖(a̲, u̲)‖²`.
    pub cgz_rhs: Option<f64>,
    pub cgz_holds: Option<bool>,
    pub radius: RadiusEstimate,
    /// `R(T) / sqrt(T |ln(T n^{1/p})|)`.
    pub ratio: Option<f64>,
    pub saturated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub data_norm: f64,
    pub mu_boot: f64,
    pub d_eps: f64,
    pub rows: Vec<BootstrapRow>,
    pub min_ratio: Option<f64>,
    /// Slope of `ln ratio` against `ln T`; near zero means no decay as `T → 0`.
    pub trend_slope: Option<f64>,
    /// `sqrt(4/p)`.
    pub target: f64,
}

/// Heat flow `e^{-ε c0 t|ξ|²}U₀` sampled at the trajectory's times.
fn heat_trajectory(data: &FlowState, traj: &Trajectory, rate: f64) -> Result<Trajectory> {
    let lat = data.lattice().clone();
    let states = traj
        .states()
        .iter()
        .map(|s| {
            let mut h = data.clone();
            h.t = s.t;
            for c in h.components_mut() {
                for (idx, z) in c.coeffs_mut().iter_mut().enumerate() {
                    *z *= (-rate * s.t * lat.magnitude(idx).powi(2)).exp();
                }
            }
            h
        })
        .collect();
    Trajectory::new(states)
}

/// Evaluates the bootstrap hypothesis, the weighted quadratic estimate and the
/// radius ratio at every configured horizon.
pub fn check_bootstrap(
    traj: &Trajectory,
    data: &FlowState,
    c0: f64,
    cfg: &BootstrapConfig,
) -> Result<BootstrapReport> {
    cfg.validate()?;
    if !(c0 > 0.0) {
        return Err(NskqError::InvalidConfig("c0 must be positive".into()));
    }
    let d = traj.lattice().dim() as f64;
    let p = cfg.p;
    let eps = cfg.epsilon;
    let n = data_norm_shifted(data, 2.0 / p)?;
    let heat = heat_trajectory(data, traj, eps * c0)?;
    let last = *traj.times().last().expect("nonempty trajectory");
    let lat = traj.lattice().clone();
    let mut rows = Vec::with_capacity(cfg.horizons.len());
    for &horizon in &cfg.horizons {
        if horizon > last * (1.0 + 1e-12) {
            return Err(NskqError::InvalidConfig(format!("horizon {horizon} beyond the trajectory")));
        }
        let scale = 4.0 * (1.0 - eps) * c0;
        let (lambda_t, bound) = if n > 0.0 {
            let l = bootstrap_lambda(horizon, p, eps, cfg.eta_eps, n)?;
            (l, cfg.d_eps() * (-l * l / scale).exp())
        } else {
            (0.0, cfg.d_eps())
        };
        let weighted = x_parts_weighted(traj, p, horizon, |t, idx| {
            theta_weight(t, lat.magnitude(idx), eps, lambda_t, horizon, c0)
        });
        let (weighted_norm, saturated) = match weighted {
            Ok(w) => (Some(w.total()), false),
            Err(NskqError::Saturation { .. }) => (None, true),
            Err(e) => return Err(e),
        };
        let linear = x_norm(&heat, p, horizon)?;
        let cgz_rhs = weighted_norm.map(|w| cfg.c * linear + cfg.c_eps * (lambda_t * lambda_t / scale).exp() * w * w);
        let state = traj.nearest(horizon);
        let radius = estimate_radius(state, d - 1.0 + 2.0 / p);
        let denom = (horizon * (horizon * n.powf(1.0 / p)).ln().abs()).sqrt();
        let ratio = radius.sigma_hat.filter(|_| n > 0.0 && denom > 0.0).map(|s| s / denom);
        rows.push(BootstrapRow {
            horizon,
            lambda_t,
            weighted_norm,
            bound,
            h_holds: weighted_norm.map(|w| w <= bound),
            cgz_rhs,
            cgz_holds: weighted_norm.zip(cgz_rhs).map(|(w, r)| w <= r),
            radius,
            ratio,
            saturated,
        });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.ratio.filter(|&x| x > 0.0).map(|x| (r.horizon.ln(), x.ln())))
        .collect();
    let trend_slope = (pts.len() >= 2).then(|| {
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.1));
        let (mx, my) = (sx / m, sy / m);
        let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        num / den
    });
    Ok(BootstrapReport {
        data_norm: n,
        mu_boot: cfg.mu_boot(),
        d_eps: cfg.d_eps(),
        min_ratio: rows.iter().filter_map(|r| r.ratio).reduce(f64::min),
        rows,
        trend_slope,
        target: (4.0 / p).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::LatticeSpec;

    #[test]
    fn derived_constants() {
        let cfg = BootstrapConfig { c: 2.0, c_eps: 3.0, ..Default::default() };
        assert!((cfg.mu_boot() - 1.0 / 16.0).abs() < 1e-15);
        assert!((cfg.d_eps() - 1.0 / (3.0 * 0.25 * 2.0)).abs() < 1e-15);
        assert!(4.0 * cfg.mu_boot() * cfg.c / (1.0 - 4.0 * cfg.mu_boot()) < 2.0);
    }

    #[test]
    fn zero_solution_satisfies_everything() {
        let lat = LatticeSpec::new(2, 16, 1.0).build().unwrap();
        let times: Vec<f64> = (0..=12).map(|k| 2f64.powi(-k)).rev().collect();
        let traj = Trajectory::zeros(&lat, &times).unwrap();
        let r = check_bootstrap(&traj, &FlowState::zeros(&lat, 0.0), 0.38, &BootstrapConfig::default()).unwrap();
        assert!(r.rows.iter().all(|row| row.h_holds == Some(true) && row.cgz_holds == Some(true)));
        assert!(r.min_ratio.is_none());
    }
}
