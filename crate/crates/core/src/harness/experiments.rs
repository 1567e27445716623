//! Experiment drivers shared by the CLI checks and the acceptance tests.
//! Each returns raw measurements; pass/fail thresholds live with the caller.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analyticity::{check_bootstrap, estimate_radius, BootstrapConfig, BootstrapReport, RadiusEstimate};
use crate::duhamel::{
    measure_bilinear_constants, random_smooth_data, reference_integrate, BilinearConstants, ConstantsLedger,
    DuhamelSolver, Mode, ReferenceOptions, SolveOutcome,
};
use crate::error::{NskqError, Result};
use crate::linear::{semigroup_apply, semigroup_apply_dense};
use crate::nonlinear::{compute_f, compute_g1, compute_g2, compute_g3, DuContraction, Method, ProductEngine};
use crate::params::{ModelParams, SolverConfig};
use crate::spectral::{x_norm, FlowState, FrequencyLattice, SpectralField, Trajectory};

fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    let den = b.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemigroupReport {
    pub samples: usize,
    pub seed: u64,
    /// `max |W(t)W(s)v - W(t+s)v| / |W(t+s)v|`
    pub max_semigroup_err: f64,
    /// `max |W_block(t)v - W_dense(t)v| / |W_dense(t)v|`
    pub max_dense_err: f64,
}

/// Semigroup composition and block-vs-dense agreement at random
/// `t, s ∈ [0, 1)`, `ξ ∈ [-4, 4)^d` and complex `v` with parts in `[-1, 1)`.
pub fn semigroup_agreement(params: &ModelParams, dim: usize, samples: usize, seed: u64) -> Result<SemigroupReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SemigroupReport { samples, seed, max_semigroup_err: 0.0, max_dense_err: 0.0 };
    for _ in 0..samples {
        let t: f64 = rng.gen_range(0.0..1.0);
        let s: f64 = rng.gen_range(0.0..1.0);
        let xi: Vec<f64> = (0..dim).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let v: Vec<Complex64> =
            (0..=dim).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let direct = semigroup_apply(t + s, &xi, &v, params)?;
        let composed = semigroup_apply(t, &xi, &semigroup_apply(s, &xi, &v, params)?, params)?;
        report.max_semigroup_err = report.max_semigroup_err.max(rel_err(&composed, &direct));
        let block = semigroup_apply(t, &xi, &v, params)?;
        let dense = semigroup_apply_dense(t, &xi, &v, params);
        report.max_dense_err = report.max_dense_err.max(rel_err(&block, &dense));
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearReport {
    pub modes: usize,
    pub seeds: usize,
    /// Worst `max|fast - oracle| / max|oracle|` for `f, g1, g2, g3`.
    pub max_rel: [f64; 4],
}

/// Random complex state with conjugate symmetry on every interior mode.
pub fn random_state(lat: &Arc<FrequencyLattice>, rng: &mut ChaCha8Rng) -> FlowState {
    let mut draw = || {
        let mut f = SpectralField::from_fn(lat, true, |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        f.symmetrize();
        f
    };
    let a = draw();
    let u = (0..lat.dim()).map(|_| draw()).collect();
    FlowState { a, u, t: 0.0 }
}

fn max_rel(fast: &[&SpectralField], oracle: &[&SpectralField]) -> f64 {
    let scale = oracle.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
    let diff = fast.iter().zip(oracle).map(|(f, o)| f.max_abs_diff(o)).fold(0.0, f64::max);
    if scale > 0.0 { diff / scale } else { diff }
}

/// Direct dealiased convolution against the FFT path for the four
/// quadratic terms; seed `k` draws the state from `ChaCha8Rng::seed_from_u64(k)`.
pub fn nonlinear_agreement(
    params: &ModelParams,
    lat: &Arc<FrequencyLattice>,
    seeds: usize,
    contraction: DuContraction,
) -> Result<NonlinearReport> {
    let oracle = ProductEngine::new(lat, Method::Oracle)?;
    let fast = ProductEngine::new(lat, Method::Fast)?;
    let mut worst = [0.0f64; 4];
    for seed in 0..seeds as u64 {
        let s = random_state(lat, &mut ChaCha8Rng::seed_from_u64(seed));
        let errs = [
            max_rel(&[&compute_f(&fast, &s)?], &[&compute_f(&oracle, &s)?]),
            max_rel(
                &compute_g1(&fast, &s)?.iter().collect::<Vec<_>>(),
                &compute_g1(&oracle, &s)?.iter().collect::<Vec<_>>(),
            ),
            max_rel(
                &compute_g2(&fast, &s, params, contraction)?.iter().collect::<Vec<_>>(),
                &compute_g2(&oracle, &s, params, contraction)?.iter().collect::<Vec<_>>(),
            ),
            max_rel(
                &compute_g3(&fast, &s, params)?.iter().collect::<Vec<_>>(),
                &compute_g3(&oracle, &s, params)?.iter().collect::<Vec<_>>(),
            ),
        ];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
    }
    Ok(NonlinearReport { modes: lat.modes(), seeds, max_rel: worst })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmallDataReport {
    pub constants: BilinearConstants,
    /// Requested `‖W(·)U₀‖_X / R`.
    pub target_fraction: f64,
    /// Factor applied to the random smooth shape.
    pub scale: f64,
    pub converged: bool,
    pub iterations: usize,
    pub ledger: ConstantsLedger,
    /// `‖x‖_{X_T}` of the converged solution.
    pub solution_x_norm: f64,
    /// `2 C̃ ‖U₀‖`.
    pub bound: f64,
}

/// Measures `K_Φ`, scales random smooth data so that the linear part has
/// `X_T` norm `target_fraction · R`, and runs the Picard iteration.
pub fn small_data_fixed_point(
    params: &ModelParams,
    lat: &Arc<FrequencyLattice>,
    cfg: &SolverConfig,
    samples: usize,
    seed: u64,
    target_fraction: f64,
) -> Result<SmallDataReport> {
    if !(target_fraction > 0.0) {
        return Err(NskqError::InvalidConfig("target fraction must be positive".into()));
    }
    let solver = DuhamelSolver::new(*params, cfg.clone(), lat)?;
    let constants = measure_bilinear_constants(&solver, samples, seed, false)?;
    let r = 0.9 / (16.0 * constants.k_phi);
    let shape = random_smooth_data(&solver, &mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    let linear = x_norm(&solver.linear_trajectory(&shape)?, cfg.p, cfg.horizon)?;
    let scale = target_fraction * r / linear;
    let data = shape.scaled(scale);
    let out = solver.picard_solve(&data, Mode::Plain, Some(&constants))?;
    let solution_x_norm = x_norm(&out.trajectory, cfg.p, cfg.horizon)?;
    let bound = 2.0 * out.ledger.c_tilde.unwrap_or(f64::NAN) * out.ledger.data_norm;
    Ok(SmallDataReport {
        constants,
        target_fraction,
        scale,
        converged: out.converged(),
        iterations: out.iterations(),
        ledger: out.ledger,
        solution_x_norm,
        bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceReport {
    pub t: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `max|x_Picard - x_ref| / max|x_ref|` at the horizon.
    pub rel_linf: f64,
    pub reference_steps_per_unit: usize,
    pub reference_error_estimate: f64,
}

/// Picard solution at the horizon against the RK4 reference.
pub fn reference_agreement(
    params: &ModelParams,
    lat: &Arc<FrequencyLattice>,
    cfg: &SolverConfig,
    data: &FlowState,
    opts: &ReferenceOptions,
) -> Result<ReferenceReport> {
    let solver = DuhamelSolver::new(*params, cfg.clone(), lat)?;
    let out = solver.picard_solve(data, Mode::Plain, None)?;
    let opts = ReferenceOptions { contraction: cfg.contraction, nonlinear: cfg.nonlinear, ..opts.clone() };
    let reference = reference_integrate(data, params, &[cfg.horizon], &opts)?;
    Ok(ReferenceReport {
        t: cfg.horizon,
        converged: out.converged(),
        iterations: out.iterations(),
        rel_linf: DuhamelSolver::relative_linf(out.trajectory.last(), reference.trajectory.last()),
        reference_steps_per_unit: reference.steps_per_unit,
        reference_error_estimate: reference.error_estimate,
    })
}

/// Runs the Picard iteration with `times` added to the grid, so that the
/// trajectory holds a node at each of them.
pub fn solve_sampled(
    params: &ModelParams,
    lat: &Arc<FrequencyLattice>,
    cfg: &SolverConfig,
    data: &FlowState,
    times: &[f64],
    mode: Mode,
) -> Result<SolveOutcome> {
    let mut cfg = cfg.clone();
    cfg.grid.extra.extend(times.iter().copied());
    DuhamelSolver::new(*params, cfg, lat)?.picard_solve(data, mode, None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusRow {
    pub t: f64,
    pub estimate: RadiusEstimate,
    /// `σ̂(t) - σ₀`
    pub growth: Option<f64>,
    /// `margin · c0 · √t`
    pub required: f64,
    pub holds: bool,
    /// Half-width of the confidence band, `2·sigma_se`.
    pub slack: f64,
    /// The confidence bands of this row and the previous one overlap from below.
    pub nondecreasing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusGrowthReport {
    pub sigma0: f64,
    pub c0: f64,
    pub margin: f64,
    pub initial: RadiusEstimate,
    pub rows: Vec<RadiusRow>,
    pub all_hold: bool,
    pub monotone: bool,
}

fn fit_slack(e: &RadiusEstimate) -> f64 {
    2.0 * e.sigma_se
}

/// Compares the measured radius along `traj` with `σ₀ + margin·c0·√t` at
/// the trajectory nodes nearest to `times`.
pub fn radius_growth(
    traj: &Trajectory,
    data: &FlowState,
    sigma0: f64,
    c0: f64,
    margin: f64,
    times: &[f64],
    weight: f64,
) -> RadiusGrowthReport {
    let initial = estimate_radius(data, weight);
    let mut rows: Vec<RadiusRow> = Vec::with_capacity(times.len());
    for &t in times {
        let state = traj.nearest(t);
        let estimate = estimate_radius(state, weight);
        let growth = estimate.sigma_hat.map(|s| s - sigma0);
        let required = margin * c0 * state.t.sqrt();
        let slack = fit_slack(&estimate);
        let nondecreasing = match (rows.last(), estimate.sigma_hat) {
            (None, Some(_)) => true,
            (Some(prev), Some(s)) => prev.estimate.sigma_hat.is_some_and(|q| s + slack >= q - prev.slack),
            (_, None) => false,
        };
        rows.push(RadiusRow {
            t: state.t,
            holds: growth.is_some_and(|g| g >= required),
            estimate,
            growth,
            required,
            slack,
            nondecreasing,
        });
    }
    RadiusGrowthReport {
        sigma0,
        c0,
        margin,
        initial,
        all_hold: !rows.is_empty() && rows.iter().all(|r| r.holds),
        monotone: rows.iter().all(|r| r.nondecreasing),
        rows,
    }
}

/// Bisection settings for the largest converging horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    pub amplitudes: Vec<f64>,
    /// Search interval for the first amplitude.
    pub first_bracket: [f64; 2],
    /// Later amplitudes search `[T̂/w, T̂·w]` around the power-law prediction `T̂`.
    pub bracket_width: f64,
    /// Halvings of the logarithmic bracket.
    pub steps: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self { amplitudes: vec![1.0, 2.0, 4.0, 8.0], first_bracket: [0.02, 20.0], bracket_width: 8.0, steps: 9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub amplitude: f64,
    /// Largest horizon found to converge.
    pub horizon: f64,
    /// Smallest horizon found to fail.
    pub failed_at: f64,
    /// `T · A^{2/δ}`
    pub scaled: f64,
    pub data_norm_delta: f64,
    pub iterations: usize,
    /// The answer sits on an end of the search interval.
    pub at_bracket_edge: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub delta: f64,
    pub exponent: f64,
    pub rows: Vec<ScalingRow>,
    /// `max/min` of `T · A^{2/δ}`.
    pub spread: f64,
    /// Least-squares slope of `ln T` against `ln A`.
    pub fitted_exponent: f64,
}

/// Largest converging horizon `T(A)` for the data `A · shape`.
pub fn existence_scaling(
    params: &ModelParams,
    lat: &Arc<FrequencyLattice>,
    cfg: &SolverConfig,
    shape: &FlowState,
    sc: &ScalingConfig,
) -> Result<ScalingReport> {
    let ok = !sc.amplitudes.is_empty()
        && sc.amplitudes.iter().all(|&a| a > 0.0)
        && sc.first_bracket[0] > 0.0
        && sc.first_bracket[1] > sc.first_bracket[0]
        && sc.bracket_width > 1.0
        && sc.steps > 0;
    if !ok {
        return Err(NskqError::InvalidConfig("bad scaling search settings".into()));
    }
    let exponent = 2.0 / cfg.delta;
    let mut rows: Vec<ScalingRow> = Vec::new();
    for &amp in &sc.amplitudes {
        let data = shape.scaled(amp);
        let (lo0, hi0) = match rows.last() {
            None => (sc.first_bracket[0], sc.first_bracket[1]),
            Some(prev) => {
                let guess = prev.horizon * (prev.amplitude / amp).powf(exponent);
                (guess / sc.bracket_width, guess * sc.bracket_width)
            }
        };
        let (mut lo, mut hi) = (lo0.ln(), hi0.ln());
        let mut iterations = 0;
        let mut any_pass = false;
        let mut any_fail = false;
        for _ in 0..sc.steps {
            let mid = 0.5 * (lo + hi);
            let run = SolverConfig { horizon: mid.exp(), ..cfg.clone() };
            let out = DuhamelSolver::new(*params, run, lat)?.picard_solve(&data, Mode::Plain, None)?;
            iterations += out.iterations();
            if out.converged() {
                lo = mid;
                any_pass = true;
            } else {
                hi = mid;
                any_fail = true;
            }
        }
        let horizon = lo.exp();
        rows.push(ScalingRow {
            amplitude: amp,
            horizon,
            failed_at: hi.exp(),
            scaled: horizon * amp.powf(exponent),
            data_norm_delta: crate::spectral::norms::data_norm_shifted(&data, cfg.delta)?,
            iterations,
            at_bracket_edge: !(any_pass && any_fail),
        });
    }
    let (mn, mx) = rows.iter().fold((f64::INFINITY, 0.0f64), |(a, b), r| (a.min(r.scaled), b.max(r.scaled)));
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.amplitude.ln(), r.horizon.ln())).collect();
    Ok(ScalingReport { delta: cfg.delta, exponent, spread: mx / mn, fitted_exponent: -slope(&pts), rows })
}

fn slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 {
        return f64::NAN;
    }
    let m = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0 / m, b + p.1 / m));
    let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    num / den
}

/// Solves up to the largest bootstrap horizon, with a node at each horizon,
/// and evaluates the bootstrap report on the result.
pub fn bootstrap_experiment(
    params: &ModelParams,
    lat: &Arc<FrequencyLattice>,
    cfg: &SolverConfig,
    data: &FlowState,
    boot: &BootstrapConfig,
) -> Result<(SolveOutcome, BootstrapReport)> {
    let top = boot.horizons.iter().copied().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Err(NskqError::InvalidConfig("bootstrap needs at least one horizon".into()));
    }
    let run = SolverConfig { horizon: top, ..cfg.clone() };
    let out = solve_sampled(params, lat, &run, data, &boot.horizons, Mode::Plain)?;
    let report = check_bootstrap(&out.trajectory, data, params.c0, boot)?;
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::LatticeSpec;

    #[test]
    fn semigroup_report_is_tight() {
        let r = semigroup_agreement(&ModelParams::default(), 2, 50, 1).unwrap();
        assert!(r.max_semigroup_err < 1e-12 && r.max_dense_err < 1e-10, "{r:?}");
    }

    #[test]
    fn oracle_and_fast_agree_on_small_lattice() {
        let lat = LatticeSpec::new(2, 8, 2.0 * std::f64::consts::PI).build().unwrap();
        let r = nonlinear_agreement(&ModelParams::default(), &lat, 3, DuContraction::Transpose).unwrap();
        assert!(r.max_rel.iter().all(|&e| e < 1e-12), "{r:?}");
    }

    #[test]
    fn radius_rows_flag_missing_estimates() {
        let lat = LatticeSpec::new(2, 8, 2.0 * std::f64::consts::PI).build().unwrap();
        let traj = Trajectory::zeros(&lat, &[0.5, 1.0]).unwrap();
        let r = radius_growth(&traj, &FlowState::zeros(&lat, 0.0), 0.5, 0.38, 0.8, &[0.5, 1.0], 1.0);
        assert!(!r.all_hold && !r.monotone);
        assert!(r.rows.iter().all(|row| row.growth.is_none()));
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [1.0f64, 2.0, 4.0].iter().map(|a| (a.ln(), (5.0 * a.powf(-3.0)).ln())).collect();
        assert!((slope(&pts) + 3.0).abs() < 1e-12);
    }
}
