use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{RunConfig, RunMode, VerifyCheck};
use super::data::generate_initial_data;
use super::experiments::{
    bootstrap_experiment, existence_scaling, nonlinear_agreement, radius_growth, reference_agreement,
    semigroup_agreement, small_data_fixed_point, solve_sampled,
};
use crate::analyticity::{estimate_radius, run_inequality_suites, RadiusEstimate};
use crate::duhamel::{measure_bilinear_constants, ConstantsLedger, DuhamelSolver, IterationRecord, ReferenceOptions, SolveStatus};
use crate::error::{NskqError, Result};
use crate::linear::{decay_constant, DecayReport};
use crate::oracles::{beta_sigma_integral, beta_time_integral, verify_convolution, verify_mixed_convolution};
use crate::params::ModelParams;
use crate::spectral::{snapshot, FrequencyLattice, NormReport, Trajectory};

/// Pass thresholds of the `verify` checks.
pub mod thresholds {
    /// Relative spread of `I(ξ)|ξ|^{α+β-d}`.
    pub const CONV_CONSTANCY: f64 = 0.02;
    /// Absolute error of the normalized beta integral.
    pub const BETA_ABS: f64 = 1e-6;
    /// Relative gap between measured and predicted `c0`.
    pub const DECAY_C0_REL: f64 = 0.05;
    pub const SEMIGROUP_REL: f64 = 1e-12;
    pub const DENSE_REL: f64 = 1e-10;
    pub const NONLINEAR_REL: f64 = 1e-12;
    pub const REFERENCE_REL: f64 = 1e-4;
    /// `max/min` of `T(A)·A^{2/δ}`.
    pub const SCALING_SPREAD: f64 = 2.0;
    pub const BOOTSTRAP_MIN_RATIO: f64 = 0.5;
    /// Largest slope of `ln ratio` against `ln T`; a decaying ratio has a
    /// clearly positive slope.
    pub const BOOTSTRAP_MAX_SLOPE: f64 = 0.25;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckVerdict {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckVerdict {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub status: SolveStatus,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub solve: Option<SolveSummary>,
    pub ledger: Option<ConstantsLedger>,
    pub norms: Option<NormReport>,
    pub radius: Vec<RadiusEstimate>,
    pub checks: Vec<CheckVerdict>,
    /// Raw measurements of the experiments, keyed by check name.
    pub details: BTreeMap<String, Value>,
    pub timings: Vec<Timing>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Report plus the data needed for the artifacts.
pub struct RunOutput {
    pub report: RunReport,
    pub trajectory: Option<Trajectory>,
    /// `t, sigma_hat, residual, ratio, H_holds`
    pub radius_rows: Vec<(f64, Option<f64>, f64, Option<f64>, Option<bool>)>,
}

struct Clock {
    start: Instant,
    timings: Vec<Timing>,
}

impl Clock {
    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.timings.push(Timing { stage: stage.to_string(), seconds: (now - self.start).as_secs_f64() });
        self.start = now;
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).unwrap_or(Value::Null)
}

/// Geometric times used for the decay measurement.
pub fn decay_grid() -> Vec<f64> {
    (0..400).map(|k| 1e-5 * 1.05f64.powi(k)).collect()
}

pub fn measure_decay(params: &ModelParams, lat: &FrequencyLattice, y_max: f64) -> Result<DecayReport> {
    decay_constant(params, lat, &decay_grid(), y_max)
}

/// Executes a run without touching the file system.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mut clock = Clock { start: Instant::now(), timings: Vec::new() };
    let lat = cfg.lattice.build()?;
    let mut out = RunOutput {
        report: RunReport {
            config: cfg.clone(),
            solve: None,
            ledger: None,
            norms: None,
            radius: Vec::new(),
            checks: Vec::new(),
            details: BTreeMap::new(),
            timings: Vec::new(),
        },
        trajectory: None,
        radius_rows: Vec::new(),
    };
    let report = &mut out.report;
    match cfg.mode {
        RunMode::Simulate | RunMode::Radius => {
            let data = generate_initial_data(&cfg.data, &lat, cfg.seed)?;
            clock.lap("data");
            let constants = if cfg.bilinear_samples > 0 {
                let solver = DuhamelSolver::new(cfg.params, cfg.solver.clone(), &lat)?;
                let c = measure_bilinear_constants(&solver, cfg.bilinear_samples, cfg.seed, false)?;
                clock.lap("bilinear constants");
                Some(c)
            } else {
                None
            };
            let mut times = cfg.snapshot_times.clone();
            if cfg.mode == RunMode::Radius {
                times.extend(cfg.radius_times());
            }
            let mut solve_cfg = cfg.solver.clone();
            solve_cfg.grid.extra.extend(times);
            let solver = DuhamelSolver::new(cfg.params, solve_cfg, &lat)?;
            let sol = solver.picard_solve(&data, cfg.picard_mode, constants.as_ref())?;
            clock.lap("picard");
            report.checks.push(CheckVerdict::new(
                "picard-converged",
                sol.converged(),
                format!("{:?} after {} iterations", sol.status, sol.iterations()),
            ));
            report.norms = Some(NormReport::compute(&sol.trajectory, cfg.solver.p, cfg.solver.horizon, Some(cfg.params.c0))?);
            report.solve = Some(SolveSummary { status: sol.status, iterations: sol.iterations(), history: sol.history.clone() });
            report.ledger = Some(sol.ledger.clone());
            if let Some(c) = &constants {
                report.details.insert("bilinear-constants".into(), to_value(c));
            }
            if cfg.mode == RunMode::Radius {
                radius_mode(cfg, &lat, &data, &sol.trajectory, &mut out.radius_rows, report)?;
                clock.lap("radius");
            }
            out.trajectory = Some(sol.trajectory);
        }
        RunMode::Bootstrap => {
            let data = generate_initial_data(&cfg.data, &lat, cfg.seed)?;
            let (sol, rep) = bootstrap_experiment(&cfg.params, &lat, &cfg.solver, &data, &cfg.bootstrap)?;
            clock.lap("bootstrap");
            report.checks.push(CheckVerdict::new(
                "picard-converged",
                sol.converged(),
                format!("{:?} after {} iterations", sol.status, sol.iterations()),
            ));
            report.checks.push(bootstrap_verdict(rep.min_ratio, rep.trend_slope));
            for row in &rep.rows {
                out.radius_rows.push((row.horizon, row.radius.sigma_hat, row.radius.residual, row.ratio, row.h_holds));
                report.radius.push(row.radius.clone());
            }
            let top = sol.trajectory.last().t;
            report.norms = Some(NormReport::compute(&sol.trajectory, cfg.solver.p, top, Some(cfg.params.c0))?);
            report.solve = Some(SolveSummary { status: sol.status, iterations: sol.iterations(), history: sol.history.clone() });
            report.ledger = Some(sol.ledger.clone());
            report.details.insert("bootstrap".into(), to_value(&rep));
            out.trajectory = Some(sol.trajectory);
        }
        RunMode::Verify => {
            let check = cfg.check.ok_or_else(|| NskqError::InvalidConfig("verify mode needs a check".into()))?;
            let (verdict, detail) = verify(cfg, check, &lat, &mut out.radius_rows)?;
            clock.lap(&check.name());
            report.checks.push(verdict);
            report.details.insert(check.name(), detail);
        }
    }
    report.timings = clock.timings;
    Ok(out)
}

fn radius_mode(
    cfg: &RunConfig,
    lat: &std::sync::Arc<FrequencyLattice>,
    data: &crate::spectral::FlowState,
    traj: &Trajectory,
    rows: &mut Vec<(f64, Option<f64>, f64, Option<f64>, Option<bool>)>,
    report: &mut RunReport,
) -> Result<()> {
    let times = cfg.radius_times();
    let weight = cfg.radius_weight();
    match cfg.sigma0() {
        Some(sigma0) => {
            let c0 = measure_decay(&cfg.params, lat, cfg.checks.decay_y_max)?.c0_measured;
            let rep = radius_growth(traj, data, sigma0, c0, cfg.radius.margin, &times, weight);
            report.checks.push(radius_verdict(rep.all_hold, rep.monotone));
            for r in &rep.rows {
                rows.push((r.t, r.estimate.sigma_hat, r.estimate.residual, r.growth.map(|g| g / r.required), None));
                report.radius.push(r.estimate.clone());
            }
            report.details.insert("radius-growth".into(), to_value(&rep));
        }
        None => {
            for &t in &times {
                let e = estimate_radius(traj.nearest(t), weight);
                rows.push((e.t, e.sigma_hat, e.residual, None, None));
                report.radius.push(e);
            }
        }
    }
    Ok(())
}

fn radius_verdict(all_hold: bool, monotone: bool) -> CheckVerdict {
    CheckVerdict::new(
        "radius-growth",
        all_hold && monotone,
        format!("growth bound held at every time: {all_hold}; nondecreasing within residual: {monotone}"),
    )
}

fn bootstrap_verdict(min_ratio: Option<f64>, slope: Option<f64>) -> CheckVerdict {
    let passed = min_ratio.is_some_and(|r| r >= thresholds::BOOTSTRAP_MIN_RATIO)
        && slope.is_some_and(|b| b <= thresholds::BOOTSTRAP_MAX_SLOPE);
    CheckVerdict::new(
        "bootstrap-ratio",
        passed,
        format!(
            "min ratio {min_ratio:?} (>= {}), trend slope {slope:?} (<= {})",
            thresholds::BOOTSTRAP_MIN_RATIO,
            thresholds::BOOTSTRAP_MAX_SLOPE
        ),
    )
}

/// `B(1-2/p, 1/p)` from the Gamma function.
pub fn beta_reference(p: f64) -> f64 {
    use statrs::function::gamma::gamma;
    gamma(1.0 - 2.0 / p) * gamma(1.0 / p) / gamma(1.0 - 1.0 / p)
}

/// Constant of `∫|ξ-η|^{-α}|η|^{-β}dη = K|ξ|^{d-α-β}` from the Riesz
/// composition formula.
pub fn riesz_reference(d: usize, alpha: f64, beta: f64) -> f64 {
    use statrs::function::gamma::gamma;
    let d = d as f64;
    std::f64::consts::PI.powf(0.5 * d) * gamma(0.5 * (d - alpha)) * gamma(0.5 * (d - beta)) * gamma(0.5 * (alpha + beta - d))
        / (gamma(0.5 * alpha) * gamma(0.5 * beta) * gamma(d - 0.5 * (alpha + beta)))
}

fn verify(
    cfg: &RunConfig,
    check: VerifyCheck,
    lat: &std::sync::Arc<FrequencyLattice>,
    radius_rows: &mut Vec<(f64, Option<f64>, f64, Option<f64>, Option<bool>)>,
) -> Result<(CheckVerdict, Value)> {
    let name = check.name();
    let d = cfg.lattice.dim;
    let p = cfg.solver.p;
    let s = &cfg.checks;
    Ok(match check {
        VerifyCheck::LemmaConv => {
            // Direction turns with the sample so isotropy is exercised too.
            let xi: Vec<Vec<f64>> = s
                .xi_magnitudes
                .iter()
                .enumerate()
                .map(|(k, &m)| {
                    let th = 0.37 * k as f64;
                    let mut v = vec![0.0; d];
                    v[0] = m * th.cos();
                    v[1] = m * th.sin();
                    v
                })
                .collect();
            let mixed = verify_mixed_convolution(d, p, &xi)?;
            let g = d as f64 - 1.0 + 2.0 / p;
            let paired = verify_convolution(d, g, g, &xi, 1e-10)?;
            let reference = [riesz_reference(d, mixed.alpha, mixed.beta), riesz_reference(d, g, g)];
            let gaps = [mixed.constant / reference[0] - 1.0, paired.constant / reference[1] - 1.0];
            let passed = mixed.passed(thresholds::CONV_CONSTANCY)
                && paired.passed(thresholds::CONV_CONSTANCY)
                && gaps.iter().all(|g| g.abs() <= thresholds::CONV_CONSTANCY);
            let detail = format!(
                "max deviation {:.3e} and {:.3e}, gap to closed form {:.3e} and {:.3e} (<= {})",
                mixed.max_deviation,
                paired.max_deviation,
                gaps[0],
                gaps[1],
                thresholds::CONV_CONSTANCY
            );
            (
                CheckVerdict::new(&name, passed, detail),
                json!({"mixed": mixed, "paired": paired, "closed_form": reference, "relative_gap": gaps}),
            )
        }
        VerifyCheck::Beta => {
            let value = beta_sigma_integral(p)?;
            let reference = beta_reference(p);
            let samples: Vec<_> = [(0.5, 0.3, 2.0), (1.0, 1.0, 1.0), (0.01, 0.5, 10.0)]
                .iter()
                .map(|&(t, delta, xi)| beta_time_integral(p, t, delta, xi))
                .collect::<Result<_>>()?;
            let bounded = samples.iter().all(|b| b.integral <= b.bound * (1.0 + 1e-12));
            let err = (value - reference).abs();
            let passed = err <= thresholds::BETA_ABS && bounded;
            let detail = format!("integral {value:.12} vs Gamma form {reference:.12}, bound respected: {bounded}");
            (
                CheckVerdict::new(&name, passed, detail),
                json!({"integral": value, "reference": reference, "abs_error": err, "time_integrals": samples}),
            )
        }
        VerifyCheck::Decay => {
            let rep = measure_decay(&cfg.params, lat, s.decay_y_max)?;
            let rel = (rep.c0_measured - rep.c0_spectral).abs() / rep.c0_spectral;
            let passed = rel <= thresholds::DECAY_C0_REL && rep.c_measured.is_finite();
            let detail = format!("c0 {:.5} vs {:.5}, C = {:.4}", rep.c0_measured, rep.c0_spectral, rep.c_measured);
            (CheckVerdict::new(&name, passed, detail), to_value(&rep))
        }
        VerifyCheck::Semigroup => {
            let rep = semigroup_agreement(&cfg.params, d, s.semigroup_samples, cfg.seed)?;
            let passed = rep.max_semigroup_err <= thresholds::SEMIGROUP_REL && rep.max_dense_err <= thresholds::DENSE_REL;
            let detail = format!("composition {:.2e}, dense {:.2e}", rep.max_semigroup_err, rep.max_dense_err);
            (CheckVerdict::new(&name, passed, detail), to_value(&rep))
        }
        VerifyCheck::Nonlinear => {
            let rep = nonlinear_agreement(&cfg.params, lat, s.nonlinear_seeds, cfg.solver.contraction)?;
            let worst = rep.max_rel.iter().copied().fold(0.0, f64::max);
            let detail = format!("worst relative difference {worst:.2e} over f, g1, g2, g3");
            (CheckVerdict::new(&name, worst <= thresholds::NONLINEAR_REL, detail), to_value(&rep))
        }
        VerifyCheck::SmallData => {
            let rep = small_data_fixed_point(
                &cfg.params,
                lat,
                &cfg.solver,
                cfg.bilinear_samples.max(1),
                cfg.seed,
                s.small_data_fraction,
            )?;
            let l = rep.ledger.contraction_sup;
            let passed = rep.converged && l.is_some_and(|l| l < 1.0) && rep.solution_x_norm <= rep.bound;
            let detail = format!("converged {}, L = {l:?}, x norm {:.3e} vs {:.3e}", rep.converged, rep.solution_x_norm, rep.bound);
            (CheckVerdict::new(&name, passed, detail), to_value(&rep))
        }
        VerifyCheck::Reference => {
            let data = generate_initial_data(&cfg.data, lat, cfg.seed)?;
            let rep = reference_agreement(&cfg.params, lat, &cfg.solver, &data, &ReferenceOptions::default())?;
            let passed = rep.converged && rep.rel_linf <= thresholds::REFERENCE_REL;
            let detail = format!("relative sup difference {:.3e} at t = {}", rep.rel_linf, rep.t);
            (CheckVerdict::new(&name, passed, detail), to_value(&rep))
        }
        VerifyCheck::RadiusGrowth => {
            let sigma0 = cfg
                .sigma0()
                .ok_or_else(|| NskqError::InvalidConfig("radius growth needs sigma0 or exp_tail data".into()))?;
            let data = generate_initial_data(&cfg.data, lat, cfg.seed)?;
            let times = cfg.radius_times();
            let sol = solve_sampled(&cfg.params, lat, &cfg.solver, &data, &times, cfg.picard_mode)?;
            let c0 = measure_decay(&cfg.params, lat, s.decay_y_max)?.c0_measured;
            let rep = radius_growth(&sol.trajectory, &data, sigma0, c0, cfg.radius.margin, &times, cfg.radius_weight());
            for r in &rep.rows {
                radius_rows.push((r.t, r.estimate.sigma_hat, r.estimate.residual, r.growth.map(|g| g / r.required), None));
            }
            let mut v = radius_verdict(rep.all_hold && sol.converged(), rep.monotone);
            v.name = name;
            (v, to_value(&rep))
        }
        VerifyCheck::Scaling => {
            let shape = generate_initial_data(&cfg.data, lat, cfg.seed)?;
            let rep = existence_scaling(&cfg.params, lat, &cfg.solver, &shape, &cfg.scaling)?;
            let edges = rep.rows.iter().any(|r| r.at_bracket_edge);
            let passed = rep.spread <= thresholds::SCALING_SPREAD && !edges;
            let detail = format!(
                "spread of T·A^(2/delta) {:.3} (<= {}), fitted exponent {:.3} vs {:.3}, bracket edge hit: {edges}",
                rep.spread,
                thresholds::SCALING_SPREAD,
                rep.fitted_exponent,
                rep.exponent
            );
            (CheckVerdict::new(&name, passed, detail), to_value(&rep))
        }
        VerifyCheck::Inequalities => {
            let rep = run_inequality_suites(s.inequality_samples, cfg.seed);
            let violations: usize = rep.suites().iter().map(|s| s.violations).sum();
            let detail = format!("{violations} violations over {} suites", rep.suites().len());
            (CheckVerdict::new(&name, rep.passed(), detail), to_value(&rep))
        }
    })
}

/// Formats a float with 17 significant digits; missing values stay empty.
pub fn fmt_float(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

impl RunOutput {
    pub fn norms_csv(&self) -> String {
        let mut s = String::from("t,pm_a,pm_u\n");
        if let Some(n) = &self.report.norms {
            for i in 0..n.times.len() {
                let _ = writeln!(
                    s,
                    "{},{},{}",
                    fmt_float(Some(n.times[i])),
                    fmt_float(Some(n.pm_a[i])),
                    fmt_float(Some(n.pm_u[i]))
                );
            }
        }
        s
    }

    pub fn radius_csv(&self) -> String {
        let mut s = String::from("t,sigma_hat,residual,ratio,H_holds\n");
        for &(t, sigma, residual, ratio, h) in &self.radius_rows {
            let h = h.map(|b| b.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{h}", fmt_float(Some(t)), fmt_float(sigma), fmt_float(Some(residual)), fmt_float(ratio));
        }
        s
    }

    /// Writes `run.json`, `norms.csv`, `radius.csv` and `snapshots/`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&self.report)?)?;
        std::fs::write(dir.join("norms.csv"), self.norms_csv())?;
        std::fs::write(dir.join("radius.csv"), self.radius_csv())?;
        if let Some(traj) = &self.trajectory {
            let snaps = dir.join("snapshots");
            std::fs::create_dir_all(&snaps)?;
            snapshot::save(traj.last(), &snaps.join("final.snap"))?;
            for (i, &t) in self.report.config.snapshot_times.iter().enumerate() {
                snapshot::save(traj.nearest(t), &snaps.join(format!("state_{i:03}.snap")))?;
            }
        }
        Ok(())
    }
}

/// Runs and writes the artifacts to `config.output` when set.
pub fn execute(cfg: &RunConfig) -> Result<RunReport> {
    let out = run(cfg)?;
    if let Some(dir) = &cfg.output {
        out.write(dir)?;
    }
    Ok(out.report)
}
