use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::constants::{BilinearConstants, ConstantsLedger};
use super::grid::time_grid;
use super::operator::{pack, unpack, DuhamelOperator, Packed};
use crate::error::{NskqError, Result};
use crate::nonlinear::{compute_all, Method, ProductEngine};
use crate::params::{ModelParams, SolverConfig};
use crate::spectral::norms::{data_norm, data_norm_shifted, x_norm, y_norm};
use crate::spectral::{FlowState, FrequencyLattice, Trajectory};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Plain,
    /// Same iteration, with `Y_T` norms tracked and used for the residual.
    Analytic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    Diverged,
    MaxIterations,
}

/// Per-iteration diagnostics of the Picard sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `‖x_{n+1} - x_n‖` in the iteration norm (`Y_T` in analytic mode when finite).
    pub increment: f64,
    pub x_norm: f64,
    pub y_norm: Option<f64>,
    /// `‖x_{n+1} - x_n‖ / ‖x_n - x_{n-1}‖` when the previous step is above noise.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Last finite iterate.
    pub trajectory: Trajectory,
    pub history: Vec<IterationRecord>,
    pub ledger: ConstantsLedger,
}

impl SolveOutcome {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

/// Picard iteration of the Duhamel map on a fixed time grid.
#[derive(Debug)]
pub struct DuhamelSolver {
    params: ModelParams,
    cfg: SolverConfig,
    lattice: Arc<FrequencyLattice>,
    grid: Vec<f64>,
    op: DuhamelOperator,
    engine: ProductEngine,
}

impl DuhamelSolver {
    pub fn new(params: ModelParams, cfg: SolverConfig, lattice: &Arc<FrequencyLattice>) -> Result<Self> {
        cfg.validate(lattice.dim())?;
        let grid = time_grid(&cfg.grid, cfg.horizon)?;
        let op = DuhamelOperator::new(params, lattice, &grid, cfg.quad_nodes);
        let engine = ProductEngine::new(lattice, Method::Fast)?;
        Ok(Self { params, cfg, lattice: Arc::clone(lattice), grid, op, engine })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn lattice(&self) -> &Arc<FrequencyLattice> {
        &self.lattice
    }

    /// Node times in `]0, T]`.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn operator(&self) -> &DuhamelOperator {
        &self.op
    }

    pub fn engine(&self) -> &ProductEngine {
        &self.engine
    }

    fn check_data(&self, data: &FlowState) -> Result<()> {
        data.check()?;
        if !data.lattice().same_as(&self.lattice) {
            return Err(NskqError::LatticeMismatch("data not on the solver lattice".into()));
        }
        Ok(())
    }

    fn to_trajectory(&self, nodes: &[Packed], real: bool) -> Result<Trajectory> {
        Trajectory::new(
            nodes
                .iter()
                .zip(&self.grid)
                .map(|(p, &t)| unpack(p, &self.lattice, t, real))
                .collect(),
        )
    }

    fn linear_nodes(&self, data: &FlowState) -> Vec<Packed> {
        self.op.linear(&pack(data))
    }

    /// `t ↦ W(t)U₀` on the solver grid.
    pub fn linear_trajectory(&self, data: &FlowState) -> Result<Trajectory> {
        self.check_data(data)?;
        self.to_trajectory(&self.linear_nodes(data), real_flag(data))
    }

    /// `(f, g1 + g2 + g3)` at one state, packed.
    pub fn forcing(&self, state: &FlowState) -> Result<Packed> {
        let out = compute_all(&self.engine, state, &self.params, self.cfg.contraction)?;
        let forced = FlowState { a: out.f_hat, u: out.g_hat, t: state.t };
        Ok(pack(&forced))
    }

    fn duhamel(&self, data: &FlowState, nodes: &[&FlowState]) -> Result<Vec<Packed>> {
        let mut forcing = Vec::with_capacity(nodes.len() + 1);
        forcing.push(self.forcing(data)?);
        for s in nodes {
            forcing.push(self.forcing(s)?);
        }
        Ok(self.op.integrate(&forcing))
    }

    fn phi_nodes(&self, data: &FlowState, linear: &[Packed], x: &[&FlowState]) -> Result<Vec<Packed>> {
        if !self.cfg.nonlinear {
            return Ok(linear.to_vec());
        }
        let integral = self.duhamel(data, x)?;
        Ok(linear
            .iter()
            .zip(integral)
            .map(|(l, mut i)| {
                i.iter_mut().zip(l).for_each(|(z, w)| *z += w);
                i
            })
            .collect())
    }

    /// `Φ(x)(t) = W(t)U₀ + ∫₀ᵗ W(t - s)(f, g)(x(s)) ds` at every grid node.
    pub fn apply_phi(&self, traj: &Trajectory, data: &FlowState) -> Result<Trajectory> {
        self.check_data(data)?;
        if traj.len() != self.grid.len() || traj.times().iter().zip(&self.grid).any(|(a, b)| a != b) {
            return Err(NskqError::InvalidConfig("trajectory is not on the solver grid".into()));
        }
        let linear = self.linear_nodes(data);
        let x: Vec<&FlowState> = traj.states().iter().collect();
        self.to_trajectory(&self.phi_nodes(data, &linear, &x)?, real_flag(data))
    }

    /// Picard iteration started from the linear evolution.
    ///
    /// Divergence is reported through the status, with the last finite
    /// iterate and the full residual history.
    pub fn picard_solve(
        &self,
        data: &FlowState,
        mode: Mode,
        constants: Option<&BilinearConstants>,
    ) -> Result<SolveOutcome> {
        self.check_data(data)?;
        let real = real_flag(data);
        let p = self.cfg.p;
        let horizon = self.cfg.horizon;
        let c0 = self.params.c0;
        let linear = self.linear_nodes(data);
        let mut x = self.to_trajectory(&linear, real)?;
        let linear_x = x_norm(&x, p, horizon)?;
        let mut history: Vec<IterationRecord> = Vec::new();
        let mut growth = 0usize;
        let mut status = SolveStatus::MaxIterations;
        let mut max_norm = linear_x;
        for iteration in 1..=self.cfg.max_iter {
            let states: Vec<&FlowState> = x.states().iter().collect();
            let next_nodes = self.phi_nodes(data, &linear, &states)?;
            if next_nodes.iter().flatten().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
                status = SolveStatus::Diverged;
                break;
            }
            let next = self.to_trajectory(&next_nodes, real)?;
            let diff = next.difference(&x)?;
            let x_inc = x_norm(&diff, p, horizon)?;
            let xn = x_norm(&next, p, horizon)?;
            let (yn, y_inc) = match mode {
                Mode::Plain => (None, None),
                Mode::Analytic => match (y_norm(&next, p, horizon, c0), y_norm(&diff, p, horizon, c0)) {
                    (Ok(a), Ok(b)) => (Some(a), Some(b)),
                    (Err(NskqError::Saturation { .. }), _) | (_, Err(NskqError::Saturation { .. })) => (None, None),
                    (Err(e), _) | (_, Err(e)) => return Err(e),
                },
            };
            let (inc, size) = match (y_inc, yn) {
                (Some(i), Some(n)) => (i, n),
                _ => (x_inc, xn),
            };
            let prev = history.last().map(|r| r.increment);
            let ratio = prev.filter(|&q| q > 1e-12 * size.max(f64::MIN_POSITIVE)).map(|q| inc / q);
            growth = match prev {
                Some(q) if inc > q => growth + 1,
                _ => 0,
            };
            history.push(IterationRecord { iteration, increment: inc, x_norm: xn, y_norm: yn, ratio });
            x = next;
            max_norm = max_norm.max(xn);
            if !(xn.is_finite() && xn < 1e150) || growth >= self.cfg.divergence_window {
                status = SolveStatus::Diverged;
                break;
            }
            if inc <= self.cfg.tol_abs + self.cfg.tol_rel * size {
                status = SolveStatus::Converged;
                break;
            }
        }
        let ledger = ConstantsLedger::assemble(
            constants,
            data_norm(data)?,
            data_norm_shifted(data, self.cfg.delta)?,
            linear_x,
            &self.cfg,
            &history,
            max_norm,
        );
        Ok(SolveOutcome { status, trajectory: x, history, ledger })
    }

    /// Largest coefficient difference between two states, relative to `b`.
    pub fn relative_linf(a: &FlowState, b: &FlowState) -> f64 {
        let scale = b.max_abs();
        if scale == 0.0 {
            return a.max_abs();
        }
        a.max_abs_diff(b) / scale
    }
}

fn real_flag(state: &FlowState) -> bool {
    state.components().all(|c| c.is_real())
}

/// Zero data of the right shape for a lattice.
pub fn zero_data(lattice: &Arc<FrequencyLattice>) -> FlowState {
    FlowState::zeros(lattice, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duhamel::reference::{reference_integrate, ReferenceOptions};
    use crate::params::GridSpec;
    use crate::spectral::{LatticeSpec, SpectralField};
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn setup(n: usize, cfg: SolverConfig) -> DuhamelSolver {
        let lat = LatticeSpec::new(2, n, 2.0 * PI).build().unwrap();
        DuhamelSolver::new(ModelParams::default(), cfg, &lat).unwrap()
    }

    fn single_mode(lat: &Arc<FrequencyLattice>, amp: f64) -> FlowState {
        let mut data = FlowState::zeros(lat, 0.0);
        data.a = SpectralField::single_mode(lat, &[1, 0], Complex64::new(amp, 0.0)).unwrap();
        data.u[1] = SpectralField::single_mode(lat, &[1, 1], Complex64::new(0.0, amp)).unwrap();
        data
    }

    #[test]
    fn zero_data_converges_at_once() {
        let s = setup(8, SolverConfig::default());
        let out = s.picard_solve(&zero_data(s.lattice()), Mode::Plain, None).unwrap();
        assert!(out.converged());
        assert_eq!(out.iterations(), 1);
        assert!(out.trajectory.is_zero());
    }

    #[test]
    fn linear_only_phi_is_the_semigroup() {
        let cfg = SolverConfig { nonlinear: false, ..Default::default() };
        let s = setup(8, cfg);
        let data = single_mode(s.lattice(), 0.5);
        let junk = s.linear_trajectory(&data.scaled(3.0)).unwrap();
        let phi = s.apply_phi(&junk, &data).unwrap();
        for st in phi.states() {
            let exact = crate::linear::evolve_state(st.t, &data, s.params());
            assert!(st.max_abs_diff(&exact) < 1e-13);
        }
    }

    #[test]
    fn converged_solution_is_a_fixed_point() {
        let s = setup(16, SolverConfig::default());
        let data = single_mode(s.lattice(), 0.05);
        let out = s.picard_solve(&data, Mode::Plain, None).unwrap();
        assert!(out.converged(), "{:?}", out.history.last());
        let again = s.apply_phi(&out.trajectory, &data).unwrap();
        let diff = x_norm(&again.difference(&out.trajectory).unwrap(), 3.0, 1.0).unwrap();
        let size = x_norm(&out.trajectory, 3.0, 1.0).unwrap();
        let tol = s.config().tol_abs + s.config().tol_rel * size;
        assert!(diff <= 2.0 * tol, "{diff} vs {tol}");
        assert!(out.history.iter().filter_map(|h| h.ratio).all(|r| r < 1.0));
    }

    #[test]
    fn plain_and_analytic_modes_agree() {
        let s = setup(8, SolverConfig::default());
        let data = single_mode(s.lattice(), 0.05);
        let a = s.picard_solve(&data, Mode::Plain, None).unwrap();
        let b = s.picard_solve(&data, Mode::Analytic, None).unwrap();
        assert!(a.converged() && b.converged());
        assert!(b.history.iter().all(|h| h.y_norm.is_some()));
        for (x, y) in a.trajectory.states().iter().zip(b.trajectory.states()) {
            assert!(x.max_abs_diff(y) <= 1e-8 * x.max_abs().max(1e-300));
        }
    }

    #[test]
    fn large_data_divergence_is_reported() {
        let cfg = SolverConfig { horizon: 1.0, max_iter: 60, ..Default::default() };
        let s = setup(8, cfg);
        let data = single_mode(s.lattice(), 200.0);
        let out = s.picard_solve(&data, Mode::Plain, None).unwrap();
        assert_eq!(out.status, SolveStatus::Diverged);
        assert!(!out.history.is_empty());
    }

    #[test]
    fn one_step_matches_reference_on_short_horizon() {
        let cfg = SolverConfig {
            horizon: 0.1,
            grid: GridSpec { nodes: 24, ratio: 0.7, max_step: Some(0.005), extra: vec![] },
            ..Default::default()
        };
        let s = setup(16, cfg);
        let data = single_mode(s.lattice(), 0.2);
        let out = s.picard_solve(&data, Mode::Plain, None).unwrap();
        assert!(out.converged());
        let reference = reference_integrate(&data, s.params(), &[0.1], &ReferenceOptions::default()).unwrap();
        let err = DuhamelSolver::relative_linf(out.trajectory.last(), reference.trajectory.last());
        assert!(err <= 1e-4, "{err}");
    }
}
