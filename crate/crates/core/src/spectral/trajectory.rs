use std::sync::Arc;

use super::field::FlowState;
use super::lattice::FrequencyLattice;
use crate::error::{NskqError, Result};

/// Flow states on a strictly increasing time grid over one lattice.
#[derive(Clone, Debug)]
pub struct Trajectory {
    states: Vec<FlowState>,
}

impl Trajectory {
    pub fn new(states: Vec<FlowState>) -> Result<Self> {
        let first = states.first().ok_or(NskqError::EmptyTrajectory)?;
        let lattice = Arc::clone(first.lattice());
        for s in &states {
            s.check()?;
            if !s.lattice().same_as(&lattice) {
                return Err(NskqError::LatticeMismatch(
                    "trajectory states live on different lattices".into(),
                ));
            }
        }
        if let Some(w) = states.windows(2).find(|w| w[1].t <= w[0].t) {
            return Err(NskqError::InvalidConfig(format!(
                "time grid not strictly increasing at t = {}",
                w[1].t
            )));
        }
        Ok(Self { states })
    }

    /// Zero states on the given times.
    pub fn zeros(lattice: &Arc<FrequencyLattice>, times: &[f64]) -> Result<Self> {
        Self::new(times.iter().map(|&t| FlowState::zeros(lattice, t)).collect())
    }

    pub fn lattice(&self) -> &Arc<FrequencyLattice> {
        self.states[0].lattice()
    }

    pub fn states(&self) -> &[FlowState] {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut [FlowState] {
        &mut self.states
    }

    pub fn into_states(self) -> Vec<FlowState> {
        self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &FlowState {
        self.states.last().expect("trajectory is never empty")
    }

    /// State at the node whose time is closest to `t`.
    pub fn nearest(&self, t: f64) -> &FlowState {
        self.states
            .iter()
            .min_by(|x, y| (x.t - t).abs().total_cmp(&(y.t - t).abs()))
            .expect("trajectory is never empty")
    }

    /// Node-wise difference `self - other`.
    pub fn difference(&self, other: &Trajectory) -> Result<Trajectory> {
        if self.len() != other.len() {
            return Err(NskqError::InvalidConfig(
                "trajectories have different grids".into(),
            ));
        }
        let mut out = self.clone();
        for (s, o) in out.states.iter_mut().zip(&other.states) {
            s.axpy(-1.0, o)?;
        }
        Ok(out)
    }

    pub fn is_zero(&self) -> bool {
        self.states.iter().all(FlowState::is_zero)
    }
}
