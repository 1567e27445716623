use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{NskqError, Result};

/// Size parameters of a frequency lattice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    /// Spatial dimension `d`.
    pub dim: usize,
    /// Modes per axis `N` (even).
    pub modes: usize,
    /// Period length `L` of the torus.
    pub period: f64,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self {
            dim: 2,
            modes: 128,
            period: 2.0 * PI,
        }
    }
}

impl LatticeSpec {
    pub fn new(dim: usize, modes: usize, period: f64) -> Self {
        Self { dim, modes, period }
    }

    pub fn build(&self) -> Result<Arc<FrequencyLattice>> {
        FrequencyLattice::new(self.dim, self.modes, self.period).map(Arc::new)
    }
}

/// Truncated frequency lattice `(2π/L)·k`, `k ∈ [-N/2, N/2)^d`.
///
/// Coefficients are stored row-major (last axis fastest) in FFT order: the
/// per-axis slot `j` holds wavenumber `j` for `j < N/2` and `j - N` otherwise.
/// Modes carrying the extreme wavenumber `-N/2` on some axis have no partner
/// under negation; they are flagged non-interior and skipped by every norm.
#[derive(Debug)]
pub struct FrequencyLattice {
    dim: usize,
    modes: usize,
    period: f64,
    spacing: f64,
    wavenumbers: Vec<i32>,
    magnitude: Vec<f64>,
    interior: Vec<bool>,
    dealiased: Vec<bool>,
    negated: Vec<usize>,
    shell_of: Vec<u32>,
    shell_radius: Vec<f64>,
}

impl PartialEq for FrequencyLattice {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.modes == other.modes && self.period == other.period
    }
}

impl FrequencyLattice {
    pub fn new(dim: usize, modes: usize, period: f64) -> Result<Self> {
        if !(2..=3).contains(&dim) {
            return Err(NskqError::InvalidConfig(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if modes < 4 || modes % 2 != 0 {
            return Err(NskqError::InvalidConfig(format!(
                "modes per axis must be even and >= 4, got {modes}"
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(NskqError::InvalidConfig(format!(
                "period must be positive, got {period}"
            )));
        }
        let len = modes
            .checked_pow(dim as u32)
            .ok_or_else(|| NskqError::InvalidConfig("lattice too large".into()))?;
        let spacing = 2.0 * PI / period;
        let half = (modes / 2) as i32;
        let keep = ((modes - 1) / 3) as i32;

        let mut wavenumbers = vec![0i32; len * dim];
        let mut magnitude = vec![0.0; len];
        let mut interior = vec![true; len];
        let mut dealiased = vec![true; len];
        let mut negated = vec![0usize; len];
        let mut sq = vec![0i64; len];

        for idx in 0..len {
            let mut rem = idx;
            let mut neg = 0usize;
            let mut stride = 1usize;
            let mut k2 = 0i64;
            for axis in (0..dim).rev() {
                let slot = rem % modes;
                rem /= modes;
                let k = if (slot as i32) < half {
                    slot as i32
                } else {
                    slot as i32 - modes as i32
                };
                wavenumbers[idx * dim + axis] = k;
                if k == -half {
                    interior[idx] = false;
                }
                if k.abs() > keep {
                    dealiased[idx] = false;
                }
                k2 += (k as i64) * (k as i64);
                let neg_slot = (modes - slot) % modes;
                neg += neg_slot * stride;
                stride *= modes;
            }
            if !interior[idx] {
                dealiased[idx] = false;
            }
            negated[idx] = neg;
            sq[idx] = k2;
            magnitude[idx] = spacing * (k2 as f64).sqrt();
        }

        let mut shells: BTreeMap<i64, u32> = BTreeMap::new();
        for (idx, &k2) in sq.iter().enumerate() {
            if interior[idx] {
                shells.entry(k2).or_insert(0);
            }
        }
        let mut shell_radius = Vec::with_capacity(shells.len());
        for (i, (k2, slot)) in shells.iter_mut().enumerate() {
            *slot = i as u32;
            shell_radius.push(spacing * (*k2 as f64).sqrt());
        }
        let shell_of = sq
            .iter()
            .map(|k2| shells.get(k2).copied().unwrap_or(u32::MAX))
            .collect();

        Ok(Self {
            dim,
            modes,
            period,
            spacing,
            wavenumbers,
            magnitude,
            interior,
            dealiased,
            negated,
            shell_of,
            shell_radius,
        })
    }

    pub fn spec(&self) -> LatticeSpec {
        LatticeSpec::new(self.dim, self.modes, self.period)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    /// Frequency spacing `2π/L`.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total number of lattice points `N^d`.
    pub fn len(&self) -> usize {
        self.magnitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitude.is_empty()
    }

    /// Integer wavenumber vector of a mode.
    pub fn wavenumber(&self, idx: usize) -> &[i32] {
        &self.wavenumbers[idx * self.dim..(idx + 1) * self.dim]
    }

    /// Component `axis` of the frequency `ξ` of a mode.
    #[inline]
    pub fn xi(&self, idx: usize, axis: usize) -> f64 {
        self.spacing * self.wavenumbers[idx * self.dim + axis] as f64
    }

    pub fn xi_vec(&self, idx: usize) -> Vec<f64> {
        (0..self.dim).map(|a| self.xi(idx, a)).collect()
    }

    /// `|ξ|` of a mode.
    #[inline]
    pub fn magnitude(&self, idx: usize) -> f64 {
        self.magnitude[idx]
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitude
    }

    /// False for modes carrying the unpaired extreme wavenumber.
    #[inline]
    pub fn is_interior(&self, idx: usize) -> bool {
        self.interior[idx]
    }

    /// True for modes kept by the two-thirds rule (`max |k_i| <= (N-1)/3`).
    #[inline]
    pub fn is_dealiased(&self, idx: usize) -> bool {
        self.dealiased[idx]
    }

    /// Largest wavenumber kept by the two-thirds rule.
    pub fn dealias_cutoff(&self) -> usize {
        (self.modes - 1) / 3
    }

    /// Index of the mode `-ξ`.
    #[inline]
    pub fn negated(&self, idx: usize) -> usize {
        self.negated[idx]
    }

    /// Index of the lattice point with integer wavenumber `k`, if present.
    pub fn index_of(&self, k: &[i32]) -> Option<usize> {
        if k.len() != self.dim {
            return None;
        }
        let half = (self.modes / 2) as i32;
        let mut idx = 0usize;
        for &ki in k {
            if ki < -half || ki >= half {
                return None;
            }
            let slot = if ki < 0 { ki + self.modes as i32 } else { ki } as usize;
            idx = idx * self.modes + slot;
        }
        Some(idx)
    }

    /// Shell index (distinct `|k|^2`) of an interior mode.
    #[inline]
    pub fn shell_of(&self, idx: usize) -> Option<usize> {
        let s = self.shell_of[idx];
        (s != u32::MAX).then_some(s as usize)
    }

    /// Radii of the distinct interior shells, ascending; shell 0 is the origin.
    pub fn shell_radii(&self) -> &[f64] {
        &self.shell_radius
    }

    /// Largest interior `|ξ|`.
    pub fn max_magnitude(&self) -> f64 {
        self.shell_radius.last().copied().unwrap_or(0.0)
    }

    pub fn zero_index(&self) -> usize {
        0
    }

    pub fn same_as(&self, other: &FrequencyLattice) -> bool {
        std::ptr::eq(self, other) || self == other
    }
}
