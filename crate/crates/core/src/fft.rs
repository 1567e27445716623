use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Separable `d`-dimensional FFT on `N^d` row-major arrays.
pub struct FftNd {
    dim: usize,
    modes: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("dim", &self.dim).field("modes", &self.modes).finish()
    }
}

impl FftNd {
    pub fn new(dim: usize, modes: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            dim,
            modes,
            forward: planner.plan_fft_forward(modes),
            inverse: planner.plan_fft_inverse(modes),
        }
    }

    /// Unnormalized forward transform `Σ_x f(x) e^{-ik·x}`.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Unnormalized inverse transform `Σ_k f̂(k) e^{ik·x}`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
    }

    fn run(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.modes;
        debug_assert_eq!(data.len(), n.pow(self.dim as u32));
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        // Last axis: contiguous rows, transformed in one batch.
        plan.process_with_scratch(data, &mut scratch);
        // Other axes: gather every line into a contiguous batch, then scatter back.
        let mut lines = vec![Complex64::new(0.0, 0.0); data.len()];
        for axis in 0..self.dim - 1 {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            let block = stride * n;
            let starts = (0..data.len()).step_by(block).flat_map(|base| (0..stride).map(move |o| base + o));
            for (line, start) in lines.chunks_exact_mut(n).zip(starts.clone()) {
                for (j, v) in line.iter_mut().enumerate() {
                    *v = data[start + j * stride];
                }
            }
            plan.process_with_scratch(&mut lines, &mut scratch);
            for (line, start) in lines.chunks_exact(n).zip(starts) {
                for (j, v) in line.iter().enumerate() {
                    data[start + j * stride] = *v;
                }
            }
        }
    }
}
