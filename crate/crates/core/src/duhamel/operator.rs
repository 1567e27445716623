use std::borrow::Cow;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::linear::BlockPropagator;
use crate::params::ModelParams;
use crate::quadrature::gauss_legendre;
use crate::spectral::{FlowState, FrequencyLattice, SpectralField};

/// Interleaved coefficients: entry `idx * (d + 1) + c` holds component `c`
/// (`0` for `a`, `1 + j` for `u_j`) of lattice mode `idx`.
pub type Packed = Vec<Complex64>;

pub fn pack(state: &FlowState) -> Packed {
    let lat = state.lattice();
    let w = lat.dim() + 1;
    let mut out = vec![Complex64::new(0.0, 0.0); lat.len() * w];
    for (c, comp) in state.components().enumerate() {
        for (idx, z) in comp.coeffs().iter().enumerate() {
            out[idx * w + c] = *z;
        }
    }
    out
}

pub fn unpack(buf: &[Complex64], lattice: &Arc<FrequencyLattice>, t: f64, real: bool) -> FlowState {
    let w = lattice.dim() + 1;
    let comp = |c: usize| SpectralField::from_fn(lattice, real, |idx| buf[idx * w + c]);
    FlowState {
        a: comp(0),
        u: (1..w).map(comp).collect(),
        t,
    }
}

/// Evaluates `W(t)U₀` and `∫₀ᵗ W(t - s) F(s) ds` on a fixed node set.
///
/// The integral is accumulated interval by interval,
/// `I(t_k) = W(t_k - t_{k-1}) I(t_{k-1}) + ∫_{t_{k-1}}^{t_k} W(t_k - s) F(s) ds`,
/// with `F` interpolated by local cubic Lagrange polynomials through the
/// node values and each interval integrated by Gauss-Legendre.
#[derive(Debug)]
pub struct DuhamelOperator {
    params: ModelParams,
    lattice: Arc<FrequencyLattice>,
    /// `t_0 = 0` followed by the solver grid.
    nodes: Vec<f64>,
    gl_x: Vec<f64>,
    gl_w: Vec<f64>,
    /// Per-interval propagator tables, kept when they fit in `CACHE_LIMIT`.
    plans: Vec<IntervalPlan>,
}

/// Shell propagators stored across all intervals before caching is skipped.
const CACHE_LIMIT: usize = 2_000_000;

#[derive(Clone, Debug)]
struct QuadPoint {
    weight: f64,
    lag: Vec<f64>,
    tau: f64,
}

/// Propagators of one interval. `psi[l]` folds the Gauss-Legendre rule and
/// the `l`-th Lagrange basis polynomial into one block per shell, so the
/// interval integral is `Σ_l psi[l] F(t_{stencil[l]})`.
#[derive(Clone, Debug)]
struct IntervalPlan {
    stencil: Vec<usize>,
    step: Vec<BlockPropagator>,
    psi: Vec<Vec<BlockPropagator>>,
    quad: Vec<QuadPoint>,
}

impl DuhamelOperator {
    pub fn new(params: ModelParams, lattice: &Arc<FrequencyLattice>, grid: &[f64], quad_nodes: usize) -> Self {
        let mut nodes = Vec::with_capacity(grid.len() + 1);
        nodes.push(0.0);
        nodes.extend_from_slice(grid);
        let (gl_x, gl_w) = gauss_legendre(quad_nodes);
        let mut op = Self { params, lattice: Arc::clone(lattice), nodes, gl_x, gl_w, plans: Vec::new() };
        let m = grid.len();
        if m * 5 * lattice.shell_radii().len() <= CACHE_LIMIT {
            op.plans = (1..=m).map(|k| op.interval_plan(k)).collect();
        }
        op
    }

    fn interval_plan(&self, k: usize) -> IntervalPlan {
        let m = self.nodes.len() - 1;
        let (t0, t1) = (self.nodes[k - 1], self.nodes[k]);
        let h = t1 - t0;
        let stencil = stencil(k, m);
        let times: Vec<f64> = stencil.iter().map(|&l| self.nodes[l]).collect();
        let quad: Vec<QuadPoint> = self
            .gl_x
            .iter()
            .zip(&self.gl_w)
            .map(|(&x, &wt)| {
                let s = t0 + 0.5 * h * (1.0 + x);
                QuadPoint { weight: 0.5 * h * wt, lag: lagrange(&times, s), tau: 0.5 * h * (1.0 - x) }
            })
            .collect();
        let shells = self.lattice.shell_radii().len();
        let mut psi = vec![vec![BlockPropagator::ZERO; shells]; stencil.len()];
        for q in &quad {
            let table = self.shell_propagators(q.tau);
            for (l, row) in psi.iter_mut().enumerate() {
                let w = q.weight * q.lag[l];
                for (acc, p) in row.iter_mut().zip(&table) {
                    acc.add_scaled(w, p);
                }
            }
        }
        IntervalPlan { stencil, step: self.shell_propagators(h), psi, quad }
    }

    /// `psi[l]` at a mode outside the shell tables.
    fn psi_for(&self, plan: &IntervalPlan, l: usize, idx: usize) -> BlockPropagator {
        match self.lattice.shell_of(idx) {
            Some(s) => plan.psi[l][s],
            None => {
                let mut acc = BlockPropagator::ZERO;
                let mag = self.lattice.magnitude(idx);
                for q in &plan.quad {
                    acc.add_scaled(q.weight * q.lag[l], &BlockPropagator::new(q.tau, mag, &self.params));
                }
                acc
            }
        }
    }

    pub fn lattice(&self) -> &Arc<FrequencyLattice> {
        &self.lattice
    }

    /// Node times including `t_0 = 0`.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    fn width(&self) -> usize {
        self.lattice.dim() + 1
    }

    fn shell_propagators(&self, tau: f64) -> Vec<BlockPropagator> {
        self.lattice
            .shell_radii()
            .iter()
            .map(|&s| BlockPropagator::new(tau, s, &self.params))
            .collect()
    }

    fn propagator_for(&self, table: &[BlockPropagator], idx: usize, tau: f64) -> BlockPropagator {
        match self.lattice.shell_of(idx) {
            Some(s) => table[s],
            None => BlockPropagator::new(tau, self.lattice.magnitude(idx), &self.params),
        }
    }

    /// `W(t)U₀` at every node `t_1..t_M`.
    pub fn linear(&self, data: &Packed) -> Vec<Packed> {
        self.nodes[1..]
            .par_iter()
            .map(|&t| {
                let table = self.shell_propagators(t);
                self.map_modes(|idx, xi, out| {
                    let p = self.propagator_for(&table, idx, t);
                    let w = self.width();
                    let v = &data[idx * w..(idx + 1) * w];
                    out[0] = p.apply(xi, v[0], &v[1..], &mut out[1..]);
                })
            })
            .collect()
    }

    /// `∫₀^{t_k} W(t_k - s) F(s) ds` for `k = 1..M`, given `F` at all nodes
    /// including `t_0`.
    pub fn integrate(&self, forcing: &[Packed]) -> Vec<Packed> {
        let m = self.nodes.len() - 1;
        assert_eq!(forcing.len(), m + 1, "forcing needed at every node");
        let w = self.width();
        let len = self.lattice.len() * w;
        let mut out = Vec::with_capacity(m);
        let mut prev = vec![Complex64::new(0.0, 0.0); len];
        for k in 1..=m {
            let h = self.nodes[k] - self.nodes[k - 1];
            let plan = match self.plans.get(k - 1) {
                Some(p) => Cow::Borrowed(p),
                None => Cow::Owned(self.interval_plan(k)),
            };
            let stencil = &plan.stencil;
            let next = self.map_modes(|idx, xi, o| {
                let base = idx * w;
                let p = self.propagator_for(&plan.step, idx, h);
                let v = &prev[base..base + w];
                o[0] = p.apply(xi, v[0], &v[1..], &mut o[1..]);
                let mut g = [Complex64::new(0.0, 0.0); 4];
                for (l, &node) in stencil.iter().enumerate() {
                    let f = &forcing[node][base..base + w];
                    let p = self.psi_for(&plan, l, idx);
                    g[0] = p.apply(xi, f[0], &f[1..], &mut g[1..w]);
                    for c in 0..w {
                        o[c] += g[c];
                    }
                }
            });
            out.push(next.clone());
            prev = next;
        }
        out
    }

    /// Builds a packed array by evaluating `fill(idx, ξ, out)` per mode.
    fn map_modes(&self, fill: impl Fn(usize, &[f64], &mut [Complex64]) + Sync) -> Packed {
        let w = self.width();
        let d = self.lattice.dim();
        let mut out = vec![Complex64::new(0.0, 0.0); self.lattice.len() * w];
        out.par_chunks_mut(w).enumerate().for_each(|(idx, o)| {
            let mut xi = [0.0; 3];
            for (j, x) in xi.iter_mut().enumerate().take(d) {
                *x = self.lattice.xi(idx, j);
            }
            fill(idx, &xi[..d], o);
        });
        out
    }
}

/// Four consecutive node indices around interval `[k-1, k]`, within `0..=m`.
fn stencil(k: usize, m: usize) -> Vec<usize> {
    if m + 1 <= 4 {
        return (0..=m).collect();
    }
    let start = (k as isize - 2).clamp(0, m as isize - 3) as usize;
    (start..start + 4).collect()
}

fn lagrange(nodes: &[f64], s: f64) -> Vec<f64> {
    (0..nodes.len())
        .map(|l| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != l)
                .map(|(_, &tm)| (s - tm) / (nodes[l] - tm))
                .product()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear::semigroup_apply;
    use crate::spectral::LatticeSpec;
    use std::f64::consts::PI;

    #[test]
    fn lagrange_reproduces_cubics() {
        let nodes = [0.0, 0.3, 0.5, 1.2];
        let cubic = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x * x;
        let s = 0.77;
        let l = lagrange(&nodes, s);
        let v: f64 = nodes.iter().zip(&l).map(|(&t, w)| cubic(t) * w).sum();
        assert!((v - cubic(s)).abs() < 1e-14);
    }

    #[test]
    fn stencils_stay_in_range() {
        assert_eq!(stencil(1, 10), vec![0, 1, 2, 3]);
        assert_eq!(stencil(5, 10), vec![3, 4, 5, 6]);
        assert_eq!(stencil(10, 10), vec![7, 8, 9, 10]);
        assert_eq!(stencil(2, 2), vec![0, 1, 2]);
    }

    #[test]
    fn constant_forcing_matches_closed_form() {
        // With F constant, ∫₀ᵗ W(τ)F dτ; compare against fine quadrature of the semigroup.
        let lat = LatticeSpec::new(2, 8, 2.0 * PI).build().unwrap();
        let p = ModelParams::default();
        let grid: Vec<f64> = (1..=40).map(|k| 0.5 * 0.9f64.powi(40 - k)).collect();
        let op = DuhamelOperator::new(p, &lat, &grid, 8);
        let mut state = FlowState::zeros(&lat, 0.0);
        state.a = SpectralField::single_mode(&lat, &[1, 1], Complex64::new(1.0, 0.5)).unwrap();
        state.u[0] = SpectralField::single_mode(&lat, &[1, 1], Complex64::new(0.0, 1.0)).unwrap();
        let f = pack(&state);
        let forcing = vec![f.clone(); grid.len() + 1];
        let out = op.integrate(&forcing);
        let idx = lat.index_of(&[1, 1]).unwrap();
        let xi = lat.xi_vec(idx);
        let v = [state.a.coeffs()[idx], state.u[0].coeffs()[idx], state.u[1].coeffs()[idx]];
        let t = 0.5;
        let n = 20000;
        let mut acc = [Complex64::new(0.0, 0.0); 3];
        for j in 0..n {
            // midpoint rule on a smooth integrand
            let tau = (j as f64 + 0.5) * t / n as f64;
            let w = semigroup_apply(tau, &xi, &v, &p).unwrap();
            for c in 0..3 {
                acc[c] += w[c] * (t / n as f64);
            }
        }
        let last = out.last().unwrap();
        for c in 0..3 {
            assert!((last[idx * 3 + c] - acc[c]).norm() < 1e-8, "{c}");
        }
    }
}
