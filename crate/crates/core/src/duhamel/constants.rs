use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::operator::{pack, Packed};
use super::solver::{DuhamelSolver, IterationRecord};
use crate::error::Result;
use crate::nonlinear::{bilinear_f, bilinear_g1, bilinear_g2, bilinear_g3};
use crate::params::SolverConfig;
use crate::spectral::norms::{x_norm, y_norm};
use crate::spectral::{FlowState, SpectralField, Trajectory};

/// One of the four quadratic terms, as a bilinear form in two states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    /// `f(u_x, a_y)`
    F,
    /// `g1(u_x, u_y)`
    G1,
    /// `g2(a_x, u_y)`
    G2,
    /// `g3(a_x, a_y)`
    G3,
}

impl Term {
    pub const ALL: [Term; 4] = [Term::F, Term::G1, Term::G2, Term::G3];
}

/// Empirical constants `‖∫W(t-s)B(x,y)ds‖ / (‖x‖‖y‖)` per term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilinearConstants {
    /// Plain (`X_T`) constants in the order `f, g1, g2, g3`.
    pub plain: [f64; 4],
    /// Same ratios measured with `Y_T` norms.
    pub analytic: Option<[f64; 4]>,
    /// `max` of the plain constants.
    pub k_phi: f64,
    pub samples: usize,
    pub seed: u64,
}

impl BilinearConstants {
    /// Factor `2^{1-1/p} e^{2c0}` relating analytic and plain constants.
    pub fn analytic_factor(p: f64, c0: f64) -> f64 {
        2f64.powf(1.0 - 1.0 / p) * (2.0 * c0).exp()
    }
}

/// Constants of the small-data argument, measured along a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstantsLedger {
    pub k_phi: Option<f64>,
    /// Ball radius `R = 0.9 / (16 K_Φ)`.
    pub r: Option<f64>,
    /// `ρ = R / (2 C̃)`.
    pub rho: Option<f64>,
    /// `C̃ = ‖W(·)U₀‖_X / ‖(a₀, |D|a₀, u₀)‖_{PM^{d-1}}`.
    pub c_tilde: Option<f64>,
    /// `C̃_δ = ‖W(·)U₀‖_{X_T} / (T^{δ/2} ‖U₀‖_{PM^{d-1+δ}})`.
    pub c_tilde_delta: Option<f64>,
    /// `c_δ = (R / (2 C̃_δ))^{2/δ}`.
    pub c_delta: Option<f64>,
    pub data_norm: f64,
    pub data_norm_delta: f64,
    pub linear_x_norm: f64,
    /// Ratio of successive Picard increments.
    pub contraction: Vec<f64>,
    pub contraction_sup: Option<f64>,
    pub max_iterate_norm: f64,
    /// `16 R K_Φ < 1` and the data norm within `ρ`.
    pub small_data: Option<bool>,
    /// All iterates inside the ball of radius `R`.
    pub in_ball: Option<bool>,
}

impl ConstantsLedger {
    pub(crate) fn assemble(
        constants: Option<&BilinearConstants>,
        data_norm: f64,
        data_norm_delta: f64,
        linear_x_norm: f64,
        cfg: &SolverConfig,
        history: &[IterationRecord],
        max_iterate_norm: f64,
    ) -> Self {
        let positive = |x: f64| (x.is_finite() && x > 0.0).then_some(x);
        let c_tilde = positive(data_norm).map(|n| linear_x_norm / n);
        let c_tilde_delta =
            positive(data_norm_delta).map(|n| linear_x_norm / (cfg.horizon.powf(0.5 * cfg.delta) * n));
        let k_phi = constants.map(|c| c.k_phi).and_then(positive);
        let r = k_phi.map(|k| 0.9 / (16.0 * k));
        let rho = match (r, c_tilde.and_then(positive)) {
            (Some(r), Some(c)) => Some(r / (2.0 * c)),
            _ => None,
        };
        let c_delta = match (r, c_tilde_delta.and_then(positive)) {
            (Some(r), Some(c)) => Some((r / (2.0 * c)).powf(2.0 / cfg.delta)),
            _ => None,
        };
        let contraction: Vec<f64> = history.iter().filter_map(|h| h.ratio).collect();
        let contraction_sup = contraction.iter().copied().reduce(f64::max);
        let small_data = match (r, k_phi, rho) {
            (Some(r), Some(k), Some(rho)) => Some(16.0 * r * k < 1.0 && data_norm <= rho),
            (Some(r), Some(k), None) => Some(16.0 * r * k < 1.0),
            _ => None,
        };
        Self {
            k_phi,
            r,
            rho,
            c_tilde,
            c_tilde_delta,
            c_delta,
            data_norm,
            data_norm_delta,
            linear_x_norm,
            contraction,
            contraction_sup,
            max_iterate_norm,
            small_data,
            in_ball: r.map(|r| max_iterate_norm <= r),
        }
    }
}

/// Random real data on the modes `max |k_i| <= 4`, independent of `N`.
pub fn random_smooth_data(solver: &DuhamelSolver, rng: &mut ChaCha8Rng) -> FlowState {
    let lat = solver.lattice();
    let band = 4.min(lat.dealias_cutoff() as i32);
    let mut draw = || {
        let mut f = SpectralField::from_fn(lat, true, |_| Complex64::new(0.0, 0.0));
        for idx in 0..lat.len() {
            let k = lat.wavenumber(idx);
            if idx != 0 && k.iter().all(|x| x.abs() <= band) {
                let amp: f64 = rng.gen_range(0.0..1.0);
                let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                f.coeffs_mut()[idx] = Complex64::from_polar(amp, phase);
            }
        }
        f.symmetrize();
        f
    };
    let a = draw();
    let u = (0..lat.dim()).map(|_| draw()).collect();
    FlowState { a, u, t: 0.0 }
}

fn term_forcing(solver: &DuhamelSolver, term: Term, x: &FlowState, y: &FlowState) -> Result<Packed> {
    let e = solver.engine();
    let lat = solver.lattice();
    let mut out = FlowState::zeros(lat, x.t);
    match term {
        Term::F => out.a = bilinear_f(e, &x.u, &y.a)?,
        Term::G1 => out.u = bilinear_g1(e, &x.u, &y.u)?,
        Term::G2 => out.u = bilinear_g2(e, &x.a, &y.u, solver.params(), solver.config().contraction)?,
        Term::G3 => out.u = bilinear_g3(e, &x.a, &y.a, solver.params().kappa)?,
    }
    Ok(pack(&out))
}

/// `t ↦ ∫₀ᵗ W(t-s) B(x(s), y(s)) ds` for trajectories given with their
/// initial states.
pub fn bilinear_duhamel(
    solver: &DuhamelSolver,
    term: Term,
    x0: &FlowState,
    x: &Trajectory,
    y0: &FlowState,
    y: &Trajectory,
) -> Result<Trajectory> {
    let mut forcing = vec![term_forcing(solver, term, x0, y0)?];
    for (xs, ys) in x.states().iter().zip(y.states()) {
        forcing.push(term_forcing(solver, term, xs, ys)?);
    }
    let nodes = solver.operator().integrate(&forcing);
    let real = x0.a.is_real() && y0.a.is_real();
    Trajectory::new(
        nodes
            .iter()
            .zip(solver.grid())
            .map(|(p, &t)| super::operator::unpack(p, solver.lattice(), t, real))
            .collect(),
    )
}

/// `(X ratio, Y ratio)` of one term on one pair of linear evolutions.
pub fn bilinear_ratio(
    solver: &DuhamelSolver,
    term: Term,
    x0: &FlowState,
    y0: &FlowState,
    analytic: bool,
) -> Result<(f64, Option<f64>)> {
    let cfg = solver.config();
    let (p, horizon, c0) = (cfg.p, cfg.horizon, solver.params().c0);
    let x = solver.linear_trajectory(x0)?;
    let y = solver.linear_trajectory(y0)?;
    let out = bilinear_duhamel(solver, term, x0, &x, y0, &y)?;
    let denom = x_norm(&x, p, horizon)? * x_norm(&y, p, horizon)?;
    let plain = if denom > 0.0 { x_norm(&out, p, horizon)? / denom } else { 0.0 };
    let analytic = if analytic {
        let dy = y_norm(&x, p, horizon, c0)? * y_norm(&y, p, horizon, c0)?;
        Some(if dy > 0.0 { y_norm(&out, p, horizon, c0)? / dy } else { 0.0 })
    } else {
        None
    };
    Ok((plain, analytic))
}

/// Largest ratios over `samples` random pairs of linear evolutions of
/// smooth data drawn from a ChaCha8 stream seeded with `seed`.
pub fn measure_bilinear_constants(
    solver: &DuhamelSolver,
    samples: usize,
    seed: u64,
    analytic: bool,
) -> Result<BilinearConstants> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plain = [0.0f64; 4];
    let mut an = [0.0f64; 4];
    for _ in 0..samples.max(1) {
        let x0 = random_smooth_data(solver, &mut rng);
        let y0 = random_smooth_data(solver, &mut rng);
        for (i, term) in Term::ALL.iter().enumerate() {
            let (r, a) = bilinear_ratio(solver, *term, &x0, &y0, analytic)?;
            plain[i] = plain[i].max(r);
            if let Some(a) = a {
                an[i] = an[i].max(a);
            }
        }
    }
    Ok(BilinearConstants {
        plain,
        analytic: analytic.then_some(an),
        k_phi: plain.iter().copied().fold(0.0, f64::max),
        samples: samples.max(1),
        seed,
    })
}
