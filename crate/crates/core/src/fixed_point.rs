//! The solution operator of the linear decoupled system with frozen controls,
//! its Picard iteration, and membership tests for the invariant moment set.
//!
//! Picard iteration runs on a single frozen noise realization. At a fixed
//! point the iterate solves the same discrete cutoff system as
//! [`Problem::simulate_path`], step for step.

use crate::error::{Error, Result};
use crate::integrator::{Control, CutoffState, Dynamics, Problem, State};
use crate::noise::IncrementSource;
use crate::spectral::{lp_power_grid, SpectralField};

/// Time-indexed controls `(η, ξ)` on the integrator grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPair {
    pub eta: Vec<SpectralField>,
    pub xi: Vec<SpectralField>,
    pub dt: f64,
}

impl ControlPair {
    /// Constant-in-time extension of `(u0, v0)` over `steps` steps.
    pub fn constant(u0: &SpectralField, v0: &SpectralField, steps: usize, dt: f64) -> Self {
        ControlPair {
            eta: vec![u0.clone(); steps + 1],
            xi: vec![v0.clone(); steps + 1],
            dt,
        }
    }

    pub fn steps(&self) -> usize {
        self.eta.len() - 1
    }

    pub fn scaled(&self, eta_factor: f64, xi_factor: f64) -> Self {
        ControlPair {
            eta: self.eta.iter().map(|f| f.scaled(eta_factor)).collect(),
            xi: self.xi.iter().map(|f| f.scaled(xi_factor)).collect(),
            dt: self.dt,
        }
    }
}

fn trapezoid(values: impl Iterator<Item = f64>, dt: f64) -> f64 {
    let v: Vec<f64> = values.collect();
    if v.len() < 2 {
        return 0.0;
    }
    let inner: f64 = v[1..v.len() - 1].iter().sum();
    dt * (inner + 0.5 * (v[0] + v[v.len() - 1]))
}

/// `sup_s |ξ(s)|_{H^ρ} + (∫ |ξ(s)|²_{H^{ρ+ℵ/2}} ds)^{1/2}` on the control grid.
pub fn path_norm(xi: &[SpectralField], rho: f64, aleph: f64, dt: f64) -> f64 {
    let sup = xi.iter().map(|f| f.sobolev_norm(rho)).fold(0.0, f64::max);
    sup + trapezoid(xi.iter().map(|f| f.sobolev_norm_sq(rho + aleph / 2.0)), dt).sqrt()
}

/// Single-path version of `|||(η, ξ)|||_M`:
/// `‖η‖_{L²(0,T;L²)} + ‖ξ‖_{H_{ρ,ℵ}}`.
pub fn m_norm(control: &ControlPair, rho: f64, aleph: f64) -> f64 {
    let eta = trapezoid(control.eta.iter().map(|f| f.l2_norm().powi(2)), control.dt).sqrt();
    eta + path_norm(&control.xi, rho, aleph, control.dt)
}

/// `|||a − b|||_M`
pub fn m_distance(a: &ControlPair, b: &ControlPair, rho: f64, aleph: f64) -> f64 {
    let diff = ControlPair {
        eta: a.eta.iter().zip(&b.eta).map(|(x, y)| x.add_scaled(y, -1.0)).collect(),
        xi: a.xi.iter().zip(&b.xi).map(|(x, y)| x.add_scaled(y, -1.0)).collect(),
        dt: a.dt,
    };
    m_norm(&diff, rho, aleph)
}

/// Solves the linear system driven by the frozen forcing `φ_κ(ξ)·η·|ξ|^q`
/// on the noise realization of `source`.
pub fn apply_v<S: IncrementSource>(
    problem: &Problem,
    control: &ControlPair,
    u0: &SpectralField,
    v0: &SpectralField,
    kappa: f64,
    source: &S,
) -> Result<ControlPair> {
    let steps = problem.steps();
    if control.steps() != steps {
        return Err(Error::invalid(format!(
            "control has {} steps, integrator grid has {steps}",
            control.steps()
        )));
    }
    let p = &problem.params;
    let stepper = problem.stepper(Dynamics::Cutoff);
    let mut cutoff = CutoffState::start(&control.xi[0], kappa, p.rho, p.aleph);
    let mut state = State::new(u0.clone(), v0.clone());
    let mut eta = Vec::with_capacity(steps + 1);
    let mut xi = Vec::with_capacity(steps + 1);
    eta.push(state.u.clone());
    xi.push(state.v.clone());
    for n in 0..steps {
        let t = n as f64 * problem.dt;
        let inc = source.increments(0, n, t, problem.dt);
        let frozen = Control::Frozen {
            eta: &control.eta[n],
            xi: &control.xi[n],
        };
        state = stepper.step(&state, frozen, cutoff.phi_value, &inc);
        if !(state.u.is_finite() && state.v.is_finite()) {
            return Err(Error::NonFinite {
                step: n + 1,
                time: t + problem.dt,
            });
        }
        cutoff.advance(&control.xi[n + 1], problem.dt);
        eta.push(state.u.clone());
        xi.push(state.v.clone());
    }
    Ok(ControlPair {
        eta,
        xi,
        dt: problem.dt,
    })
}

#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub fixed_point: ControlPair,
    /// Number of applications of the solution operator.
    pub iterates: usize,
    /// `|||x_n − x_{n−1}|||_M` for `n = 1..=iterates`.
    pub residuals: Vec<f64>,
}

/// Picard iteration from the constant extension of `(u0, v0)`; stops once the
/// residual drops below `tol`.
pub fn picard_solve(
    problem: &Problem,
    u0: &SpectralField,
    v0: &SpectralField,
    kappa: f64,
    path_id: u64,
    tol: f64,
    max_iter: usize,
) -> Result<PicardOutcome> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("picard.tol must be positive (got {tol})")));
    }
    let source = problem.counter_noise(path_id);
    let p = &problem.params;
    let mut current = ControlPair::constant(u0, v0, problem.steps(), problem.dt);
    let mut residuals = Vec::new();
    for iter in 1..=max_iter {
        let next = apply_v(problem, &current, u0, v0, kappa, &source)?;
        let r = m_distance(&next, &current, p.rho, p.aleph);
        residuals.push(r);
        current = next;
        if r < tol {
            return Ok(PicardOutcome {
                fixed_point: current,
                iterates: iter,
                residuals,
            });
        }
    }
    Err(Error::NoConvergence { residuals })
}

/// Bounds `(K₁, K₂, K₃)` of the invariant set and its exponential weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KSetConstants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub lambda: f64,
}

/// Inputs of the constant formulas; `c_t`, `c_kappa`, `c2` are the scheme
/// constants `C(T)`, `C(κ)`, `C₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KSetInputs {
    /// `E|u₀|²_{L²}`
    pub u0_l2_sq: f64,
    /// `E|u₀|^{p*}_{L^{p*}}`
    pub u0_lp_pow: f64,
    /// `E|v₀|²_{H^ρ}`
    pub v0_hrho_sq: f64,
    pub kappa: f64,
    pub t_end: f64,
    pub lambda: f64,
    pub p_star: f64,
    pub c_t: f64,
    pub c_kappa: f64,
    pub c2: f64,
}

impl KSetInputs {
    /// Moments of deterministic initial data with all scheme constants set to 1.
    pub fn from_data(
        u0: &SpectralField,
        v0: &SpectralField,
        rho: f64,
        p_star: f64,
        kappa: f64,
        t_end: f64,
        lambda: f64,
    ) -> Self {
        KSetInputs {
            u0_l2_sq: u0.l2_norm().powi(2),
            u0_lp_pow: lp_power_grid(u0.basis(), &u0.to_grid(), p_star),
            v0_hrho_sq: v0.sobolev_norm_sq(rho),
            kappa,
            t_end,
            lambda,
            p_star,
            c_t: 1.0,
            c_kappa: 1.0,
            c2: 1.0,
        }
    }
}

/// `K₂ = 2(1 + e^{C₂T})|u₀|^{p*}`, then `K₁`, `K₃` from `K₂`.
pub fn compute_kset_constants(inp: &KSetInputs) -> KSetConstants {
    let k2 = 2.0 * (1.0 + (inp.c2 * inp.t_end).exp()) * inp.u0_lp_pow;
    let forcing =
        inp.c_kappa * k2.powf(2.0 / inp.p_star) * (2.0 * inp.lambda * inp.t_end / inp.p_star).exp();
    KSetConstants {
        k1: inp.c_t * (inp.u0_l2_sq + forcing),
        k2,
        k3: inp.c_t * (inp.v0_hrho_sq + forcing),
        lambda: inp.lambda,
    }
}

/// The three functionals bounded in the invariant set, evaluated on one path:
/// `‖η‖²_{H_{0,2}}`, `sup_{s>0} e^{−λs}|η(s)|^{p*}_{L^{p*}}`, `‖ξ‖²_{H_{ρ,ℵ}}`.
pub fn kset_functionals(control: &ControlPair, rho: f64, aleph: f64, p_star: f64, lambda: f64) -> [f64; 3] {
    let h02 = path_norm(&control.eta, 0.0, aleph, control.dt);
    let weighted = control
        .eta
        .iter()
        .enumerate()
        .skip(1)
        .map(|(n, f)| (-lambda * n as f64 * control.dt).exp() * lp_power_grid(f.basis(), &f.to_grid(), p_star))
        .fold(0.0, f64::max);
    let xi = path_norm(&control.xi, rho, aleph, control.dt);
    [h02 * h02, weighted, xi * xi]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KSetCheck {
    pub in_set: bool,
    /// `K_i − functional_i`
    pub margins: [f64; 3],
    pub values: [f64; 3],
}

pub fn kset_check(control: &ControlPair, constants: &KSetConstants, rho: f64, aleph: f64, p_star: f64) -> KSetCheck {
    let values = kset_functionals(control, rho, aleph, p_star, constants.lambda);
    let bounds = [constants.k1, constants.k2, constants.k3];
    let margins = [0, 1, 2].map(|i| bounds[i] - values[i]);
    KSetCheck {
        in_set: margins.iter().all(|&m| m >= 0.0),
        margins,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{ModelParams, RecordOptions};
    use crate::noise::NoiseConfig;
    use crate::spectral::{Basis, Boundary, SpaceConfig};
    use approx::assert_relative_eq;

    fn problem(params: ModelParams) -> Problem {
        let basis = Basis::new(SpaceConfig::new(1, Boundary::Neumann, 8)).unwrap();
        Problem::new(params, basis, NoiseConfig::new(1.0, 1.0, 5), 0.05, 0.005).unwrap()
    }

    fn data(pr: &Problem) -> (SpectralField, SpectralField) {
        let mut u0 = SpectralField::constant(&pr.basis, 1.0);
        u0.coeffs_mut()[1] = 0.2;
        let mut v0 = SpectralField::constant(&pr.basis, 0.5);
        v0.coeffs_mut()[2] = 0.1;
        (u0, v0)
    }

    #[test]
    fn zero_forcing_zero_data() {
        let params = ModelParams {
            c1: 0.0,
            c2: 0.0,
            b1: 0.0,
            b2: 0.0,
            ..ModelParams::default()
        };
        let pr = problem(params);
        let z = SpectralField::zeros(&pr.basis);
        let ctrl = ControlPair::constant(&z, &z, pr.steps(), pr.dt);
        let out = apply_v(&pr, &ctrl, &z, &z, 1.0, &pr.counter_noise(0)).unwrap();
        assert!(out.eta.iter().chain(&out.xi).all(|f| f.coeffs().iter().all(|&c| c == 0.0)));
    }

    #[test]
    fn linear_problem_converges_after_one_extra_iteration() {
        let params = ModelParams {
            c1: 0.0,
            c2: 0.0,
            ..ModelParams::default()
        };
        let pr = problem(params);
        let (u0, v0) = data(&pr);
        let out = picard_solve(&pr, &u0, &v0, 10.0, 0, 1e-12, 10).unwrap();
        assert_eq!(out.iterates, 2);
        assert_eq!(out.residuals[1], 0.0);
    }

    #[test]
    fn fixed_point_is_stationary_and_matches_direct() {
        let pr = problem(ModelParams::default());
        let (u0, v0) = data(&pr);
        let out = picard_solve(&pr, &u0, &v0, 1e9, 2, 1e-12, 50).unwrap();
        let again = apply_v(&pr, &out.fixed_point, &u0, &v0, 1e9, &pr.counter_noise(2)).unwrap();
        assert!(m_distance(&again, &out.fixed_point, 0.0, 1.5) < 1e-10);
        let direct = pr.simulate_path(&u0, &v0, 1e9, 2, RecordOptions::every(1)).unwrap();
        for (a, b) in again.eta.iter().zip(&direct.u_snapshots) {
            assert_eq!(a, b);
        }
        for (a, b) in again.xi.iter().zip(&direct.v_snapshots) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn no_convergence_carries_residuals() {
        let pr = problem(ModelParams::default());
        let (u0, v0) = data(&pr);
        match picard_solve(&pr, &u0, &v0, 1e9, 0, 1e-300, 2) {
            Err(Error::NoConvergence { residuals }) => assert_eq!(residuals.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kset_constants_examples() {
        let base = KSetInputs {
            u0_l2_sq: 1.0,
            u0_lp_pow: 3.0,
            v0_hrho_sq: 0.5,
            kappa: 1.0,
            t_end: 1.0,
            lambda: 0.0,
            p_star: 4.0,
            c_t: 1.0,
            c_kappa: 1.0,
            c2: 0.0,
        };
        assert_relative_eq!(compute_kset_constants(&base).k2, 12.0);
        let doubled = KSetInputs {
            u0_lp_pow: 6.0,
            c2: 0.7,
            ..base
        };
        let once = KSetInputs { c2: 0.7, ..base };
        assert_eq!(compute_kset_constants(&doubled).k2, 2.0 * compute_kset_constants(&once).k2);
        let zero = KSetInputs {
            u0_l2_sq: 0.0,
            u0_lp_pow: 0.0,
            v0_hrho_sq: 0.0,
            ..base
        };
        let k = compute_kset_constants(&zero);
        assert_eq!((k.k1, k.k2, k.k3), (0.0, 0.0, 0.0));
    }

    #[test]
    fn kset_membership() {
        let pr = problem(ModelParams::default());
        let z = SpectralField::zeros(&pr.basis);
        let consts = KSetConstants {
            k1: 1e-3,
            k2: 1e-3,
            k3: 1e-3,
            lambda: 0.0,
        };
        let zero = ControlPair::constant(&z, &z, pr.steps(), pr.dt);
        assert!(kset_check(&zero, &consts, 0.0, 1.5, 4.0).in_set);
        let (u0, v0) = data(&pr);
        let big = ControlPair::constant(&u0, &v0, pr.steps(), pr.dt).scaled(1e6, 1.0);
        let chk = kset_check(&big, &consts, 0.0, 1.5, 4.0);
        assert!(!chk.in_set);
        assert!(chk.margins[1] < 0.0);
    }
}
