//! Shared test oracles.
#![allow(dead_code)]

use std::sync::Arc;

use gs_spde::integrator::ModelParams;
use gs_spde::noise::NoiseConfig;
use gs_spde::spectral::{Basis, Boundary, SpaceConfig};

/// Adaptive Dormand–Prince 5(4) integration of `y' = f(y)` from 0 to `t_end`.
pub fn dopri45<F>(f: F, y0: &[f64], t_end: f64, rtol: f64, atol: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut h = 1e-3 * t_end;
    while t < t_end {
        h = h.min(t_end - t);
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        for s in 0..7 {
            let ys: Vec<f64> = (0..n)
                .map(|i| y[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>())
                .collect();
            k.push(f(&ys));
        }
        let y5: Vec<f64> = (0..n).map(|i| y[i] + h * (0..7).map(|s| B5[s] * k[s][i]).sum::<f64>()).collect();
        let y4: Vec<f64> = (0..n).map(|i| y[i] + h * (0..7).map(|s| B4[s] * k[s][i]).sum::<f64>()).collect();
        let err = (0..n)
            .map(|i| {
                let sc = atol + rtol * y[i].abs().max(y5[i].abs());
                ((y5[i] - y4[i]) / sc).powi(2)
            })
            .sum::<f64>()
            / n as f64;
        let err = err.sqrt();
        if err <= 1.0 {
            t += h;
            y = y5;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    y
}

/// Right-hand side of the spatially homogeneous branch.
pub fn homogeneous_rhs(p: &ModelParams) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
    move |y: &[f64]| {
        let r = y[0] * y[1].max(0.0).powf(p.q);
        vec![p.a1 * y[0] + p.b1 - p.c1 * r, p.a2 * y[1] + p.b2 + p.c2 * r]
    }
}

pub fn basis_1d(modes: usize) -> Arc<Basis> {
    Basis::new(SpaceConfig::new(1, Boundary::Neumann, modes)).unwrap()
}

/// Admissible one-dimensional parameter set.
pub fn admissible_1d() -> (ModelParams, NoiseConfig) {
    let p = ModelParams {
        q: 1.5,
        aleph: 1.5,
        alpha: 0.1,
        rho: 0.0,
        p_star: 5.0,
        sigma1: 0.3,
        sigma2: 0.3,
        ..ModelParams::default()
    };
    (p, NoiseConfig::new(1.0, 1.0, 0))
}

/// Two-dimensional parameter set of the `d = 2, ℵ = 2, q = 2` case.
pub fn special_2d() -> (ModelParams, NoiseConfig) {
    let p = ModelParams {
        q: 2.0,
        aleph: 2.0,
        alpha: 0.0,
        rho: 0.0,
        p_star: 5.0,
        sigma1: 0.3,
        sigma2: 0.3,
        ..ModelParams::default()
    };
    (p, NoiseConfig::new(1.5, 1.5, 0))
}
