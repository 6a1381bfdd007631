//! Empirical convergence studies of the time stepper.
//!
//! Every level shares one Brownian path with the reference: coarse increments
//! are sums of reference-level increments.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::pairwise_sum;
use crate::integrator::{Problem, RecordOptions};
use crate::noise::RefinedNoise;
use crate::spectral::SpectralField;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub dts: Vec<f64>,
    /// Root-mean-square error at `T` in `L² × L²`, per level.
    pub errors: Vec<f64>,
    /// Least-squares slope of `log error` against `log dt`.
    pub order: f64,
    pub paths: usize,
}

impl ConvergenceReport {
    pub fn csv(&self) -> String {
        let mut out = String::from("dt,error\n");
        for (dt, e) in self.dts.iter().zip(&self.errors) {
            out.push_str(&format!("{dt:e},{e:e}\n"));
        }
        out
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn fitted_order(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

fn final_state(
    problem: &Problem,
    u0: &SpectralField,
    v0: &SpectralField,
    kappa: f64,
    path_id: u64,
    factor: usize,
) -> Result<(SpectralField, SpectralField)> {
    let source = RefinedNoise {
        fine: problem.counter_noise(path_id),
        factor,
    };
    let rec = problem.simulate_path_with(u0, v0, kappa, &source, RecordOptions::default())?;
    Ok((rec.final_u().clone(), rec.final_v().clone()))
}

/// Strong error at `T` for the step counts `levels`, against a reference run
/// with `reference_steps` steps, over `paths` noise realizations.
///
/// Every level must divide `reference_steps`.
pub fn strong_convergence(
    problem: &Problem,
    u0: &SpectralField,
    v0: &SpectralField,
    kappa: f64,
    levels: &[usize],
    reference_steps: usize,
    paths: usize,
) -> Result<ConvergenceReport> {
    if levels.len() < 2 || paths == 0 {
        return Err(Error::invalid("convergence needs at least two levels and one path"));
    }
    if let Some(bad) = levels.iter().find(|&&n| n == 0 || reference_steps % n != 0) {
        return Err(Error::invalid(format!(
            "convergence level {bad} does not divide the reference step count {reference_steps}"
        )));
    }
    let reference = problem.with_dt(problem.t_end / reference_steps as f64)?;
    let coarse: Vec<Problem> = levels
        .iter()
        .map(|&n| problem.with_dt(problem.t_end / n as f64))
        .collect::<Result<_>>()?;

    let per_path: Vec<Vec<f64>> = (0..paths as u64)
        .into_par_iter()
        .map(|path| {
            let (ur, vr) = final_state(&reference, u0, v0, kappa, path, 1)?;
            coarse
                .iter()
                .zip(levels)
                .map(|(pr, &n)| {
                    let (u, v) = final_state(pr, u0, v0, kappa, path, reference_steps / n)?;
                    Ok(u.add_scaled(&ur, -1.0).l2_norm().powi(2) + v.add_scaled(&vr, -1.0).l2_norm().powi(2))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let errors: Vec<f64> = (0..levels.len())
        .map(|l| {
            let mut sq: Vec<f64> = per_path.iter().map(|e| e[l]).collect();
            sq.sort_by(f64::total_cmp);
            (pairwise_sum(&sq) / paths as f64).sqrt()
        })
        .collect();
    let dts: Vec<f64> = coarse.iter().map(|p| p.dt).collect();
    Ok(ConvergenceReport {
        order: fitted_order(&dts, &errors),
        dts,
        errors,
        paths,
    })
}
