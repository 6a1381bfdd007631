//! Ensemble Monte Carlo estimates of the moment quantities bounded by the
//! existence theory, and a few discrete-norm diagnostics.
//!
//! Estimators read the field snapshots of each [`PathRecord`]; sup and time
//! integrals run over the snapshot times, so records should be taken with a
//! snapshot stride of 1 for step-level accuracy. Ensemble reductions sort the
//! per-path values before a pairwise sum, which makes every estimate
//! independent of path order.

use rayon::prelude::*;

use crate::integrator::PathRecord;
use crate::noise::NoiseOperator;
use crate::spectral::{lp_power_grid, Basis, SpectralField};

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub name: String,
    pub paths: usize,
    pub estimate: f64,
    /// 95% normal-approximation half-width `1.96·s/√M`.
    pub half_width: f64,
    pub values: Option<Vec<f64>>,
}

impl MomentReport {
    pub fn from_values(name: impl Into<String>, values: Vec<f64>, keep_values: bool) -> Self {
        let m = values.len();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let mean = pairwise_sum(&sorted) / m as f64;
        let half_width = if m < 2 {
            f64::NAN
        } else {
            let mut dev: Vec<f64> = sorted.iter().map(|x| (x - mean) * (x - mean)).collect();
            dev.sort_by(f64::total_cmp);
            let var = pairwise_sum(&dev) / (m - 1) as f64;
            1.96 * var.sqrt() / (m as f64).sqrt()
        };
        MomentReport {
            name: name.into(),
            paths: m,
            estimate: mean,
            half_width,
            values: keep_values.then_some(values),
        }
    }

    pub fn relative_half_width(&self) -> f64 {
        self.half_width / self.estimate.abs()
    }

    pub fn csv_header() -> &'static str {
        "quantity,paths,estimate,half_width"
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{:e},{:e}", self.name, self.paths, self.estimate, self.half_width)
    }
}

/// Pairwise (cascade) summation in a fixed tree shape.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Trapezoid rule on a non-uniform time grid.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

fn per_path<F>(records: &[PathRecord], f: F) -> Vec<f64>
where
    F: Fn(&PathRecord) -> f64 + Sync + Send,
{
    records.par_iter().map(f).collect()
}

/// `E sup_s |u(s)|²_{L²}`
pub fn estimate_u_l2(records: &[PathRecord]) -> MomentReport {
    let values = per_path(records, |r| {
        r.u_snapshots.iter().map(|u| u.l2_norm().powi(2)).fold(0.0, f64::max)
    });
    MomentReport::from_values("sup|u|^2_L2", values, false)
}

/// `|u^{p/2−1}∇u|²_{L²}` on the grid, with `|u|` in the power.
pub fn gradient_functional(u: &SpectralField, p: f64) -> f64 {
    let basis = u.basis();
    let grid = u.to_grid();
    let grad_sq = basis.gradient_sq(u.coeffs());
    let integrand: Vec<f64> = grid
        .iter()
        .zip(&grad_sq)
        .map(|(x, g)| if p == 2.0 { *g } else { x.abs().powf(p - 2.0) * g })
        .collect();
    basis.integrate(&integrand)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PStarReport {
    /// `E sup_s e^{−λs}|u(s)|^{p*}_{L^{p*}}`
    pub sup: MomentReport,
    /// `E ∫ |u^{p*/2−1}∇u|²_{L²} ds`
    pub gradient: MomentReport,
}

pub fn estimate_u_pstar(records: &[PathRecord], p_star: f64, lambda: f64) -> PStarReport {
    let sup = per_path(records, |r| {
        r.snapshot_times()
            .iter()
            .zip(&r.u_snapshots)
            .map(|(t, u)| (-lambda * t).exp() * lp_power_grid(u.basis(), &u.to_grid(), p_star))
            .fold(0.0, f64::max)
    });
    let grad = per_path(records, |r| {
        let g: Vec<f64> = r.u_snapshots.iter().map(|u| gradient_functional(u, p_star)).collect();
        trapezoid(&r.snapshot_times(), &g)
    });
    PStarReport {
        sup: MomentReport::from_values("sup|u|^p*_Lp*", sup, false),
        gradient: MomentReport::from_values("int|u^(p*/2-1)grad u|^2", grad, false),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HAlphaReport {
    /// `E sup_s |v(s)|²_{H^α}`
    pub sup: MomentReport,
    /// `2 E ∫ |v(s)|²_{H^{α+ℵ/2}} ds`
    pub dissipation: MomentReport,
}

/// Per-path sum of both components of [`estimate_v_halpha`].
pub fn estimate_v_halpha_total(records: &[PathRecord], alpha: f64, aleph: f64) -> MomentReport {
    MomentReport::from_values("v_Halpha_total", v_halpha_values(records, alpha, aleph, true), false)
}

fn v_halpha_values(records: &[PathRecord], alpha: f64, aleph: f64, total: bool) -> Vec<f64> {
    per_path(records, |r| {
        let sup = r.v_snapshots.iter().map(|v| v.sobolev_norm_sq(alpha)).fold(0.0, f64::max);
        let d: Vec<f64> = r.v_snapshots.iter().map(|v| v.sobolev_norm_sq(alpha + aleph / 2.0)).collect();
        let diss = 2.0 * trapezoid(&r.snapshot_times(), &d);
        if total {
            sup + diss
        } else {
            diss
        }
    })
}

pub fn estimate_v_halpha(records: &[PathRecord], alpha: f64, aleph: f64) -> HAlphaReport {
    let sup = per_path(records, |r| {
        r.v_snapshots.iter().map(|v| v.sobolev_norm_sq(alpha)).fold(0.0, f64::max)
    });
    HAlphaReport {
        sup: MomentReport::from_values("sup|v|^2_Halpha", sup, false),
        dissipation: MomentReport::from_values(
            "2int|v|^2_Halpha+aleph/2",
            v_halpha_values(records, alpha, aleph, false),
            false,
        ),
    }
}

/// `∫ u₊^{p} v₊^{q} dx` on the grid.
pub fn coupling_density(u: &SpectralField, v: &SpectralField, p: f64, q: f64) -> f64 {
    let integrand: Vec<f64> = u
        .to_grid()
        .iter()
        .zip(v.to_grid())
        .map(|(a, b)| a.max(0.0).powf(p) * b.max(0.0).powf(q))
        .collect();
    u.basis().integrate(&integrand)
}

/// `E (∫₀ᵀ ∫ u^{p*} v^q dx ds)^m`
pub fn estimate_coupling(records: &[PathRecord], p_star: f64, q: f64, m: f64) -> MomentReport {
    let values = per_path(records, |r| {
        let dens: Vec<f64> = r
            .u_snapshots
            .iter()
            .zip(&r.v_snapshots)
            .map(|(u, v)| coupling_density(u, v, p_star, q))
            .collect();
        trapezoid(&r.snapshot_times(), &dens).powf(m)
    });
    MomentReport::from_values("coupling", values, false)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`; absent when the right side vanishes.
    pub ratio: Option<f64>,
}

/// `|f|^p_{L^p} + ∬ |f(x)−f(y)|^p / |x−y|^{d+θp}` by a grid double sum.
pub fn fractional_sobolev_power(basis: &Basis, grid: &[f64], theta: f64, p: f64) -> f64 {
    let pts = basis.grid_points();
    let d = basis.dim();
    let w = basis.quadrature_weight();
    let mut semi = 0.0;
    for i in 0..pts.len() {
        for j in 0..pts.len() {
            if i == j {
                continue;
            }
            let dist = (0..d).map(|a| (pts[i][a] - pts[j][a]).powi(2)).sum::<f64>().sqrt();
            semi += (grid[i] - grid[j]).abs().powf(p) / dist.powf(d as f64 + theta * p);
        }
    }
    lp_power_grid(basis, grid, p) + w * w * semi
}

/// Both sides of `‖η‖^{2γ}_{L^{2γ}(0,T;H^θ_{2γ})} ≲ ∫|η^{[γ−1]}∇η|²` on a sampled path.
pub fn stroock_varopoulos_check(times: &[f64], path: &[SpectralField], gamma: f64, theta: f64) -> SvCheck {
    let p = 2.0 * gamma;
    let (l, r): (Vec<f64>, Vec<f64>) = path
        .iter()
        .map(|eta| {
            let grid = eta.to_grid();
            (
                fractional_sobolev_power(eta.basis(), &grid, theta, p),
                gradient_functional(eta, p),
            )
        })
        .unzip();
    let lhs = trapezoid(times, &l);
    let rhs = trapezoid(times, &r);
    SvCheck {
        lhs,
        rhs,
        ratio: (rhs > 0.0).then(|| lhs / rhs),
    }
}

/// `p(p−1) Σ_k λ_k^{−γ} ∫ |u|^{p−2} u² φ_k²` over the retained noise modes.
pub fn trace_diagnostic(u: &SpectralField, noise: &NoiseOperator, p: f64) -> f64 {
    let basis = u.basis();
    let grid = u.to_grid();
    let integrand: Vec<f64> = grid
        .iter()
        .zip(noise.trace_density())
        .map(|(x, t)| x.abs().powf(p) * t)
        .collect();
    p * (p - 1.0) * basis.integrate(&integrand)
}

/// Smallest `C` with `estimate ≤ C·rhs`.
pub fn fit_constant(estimate: f64, rhs: f64) -> f64 {
    estimate / rhs
}
