//! Laplacian eigenbasis on the unit box/torus in one or two dimensions.
//!
//! Fields are stored as coefficients in a real, L²-normalized eigenbasis of
//! `-Δ`. Neumann boxes use products of `√2 cos(πkx)`, periodic tori use the
//! real Fourier pairs `√2 cos(2πkx)`, `√2 sin(2πkx)`. Physical values live on a
//! uniform tensor grid with `grid` points per axis; projection back to the
//! basis uses the equal-weight rule on that grid (cell centres for Neumann,
//! nodes for periodic), which is exact for band-limited integrands up to the
//! grid's aliasing limit.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Neumann,
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::Periodic => f.write_str("periodic"),
            Boundary::Neumann => f.write_str("neumann"),
        }
    }
}

/// Treatment of the constant mode (`λ₀ = 0`) under negative powers of `-Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroModePolicy {
    /// Exclude the constant mode (its image is zero).
    #[default]
    Drop,
    /// Replace `λ₀` by 1.
    Shift,
    /// Fail if the constant coefficient is non-zero.
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub dim: usize,
    pub boundary: Boundary,
    /// Modes per axis.
    pub modes: usize,
    /// Grid points per axis.
    pub grid: usize,
    #[serde(default)]
    pub zero_mode: ZeroModePolicy,
}

impl SpaceConfig {
    /// Config with the default dealiasing grid of `2 * modes` points per axis.
    pub fn new(dim: usize, boundary: Boundary, modes: usize) -> Self {
        SpaceConfig {
            dim,
            boundary,
            modes,
            grid: 2 * modes,
            zero_mode: ZeroModePolicy::Drop,
        }
    }

    pub fn with_grid(mut self, grid: usize) -> Self {
        self.grid = grid;
        self
    }

    pub fn mode_count(&self) -> usize {
        self.modes.pow(self.dim as u32)
    }

    pub fn grid_len(&self) -> usize {
        self.grid.pow(self.dim as u32)
    }

    /// Grid points needed per axis so that `u·v^q` (integer `q`) projects
    /// exactly onto the retained modes.
    pub fn dealiased_grid(modes: usize, q: f64) -> usize {
        let factor = (q + 1.0) / 2.0;
        ((factor.ceil() as usize).max(1) * modes).max(modes + 1)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(1..=2).contains(&self.dim) {
            out.push(format!("space.dim must be 1 or 2 (got {})", self.dim));
        }
        if self.modes < 2 {
            out.push(format!("space.modes must be at least 2 (got {})", self.modes));
        }
        if self.grid < self.modes {
            out.push(format!(
                "space.grid must be at least space.modes (got {} < {})",
                self.grid, self.modes
            ));
        }
        if self.boundary == Boundary::Periodic && self.grid <= 2 * (self.modes / 2) {
            // the highest sine mode vanishes on a grid of exactly twice its frequency
            out.push(format!(
                "space.grid must exceed {} for {} periodic modes",
                2 * (self.modes / 2),
                self.modes
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}

/// One-dimensional factor of the tensor basis.
#[derive(Debug, Clone)]
struct AxisBasis {
    eigenvalues: Vec<f64>,
    points: Vec<f64>,
    /// `values[[i, k]] = φ_k(x_i)`
    values: Array2<f64>,
    derivs: Array2<f64>,
    /// `analysis[[k, i]] = φ_k(x_i) / grid`
    analysis: Array2<f64>,
}

impl AxisBasis {
    fn new(boundary: Boundary, modes: usize, grid: usize) -> Self {
        let points: Vec<f64> = match boundary {
            Boundary::Neumann => (0..grid).map(|i| (i as f64 + 0.5) / grid as f64).collect(),
            Boundary::Periodic => (0..grid).map(|i| i as f64 / grid as f64).collect(),
        };
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut eigenvalues = Vec::with_capacity(modes);
        let mut values = Array2::zeros((grid, modes));
        let mut derivs = Array2::zeros((grid, modes));
        for k in 0..modes {
            match boundary {
                Boundary::Neumann => {
                    let w = PI * k as f64;
                    eigenvalues.push(w * w);
                    for (i, &x) in points.iter().enumerate() {
                        if k == 0 {
                            values[[i, k]] = 1.0;
                        } else {
                            values[[i, k]] = sqrt2 * (w * x).cos();
                            derivs[[i, k]] = -sqrt2 * w * (w * x).sin();
                        }
                    }
                }
                Boundary::Periodic => {
                    let freq = (k + 1) / 2;
                    let w = 2.0 * PI * freq as f64;
                    eigenvalues.push(w * w);
                    for (i, &x) in points.iter().enumerate() {
                        if k == 0 {
                            values[[i, k]] = 1.0;
                        } else if k % 2 == 1 {
                            values[[i, k]] = sqrt2 * (w * x).cos();
                            derivs[[i, k]] = -sqrt2 * w * (w * x).sin();
                        } else {
                            values[[i, k]] = sqrt2 * (w * x).sin();
                            derivs[[i, k]] = sqrt2 * w * (w * x).cos();
                        }
                    }
                }
            }
        }
        let analysis = values.t().mapv(|v| v / grid as f64);
        AxisBasis {
            eigenvalues,
            points,
            values,
            derivs,
            analysis,
        }
    }
}

/// Eigenpairs of `-Δ` plus the synthesis/analysis plan for one [`SpaceConfig`].
///
/// Flat mode indices are ordered by non-decreasing eigenvalue, ties broken by
/// the multi-index. Immutable after construction and shared behind an `Arc`.
#[derive(Debug)]
pub struct Basis {
    config: SpaceConfig,
    axis: AxisBasis,
    eigenvalues: Vec<f64>,
    multi_index: Vec<[usize; 2]>,
    /// `flat_of[k1 * modes + k2]` (d = 2) or `flat_of[k1]` (d = 1).
    flat_of: Vec<usize>,
}

impl Basis {
    /// Builds the eigensystem and plan; fails on an invalid config.
    pub fn new(config: SpaceConfig) -> Result<Arc<Basis>> {
        config.validate()?;
        let axis = AxisBasis::new(config.boundary, config.modes, config.grid);
        let n = config.modes;
        let mut pairs: Vec<([usize; 2], f64)> = if config.dim == 1 {
            (0..n).map(|k| ([k, 0], axis.eigenvalues[k])).collect()
        } else {
            (0..n)
                .flat_map(|k1| (0..n).map(move |k2| [k1, k2]))
                .map(|m| (m, axis.eigenvalues[m[0]] + axis.eigenvalues[m[1]]))
                .collect()
        };
        pairs.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let mut flat_of = vec![0; config.mode_count()];
        for (flat, (m, _)) in pairs.iter().enumerate() {
            let slot = if config.dim == 1 { m[0] } else { m[0] * n + m[1] };
            flat_of[slot] = flat;
        }
        Ok(Arc::new(Basis {
            config,
            eigenvalues: pairs.iter().map(|p| p.1).collect(),
            multi_index: pairs.iter().map(|p| p.0).collect(),
            flat_of,
            axis,
        }))
    }

    pub fn config(&self) -> &SpaceConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn mode_count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn grid_len(&self) -> usize {
        self.config.grid_len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        self.multi_index[flat]
    }

    /// Flat index of an axis multi-index (second entry ignored in 1-D).
    pub fn flat_index(&self, multi: [usize; 2]) -> usize {
        if self.config.dim == 1 {
            self.flat_of[multi[0]]
        } else {
            self.flat_of[multi[0] * self.config.modes + multi[1]]
        }
    }

    /// Equal quadrature weight of every grid point.
    pub fn quadrature_weight(&self) -> f64 {
        1.0 / self.grid_len() as f64
    }

    /// Grid coordinates in row-major order (first axis slowest).
    pub fn grid_points(&self) -> Vec<[f64; 2]> {
        let p = &self.axis.points;
        if self.config.dim == 1 {
            p.iter().map(|&x| [x, 0.0]).collect()
        } else {
            p.iter()
                .flat_map(|&x| p.iter().map(move |&y| [x, y]))
                .collect()
        }
    }

    /// Effective eigenvalue of mode `k` under negative powers, or `None` if
    /// the mode is excluded by the zero-mode policy.
    pub fn regularized_eigenvalue(&self, k: usize) -> Option<f64> {
        let lam = self.eigenvalues[k];
        if lam > 0.0 {
            Some(lam)
        } else {
            match self.config.zero_mode {
                ZeroModePolicy::Shift => Some(1.0),
                ZeroModePolicy::Drop | ZeroModePolicy::Reject => None,
            }
        }
    }

    fn coeff_matrix(&self, coeffs: &[f64]) -> Array2<f64> {
        let n = self.config.modes;
        Array2::from_shape_fn((n, n), |(i, j)| coeffs[self.flat_of[i * n + j]])
    }

    fn flatten_matrix(&self, c: &Array2<f64>) -> Vec<f64> {
        let n = self.config.modes;
        let mut out = vec![0.0; self.mode_count()];
        for i in 0..n {
            for j in 0..n {
                out[self.flat_of[i * n + j]] = c[[i, j]];
            }
        }
        out
    }

    /// Physical grid values of a coefficient vector.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.mode_count());
        if self.config.dim == 1 {
            // 1-D sorted order coincides with axis order
            self.axis.values.dot(&Array1::from(coeffs.to_vec())).to_vec()
        } else {
            let c = self.coeff_matrix(coeffs);
            let g = self.axis.values.dot(&c).dot(&self.axis.values.t());
            g.iter().copied().collect()
        }
    }

    /// Projection of grid values onto the retained modes.
    pub fn analyze(&self, grid: &[f64]) -> Vec<f64> {
        debug_assert_eq!(grid.len(), self.grid_len());
        let m = self.config.grid;
        if self.config.dim == 1 {
            let g = Array1::from(grid.to_vec());
            self.axis.analysis.dot(&g).to_vec()
        } else {
            let g = Array2::from_shape_vec((m, m), grid.to_vec()).expect("grid shape");
            let c = self.axis.analysis.dot(&g).dot(&self.axis.analysis.t());
            self.flatten_matrix(&c)
        }
    }

    /// Grid values of each partial derivative.
    pub fn gradient(&self, coeffs: &[f64]) -> Vec<Vec<f64>> {
        if self.config.dim == 1 {
            vec![self.axis.derivs.dot(&Array1::from(coeffs.to_vec())).to_vec()]
        } else {
            let c = self.coeff_matrix(coeffs);
            let dx = self.axis.derivs.dot(&c).dot(&self.axis.values.t());
            let dy = self.axis.values.dot(&c).dot(&self.axis.derivs.t());
            vec![dx.iter().copied().collect(), dy.iter().copied().collect()]
        }
    }

    /// Grid values of `|∇f|²`.
    pub fn gradient_sq(&self, coeffs: &[f64]) -> Vec<f64> {
        let parts = self.gradient(coeffs);
        let mut out = vec![0.0; self.grid_len()];
        for p in &parts {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v * v;
            }
        }
        out
    }

    /// Quadrature of grid values over the unit box.
    pub fn integrate(&self, grid: &[f64]) -> f64 {
        grid.iter().sum::<f64>() * self.quadrature_weight()
    }

    /// Grid values of eigenfunction `k`.
    pub fn eigenfunction_on_grid(&self, k: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.mode_count()];
        c[k] = 1.0;
        self.synthesize(&c)
    }
}

/// Which power of `-Δ` drives a semigroup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Operator {
    Laplace,
    /// `-(-Δ)^{aleph/2}`
    Fractional { aleph: f64 },
}

impl Operator {
    fn symbol(&self, lambda: f64) -> f64 {
        match *self {
            Operator::Laplace => lambda,
            Operator::Fractional { aleph } => {
                if lambda == 0.0 {
                    0.0
                } else {
                    lambda.powf(aleph / 2.0)
                }
            }
        }
    }
}

/// Linear generator `r·L + a·I` with `L = Δ` or `L = A`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator {
    pub operator: Operator,
    pub diffusivity: f64,
    pub reaction: f64,
}

impl Generator {
    pub fn new(operator: Operator, diffusivity: f64, reaction: f64) -> Self {
        Generator {
            operator,
            diffusivity,
            reaction,
        }
    }

    /// Per-mode factors `exp((-r λ_k^p + a) t)`.
    pub fn multipliers(&self, eigenvalues: &[f64], t: f64) -> Vec<f64> {
        eigenvalues
            .iter()
            .map(|&l| ((-self.diffusivity * self.operator.symbol(l) + self.reaction) * t).exp())
            .collect()
    }
}

/// A scalar field in the eigenbasis.
#[derive(Debug, Clone)]
pub struct SpectralField {
    coeffs: Vec<f64>,
    basis: Arc<Basis>,
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.basis, &other.basis) && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(basis: &Arc<Basis>) -> Self {
        SpectralField {
            coeffs: vec![0.0; basis.mode_count()],
            basis: Arc::clone(basis),
        }
    }

    pub fn from_coeffs(basis: &Arc<Basis>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.mode_count() {
            return Err(Error::LengthMismatch {
                expected: basis.mode_count(),
                got: coeffs.len(),
            });
        }
        Ok(SpectralField {
            coeffs,
            basis: Arc::clone(basis),
        })
    }

    pub fn from_grid(basis: &Arc<Basis>, grid: &[f64]) -> Result<Self> {
        if grid.len() != basis.grid_len() {
            return Err(Error::LengthMismatch {
                expected: basis.grid_len(),
                got: grid.len(),
            });
        }
        Ok(SpectralField {
            coeffs: basis.analyze(grid),
            basis: Arc::clone(basis),
        })
    }

    pub fn constant(basis: &Arc<Basis>, value: f64) -> Self {
        let mut f = Self::zeros(basis);
        f.coeffs[0] = value;
        f
    }

    pub fn eigenmode(basis: &Arc<Basis>, k: usize) -> Self {
        let mut f = Self::zeros(basis);
        f.coeffs[k] = 1.0;
        f
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn basis(&self) -> &Arc<Basis> {
        &self.basis
    }

    pub fn to_grid(&self) -> Vec<f64> {
        self.basis.synthesize(&self.coeffs)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        SpectralField {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
            basis: Arc::clone(&self.basis),
        }
    }

    /// `self + factor * other`
    pub fn add_scaled(&self, other: &SpectralField, factor: f64) -> Self {
        SpectralField {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + factor * b)
                .collect(),
            basis: Arc::clone(&self.basis),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }

    /// `L²` norm by Parseval.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// `(Σ_k (1 + λ_k)^s c_k²)^{1/2}`
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.sobolev_norm_sq(s).sqrt()
    }

    pub fn sobolev_norm_sq(&self, s: f64) -> f64 {
        self.coeffs
            .iter()
            .zip(&self.basis.eigenvalues)
            .map(|(c, l)| (1.0 + l).powf(s) * c * c)
            .sum()
    }

    /// Grid quadrature of `|f|^p`, p-th root.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm_grid(&self.basis, &self.to_grid(), p)
    }

    /// `(-Δ)^s f`, with the constant mode handled by the basis' zero-mode policy
    /// when `s < 0`.
    pub fn fractional_laplacian(&self, s: f64) -> Result<Self> {
        let mut out = Vec::with_capacity(self.coeffs.len());
        for (&c, &l) in self.coeffs.iter().zip(&self.basis.eigenvalues) {
            let v = if l > 0.0 {
                l.powf(s) * c
            } else if s > 0.0 {
                0.0
            } else if s == 0.0 {
                c
            } else {
                match self.basis.config.zero_mode {
                    ZeroModePolicy::Drop => 0.0,
                    ZeroModePolicy::Shift => c,
                    ZeroModePolicy::Reject => {
                        if c != 0.0 {
                            return Err(Error::NegativePowerOnZeroMode { power: s });
                        }
                        0.0
                    }
                }
            };
            out.push(v);
        }
        Ok(SpectralField {
            coeffs: out,
            basis: Arc::clone(&self.basis),
        })
    }

    /// Exact action of `exp(t·G)`.
    pub fn semigroup(&self, generator: &Generator, t: f64) -> Self {
        let m = generator.multipliers(&self.basis.eigenvalues, t);
        SpectralField {
            coeffs: self.coeffs.iter().zip(&m).map(|(c, e)| c * e).collect(),
            basis: Arc::clone(&self.basis),
        }
    }
}

/// `(∫|f|^p)^{1/p}` for grid values.
pub fn lp_norm_grid(basis: &Basis, grid: &[f64], p: f64) -> f64 {
    lp_power_grid(basis, grid, p).powf(1.0 / p)
}

/// `∫|f|^p` for grid values.
pub fn lp_power_grid(basis: &Basis, grid: &[f64], p: f64) -> f64 {
    basis.integrate(&grid.iter().map(|v| v.abs().powf(p)).collect::<Vec<_>>())
}
