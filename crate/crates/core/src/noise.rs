//! Cylindrical Wiener noise in the eigenbasis and the linear multiplication
//! operator `g_γ(u)[h] = u·(-Δ)^{-γ/2} h`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{Basis, SpectralField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpretation {
    #[default]
    Ito,
    Stratonovich,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub gamma1: f64,
    pub gamma2: f64,
    /// Retained noise modes; all admissible modes when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[serde(default)]
    pub interpretation: Interpretation,
    #[serde(default)]
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig::new(1.0, 1.0, 0)
    }
}

impl NoiseConfig {
    pub fn new(gamma1: f64, gamma2: f64, seed: u64) -> Self {
        NoiseConfig {
            gamma1,
            gamma2,
            modes: None,
            interpretation: Interpretation::Ito,
            seed,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.gamma1 > 0.0) {
            out.push(format!("noise.gamma1 must be positive (got {})", self.gamma1));
        }
        if !(self.gamma2 > 0.0) {
            out.push(format!("noise.gamma2 must be positive (got {})", self.gamma2));
        }
        if self.modes == Some(0) {
            out.push("noise.modes must be at least 1".to_string());
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

/// Flat indices of the modes carrying noise: the first `count` modes with a
/// usable eigenvalue under the basis' zero-mode policy.
pub fn noise_modes(basis: &Basis, count: Option<usize>) -> Vec<usize> {
    let all = (0..basis.mode_count()).filter(|&k| basis.regularized_eigenvalue(k).is_some());
    match count {
        Some(c) => all.take(c).collect(),
        None => all.collect(),
    }
}

/// Brownian increments of one process family over one step.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerIncrement {
    pub dw: Vec<f64>,
    pub t: f64,
    pub dt: f64,
}

impl WienerIncrement {
    pub fn zero(count: usize, t: f64, dt: f64) -> Self {
        WienerIncrement {
            dw: vec![0.0; count],
            t,
            dt,
        }
    }
}

/// Supplies the increments of both processes for step `step` of a segment.
pub trait IncrementSource: Sync {
    fn increments(&self, segment: u64, step: usize, t: f64, dt: f64) -> [WienerIncrement; 2];
    fn mode_count(&self) -> usize;
}

/// Counter-based increments keyed by `(seed, path, segment, process, step)`.
///
/// Each key selects an independent ChaCha stream, so any step of any path can
/// be regenerated without replaying the ones before it.
#[derive(Debug, Clone, Copy)]
pub struct CounterNoise {
    pub seed: u64,
    pub path_id: u64,
    pub count: usize,
}

impl CounterNoise {
    pub fn new(seed: u64, path_id: u64, count: usize) -> Self {
        CounterNoise {
            seed,
            path_id,
            count,
        }
    }

    fn rng(&self, segment: u64, process: u64, step: usize) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        for (chunk, word) in key
            .chunks_exact_mut(8)
            .zip([self.seed, self.path_id, segment, process])
        {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(step as u64);
        rng
    }

    pub fn standard_normals(&self, segment: u64, process: u64, step: usize) -> Vec<f64> {
        let mut rng = self.rng(segment, process, step);
        (0..self.count).map(|_| StandardNormal.sample(&mut rng)).collect()
    }
}

impl IncrementSource for CounterNoise {
    fn increments(&self, segment: u64, step: usize, t: f64, dt: f64) -> [WienerIncrement; 2] {
        let s = dt.sqrt();
        [1u64, 2].map(|j| WienerIncrement {
            dw: self
                .standard_normals(segment, j, step)
                .into_iter()
                .map(|z| z * s)
                .collect(),
            t,
            dt,
        })
    }

    fn mode_count(&self) -> usize {
        self.count
    }
}

/// Coarse increments assembled from `factor` consecutive increments of a finer
/// source, so runs at different step sizes share one Brownian path.
#[derive(Debug, Clone, Copy)]
pub struct RefinedNoise<S> {
    pub fine: S,
    pub factor: usize,
}

impl<S: IncrementSource> IncrementSource for RefinedNoise<S> {
    fn increments(&self, segment: u64, step: usize, t: f64, dt: f64) -> [WienerIncrement; 2] {
        let fine_dt = dt / self.factor as f64;
        let mut out = [
            WienerIncrement::zero(self.fine.mode_count(), t, dt),
            WienerIncrement::zero(self.fine.mode_count(), t, dt),
        ];
        for i in 0..self.factor {
            let fine_step = step * self.factor + i;
            let inc = self
                .fine
                .increments(segment, fine_step, t + i as f64 * fine_dt, fine_dt);
            for (acc, part) in out.iter_mut().zip(&inc) {
                for (a, d) in acc.dw.iter_mut().zip(&part.dw) {
                    *a += d;
                }
            }
        }
        out
    }

    fn mode_count(&self) -> usize {
        self.fine.mode_count()
    }
}

/// `sample_increments` for a single key; see [`CounterNoise`].
pub fn sample_increments(
    config: &NoiseConfig,
    count: usize,
    path_id: u64,
    step: usize,
    t: f64,
    dt: f64,
) -> [WienerIncrement; 2] {
    CounterNoise::new(config.seed, path_id, count).increments(0, step, t, dt)
}

/// `g_γ` restricted to a set of noise modes, with its grid tables.
#[derive(Debug, Clone)]
pub struct NoiseOperator {
    basis: Arc<Basis>,
    gamma: f64,
    modes: Vec<usize>,
    /// `λ_k^{-γ/2}` per retained mode
    weights: Vec<f64>,
    /// `Σ_k λ_k^{-γ} φ_k(x)²` on the grid
    trace_density: Vec<f64>,
}

impl NoiseOperator {
    pub fn new(basis: &Arc<Basis>, gamma: f64, count: Option<usize>) -> Self {
        let modes = noise_modes(basis, count);
        let weights: Vec<f64> = modes
            .iter()
            .map(|&k| basis.regularized_eigenvalue(k).unwrap().powf(-gamma / 2.0))
            .collect();
        let mut trace_density = vec![0.0; basis.grid_len()];
        for (&k, &w) in modes.iter().zip(&weights) {
            for (t, phi) in trace_density.iter_mut().zip(basis.eigenfunction_on_grid(k)) {
                *t += w * w * phi * phi;
            }
        }
        NoiseOperator {
            basis: Arc::clone(basis),
            gamma,
            modes,
            weights,
            trace_density,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn modes(&self) -> &[usize] {
        &self.modes
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Grid values of `(-Δ)^{-γ/2} h` for `h` given on the noise modes.
    pub fn colored_grid(&self, h: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; self.basis.mode_count()];
        for ((&k, &w), &hk) in self.modes.iter().zip(&self.weights).zip(h) {
            c[k] = w * hk;
        }
        self.basis.synthesize(&c)
    }

    /// `g_γ(u)[h]`, product formed on the grid and projected back.
    pub fn apply_g(&self, u: &SpectralField, h: &[f64]) -> SpectralField {
        let w = self.colored_grid(h);
        let prod: Vec<f64> = u.to_grid().iter().zip(&w).map(|(a, b)| a * b).collect();
        SpectralField::from_grid(&self.basis, &prod).expect("grid length")
    }

    /// `σ·g_γ(u)[dW]`
    pub fn noise_term(&self, u: &SpectralField, inc: &WienerIncrement, sigma: f64) -> SpectralField {
        if sigma == 0.0 {
            return SpectralField::zeros(&self.basis);
        }
        self.apply_g(u, &inc.dw).scaled(sigma)
    }

    /// Grid values of `Σ_k λ_k^{-γ} φ_k²`.
    pub fn trace_density(&self) -> &[f64] {
        &self.trace_density
    }

    /// Itô drift `(σ²/2) Σ_k λ_k^{-γ} u φ_k²` for the Stratonovich reading,
    /// zero for Itô.
    pub fn stratonovich_correction(
        &self,
        u: &SpectralField,
        sigma: f64,
        interpretation: Interpretation,
    ) -> SpectralField {
        if interpretation == Interpretation::Ito || sigma == 0.0 {
            return SpectralField::zeros(&self.basis);
        }
        let half = 0.5 * sigma * sigma;
        let prod: Vec<f64> = u
            .to_grid()
            .iter()
            .zip(&self.trace_density)
            .map(|(a, s)| half * a * s)
            .collect();
        SpectralField::from_grid(&self.basis, &prod).expect("grid length")
    }

    /// Hilbert–Schmidt norm squared `Σ_k λ_k^{-γ} |u φ_k|²_{L²}` by grid
    /// quadrature (no projection).
    pub fn hilbert_schmidt_sq(&self, u: &SpectralField) -> f64 {
        let ug = u.to_grid();
        let usq: Vec<f64> = ug.iter().map(|v| v * v).collect();
        self.basis
            .integrate(&usq.iter().zip(&self.trace_density).map(|(a, b)| a * b).collect::<Vec<_>>())
    }
}

/// Partial sum of `Σ_{k≥1} k^{(2/d)(δ₂-γ)}` with a dyadic-block verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsTail {
    pub value: f64,
    pub converged: bool,
    /// Ratio of the last two complete dyadic blocks; below one means decay.
    pub block_ratio: f64,
}

pub fn hs_tail_sum(gamma: f64, delta2: f64, dim: usize, terms: usize) -> HsTail {
    let exponent = (2.0 / dim as f64) * (delta2 - gamma);
    let term = |k: usize| (k as f64).powf(exponent);
    // sum small terms first
    let value: f64 = (1..=terms).rev().map(term).sum();
    let mut blocks = Vec::new();
    let mut lo = 1usize;
    while 2 * lo - 1 <= terms {
        blocks.push((lo..2 * lo).map(term).sum::<f64>());
        lo *= 2;
    }
    let block_ratio = match blocks.len() {
        0 | 1 => f64::NAN,
        n => blocks[n - 1] / blocks[n - 2],
    };
    HsTail {
        value,
        converged: block_ratio < 1.0,
        block_ratio,
    }
}
