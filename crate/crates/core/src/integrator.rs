//! Exponential-Euler time stepping of the cutoff system, stopping-time
//! bookkeeping and glueing of local solutions.
//!
//! One step of size `dt` maps `(u, v)` to
//!
//! ```text
//! u' = E₁(dt)[u + dt(b₁ − c₁ φ η ξ₊^q + s₁ u) + σ₁ g_{γ₁}(u)[ΔW₁]]
//! v' = E₂(dt)[v + dt(b₂ + c₂ φ η ξ₊^q + s₂ v) + σ₂ g_{γ₂}(v)[ΔW₂]]
//! ```
//!
//! with `E₁(t) = exp(t(r₁Δ + a₁))`, `E₂(t) = exp(t(r₂A + a₂))`, `A = −(−Δ)^{ℵ/2}`,
//! `s_j` the Stratonovich drift density (zero for Itô) and `(η, ξ) = (u, v)`
//! for the coupled system. The cutoff factor `φ` is frozen at the left end of
//! each step.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{CounterNoise, IncrementSource, Interpretation, NoiseConfig, NoiseOperator, WienerIncrement};
use crate::spectral::{lp_power_grid, Basis, Generator, Operator, SpectralField};

/// How `ξ^q` is evaluated for possibly negative `ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerPolicy {
    /// `max(ξ, 0)^q`
    #[default]
    Clipped,
    /// `|ξ|^q`
    Absolute,
}

impl PowerPolicy {
    #[inline]
    pub fn apply(self, x: f64, q: f64) -> f64 {
        let base = match self {
            PowerPolicy::Clipped => x.max(0.0),
            PowerPolicy::Absolute => x.abs(),
        };
        if q == 1.0 {
            base
        } else if q == 2.0 {
            base * base
        } else {
            base.powf(q)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Nonlinear terms fully explicit.
    #[default]
    Explicit,
    /// `c₁ φ ξ^q` applied to `u` as a per-step linear decay `1/(1 + dt·c₁φξ^q)`.
    SemiImplicit,
}

/// Dynamics after the last cutoff level is exhausted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PostStop {
    /// Pure diffusion plus multiplicative noise (no reaction, no source).
    #[default]
    Verbatim,
    /// Keep `a_i` and `b_i`, drop only the nonlinearity.
    FullLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub r1: f64,
    pub r2: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub c1: f64,
    pub c2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub q: f64,
    pub aleph: f64,
    /// Smoothness index of the cutoff path norm.
    pub rho: f64,
    /// Smoothness index of the uniform `v` bound; `alpha >= rho`.
    pub alpha: f64,
    pub p_star: f64,
    /// Exponential weight in the `L^{p*}` functional.
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub power: PowerPolicy,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default)]
    pub post_stop: PostStop,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            r1: 1.0,
            r2: 1.0,
            a1: -1.0,
            a2: -1.0,
            b1: 1.0,
            b2: 0.5,
            c1: 1.0,
            c2: 1.0,
            sigma1: 0.2,
            sigma2: 0.2,
            q: 2.0,
            aleph: 1.5,
            rho: 0.0,
            alpha: 0.1,
            p_star: 9.0,
            lambda: 0.0,
            power: PowerPolicy::Clipped,
            scheme: Scheme::Explicit,
            post_stop: PostStop::Verbatim,
        }
    }
}

impl ModelParams {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                out.push(msg);
            }
        };
        need(self.r1 > 0.0, format!("model.r1 must be positive (got {})", self.r1));
        need(self.r2 > 0.0, format!("model.r2 must be positive (got {})", self.r2));
        need(self.a1.is_finite(), format!("model.a1 must be finite (got {})", self.a1));
        need(self.a2.is_finite(), format!("model.a2 must be finite (got {})", self.a2));
        need(self.b1 >= 0.0, format!("model.b1 must be non-negative (got {})", self.b1));
        need(self.b2 >= 0.0, format!("model.b2 must be non-negative (got {})", self.b2));
        need(self.c1 >= 0.0, format!("model.c1 must be non-negative (got {})", self.c1));
        need(self.c2 >= 0.0, format!("model.c2 must be non-negative (got {})", self.c2));
        need(self.sigma1 >= 0.0, format!("model.sigma1 must be non-negative (got {})", self.sigma1));
        need(self.sigma2 >= 0.0, format!("model.sigma2 must be non-negative (got {})", self.sigma2));
        need(self.q >= 1.0, format!("model.q must be at least 1 (got {})", self.q));
        need(
            self.aleph > 1.0 && self.aleph <= 2.0,
            format!("model.aleph must lie in (1, 2] (got {})", self.aleph),
        );
        need(
            self.alpha >= self.rho,
            format!("model.alpha must be >= model.rho (got {} < {})", self.alpha, self.rho),
        );
        need(self.p_star >= 2.0, format!("model.p_star must be at least 2 (got {})", self.p_star));
        need(self.lambda >= 0.0, format!("model.lambda must be non-negative (got {})", self.lambda));
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

/// Smooth cutoff: 1 on `|x| <= 1`, 0 on `|x| >= 2`, monotone in between.
pub fn psi(x: f64) -> f64 {
    let a = x.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        let bump = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
        let up = bump(2.0 - a);
        up / (up + bump(a - 1.0))
    }
}

/// Running path norm `h = sup|ξ|_{H^ρ} + (∫|ξ|²_{H^{ρ+ℵ/2}})^{1/2}` and `φ_κ = ψ(h/κ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffState {
    pub kappa: f64,
    pub running_sup: f64,
    pub running_int: f64,
    pub h_value: f64,
    pub phi_value: f64,
    rho: f64,
    aleph: f64,
    last_dissipation: f64,
}

impl CutoffState {
    pub fn start(xi: &SpectralField, kappa: f64, rho: f64, aleph: f64) -> Self {
        let sup = xi.sobolev_norm(rho);
        let mut s = CutoffState {
            kappa,
            running_sup: sup,
            running_int: 0.0,
            h_value: sup,
            phi_value: 1.0,
            rho,
            aleph,
            last_dissipation: xi.sobolev_norm_sq(rho + aleph / 2.0),
        };
        s.phi_value = psi(s.h_value / kappa);
        s
    }

    /// Extends the path by one step ending at `xi`.
    pub fn advance(&mut self, xi: &SpectralField, dt: f64) {
        let diss = xi.sobolev_norm_sq(self.rho + self.aleph / 2.0);
        self.running_sup = self.running_sup.max(xi.sobolev_norm(self.rho));
        self.running_int += 0.5 * dt * (self.last_dissipation + diss);
        self.last_dissipation = diss;
        self.h_value = self.running_sup + self.running_int.sqrt();
        self.phi_value = psi(self.h_value / self.kappa);
    }

    pub fn stopped(&self) -> bool {
        self.h_value >= self.kappa
    }
}

/// Which right-hand side a stepper integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dynamics {
    Cutoff,
    Linear,
}

/// Source of the nonlinear forcing `η·ξ^q`.
#[derive(Debug, Clone, Copy)]
pub enum Control<'a> {
    /// `(η, ξ) = (u, v)`
    Coupled,
    Frozen {
        eta: &'a SpectralField,
        xi: &'a SpectralField,
    },
}

/// Fields together with their grid values.
#[derive(Debug, Clone)]
pub struct State {
    pub u: SpectralField,
    pub v: SpectralField,
    pub u_grid: Vec<f64>,
    pub v_grid: Vec<f64>,
}

impl State {
    pub fn new(u: SpectralField, v: SpectralField) -> Self {
        let u_grid = u.to_grid();
        let v_grid = v.to_grid();
        State { u, v, u_grid, v_grid }
    }
}

/// Per-`dt` tables for one parameter set.
#[derive(Debug, Clone)]
pub struct Stepper {
    basis: Arc<Basis>,
    params: ModelParams,
    dynamics: Dynamics,
    dt: f64,
    prop_u: Vec<f64>,
    prop_v: Vec<f64>,
    noise_u: NoiseOperator,
    noise_v: NoiseOperator,
    strat_u: Option<Vec<f64>>,
    strat_v: Option<Vec<f64>>,
    b1: f64,
    b2: f64,
}

impl Stepper {
    pub fn new(
        basis: &Arc<Basis>,
        params: &ModelParams,
        noise: &NoiseConfig,
        dt: f64,
        dynamics: Dynamics,
    ) -> Self {
        let keep_linear = dynamics == Dynamics::Cutoff || params.post_stop == PostStop::FullLinear;
        let (a1, a2, b1, b2) = if keep_linear {
            (params.a1, params.a2, params.b1, params.b2)
        } else {
            (0.0, 0.0, 0.0, 0.0)
        };
        let gen_u = Generator::new(Operator::Laplace, params.r1, a1);
        let gen_v = Generator::new(Operator::Fractional { aleph: params.aleph }, params.r2, a2);
        let noise_u = NoiseOperator::new(basis, noise.gamma1, noise.modes);
        let noise_v = NoiseOperator::new(basis, noise.gamma2, noise.modes);
        let strat = |op: &NoiseOperator, sigma: f64| {
            (noise.interpretation == Interpretation::Stratonovich && sigma != 0.0)
                .then(|| op.trace_density().iter().map(|s| 0.5 * sigma * sigma * s).collect())
        };
        Stepper {
            basis: Arc::clone(basis),
            params: *params,
            dynamics,
            dt,
            prop_u: gen_u.multipliers(basis.eigenvalues(), dt),
            prop_v: gen_v.multipliers(basis.eigenvalues(), dt),
            strat_u: strat(&noise_u, params.sigma1),
            strat_v: strat(&noise_v, params.sigma2),
            noise_u,
            noise_v,
            b1,
            b2,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn noise_mode_count(&self) -> usize {
        self.noise_u.mode_count()
    }

    /// One exponential-Euler step.
    pub fn step(
        &self,
        state: &State,
        control: Control<'_>,
        phi: f64,
        inc: &[WienerIncrement; 2],
    ) -> State {
        let p = &self.params;
        let dt = self.dt;
        let ug = &state.u_grid;
        let vg = &state.v_grid;
        let n = ug.len();

        let mut u_pre = ug.clone();
        let mut v_pre = vg.clone();

        if p.sigma1 != 0.0 {
            let w = self.noise_u.colored_grid(&inc[0].dw);
            for i in 0..n {
                u_pre[i] += p.sigma1 * ug[i] * w[i];
            }
        }
        if p.sigma2 != 0.0 {
            let w = self.noise_v.colored_grid(&inc[1].dw);
            for i in 0..n {
                v_pre[i] += p.sigma2 * vg[i] * w[i];
            }
        }
        if let Some(s) = &self.strat_u {
            for i in 0..n {
                u_pre[i] += dt * s[i] * ug[i];
            }
        }
        if let Some(s) = &self.strat_v {
            for i in 0..n {
                v_pre[i] += dt * s[i] * vg[i];
            }
        }
        if self.b1 != 0.0 {
            u_pre.iter_mut().for_each(|x| *x += dt * self.b1);
        }
        if self.b2 != 0.0 {
            v_pre.iter_mut().for_each(|x| *x += dt * self.b2);
        }

        let coupled = self.dynamics == Dynamics::Cutoff && phi != 0.0 && (p.c1 != 0.0 || p.c2 != 0.0);
        if coupled {
            let frozen;
            let (eta, xi): (&[f64], &[f64]) = match control {
                Control::Coupled => (ug, vg),
                Control::Frozen { eta, xi } => {
                    frozen = (eta.to_grid(), xi.to_grid());
                    (&frozen.0, &frozen.1)
                }
            };
            for i in 0..n {
                let xq = p.power.apply(xi[i], p.q);
                let nl = phi * eta[i] * xq;
                match p.scheme {
                    Scheme::Explicit => u_pre[i] -= dt * p.c1 * nl,
                    Scheme::SemiImplicit => u_pre[i] /= 1.0 + dt * p.c1 * phi * xq,
                }
                v_pre[i] += dt * p.c2 * nl;
            }
        }

        let mut u = SpectralField::from_grid(&self.basis, &u_pre).expect("grid length");
        let mut v = SpectralField::from_grid(&self.basis, &v_pre).expect("grid length");
        for (c, e) in u.coeffs_mut().iter_mut().zip(&self.prop_u) {
            *c *= e;
        }
        for (c, e) in v.coeffs_mut().iter_mut().zip(&self.prop_v) {
            *c *= e;
        }
        State::new(u, v)
    }
}

/// Per-step scalar series of one path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormSeries {
    pub u_l2: Vec<f64>,
    pub u_lp: Vec<f64>,
    pub v_halpha: Vec<f64>,
    pub v_halpha_aleph: Vec<f64>,
    pub h: Vec<f64>,
    pub phi: Vec<f64>,
    /// Grid minima, for positivity diagnostics.
    pub u_min: Vec<f64>,
    pub v_min: Vec<f64>,
}

impl NormSeries {
    fn push(&mut self, basis: &Basis, params: &ModelParams, state: &State, cutoff: &CutoffState) {
        self.u_l2.push(state.u.l2_norm());
        self.u_lp
            .push(lp_power_grid(basis, &state.u_grid, params.p_star).powf(1.0 / params.p_star));
        self.v_halpha.push(state.v.sobolev_norm(params.alpha));
        self.v_halpha_aleph
            .push(state.v.sobolev_norm(params.alpha + params.aleph / 2.0));
        self.h.push(cutoff.h_value);
        self.phi.push(cutoff.phi_value);
        self.u_min.push(state.u_grid.iter().copied().fold(f64::INFINITY, f64::min));
        self.v_min.push(state.v_grid.iter().copied().fold(f64::INFINITY, f64::min));
    }

    pub fn len(&self) -> usize {
        self.u_l2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_l2.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlueEvent {
    pub kappa: f64,
    pub time: f64,
    pub step: usize,
}

/// Trajectory of one path.
#[derive(Debug, Clone)]
pub struct PathRecord {
    pub times: Vec<f64>,
    pub norms: NormSeries,
    pub snapshot_steps: Vec<usize>,
    pub u_snapshots: Vec<SpectralField>,
    pub v_snapshots: Vec<SpectralField>,
    /// First time the path norm reaches the (first) cutoff level.
    pub stop_time: Option<f64>,
    pub stop_step: Option<usize>,
    pub glue_events: Vec<GlueEvent>,
}

impl PathRecord {
    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshot_steps.iter().map(|&n| self.times[n]).collect()
    }

    pub fn final_u(&self) -> &SpectralField {
        self.u_snapshots.last().expect("final snapshot")
    }

    pub fn final_v(&self) -> &SpectralField {
        self.v_snapshots.last().expect("final snapshot")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordOptions {
    /// Snapshot every `stride` steps; 0 keeps only the initial and final state.
    pub snapshot_stride: usize,
}

impl Default for RecordOptions {
    fn default() -> Self {
        RecordOptions { snapshot_stride: 0 }
    }
}

impl RecordOptions {
    pub fn every(stride: usize) -> Self {
        RecordOptions {
            snapshot_stride: stride,
        }
    }

    fn wants(&self, step: usize, last: usize) -> bool {
        step == 0 || step == last || (self.snapshot_stride > 0 && step % self.snapshot_stride == 0)
    }
}

struct Recorder {
    record: PathRecord,
    opts: RecordOptions,
    steps: usize,
}

impl Recorder {
    fn new(steps: usize, dt: f64, opts: RecordOptions) -> Self {
        Recorder {
            record: PathRecord {
                times: (0..=steps).map(|n| n as f64 * dt).collect(),
                norms: NormSeries::default(),
                snapshot_steps: Vec::new(),
                u_snapshots: Vec::new(),
                v_snapshots: Vec::new(),
                stop_time: None,
                stop_step: None,
                glue_events: Vec::new(),
            },
            opts,
            steps,
        }
    }

    fn push(&mut self, step: usize, basis: &Basis, params: &ModelParams, state: &State, cutoff: &CutoffState) {
        self.record.norms.push(basis, params, state, cutoff);
        if self.opts.wants(step, self.steps) {
            self.record.snapshot_steps.push(step);
            self.record.u_snapshots.push(state.u.clone());
            self.record.v_snapshots.push(state.v.clone());
        }
    }
}

fn check_finite(state: &State, step: usize, dt: f64) -> Result<()> {
    if state.u.is_finite() && state.v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            step,
            time: step as f64 * dt,
        })
    }
}

/// Model, space, noise and time grid of a simulation.
#[derive(Debug, Clone)]
pub struct Problem {
    pub params: ModelParams,
    pub basis: Arc<Basis>,
    pub noise: NoiseConfig,
    pub t_end: f64,
    pub dt: f64,
}

impl Problem {
    pub fn new(
        params: ModelParams,
        basis: Arc<Basis>,
        noise: NoiseConfig,
        t_end: f64,
        dt: f64,
    ) -> Result<Self> {
        let mut v = params.violations();
        v.extend(noise.violations());
        if !(dt > 0.0) {
            v.push(format!("time.dt must be positive (got {dt})"));
        }
        if !(t_end > 0.0) {
            v.push(format!("time.t_end must be positive (got {t_end})"));
        }
        if v.is_empty() {
            let steps = (t_end / dt).round();
            if steps < 1.0 || ((steps * dt - t_end) / t_end).abs() > 1e-9 {
                v.push(format!("time.t_end ({t_end}) must be an integer multiple of time.dt ({dt})"));
            }
        }
        if !v.is_empty() {
            return Err(Error::Validation(v));
        }
        Ok(Problem {
            params,
            basis,
            noise,
            t_end,
            dt,
        })
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn stepper(&self, dynamics: Dynamics) -> Stepper {
        Stepper::new(&self.basis, &self.params, &self.noise, self.dt, dynamics)
    }

    /// Same problem with a different step size.
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        Problem::new(self.params, Arc::clone(&self.basis), self.noise, self.t_end, dt)
    }

    pub fn counter_noise(&self, path_id: u64) -> CounterNoise {
        let count = crate::noise::noise_modes(&self.basis, self.noise.modes).len();
        CounterNoise::new(self.noise.seed, path_id, count)
    }

    /// Cutoff system with threshold `kappa` on path `path_id`.
    pub fn simulate_path(
        &self,
        u0: &SpectralField,
        v0: &SpectralField,
        kappa: f64,
        path_id: u64,
        opts: RecordOptions,
    ) -> Result<PathRecord> {
        self.simulate_path_with(u0, v0, kappa, &self.counter_noise(path_id), opts)
    }

    pub fn simulate_path_with<S: IncrementSource>(
        &self,
        u0: &SpectralField,
        v0: &SpectralField,
        kappa: f64,
        source: &S,
        opts: RecordOptions,
    ) -> Result<PathRecord> {
        let p = &self.params;
        let steps = self.steps();
        let stepper = self.stepper(Dynamics::Cutoff);
        let mut rec = Recorder::new(steps, self.dt, opts);
        let mut state = State::new(u0.clone(), v0.clone());
        let mut cutoff = CutoffState::start(v0, kappa, p.rho, p.aleph);
        rec.push(0, &self.basis, p, &state, &cutoff);
        if cutoff.stopped() {
            rec.record.stop_time = Some(0.0);
            rec.record.stop_step = Some(0);
        }
        for n in 0..steps {
            let t = n as f64 * self.dt;
            let inc = source.increments(0, n, t, self.dt);
            state = stepper.step(&state, Control::Coupled, cutoff.phi_value, &inc);
            check_finite(&state, n + 1, self.dt)?;
            cutoff.advance(&state.v, self.dt);
            rec.push(n + 1, &self.basis, p, &state, &cutoff);
            if cutoff.stopped() && rec.record.stop_step.is_none() {
                rec.record.stop_step = Some(n + 1);
                rec.record.stop_time = Some((n + 1) as f64 * self.dt);
            }
        }
        Ok(rec.record)
    }

    /// Concatenation of cutoff solutions along the stopping times of an
    /// increasing threshold schedule; after the last threshold the path follows
    /// the linear system (or fails with `ScheduleExhausted`).
    pub fn simulate_glued(
        &self,
        u0: &SpectralField,
        v0: &SpectralField,
        schedule: &[f64],
        path_id: u64,
        linear_fallback: bool,
        opts: RecordOptions,
    ) -> Result<PathRecord> {
        if schedule.is_empty() || schedule.windows(2).any(|w| w[0] >= w[1]) || schedule[0] <= 0.0 {
            return Err(Error::invalid("cutoff.schedule must be positive and strictly increasing"));
        }
        let p = &self.params;
        let steps = self.steps();
        let source = self.counter_noise(path_id);
        let cutoff_stepper = self.stepper(Dynamics::Cutoff);
        let mut linear_stepper = None;
        let mut rec = Recorder::new(steps, self.dt, opts);
        let mut state = State::new(u0.clone(), v0.clone());
        let mut segment = 0usize;
        let mut cutoff = CutoffState::start(v0, schedule[0], p.rho, p.aleph);
        let mut n = 0usize;

        // moves to the next threshold while the current one is already reached
        let settle = |cutoff: &mut CutoffState, segment: &mut usize, state: &State, n: usize, rec: &mut Recorder| {
            while *segment < schedule.len() && cutoff.stopped() {
                rec.record.glue_events.push(GlueEvent {
                    kappa: schedule[*segment],
                    time: n as f64 * self.dt,
                    step: n,
                });
                if rec.record.stop_step.is_none() {
                    rec.record.stop_step = Some(n);
                    rec.record.stop_time = Some(n as f64 * self.dt);
                }
                *segment += 1;
                if *segment < schedule.len() {
                    *cutoff = CutoffState::start(&state.v, schedule[*segment], p.rho, p.aleph);
                }
            }
        };

        settle(&mut cutoff, &mut segment, &state, 0, &mut rec);
        rec.push(0, &self.basis, p, &state, &cutoff);
        while n < steps {
            let t = n as f64 * self.dt;
            let inc = source.increments(segment as u64, n, t, self.dt);
            if segment < schedule.len() {
                state = cutoff_stepper.step(&state, Control::Coupled, cutoff.phi_value, &inc);
                check_finite(&state, n + 1, self.dt)?;
                cutoff.advance(&state.v, self.dt);
            } else {
                if !linear_fallback {
                    return Err(Error::ScheduleExhausted { time: t });
                }
                let stepper = linear_stepper.get_or_insert_with(|| self.stepper(Dynamics::Linear));
                state = stepper.step(&state, Control::Coupled, 0.0, &inc);
                check_finite(&state, n + 1, self.dt)?;
                cutoff.advance(&state.v, self.dt);
                cutoff.phi_value = 0.0;
            }
            n += 1;
            if segment < schedule.len() {
                settle(&mut cutoff, &mut segment, &state, n, &mut rec);
                if segment >= schedule.len() {
                    cutoff.phi_value = 0.0;
                }
            }
            rec.push(n, &self.basis, p, &state, &cutoff);
        }
        Ok(rec.record)
    }
}

/// `sup_{s≤t}|v(s)|_{H^ρ} + (∫₀ᵗ |v(s)|²_{H^{ρ+ℵ/2}} ds)^{1/2}` over the
/// recorded snapshots (trapezoid in time).
pub fn pathspace_norm(record: &PathRecord, rho: f64, aleph: f64, t: f64) -> f64 {
    let times = record.snapshot_times();
    let mut sup: f64 = 0.0;
    let mut integral = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (time, v) in times.iter().zip(&record.v_snapshots) {
        if *time > t + 1e-12 {
            break;
        }
        sup = sup.max(v.sobolev_norm(rho));
        let d = v.sobolev_norm_sq(rho + aleph / 2.0);
        if let Some((pt, pd)) = prev {
            integral += 0.5 * (time - pt) * (pd + d);
        }
        prev = Some((*time, d));
    }
    sup + integral.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{Boundary, SpaceConfig};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn setup(params: ModelParams, t_end: f64, dt: f64) -> Problem {
        let basis = Basis::new(SpaceConfig::new(1, Boundary::Neumann, 8)).unwrap();
        Problem::new(params, basis, NoiseConfig::new(1.0, 1.0, 11), t_end, dt).unwrap()
    }

    fn smooth_data(b: &Arc<Basis>, mean: f64, amp: f64) -> SpectralField {
        let mut f = SpectralField::constant(b, mean);
        f.coeffs_mut()[1] = amp;
        f
    }

    #[test]
    fn psi_shape() {
        assert_eq!(psi(0.0), 1.0);
        assert_eq!(psi(1.0), 1.0);
        assert_eq!(psi(-1.0), 1.0);
        assert_eq!(psi(2.0), 0.0);
        assert_eq!(psi(5.0), 0.0);
        let xs: Vec<f64> = (0..=100).map(|i| 1.0 + i as f64 / 100.0).collect();
        assert!(xs.windows(2).all(|w| psi(w[1]) <= psi(w[0])));
        assert!(psi(1.5) > 0.0 && psi(1.5) < 1.0);
    }

    #[test]
    fn pure_semigroup_when_everything_off() {
        let params = ModelParams {
            sigma1: 0.0,
            sigma2: 0.0,
            c1: 0.0,
            c2: 0.0,
            b1: 0.0,
            b2: 0.0,
            a1: -0.5,
            ..ModelParams::default()
        };
        let pr = setup(params, 0.1, 0.01);
        let u0 = SpectralField::eigenmode(&pr.basis, 2);
        let v0 = SpectralField::eigenmode(&pr.basis, 3);
        let rec = pr.simulate_path(&u0, &v0, 1e9, 0, RecordOptions::default()).unwrap();
        let lam2 = 4.0 * PI * PI;
        let lam3: f64 = 9.0 * PI * PI;
        assert_relative_eq!(
            rec.final_u().coeffs()[2],
            ((-lam2 - 0.5) * 0.1).exp(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            rec.final_v().coeffs()[3],
            ((-lam3.powf(0.75) - 1.0) * 0.1).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn zero_is_absorbing_without_sources() {
        let params = ModelParams {
            b1: 0.0,
            b2: 0.0,
            ..ModelParams::default()
        };
        let pr = setup(params, 0.05, 0.001);
        let z = SpectralField::zeros(&pr.basis);
        let rec = pr.simulate_path(&z, &z, 1.0, 3, RecordOptions::every(1)).unwrap();
        assert!(rec.u_snapshots.iter().chain(&rec.v_snapshots).all(|f| f.coeffs().iter().all(|&c| c == 0.0)));
    }

    #[test]
    fn huge_kappa_never_cuts() {
        let pr = setup(ModelParams::default(), 0.1, 0.001);
        let u0 = smooth_data(&pr.basis, 1.0, 0.3);
        let v0 = smooth_data(&pr.basis, 0.5, 0.2);
        let rec = pr.simulate_path(&u0, &v0, 1e9, 0, RecordOptions::default()).unwrap();
        assert!(rec.norms.phi.iter().all(|&p| p == 1.0));
        assert!(rec.stop_time.is_none());
        assert_eq!(rec.norms.len(), 101);
    }

    #[test]
    fn cutoff_series_is_consistent() {
        let params = ModelParams {
            sigma2: 2.0,
            ..ModelParams::default()
        };
        let pr = setup(params, 0.2, 0.001);
        let u0 = smooth_data(&pr.basis, 1.0, 0.3);
        let v0 = smooth_data(&pr.basis, 0.5, 0.2);
        let kappa = 1.0;
        let rec = pr.simulate_path(&u0, &v0, kappa, 1, RecordOptions::default()).unwrap();
        let h = &rec.norms.h;
        assert!(h.windows(2).all(|w| w[1] >= w[0]));
        for (&h, &phi) in h.iter().zip(&rec.norms.phi) {
            if h <= kappa {
                assert_eq!(phi, 1.0);
            }
            if h >= 2.0 * kappa {
                assert_eq!(phi, 0.0);
            }
        }
        if let Some(n) = rec.stop_step {
            assert!(h[n] >= kappa && (n == 0 || h[n - 1] < kappa));
        }
    }

    #[test]
    fn pathspace_norm_constant_path() {
        let b = Basis::new(SpaceConfig::new(1, Boundary::Neumann, 8)).unwrap();
        let phi1 = SpectralField::eigenmode(&b, 1);
        let rec = PathRecord {
            times: vec![0.0, 0.5, 1.0],
            norms: NormSeries::default(),
            snapshot_steps: vec![0, 1, 2],
            u_snapshots: vec![phi1.clone(); 3],
            v_snapshots: vec![phi1.clone(); 3],
            stop_time: None,
            stop_step: None,
            glue_events: vec![],
        };
        let (rho, aleph) = (0.3, 1.5);
        let lam = PI * PI;
        let want = |t: f64| (1.0 + lam).powf(rho / 2.0) + t.sqrt() * (1.0 + lam).powf((rho + aleph / 2.0) / 2.0);
        assert_relative_eq!(pathspace_norm(&rec, rho, aleph, 1.0), want(1.0), max_relative = 1e-13);
        assert_relative_eq!(pathspace_norm(&rec, rho, aleph, 0.0), want(0.0), max_relative = 1e-13);
        assert!(pathspace_norm(&rec, rho, aleph, 0.5) <= pathspace_norm(&rec, rho, aleph, 1.0));
    }

    #[test]
    fn glue_without_event_matches_single_kappa() {
        let pr = setup(ModelParams::default(), 0.05, 0.001);
        let u0 = smooth_data(&pr.basis, 1.0, 0.3);
        let v0 = smooth_data(&pr.basis, 0.5, 0.2);
        let single = pr.simulate_path(&u0, &v0, 50.0, 4, RecordOptions::every(1)).unwrap();
        let glued = pr
            .simulate_glued(&u0, &v0, &[50.0, 60.0], 4, true, RecordOptions::every(1))
            .unwrap();
        assert!(glued.glue_events.is_empty());
        assert_eq!(single.u_snapshots, glued.u_snapshots);
        assert_eq!(single.v_snapshots, glued.v_snapshots);
    }

    #[test]
    fn glue_schedule_exhausted() {
        let pr = setup(ModelParams::default(), 0.05, 0.001);
        let u0 = smooth_data(&pr.basis, 1.0, 0.3);
        let v0 = smooth_data(&pr.basis, 0.5, 0.2);
        let r = pr.simulate_glued(&u0, &v0, &[0.1], 0, false, RecordOptions::default());
        assert!(matches!(r, Err(Error::ScheduleExhausted { .. })));
        let ok = pr.simulate_glued(&u0, &v0, &[0.1], 0, true, RecordOptions::default()).unwrap();
        assert_eq!(ok.glue_events.len(), 1);
        assert_eq!(ok.glue_events[0].step, 0);
    }

    #[test]
    fn rejects_bad_params() {
        let params = ModelParams {
            r1: -1.0,
            aleph: 2.5,
            ..ModelParams::default()
        };
        let v = params.violations();
        assert_eq!(v.len(), 2);
        assert!(v[0].contains("r1"));
    }

    #[test]
    fn nonfinite_is_reported() {
        let params = ModelParams {
            a1: 1000.0,
            ..ModelParams::default()
        };
        let pr = setup(params, 1.0, 1.0);
        let u0 = SpectralField::constant(&pr.basis, 1.0);
        let v0 = SpectralField::constant(&pr.basis, 1.0);
        let r = pr.simulate_path(&u0, &v0, 10.0, 0, RecordOptions::default());
        assert!(matches!(r, Err(Error::NonFinite { step: 1, .. })));
    }
}
