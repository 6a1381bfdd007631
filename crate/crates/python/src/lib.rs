//! Python bindings for `gs_spde`.

use std::sync::Arc;

use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gs_spde::config::{parse_config_with, RunConfig};
use gs_spde::convergence::strong_convergence;
use gs_spde::error::Error;
use gs_spde::estimators::{estimate_coupling, estimate_u_l2, estimate_u_pstar, estimate_v_halpha, MomentReport};
use gs_spde::fixed_point::{compute_kset_constants, kset_check, picard_solve, KSetInputs};
use gs_spde::integrator::{PathRecord, RecordOptions};
use gs_spde::param_gate::{check_all, GateInputs, GateReport};
use gs_spde::spectral::{self, Boundary, SpaceConfig, SpectralField};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Validation(_) | Error::Parse(_) | Error::LengthMismatch { .. } | Error::NegativePowerOnZeroMode { .. } => {
            PyValueError::new_err(e.to_string())
        }
        Error::NonFinite { .. } => PyArithmeticError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse_boundary(s: &str) -> PyResult<Boundary> {
    match s.to_ascii_lowercase().as_str() {
        "neumann" => Ok(Boundary::Neumann),
        "periodic" => Ok(Boundary::Periodic),
        _ => Err(PyValueError::new_err(format!("unknown boundary '{s}'"))),
    }
}

/// Laplacian eigenbasis on the unit interval or square.
#[pyclass(frozen, module = "gs_spde_py")]
#[derive(Clone)]
pub struct Basis {
    inner: Arc<spectral::Basis>,
}

#[pymethods]
impl Basis {
    #[new]
    #[pyo3(signature = (dim, modes, boundary = "neumann", grid = None))]
    fn new(dim: usize, modes: usize, boundary: &str, grid: Option<usize>) -> PyResult<Self> {
        let mut cfg = SpaceConfig::new(dim, parse_boundary(boundary)?, modes);
        if let Some(g) = grid {
            cfg = cfg.with_grid(g);
        }
        Ok(Basis {
            inner: spectral::Basis::new(cfg).map_err(to_py)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn mode_count(&self) -> usize {
        self.inner.mode_count()
    }

    #[getter]
    fn grid_len(&self) -> usize {
        self.inner.grid_len()
    }

    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues().to_vec()
    }

    /// Grid nodes as `(x, y)` pairs; `y` is 0 in one dimension.
    fn grid_points(&self) -> Vec<(f64, f64)> {
        self.inner.grid_points().into_iter().map(|p| (p[0], p[1])).collect()
    }

    fn __repr__(&self) -> String {
        let c = self.inner.config();
        format!("Basis(dim={}, modes={}, boundary='{}', grid={})", c.dim, c.modes, c.boundary, c.grid)
    }
}

/// Field stored by its spectral coefficients.
#[pyclass(frozen, module = "gs_spde_py")]
#[derive(Clone)]
pub struct Field {
    inner: SpectralField,
}

#[pymethods]
impl Field {
    #[staticmethod]
    fn from_coeffs(basis: &Basis, coeffs: Vec<f64>) -> PyResult<Self> {
        SpectralField::from_coeffs(&basis.inner, coeffs)
            .map(|inner| Field { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn from_grid(basis: &Basis, values: Vec<f64>) -> PyResult<Self> {
        SpectralField::from_grid(&basis.inner, &values)
            .map(|inner| Field { inner })
            .map_err(to_py)
    }

    #[staticmethod]
    fn constant(basis: &Basis, value: f64) -> Self {
        Field {
            inner: SpectralField::constant(&basis.inner, value),
        }
    }

    #[staticmethod]
    fn eigenmode(basis: &Basis, k: usize) -> PyResult<Self> {
        if k >= basis.inner.mode_count() {
            return Err(PyValueError::new_err(format!("mode {k} out of range")));
        }
        Ok(Field {
            inner: SpectralField::eigenmode(&basis.inner, k),
        })
    }

    fn coeffs(&self) -> Vec<f64> {
        self.inner.coeffs().to_vec()
    }

    fn to_grid(&self) -> Vec<f64> {
        self.inner.to_grid()
    }

    fn l2_norm(&self) -> f64 {
        self.inner.l2_norm()
    }

    fn sobolev_norm(&self, s: f64) -> f64 {
        self.inner.sobolev_norm(s)
    }

    fn lp_norm(&self, p: f64) -> f64 {
        self.inner.lp_norm(p)
    }

    /// `(-Δ)^s` applied spectrally.
    fn fractional_laplacian(&self, s: f64) -> PyResult<Field> {
        self.inner
            .fractional_laplacian(s)
            .map(|inner| Field { inner })
            .map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.coeffs().len()
    }
}

/// One simulated path.
#[pyclass(frozen, module = "gs_spde_py")]
pub struct Trajectory {
    inner: PathRecord,
}

#[pymethods]
impl Trajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    #[getter]
    fn stop_time(&self) -> Option<f64> {
        self.inner.stop_time
    }

    /// `(kappa, time, step)` per glue event.
    #[getter]
    fn glue_events(&self) -> Vec<(f64, f64, usize)> {
        self.inner.glue_events.iter().map(|e| (e.kappa, e.time, e.step)).collect()
    }

    #[getter]
    fn snapshot_steps(&self) -> Vec<usize> {
        self.inner.snapshot_steps.clone()
    }

    /// Norm series keyed by the CSV column names.
    fn norms<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let n = &self.inner.norms;
        let d = PyDict::new_bound(py);
        d.set_item("t", self.inner.times.clone())?;
        d.set_item("u_L2", n.u_l2.clone())?;
        d.set_item("u_Lpstar", n.u_lp.clone())?;
        d.set_item("v_Halpha", n.v_halpha.clone())?;
        d.set_item("v_Halpha_aleph", n.v_halpha_aleph.clone())?;
        d.set_item("h", n.h.clone())?;
        d.set_item("phi", n.phi.clone())?;
        d.set_item("u_min", n.u_min.clone())?;
        d.set_item("v_min", n.v_min.clone())?;
        Ok(d)
    }

    fn final_u(&self) -> Field {
        Field {
            inner: self.inner.final_u().clone(),
        }
    }

    fn final_v(&self) -> Field {
        Field {
            inner: self.inner.final_v().clone(),
        }
    }

    fn snapshots(&self) -> Vec<(Field, Field)> {
        self.inner
            .u_snapshots
            .iter()
            .zip(&self.inner.v_snapshots)
            .map(|(u, v)| (Field { inner: u.clone() }, Field { inner: v.clone() }))
            .collect()
    }
}

fn gate_dict<'py>(py: Python<'py>, r: &GateReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("overall", r.overall())?;
    d.set_item("special_case_d2q2", r.special_case_d2q2)?;
    d.set_item("p_star0", r.p_star0)?;
    d.set_item("p_star1", r.p_star1)?;
    d.set_item("p_star", r.p_star)?;
    let conds = PyDict::new_bound(py);
    for c in &r.conditions {
        conds.set_item(c.name, (c.satisfied, c.margin, c.note.clone()))?;
    }
    d.set_item("conditions", conds)?;
    d.set_item("text", r.to_string())?;
    Ok(d)
}

fn moment_tuple(r: &MomentReport) -> (f64, f64) {
    (r.estimate, r.half_width)
}

/// Evaluate the admissibility conditions for one parameter point.
#[pyfunction]
#[pyo3(signature = (d, q, aleph, alpha, rho, p_star, gamma1, gamma2))]
#[allow(clippy::too_many_arguments)]
fn check_params<'py>(
    py: Python<'py>,
    d: usize,
    q: f64,
    aleph: f64,
    alpha: f64,
    rho: f64,
    p_star: f64,
    gamma1: f64,
    gamma2: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = check_all(&GateInputs {
        d,
        q,
        aleph,
        alpha,
        rho,
        p_star,
        gamma1,
        gamma2,
    });
    gate_dict(py, &r)
}

/// Full run configuration, parsed from TOML plus dotted overrides.
#[pyclass(frozen, module = "gs_spde_py")]
pub struct Config {
    inner: RunConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (text = "", overrides = Vec::new()))]
    fn new(text: &str, overrides: Vec<String>) -> PyResult<Self> {
        parse_config_with(text, &overrides)
            .map(|inner| Config { inner })
            .map_err(to_py)
    }

    fn dump(&self) -> String {
        self.inner.dump()
    }

    fn basis(&self) -> PyResult<Basis> {
        Ok(Basis {
            inner: self.inner.basis().map_err(to_py)?,
        })
    }

    fn initial_data(&self) -> PyResult<(Field, Field)> {
        let b = self.inner.basis().map_err(to_py)?;
        let (u, v) = self.inner.initial_data(&b);
        Ok((Field { inner: u }, Field { inner: v }))
    }

    fn check_params<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        gate_dict(py, &check_all(&self.inner.gate_inputs()))
    }

    /// Cutoff system at `cutoff.kappa`, or the glued run over the schedule.
    #[pyo3(signature = (path = 0, stride = 0, glued = false))]
    fn simulate(&self, py: Python<'_>, path: u64, stride: usize, glued: bool) -> PyResult<Trajectory> {
        let cfg = &self.inner;
        py.allow_threads(|| {
            let pr = cfg.problem()?;
            let (u0, v0) = cfg.initial_data(&pr.basis);
            let opts = RecordOptions::every(stride);
            if glued {
                pr.simulate_glued(&u0, &v0, &cfg.cutoff.schedule, path, cfg.cutoff.linear_fallback, opts)
            } else {
                pr.simulate_path(&u0, &v0, cfg.cutoff.kappa, path, opts)
            }
        })
        .map(|inner| Trajectory { inner })
        .map_err(to_py)
    }

    /// Picard iteration on path `path`; returns residuals, iterate count and
    /// the membership check of the fixed point.
    #[pyo3(signature = (path = 0))]
    fn picard<'py>(&self, py: Python<'py>, path: u64) -> PyResult<Bound<'py, PyDict>> {
        let cfg = &self.inner;
        let pr = cfg.problem().map_err(to_py)?;
        let (u0, v0) = cfg.initial_data(&pr.basis);
        let m = &cfg.model;
        let outcome = py
            .allow_threads(|| picard_solve(&pr, &u0, &v0, cfg.cutoff.kappa, path, cfg.picard.tol, cfg.picard.max_iter))
            .map_err(to_py)?;
        let mut inputs = KSetInputs::from_data(&u0, &v0, m.rho, m.p_star, cfg.cutoff.kappa, pr.t_end, m.lambda);
        inputs.c_t = cfg.kset.c_t;
        inputs.c_kappa = cfg.kset.c_kappa;
        inputs.c2 = cfg.kset.c2;
        let constants = compute_kset_constants(&inputs);
        let check = kset_check(&outcome.fixed_point, &constants, m.rho, m.aleph, m.p_star);
        let d = PyDict::new_bound(py);
        d.set_item("iterates", outcome.iterates)?;
        d.set_item("residuals", outcome.residuals)?;
        d.set_item("in_set", check.in_set)?;
        d.set_item("functionals", check.values.to_vec())?;
        d.set_item("constants", (constants.k1, constants.k2, constants.k3))?;
        let eta: Vec<PyObject> = outcome.fixed_point.eta.into_iter().map(|inner| Field { inner }.into_py(py)).collect();
        let xi: Vec<PyObject> = outcome.fixed_point.xi.into_iter().map(|inner| Field { inner }.into_py(py)).collect();
        d.set_item("eta", eta)?;
        d.set_item("xi", xi)?;
        Ok(d)
    }

    /// Monte Carlo moments as `name -> (estimate, half_width)`.
    #[pyo3(signature = (paths = None))]
    fn estimate<'py>(&self, py: Python<'py>, paths: Option<usize>) -> PyResult<Bound<'py, PyDict>> {
        let cfg = &self.inner;
        let m = &cfg.model;
        let count = paths.unwrap_or(cfg.paths) as u64;
        let records = py
            .allow_threads(|| -> gs_spde::error::Result<Vec<PathRecord>> {
                let pr = cfg.problem()?;
                let (u0, v0) = cfg.initial_data(&pr.basis);
                let opts = RecordOptions::every(cfg.estimate.snapshot_stride);
                (0..count)
                    .map(|id| pr.simulate_path(&u0, &v0, cfg.cutoff.kappa, id, opts))
                    .collect()
            })
            .map_err(to_py)?;
        let pstar = estimate_u_pstar(&records, m.p_star, m.lambda);
        let halpha = estimate_v_halpha(&records, m.alpha, m.aleph);
        let d = PyDict::new_bound(py);
        for r in [
            estimate_u_l2(&records),
            pstar.sup,
            pstar.gradient,
            halpha.sup,
            halpha.dissipation,
            estimate_coupling(&records, m.p_star, m.q, cfg.estimate.m),
        ] {
            d.set_item(r.name.clone(), moment_tuple(&r))?;
        }
        Ok(d)
    }

    /// Strong convergence study; returns `(dts, errors, order)`.
    fn convergence(&self, py: Python<'_>) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
        let cfg = &self.inner;
        py.allow_threads(|| {
            let pr = cfg.problem()?;
            let (u0, v0) = cfg.initial_data(&pr.basis);
            let c = &cfg.convergence;
            strong_convergence(&pr, &u0, &v0, cfg.cutoff.kappa, &c.levels, c.reference_steps, cfg.paths)
        })
        .map(|r| (r.dts, r.errors, r.order))
        .map_err(to_py)
    }
}

#[pymodule]
pub fn gs_spde_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Basis>()?;
    m.add_class::<Field>()?;
    m.add_class::<Trajectory>()?;
    m.add_class::<Config>()?;
    m.add_function(wrap_pyfunction!(check_params, m)?)?;
    Ok(())
}
