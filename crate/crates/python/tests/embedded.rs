use pyo3::prelude::*;
use pyo3::types::PyDict;

use gs_spde_py::gs_spde_py;

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyModule>)>(f: F) {
    static INIT: std::sync::Once = std::sync::Once::new();
    INIT.call_once(|| {
        pyo3::append_to_inittab!(gs_spde_py);
        pyo3::prepare_freethreaded_python();
    });
    Python::with_gil(|py| {
        let m = py.import_bound("gs_spde_py").unwrap();
        f(py, &m);
    });
}

#[test]
fn field_round_trip_from_python() {
    with_module(|py, m| {
        let locals = PyDict::new_bound(py);
        locals.set_item("gs", m).unwrap();
        py.run_bound(
            r#"
b = gs.Basis(2, 4, "periodic")
f = gs.Field.eigenmode(b, 5)
g = gs.Field.from_grid(b, f.to_grid())
err = max(abs(x - y) for x, y in zip(f.coeffs(), g.coeffs()))
norm = f.l2_norm()
"#,
            None,
            Some(&locals),
        )
        .unwrap();
        let err: f64 = locals.get_item("err").unwrap().unwrap().extract().unwrap();
        let norm: f64 = locals.get_item("norm").unwrap().unwrap().extract().unwrap();
        assert!(err < 1e-12);
        assert!((norm - 1.0).abs() < 1e-12);
    });
}

#[test]
fn errors_map_to_python_exceptions() {
    with_module(|py, m| {
        let cfg = m.getattr("Config").unwrap();
        let err = cfg.call1(("[model]\nsigma1 = -1.0\n",)).unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));

        let overrides = vec!["model.a1=1000.0", "time.dt=1.0", "time.t_end=10.0"];
        let cfg = cfg.call1(("", overrides)).unwrap();
        let err = cfg.call_method0("simulate").unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyArithmeticError>(py));
    });
}

#[test]
fn simulate_matches_core() {
    let overrides = vec!["time.t_end=0.02".to_string(), "time.dt=0.001".to_string()];
    let cfg = gs_spde::config::parse_config_with("", &overrides).unwrap();
    let pr = cfg.problem().unwrap();
    let (u0, v0) = cfg.initial_data(&pr.basis);
    let rec = pr
        .simulate_path(&u0, &v0, cfg.cutoff.kappa, 3, gs_spde::integrator::RecordOptions::default())
        .unwrap();
    with_module(|_, m| {
        let c = m.getattr("Config").unwrap().call1(("", overrides.clone())).unwrap();
        let kwargs = PyDict::new_bound(m.py());
        kwargs.set_item("path", 3).unwrap();
        let t = c.call_method("simulate", (), Some(&kwargs)).unwrap();
        let coeffs: Vec<f64> = t.call_method0("final_u").unwrap().call_method0("coeffs").unwrap().extract().unwrap();
        assert_eq!(coeffs, rec.final_u().coeffs());
    });
}
