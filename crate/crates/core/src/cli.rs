//! Command-line front end.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{parse_config_with, RunConfig};
use crate::convergence::strong_convergence;
use crate::error::{Error, Result};
use crate::estimators::{
    estimate_coupling, estimate_u_l2, estimate_u_pstar, estimate_v_halpha, MomentReport,
};
use crate::fixed_point::{
    compute_kset_constants, kset_check, kset_functionals, m_distance, picard_solve, ControlPair, KSetInputs,
};
use crate::integrator::{PathRecord, RecordOptions};
use crate::output::{field_dump_bytes, norm_series_csv, OutputDir};
use crate::param_gate::{check_all, sweep, GateInputs};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "GS_SPDE_OUT";
const DEFAULT_OUT_DIR: &str = "gs-spde-out";

#[derive(Debug, Parser)]
#[command(name = "gs-spde", version, about = "Stochastic Gray-Scott spectral simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration; defaults are used for anything missing.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed of the noise streams.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Ensemble size.
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Dotted config assignment, e.g. `model.c1=0.5`; repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the parameter conditions.
    CheckParams {
        /// Sweep axis as `name:min:max:count`.
        #[arg(long)]
        sweep_x: Option<String>,
        #[arg(long)]
        sweep_y: Option<String>,
    },
    /// Simulate the cutoff system.
    Simulate,
    /// Simulate along an increasing cutoff schedule.
    Glue,
    /// Picard iteration of the frozen-control solution operator.
    FixedPoint,
    /// Monte Carlo moment estimates.
    Estimate,
    /// Strong convergence study.
    Convergence,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CheckParams { .. } => "check-params",
            Command::Simulate => "simulate",
            Command::Glue => "glue",
            Command::FixedPoint => "fixed-point",
            Command::Estimate => "estimate",
            Command::Convergence => "convergence",
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Validation(_) | Error::Parse(_) => 2,
        _ => 1,
    }
}

/// Parses `argv` and runs; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let (code, text) = execute(args);
    print!("{text}");
    code
}

/// As [`main_with_args`], returning the report text instead of printing it.
/// Errors still go to stderr.
pub fn execute<I, T>(args: I) -> (i32, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            return (code, e.render().to_string());
        }
    };
    let cfg = match load_config(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            report_error(&e);
            return (exit_code(&e), String::new());
        }
    };
    let dir = output_dir(&cli.common, &cfg);
    match run(&cli.command, &cfg, &dir) {
        Ok(text) => (0, text),
        Err(e) => {
            report_error(&e);
            (exit_code(&e), String::new())
        }
    }
}

fn report_error(e: &Error) {
    match e {
        Error::Validation(v) => {
            eprintln!("error: invalid configuration");
            for m in v {
                eprintln!("  - {m}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}

pub fn load_config(args: &CommonArgs) -> Result<RunConfig> {
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::Parse(format!("cannot read config {}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut overrides = args.overrides.clone();
    if let Some(s) = args.seed {
        overrides.push(format!("noise.seed={s}"));
    }
    if let Some(m) = args.paths {
        overrides.push(format!("paths={m}"));
    }
    parse_config_with(&text, &overrides)
}

pub fn output_dir(args: &CommonArgs, cfg: &RunConfig) -> PathBuf {
    args.out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Runs one subcommand, writing its artifacts and finally the manifest.
/// Returns the text report printed on success.
pub fn run(command: &Command, cfg: &RunConfig, dir: &std::path::Path) -> Result<String> {
    let start = Instant::now();
    let mut out = OutputDir::create(dir)?;
    let result = match command {
        Command::CheckParams { sweep_x, sweep_y } => check_params(cfg, &mut out, sweep_x.as_deref(), sweep_y.as_deref()),
        Command::Simulate => simulate(cfg, &mut out, false),
        Command::Glue => simulate(cfg, &mut out, true),
        Command::FixedPoint => fixed_point(cfg, &mut out),
        Command::Estimate => estimate(cfg, &mut out),
        Command::Convergence => convergence(cfg, &mut out),
    };
    let manifest = manifest(command.name(), cfg, &out, start.elapsed().as_secs_f64(), result.as_ref().err());
    out.write("manifest.toml", manifest)?;
    result
}

fn manifest(command: &str, cfg: &RunConfig, out: &OutputDir, wall: f64, err: Option<&Error>) -> String {
    let mut run = toml::Table::new();
    run.insert("command".into(), command.into());
    run.insert("seed".into(), toml::Value::Integer(cfg.noise.seed as i64));
    run.insert("paths".into(), toml::Value::Integer(cfg.paths as i64));
    run.insert("code_version".into(), env!("CARGO_PKG_VERSION").into());
    run.insert("status".into(), if err.is_some() { "partial" } else { "complete" }.into());
    if let Some(e) = err {
        run.insert("error".into(), e.to_string().into());
    }
    let files: Vec<toml::Value> = out.files().iter().map(|f| f.as_str().into()).collect();
    run.insert("files".into(), toml::Value::Array(files));
    run.insert("wall_time_seconds".into(), wall.into());
    let mut doc = toml::Table::new();
    doc.insert("run".into(), toml::Value::Table(run));
    doc.insert("config".into(), toml::Value::try_from(cfg).expect("config serializes"));
    toml::to_string(&doc).expect("manifest serializes")
}

fn parse_axis(spec: &str) -> Result<(String, (f64, f64, usize))> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Parse(format!("sweep axis '{spec}' must be name:min:max:count"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let min = parts[1].parse().map_err(|_| bad())?;
    let max = parts[2].parse().map_err(|_| bad())?;
    let n = parts[3].parse().map_err(|_| bad())?;
    Ok((parts[0].to_string(), (min, max, n)))
}

fn check_params(cfg: &RunConfig, out: &mut OutputDir, sx: Option<&str>, sy: Option<&str>) -> Result<String> {
    let inputs: GateInputs = cfg.gate_inputs();
    let report = check_all(&inputs);
    let mut text = format!("{report}\n");
    out.write("gate_report.txt", &text)?;
    if let (Some(sx), Some(sy)) = (sx, sy) {
        let (xa, xr) = parse_axis(sx)?;
        let (ya, yr) = parse_axis(sy)?;
        let points = sweep(&inputs, &xa, xr, &ya, yr)?;
        let mut csv = format!("{xa},{ya},overall,min_margin\n");
        for p in &points {
            writeln!(csv, "{:e},{:e},{},{:e}", p.x, p.y, p.overall as u8, p.min_margin).unwrap();
        }
        out.write("gate_sweep.csv", csv)?;
        writeln!(text, "sweep: {} points written to gate_sweep.csv", points.len()).unwrap();
    } else if sx.is_some() || sy.is_some() {
        return Err(Error::Parse("--sweep-x and --sweep-y must be given together".into()));
    }
    Ok(text)
}

fn warn_gate(cfg: &RunConfig) {
    if !check_all(&cfg.gate_inputs()).overall() {
        eprintln!("warning: parameters fall outside the admissible region (see check-params)");
    }
}

fn write_record(out: &mut OutputDir, cfg: &RunConfig, path: usize, rec: &PathRecord) -> Result<()> {
    out.write(&format!("norms_{path:04}.csv"), norm_series_csv(rec))?;
    if cfg.output.field_dumps {
        for (i, &step) in rec.snapshot_steps.iter().enumerate() {
            let t = rec.times[step];
            out.write(
                &format!("fields/path{path:04}_u_{step:07}.bin"),
                field_dump_bytes(&rec.u_snapshots[i], "u", t)?,
            )?;
            out.write(
                &format!("fields/path{path:04}_v_{step:07}.bin"),
                field_dump_bytes(&rec.v_snapshots[i], "v", t)?,
            )?;
        }
    }
    Ok(())
}

fn simulate_ensemble(cfg: &RunConfig, glued: bool, opts: RecordOptions) -> Result<Vec<PathRecord>> {
    let problem = cfg.problem()?;
    let (u0, v0) = cfg.initial_data(&problem.basis);
    (0..cfg.paths as u64)
        .into_par_iter()
        .map(|id| {
            if glued {
                problem.simulate_glued(&u0, &v0, &cfg.cutoff.schedule, id, cfg.cutoff.linear_fallback, opts)
            } else {
                problem.simulate_path(&u0, &v0, cfg.cutoff.kappa, id, opts)
            }
        })
        .collect()
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "inf".to_string(), |v| format!("{v:e}"))
}

fn simulate(cfg: &RunConfig, out: &mut OutputDir, glued: bool) -> Result<String> {
    warn_gate(cfg);
    let records = simulate_ensemble(cfg, glued, RecordOptions::every(cfg.output.snapshot_stride))?;
    let mut summary = String::from("path,stop_time,final_u_L2,final_v_Halpha,min_u,min_v,glue_events\n");
    let mut events = String::from("path,kappa,time,step\n");
    for (i, rec) in records.iter().enumerate() {
        write_record(out, cfg, i, rec)?;
        let n = &rec.norms;
        let min = |xs: &[f64]| xs.iter().copied().fold(f64::INFINITY, f64::min);
        writeln!(
            summary,
            "{i},{},{:e},{:e},{:e},{:e},{}",
            fmt_opt(rec.stop_time),
            n.u_l2.last().unwrap(),
            n.v_halpha.last().unwrap(),
            min(&n.u_min),
            min(&n.v_min),
            rec.glue_events.len()
        )
        .unwrap();
        for e in &rec.glue_events {
            writeln!(events, "{i},{:e},{:e},{}", e.kappa, e.time, e.step).unwrap();
        }
    }
    out.write("summary.csv", &summary)?;
    if glued {
        out.write("glue_events.csv", &events)?;
    }
    Ok(format!(
        "{} path(s) of {} steps written to {}\n",
        records.len(),
        records[0].times.len() - 1,
        out.root().display()
    ))
}

fn fixed_point(cfg: &RunConfig, out: &mut OutputDir) -> Result<String> {
    warn_gate(cfg);
    let problem = cfg.problem()?;
    let (u0, v0) = cfg.initial_data(&problem.basis);
    let p = &problem.params;
    let kappa = cfg.cutoff.kappa;
    let constants = compute_kset_constants(&KSetInputs {
        c_t: cfg.kset.c_t,
        c_kappa: cfg.kset.c_kappa,
        c2: cfg.kset.c2,
        ..KSetInputs::from_data(&u0, &v0, p.rho, p.p_star, kappa, problem.t_end, p.lambda)
    });
    let outcomes: Vec<_> = (0..cfg.paths as u64)
        .into_par_iter()
        .map(|id| picard_solve(&problem, &u0, &v0, kappa, id, cfg.picard.tol, cfg.picard.max_iter))
        .collect();

    let mut table = String::from("path,iterates,final_residual,direct_distance,in_set,margin_k1,margin_k2,margin_k3\n");
    let mut failure = None;
    for (i, outcome) in outcomes.into_iter().enumerate() {
        let residuals = match &outcome {
            Ok(o) => &o.residuals,
            Err(Error::NoConvergence { residuals }) => residuals,
            Err(_) => return outcome.map(|_| String::new()),
        };
        let mut csv = String::from("iteration,residual\n");
        for (k, r) in residuals.iter().enumerate() {
            writeln!(csv, "{},{r:e}", k + 1).unwrap();
        }
        out.write(&format!("residuals_{i:04}.csv"), csv)?;
        match outcome {
            Ok(o) => {
                let direct = problem.simulate_path(&u0, &v0, kappa, i as u64, RecordOptions::every(1))?;
                let direct = ControlPair {
                    eta: direct.u_snapshots,
                    xi: direct.v_snapshots,
                    dt: problem.dt,
                };
                let dist = m_distance(&o.fixed_point, &direct, p.rho, p.aleph);
                let chk = kset_check(&o.fixed_point, &constants, p.rho, p.aleph, p.p_star);
                writeln!(
                    table,
                    "{i},{},{:e},{dist:e},{},{:e},{:e},{:e}",
                    o.iterates,
                    o.residuals.last().unwrap(),
                    chk.in_set as u8,
                    chk.margins[0],
                    chk.margins[1],
                    chk.margins[2]
                )
                .unwrap();
            }
            Err(e) => {
                if let Error::NoConvergence { residuals } = &e {
                    writeln!(table, "{i},,{:e},,,,,", residuals.last().copied().unwrap_or(f64::NAN)).unwrap();
                }
                failure.get_or_insert(e);
            }
        }
    }
    out.write("fixed_point.csv", &table)?;
    out.write(
        "kset_constants.csv",
        format!(
            "k1,k2,k3,lambda\n{:e},{:e},{:e},{:e}\n",
            constants.k1, constants.k2, constants.k3, constants.lambda
        ),
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(table),
    }
}

fn reports_text(reports: &[MomentReport]) -> String {
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut s = String::new();
    for r in reports {
        writeln!(s, "{:<width$}  {:>14.6e} ± {:.3e}  (M = {})", r.name, r.estimate, r.half_width, r.paths).unwrap();
    }
    s
}

fn estimate(cfg: &RunConfig, out: &mut OutputDir) -> Result<String> {
    warn_gate(cfg);
    let records = simulate_ensemble(cfg, false, RecordOptions::every(cfg.estimate.snapshot_stride))?;
    let p = &cfg.model;
    let pstar = estimate_u_pstar(&records, p.p_star, p.lambda);
    let halpha = estimate_v_halpha(&records, p.alpha, p.aleph);
    let mut reports = vec![
        estimate_u_l2(&records),
        pstar.sup,
        pstar.gradient,
        halpha.sup,
        halpha.dissipation,
        estimate_coupling(&records, p.p_star, p.q, cfg.estimate.m),
    ];
    let functionals: Vec<[f64; 3]> = records
        .par_iter()
        .map(|r| {
            let ctrl = ControlPair {
                eta: r.u_snapshots.clone(),
                xi: r.v_snapshots.clone(),
                dt: r.times[1] - r.times[0],
            };
            kset_functionals(&ctrl, p.rho, p.aleph, p.p_star, p.lambda)
        })
        .collect();
    if cfg.estimate.snapshot_stride == 1 {
        for (j, name) in ["kset_eta_H02", "kset_eta_Lpstar", "kset_xi_Hrho_aleph"].iter().enumerate() {
            reports.push(MomentReport::from_values(*name, functionals.iter().map(|f| f[j]).collect(), false));
        }
    }
    let mut csv = format!("{}\n", MomentReport::csv_header());
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    out.write("estimates.csv", csv)?;
    let text = reports_text(&reports);
    out.write("estimates.txt", &text)?;
    Ok(text)
}

fn convergence(cfg: &RunConfig, out: &mut OutputDir) -> Result<String> {
    let problem = cfg.problem()?;
    let (u0, v0) = cfg.initial_data(&problem.basis);
    let c = &cfg.convergence;
    let report = strong_convergence(&problem, &u0, &v0, cfg.cutoff.kappa, &c.levels, c.reference_steps, cfg.paths)?;
    out.write("convergence.csv", report.csv())?;
    Ok(format!("{}observed order {:.4} over {} path(s)\n", report.csv(), report.order, report.paths))
}
