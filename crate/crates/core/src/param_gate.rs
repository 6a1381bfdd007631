//! Admissibility checks for the model parameters.
//!
//! Every condition carries a signed margin. For a strict inequality the
//! condition holds iff `margin > 0`, for a non-strict one iff `margin >= 0`.
//! Bounds whose denominator is not positive are reported as vacuous.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: &'static str,
    pub formula: &'static str,
    pub satisfied: bool,
    pub margin: f64,
    pub note: Option<String>,
}

impl Condition {
    fn strict(name: &'static str, formula: &'static str, margin: f64) -> Self {
        Condition {
            name,
            formula,
            satisfied: margin > 0.0,
            margin,
            note: None,
        }
    }

    fn non_strict(name: &'static str, formula: &'static str, margin: f64) -> Self {
        Condition {
            name,
            formula,
            satisfied: margin >= 0.0,
            margin,
            note: None,
        }
    }

    fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GateReport {
    pub conditions: Vec<Condition>,
    pub special_case_d2q2: bool,
    /// Derived exponents `(p*₀, p*₁, p*)`; `p*₁` is absent when neither case applies.
    pub p_star0: Option<f64>,
    pub p_star1: Option<f64>,
    pub p_star: Option<f64>,
}

impl GateReport {
    pub fn overall(&self) -> bool {
        self.special_case_d2q2 || self.conditions.iter().all(|c| c.satisfied)
    }

    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn merge(mut self, other: GateReport) -> Self {
        self.conditions.extend(other.conditions);
        self.special_case_d2q2 |= other.special_case_d2q2;
        self.p_star0 = self.p_star0.or(other.p_star0);
        self.p_star1 = self.p_star1.or(other.p_star1);
        self.p_star = self.p_star.or(other.p_star);
        self
    }
}

impl fmt::Display for GateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.conditions.iter().map(|c| c.name.len()).max().unwrap_or(0);
        for c in &self.conditions {
            write!(
                f,
                "{:<width$}  {:<4}  margin {:>+12.6e}  {}",
                c.name,
                if c.satisfied { "ok" } else { "FAIL" },
                c.margin,
                c.formula,
            )?;
            if let Some(note) = &c.note {
                write!(f, "  [{note}]")?;
            }
            writeln!(f)?;
        }
        for (name, value) in [("p*0", self.p_star0), ("p*1", self.p_star1), ("p*", self.p_star)] {
            if let Some(v) = value {
                writeln!(f, "{name:<width$}  = {v}")?;
            }
        }
        writeln!(f, "special case d=2, aleph=2, q=2: {}", self.special_case_d2q2)?;
        write!(f, "overall: {}", if self.overall() { "admissible" } else { "not admissible" })
    }
}

/// `q`-bound, `α`-window and `p*₀` bound; also derives `p*₁` and `p*`.
pub fn check_spaces(q: f64, aleph: f64, alpha: f64, d: usize, p_star0: f64) -> GateReport {
    let df = d as f64;
    let mut conditions = Vec::new();

    let denom = 2.0 * df - aleph;
    conditions.push(if denom > 0.0 {
        let bound = (aleph + df).min(2.0 * df) / denom;
        Condition::strict("q-upper", "q < min(aleph+d, 2d)/(2d-aleph)", bound - q)
    } else {
        Condition::strict("q-upper", "q < min(aleph+d, 2d)/(2d-aleph)", f64::INFINITY).note("no upper bound on q")
    });

    let lo = df * (0.5 - 1.0 / q);
    let hi = aleph / 2.0 - df / 2.0;
    let mut lower = Condition::strict("alpha-lower", "d(1/2 - 1/q) < alpha", alpha - lo);
    let mut upper = Condition::strict("alpha-upper", "alpha < aleph/2 - d/2", hi - alpha);
    if lo >= hi {
        lower = lower.note("empty window");
        upper = upper.note("empty window");
    }
    conditions.push(lower);
    conditions.push(upper);

    let denom = aleph + 2.0 * df - df * q + 2.0 * q * alpha;
    let mut bound = 4.0;
    let mut p0 = Condition::strict("p*0", "p*0 > max(2d/(aleph+2d-dq+2q alpha), 4)", 0.0);
    if denom > 0.0 {
        bound = f64::max(2.0 * df / denom, 4.0);
    } else {
        p0 = p0.note("first term vacuous");
    }
    p0.margin = p_star0 - bound;
    p0.satisfied = p0.margin > 0.0;
    conditions.push(p0);

    let p_star1 = if d == 1 && (2.0..aleph + 1.0).contains(&q) {
        let tau = 0.5 - 1.0 / q - alpha;
        Some(aleph / (q * tau))
    } else if (1.0..2.0).contains(&q) {
        Some(1.0 / (2.0 - q))
    } else {
        None
    };
    let p_star = match p_star1 {
        Some(p1) => p_star0.max(2.0 * p1),
        None => p_star0,
    };

    GateReport {
        conditions,
        special_case_d2q2: d == 2 && aleph == 2.0 && q == 2.0,
        p_star0: Some(p_star0),
        p_star1,
        p_star: Some(p_star),
    }
}

/// `γ₁ > d/2 + d/p* − min(2/p*, d/p*)` and the case-split lower bound on `γ₂`.
pub fn check_noise(gamma1: f64, gamma2: f64, d: usize, aleph: f64, alpha: f64, p_star: f64) -> GateReport {
    let df = d as f64;
    let b1 = df / 2.0 + df / p_star - f64::min(2.0 / p_star, df / p_star);
    let mut conditions = vec![Condition::strict(
        "gamma1",
        "gamma1 > d/2 + d/p* - min(2/p*, d/p*)",
        gamma1 - b1,
    )];
    let formula = "gamma2 > 1 - aleph/2 (d=1) or d - aleph/2 (d=2)";
    conditions.push(match gamma2_bound(d, aleph, alpha) {
        Some(b2) => Condition::strict("gamma2", formula, gamma2 - b2),
        None => Condition {
            name: "gamma2",
            formula,
            satisfied: false,
            margin: f64::NAN,
            note: Some("no bound stated for d=1, alpha<0, alpha+aleph/2>1/2".into()),
        },
    });
    GateReport {
        conditions,
        ..GateReport::default()
    }
}

pub fn gamma2_bound(d: usize, aleph: f64, alpha: f64) -> Option<f64> {
    match d {
        1 if alpha >= 0.0 || alpha + aleph / 2.0 <= 0.5 => Some(1.0 - aleph / 2.0),
        2 => Some(2.0 - aleph / 2.0),
        _ => None,
    }
}

/// `d/2 − α ≤ (ℵ/2)(2/l₁) + d/l₂`; returns the verdict and its margin.
pub fn check_embedding(l1: f64, l2: f64, alpha: f64, aleph: f64, d: usize) -> (bool, f64) {
    let df = d as f64;
    let margin = aleph / 2.0 * (2.0 / l1) + df / l2 - (df / 2.0 - alpha);
    (margin >= 0.0, margin)
}

/// `d/2 − ℵ/(2q) − d/(2q) < ρ ≤ ℵ/2 − d/2` and `p* > max(4d/(ℵ+d−dq+2qρ), 4)`.
pub fn check_rho_window(rho: f64, q: f64, aleph: f64, d: usize, p_star: f64) -> GateReport {
    let df = d as f64;
    let lo = df / 2.0 - aleph / (2.0 * q) - df / (2.0 * q);
    let hi = aleph / 2.0 - df / 2.0;
    let mut lower = Condition::strict("rho-lower", "d/2 - aleph/(2q) - d/(2q) < rho", rho - lo);
    let mut upper = Condition::non_strict("rho-upper", "rho <= aleph/2 - d/2", hi - rho);
    if lo >= hi {
        lower = lower.note("empty window");
        upper = upper.note("empty window");
    }
    let denom = aleph + df - df * q + 2.0 * q * rho;
    let formula = "p* > max(4d/(aleph+d-dq+2q rho), 4)";
    let pcond = if denom > 0.0 {
        Condition::strict("p*-step1", formula, p_star - f64::max(4.0 * df / denom, 4.0))
    } else {
        Condition::strict("p*-step1", formula, p_star - 4.0).note("first term vacuous")
    };
    GateReport {
        conditions: vec![lower, upper, pcond],
        ..GateReport::default()
    }
}

/// Everything the gate looks at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateInputs {
    pub d: usize,
    pub q: f64,
    pub aleph: f64,
    pub alpha: f64,
    pub rho: f64,
    /// `p*₀`; the effective `p*` is derived from it.
    pub p_star: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl GateInputs {
    pub const AXES: [&'static str; 7] = ["q", "aleph", "alpha", "rho", "p_star", "gamma1", "gamma2"];

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "q" => self.q = value,
            "aleph" => self.aleph = value,
            "alpha" => self.alpha = value,
            "rho" => self.rho = value,
            "p_star" => self.p_star = value,
            "gamma1" => self.gamma1 = value,
            "gamma2" => self.gamma2 = value,
            _ => {
                return Err(Error::invalid(format!(
                    "unknown sweep axis '{name}' (expected one of {})",
                    Self::AXES.join(", ")
                )))
            }
        }
        Ok(())
    }
}

/// Full report: spaces, noise, the `ρ`-window and `α ≥ ρ`.
pub fn check_all(g: &GateInputs) -> GateReport {
    let spaces = check_spaces(g.q, g.aleph, g.alpha, g.d, g.p_star);
    let p_star = spaces.p_star.unwrap_or(g.p_star);
    let mut report = spaces
        .merge(check_noise(g.gamma1, g.gamma2, g.d, g.aleph, g.alpha, p_star))
        .merge(check_rho_window(g.rho, g.q, g.aleph, g.d, p_star));
    report
        .conditions
        .push(Condition::non_strict("alpha>=rho", "alpha >= rho", g.alpha - g.rho));
    report
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub x: f64,
    pub y: f64,
    pub overall: bool,
    /// Smallest margin over all conditions.
    pub min_margin: f64,
}

/// Evaluates the gate on an `nx × ny` grid over two axes, row-major in `y`.
pub fn sweep(
    base: &GateInputs,
    x_axis: &str,
    x_range: (f64, f64, usize),
    y_axis: &str,
    y_range: (f64, f64, usize),
) -> Result<Vec<SweepPoint>> {
    let linspace = |(a, b, n): (f64, f64, usize)| -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![a],
            _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
        }
    };
    let mut probe = *base;
    probe.set(x_axis, 0.0)?;
    probe.set(y_axis, 0.0)?;
    let mut out = Vec::new();
    for &y in &linspace(y_range) {
        for &x in &linspace(x_range) {
            let mut g = *base;
            g.set(x_axis, x)?;
            g.set(y_axis, y)?;
            let r = check_all(&g);
            let min_margin = r
                .conditions
                .iter()
                .map(|c| c.margin)
                .filter(|m| !m.is_nan())
                .fold(f64::INFINITY, f64::min);
            out.push(SweepPoint {
                x,
                y,
                overall: r.overall(),
                min_margin,
            });
        }
    }
    Ok(out)
}
