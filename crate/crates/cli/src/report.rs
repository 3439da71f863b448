//! Versioned JSON report. Every field is always present (`null` when not
//! applicable) so consumers can rely on a fixed shape.

use serde::Serialize;

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Report {
    pub report_version: u32,
    pub command: String,
    pub status: String,
    pub domain: String,
    pub mode: Option<String>,
    pub options: ReportOptions,
    pub validation: Option<ValidationInfo>,
    pub stability: Option<StabilityInfo>,
    pub epsilon_star: Option<f64>,
    pub rho_witness: Option<Vec<f64>>,
    pub rho_star: Option<Vec<f64>>,
    pub index: Option<f64>,
    pub certificate_residual: Option<f64>,
    pub certificate_min_eigenvalue: Option<f64>,
    pub bisection_trace: Option<Vec<TraceStep>>,
    pub gamma_capped: Option<bool>,
    pub verification: Option<VerificationInfo>,
    pub error: Option<ErrorInfo>,
}

impl Report {
    pub fn new(command: &str, domain: &str, options: ReportOptions) -> Self {
        Report {
            report_version: REPORT_VERSION,
            command: command.to_string(),
            status: String::new(),
            domain: domain.to_string(),
            mode: None,
            options,
            validation: None,
            stability: None,
            epsilon_star: None,
            rho_witness: None,
            rho_star: None,
            index: None,
            certificate_residual: None,
            certificate_min_eigenvalue: None,
            bisection_trace: None,
            gamma_capped: None,
            verification: None,
            error: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ReportOptions {
    pub mult_degree: u32,
    pub bisect_tol: f64,
    pub grid_resolution: usize,
    pub direct_mode: bool,
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ValidationInfo {
    pub relative_degree: i64,
    pub strict: bool,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct StabilityInfo {
    /// `certified`, `inconclusive` or `skipped`.
    pub verdict: String,
    pub table: String,
    pub first_column: Vec<String>,
    pub theta_star: Option<f64>,
    pub max_residual: Option<f64>,
    pub entries: Vec<EntryInfo>,
    pub counterexample: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct EntryInfo {
    pub index: usize,
    pub theta: Option<f64>,
    /// `constant`, `identically_zero` or the solver status.
    pub outcome: String,
    pub residual: Option<f64>,
    pub min_eigenvalue: Option<f64>,
    pub iterations: Option<usize>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct TraceStep {
    pub gamma: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct VerificationInfo {
    pub rho: Vec<f64>,
    pub sweep_index: Option<f64>,
    pub kyp_index: Option<f64>,
    pub stable_at_rho_star: bool,
    pub table_positive_at_rho_star: bool,
    pub positive_real: Option<bool>,
    pub grid: Option<GridInfo>,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct GridInfo {
    pub resolution: usize,
    pub rho_hat: Vec<f64>,
    pub index_hat: f64,
    pub points: usize,
    pub stable_points: usize,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ErrorInfo {
    pub code: String,
    pub message: String,
    pub clause: Option<String>,
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

/// Plain-text summary for the terminal.
pub fn summary(r: &Report) -> String {
    let mut out = format!("{} [{}]: {}\n", r.command, r.domain, r.status);
    if let Some(e) = &r.error {
        out += &format!("  error {}: {}\n", e.code, e.message);
    }
    if let Some(s) = &r.stability {
        out += &format!("  stability: {}", s.verdict);
        if let Some(t) = s.theta_star {
            out += &format!(" (theta* = {t:.6})");
        }
        out += "\n";
        if let Some(c) = &s.counterexample {
            out += &format!("  destabilizing rho: {}\n", fmt_vec(c));
        }
    }
    if let Some(e) = r.epsilon_star {
        out += &format!("  epsilon* = {e:.6e}\n");
    }
    if let (Some(rho), Some(ix)) = (&r.rho_star, r.index) {
        let name = match r.mode.as_deref() {
            Some("ofp") => "xi*",
            _ => "nu*",
        };
        out += &format!("  {name} = {ix:.6} at rho* = {}\n", fmt_vec(rho));
    }
    if let Some(v) = &r.verification {
        if let Some(s) = v.sweep_index {
            out += &format!("  sweep index = {s:.6}\n");
        }
        if let Some(k) = v.kyp_index {
            out += &format!("  KYP index = {k:.6}\n");
        }
        out += &format!("  stable at rho*: {}\n", v.stable_at_rho_star);
        if let Some(g) = &v.grid {
            out += &format!("  grid best = {:.6} at {}\n", g.index_hat, fmt_vec(&g.rho_hat));
        }
        for c in v.checks.iter().filter(|c| !c.passed) {
            out += &format!("  check failed: {} = {:.3e} (tolerance {:.1e})\n", c.name, c.value, c.tolerance);
        }
    }
    out
}
