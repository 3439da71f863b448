//! Command dispatch.

use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::ValueEnum;
use passiv_core::passivation::{
    run_pipeline, Mode, PassivationError, PassivationOptions, PipelineOptions, PipelineOutcome, StabilityStage,
};
use passiv_core::sdp::{ConicProgram, ConicSolver, InteriorPointSolver, SdpError, Solution, SolverOptions};
use passiv_core::stability::{
    certify_box_stability, find_unstable_sample, table_for, BoxCertificate, EntryOutcome, StabilityError,
    StabilityTable, StabilityVerdict, TableKind, CERT_EIG_FLOOR, CERT_RESIDUAL_TOL,
};
use passiv_core::system::{compose_closed_loop, validate_plant, ClosedLoop, SystemError};
use passiv_core::verify::{
    freq_index, grid_oracle, kyp_index, positive_real_check, tf_to_ss, SweepOptions, VerifyError,
};

use crate::problem::ProblemSpec;
use crate::report::{
    Check, EntryInfo, ErrorInfo, GridInfo, Report, ReportOptions, StabilityInfo, TraceStep, ValidationInfo,
    VerificationInfo,
};

/// Sweep index vs. claimed index.
pub const INDEX_TOL: f64 = 5e-3;
/// KYP index vs. sweep index.
pub const KYP_TOL: f64 = 1e-3;
/// Grid oracle may not beat the claimed index by more than this.
pub const GRID_TOL: f64 = 1e-2;
/// Grid resolution for the counterexample search after a failed certificate.
const SAMPLE_RESOLUTION: usize = 21;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_NEGATIVE: i32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Stability,
    Feasibility,
    MaxIfp,
    MaxOfp,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Stability => "stability",
            Command::Feasibility => "feasibility",
            Command::MaxIfp => "max-ifp",
            Command::MaxOfp => "max-ofp",
            Command::Verify => "verify",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ifp,
    Ofp,
}

/// Command-line overrides. `None` defers to the problem file, then to
/// the built-in default.
#[derive(Clone, Debug, Default)]
pub struct Flags {
    pub tol_gap: Option<f64>,
    pub tol_feas: Option<f64>,
    pub bisect_tol: Option<f64>,
    pub mult_degree: Option<u32>,
    pub grid: Option<usize>,
    pub direct: bool,
    pub dump_sdp: Option<PathBuf>,
    /// `verify` only: the parameter to check.
    pub rho: Option<Vec<f64>>,
    /// `verify` only.
    pub mode: Option<ModeArg>,
}

pub fn resolve_options(spec: &ProblemSpec, flags: &Flags) -> ReportOptions {
    let f = &spec.options;
    let s = SolverOptions::default();
    ReportOptions {
        mult_degree: flags.mult_degree.or(f.mult_degree).unwrap_or(2),
        bisect_tol: flags.bisect_tol.or(f.bisect_tol).unwrap_or(PassivationOptions::default().bisect_tol),
        grid_resolution: flags.grid.or(f.grid_resolution).unwrap_or(50),
        direct_mode: flags.direct || f.direct_mode.unwrap_or(false),
        gap_tol: flags.tol_gap.or(f.gap_tol).unwrap_or(s.gap_tol),
        feas_tol: flags.tol_feas.or(f.feas_tol).unwrap_or(s.feas_tol),
        max_iter: f.max_iter.unwrap_or(s.max_iter),
    }
}

/// Writes every program to `<dir>/sdp-NNNN.dat-s` before solving it.
pub struct DumpingSolver {
    inner: InteriorPointSolver,
    dir: PathBuf,
    counter: AtomicUsize,
}

impl DumpingSolver {
    pub fn new(inner: InteriorPointSolver, dir: PathBuf) -> std::io::Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(DumpingSolver {
            inner,
            dir,
            counter: AtomicUsize::new(0),
        })
    }
}

impl ConicSolver for DumpingSolver {
    fn solve(&self, p: &ConicProgram) -> Result<Solution, SdpError> {
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let path = self.dir.join(format!("sdp-{n:04}.dat-s"));
        if let Err(e) = fs::File::create(&path).and_then(|f| p.write_sdpa(std::io::BufWriter::new(f))) {
            eprintln!("warning: cannot write {}: {e}", path.display());
        }
        self.inner.solve(p)
    }

    fn options(&self) -> SolverOptions {
        self.inner.options()
    }
}

pub struct Outcome {
    pub report: Report,
    pub exit_code: i32,
}

fn error_info(code: &str, message: String, clause: Option<String>) -> ErrorInfo {
    ErrorInfo {
        code: code.to_string(),
        message,
        clause,
    }
}

fn system_error(e: &SystemError) -> ErrorInfo {
    match e {
        SystemError::ValidationFailed { clause, .. } => {
            error_info("validation_failed", e.to_string(), Some(clause.to_string()))
        }
        _ => error_info("invalid_problem", e.to_string(), None),
    }
}

fn stability_error(e: &StabilityError) -> ErrorInfo {
    match e {
        StabilityError::SolverFailure { .. } | StabilityError::Sdp(_) => error_info("solver_failure", e.to_string(), None),
        _ => error_info("stability_error", e.to_string(), None),
    }
}

fn passivation_error(e: &PassivationError) -> ErrorInfo {
    match e {
        PassivationError::System(s) => system_error(s),
        PassivationError::Stability(s) => stability_error(s),
        PassivationError::PreconditionFailed(_) => error_info("precondition_failed", e.to_string(), None),
        PassivationError::SolverFailure(_) | PassivationError::Sdp(_) => {
            error_info("solver_failure", e.to_string(), None)
        }
        PassivationError::Sos(_) => error_info("sos_error", e.to_string(), None),
    }
}

fn verify_error(e: &VerifyError) -> ErrorInfo {
    match e {
        VerifyError::System(s) => system_error(s),
        VerifyError::SolverFailure(_) | VerifyError::Sdp(_) => error_info("solver_failure", e.to_string(), None),
        _ => error_info("verification_error", e.to_string(), None),
    }
}

fn fail(mut report: Report, err: ErrorInfo) -> Outcome {
    report.status = "error".into();
    report.error = Some(err);
    Outcome {
        report,
        exit_code: EXIT_FAILURE,
    }
}

fn mode_name(m: Mode) -> String {
    match m {
        Mode::Ifp => "ifp".into(),
        Mode::Ofp => "ofp".into(),
    }
}

fn stability_info(table: &StabilityTable, cert: Option<&BoxCertificate>, counterexample: Option<Vec<f64>>) -> StabilityInfo {
    let entries = cert
        .map(|c| {
            c.entries
                .iter()
                .map(|e| {
                    let (outcome, residual, min_eigenvalue, iterations) = match &e.outcome {
                        EntryOutcome::Constant => ("constant".to_string(), None, None, None),
                        EntryOutcome::IdenticallyZero => ("identically_zero".to_string(), None, None, None),
                        EntryOutcome::Solved {
                            status,
                            residual,
                            min_eigenvalue,
                            iterations,
                        } => (status.to_string(), Some(*residual), Some(*min_eigenvalue), Some(*iterations)),
                    };
                    EntryInfo {
                        index: e.index,
                        theta: e.theta.is_finite().then_some(e.theta),
                        outcome,
                        residual,
                        min_eigenvalue,
                        iterations,
                    }
                })
                .collect()
        })
        .unwrap_or_default();
    StabilityInfo {
        verdict: match cert.map(|c| c.verdict) {
            Some(StabilityVerdict::Certified) => "certified",
            Some(StabilityVerdict::Inconclusive) => "inconclusive",
            None => "skipped",
        }
        .into(),
        table: match table.kind {
            TableKind::RouthModified => "routh_modified",
            TableKind::JuryModified => "jury_modified",
        }
        .into(),
        first_column: table.first_column.iter().map(|p| p.to_string()).collect(),
        theta_star: cert.map(|c| c.theta_star).filter(|t| t.is_finite()),
        max_residual: cert.map(|c| c.max_residual),
        entries,
        counterexample,
    }
}

fn make_solver(opts: &ReportOptions, dump: Option<&PathBuf>) -> Result<Box<dyn ConicSolver>, ErrorInfo> {
    let inner = InteriorPointSolver::new(SolverOptions {
        gap_tol: opts.gap_tol,
        feas_tol: opts.feas_tol,
        max_iter: opts.max_iter,
    });
    match dump {
        None => Ok(Box::new(inner)),
        Some(dir) => DumpingSolver::new(inner, dir.clone())
            .map(|d| Box::new(d) as Box<dyn ConicSolver>)
            .map_err(|e| error_info("io_error", format!("cannot create {}: {e}", dir.display()), None)),
    }
}

fn check(name: &str, value: f64, tolerance: f64) -> Check {
    Check {
        name: name.into(),
        value,
        tolerance,
        passed: value <= tolerance,
    }
}

/// Runs `cmd` on a parsed problem.
pub fn run(cmd: Command, spec: &ProblemSpec, flags: &Flags) -> Outcome {
    let opts = resolve_options(spec, flags);
    let mut report = Report::new(cmd.name(), &spec.domain.to_string(), opts.clone());
    let solver = match make_solver(&opts, flags.dump_sdp.as_ref()) {
        Ok(s) => s,
        Err(e) => return fail(report, e),
    };
    match cmd {
        Command::Stability => run_stability(report, spec, &opts, solver.as_ref()),
        Command::Feasibility => run_synthesis(report, spec, &opts, Mode::Ifp, false, solver.as_ref()),
        Command::MaxIfp => run_synthesis(report, spec, &opts, Mode::Ifp, true, solver.as_ref()),
        Command::MaxOfp => run_synthesis(report, spec, &opts, Mode::Ofp, true, solver.as_ref()),
        Command::Verify => {
            let mode = match flags.mode {
                Some(ModeArg::Ofp) => Mode::Ofp,
                _ => Mode::Ifp,
            };
            report.mode = Some(mode_name(mode));
            run_verify(report, spec, &opts, mode, flags.rho.clone(), solver.as_ref())
        }
    }
}

fn validated_loop(report: &mut Report, spec: &ProblemSpec, strict: bool) -> Result<ClosedLoop, ErrorInfo> {
    let v = validate_plant(&spec.plant, strict).map_err(|e| system_error(&e))?;
    report.validation = Some(ValidationInfo {
        relative_degree: v.relative_degree,
        strict,
    });
    compose_closed_loop(&spec.plant, &spec.basis).map_err(|e| system_error(&e))
}

fn run_stability(mut report: Report, spec: &ProblemSpec, opts: &ReportOptions, solver: &dyn ConicSolver) -> Outcome {
    let cl = match validated_loop(&mut report, spec, false) {
        Ok(cl) => cl,
        Err(e) => return fail(report, e),
    };
    let table = match table_for(&cl) {
        Ok(t) => t,
        Err(e) => return fail(report, stability_error(&e)),
    };
    let cert = match certify_box_stability(&table, &spec.bx, opts.mult_degree, solver) {
        Ok(c) => c,
        Err(e) => return fail(report, stability_error(&e)),
    };
    let certified = cert.verdict == StabilityVerdict::Certified;
    let counterexample = if certified {
        None
    } else {
        find_unstable_sample(&cl, &spec.bx, SAMPLE_RESOLUTION)
    };
    report.stability = Some(stability_info(&table, Some(&cert), counterexample));
    report.status = if certified { "certified" } else { "inconclusive" }.into();
    Outcome {
        report,
        exit_code: if certified { EXIT_OK } else { EXIT_NEGATIVE },
    }
}

fn run_synthesis(
    mut report: Report,
    spec: &ProblemSpec,
    opts: &ReportOptions,
    mode: Mode,
    synthesize: bool,
    solver: &dyn ConicSolver,
) -> Outcome {
    if synthesize {
        report.mode = Some(mode_name(mode));
    }
    let cl = match validated_loop(&mut report, spec, mode == Mode::Ofp) {
        Ok(cl) => cl,
        Err(e) => return fail(report, e),
    };
    let table = match table_for(&cl) {
        Ok(t) => t,
        Err(e) => return fail(report, stability_error(&e)),
    };
    let popts = PipelineOptions {
        mode,
        direct: opts.direct_mode,
        mult_degree: opts.mult_degree,
        sample_resolution: SAMPLE_RESOLUTION,
        synthesize,
        passivation: PassivationOptions {
            bisect_tol: opts.bisect_tol,
            ..PassivationOptions::default()
        },
    };
    let out: PipelineOutcome = match run_pipeline(&spec.problem(), &popts, solver) {
        Ok(o) => o,
        Err(e) => return fail(report, passivation_error(&e)),
    };
    let cert = match &out.stability {
        StabilityStage::Checked(c) => Some(c),
        StabilityStage::Skipped => None,
    };
    report.stability = Some(stability_info(&table, cert, out.counterexample.clone()));
    let negative = |mut report: Report, status: &str| {
        report.status = status.into();
        Outcome {
            report,
            exit_code: EXIT_NEGATIVE,
        }
    };
    if cert.is_some_and(|c| c.verdict != StabilityVerdict::Certified) {
        return negative(report, "inconclusive");
    }
    let Some(feas) = &out.feasibility else {
        return fail(report, error_info("internal", "feasibility stage did not run".into(), None));
    };
    report.epsilon_star = feas.epsilon_star.is_finite().then_some(feas.epsilon_star);
    report.rho_witness = (!feas.rho_witness.is_empty()).then(|| feas.rho_witness.clone());
    if !synthesize {
        report.certificate_residual = Some(feas.certificate.residual);
        report.certificate_min_eigenvalue = Some(feas.certificate.min_eigenvalue);
        return if feas.passivatable {
            report.status = "passivatable".into();
            Outcome {
                report,
                exit_code: EXIT_OK,
            }
        } else {
            negative(report, "not_passivatable")
        };
    }
    if !feas.passivatable {
        return negative(report, "not_passivatable");
    }
    let Some(syn) = &out.synthesis else {
        return fail(report, error_info("internal", "synthesis stage did not run".into(), None));
    };
    report.rho_star = Some(syn.rho_star.clone());
    report.index = Some(syn.index_value);
    report.certificate_residual = Some(syn.certificate.residual);
    report.certificate_min_eigenvalue = Some(syn.certificate.min_eigenvalue);
    if mode == Mode::Ifp {
        report.bisection_trace = Some(
            syn.bisection_trace
                .iter()
                .map(|&(gamma, feasible)| TraceStep { gamma, feasible })
                .collect(),
        );
        report.gamma_capped = Some(syn.gamma_capped);
    }
    let stable = out.stable_at_rho_star.unwrap_or(false);
    let table_ok = out.table_positive_at_rho_star.unwrap_or(false);
    let mut ver = VerificationInfo {
        rho: syn.rho_star.clone(),
        sweep_index: None,
        kyp_index: None,
        stable_at_rho_star: stable,
        table_positive_at_rho_star: table_ok,
        positive_real: None,
        grid: None,
        checks: Vec::new(),
    };
    if !stable {
        report.verification = Some(ver);
        return if opts.direct_mode {
            negative(report, "unstable_at_rho_star")
        } else {
            fail(
                report,
                error_info(
                    "verification_failed",
                    "loop is unstable at rho* although the box was certified".into(),
                    None,
                ),
            )
        };
    }
    let g = cl.at_f64(&syn.rho_star);
    let sweep_opts = SweepOptions::default();
    let verified = (|| -> Result<(), VerifyError> {
        let sweep = freq_index(&g, mode, &sweep_opts)?;
        ver.sweep_index = Some(sweep);
        let kyp = kyp_index(&tf_to_ss(&g)?, mode, solver)?;
        ver.kyp_index = Some(kyp);
        ver.positive_real = Some(positive_real_check(&g).positive_real);
        let grid = grid_oracle(&spec.plant, &spec.basis, &spec.bx, mode, opts.grid_resolution, &sweep_opts)?;
        ver.checks = vec![
            check("sweep_vs_index", (sweep - syn.index_value).abs(), INDEX_TOL),
            check("kyp_vs_sweep", (kyp - sweep).abs(), KYP_TOL),
            check("grid_excess", grid.index_hat - syn.index_value, GRID_TOL),
            check("certificate_residual", syn.certificate.residual, CERT_RESIDUAL_TOL),
            check("certificate_min_eigenvalue", -syn.certificate.min_eigenvalue, -CERT_EIG_FLOOR),
            check("table_positive_at_rho_star", if table_ok { 0.0 } else { 1.0 }, 0.0),
        ];
        ver.grid = Some(GridInfo {
            resolution: opts.grid_resolution,
            rho_hat: grid.rho_hat,
            index_hat: grid.index_hat,
            points: grid.points,
            stable_points: grid.stable_points,
        });
        Ok(())
    })();
    let all_passed = ver.checks.iter().all(|c| c.passed);
    report.verification = Some(ver);
    if let Err(e) = verified {
        return fail(report, verify_error(&e));
    }
    if !all_passed {
        return fail(
            report,
            error_info("verification_failed", "cross-checks disagree with the optimum".into(), None),
        );
    }
    report.status = "optimal".into();
    Outcome {
        report,
        exit_code: EXIT_OK,
    }
}

fn run_verify(
    mut report: Report,
    spec: &ProblemSpec,
    opts: &ReportOptions,
    mode: Mode,
    rho: Option<Vec<f64>>,
    solver: &dyn ConicSolver,
) -> Outcome {
    let cl = match validated_loop(&mut report, spec, mode == Mode::Ofp) {
        Ok(cl) => cl,
        Err(e) => return fail(report, e),
    };
    let table = match table_for(&cl) {
        Ok(t) => t,
        Err(e) => return fail(report, stability_error(&e)),
    };
    let sweep_opts = SweepOptions::default();
    let grid = match grid_oracle(&spec.plant, &spec.basis, &spec.bx, mode, opts.grid_resolution, &sweep_opts) {
        Ok(g) => Some(g),
        Err(VerifyError::NoStablePoint) => None,
        Err(e) => return fail(report, verify_error(&e)),
    };
    let rho = match (rho, &grid) {
        (Some(r), _) if r.len() != spec.basis.len() => {
            return fail(
                report,
                error_info(
                    "invalid_problem",
                    format!("--rho has {} entries for {} parameters", r.len(), spec.basis.len()),
                    None,
                ),
            )
        }
        (Some(r), _) => r,
        (None, Some(g)) => g.rho_hat.clone(),
        (None, None) => {
            report.status = "unstable".into();
            return Outcome {
                report,
                exit_code: EXIT_NEGATIVE,
            };
        }
    };
    let stable = cl.is_stable_at(&rho);
    let mut ver = VerificationInfo {
        rho: rho.clone(),
        sweep_index: None,
        kyp_index: None,
        stable_at_rho_star: stable,
        table_positive_at_rho_star: table.is_positive_at(&rho),
        positive_real: None,
        grid: grid.map(|g| GridInfo {
            resolution: opts.grid_resolution,
            rho_hat: g.rho_hat,
            index_hat: g.index_hat,
            points: g.points,
            stable_points: g.stable_points,
        }),
        checks: Vec::new(),
    };
    report.rho_star = Some(rho.clone());
    if !stable {
        report.verification = Some(ver);
        report.status = "unstable".into();
        return Outcome {
            report,
            exit_code: EXIT_NEGATIVE,
        };
    }
    let g = cl.at_f64(&rho);
    ver.positive_real = Some(positive_real_check(&g).positive_real);
    let res = (|| -> Result<(), VerifyError> {
        let sweep = freq_index(&g, mode, &sweep_opts)?;
        ver.sweep_index = Some(sweep);
        let kyp = kyp_index(&tf_to_ss(&g)?, mode, solver)?;
        ver.kyp_index = Some(kyp);
        ver.checks.push(check("kyp_vs_sweep", (kyp - sweep).abs(), KYP_TOL));
        Ok(())
    })();
    report.index = ver.sweep_index;
    let passed = ver.checks.iter().all(|c| c.passed);
    report.verification = Some(ver);
    if let Err(e) = res {
        return fail(report, verify_error(&e));
    }
    if !passed {
        return fail(
            report,
            error_info("verification_failed", "KYP and sweep indices disagree".into(), None),
        );
    }
    report.status = "verified".into();
    Outcome {
        report,
        exit_code: EXIT_OK,
    }
}
