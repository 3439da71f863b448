//! Passivation by fixed-structure feedback.
//!
//! On the stability boundary the loop is `G = pN/pD(ρ)`, and with
//! `Π(ρ) = Re(pN·conj(pD))` (cleared of positive `(1+y²)` factors in DT):
//!
//! * passivatable:   `Π − ε` SOS for some `ε > 0`,
//! * IFP index ≥ ν:  `[[Π, γ·Re pD, γ·Im pD], [·, 1, 0], [·, 0, 1]]` SOS with `ν = γ²`,
//! * OFP index ≥ ξ:  `Π − ξ·|pN|²` SOS.
//!
//! `ρ` is a decision variable bounded by the box, so every program
//! searches the controller set at once. The IFP condition is bilinear in
//! `(γ, ρ)` and is solved by bisection on `γ`.

use thiserror::Error;

use crate::poly::{Monomial, Polynomial};
use crate::sdp::{ConicProgram, ConicSolver, LinExpr, ScalarId, SdpError, Solution, SolveStatus};
use crate::sos::{recover_certificate, sos_constrain, sos_constrain_matrix, Certificate, PolyExpr, SosError, SosOptions};
use crate::stability::{
    certify_box_stability, find_unstable_sample, table_for, BoxCertificate, StabilityError, StabilityVerdict,
    CERT_EIG_FLOOR, CERT_RESIDUAL_TOL, THETA_MIN,
};
use crate::system::{
    compose_closed_loop, param_freq_decompose, validate_plant, ClosedLoop, ControllerBasis, Domain,
    FreqDecomposition, ParamBox, RationalTransfer, SystemError,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Ifp,
    Ofp,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PassivationError {
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

#[derive(Clone, Copy, Debug)]
pub struct PassivationOptions {
    /// Bracket width on `γ` at which bisection stops.
    pub bisect_tol: f64,
    /// Largest `γ` tried while searching for an infeasible upper bracket.
    pub gamma_cap: f64,
    pub sos: SosOptions,
}

impl Default for PassivationOptions {
    fn default() -> Self {
        PassivationOptions {
            bisect_tol: 1e-4,
            gamma_cap: (1u64 << 20) as f64,
            sos: SosOptions::default(),
        }
    }
}

/// Boundary data in floating point, jointly scaled by a power of two so
/// the largest coefficient magnitude lies in `[1/2, 1)`. Joint scaling of
/// `pN` and `pD` leaves every index unchanged.
#[derive(Clone, Debug)]
pub struct Boundary {
    pub domain: Domain,
    pub n_re: Polynomial<f64>,
    pub n_im: Polynomial<f64>,
    pub d_re: (Polynomial<f64>, Vec<Polynomial<f64>>),
    pub d_im: (Polynomial<f64>, Vec<Polynomial<f64>>),
    /// Power of `(1 + y²)` multiplying `Π` in DT (`dD − dN`), 0 in CT.
    pub clear_pow: u32,
    /// The factor applied to `pN` and `pD`.
    pub scale: f64,
}

impl Boundary {
    pub fn new(fd: &FreqDecomposition) -> Result<Self, PassivationError> {
        if fd.dd < fd.dn {
            return Err(PassivationError::PreconditionFailed(format!(
                "closed loop is improper (numerator degree {} > denominator degree {})",
                fd.dn, fd.dd
            )));
        }
        let v = vec![fd.domain.boundary_var().to_string()];
        let conv = |p: &Polynomial| p.with_vars(&v).to_f64();
        let d_re = (conv(&fd.d_re.base), fd.d_re.coeffs.iter().map(conv).collect::<Vec<_>>());
        let d_im = (conv(&fd.d_im.base), fd.d_im.coeffs.iter().map(conv).collect::<Vec<_>>());
        let (n_re, n_im) = (conv(&fd.n_re), conv(&fd.n_im));
        let mut maxc: f64 = 0.0;
        for p in [&n_re, &n_im, &d_re.0, &d_im.0]
            .into_iter()
            .chain(d_re.1.iter())
            .chain(d_im.1.iter())
        {
            for c in p.terms().values() {
                maxc = maxc.max(c.abs());
            }
        }
        let scale = if maxc > 0.0 { 2f64.powi(-(maxc.log2().floor() as i32) - 1) } else { 1.0 };
        let s = |p: &Polynomial<f64>| p.scale(&scale);
        Ok(Boundary {
            domain: fd.domain,
            n_re: s(&n_re),
            n_im: s(&n_im),
            d_re: (s(&d_re.0), d_re.1.iter().map(s).collect()),
            d_im: (s(&d_im.0), d_im.1.iter().map(s).collect()),
            clear_pow: match fd.domain {
                Domain::Ct => 0,
                Domain::Dt => (fd.dd - fd.dn) as u32,
            },
            scale,
        })
    }

    pub fn nparams(&self) -> usize {
        self.d_re.1.len()
    }

    fn var(&self) -> &str {
        self.domain.boundary_var()
    }

    /// `(1 + y²)^clear_pow` (the constant 1 in CT).
    fn clear_factor(&self) -> Polynomial<f64> {
        let v = self.var();
        Polynomial::from_coeffs(v, &[1.0, 0.0, 1.0]).pow(self.clear_pow)
    }

    fn param_expr(part: &(Polynomial<f64>, Vec<Polynomial<f64>>), rho: &[ScalarId]) -> PolyExpr {
        let mut e = PolyExpr::from_poly(&part.0);
        for (c, &r) in part.1.iter().zip(rho) {
            e.add_scaled(&PolyExpr::poly_times_var(c, r), 1.0);
        }
        e
    }

    /// `Π(ρ)` as an expression in the parameter scalars.
    pub fn pi_expr(&self, rho: &[ScalarId]) -> PolyExpr {
        let mut e = Self::param_expr(&self.d_re, rho).mul_poly(&self.n_re);
        e.add_scaled(&Self::param_expr(&self.d_im, rho).mul_poly(&self.n_im), 1.0);
        e
    }

    /// `|pN|²` on the boundary, with the DT clearing factor applied.
    pub fn n_sq(&self) -> Polynomial<f64> {
        let sq = &(&self.n_re * &self.n_re) + &(&self.n_im * &self.n_im);
        &sq * &self.clear_factor()
    }
}

fn add_params(prog: &mut ConicProgram, bx: &ParamBox) -> Vec<ScalarId> {
    let (lo, hi) = (bx.lower_f64(), bx.upper_f64());
    (0..bx.dim())
        .map(|i| {
            let s = prog.add_scalar(format!("rho{}", i + 1));
            prog.set_bounds(s, lo[i], hi[i]);
            s
        })
        .collect()
}

fn rho_values(sol: &Solution, rho: &[ScalarId], bx: &ParamBox) -> Vec<f64> {
    // Interior-point iterates can sit a hair outside the bounds.
    bx.clamp(&rho.iter().map(|&r| sol.scalar(r)).collect::<Vec<_>>())
}

#[derive(Clone, Debug)]
pub struct FeasibilityResult {
    pub epsilon_star: f64,
    pub rho_witness: Vec<f64>,
    pub passivatable: bool,
    pub certificate: Certificate,
}

/// `max ε` s.t. `Π(ρ) − ε` is SOS with `ρ` in the box.
pub fn feasibility(
    b: &Boundary,
    bx: &ParamBox,
    solver: &dyn ConicSolver,
    opts: &PassivationOptions,
) -> Result<FeasibilityResult, PassivationError> {
    bx.check_dim(b.nparams())?;
    let mut prog = ConicProgram::new();
    let rho = add_params(&mut prog, bx);
    let eps = prog.add_scalar("epsilon");
    let mut target = b.pi_expr(&rho);
    target.add_at(Monomial::one(1), &LinExpr::var(eps), -1.0);
    let h = sos_constrain(&mut prog, "gram", &target, &opts.sos)?;
    prog.maximize(LinExpr::var(eps));
    let sol = solver.solve(&prog)?;
    match sol.status {
        SolveStatus::Optimal => {}
        // No ρ makes Π bounded below by any constant.
        SolveStatus::Infeasible => {
            return Ok(FeasibilityResult {
                epsilon_star: f64::NEG_INFINITY,
                rho_witness: Vec::new(),
                passivatable: false,
                certificate: recover_certificate(&sol, &h),
            })
        }
        s => return Err(PassivationError::SolverFailure(format!("feasibility stage: {s}"))),
    }
    let certificate = recover_certificate(&sol, &h);
    let epsilon_star = sol.scalar(eps);
    Ok(FeasibilityResult {
        epsilon_star,
        rho_witness: rho_values(&sol, &rho, bx),
        passivatable: epsilon_star > THETA_MIN
            && certificate.is_valid(CERT_RESIDUAL_TOL, CERT_EIG_FLOOR),
        certificate,
    })
}

#[derive(Clone, Debug)]
pub struct SynthesisResult {
    pub mode: Mode,
    pub rho_star: Vec<f64>,
    /// `ν*` (IFP) or `ξ*` (OFP).
    pub index_value: f64,
    pub epsilon_star: Option<f64>,
    pub certificate: Certificate,
    /// `(γ, feasible)` in the order tested (IFP only).
    pub bisection_trace: Vec<(f64, bool)>,
    /// Set when the IFP bracket search hit `gamma_cap`.
    pub gamma_capped: bool,
}

/// Outcome of one IFP test at fixed `γ`.
#[derive(Clone, Debug)]
pub struct GammaTest {
    pub feasible: bool,
    /// Largest margin `t` with Gram `X + t·I`; negative when infeasible.
    pub margin: f64,
    pub rho: Vec<f64>,
    pub certificate: Option<Certificate>,
}

/// Tests the IFP matrix-SOS condition at a fixed `γ`.
pub fn ifp_test(
    b: &Boundary,
    bx: &ParamBox,
    gamma: f64,
    solver: &dyn ConicSolver,
    opts: &PassivationOptions,
) -> Result<GammaTest, PassivationError> {
    let mut prog = ConicProgram::new();
    let rho = add_params(&mut prog, bx);
    let t = prog.add_scalar("margin");
    let pi = b.pi_expr(&rho).mul_poly(&b.clear_factor());
    let dre = Boundary::param_expr(&b.d_re, &rho).scaled(gamma);
    let dim = Boundary::param_expr(&b.d_im, &rho).scaled(gamma);
    let one = PolyExpr::from_lin(1, LinExpr::constant(1.0));
    let zero = PolyExpr::zero(1);
    let target = vec![
        vec![pi, dre.clone(), dim.clone()],
        vec![dre, one.clone(), zero.clone()],
        vec![dim, zero, one],
    ];
    let h = sos_constrain_matrix(&mut prog, "gram", &target, Some(t), &opts.sos)?;
    prog.maximize(LinExpr::var(t));
    let sol = solver.solve(&prog)?;
    match sol.status {
        SolveStatus::Optimal => {
            let cert = recover_certificate(&sol, &h);
            let margin = sol.scalar(t);
            let feasible = margin > 0.0 && cert.is_valid(CERT_RESIDUAL_TOL, CERT_EIG_FLOOR);
            Ok(GammaTest {
                feasible,
                margin,
                rho: rho_values(&sol, &rho, bx),
                certificate: Some(cert),
            })
        }
        SolveStatus::Infeasible => Ok(GammaTest {
            feasible: false,
            margin: f64::NEG_INFINITY,
            rho: Vec::new(),
            certificate: None,
        }),
        s => Err(PassivationError::SolverFailure(format!("IFP test at gamma = {gamma}: {s}"))),
    }
}

/// Bisection on `γ` for the largest IFP index `ν* = γ*²` over the box.
/// Requires a positive feasibility margin.
pub fn maximize_ifp(
    b: &Boundary,
    bx: &ParamBox,
    solver: &dyn ConicSolver,
    opts: &PassivationOptions,
) -> Result<SynthesisResult, PassivationError> {
    let feas = feasibility(b, bx, solver, opts)?;
    if !feas.passivatable {
        return Err(PassivationError::PreconditionFailed(format!(
            "no controller in the box passivates the plant (epsilon* = {:.3e})",
            feas.epsilon_star
        )));
    }
    let mut trace = Vec::new();
    let mut best = ifp_test(b, bx, 0.0, solver, opts)?;
    trace.push((0.0, best.feasible));
    if !best.feasible {
        return Err(PassivationError::SolverFailure(
            "IFP test at gamma = 0 failed although the feasibility stage passed".into(),
        ));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut capped = false;
    loop {
        let r = ifp_test(b, bx, hi, solver, opts)?;
        trace.push((hi, r.feasible));
        if !r.feasible {
            break;
        }
        lo = hi;
        best = r;
        if hi >= opts.gamma_cap {
            capped = true;
            break;
        }
        hi *= 2.0;
    }
    if !capped {
        while hi - lo > opts.bisect_tol {
            let mid = 0.5 * (lo + hi);
            let r = ifp_test(b, bx, mid, solver, opts)?;
            trace.push((mid, r.feasible));
            if r.feasible {
                lo = mid;
                best = r;
            } else {
                hi = mid;
            }
        }
    }
    Ok(SynthesisResult {
        mode: Mode::Ifp,
        rho_star: best.rho,
        index_value: lo * lo,
        epsilon_star: Some(feas.epsilon_star),
        certificate: best.certificate.expect("feasible tests carry certificates"),
        bisection_trace: trace,
        gamma_capped: capped,
    })
}

/// `max ξ` s.t. `Π(ρ) − ξ·|pN|²` is SOS with `ρ` in the box. The loop
/// numerator must be minimum phase so the inverse system is stable.
pub fn maximize_ofp(
    b: &Boundary,
    cl: &ClosedLoop,
    bx: &ParamBox,
    solver: &dyn ConicSolver,
    opts: &PassivationOptions,
) -> Result<SynthesisResult, PassivationError> {
    bx.check_dim(b.nparams())?;
    let num = RationalTransfer {
        num: cl.pn.clone(),
        den: cl.pn.clone(),
        domain: cl.domain,
    };
    if !num.is_minimum_phase() {
        return Err(PassivationError::PreconditionFailed(
            "closed-loop numerator has zeros outside the open stability region".into(),
        ));
    }
    let mut prog = ConicProgram::new();
    let rho = add_params(&mut prog, bx);
    let xi = prog.add_scalar("xi");
    let mut target = b.pi_expr(&rho);
    target.add_scaled(&PolyExpr::poly_times_var(&b.n_sq(), xi), -1.0);
    let h = sos_constrain(&mut prog, "gram", &target, &opts.sos)?;
    prog.maximize(LinExpr::var(xi));
    let sol = solver.solve(&prog)?;
    if sol.status != SolveStatus::Optimal {
        return Err(PassivationError::SolverFailure(format!("OFP program: {}", sol.status)));
    }
    Ok(SynthesisResult {
        mode: Mode::Ofp,
        rho_star: rho_values(&sol, &rho, bx),
        index_value: sol.scalar(xi),
        epsilon_star: None,
        certificate: recover_certificate(&sol, &h),
        bisection_trace: Vec::new(),
        gamma_capped: false,
    })
}

/// Inputs for the end-to-end pipeline.
#[derive(Clone, Debug)]
pub struct PassivationProblem {
    pub plant: RationalTransfer,
    pub basis: ControllerBasis,
    pub bx: ParamBox,
}

impl PassivationProblem {
    pub fn closed_loop(&self) -> Result<ClosedLoop, PassivationError> {
        self.bx.check_dim(self.basis.len())?;
        Ok(compose_closed_loop(&self.plant, &self.basis)?)
    }
}

#[derive(Clone, Debug)]
pub enum StabilityStage {
    /// Box-wide certificate computed.
    Checked(BoxCertificate),
    /// Direct mode: no box-wide certificate.
    Skipped,
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub stability: StabilityStage,
    /// A sampled parameter at which the loop is unstable, if one was found.
    pub counterexample: Option<Vec<f64>>,
    pub feasibility: Option<FeasibilityResult>,
    pub synthesis: Option<SynthesisResult>,
    /// Companion-matrix roots at `ρ*`.
    pub stable_at_rho_star: Option<bool>,
    /// First-column positivity of the stability table at `ρ*`.
    pub table_positive_at_rho_star: Option<bool>,
}

#[derive(Clone, Copy, Debug)]
pub struct PipelineOptions {
    pub mode: Mode,
    pub direct: bool,
    pub mult_degree: u32,
    /// Grid resolution for the counterexample search.
    pub sample_resolution: usize,
    /// Stop after the feasibility stage when false.
    pub synthesize: bool,
    pub passivation: PassivationOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            mode: Mode::Ifp,
            direct: false,
            mult_degree: 2,
            sample_resolution: 21,
            synthesize: true,
            passivation: PassivationOptions::default(),
        }
    }
}

/// Validation, stability (unless direct), feasibility, synthesis, and the
/// stability check at `ρ*`. Stops early at the first negative verdict.
pub fn run_pipeline(
    prob: &PassivationProblem,
    opts: &PipelineOptions,
    solver: &dyn ConicSolver,
) -> Result<PipelineOutcome, PassivationError> {
    validate_plant(&prob.plant, opts.mode == Mode::Ofp)?;
    let cl = prob.closed_loop()?;
    let table = table_for(&cl)?;
    let mut out = PipelineOutcome {
        stability: StabilityStage::Skipped,
        counterexample: None,
        feasibility: None,
        synthesis: None,
        stable_at_rho_star: None,
        table_positive_at_rho_star: None,
    };
    if !opts.direct {
        let cert = certify_box_stability(&table, &prob.bx, opts.mult_degree, solver)?;
        let certified = cert.verdict == StabilityVerdict::Certified;
        out.stability = StabilityStage::Checked(cert);
        if !certified {
            out.counterexample = find_unstable_sample(&cl, &prob.bx, opts.sample_resolution);
            return Ok(out);
        }
    }
    let b = Boundary::new(&param_freq_decompose(&cl)?)?;
    let feas = feasibility(&b, &prob.bx, solver, &opts.passivation)?;
    let passivatable = feas.passivatable;
    out.feasibility = Some(feas);
    if !passivatable || !opts.synthesize {
        return Ok(out);
    }
    let syn = match opts.mode {
        Mode::Ifp => maximize_ifp(&b, &prob.bx, solver, &opts.passivation)?,
        Mode::Ofp => maximize_ofp(&b, &cl, &prob.bx, solver, &opts.passivation)?,
    };
    out.stable_at_rho_star = Some(cl.is_stable_at(&syn.rho_star));
    out.table_positive_at_rho_star = Some(table.is_positive_at(&syn.rho_star));
    out.synthesis = Some(syn);
    Ok(out)
}
