//! Division-free Routh (CT) and Jury/Schur–Cohn (DT) tables over `ρ`, and
//! SOS certification of first-column positivity on a parameter box.
//!
//! Both tables multiply through by the previous pivots instead of dividing,
//! so every entry stays a polynomial in `ρ`. The scale factors introduced
//! are products of earlier first-column entries, hence positive whenever
//! those are, and the sign pattern of the first column is preserved.

use num::Zero;
use rayon::prelude::*;
use thiserror::Error;

use crate::poly::{Monomial, Polynomial, Rational};
use crate::sdp::{ConicProgram, ConicSolver, LinExpr, SdpError, SolveStatus};
use crate::sos::{recover_certificate, sos_constrain, sos_polynomial, PolyExpr, SosError, SosOptions};
use crate::system::{rho_names, ClosedLoop, Domain, ParamBox, ParamPoly, SystemError};

/// Strict-positivity threshold for certified optima.
pub const THETA_MIN: f64 = 1e-6;
/// Largest coefficient-matching residual accepted in a certificate.
pub const CERT_RESIDUAL_TOL: f64 = 1e-6;
/// Smallest Gram eigenvalue accepted in a certificate.
pub const CERT_EIG_FLOOR: f64 = -1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("denominator has degree 0 in the frequency variable")]
    DegreeZero,
    #[error("box dimension does not match the table parameters: {0}")]
    Dimension(#[from] SystemError),
    #[error("solver failure on first-column entry {index}: {detail}")]
    SolverFailure { index: usize, detail: String },
    #[error(transparent)]
    Sos(#[from] SosError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableKind {
    RouthModified,
    JuryModified,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityTable {
    pub kind: TableKind,
    pub rows: Vec<Vec<Polynomial>>,
    pub first_column: Vec<Polynomial>,
    pub nparams: usize,
}

impl StabilityTable {
    pub fn first_column_at(&self, rho: &[f64]) -> Vec<f64> {
        self.first_column
            .iter()
            .map(|f| f.to_f64().eval_f64(rho))
            .collect()
    }

    /// Every first-column entry strictly positive at `ρ`.
    pub fn is_positive_at(&self, rho: &[f64]) -> bool {
        self.first_column_at(rho).iter().all(|&v| v > 0.0)
    }

    pub fn first_column_exact(&self, rho: &[Rational]) -> Vec<Rational> {
        self.first_column.iter().map(|f| f.eval_exact(rho)).collect()
    }
}

/// Descending coefficients `a_n … a_0` as polynomials in `ρ`.
fn descending(pd: &ParamPoly) -> Result<Vec<Polynomial>, StabilityError> {
    if pd.degree() == 0 {
        return Err(StabilityError::DegreeZero);
    }
    let mut c = pd.rho_coeffs();
    c.reverse();
    Ok(c)
}

fn zero_like(p: &Polynomial) -> Polynomial {
    let vars: Vec<&str> = p.vars().iter().map(String::as_str).collect();
    Polynomial::zero(&vars)
}

/// Routh table without division:
/// `a_ij = a_{i−1,1}·a_{i−2,j+1} − a_{i−1,j+1}·a_{i−2,1}`.
pub fn routh_modified(pd: &ParamPoly) -> Result<StabilityTable, StabilityError> {
    let a = descending(pd)?;
    let n = a.len() - 1;
    let width = n / 2 + 1;
    let zero = zero_like(&a[0]);
    let mut rows: Vec<Vec<Polynomial>> = vec![vec![zero.clone(); width]; 2];
    for (k, c) in a.iter().enumerate() {
        rows[k % 2][k / 2] = c.clone();
    }
    let get = |row: &Vec<Polynomial>, j: usize| row.get(j).cloned().unwrap_or_else(|| zero.clone());
    for _ in 2..=n {
        let (r2, r1) = (&rows[rows.len() - 2], &rows[rows.len() - 1]);
        let next: Vec<Polynomial> = (0..width)
            .map(|j| &(&r1[0] * &get(r2, j + 1)) - &(&get(r1, j + 1) * &r2[0]))
            .collect();
        rows.push(next);
    }
    let first_column = rows.iter().map(|r| r[0].clone()).collect();
    Ok(StabilityTable {
        kind: TableKind::RouthModified,
        rows,
        first_column,
        nparams: pd.nparams(),
    })
}

/// Jury table with the even rows removed and no division. Row 1 holds
/// `a_n … a_0`; each next row is `r[j]·r[1] − r[L+1−j]·r[L]` over the
/// previous row `r` of length `L`, dropping its (vanishing) last entry.
pub fn jury_modified(pd: &ParamPoly) -> Result<StabilityTable, StabilityError> {
    let a = descending(pd)?;
    let n = a.len() - 1;
    let mut rows = vec![a];
    for _ in 0..n {
        let r = rows.last().unwrap();
        let l = r.len();
        let next: Vec<Polynomial> = (0..l - 1)
            .map(|j| &(&r[j] * &r[0]) - &(&r[l - 1 - j] * &r[l - 1]))
            .collect();
        rows.push(next);
    }
    let first_column = rows.iter().map(|r| r[0].clone()).collect();
    Ok(StabilityTable {
        kind: TableKind::JuryModified,
        rows,
        first_column,
        nparams: pd.nparams(),
    })
}

/// The table for a closed loop, built from `pD` scaled to coprime integer
/// coefficients so that the certified margins do not depend on the
/// arbitrary scaling produced by composition. A loop without dynamics
/// (`deg pD = 0`) gets the one-entry table `[a_0(ρ)]`.
pub fn table_for(cl: &ClosedLoop) -> Result<StabilityTable, StabilityError> {
    let parts: Vec<&Polynomial> = std::iter::once(&cl.pd.base).chain(&cl.pd.coeffs).collect();
    let k = Polynomial::primitive_scale(&parts);
    let pd = cl.pd.scale(&k);
    let kind = match cl.domain {
        Domain::Ct => TableKind::RouthModified,
        Domain::Dt => TableKind::JuryModified,
    };
    if pd.degree() == 0 {
        let a0 = pd.rho_coeffs().swap_remove(0);
        return Ok(StabilityTable {
            kind,
            rows: vec![vec![a0.clone()]],
            first_column: vec![a0],
            nparams: pd.nparams(),
        });
    }
    match kind {
        TableKind::RouthModified => routh_modified(&pd),
        TableKind::JuryModified => jury_modified(&pd),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EntryOutcome {
    /// `f` is a constant; no program was needed.
    Constant,
    /// `f` is identically zero; nothing can be certified.
    IdenticallyZero,
    /// The SOS program was solved.
    Solved {
        status: SolveStatus,
        residual: f64,
        min_eigenvalue: f64,
        iterations: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntryCertificate {
    pub index: usize,
    pub theta: f64,
    pub outcome: EntryOutcome,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StabilityVerdict {
    Certified,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoxCertificate {
    pub theta_star: f64,
    pub verdict: StabilityVerdict,
    pub entries: Vec<EntryCertificate>,
    pub max_residual: f64,
}

/// Corner-and-edge polynomial `(ub − ρ_j)(ρ_j − lb)`.
fn box_poly(nvars: usize, j: usize, lb: f64, ub: f64) -> Polynomial<f64> {
    let names = rho_names(nvars);
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut p = Polynomial::<f64>::zero(&refs);
    p.add_term(Monomial::var(nvars, j, 2), -1.0);
    p.add_term(Monomial::var(nvars, j, 1), ub + lb);
    p.add_term(Monomial::one(nvars), -ub * lb);
    p
}

/// Largest `θ` with `f − Σ s_j·c_j − θ` SOS and each `s_j` SOS of degree
/// `mult_degree` (raised if needed so the multipliers can match `deg f`).
pub fn certify_entry(
    f: &Polynomial,
    index: usize,
    bx: &ParamBox,
    mult_degree: u32,
    solver: &dyn ConicSolver,
) -> Result<EntryCertificate, StabilityError> {
    if f.is_zero() {
        return Ok(EntryCertificate {
            index,
            theta: 0.0,
            outcome: EntryOutcome::IdenticallyZero,
        });
    }
    if f.degree() == 0 {
        let c = f.coeff(&Monomial::one(f.nvars())).clone();
        return Ok(EntryCertificate {
            index,
            theta: crate::poly::rational_to_f64(&c),
            outcome: EntryOutcome::Constant,
        });
    }
    let p = bx.dim();
    let ff = f.to_f64();
    let deg_even = f.degree().div_ceil(2) * 2;
    let mdeg = mult_degree.max(deg_even.saturating_sub(2));
    let half = mdeg / 2;
    let (lo, hi) = (bx.lower_f64(), bx.upper_f64());

    let mut prog = ConicProgram::new();
    let theta = prog.add_scalar("theta");
    let opts = SosOptions::default();
    let mut target = PolyExpr::from_poly(&ff);
    target.add_at(Monomial::one(p), &LinExpr::var(theta), -1.0);
    let mut handles = Vec::new();
    for j in 0..p {
        let (s, h) = sos_polynomial(&mut prog, &format!("s{}", j + 1), p, half, &opts)?;
        let sc = s.mul_poly(&box_poly(p, j, lo[j], hi[j]));
        target.add_scaled(&sc, -1.0);
        handles.push(h);
    }
    handles.push(sos_constrain(&mut prog, "gram", &target, &opts)?);
    prog.maximize(LinExpr::var(theta));

    let sol = solver.solve(&prog)?;
    if sol.status != SolveStatus::Optimal {
        return Err(StabilityError::SolverFailure {
            index,
            detail: format!("status {}", sol.status),
        });
    }
    let certs: Vec<_> = handles.iter().map(|h| recover_certificate(&sol, h)).collect();
    Ok(EntryCertificate {
        index,
        theta: sol.scalar(theta),
        outcome: EntryOutcome::Solved {
            status: sol.status,
            residual: certs.iter().map(|c| c.residual).fold(0.0, f64::max),
            min_eigenvalue: certs.iter().map(|c| c.min_eigenvalue).fold(f64::INFINITY, f64::min),
            iterations: sol.iterations,
        },
    })
}

/// Certifies `f_i > 0` on the box for every first-column entry. The entry
/// programs are independent and run in parallel; results keep table order.
pub fn certify_box_stability(
    table: &StabilityTable,
    bx: &ParamBox,
    mult_degree: u32,
    solver: &dyn ConicSolver,
) -> Result<BoxCertificate, StabilityError> {
    bx.check_dim(table.nparams)?;
    let entries: Vec<EntryCertificate> = table
        .first_column
        .par_iter()
        .enumerate()
        .map(|(i, f)| certify_entry(f, i, bx, mult_degree, solver))
        .collect::<Result<_, _>>()?;
    let theta_star = entries.iter().map(|e| e.theta).fold(f64::INFINITY, f64::min);
    let mut max_residual: f64 = 0.0;
    let mut valid = true;
    for e in &entries {
        match &e.outcome {
            EntryOutcome::IdenticallyZero => valid = false,
            EntryOutcome::Constant => {}
            EntryOutcome::Solved {
                residual,
                min_eigenvalue,
                ..
            } => {
                max_residual = max_residual.max(*residual);
                valid &= *residual <= CERT_RESIDUAL_TOL && *min_eigenvalue >= CERT_EIG_FLOOR;
            }
        }
    }
    let verdict = if valid && theta_star > THETA_MIN {
        StabilityVerdict::Certified
    } else {
        StabilityVerdict::Inconclusive
    };
    Ok(BoxCertificate {
        theta_star,
        verdict,
        entries,
        max_residual,
    })
}

/// Searches a `resolution^p` grid (corners included) for a parameter at
/// which the closed loop is unstable by companion-matrix roots.
pub fn find_unstable_sample(cl: &ClosedLoop, bx: &ParamBox, resolution: usize) -> Option<Vec<f64>> {
    let p = bx.dim();
    let res = resolution.max(2);
    let total = res.checked_pow(p as u32)?;
    (0..total).find_map(|mut idx| {
        let mut t = vec![0.0; p];
        for tk in t.iter_mut() {
            *tk = (idx % res) as f64 / (res - 1) as f64;
            idx /= res;
        }
        let rho = bx.lerp(&t);
        (!cl.is_stable_at(&rho)).then_some(rho)
    })
}

/// `f₂ − (a_n² − a_0²)`, identically zero for every Jury table.
pub fn jury_f2_defect(table: &StabilityTable) -> Option<Polynomial> {
    let r = table.rows.first()?;
    let a_n = &r[0];
    let a_0 = r.last()?;
    let f2 = table.first_column.get(1)?;
    Some(f2 - &(&(a_n * a_n) - &(a_0 * a_0)))
}

/// Whether every coefficient of `p` is zero.
pub fn is_identically_zero(p: &Polynomial) -> bool {
    p.terms().values().all(Zero::is_zero)
}
