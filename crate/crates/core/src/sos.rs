//! Sum-of-squares constraints via Gram matrices.
//!
//! A symmetric `q×q` matrix polynomial `F(x)` whose coefficients are affine
//! in decision variables is SOS iff `F = B(x)ᵀ Q B(x)` for some `Q ⪰ 0`,
//! where `B(x)` stacks one monomial basis per row. Coefficient matching
//! turns this into linear equalities on the entries of one PSD block.
//!
//! Row `i` uses monomials up to degree `⌈deg F_ii / 2⌉`. This loses nothing
//! (column `i` of any factor has degree at most `deg F_ii / 2`) and keeps
//! constant diagonal entries from forcing singular Gram blocks.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::poly::{monomials_up_to, Monomial, Polynomial};
use crate::sdp::{BlockId, ConicProgram, LinExpr, ScalarId, Solution, Var};

/// Default cap on the number of monomials in one row basis.
pub const DEFAULT_BASIS_CAP: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SosError {
    #[error("Gram basis of size {size} exceeds the cap of {cap}")]
    DegreeOverflow { size: usize, cap: usize },
    #[error("matrix polynomial is not square/symmetric: {0}")]
    NotSymmetric(String),
    #[error("monomial arity {found} does not match {expected} indeterminates")]
    ArityMismatch { expected: usize, found: usize },
}

/// Polynomial in `nvars` indeterminates with coefficients affine in
/// decision variables.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyExpr {
    pub nvars: usize,
    pub terms: BTreeMap<Monomial, LinExpr>,
}

impl PolyExpr {
    pub fn zero(nvars: usize) -> Self {
        PolyExpr {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    /// A polynomial with fixed numeric coefficients.
    pub fn from_poly(p: &Polynomial<f64>) -> Self {
        let mut out = Self::zero(p.nvars());
        for (m, &c) in p.terms() {
            out.add_at(m.clone(), &LinExpr::constant(c), 1.0);
        }
        out
    }

    /// The constant polynomial equal to `e`.
    pub fn from_lin(nvars: usize, e: LinExpr) -> Self {
        let mut out = Self::zero(nvars);
        out.add_at(Monomial::one(nvars), &e, 1.0);
        out
    }

    /// `p(x)·v` for a fixed polynomial `p` and a decision variable `v`.
    pub fn poly_times_var(p: &Polynomial<f64>, v: impl Into<Var>) -> Self {
        let v = v.into();
        let mut out = Self::zero(p.nvars());
        for (m, &c) in p.terms() {
            let mut e = LinExpr::zero();
            e.add_term(v, c);
            out.add_at(m.clone(), &e, 1.0);
        }
        out
    }

    pub fn add_at(&mut self, m: Monomial, e: &LinExpr, k: f64) {
        assert_eq!(m.0.len(), self.nvars, "monomial arity mismatch");
        let slot = self.terms.entry(m.clone()).or_default();
        slot.add_scaled(e, k);
        if slot.is_zero() {
            self.terms.remove(&m);
        }
    }

    pub fn add_scaled(&mut self, other: &PolyExpr, k: f64) {
        assert_eq!(self.nvars, other.nvars);
        for (m, e) in &other.terms {
            self.add_at(m.clone(), e, k);
        }
    }

    pub fn scaled(&self, k: f64) -> PolyExpr {
        let mut out = PolyExpr::zero(self.nvars);
        out.add_scaled(self, k);
        out
    }

    /// Product with a fixed polynomial over the same indeterminates.
    pub fn mul_poly(&self, p: &Polynomial<f64>) -> PolyExpr {
        assert_eq!(self.nvars, p.nvars());
        let mut out = PolyExpr::zero(self.nvars);
        for (m, e) in &self.terms {
            for (pm, &c) in p.terms() {
                out.add_at(m.mul(pm), e, c);
            }
        }
        out
    }

    /// Largest total degree carrying a structurally nonzero coefficient.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Fixes the decision variables at `sol`, leaving a numeric polynomial.
    pub fn at_solution(&self, sol: &Solution) -> BTreeMap<Monomial, f64> {
        self.terms
            .iter()
            .map(|(m, e)| (m.clone(), e.eval(sol)))
            .collect()
    }

    pub fn eval(&self, sol: &Solution, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(m, e)| e.eval(sol) * m.eval_f64(x))
            .sum()
    }
}

/// Symmetric matrix of [`PolyExpr`] (full storage; only `i <= j` is read).
pub type MatrixPolyExpr = Vec<Vec<PolyExpr>>;

#[derive(Clone, Copy, Debug)]
pub struct SosOptions {
    pub basis_cap: usize,
}

impl Default for SosOptions {
    fn default() -> Self {
        SosOptions {
            basis_cap: DEFAULT_BASIS_CAP,
        }
    }
}

/// Everything needed to read a certificate back out of a solution.
#[derive(Clone, Debug)]
pub struct SosHandle {
    pub block: BlockId,
    /// Per-row monomial bases.
    pub bases: Vec<Vec<Monomial>>,
    /// Offset of each row's basis inside the Gram block.
    pub offsets: Vec<usize>,
    /// Optional margin `t`: the certificate Gram is `X + t·I`.
    pub margin: Option<ScalarId>,
    /// The coefficient-matching equalities (each `== 0`).
    pub equations: Vec<LinExpr>,
    pub nvars: usize,
}

impl SosHandle {
    pub fn dim(&self) -> usize {
        self.bases.iter().map(Vec::len).sum()
    }
}

#[derive(Clone, Debug)]
pub struct Certificate {
    pub gram: DMatrix<f64>,
    /// Max absolute coefficient-matching residual.
    pub residual: f64,
    pub min_eigenvalue: f64,
}

impl Certificate {
    pub fn is_valid(&self, residual_tol: f64, eig_floor: f64) -> bool {
        self.residual <= residual_tol && self.min_eigenvalue >= eig_floor
    }
}

fn check_arity(nvars: usize, p: &PolyExpr) -> Result<(), SosError> {
    if p.nvars != nvars {
        return Err(SosError::ArityMismatch {
            expected: nvars,
            found: p.nvars,
        });
    }
    Ok(())
}

/// Declares a fresh SOS polynomial `b(x)ᵀ S b(x)`, `S ⪰ 0`, with `b` all
/// monomials up to `half_degree`. Returns the polynomial as an expression in
/// the entries of `S`.
pub fn sos_polynomial(
    prog: &mut ConicProgram,
    name: &str,
    nvars: usize,
    half_degree: u32,
    opts: &SosOptions,
) -> Result<(PolyExpr, SosHandle), SosError> {
    let basis = monomials_up_to(nvars, half_degree);
    if basis.len() > opts.basis_cap {
        return Err(SosError::DegreeOverflow {
            size: basis.len(),
            cap: opts.basis_cap,
        });
    }
    let block = prog.add_block(name, basis.len());
    let mut poly = PolyExpr::zero(nvars);
    for (a, ma) in basis.iter().enumerate() {
        for (b, mb) in basis.iter().enumerate() {
            let mut e = LinExpr::zero();
            e.add_term(Var::entry(block, a, b), 1.0);
            poly.add_at(ma.mul(mb), &e, 1.0);
        }
    }
    let handle = SosHandle {
        block,
        bases: vec![basis],
        offsets: vec![0],
        margin: None,
        equations: Vec::new(),
        nvars,
    };
    Ok((poly, handle))
}

/// Constrains a scalar polynomial to be SOS.
pub fn sos_constrain(
    prog: &mut ConicProgram,
    name: &str,
    target: &PolyExpr,
    opts: &SosOptions,
) -> Result<SosHandle, SosError> {
    sos_constrain_matrix(prog, name, &vec![vec![target.clone()]], None, opts)
}

/// Constrains a symmetric matrix polynomial to be SOS. With `margin = Some(t)`
/// the Gram matrix is `X + t·I` with `X ⪰ 0`, so maximizing `t` measures how
/// deep inside the SOS cone the target sits.
pub fn sos_constrain_matrix(
    prog: &mut ConicProgram,
    name: &str,
    target: &MatrixPolyExpr,
    margin: Option<ScalarId>,
    opts: &SosOptions,
) -> Result<SosHandle, SosError> {
    let q = target.len();
    if q == 0 || target.iter().any(|r| r.len() != q) {
        return Err(SosError::NotSymmetric(format!("{q} rows with ragged columns")));
    }
    let nvars = target[0][0].nvars;
    for row in target {
        for p in row {
            check_arity(nvars, p)?;
        }
    }
    for i in 0..q {
        for j in (i + 1)..q {
            if target[i][j] != target[j][i] {
                return Err(SosError::NotSymmetric(format!("entries ({i},{j}) and ({j},{i}) differ")));
            }
        }
    }

    let bases: Vec<Vec<Monomial>> = (0..q)
        .map(|i| monomials_up_to(nvars, target[i][i].degree().div_ceil(2)))
        .collect();
    for b in &bases {
        if b.len() > opts.basis_cap {
            return Err(SosError::DegreeOverflow {
                size: b.len(),
                cap: opts.basis_cap,
            });
        }
    }
    let mut offsets = Vec::with_capacity(q);
    let mut dim = 0;
    for b in &bases {
        offsets.push(dim);
        dim += b.len();
    }
    let block = prog.add_block(name, dim);

    let mut equations = Vec::new();
    for i in 0..q {
        for j in i..q {
            // Gram contributions to each monomial of F_ij.
            let mut rows: BTreeMap<Monomial, LinExpr> = BTreeMap::new();
            for (a, ma) in bases[i].iter().enumerate() {
                for (b, mb) in bases[j].iter().enumerate() {
                    let r = offsets[i] + a;
                    let c = offsets[j] + b;
                    let e = rows.entry(ma.mul(mb)).or_default();
                    e.add_term(Var::entry(block, r, c), 1.0);
                    if let (Some(t), true) = (margin, r == c) {
                        e.add_term(t.into(), 1.0);
                    }
                }
            }
            for (m, e) in &target[i][j].terms {
                rows.entry(m.clone()).or_default().add_scaled(e, -1.0);
            }
            for (_, e) in rows {
                if !e.is_zero() {
                    prog.add_equality(e.clone());
                    equations.push(e);
                }
            }
        }
    }

    Ok(SosHandle {
        block,
        bases,
        offsets,
        margin,
        equations,
        nvars,
    })
}

/// Reads the Gram matrix of `handle` out of `sol` and measures how well it
/// reproduces the target coefficients.
pub fn recover_certificate(sol: &Solution, handle: &SosHandle) -> Certificate {
    let mut gram = sol.block(handle.block).clone();
    if let Some(t) = handle.margin {
        let tv = sol.scalar(t);
        for k in 0..gram.nrows() {
            gram[(k, k)] += tv;
        }
    }
    let residual = handle
        .equations
        .iter()
        .map(|e| e.eval(sol).abs())
        .fold(0.0, f64::max);
    let min_eigenvalue = crate::sdp::min_eigenvalue(&gram);
    Certificate {
        gram,
        residual,
        min_eigenvalue,
    }
}

/// Evaluates `B(x)ᵀ Q B(x)` for a recovered Gram matrix.
pub fn gram_eval(handle: &SosHandle, gram: &DMatrix<f64>, x: &[f64]) -> DMatrix<f64> {
    let q = handle.bases.len();
    let vals: Vec<Vec<f64>> = handle
        .bases
        .iter()
        .map(|b| b.iter().map(|m| m.eval_f64(x)).collect())
        .collect();
    let mut out = DMatrix::zeros(q, q);
    for i in 0..q {
        for j in 0..q {
            let mut s = 0.0;
            for (a, va) in vals[i].iter().enumerate() {
                for (b, vb) in vals[j].iter().enumerate() {
                    s += va * gram[(handle.offsets[i] + a, handle.offsets[j] + b)] * vb;
                }
            }
            out[(i, j)] = s;
        }
    }
    out
}
