//! Small dense semidefinite programming.
//!
//! A [`ConicProgram`] holds free scalar variables, symmetric PSD matrix
//! blocks, affine equality constraints and a linear objective to maximize.
//! Scalars may carry interval bounds, which are compiled into pairs of
//! 1×1 PSD blocks (`hi − x ⪰ 0`, `x − lo ⪰ 0`).
//!
//! [`InteriorPointSolver`] is an infeasible-start primal-dual path-following
//! method (HKM search direction, Mehrotra predictor-corrector). Free scalars
//! are eliminated up front by Gauss–Jordan pivoting on their columns and
//! recovered from the final iterate, so the Newton systems are the plain
//! SPD Schur complement. Infeasibility is reported only when the iterates
//! produce an explicit Farkas ray.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdpError {
    #[error("invalid program: {0}")]
    InvalidProgram(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ScalarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub usize);

/// A decision variable: a free scalar or one entry of a symmetric block.
/// Block entries are normalized so that `row <= col`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    Scalar(usize),
    Entry { block: usize, row: usize, col: usize },
}

impl Var {
    pub fn entry(block: BlockId, row: usize, col: usize) -> Var {
        let (row, col) = if row <= col { (row, col) } else { (col, row) };
        Var::Entry { block: block.0, row, col }
    }
}

impl From<ScalarId> for Var {
    fn from(s: ScalarId) -> Var {
        Var::Scalar(s.0)
    }
}

/// Affine expression `constant + Σ coef·var`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub constant: f64,
    pub terms: BTreeMap<Var, f64>,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        LinExpr {
            constant: c,
            terms: BTreeMap::new(),
        }
    }

    pub fn var(v: impl Into<Var>) -> Self {
        let mut e = Self::zero();
        e.add_term(v.into(), 1.0);
        e
    }

    pub fn add_term(&mut self, v: Var, coef: f64) {
        if coef == 0.0 {
            return;
        }
        let slot = self.terms.entry(v).or_insert(0.0);
        *slot += coef;
        if *slot == 0.0 {
            self.terms.remove(&v);
        }
    }

    pub fn add_scaled(&mut self, other: &LinExpr, k: f64) {
        if k == 0.0 {
            return;
        }
        self.constant += k * other.constant;
        for (&v, &c) in &other.terms {
            self.add_term(v, k * c);
        }
    }

    pub fn scaled(&self, k: f64) -> LinExpr {
        let mut e = LinExpr::zero();
        e.add_scaled(self, k);
        e
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.is_empty()
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// Evaluates the expression at a solution.
    pub fn eval(&self, sol: &Solution) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|(v, c)| c * sol.value(*v))
                .sum::<f64>()
    }
}

#[derive(Clone, Debug)]
struct ScalarDecl {
    name: String,
    bounds: Option<(f64, f64)>,
}

#[derive(Clone, Debug)]
struct BlockDecl {
    name: String,
    dim: usize,
}

/// Maximize a linear objective over free scalars and PSD blocks subject to
/// affine equalities.
#[derive(Clone, Debug, Default)]
pub struct ConicProgram {
    scalars: Vec<ScalarDecl>,
    blocks: Vec<BlockDecl>,
    equalities: Vec<LinExpr>,
    objective: LinExpr,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_scalar(&mut self, name: impl Into<String>) -> ScalarId {
        self.scalars.push(ScalarDecl {
            name: name.into(),
            bounds: None,
        });
        ScalarId(self.scalars.len() - 1)
    }

    /// Restricts a scalar to `[lo, hi]`; `lo == hi` pins it with an equality.
    pub fn set_bounds(&mut self, s: ScalarId, lo: f64, hi: f64) {
        self.scalars[s.0].bounds = Some((lo, hi));
    }

    pub fn add_block(&mut self, name: impl Into<String>, dim: usize) -> BlockId {
        self.blocks.push(BlockDecl {
            name: name.into(),
            dim,
        });
        BlockId(self.blocks.len() - 1)
    }

    /// Adds the constraint `expr == 0`.
    pub fn add_equality(&mut self, expr: LinExpr) {
        self.equalities.push(expr);
    }

    /// Sets the objective to be maximized.
    pub fn maximize(&mut self, expr: LinExpr) {
        self.objective = expr;
    }

    pub fn num_scalars(&self) -> usize {
        self.scalars.len()
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_equalities(&self) -> usize {
        self.equalities.len()
    }

    pub fn block_dim(&self, b: BlockId) -> usize {
        self.blocks[b.0].dim
    }

    pub fn scalar_name(&self, s: ScalarId) -> &str {
        &self.scalars[s.0].name
    }

    pub fn block_name(&self, b: BlockId) -> &str {
        &self.blocks[b.0].name
    }

    pub fn equalities(&self) -> &[LinExpr] {
        &self.equalities
    }

    pub fn objective(&self) -> &LinExpr {
        &self.objective
    }

    fn check_var(&self, v: &Var) -> Result<(), SdpError> {
        match *v {
            Var::Scalar(i) if i < self.scalars.len() => Ok(()),
            Var::Entry { block, row, col }
                if block < self.blocks.len() && row <= col && col < self.blocks[block].dim =>
            {
                Ok(())
            }
            _ => Err(SdpError::InvalidProgram(format!("undeclared variable {v:?}"))),
        }
    }

    /// Checks that dimensions are consistent and every expression references
    /// declared variables.
    pub fn validate(&self) -> Result<(), SdpError> {
        for b in &self.blocks {
            if b.dim == 0 {
                return Err(SdpError::InvalidProgram(format!("block {} has dimension 0", b.name)));
            }
        }
        for s in &self.scalars {
            if let Some((lo, hi)) = s.bounds {
                if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                    return Err(SdpError::InvalidProgram(format!(
                        "scalar {} has invalid bounds [{lo}, {hi}]",
                        s.name
                    )));
                }
            }
        }
        for e in self.equalities.iter().chain(std::iter::once(&self.objective)) {
            if !e.constant.is_finite() {
                return Err(SdpError::InvalidProgram("non-finite constant".into()));
            }
            for (v, c) in &e.terms {
                self.check_var(v)?;
                if !c.is_finite() {
                    return Err(SdpError::InvalidProgram(format!("non-finite coefficient on {v:?}")));
                }
            }
        }
        Ok(())
    }

    /// Writes the compiled standard form in a plain sparse text format close
    /// to SDPA: constraint count, block sizes (free scalars as a trailing
    /// negative "F" size), right-hand side, then `k block row col value`
    /// triplets with `k = 0` for the (minimization) objective. Free-scalar
    /// coefficients use block index `nblocks + 1` and `row = col = index`.
    pub fn write_sdpa<W: Write>(&self, mut w: W) -> io::Result<()> {
        let c = match compile(self) {
            Ok(c) => c,
            Err(e) => return writeln!(w, "* invalid program: {e}"),
        };
        writeln!(w, "* passiv conic program: {} scalars, {} blocks", self.scalars.len(), self.blocks.len())?;
        writeln!(w, "{}", c.m)?;
        writeln!(w, "{}", c.dims.len())?;
        let mut sizes: Vec<String> = c.dims.iter().map(|d| d.to_string()).collect();
        sizes.push(format!("F{}", c.nfree));
        writeln!(w, "{}", sizes.join(" "))?;
        writeln!(
            w,
            "{}",
            c.b.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
        )?;
        let free_block = c.dims.len() + 1;
        for (bi, entries) in c.c_blocks.iter().enumerate() {
            for &(r, col, v) in entries {
                writeln!(w, "0 {} {} {} {v:e}", bi + 1, r + 1, col + 1)?;
            }
        }
        for (j, &v) in c.c_free.iter().enumerate() {
            if v != 0.0 {
                writeln!(w, "0 {free_block} {} {} {v:e}", j + 1, j + 1)?;
            }
        }
        for (k, row) in c.rows.iter().enumerate() {
            for &(bi, r, col, v) in &row.block_terms {
                writeln!(w, "{} {} {} {} {v:e}", k + 1, bi + 1, r + 1, col + 1)?;
            }
            for &(j, v) in &row.free_terms {
                writeln!(w, "{} {free_block} {} {} {v:e}", k + 1, j + 1, j + 1)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalLimit,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalLimit => "numerical_limit",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub status: SolveStatus,
    /// Values of the declared scalars.
    pub values: Vec<f64>,
    /// Values of the declared blocks.
    pub block_values: Vec<DMatrix<f64>>,
    /// Objective of the (maximization) program at the primal iterate.
    pub objective_value: f64,
    /// Upper bound on the optimum from the dual iterate.
    pub dual_bound: f64,
    /// Relative duality gap `|p − d| / (1 + |p| + |d|)`.
    pub duality_gap: f64,
    /// Largest relative primal/dual residual.
    pub max_infeasibility: f64,
    pub iterations: usize,
}

impl Solution {
    pub fn value(&self, v: Var) -> f64 {
        match v {
            Var::Scalar(i) => self.values[i],
            Var::Entry { block, row, col } => self.block_values[block][(row, col)],
        }
    }

    pub fn scalar(&self, s: ScalarId) -> f64 {
        self.values[s.0]
    }

    pub fn block(&self, b: BlockId) -> &DMatrix<f64> {
        &self.block_values[b.0]
    }

    /// Smallest eigenvalue over all returned blocks.
    pub fn min_block_eigenvalue(&self) -> f64 {
        self.block_values
            .iter()
            .map(min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }

    /// Max absolute violation of the program's equalities at this solution.
    pub fn equality_residual(&self, p: &ConicProgram) -> f64 {
        p.equalities
            .iter()
            .map(|e| e.eval(self).abs())
            .fold(0.0, f64::max)
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            gap_tol: 1e-7,
            feas_tol: 1e-8,
            max_iter: 200,
        }
    }
}

/// Anything that can solve a [`ConicProgram`]. The built-in
/// [`InteriorPointSolver`] is the reference implementation; deployments can
/// plug in an adapter to an external conic solver.
pub trait ConicSolver: Sync {
    fn solve(&self, program: &ConicProgram) -> Result<Solution, SdpError>;
    fn options(&self) -> SolverOptions;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct InteriorPointSolver {
    pub opts: SolverOptions,
}

impl InteriorPointSolver {
    pub fn new(opts: SolverOptions) -> Self {
        InteriorPointSolver { opts }
    }
}

impl ConicSolver for InteriorPointSolver {
    fn solve(&self, program: &ConicProgram) -> Result<Solution, SdpError> {
        solve(program, &self.opts)
    }

    fn options(&self) -> SolverOptions {
        self.opts
    }
}

// ---------------------------------------------------------------------------
// Standard form
//
//   min  Σ⟨C_b, X_b⟩ + cᵀu   s.t.  Σ⟨A_kb, X_b⟩ + f_kᵀu = b_k,  X_b ⪰ 0
//   max  bᵀy                 s.t.  Σ y_k A_kb + Z_b = C_b,  Fᵀy = c,  Z_b ⪰ 0
//
// Symmetric sparse entries (r, c, v) with r <= c mean A_rc = A_cr = v.

#[derive(Clone, Debug, Default)]
struct Row {
    block_terms: Vec<(usize, usize, usize, f64)>,
    free_terms: Vec<(usize, f64)>,
}

#[derive(Debug)]
struct Compiled {
    dims: Vec<usize>,
    nfree: usize,
    m: usize,
    rows: Vec<Row>,
    b: Vec<f64>,
    c_blocks: Vec<Vec<(usize, usize, f64)>>,
    c_free: Vec<f64>,
    /// Constant offset of the maximization objective.
    obj_offset: f64,
    /// Maps declared scalars to free variables (`None` for pinned scalars).
    scalar_map: Vec<ScalarSlot>,
    user_blocks: usize,
    trivially_infeasible: bool,
}

#[derive(Clone, Copy, Debug)]
enum ScalarSlot {
    Free(usize),
    Pinned(f64),
}

fn compile(p: &ConicProgram) -> Result<Compiled, SdpError> {
    p.validate()?;
    let mut dims: Vec<usize> = p.blocks.iter().map(|b| b.dim).collect();
    let user_blocks = dims.len();
    let mut scalar_map = Vec::with_capacity(p.scalars.len());
    let mut nfree = 0;
    for s in &p.scalars {
        match s.bounds {
            Some((lo, hi)) if lo == hi => scalar_map.push(ScalarSlot::Pinned(lo)),
            _ => {
                scalar_map.push(ScalarSlot::Free(nfree));
                nfree += 1;
            }
        }
    }

    let mut rows = Vec::new();
    let mut b = Vec::new();
    let mut trivially_infeasible = false;

    let push_expr = |e: &LinExpr, rows: &mut Vec<Row>, b: &mut Vec<f64>| -> bool {
        let mut row = Row::default();
        let mut rhs = -e.constant;
        for (v, &c) in &e.terms {
            match *v {
                Var::Scalar(i) => match scalar_map[i] {
                    ScalarSlot::Free(j) => row.free_terms.push((j, c)),
                    ScalarSlot::Pinned(val) => rhs -= c * val,
                },
                Var::Entry { block, row: r, col } => {
                    let v = if r == col { c } else { c / 2.0 };
                    row.block_terms.push((block, r, col, v));
                }
            }
        }
        if row.block_terms.is_empty() && row.free_terms.is_empty() {
            let scale = 1.0 + e.constant.abs();
            return rhs.abs() <= 1e-12 * scale;
        }
        rows.push(row);
        b.push(rhs);
        true
    };

    for e in &p.equalities {
        if !push_expr(e, &mut rows, &mut b) {
            trivially_infeasible = true;
        }
    }

    // Interval bounds: slack blocks hi − x = s₁ ⪰ 0, x − lo = s₂ ⪰ 0.
    for (i, s) in p.scalars.iter().enumerate() {
        if let (Some((lo, hi)), ScalarSlot::Free(j)) = (s.bounds, scalar_map[i]) {
            let upper = dims.len();
            dims.push(1);
            rows.push(Row {
                block_terms: vec![(upper, 0, 0, 1.0)],
                free_terms: vec![(j, 1.0)],
            });
            b.push(hi);
            let lower = dims.len();
            dims.push(1);
            rows.push(Row {
                block_terms: vec![(lower, 0, 0, 1.0)],
                free_terms: vec![(j, -1.0)],
            });
            b.push(-lo);
        }
    }

    // Objective: maximize ⇒ minimize the negation.
    let mut c_blocks = vec![Vec::new(); dims.len()];
    let mut c_free = vec![0.0; nfree];
    let mut obj_offset = p.objective.constant;
    for (v, &c) in &p.objective.terms {
        match *v {
            Var::Scalar(i) => match scalar_map[i] {
                ScalarSlot::Free(j) => c_free[j] -= c,
                ScalarSlot::Pinned(val) => obj_offset += c * val,
            },
            Var::Entry { block, row, col } => {
                let v = if row == col { c } else { c / 2.0 };
                c_blocks[block].push((row, col, -v));
            }
        }
    }

    Ok(Compiled {
        m: rows.len(),
        dims,
        nfree,
        rows,
        b,
        c_blocks,
        c_free,
        obj_offset,
        scalar_map,
        user_blocks,
        trivially_infeasible,
    })
}

fn sparse_to_dense(n: usize, entries: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for &(r, c, v) in entries {
        m[(r, c)] += v;
        if r != c {
            m[(c, r)] += v;
        }
    }
    m
}

// ---------------------------------------------------------------------------
// Free-variable elimination
//
// Gauss–Jordan with full pivoting on F: each pivot row k expresses one free
// variable u_j through X, and is substituted into every other row and the
// objective. What remains is a pure SDP in X.

type BlockKey = (usize, usize, usize);

#[derive(Clone, Debug, Default)]
struct DenseRow {
    a: BTreeMap<BlockKey, f64>,
    f: Vec<f64>,
    b: f64,
}

impl DenseRow {
    fn axpy(&mut self, k: f64, other: &DenseRow, drop_tol: f64) {
        for (key, v) in &other.a {
            let e = self.a.entry(*key).or_insert(0.0);
            *e -= k * v;
        }
        self.a.retain(|_, v| v.abs() > drop_tol);
        for (x, y) in self.f.iter_mut().zip(&other.f) {
            *x -= k * y;
        }
        self.b -= k * other.b;
    }

    fn sparse(&self) -> Vec<(usize, usize, usize, f64)> {
        self.a.iter().map(|(&(bi, r, c), &v)| (bi, r, c, v)).collect()
    }
}

struct Reduced {
    dims: Vec<usize>,
    rows: Vec<Vec<(usize, usize, usize, f64)>>,
    b: Vec<f64>,
    c_blocks: Vec<Vec<(usize, usize, f64)>>,
    /// Constant added to the minimization objective by the substitution.
    obj_const: f64,
    /// `u_j = (b − ⟨A, X⟩) / pivot` for each eliminated free variable.
    recover: Vec<(usize, Vec<(usize, usize, usize, f64)>, f64, f64)>,
    nfree: usize,
}

enum Reduction {
    Reduced(Reduced),
    Infeasible,
    Unbounded,
}

fn reduce(c: &Compiled) -> Reduction {
    let nf = c.nfree;
    let mut rows: Vec<DenseRow> = c
        .rows
        .iter()
        .zip(&c.b)
        .map(|(row, &b)| {
            let mut r = DenseRow {
                a: BTreeMap::new(),
                f: vec![0.0; nf],
                b,
            };
            for &(bi, i, j, v) in &row.block_terms {
                *r.a.entry((bi, i, j)).or_insert(0.0) += v;
            }
            for &(j, v) in &row.free_terms {
                r.f[j] += v;
            }
            r
        })
        .collect();
    let mut obj = DenseRow {
        a: BTreeMap::new(),
        f: c.c_free.clone(),
        b: 0.0,
    };
    for (bi, entries) in c.c_blocks.iter().enumerate() {
        for &(i, j, v) in entries {
            *obj.a.entry((bi, i, j)).or_insert(0.0) += v;
        }
    }

    let fmax = rows
        .iter()
        .flat_map(|r| r.f.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let piv_tol = 1e-12 * fmax.max(1e-300);
    let mut row_used = vec![false; rows.len()];
    let mut col_used = vec![false; nf];
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    loop {
        let mut best = (0.0, usize::MAX, usize::MAX);
        for (k, r) in rows.iter().enumerate() {
            if row_used[k] {
                continue;
            }
            for (j, &v) in r.f.iter().enumerate() {
                if !col_used[j] && v.abs() > best.0 {
                    best = (v.abs(), k, j);
                }
            }
        }
        if best.0 <= piv_tol {
            break;
        }
        let (_, k, j) = best;
        row_used[k] = true;
        col_used[j] = true;
        pivots.push((k, j));
        let pivot_row = rows[k].clone();
        let p = pivot_row.f[j];
        for (i, r) in rows.iter_mut().enumerate() {
            if i != k && r.f[j] != 0.0 {
                let factor = r.f[j] / p;
                r.axpy(factor, &pivot_row, 0.0);
                r.f[j] = 0.0;
            }
        }
        if obj.f[j] != 0.0 {
            let factor = obj.f[j] / p;
            obj.axpy(factor, &pivot_row, 0.0);
            obj.f[j] = 0.0;
        }
    }
    // A free variable left without a pivot is unconstrained.
    let cscale = 1.0 + c.c_free.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if (0..nf).any(|j| !col_used[j] && obj.f[j].abs() > 1e-12 * cscale) {
        return Reduction::Unbounded;
    }

    let mut out_rows = Vec::new();
    let mut out_b = Vec::new();
    for (k, r) in rows.iter().enumerate() {
        if row_used[k] {
            continue;
        }
        let amax = r.a.values().fold(0.0f64, |m, v| m.max(v.abs()));
        if amax <= 1e-13 {
            if r.b.abs() > 1e-9 * (1.0 + c.b.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
                return Reduction::Infeasible;
            }
            continue;
        }
        out_rows.push(r.sparse());
        out_b.push(r.b);
    }
    let mut c_blocks = vec![Vec::new(); c.dims.len()];
    for (&(bi, i, j), &v) in &obj.a {
        c_blocks[bi].push((i, j, v));
    }
    let recover = pivots
        .iter()
        .map(|&(k, j)| (j, rows[k].sparse(), rows[k].b, rows[k].f[j]))
        .collect();
    Reduction::Reduced(Reduced {
        dims: c.dims.clone(),
        rows: out_rows,
        b: out_b,
        c_blocks,
        obj_const: -obj.b,
        recover,
        nfree: nf,
    })
}

/// Per-block view of the constraint rows: for each block, the rows touching
/// it with both `(r,c)` and `(c,r)` listed for off-diagonal entries.
struct BlockRows {
    lists: Vec<Vec<(usize, Vec<(usize, usize, f64)>)>>,
}

impl BlockRows {
    fn new(red: &Reduced) -> Self {
        let mut per: Vec<BTreeMap<usize, Vec<(usize, usize, f64)>>> =
            vec![BTreeMap::new(); red.dims.len()];
        for (k, row) in red.rows.iter().enumerate() {
            for &(bi, r, col, v) in row {
                let e = per[bi].entry(k).or_default();
                e.push((r, col, v));
                if r != col {
                    e.push((col, r, v));
                }
            }
        }
        BlockRows {
            lists: per.into_iter().map(|m| m.into_iter().collect()).collect(),
        }
    }
}

struct Iterate {
    x: Vec<DMatrix<f64>>,
    z: Vec<DMatrix<f64>>,
    y: DVector<f64>,
}

fn sparse_inner(row: &[(usize, usize, usize, f64)], x: &[DMatrix<f64>]) -> f64 {
    row.iter()
        .map(|&(bi, r, col, v)| if r == col { v * x[bi][(r, col)] } else { 2.0 * v * x[bi][(r, col)] })
        .sum()
}

/// A(X): ⟨A_k, X⟩ for each row.
fn apply_a(red: &Reduced, x: &[DMatrix<f64>]) -> DVector<f64> {
    DVector::from_iterator(red.rows.len(), red.rows.iter().map(|row| sparse_inner(row, x)))
}

/// A*(y): Σ_k y_k A_k per block.
fn apply_at(red: &Reduced, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
    let mut out: Vec<DMatrix<f64>> = red.dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    for (k, row) in red.rows.iter().enumerate() {
        for &(bi, r, col, v) in row {
            out[bi][(r, col)] += v * y[k];
            if r != col {
                out[bi][(col, r)] += v * y[k];
            }
        }
    }
    out
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn frob(a: &[DMatrix<f64>]) -> f64 {
    a.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest α ≤ 1 with X + α·ΔX ⪰ 0, scaled back by `tau`. `None` if X is not PD.
fn max_step(x: &[DMatrix<f64>], dx: &[DMatrix<f64>], tau: f64) -> Option<f64> {
    let mut alpha: f64 = 1.0;
    for (xb, dxb) in x.iter().zip(dx) {
        let chol = xb.clone().cholesky()?;
        let linv = chol.l().try_inverse()?;
        let t = &linv * dxb * linv.transpose();
        let lmin = sym(&t).symmetric_eigenvalues().min();
        if lmin < 0.0 {
            alpha = alpha.min(-tau / lmin);
        }
    }
    Some(alpha.min(1.0))
}

enum SchurFactor {
    Chol(nalgebra::Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::linalg::FullPivLU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

/// Factorization of the Schur complement with iterative refinement.
struct Schur {
    m: DMatrix<f64>,
    factor: SchurFactor,
}

impl Schur {
    fn new(m: DMatrix<f64>) -> Option<Self> {
        if let Some(ch) = m.clone().cholesky() {
            return Some(Schur {
                m,
                factor: SchurFactor::Chol(ch),
            });
        }
        // Nearly dependent rows: regularize slightly before giving up.
        let scale = m.diagonal().amax().max(1e-300);
        let mut reg = m.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += 1e-13 * scale;
        }
        if let Some(ch) = reg.clone().cholesky() {
            return Some(Schur {
                m,
                factor: SchurFactor::Chol(ch),
            });
        }
        let lu = m.clone().full_piv_lu();
        lu.is_invertible().then_some(Schur {
            m,
            factor: SchurFactor::Lu(lu),
        })
    }

    fn raw_solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        match &self.factor {
            SchurFactor::Chol(f) => Some(f.solve(rhs)),
            SchurFactor::Lu(f) => f.solve(rhs),
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let mut x = self.raw_solve(rhs)?;
        for _ in 0..2 {
            let r = rhs - &self.m * &x;
            if r.amax() <= 1e-15 * (1.0 + rhs.amax()) {
                break;
            }
            x += self.raw_solve(&r)?;
        }
        x.iter().all(|v| v.is_finite()).then_some(x)
    }
}

/// Solves `p` with the built-in interior-point method.
pub fn solve(p: &ConicProgram, opts: &SolverOptions) -> Result<Solution, SdpError> {
    let c = compile(p)?;
    if c.trivially_infeasible {
        return Ok(finish(p, &c, None, None, SolveStatus::Infeasible, f64::NAN, f64::NAN, f64::INFINITY, f64::INFINITY, 0));
    }
    let red = match reduce(&c) {
        Reduction::Reduced(r) => r,
        Reduction::Infeasible => {
            return Ok(finish(p, &c, None, None, SolveStatus::Infeasible, f64::NAN, f64::NAN, f64::INFINITY, f64::INFINITY, 0))
        }
        Reduction::Unbounded => {
            return Ok(finish(p, &c, None, None, SolveStatus::Unbounded, f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY, 0))
        }
    };
    let trace = std::env::var_os("PASSIV_SDP_TRACE").is_some();
    let rows_by_block = BlockRows::new(&red);
    let nblocks = red.dims.len();
    let ntot: usize = red.dims.iter().sum();
    let m = red.rows.len();

    let b = DVector::from_vec(red.b.clone());
    let cmat: Vec<DMatrix<f64>> = red
        .dims
        .iter()
        .zip(&red.c_blocks)
        .map(|(&n, e)| sparse_to_dense(n, e))
        .collect();
    let norm_b = b.norm();
    let norm_c = frob(&cmat);

    // Starting point: scaled identities.
    let row_norms: Vec<f64> = red
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .map(|&(_, r, col, v)| if r == col { v * v } else { 2.0 * v * v })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let nmax = red.dims.iter().copied().max().unwrap_or(1) as f64;
    let mut xi: f64 = 10.0f64.max(nmax.sqrt());
    for k in 0..m {
        xi = xi.max(nmax.sqrt() * (1.0 + b[k].abs()) / (1.0 + row_norms[k]));
    }
    let eta = 10.0f64
        .max(nmax.sqrt())
        .max(row_norms.iter().cloned().fold(0.0, f64::max))
        .max(norm_c);

    let mut it = Iterate {
        x: red.dims.iter().map(|&n| DMatrix::identity(n, n) * xi).collect(),
        z: red.dims.iter().map(|&n| DMatrix::identity(n, n) * eta).collect(),
        y: DVector::zeros(m),
    };

    let mut status = SolveStatus::NumericalLimit;
    let mut iterations = 0;
    let mut stall = 0;
    let (mut last_gap, mut last_inf) = (f64::INFINITY, f64::INFINITY);

    for iter in 0..=opts.max_iter {
        iterations = iter;
        let rp = &b - apply_a(&red, &it.x);
        let aty = apply_at(&red, &it.y);
        let rd: Vec<DMatrix<f64>> = (0..nblocks).map(|i| &cmat[i] - &aty[i] - &it.z[i]).collect();

        let pobj = inner(&cmat, &it.x);
        let dobj = b.dot(&it.y);
        let gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let pinf = rp.norm() / (1.0 + norm_b);
        let dinf = frob(&rd) / (1.0 + norm_c);
        last_gap = gap;
        last_inf = pinf.max(dinf);
        let mu = inner(&it.x, &it.z) / ntot as f64;
        if trace {
            eprintln!(
                "sdp it={iter:3} pobj={:+.9e} dobj={:+.9e} gap={gap:.2e} pinf={pinf:.2e} dinf={dinf:.2e} mu={mu:.2e}",
                c.obj_offset - pobj - red.obj_const,
                c.obj_offset - dobj - red.obj_const,
            );
        }

        if gap <= opts.gap_tol && pinf <= opts.feas_tol && dinf <= opts.feas_tol {
            status = SolveStatus::Optimal;
            break;
        }

        // Farkas rays. Primal infeasible: A*ŷ + Ẑ ≈ 0, bᵀŷ > 0.
        let ray_scale = (it.y.norm_squared() + frob(&it.z).powi(2)).sqrt();
        if ray_scale > 0.0 && dobj > 0.0 {
            let viol = dobj / ray_scale;
            let resid = frob(&cmat.iter().zip(&rd).map(|(a, r)| a - r).collect::<Vec<_>>()) / ray_scale;
            if viol > 1e6 * opts.feas_tol && resid <= opts.feas_tol * (1.0 + norm_c) && pinf > opts.feas_tol {
                status = SolveStatus::Infeasible;
                break;
            }
        }
        // Dual infeasible (unbounded): A(X̂) ≈ 0, ⟨C, X̂⟩ < 0.
        let pray_scale = frob(&it.x);
        if pray_scale > 0.0 && pobj < 0.0 {
            let viol = -pobj / pray_scale;
            let resid = (&b - &rp).norm() / pray_scale;
            if viol > 1e6 * opts.feas_tol && resid <= opts.feas_tol * (1.0 + norm_b) && dinf > opts.feas_tol {
                status = SolveStatus::Unbounded;
                break;
            }
        }
        if iter == opts.max_iter {
            break;
        }

        let mut w = Vec::with_capacity(nblocks);
        for zb in &it.z {
            match zb.clone().cholesky() {
                Some(ch) => w.push(ch.inverse()),
                None => break,
            }
        }
        if w.len() != nblocks {
            break;
        }

        // Schur complement M_kl = ⟨A_k, X A_l Z⁻¹⟩, block by block.
        let mut mmat = DMatrix::<f64>::zeros(m, m);
        for bi in 0..nblocks {
            let xb = &it.x[bi];
            let wb = &w[bi];
            let n = red.dims[bi];
            let list = &rows_by_block.lists[bi];
            for (l, entries) in list {
                let mut g = DMatrix::<f64>::zeros(n, n);
                for &(r, col, v) in entries {
                    g.ger(v, &xb.column(r), &wb.row(col).transpose(), 1.0);
                }
                for (k, ek) in list {
                    let s: f64 = ek.iter().map(|&(r, col, v)| v * g[(col, r)]).sum();
                    mmat[(*k, *l)] += s;
                }
            }
        }
        let mmat = (&mmat + mmat.transpose()) * 0.5;
        let Some(schur) = Schur::new(mmat) else { break };

        // X Rd Z⁻¹, shared by predictor and corrector.
        let a_xrdw = apply_a(&red, &(0..nblocks).map(|i| sym(&(&it.x[i] * &rd[i] * &w[i]))).collect::<Vec<_>>());

        // ΔX = R − sym(X ΔZ Z⁻¹), ΔZ = Rd − A*Δy, M Δy = rp − A(R) + A(X Rd Z⁻¹).
        let direction = |r_blocks: &[DMatrix<f64>]| -> Option<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>, DVector<f64>)> {
            let h = &rp - apply_a(&red, r_blocks) + &a_xrdw;
            let dy = schur.solve(&h)?;
            let atdy = apply_at(&red, &dy);
            let dz: Vec<DMatrix<f64>> = (0..nblocks).map(|i| &rd[i] - &atdy[i]).collect();
            let dx: Vec<DMatrix<f64>> = (0..nblocks)
                .map(|i| &r_blocks[i] - sym(&(&it.x[i] * &dz[i] * &w[i])))
                .collect();
            Some((dx, dz, dy))
        };

        // Predictor (σ = 0): R = −X.
        let r_aff: Vec<DMatrix<f64>> = it.x.iter().map(|x| -x).collect();
        let Some((dx_a, dz_a, _)) = direction(&r_aff) else { break };
        let (Some(ap), Some(ad)) = (max_step(&it.x, &dx_a, 1.0), max_step(&it.z, &dz_a, 1.0)) else {
            break;
        };
        let x_aff: Vec<DMatrix<f64>> = (0..nblocks).map(|i| &it.x[i] + &dx_a[i] * ap).collect();
        let z_aff: Vec<DMatrix<f64>> = (0..nblocks).map(|i| &it.z[i] + &dz_a[i] * ad).collect();
        let mu_aff = inner(&x_aff, &z_aff) / ntot as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector: R = σμZ⁻¹ − X − sym(ΔXₐ ΔZₐ Z⁻¹).
        let r_cor: Vec<DMatrix<f64>> = (0..nblocks)
            .map(|i| &w[i] * (sigma * mu) - &it.x[i] - sym(&(&dx_a[i] * &dz_a[i] * &w[i])))
            .collect();
        let Some((dx, dz, dy)) = direction(&r_cor) else { break };
        let tau = if iter < 5 { 0.9 } else { 0.98 };
        let (Some(ap), Some(ad)) = (max_step(&it.x, &dx, tau), max_step(&it.z, &dz, tau)) else {
            break;
        };

        for i in 0..nblocks {
            it.x[i] = sym(&(&it.x[i] + &dx[i] * ap));
            it.z[i] = sym(&(&it.z[i] + &dz[i] * ad));
        }
        it.y += &dy * ad;

        if ap.max(ad) < 1e-9 {
            stall += 1;
            if stall > 5 {
                break;
            }
        } else {
            stall = 0;
        }
    }

    let pobj = inner(&cmat, &it.x) + red.obj_const;
    let dobj = b.dot(&it.y) + red.obj_const;
    let u = recover_free(&red, &it.x);
    Ok(finish(
        p,
        &c,
        Some(&it.x),
        Some(&u),
        status,
        c.obj_offset - pobj,
        c.obj_offset - dobj,
        last_gap,
        last_inf,
        iterations,
    ))
}

fn recover_free(red: &Reduced, x: &[DMatrix<f64>]) -> Vec<f64> {
    let mut u = vec![0.0; red.nfree];
    for (j, row, b, piv) in &red.recover {
        u[*j] = (b - sparse_inner(row, x)) / piv;
    }
    u
}

#[allow(clippy::too_many_arguments)]
fn finish(
    p: &ConicProgram,
    c: &Compiled,
    x: Option<&[DMatrix<f64>]>,
    u: Option<&[f64]>,
    status: SolveStatus,
    objective_value: f64,
    dual_bound: f64,
    duality_gap: f64,
    max_infeasibility: f64,
    iterations: usize,
) -> Solution {
    let values = c
        .scalar_map
        .iter()
        .map(|slot| match (slot, u) {
            (ScalarSlot::Pinned(v), _) => *v,
            (ScalarSlot::Free(j), Some(u)) => u[*j],
            (ScalarSlot::Free(_), None) => f64::NAN,
        })
        .collect();
    let block_values = (0..c.user_blocks)
        .map(|i| match x {
            Some(x) => x[i].clone(),
            None => DMatrix::from_element(p.blocks[i].dim, p.blocks[i].dim, f64::NAN),
        })
        .collect();
    Solution {
        status,
        values,
        block_values,
        objective_value,
        dual_bound,
        duality_gap,
        max_infeasibility,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve_default(p: &ConicProgram) -> Solution {
        solve(p, &SolverOptions::default()).unwrap()
    }

    /// max t s.t. [[1, t], [t, 1]] ⪰ 0
    fn two_by_two(p: &mut ConicProgram, tag: &str) -> ScalarId {
        let t = p.add_scalar(format!("t{tag}"));
        let x = p.add_block(format!("X{tag}"), 2);
        let mut e = LinExpr::var(Var::entry(x, 0, 0));
        e.constant = -1.0;
        p.add_equality(e);
        let mut e = LinExpr::var(Var::entry(x, 1, 1));
        e.constant = -1.0;
        p.add_equality(e);
        let mut e = LinExpr::var(Var::entry(x, 0, 1));
        e.add_term(t.into(), -1.0);
        p.add_equality(e);
        t
    }

    #[test]
    fn unit_correlation_bound() {
        let mut p = ConicProgram::new();
        let t = two_by_two(&mut p, "");
        p.maximize(LinExpr::var(t));
        let s = solve_default(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.scalar(t) - 1.0).abs() < 1e-6, "{}", s.scalar(t));
        assert!(s.objective_value <= s.dual_bound + 1e-7);
        assert!(s.min_block_eigenvalue() >= -1e-8);
    }

    #[test]
    fn interval_feasibility() {
        let mut p = ConicProgram::new();
        let x = p.add_scalar("x");
        let a = p.add_block("a", 1);
        let b = p.add_block("b", 1);
        let mut e = LinExpr::var(Var::entry(a, 0, 0));
        e.add_term(x.into(), -1.0);
        p.add_equality(e);
        let mut e = LinExpr::var(Var::entry(b, 0, 0));
        e.add_term(x.into(), 1.0);
        e.constant = -1.0;
        p.add_equality(e);
        let s = solve_default(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        let v = s.scalar(x);
        assert!((-1e-8..=1.0 + 1e-8).contains(&v), "{v}");
    }

    #[test]
    fn separable_blocks_add_up() {
        let mut p = ConicProgram::new();
        let t1 = two_by_two(&mut p, "1");
        let t2 = two_by_two(&mut p, "2");
        let mut obj = LinExpr::var(t1);
        obj.add_term(t2.into(), 1.0);
        p.maximize(obj);
        let s = solve_default(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective_value - 2.0).abs() < 1e-6);
    }

    #[test]
    fn bounds_compile_to_slack_blocks() {
        let mut p = ConicProgram::new();
        let x = p.add_scalar("x");
        p.set_bounds(x, -0.5, 2.0);
        p.maximize(LinExpr::var(x));
        let s = solve_default(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.scalar(x) - 2.0).abs() < 1e-6);
        p.maximize(LinExpr::var(x).scaled(-1.0));
        let s = solve_default(&p);
        assert!((s.scalar(x) + 0.5).abs() < 1e-6);
    }

    #[test]
    fn pinned_scalar_is_substituted() {
        let mut p = ConicProgram::new();
        let x = p.add_scalar("x");
        p.set_bounds(x, 0.25, 0.25);
        let y = p.add_scalar("y");
        let blk = p.add_block("s", 1);
        // s = x − y ⪰ 0, maximize y
        let mut e = LinExpr::var(Var::entry(blk, 0, 0));
        e.add_term(x.into(), -1.0);
        e.add_term(y.into(), 1.0);
        p.add_equality(e);
        p.maximize(LinExpr::var(y));
        let s = solve_default(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_eq!(s.scalar(x), 0.25);
        assert!((s.scalar(y) - 0.25).abs() < 1e-6);
    }

    #[test]
    fn detects_infeasibility() {
        // X ⪰ 0 with X₀₀ = −1
        let mut p = ConicProgram::new();
        let x = p.add_block("X", 2);
        let mut e = LinExpr::var(Var::entry(x, 0, 0));
        e.constant = 1.0;
        p.add_equality(e);
        let s = solve_default(&p);
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn detects_unboundedness() {
        let mut p = ConicProgram::new();
        let t = p.add_scalar("t");
        let x = p.add_block("X", 1);
        let mut e = LinExpr::var(Var::entry(x, 0, 0));
        e.add_term(t.into(), -1.0);
        p.add_equality(e);
        p.maximize(LinExpr::var(t));
        let s = solve_default(&p);
        assert_eq!(s.status, SolveStatus::Unbounded);
    }

    #[test]
    fn constant_contradiction_is_infeasible() {
        let mut p = ConicProgram::new();
        p.add_scalar("t");
        p.add_equality(LinExpr::constant(1.0));
        assert_eq!(solve_default(&p).status, SolveStatus::Infeasible);
    }

    #[test]
    fn rejects_undeclared_variables() {
        let mut p = ConicProgram::new();
        p.add_equality(LinExpr::var(Var::Scalar(3)));
        assert!(matches!(solve_default_err(&p), Err(SdpError::InvalidProgram(_))));
    }

    fn solve_default_err(p: &ConicProgram) -> Result<Solution, SdpError> {
        solve(p, &SolverOptions::default())
    }

    #[test]
    fn scaling_rows_preserves_result() {
        let mut p = ConicProgram::new();
        let t = two_by_two(&mut p, "");
        p.maximize(LinExpr::var(t));
        let mut q = p.clone();
        q.equalities = q.equalities.iter().map(|e| e.scaled(10.0)).collect();
        let a = solve_default(&p);
        let b = solve_default(&q);
        assert_eq!(a.status, b.status);
        assert!((a.objective_value - b.objective_value).abs() <= 10.0 * 1e-7);
    }

    #[test]
    fn sdpa_dump_lists_blocks_and_triplets() {
        let mut p = ConicProgram::new();
        let t = two_by_two(&mut p, "");
        p.maximize(LinExpr::var(t));
        let mut buf = Vec::new();
        p.write_sdpa(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "3");
        assert_eq!(lines[2], "1");
        assert_eq!(lines[3], "2 F1");
        assert!(text.contains("0 2 1 1 -1e0"));
    }
}
