//! Independent checks on a synthesized loop: frequency sweeps, a
//! state-space realization with a KYP dissipativity LMI, positive-realness
//! diagnostics and a brute-force grid search over the parameter box.

use nalgebra::{DMatrix, DVector};
use num::complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::passivation::Mode;
use crate::poly::horner_complex;
use crate::sdp::{ConicProgram, ConicSolver, LinExpr, SdpError, SolveStatus, Var};
use crate::system::{
    compose_closed_loop, is_stable_poly, roots, ControllerBasis, Domain, ParamBox, RationalTransfer, SystemError,
    ROOT_MARGIN,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("system is not stable")]
    UnstableInput,
    #[error("system is not minimum phase")]
    NonMinimumPhase,
    #[error("transfer function is improper")]
    ImproperTransfer,
    #[error("no stable point on the grid")]
    NoStablePoint,
    #[error("grid resolution must be at least 2")]
    Resolution,
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

#[derive(Clone, Copy, Debug)]
pub struct SweepOptions {
    pub points: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    /// Golden-section stopping width (in `log10 ω` for CT, `θ` for DT).
    pub refine_tol: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            points: 4096,
            omega_min: 1e-6,
            omega_max: 1e6,
            refine_tol: 1e-9,
        }
    }
}

fn trim(c: &[f64]) -> &[f64] {
    match c.iter().rposition(|v| *v != 0.0) {
        Some(n) => &c[..=n],
        None => &c[..0],
    }
}

/// Boundary point for sweep coordinate `t`: `j·10^t` (CT) or `e^{jt}` (DT).
fn boundary_point(domain: Domain, t: f64) -> Complex64 {
    match domain {
        Domain::Ct => Complex64::new(0.0, 10f64.powf(t)),
        Domain::Dt => Complex64::from_polar(1.0, t),
    }
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// Frequency-sweep index from ascending coefficient lists.
pub fn freq_index_coeffs(
    num: &[f64],
    den: &[f64],
    domain: Domain,
    mode: Mode,
    opts: &SweepOptions,
) -> Result<f64, VerifyError> {
    let (num, den) = (trim(num), trim(den));
    if den.is_empty() {
        return Err(VerifyError::UnstableInput);
    }
    if num.len() > den.len() {
        return Err(VerifyError::ImproperTransfer);
    }
    if !is_stable_poly(den, domain, 0) {
        return Err(VerifyError::UnstableInput);
    }
    if mode == Mode::Ofp
        && (num.is_empty() || !roots(num).into_iter().all(|r| domain.is_stable_root(r, ROOT_MARGIN)))
    {
        return Err(VerifyError::NonMinimumPhase);
    }
    let h = |x: Complex64| -> f64 {
        let (n, d) = (horner_complex(num, x), horner_complex(den, x));
        match mode {
            Mode::Ifp => (n / d).re,
            Mode::Ofp => (d / n).re,
        }
    };
    let ht = |t: f64| h(boundary_point(domain, t));
    let (t0, t1, mut best) = match domain {
        Domain::Ct => {
            let at_zero = h(Complex64::new(0.0, 0.0));
            let at_inf = if num.len() == den.len() {
                let r = num[num.len() - 1] / den[den.len() - 1];
                match mode {
                    Mode::Ifp => r,
                    Mode::Ofp => 1.0 / r,
                }
            } else if mode == Mode::Ifp {
                0.0
            } else {
                f64::INFINITY
            };
            (opts.omega_min.log10(), opts.omega_max.log10(), at_zero.min(at_inf))
        }
        // Conjugate symmetry: [0, π] covers the circle.
        Domain::Dt => (0.0, std::f64::consts::PI, f64::INFINITY),
    };
    let n = opts.points.max(2);
    let step = (t1 - t0) / (n - 1) as f64;
    let vals: Vec<f64> = (0..n).map(|k| ht(t0 + step * k as f64)).collect();
    let (kmin, &vmin) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("sweep has points");
    best = best.min(vmin);
    let a = t0 + step * kmin.saturating_sub(1) as f64;
    let b = t0 + step * (kmin + 1).min(n - 1) as f64;
    let (_, vr) = golden_min(&ht, a, b, opts.refine_tol);
    Ok(best.min(vr))
}

/// `min Re G` (IFP) or `min Re G⁻¹` (OFP) on the stability boundary.
pub fn freq_index(g: &RationalTransfer, mode: Mode, opts: &SweepOptions) -> Result<f64, VerifyError> {
    freq_index_coeffs(&g.num_f64(), &g.den_f64(), g.domain, mode, opts)
}

/// `x⁺ = A x + B u`, `y = C x + D u` (or `ẋ` in CT).
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DVector<f64>,
    pub d: f64,
    pub domain: Domain,
}

impl StateSpace {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// `C (xI − A)⁻¹ B + D`.
    pub fn eval(&self, x: Complex64) -> Complex64 {
        let n = self.order();
        if n == 0 {
            return Complex64::new(self.d, 0.0);
        }
        let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            let diag = if i == j { x } else { Complex64::new(0.0, 0.0) };
            diag - Complex64::new(self.a[(i, j)], 0.0)
        });
        let b = self.b.map(|v| Complex64::new(v, 0.0));
        let sol = m.lu().solve(&b).expect("x is not an eigenvalue of A");
        let cx: Complex64 = self.c.iter().zip(sol.iter()).map(|(c, s)| s * *c).sum();
        cx + self.d
    }

    /// Ascending `(num, den)` of the transfer function, `den` monic, by
    /// the Faddeev–LeVerrier recursion.
    pub fn transfer_coeffs(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.order();
        let mut den = vec![0.0; n + 1];
        den[n] = 1.0;
        let mut num = vec![0.0; n + 1];
        let mut m = DMatrix::<f64>::identity(n, n);
        // adj(sI − A) = Σ_k M_k s^{n−k}, M_1 = I, M_{k+1} = A M_k + c_{n−k} I.
        for k in 1..=n {
            if k > 1 {
                m = &self.a * &m + DMatrix::identity(n, n) * den[n - k + 1];
            }
            num[n - k] = (self.c.transpose() * &m * &self.b)[(0, 0)];
            den[n - k] = -(&self.a * &m).trace() / k as f64;
        }
        for i in 0..=n {
            num[i] += self.d * den[i];
        }
        (num, den)
    }
}

/// Controllable-canonical realization with `A = [[a₁ … a_n], [I 0]]`,
/// `B = e₁`, from the monic denominator `x^n − a₁x^{n−1} − … − a_n`.
pub fn tf_to_ss(g: &RationalTransfer) -> Result<StateSpace, VerifyError> {
    if !g.is_proper() {
        return Err(VerifyError::ImproperTransfer);
    }
    let den = g.den_f64();
    let den = trim(&den);
    let mut num = g.num_f64();
    num.resize(den.len(), 0.0);
    let n = den.len() - 1;
    let lead = den[n];
    let d = num[n] / lead;
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut c = DVector::<f64>::zeros(n);
    for k in 1..=n {
        a[(0, k - 1)] = -den[n - k] / lead;
        c[k - 1] = num[n - k] / lead - d * den[n - k] / lead;
        if k < n {
            a[(k, k - 1)] = 1.0;
        }
    }
    let mut b = DVector::<f64>::zeros(n);
    if n > 0 {
        b[0] = 1.0;
    }
    Ok(StateSpace { a, b, c, d, domain: g.domain })
}

/// Largest `ν` (IFP, supply `uy − νu²`) or `ξ` (OFP, supply `uy − ξy²`)
/// for which the KYP dissipativity LMI admits a symmetric `P`, found as
/// one SDP with the index as objective.
pub fn kyp_index(ss: &StateSpace, mode: Mode, solver: &dyn ConicSolver) -> Result<f64, VerifyError> {
    let n = ss.order();
    if n > 0 && !ss
        .a
        .complex_eigenvalues()
        .iter()
        .all(|&l| ss.domain.is_stable_root(l, ROOT_MARGIN))
    {
        return Err(VerifyError::UnstableInput);
    }
    let mut prog = ConicProgram::new();
    let idx = prog.add_scalar("index");
    let mut p = Vec::new();
    for i in 0..n {
        for j in i..n {
            p.push(((i, j), prog.add_scalar(format!("P{i}{j}"))));
        }
    }
    let w = prog.add_block("lmi", n + 1);
    // m[r][c] accumulates the LMI matrix that must be negative semidefinite.
    let mut m = vec![vec![LinExpr::zero(); n + 1]; n + 1];
    for &((i, j), s) in &p {
        let mut e = DMatrix::<f64>::zeros(n, n);
        e[(i, j)] = 1.0;
        e[(j, i)] = 1.0;
        let at = ss.a.transpose();
        let (tl, tr, br) = match ss.domain {
            Domain::Ct => (&at * &e + &e * &ss.a, &e * &ss.b, 0.0),
            Domain::Dt => (
                &at * &e * &ss.a - &e,
                &at * &e * &ss.b,
                (ss.b.transpose() * &e * &ss.b)[(0, 0)],
            ),
        };
        for r in 0..n {
            for c in 0..n {
                m[r][c].add_term(Var::Scalar(s.0), tl[(r, c)]);
            }
            m[r][n].add_term(Var::Scalar(s.0), tr[r]);
            m[n][r].add_term(Var::Scalar(s.0), tr[r]);
        }
        m[n][n].add_term(Var::Scalar(s.0), br);
    }
    // Subtract the supply matrix for s = Q y² + 2 S y u + R u², S = 1/2.
    let d = ss.d;
    match mode {
        Mode::Ifp => {
            for r in 0..n {
                m[r][n].constant -= 0.5 * ss.c[r];
                m[n][r].constant -= 0.5 * ss.c[r];
            }
            m[n][n].constant -= d;
            m[n][n].add_term(Var::Scalar(idx.0), 1.0);
        }
        Mode::Ofp => {
            for r in 0..n {
                for c in 0..n {
                    m[r][c].add_term(Var::Scalar(idx.0), ss.c[r] * ss.c[c]);
                }
                for k in [(r, n), (n, r)] {
                    m[k.0][k.1].constant -= 0.5 * ss.c[r];
                    m[k.0][k.1].add_term(Var::Scalar(idx.0), d * ss.c[r]);
                }
            }
            m[n][n].constant -= d;
            m[n][n].add_term(Var::Scalar(idx.0), d * d);
        }
    }
    for r in 0..=n {
        for c in r..=n {
            let mut eq = m[r][c].clone();
            eq.add_term(Var::entry(w, r, c), 1.0);
            prog.add_equality(eq);
        }
    }
    prog.maximize(LinExpr::var(idx));
    let sol = solver.solve(&prog)?;
    match sol.status {
        SolveStatus::Optimal => Ok(sol.scalar(idx)),
        s => Err(VerifyError::SolverFailure(format!("KYP program: {s}"))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridOracleResult {
    pub rho_hat: Vec<f64>,
    pub index_hat: f64,
    pub points: usize,
    pub stable_points: usize,
}

/// Exhaustive search over a `resolution^p` grid on the box. Points where
/// the loop is unstable (or non-minimum phase in OFP) are skipped; ties
/// go to the lexicographically smallest `ρ`.
pub fn grid_oracle(
    g0: &RationalTransfer,
    basis: &ControllerBasis,
    bx: &ParamBox,
    mode: Mode,
    resolution: usize,
    opts: &SweepOptions,
) -> Result<GridOracleResult, VerifyError> {
    if resolution < 2 {
        return Err(VerifyError::Resolution);
    }
    bx.check_dim(basis.len())?;
    let cl = compose_closed_loop(g0, basis)?;
    let num: Vec<f64> = cl.at(&bx.lower).num_f64();
    let (lo, hi) = (bx.lower_f64(), bx.upper_f64());
    let axes: Vec<Vec<f64>> = (0..bx.dim())
        .map(|i| {
            if lo[i] == hi[i] {
                vec![lo[i]]
            } else {
                (0..resolution)
                    .map(|k| lo[i] + (hi[i] - lo[i]) * k as f64 / (resolution - 1) as f64)
                    .collect()
            }
        })
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let results: Vec<(Vec<f64>, Option<f64>)> = (0..total)
        .into_par_iter()
        .map(|mut k| {
            let mut rho = vec![0.0; axes.len()];
            for i in (0..axes.len()).rev() {
                rho[i] = axes[i][k % axes[i].len()];
                k /= axes[i].len();
            }
            let p = cl.pd.at_f64(&rho);
            let mut den = vec![0.0; p.degree() as usize + 1];
            for (m, v) in p.terms() {
                den[m.degree() as usize] = *v;
            }
            let v = freq_index_coeffs(&num, &den, cl.domain, mode, opts).ok();
            (rho, v)
        })
        .collect();
    let stable_points = results.iter().filter(|r| r.1.is_some()).count();
    // Enumeration order is lexicographic in ρ, so the first maximum wins ties.
    let best = results
        .into_iter()
        .filter_map(|(r, v)| v.map(|v| (r, v)))
        .fold(None::<(Vec<f64>, f64)>, |acc, (r, v)| match acc {
            Some((_, bv)) if bv >= v => acc,
            _ => Some((r, v)),
        });
    let (rho_hat, index_hat) = best.ok_or(VerifyError::NoStablePoint)?;
    Ok(GridOracleResult {
        rho_hat,
        index_hat,
        points: total,
        stable_points,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryPole {
    pub pole: Complex64,
    /// `Res G` (CT) or `Res G / z₀` (DT).
    pub residue: Complex64,
    pub simple: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PositiveRealReport {
    pub positive_real: bool,
    /// No poles strictly outside the closed stability region.
    pub analytic: bool,
    /// Smallest sampled `Re G` on the boundary away from poles.
    pub boundary_min: f64,
    pub boundary_poles: Vec<BoundaryPole>,
    pub residues_ok: bool,
    /// CT only: improper part is at most `k·s` with `k ≥ 0`.
    pub infinity_ok: bool,
}

const BOUNDARY_TOL: f64 = 1e-7;
const RESIDUE_TOL: f64 = 1e-9;

/// Positive-realness diagnostics: analyticity outside the stability
/// region, a nonnegative boundary real part, and simple boundary poles
/// with real nonnegative (normalized) residues.
pub fn positive_real_check(g: &RationalTransfer) -> PositiveRealReport {
    let num = g.num_f64();
    let den_all = g.den_f64();
    let den = trim(&den_all);
    let num = trim(&num);
    let domain = g.domain;
    let on_boundary = |p: Complex64| match domain {
        Domain::Ct => p.re.abs() <= BOUNDARY_TOL,
        Domain::Dt => (p.norm() - 1.0).abs() <= BOUNDARY_TOL,
    };
    let poles = roots(den);
    let analytic = poles
        .iter()
        .all(|&p| on_boundary(p) || domain.is_stable_root(p, 0.0));
    let dden: Vec<f64> = den.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect();
    let mut boundary_poles: Vec<BoundaryPole> = Vec::new();
    for &p in poles.iter().filter(|&&p| on_boundary(p)) {
        if boundary_poles.iter().any(|b| (b.pole - p).norm() < 1e-5) {
            for b in boundary_poles.iter_mut().filter(|b| (b.pole - p).norm() < 1e-5) {
                b.simple = false;
            }
            continue;
        }
        let mut residue = horner_complex(num, p) / horner_complex(&dden, p);
        if domain == Domain::Dt {
            residue /= p;
        }
        boundary_poles.push(BoundaryPole { pole: p, residue, simple: true });
    }
    let residues_ok = boundary_poles.iter().all(|b| {
        b.simple && b.residue.im.abs() <= RESIDUE_TOL * (1.0 + b.residue.norm()) && b.residue.re >= -RESIDUE_TOL
    });
    let infinity_ok = match domain {
        Domain::Dt => num.len() <= den.len(),
        Domain::Ct => {
            num.len() <= den.len() || (num.len() == den.len() + 1 && num[num.len() - 1] / den[den.len() - 1] > 0.0)
        }
    };
    let opts = SweepOptions::default();
    let (t0, t1) = match domain {
        Domain::Ct => (opts.omega_min.log10(), opts.omega_max.log10()),
        Domain::Dt => (0.0, std::f64::consts::PI),
    };
    let scale = den.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut samples: Vec<Complex64> = (0..opts.points)
        .map(|k| boundary_point(domain, t0 + (t1 - t0) * k as f64 / (opts.points - 1) as f64))
        .collect();
    samples.push(match domain {
        Domain::Ct => Complex64::new(0.0, 0.0),
        Domain::Dt => Complex64::new(1.0, 0.0),
    });
    let boundary_min = samples
        .into_iter()
        .filter_map(|x| {
            let d = horner_complex(den, x);
            (d.norm() > 1e-9 * scale).then(|| (horner_complex(num, x) / d).re)
        })
        .fold(f64::INFINITY, f64::min);
    PositiveRealReport {
        positive_real: analytic && residues_ok && infinity_ok && boundary_min >= -1e-9,
        analytic,
        boundary_min,
        boundary_poles,
        residues_ok,
        infinity_ok,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{rat, Rational};
    use crate::sdp::InteriorPointSolver;

    fn q(v: i64) -> Rational {
        rat(v, 1)
    }

    fn ct(num: &[i64], den: &[i64]) -> RationalTransfer {
        let c = |v: &[i64]| v.iter().map(|&x| q(x)).collect::<Vec<_>>();
        RationalTransfer::new(&c(num), &c(den), Domain::Ct).unwrap()
    }

    #[test]
    fn lead_lag_sweep_indices() {
        let g = ct(&[2, 1], &[1, 1]);
        let o = SweepOptions::default();
        assert!((freq_index(&g, Mode::Ifp, &o).unwrap() - 1.0).abs() < 1e-9);
        assert!((freq_index(&g, Mode::Ofp, &o).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn static_gain_indices() {
        let g = ct(&[2], &[1]);
        let o = SweepOptions::default();
        assert!((freq_index(&g, Mode::Ofp, &o).unwrap() - 0.5).abs() < 1e-12);
        assert!((freq_index(&g, Mode::Ifp, &o).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_rejects_bad_inputs() {
        let o = SweepOptions::default();
        assert_eq!(freq_index(&ct(&[1], &[-1, 1]), Mode::Ifp, &o), Err(VerifyError::UnstableInput));
        assert_eq!(freq_index(&ct(&[-1, 1], &[1, 1]), Mode::Ofp, &o), Err(VerifyError::NonMinimumPhase));
    }

    #[test]
    fn first_order_lag_realization() {
        let ss = tf_to_ss(&ct(&[1], &[1, 1])).unwrap();
        assert_eq!(ss.a, DMatrix::from_element(1, 1, -1.0));
        assert_eq!(ss.b, DVector::from_element(1, 1.0));
        assert_eq!(ss.c, DVector::from_element(1, 1.0));
        assert_eq!(ss.d, 0.0);
    }

    #[test]
    fn unit_gain_realization_is_passthrough() {
        let ss = tf_to_ss(&ct(&[1], &[1])).unwrap();
        assert_eq!(ss.order(), 0);
        assert_eq!(ss.d, 1.0);
        let k = kyp_index(&ss, Mode::Ifp, &InteriorPointSolver::default()).unwrap();
        assert!((k - 1.0).abs() < 1e-6);
    }

    #[test]
    fn realization_round_trip() {
        let g = ct(&[6, 5, 1], &[2, 3, 4, 1]);
        let ss = tf_to_ss(&g).unwrap();
        let (num, den) = ss.transfer_coeffs();
        let expect_num = [6.0, 5.0, 1.0, 0.0];
        let expect_den = [2.0, 3.0, 4.0, 1.0];
        for i in 0..4 {
            assert!((num[i] - expect_num[i]).abs() <= 1e-9 * expect_num[i].abs().max(1.0));
            assert!((den[i] - expect_den[i]).abs() <= 1e-9 * expect_den[i].abs().max(1.0));
        }
    }

    #[test]
    fn kyp_matches_sweep_on_lead_lag() {
        let g = ct(&[2, 1], &[1, 1]);
        let ss = tf_to_ss(&g).unwrap();
        let s = InteriorPointSolver::default();
        assert!((kyp_index(&ss, Mode::Ifp, &s).unwrap() - 1.0).abs() < 1e-3);
        assert!((kyp_index(&ss, Mode::Ofp, &s).unwrap() - 0.5).abs() < 1e-3);
    }

    #[test]
    fn positive_real_examples() {
        assert!(positive_real_check(&ct(&[1], &[1, 1])).positive_real);
        let r = positive_real_check(&ct(&[-1, 1], &[1, 1]));
        assert!(!r.positive_real);
        assert!(r.boundary_min < 0.0);
        let r = positive_real_check(&ct(&[1], &[0, 1]));
        assert!(r.positive_real, "{r:?}");
        assert_eq!(r.boundary_poles.len(), 1);
        assert!((r.boundary_poles[0].residue.re - 1.0).abs() < 1e-12);
        assert!(!positive_real_check(&ct(&[-1], &[0, 1])).positive_real);
        assert!(!positive_real_check(&ct(&[1], &[0, 0, 1])).positive_real);
    }

    #[test]
    fn discrete_integrator_is_positive_real() {
        let g = RationalTransfer::new(&[q(0), q(1)], &[q(-1), q(1)], Domain::Dt).unwrap();
        let r = positive_real_check(&g);
        assert!(r.positive_real, "{r:?}");
    }

    #[test]
    fn collapsed_box_grid_is_the_point() {
        let g0 = ct(&[2, 1], &[1, 1]);
        let basis = ControllerBasis::new(vec![ct(&[1], &[1])]).unwrap();
        let bx = ParamBox::new(vec![q(0)], vec![q(0)]).unwrap();
        let r = grid_oracle(&g0, &basis, &bx, Mode::Ifp, 50, &SweepOptions::default()).unwrap();
        assert_eq!(r.points, 1);
        assert_eq!(r.rho_hat, vec![0.0]);
        assert!((r.index_hat - 1.0).abs() < 1e-9);
    }
}
