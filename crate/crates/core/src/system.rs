//! Plants, controller bases, parameter boxes and closed-loop composition.
//!
//! The loop `G = G₀/(1 + G₀·C(ρ))` with `C(ρ) = Σ ρᵢ Nᵢ/Dᵢ` has numerator
//! `pN = N₀·∏Dᵢ` and denominator
//! `pD(ρ) = D₀·∏Dᵢ + Σ ρᵢ·N₀·Nᵢ·∏_{j≠i} Dⱼ`, which is affine in `ρ`.

use std::fmt;

use nalgebra::DMatrix;
use num::complex::Complex64;
use num::One;
use thiserror::Error;

use crate::poly::{
    even_odd_ct, moebius_lift, rational_from_f64, rational_to_f64, EvenOddPair, Monomial, PolyError,
    Polynomial, Rational, CIRCLE_PARAM, OMEGA,
};

/// Margin used by every numerical root-location test.
pub const ROOT_MARGIN: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    /// Continuous time, indeterminate `s`.
    Ct,
    /// Discrete time, indeterminate `z`.
    Dt,
}

impl Domain {
    pub fn var(self) -> &'static str {
        match self {
            Domain::Ct => "s",
            Domain::Dt => "z",
        }
    }

    /// Indeterminate of the boundary parameterization (`ω` or `y`).
    pub fn boundary_var(self) -> &'static str {
        match self {
            Domain::Ct => OMEGA,
            Domain::Dt => CIRCLE_PARAM,
        }
    }

    /// Strictly stable with margin: `Re < −m` (CT) or `|·| < 1 − m` (DT).
    pub fn is_stable_root(self, r: Complex64, margin: f64) -> bool {
        match self {
            Domain::Ct => r.re < -margin,
            Domain::Dt => r.norm() < 1.0 - margin,
        }
    }

    /// In the closed stability region, within `margin`.
    pub fn is_weakly_stable_root(self, r: Complex64, margin: f64) -> bool {
        match self {
            Domain::Ct => r.re <= margin,
            Domain::Dt => r.norm() <= 1.0 + margin,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Ct => "ct",
            Domain::Dt => "dt",
        })
    }
}

/// Plant validation clauses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Clause {
    /// Relative degree must be 0 or 1.
    RelativeDegree,
    /// Zeros in the closed stability region.
    WeakMinimumPhase,
    /// Zeros in the open stability region.
    StrictMinimumPhase,
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Clause::RelativeDegree => "relative-degree",
            Clause::WeakMinimumPhase => "weak-minimum-phase",
            Clause::StrictMinimumPhase => "strict-minimum-phase",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SystemError {
    #[error("plant validation failed ({clause}): {detail}")]
    ValidationFailed { clause: Clause, detail: String },
    #[error("domain mismatch: plant is {plant}, basis entry {index} is {entry}")]
    DomainMismatch { plant: Domain, index: usize, entry: Domain },
    #[error("denominator is identically zero")]
    ZeroDenominator,
    #[error("controller basis is empty")]
    EmptyBasis,
    #[error("basis entry {index} has a non-strictly-stable pole at {pole}")]
    UnstableBasisEntry { index: usize, pole: Complex64 },
    #[error("basis entry {0} is improper")]
    ImproperBasisEntry(usize),
    #[error("box has {found} parameters but the basis has {expected}")]
    BoxDimension { expected: usize, found: usize },
    #[error("box bounds invalid at parameter {0}: lower exceeds upper")]
    InvalidBox(usize),
    #[error("plant numerator and denominator share the unstable root {0}")]
    UnstableCancellation(Complex64),
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Roots of `Σ c_k x^k` (ascending) from companion-matrix eigenvalues.
/// Leading zeros are ignored; an identically zero or constant input has no roots.
pub fn roots(coeffs: &[f64]) -> Vec<Complex64> {
    let Some(n) = coeffs.iter().rposition(|c| *c != 0.0) else {
        return Vec::new();
    };
    if n == 0 {
        return Vec::new();
    }
    let lead = coeffs[n];
    let mut comp = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        comp[(0, k)] = -coeffs[n - 1 - k] / lead;
    }
    for k in 1..n {
        comp[(k, k - 1)] = 1.0;
    }
    comp.complex_eigenvalues().iter().copied().collect()
}

/// Whether `p` (ascending coefficients) has degree ≥ `min_degree` and all
/// roots strictly stable with [`ROOT_MARGIN`].
pub fn is_stable_poly(coeffs: &[f64], domain: Domain, min_degree: usize) -> bool {
    let deg = coeffs.iter().rposition(|c| *c != 0.0);
    match deg {
        None => false,
        Some(d) if d < min_degree => false,
        _ => roots(coeffs)
            .into_iter()
            .all(|r| domain.is_stable_root(r, ROOT_MARGIN)),
    }
}

fn exact_coeffs(p: &Polynomial) -> Vec<Rational> {
    p.univariate_coeffs().expect("transfer polynomials are univariate")
}

fn f64_coeffs(p: &Polynomial) -> Vec<f64> {
    exact_coeffs(p).iter().map(rational_to_f64).collect()
}

/// Proper or improper rational function `num/den` in `s` or `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct RationalTransfer {
    pub num: Polynomial,
    pub den: Polynomial,
    pub domain: Domain,
}

impl RationalTransfer {
    /// Builds from ascending coefficient lists.
    pub fn new(num: &[Rational], den: &[Rational], domain: Domain) -> Result<Self, SystemError> {
        let v = domain.var();
        let num = Polynomial::from_coeffs(v, num);
        let den = Polynomial::from_coeffs(v, den);
        if den.is_zero() {
            return Err(SystemError::ZeroDenominator);
        }
        Ok(RationalTransfer { num, den, domain })
    }

    pub fn from_f64(num: &[f64], den: &[f64], domain: Domain) -> Result<Self, SystemError> {
        let conv = |c: &[f64]| c.iter().map(|&v| rational_from_f64(v)).collect::<Vec<_>>();
        Self::new(&conv(num), &conv(den), domain)
    }

    pub fn num_coeffs(&self) -> Vec<Rational> {
        exact_coeffs(&self.num)
    }

    pub fn den_coeffs(&self) -> Vec<Rational> {
        exact_coeffs(&self.den)
    }

    pub fn num_f64(&self) -> Vec<f64> {
        f64_coeffs(&self.num)
    }

    pub fn den_f64(&self) -> Vec<f64> {
        f64_coeffs(&self.den)
    }

    /// `deg(den) − deg(num)`; the zero transfer counts as relative degree 0.
    pub fn relative_degree(&self) -> i64 {
        if self.num.is_zero() {
            return 0;
        }
        self.den.degree() as i64 - self.num.degree() as i64
    }

    pub fn is_proper(&self) -> bool {
        self.relative_degree() >= 0
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        self.num.eval_complex(x) / self.den.eval_complex(x)
    }

    pub fn poles(&self) -> Vec<Complex64> {
        roots(&self.den_f64())
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        roots(&self.num_f64())
    }

    /// All poles strictly stable (with [`ROOT_MARGIN`]) and the transfer proper.
    pub fn is_stable(&self) -> bool {
        self.is_proper() && is_stable_poly(&self.den_f64(), self.domain, 0)
    }

    /// All zeros strictly inside the stability region.
    pub fn is_minimum_phase(&self) -> bool {
        !self.num.is_zero()
            && self
                .zeros()
                .into_iter()
                .all(|r| self.domain.is_stable_root(r, ROOT_MARGIN))
    }
}

#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub relative_degree: i64,
    pub zeros: Vec<Complex64>,
}

/// Checks relative degree ∈ {0, 1} and zero locations: closed stability
/// region when `strict` is false, open region when true.
pub fn validate_plant(g: &RationalTransfer, strict: bool) -> Result<ValidationReport, SystemError> {
    let rd = g.relative_degree();
    if !(0..=1).contains(&rd) {
        return Err(SystemError::ValidationFailed {
            clause: Clause::RelativeDegree,
            detail: format!("relative degree is {rd}, expected 0 or 1"),
        });
    }
    let zeros = g.zeros();
    let bad: Vec<Complex64> = zeros
        .iter()
        .copied()
        .filter(|&r| {
            if strict {
                !g.domain.is_stable_root(r, ROOT_MARGIN)
            } else {
                !g.domain.is_weakly_stable_root(r, ROOT_MARGIN)
            }
        })
        .collect();
    if g.num.is_zero() || !bad.is_empty() {
        let clause = if strict {
            Clause::StrictMinimumPhase
        } else {
            Clause::WeakMinimumPhase
        };
        let detail = if g.num.is_zero() {
            "numerator is identically zero".to_string()
        } else {
            format!("zeros outside the admissible region: {}", fmt_roots(&bad))
        };
        return Err(SystemError::ValidationFailed { clause, detail });
    }
    // A common root of N₀ and D₀ in the unstable region is a hidden unstable mode.
    let den = g.den_f64();
    let scale = den.iter().map(|c| c.abs()).fold(0.0, f64::max);
    for &z in &zeros {
        if !g.domain.is_stable_root(z, ROOT_MARGIN) {
            let v = crate::poly::horner_complex(&den, z).norm();
            if v <= 1e-8 * scale * (1.0 + z.norm()).powi(den.len() as i32) {
                return Err(SystemError::UnstableCancellation(z));
            }
        }
    }
    Ok(ValidationReport {
        relative_degree: rd,
        zeros,
    })
}

fn fmt_roots(r: &[Complex64]) -> String {
    r.iter()
        .map(|z| format!("{:.6}{:+.6}j", z.re, z.im))
        .collect::<Vec<_>>()
        .join(", ")
}

/// The controller directions `C̄ = (N₁/D₁, …, N_p/D_p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerBasis {
    entries: Vec<RationalTransfer>,
}

impl ControllerBasis {
    /// Every entry must be proper with strictly stable poles.
    pub fn new(entries: Vec<RationalTransfer>) -> Result<Self, SystemError> {
        if entries.is_empty() {
            return Err(SystemError::EmptyBasis);
        }
        let domain = entries[0].domain;
        for (i, e) in entries.iter().enumerate() {
            if e.domain != domain {
                return Err(SystemError::DomainMismatch {
                    plant: domain,
                    index: i,
                    entry: e.domain,
                });
            }
            if !e.is_proper() {
                return Err(SystemError::ImproperBasisEntry(i));
            }
            if let Some(p) = e
                .poles()
                .into_iter()
                .find(|&p| !domain.is_stable_root(p, ROOT_MARGIN))
            {
                return Err(SystemError::UnstableBasisEntry { index: i, pole: p });
            }
        }
        Ok(ControllerBasis { entries })
    }

    pub fn entries(&self) -> &[RationalTransfer] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn domain(&self) -> Domain {
        self.entries[0].domain
    }

    /// `C(ρ)` at a complex point.
    pub fn eval(&self, rho: &[f64], x: Complex64) -> Complex64 {
        self.entries
            .iter()
            .zip(rho)
            .map(|(e, &r)| e.eval(x) * r)
            .sum()
    }
}

/// Axis-aligned parameter box `lower ≤ ρ ≤ upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBox {
    pub lower: Vec<Rational>,
    pub upper: Vec<Rational>,
}

impl ParamBox {
    pub fn new(lower: Vec<Rational>, upper: Vec<Rational>) -> Result<Self, SystemError> {
        if lower.len() != upper.len() {
            return Err(SystemError::BoxDimension {
                expected: lower.len(),
                found: upper.len(),
            });
        }
        if let Some(i) = (0..lower.len()).find(|&i| lower[i] > upper[i]) {
            return Err(SystemError::InvalidBox(i));
        }
        Ok(ParamBox { lower, upper })
    }

    pub fn from_f64(lower: &[f64], upper: &[f64]) -> Result<Self, SystemError> {
        Self::new(
            lower.iter().map(|&v| rational_from_f64(v)).collect(),
            upper.iter().map(|&v| rational_from_f64(v)).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower_f64(&self) -> Vec<f64> {
        self.lower.iter().map(rational_to_f64).collect()
    }

    pub fn upper_f64(&self) -> Vec<f64> {
        self.upper.iter().map(rational_to_f64).collect()
    }

    pub fn contains(&self, rho: &[f64], tol: f64) -> bool {
        let (lo, hi) = (self.lower_f64(), self.upper_f64());
        rho.len() == lo.len() && (0..lo.len()).all(|i| rho[i] >= lo[i] - tol && rho[i] <= hi[i] + tol)
    }

    /// Clamps a point into the box.
    pub fn clamp(&self, rho: &[f64]) -> Vec<f64> {
        let (lo, hi) = (self.lower_f64(), self.upper_f64());
        rho.iter()
            .enumerate()
            .map(|(i, &r)| r.clamp(lo[i], hi[i]))
            .collect()
    }

    /// Point at fractional position `t ∈ [0,1]^p`.
    pub fn lerp(&self, t: &[f64]) -> Vec<f64> {
        let (lo, hi) = (self.lower_f64(), self.upper_f64());
        (0..lo.len()).map(|i| lo[i] + t[i] * (hi[i] - lo[i])).collect()
    }

    pub fn check_dim(&self, expected: usize) -> Result<(), SystemError> {
        if self.dim() != expected {
            return Err(SystemError::BoxDimension {
                expected,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

/// Names of the parameter indeterminates, `rho1 … rhop`.
pub fn rho_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("rho{i}")).collect()
}

/// Univariate polynomial whose coefficients are affine in `ρ`:
/// `base + Σ ρᵢ·coeffs[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamPoly {
    pub base: Polynomial,
    pub coeffs: Vec<Polynomial>,
}

impl ParamPoly {
    pub fn nparams(&self) -> usize {
        self.coeffs.len()
    }

    /// Structural degree in the frequency variable.
    pub fn degree(&self) -> u32 {
        std::iter::once(&self.base)
            .chain(&self.coeffs)
            .map(Polynomial::degree)
            .max()
            .unwrap_or(0)
    }

    pub fn at(&self, rho: &[Rational]) -> Polynomial {
        let mut out = self.base.clone();
        for (c, r) in self.coeffs.iter().zip(rho) {
            out = &out + &c.scale(r);
        }
        out
    }

    pub fn at_f64(&self, rho: &[f64]) -> Polynomial<f64> {
        let mut out = self.base.to_f64();
        for (c, &r) in self.coeffs.iter().zip(rho) {
            out = &out + &c.to_f64().scale(&r);
        }
        out
    }

    /// Applies the same linear map to every component.
    pub fn try_map(
        &self,
        f: impl Fn(&Polynomial) -> Result<Polynomial, PolyError>,
    ) -> Result<ParamPoly, PolyError> {
        Ok(ParamPoly {
            base: f(&self.base)?,
            coeffs: self.coeffs.iter().map(&f).collect::<Result<_, _>>()?,
        })
    }

    pub fn scale(&self, k: &Rational) -> ParamPoly {
        ParamPoly {
            base: self.base.scale(k),
            coeffs: self.coeffs.iter().map(|c| c.scale(k)).collect(),
        }
    }

    /// Ascending coefficients in the frequency variable, each a polynomial
    /// in `rho1 … rhop`.
    pub fn rho_coeffs(&self) -> Vec<Polynomial> {
        let names = rho_names(self.nparams());
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let n = self.degree() as usize;
        let mut out = vec![Polynomial::zero(&refs); n + 1];
        let mut put = |p: &Polynomial, slot: Option<usize>| {
            for (k, c) in exact_coeffs(p).into_iter().enumerate() {
                let mut e = vec![0u32; names.len()];
                if let Some(i) = slot {
                    e[i] = 1;
                }
                out[k].add_term(Monomial(e), c);
            }
        };
        put(&self.base, None);
        for (i, c) in self.coeffs.iter().enumerate() {
            put(c, Some(i));
        }
        out
    }

    /// The same polynomial as one multivariate polynomial over
    /// `(freq, rho1, …, rhop)`.
    pub fn joint(&self, freq: &str) -> Polynomial {
        let names = rho_names(self.nparams());
        let mut vars = vec![freq.to_string()];
        vars.extend(names.iter().cloned());
        let mut out = Polynomial::from_terms(vars.clone(), std::iter::empty());
        for (k, c) in self.rho_coeffs().into_iter().enumerate() {
            for (m, v) in c.terms() {
                let mut e = vec![k as u32];
                e.extend(m.0.iter().copied());
                out.add_term(Monomial(e), v.clone());
            }
        }
        out
    }
}

/// `pN / pD(ρ)` with the degrees used for boundary lifts.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedLoop {
    pub pn: Polynomial,
    pub pd: ParamPoly,
    pub domain: Domain,
    pub dn: usize,
    pub dd: usize,
}

impl ClosedLoop {
    pub fn nparams(&self) -> usize {
        self.pd.nparams()
    }

    pub fn at(&self, rho: &[Rational]) -> RationalTransfer {
        RationalTransfer {
            num: self.pn.clone(),
            den: self.pd.at(rho),
            domain: self.domain,
        }
    }

    pub fn at_f64(&self, rho: &[f64]) -> RationalTransfer {
        let r: Vec<Rational> = rho.iter().map(|&v| rational_from_f64(v)).collect();
        self.at(&r)
    }

    /// Stable and proper at `ρ` by companion-matrix roots.
    pub fn is_stable_at(&self, rho: &[f64]) -> bool {
        let den: Vec<f64> = {
            let p = self.pd.at_f64(rho);
            let n = p.degree() as usize;
            let mut c = vec![0.0; n + 1];
            for (m, v) in p.terms() {
                c[m.degree() as usize] = *v;
            }
            c
        };
        let min_degree = if self.pn.is_zero() { 0 } else { self.pn.degree() as usize };
        is_stable_poly(&den, self.domain, min_degree)
    }
}

/// Forms `pN` and the ρ-affine `pD` of `G₀/(1 + G₀·C(ρ))`.
pub fn compose_closed_loop(
    g0: &RationalTransfer,
    basis: &ControllerBasis,
) -> Result<ClosedLoop, SystemError> {
    if basis.domain() != g0.domain {
        return Err(SystemError::DomainMismatch {
            plant: g0.domain,
            index: 0,
            entry: basis.domain(),
        });
    }
    let v = g0.domain.var();
    let one = Polynomial::constant(&[v], Rational::one());
    let dens: Vec<&Polynomial> = basis.entries().iter().map(|e| &e.den).collect();
    let prod_all = dens.iter().fold(one.clone(), |acc, d| &acc * *d);
    let pn = &g0.num * &prod_all;
    let base = &g0.den * &prod_all;
    let coeffs = (0..basis.len())
        .map(|i| {
            let others = dens
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold(one.clone(), |acc, (_, d)| &acc * *d);
            &(&g0.num * &basis.entries()[i].num) * &others
        })
        .collect();
    let pd = ParamPoly { base, coeffs };
    let dn = pn.degree() as usize;
    let dd = pd.degree() as usize;
    Ok(ClosedLoop {
        pn,
        pd,
        domain: g0.domain,
        dn,
        dd,
    })
}

/// `G₀/(1 + G₀·C(ρ))` evaluated directly at a complex point.
pub fn closed_loop_response(
    g0: &RationalTransfer,
    basis: &ControllerBasis,
    rho: &[f64],
    x: Complex64,
) -> Complex64 {
    let g = g0.eval(x);
    g / (Complex64::one() + g * basis.eval(rho, x))
}

/// Boundary decomposition of a closed loop.
///
/// CT: `pN(jω) = n_re + j·n_im`, `pD(jω, ρ) = d_re(ρ) + j·d_im(ρ)`.
/// DT: the same with `z = φ(y)` after clearing `(1+y²)^{dN}` and
/// `(1+y²)^{dD}` respectively.
#[derive(Clone, Debug, PartialEq)]
pub struct FreqDecomposition {
    pub domain: Domain,
    pub n_re: Polynomial,
    pub n_im: Polynomial,
    pub d_re: ParamPoly,
    pub d_im: ParamPoly,
    pub dn: usize,
    pub dd: usize,
}

pub fn param_freq_decompose(cl: &ClosedLoop) -> Result<FreqDecomposition, SystemError> {
    let lift = |p: &Polynomial, d: usize| -> Result<EvenOddPair, PolyError> {
        match cl.domain {
            Domain::Ct => even_odd_ct(p),
            Domain::Dt => moebius_lift(p, d),
        }
    };
    let n = lift(&cl.pn, cl.dn)?;
    let d_re = cl.pd.try_map(|c| lift(c, cl.dd).map(|e| e.even))?;
    let d_im = cl.pd.try_map(|c| lift(c, cl.dd).map(|e| e.odd))?;
    Ok(FreqDecomposition {
        domain: cl.domain,
        n_re: n.even,
        n_im: n.odd,
        d_re,
        d_im,
        dn: cl.dn,
        dd: cl.dd,
    })
}

impl FreqDecomposition {
    /// `pN/pD` reconstructed from the boundary polynomials at parameter `t`
    /// (`ω` or `y`), including the `(1+y²)^{dD−dN}` factor in DT.
    pub fn response(&self, rho: &[f64], t: f64) -> Complex64 {
        let n = Complex64::new(self.n_re.to_f64().eval_f64(&[t]), self.n_im.to_f64().eval_f64(&[t]));
        let d = Complex64::new(
            self.d_re.at_f64(rho).eval_f64(&[t]),
            self.d_im.at_f64(rho).eval_f64(&[t]),
        );
        let w = match self.domain {
            Domain::Ct => 1.0,
            Domain::Dt => (1.0 + t * t).powi(self.dd as i32 - self.dn as i32),
        };
        n / d * w
    }
}
