//! Sparse multivariate polynomials with exact rational (or float) coefficients,
//! plus the two frequency-domain lifts used throughout the pipeline:
//! the continuous-time even/odd split of `p(jω)` and the discrete-time
//! Möbius lift of `p(z)` onto the unit circle.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num::complex::Complex64;
use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Exact coefficient type used in all symbolic stages.
pub type Rational = BigRational;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("expected a univariate polynomial, found variables {0:?}")]
    NotUnivariate(Vec<String>),
    #[error("clearing degree {clearing} is below the polynomial degree {degree}")]
    ClearingDegreeTooSmall { clearing: usize, degree: usize },
}

/// Coefficient ring for [`Polynomial`].
pub trait Coeff:
    Clone
    + fmt::Debug
    + PartialEq
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    fn to_f64(&self) -> f64;
    fn from_i64(v: i64) -> Self;
}

impl Coeff for Rational {
    fn to_f64(&self) -> f64 {
        rational_to_f64(self)
    }
    fn from_i64(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }
}

impl Coeff for f64 {
    fn to_f64(&self) -> f64 {
        *self
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
}

/// Converts a rational to the nearest representable `f64`.
pub fn rational_to_f64(r: &Rational) -> f64 {
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    // Huge numerators/denominators: shift both down before dividing.
    let nb = r.numer().bits() as i64;
    let db = r.denom().bits() as i64;
    let shift = (nb.max(db) - 1000).max(0) as usize;
    let n = (r.numer() >> shift).to_f64().unwrap_or(0.0);
    let d = (r.denom() >> shift).to_f64().unwrap_or(1.0);
    n / d
}

/// Exact rational from an `f64` (binary expansion, no rounding).
pub fn rational_from_f64(v: f64) -> Rational {
    Rational::from_float(v).unwrap_or_else(Rational::zero)
}

pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Exponent multi-index, one slot per indeterminate of the owning polynomial.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn one(nvars: usize) -> Self {
        Monomial(vec![0; nvars])
    }

    pub fn var(nvars: usize, idx: usize, power: u32) -> Self {
        let mut e = vec![0; nvars];
        e[idx] = power;
        Monomial(e)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&e, &v)| v.powi(e as i32))
            .product()
    }
}

/// All monomials of total degree `<= degree` in `nvars` variables, in graded
/// lexicographic order (degree first, then lexicographically descending
/// exponent of the first variable).
pub fn monomials_up_to(nvars: usize, degree: u32) -> Vec<Monomial> {
    let mut out = Vec::new();
    for d in 0..=degree {
        let mut cur = vec![0u32; nvars];
        homogeneous(nvars, d, 0, &mut cur, &mut out);
    }
    out
}

fn homogeneous(nvars: usize, left: u32, idx: usize, cur: &mut Vec<u32>, out: &mut Vec<Monomial>) {
    if nvars == 0 {
        if left == 0 {
            out.push(Monomial(Vec::new()));
        }
        return;
    }
    if idx == nvars - 1 {
        cur[idx] = left;
        out.push(Monomial(cur.clone()));
        cur[idx] = 0;
        return;
    }
    for e in (0..=left).rev() {
        cur[idx] = e;
        homogeneous(nvars, left - e, idx + 1, cur, out);
    }
    cur[idx] = 0;
}

/// Sparse polynomial in named indeterminates. Zero coefficients are never
/// stored, so structural equality of the term maps is polynomial equality.
#[derive(Clone, Debug)]
pub struct Polynomial<C: Coeff = Rational> {
    vars: Vec<String>,
    terms: BTreeMap<Monomial, C>,
}

impl<C: Coeff> Polynomial<C> {
    pub fn zero(vars: &[&str]) -> Self {
        Polynomial {
            vars: vars.iter().map(|s| s.to_string()).collect(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(vars: &[&str], c: C) -> Self {
        let mut p = Self::zero(vars);
        p.add_term(Monomial::one(p.vars.len()), c);
        p
    }

    /// The polynomial consisting of the single indeterminate `name`.
    pub fn var(name: &str) -> Self {
        let mut p = Self::zero(&[name]);
        p.add_term(Monomial(vec![1]), C::one());
        p
    }

    /// Univariate polynomial from ascending coefficients (`coeffs[k]` multiplies `var^k`).
    pub fn from_coeffs(var: &str, coeffs: &[C]) -> Self {
        let mut p = Self::zero(&[var]);
        for (k, c) in coeffs.iter().enumerate() {
            p.add_term(Monomial(vec![k as u32]), c.clone());
        }
        p
    }

    pub fn from_terms(vars: Vec<String>, terms: impl IntoIterator<Item = (Monomial, C)>) -> Self {
        let mut p = Polynomial {
            vars,
            terms: BTreeMap::new(),
        };
        for (m, c) in terms {
            assert_eq!(m.0.len(), p.vars.len(), "monomial arity mismatch");
            p.add_term(m, c);
        }
        p
    }

    pub fn vars(&self) -> &[String] {
        &self.vars
    }

    pub fn terms(&self) -> &BTreeMap<Monomial, C> {
        &self.terms
    }

    pub fn nvars(&self) -> usize {
        self.vars.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Accumulates `c·m` into the polynomial, dropping the term if it cancels.
    pub fn add_term(&mut self, m: Monomial, c: C) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                let s = o.get().clone() + c;
                if s.is_zero() {
                    o.remove();
                } else {
                    *o.get_mut() = s;
                }
            }
        }
    }

    pub fn coeff(&self, m: &Monomial) -> C {
        self.terms.get(m).cloned().unwrap_or_else(C::zero)
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    /// Degree in a single named indeterminate (0 if absent).
    pub fn degree_in(&self, name: &str) -> u32 {
        match self.var_index(name) {
            Some(i) => self.terms.keys().map(|m| m.0[i]).max().unwrap_or(0),
            None => 0,
        }
    }

    /// Names of indeterminates that actually occur with a positive exponent.
    pub fn active_vars(&self) -> Vec<String> {
        (0..self.vars.len())
            .filter(|&i| self.terms.keys().any(|m| m.0[i] > 0))
            .map(|i| self.vars[i].clone())
            .collect()
    }

    /// Re-expresses the polynomial over `vars`, which must contain every active variable.
    pub fn with_vars(&self, vars: &[String]) -> Self {
        let map: Vec<Option<usize>> = self
            .vars
            .iter()
            .map(|v| vars.iter().position(|w| w == v))
            .collect();
        let mut out = Polynomial {
            vars: vars.to_vec(),
            terms: BTreeMap::new(),
        };
        for (m, c) in &self.terms {
            let mut e = vec![0u32; vars.len()];
            for (i, &x) in m.0.iter().enumerate() {
                match map[i] {
                    Some(j) => e[j] = x,
                    None => assert_eq!(x, 0, "variable {} dropped while active", self.vars[i]),
                }
            }
            out.add_term(Monomial(e), c.clone());
        }
        out
    }

    fn aligned(&self, other: &Self) -> (Self, Self) {
        if self.vars == other.vars {
            return (self.clone(), other.clone());
        }
        let mut vars = self.vars.clone();
        for v in &other.vars {
            if !vars.contains(v) {
                vars.push(v.clone());
            }
        }
        (self.with_vars(&vars), other.with_vars(&vars))
    }

    pub fn scale(&self, c: &C) -> Self {
        let mut out = Polynomial {
            vars: self.vars.clone(),
            terms: BTreeMap::new(),
        };
        for (m, v) in &self.terms {
            out.add_term(m.clone(), v.clone() * c.clone());
        }
        out
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut out = Self::constant(&self.var_refs(), C::one());
        for _ in 0..e {
            out = &out * self;
        }
        out
    }

    fn var_refs(&self) -> Vec<&str> {
        self.vars.iter().map(String::as_str).collect()
    }

    /// Ascending coefficient vector of a univariate polynomial (length `degree+1`).
    pub fn univariate_coeffs(&self) -> Result<Vec<C>, PolyError> {
        let active = self.active_vars();
        if active.len() > 1 {
            return Err(PolyError::NotUnivariate(active));
        }
        let deg = self.degree() as usize;
        let mut out = vec![C::zero(); deg + 1];
        for (m, c) in &self.terms {
            out[m.degree() as usize] = c.clone();
        }
        Ok(out)
    }

    /// Derivative with respect to the named indeterminate.
    pub fn derivative(&self, name: &str) -> Self {
        let mut out = Polynomial {
            vars: self.vars.clone(),
            terms: BTreeMap::new(),
        };
        if let Some(i) = self.var_index(name) {
            for (m, c) in &self.terms {
                if m.0[i] > 0 {
                    let mut e = m.clone();
                    e.0[i] -= 1;
                    out.add_term(e, c.clone() * C::from_i64(m.0[i] as i64));
                }
            }
        }
        out
    }

    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&C) -> D) -> Polynomial<D> {
        let mut out = Polynomial::<D> {
            vars: self.vars.clone(),
            terms: BTreeMap::new(),
        };
        for (m, c) in &self.terms {
            out.add_term(m.clone(), f(c));
        }
        out
    }

    pub fn to_f64(&self) -> Polynomial<f64> {
        self.map_coeffs(|c| c.to_f64())
    }

    /// Evaluates at a real point given in the polynomial's variable order.
    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.vars.len());
        self.terms
            .iter()
            .map(|(m, c)| c.to_f64() * m.eval_f64(x))
            .sum()
    }

    /// Evaluates a univariate polynomial at a complex point (Horner).
    pub fn eval_complex(&self, x: Complex64) -> Complex64 {
        let coeffs = self
            .univariate_coeffs()
            .expect("eval_complex requires a univariate polynomial");
        horner_complex(&coeffs.iter().map(Coeff::to_f64).collect::<Vec<_>>(), x)
    }
}

/// Horner evaluation of ascending real coefficients at a complex point.
pub fn horner_complex(coeffs: &[f64], x: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// Returns `k > 0` with `a[i] = k·b[i]` for every `i`, if one exists.
/// Variables are aligned by name; an all-zero pair list yields `Some(1)`.
pub fn positive_ratio(a: &[&Polynomial], b: &[&Polynomial]) -> Option<Rational> {
    assert_eq!(a.len(), b.len());
    let mut k: Option<Rational> = None;
    for (pa, pb) in a.iter().zip(b) {
        let (pa, pb) = pa.aligned(pb);
        let keys: std::collections::BTreeSet<&Monomial> =
            pa.terms.keys().chain(pb.terms.keys()).collect();
        for m in keys {
            let ca = pa.coeff(m);
            let cb = pb.coeff(m);
            match (ca.is_zero(), cb.is_zero()) {
                (true, true) => {}
                (false, false) => {
                    let r = ca / cb;
                    match &k {
                        None => k = Some(r),
                        Some(k0) if *k0 == r => {}
                        Some(_) => return None,
                    }
                }
                _ => return None,
            }
        }
    }
    match k {
        None => Some(Rational::one()),
        Some(k) if k.is_positive() => Some(k),
        Some(_) => None,
    }
}

impl Polynomial<Rational> {
    /// Exact evaluation at a rational point in variable order.
    pub fn eval_exact(&self, x: &[Rational]) -> Rational {
        assert_eq!(x.len(), self.vars.len());
        let mut acc = Rational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (&e, v) in m.0.iter().zip(x) {
                for _ in 0..e {
                    t *= v;
                }
            }
            acc += t;
        }
        acc
    }

    /// Substitutes exact values for a subset of variables, keeping the rest.
    pub fn substitute(&self, values: &[(&str, Rational)]) -> Self {
        let idx: Vec<(usize, &Rational)> = values
            .iter()
            .filter_map(|(n, v)| self.var_index(n).map(|i| (i, v)))
            .collect();
        let mut out = Polynomial {
            vars: self.vars.clone(),
            terms: BTreeMap::new(),
        };
        for (m, c) in &self.terms {
            let mut e = m.clone();
            let mut t = c.clone();
            for &(i, v) in &idx {
                for _ in 0..e.0[i] {
                    t *= v;
                }
                e.0[i] = 0;
            }
            out.add_term(e, t);
        }
        out
    }

    /// Smallest positive rational `k` such that `k·p` has coprime integer coefficients.
    pub fn primitive_scale(polys: &[&Polynomial<Rational>]) -> Rational {
        let mut lcm = BigInt::one();
        let mut gcd = BigInt::zero();
        for p in polys {
            for c in p.terms.values() {
                lcm = num::integer::lcm(lcm, c.denom().clone());
            }
        }
        for p in polys {
            for c in p.terms.values() {
                let n = (c * Rational::from_integer(lcm.clone())).to_integer();
                gcd = num::integer::gcd(gcd, n.abs());
            }
        }
        if gcd.is_zero() {
            return Rational::one();
        }
        Rational::new(lcm, gcd)
    }
}

impl<C: Coeff> PartialEq for Polynomial<C> {
    fn eq(&self, other: &Self) -> bool {
        let (a, b) = self.aligned(other);
        a.terms == b.terms
    }
}

impl<'a, C: Coeff> Add<&'a Polynomial<C>> for &'a Polynomial<C> {
    type Output = Polynomial<C>;
    fn add(self, rhs: &'a Polynomial<C>) -> Polynomial<C> {
        let (mut a, b) = self.aligned(rhs);
        for (m, c) in b.terms {
            a.add_term(m, c);
        }
        a
    }
}

impl<'a, C: Coeff> Sub<&'a Polynomial<C>> for &'a Polynomial<C> {
    type Output = Polynomial<C>;
    fn sub(self, rhs: &'a Polynomial<C>) -> Polynomial<C> {
        let (mut a, b) = self.aligned(rhs);
        for (m, c) in b.terms {
            a.add_term(m, -c);
        }
        a
    }
}

impl<'a, C: Coeff> Mul<&'a Polynomial<C>> for &'a Polynomial<C> {
    type Output = Polynomial<C>;
    fn mul(self, rhs: &'a Polynomial<C>) -> Polynomial<C> {
        let (a, b) = self.aligned(rhs);
        let mut out = Polynomial {
            vars: a.vars.clone(),
            terms: BTreeMap::new(),
        };
        for (ma, ca) in &a.terms {
            for (mb, cb) in &b.terms {
                out.add_term(ma.mul(mb), ca.clone() * cb.clone());
            }
        }
        out
    }
}

impl<C: Coeff> Neg for &Polynomial<C> {
    type Output = Polynomial<C>;
    fn neg(self) -> Polynomial<C> {
        self.scale(&-C::one())
    }
}

macro_rules! forward_owned {
    ($tr:ident, $f:ident) => {
        impl<C: Coeff> $tr<Polynomial<C>> for Polynomial<C> {
            type Output = Polynomial<C>;
            fn $f(self, rhs: Polynomial<C>) -> Polynomial<C> {
                (&self).$f(&rhs)
            }
        }
    };
}
forward_owned!(Add, add);
forward_owned!(Sub, sub);
forward_owned!(Mul, mul);

impl<C: Coeff + fmt::Display> fmt::Display for Polynomial<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in self.terms.iter().rev() {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})")?;
            for (v, &e) in self.vars.iter().zip(&m.0) {
                match e {
                    0 => {}
                    1 => write!(f, "*{v}")?,
                    _ => write!(f, "*{v}^{e}")?,
                }
            }
        }
        Ok(())
    }
}

/// Real/imaginary split of a univariate polynomial evaluated on the
/// stability boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct EvenOddPair {
    pub even: Polynomial,
    pub odd: Polynomial,
}

/// Frequency indeterminate produced by [`even_odd_ct`].
pub const OMEGA: &str = "w";
/// Unit-circle parameter produced by [`moebius_lift`].
pub const CIRCLE_PARAM: &str = "y";

fn univariate_checked(p: &Polynomial) -> Result<Vec<Rational>, PolyError> {
    p.univariate_coeffs()
}

/// Splits `p(jω) = even(ω) + j·odd(ω)` for a real univariate `p(s)`.
pub fn even_odd_ct(p: &Polynomial) -> Result<EvenOddPair, PolyError> {
    let coeffs = univariate_checked(p)?;
    let mut even = Polynomial::zero(&[OMEGA]);
    let mut odd = Polynomial::zero(&[OMEGA]);
    for (k, c) in coeffs.into_iter().enumerate() {
        // j^k = (-1)^{k/2} for even k, j·(-1)^{(k-1)/2} for odd k
        let sign = if (k / 2) % 2 == 0 { c } else { -c };
        let m = Monomial(vec![k as u32]);
        if k % 2 == 0 {
            even.add_term(m, sign);
        } else {
            odd.add_term(m, sign);
        }
    }
    Ok(EvenOddPair { even, odd })
}

/// Lifts `p(z)` onto the unit circle through `z = φ(y) = (1 − y² + 2jy)/(1 + y²)`:
/// returns real polynomials with `p(φ(y))·(1 + y²)^d = re(y) + j·im(y)`.
pub fn moebius_lift(p: &Polynomial, d: usize) -> Result<EvenOddPair, PolyError> {
    let coeffs = univariate_checked(p)?;
    let degree = if p.is_zero() { 0 } else { coeffs.len() - 1 };
    if d < degree {
        return Err(PolyError::ClearingDegreeTooSmall { clearing: d, degree });
    }
    let one = Rational::one();
    let two = Rational::from_i64(2);
    // u + jv = 1 − y² + 2jy, w = 1 + y²
    let u = Polynomial::from_coeffs(CIRCLE_PARAM, &[one.clone(), Rational::zero(), -one.clone()]);
    let v = Polynomial::from_coeffs(CIRCLE_PARAM, &[Rational::zero(), two]);
    let w = Polynomial::from_coeffs(CIRCLE_PARAM, &[one.clone(), Rational::zero(), one.clone()]);

    let mut re = Polynomial::zero(&[CIRCLE_PARAM]);
    let mut im = Polynomial::zero(&[CIRCLE_PARAM]);
    // running power (u + jv)^k
    let mut pow_re = Polynomial::constant(&[CIRCLE_PARAM], one);
    let mut pow_im = Polynomial::zero(&[CIRCLE_PARAM]);
    for (k, c) in coeffs.iter().enumerate() {
        if !c.is_zero() {
            let clear = w.pow((d - k) as u32);
            re = &re + &(&pow_re * &clear).scale(c);
            im = &im + &(&pow_im * &clear).scale(c);
        }
        let nr = &(&pow_re * &u) - &(&pow_im * &v);
        let ni = &(&pow_re * &v) + &(&pow_im * &u);
        pow_re = nr;
        pow_im = ni;
    }
    Ok(EvenOddPair { even: re, odd: im })
}

/// `φ(y)` evaluated numerically.
pub fn phi(y: f64) -> Complex64 {
    Complex64::new(1.0 - y * y, 2.0 * y) / (1.0 + y * y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(v: i64) -> Rational {
        Rational::from_i64(v)
    }

    fn upoly(var: &str, c: &[i64]) -> Polynomial {
        Polynomial::from_coeffs(var, &c.iter().map(|&v| q(v)).collect::<Vec<_>>())
    }

    #[test]
    fn difference_of_squares() {
        let a = upoly("s", &[1, 1]);
        let b = upoly("s", &[-1, 1]);
        assert_eq!(&a * &b, upoly("s", &[-1, 0, 1]));
    }

    #[test]
    fn product_with_zero_is_empty() {
        let a = upoly("s", &[3, 2, 1]);
        let z = Polynomial::zero(&["s"]);
        let p = &a * &z;
        assert!(p.is_zero());
        assert!(p.terms().is_empty());
    }

    #[test]
    fn cubic_expansion() {
        let a = upoly("s", &[2, -3, 1]);
        let b = upoly("s", &[1, 1]);
        assert_eq!(&a * &b, upoly("s", &[2, -1, -2, 1]));
    }

    #[test]
    fn aligns_variables_by_name() {
        let s = Polynomial::<Rational>::var("s");
        let r = Polynomial::<Rational>::var("rho1");
        let p = &s * &r;
        assert_eq!(p.vars(), &["s".to_string(), "rho1".to_string()]);
        assert_eq!(p.degree(), 2);
        let back = &p - &(&r * &s);
        assert!(back.is_zero());
    }

    #[test]
    fn even_odd_of_example_numerator() {
        // (s+2)(s+3)(s+1)
        let p = upoly("s", &[6, 11, 6, 1]);
        let eo = even_odd_ct(&p).unwrap();
        assert_eq!(eo.even, upoly(OMEGA, &[6, 0, -6]));
        assert_eq!(eo.odd, upoly(OMEGA, &[0, 11, 0, -1]));
    }

    #[test]
    fn even_odd_trivia() {
        let eo = even_odd_ct(&upoly("s", &[1])).unwrap();
        assert_eq!(eo.even, upoly(OMEGA, &[1]));
        assert!(eo.odd.is_zero());
        let eo = even_odd_ct(&upoly("s", &[0, 0, 1])).unwrap();
        assert_eq!(eo.even, upoly(OMEGA, &[0, 0, -1]));
        assert!(eo.odd.is_zero());
    }

    #[test]
    fn even_odd_rejects_multivariate() {
        let p = &Polynomial::<Rational>::var("s") * &Polynomial::var("r");
        assert!(matches!(even_odd_ct(&p), Err(PolyError::NotUnivariate(_))));
    }

    #[test]
    fn moebius_of_example_numerator() {
        let p = upoly("z", &[0, -1, 2]);
        let l = moebius_lift(&p, 2).unwrap();
        assert_eq!(l.even, upoly(CIRCLE_PARAM, &[1, 0, -12, 0, 3]));
        assert_eq!(l.odd, upoly(CIRCLE_PARAM, &[0, 6, 0, -10]));
    }

    #[test]
    fn moebius_trivia() {
        let l = moebius_lift(&upoly("z", &[1]), 0).unwrap();
        assert_eq!(l.even, upoly(CIRCLE_PARAM, &[1]));
        assert!(l.odd.is_zero());
        let l = moebius_lift(&upoly("z", &[0, 1]), 1).unwrap();
        assert_eq!(l.even, upoly(CIRCLE_PARAM, &[1, 0, -1]));
        assert_eq!(l.odd, upoly(CIRCLE_PARAM, &[0, 2]));
    }

    #[test]
    fn moebius_rejects_small_clearing_degree() {
        let err = moebius_lift(&upoly("z", &[0, 0, 1]), 1).unwrap_err();
        assert_eq!(err, PolyError::ClearingDegreeTooSmall { clearing: 1, degree: 2 });
    }

    #[test]
    fn circle_parameterization_is_unimodular() {
        let y = Polynomial::<Rational>::var("y");
        let one = Polynomial::constant(&["y"], q(1));
        let two = q(2);
        let re = &one - &(&y * &y);
        let im = y.scale(&two);
        let w = &one + &(&y * &y);
        assert_eq!(&(&re * &re) + &(&im * &im), &w * &w);
    }

    #[test]
    fn graded_lex_basis() {
        let b = monomials_up_to(2, 2);
        let exps: Vec<Vec<u32>> = b.into_iter().map(|m| m.0).collect();
        assert_eq!(
            exps,
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
        assert_eq!(monomials_up_to(1, 4).len(), 5);
        assert_eq!(monomials_up_to(3, 2).len(), 10);
    }

    #[test]
    fn primitive_scale_clears_halves() {
        let p = Polynomial::from_coeffs("z", &[q(0), rat(-1, 2), q(1)]);
        assert_eq!(Polynomial::primitive_scale(&[&p]), q(2));
        let p = upoly("z", &[4, 6]);
        assert_eq!(Polynomial::primitive_scale(&[&p]), rat(1, 2));
    }

    #[test]
    fn rational_conversion_handles_huge_values() {
        let big = Rational::new(BigInt::from(10).pow(400), BigInt::from(10).pow(399));
        assert!((rational_to_f64(&big) - 10.0).abs() < 1e-12);
    }
}
