//! Problem files: strict JSON with exact decimal coefficients.
//!
//! ```json
//! {
//!   "domain": "dt",
//!   "plant": { "num": ["0", "1"], "den": ["-2", "1"] },
//!   "basis": [ { "num": ["1"], "den": ["1"] }, { "num": ["1"], "den": ["-0.5", "1"] } ],
//!   "box": { "lower": ["0.1", "1"], "upper": ["1", "2"] },
//!   "options": { "mult_degree": 2 }
//! }
//! ```
//!
//! Coefficient arrays are ascending in power (`a₀` first). Numbers may be
//! JSON numbers or strings holding a decimal (`"-0.5"`, `"1e-4"`) or a
//! fraction (`"1/3"`); all are converted exactly.

use std::path::Path;
use std::str::FromStr;

use bigdecimal::BigDecimal;
use num::bigint::BigInt;
use num::{One, Zero};
use passiv_core::passivation::PassivationProblem;
use passiv_core::poly::Rational;
use passiv_core::system::{ControllerBasis, Domain, ParamBox, RationalTransfer};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema error at `{key}`: {message}")]
    Schema { key: String, message: String },
    #[error("invalid problem at `{key}`: {message}")]
    Invalid { key: String, message: String },
}

impl ParseError {
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::Io { .. } => "io_error",
            ParseError::Syntax { .. } => "parse_error",
            ParseError::Schema { .. } => "schema_error",
            ParseError::Invalid { .. } => "invalid_problem",
        }
    }
}

/// Options that may appear in the file. Absent fields stay `None`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FileOptions {
    pub mult_degree: Option<u32>,
    pub bisect_tol: Option<f64>,
    pub grid_resolution: Option<usize>,
    pub direct_mode: Option<bool>,
    pub gap_tol: Option<f64>,
    pub feas_tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub domain: Domain,
    pub plant: RationalTransfer,
    pub basis: ControllerBasis,
    pub bx: ParamBox,
    pub options: FileOptions,
}

impl ProblemSpec {
    pub fn problem(&self) -> PassivationProblem {
        PassivationProblem {
            plant: self.plant.clone(),
            basis: self.basis.clone(),
            bx: self.bx.clone(),
        }
    }
}

pub fn parse_problem(path: &Path) -> Result<ProblemSpec, ParseError> {
    let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_problem_str(&text)
}

pub fn parse_problem_str(text: &str) -> Result<ProblemSpec, ParseError> {
    let v: Value = serde_json::from_str(text).map_err(|e| ParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let top = object(&v, "")?;
    check_keys(top, "", &["domain", "plant", "basis", "box", "options", "constraints"])?;
    let domain = match required(top, "", "domain")? {
        Value::String(s) if s == "ct" => Domain::Ct,
        Value::String(s) if s == "dt" => Domain::Dt,
        _ => return Err(schema("domain", "expected \"ct\" or \"dt\"")),
    };
    match top.get("constraints") {
        None | Some(Value::Null) => {}
        Some(Value::Array(a)) if a.is_empty() => {}
        Some(_) => {
            return Err(invalid(
                "constraints",
                "general parameter sets are reserved; only the box is supported",
            ))
        }
    }
    let plant = transfer(required(top, "", "plant")?, "plant", domain)?;
    let basis_v = match required(top, "", "basis")? {
        Value::Array(a) => a,
        _ => return Err(schema("basis", "expected an array")),
    };
    let entries = basis_v
        .iter()
        .enumerate()
        .map(|(i, e)| transfer(e, &format!("basis[{i}]"), domain))
        .collect::<Result<Vec<_>, _>>()?;
    let basis = ControllerBasis::new(entries).map_err(|e| invalid("basis", &e.to_string()))?;
    let bv = object(required(top, "", "box")?, "box")?;
    check_keys(bv, "box", &["lower", "upper"])?;
    let lower = rationals(required(bv, "box", "lower")?, "box.lower")?;
    let upper = rationals(required(bv, "box", "upper")?, "box.upper")?;
    if lower.len() != upper.len() {
        return Err(invalid("box", "lower and upper have different lengths"));
    }
    if lower.len() != basis.len() {
        return Err(invalid(
            "box",
            &format!("{} bounds for {} basis entries", lower.len(), basis.len()),
        ));
    }
    let bx = ParamBox::new(lower, upper).map_err(|e| invalid("box", &e.to_string()))?;
    let options = match top.get("options") {
        None | Some(Value::Null) => FileOptions::default(),
        Some(o) => file_options(o)?,
    };
    Ok(ProblemSpec {
        domain,
        plant,
        basis,
        bx,
        options,
    })
}

fn schema(key: &str, message: &str) -> ParseError {
    ParseError::Schema {
        key: key.to_string(),
        message: message.to_string(),
    }
}

fn invalid(key: &str, message: &str) -> ParseError {
    ParseError::Invalid {
        key: key.to_string(),
        message: message.to_string(),
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn object<'a>(v: &'a Value, key: &str) -> Result<&'a Map<String, Value>, ParseError> {
    v.as_object().ok_or_else(|| schema(if key.is_empty() { "<root>" } else { key }, "expected an object"))
}

fn check_keys(m: &Map<String, Value>, prefix: &str, allowed: &[&str]) -> Result<(), ParseError> {
    match m.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(schema(
            &join(prefix, k),
            &format!("unknown key; expected one of {}", allowed.join(", ")),
        )),
        None => Ok(()),
    }
}

fn required<'a>(m: &'a Map<String, Value>, prefix: &str, key: &str) -> Result<&'a Value, ParseError> {
    m.get(key).ok_or_else(|| schema(&join(prefix, key), "missing required key"))
}

/// Exact value of a decimal (`-1.25e-3`) or fraction (`7/3`) literal.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if s.contains('/') {
        let r = Rational::from_str(s).ok()?;
        return (!r.denom().is_zero()).then_some(r);
    }
    let d = BigDecimal::from_str(s).ok()?;
    let (n, scale) = d.as_bigint_and_exponent();
    let ten = BigInt::from(10);
    Some(if scale >= 0 {
        Rational::new(n, num::pow(ten, scale as usize))
    } else {
        Rational::from_integer(n * num::pow(ten, (-scale) as usize))
    })
}

fn rational(v: &Value, key: &str) -> Result<Rational, ParseError> {
    let text = match v {
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        _ => return Err(schema(key, "expected a number or a numeric string")),
    };
    parse_rational(&text).ok_or_else(|| invalid(key, &format!("not a decimal or fraction: {text:?}")))
}

fn rationals(v: &Value, key: &str) -> Result<Vec<Rational>, ParseError> {
    match v {
        Value::Array(a) => a
            .iter()
            .enumerate()
            .map(|(i, x)| rational(x, &format!("{key}[{i}]")))
            .collect(),
        _ => Err(schema(key, "expected an array")),
    }
}

fn transfer(v: &Value, key: &str, domain: Domain) -> Result<RationalTransfer, ParseError> {
    let m = object(v, key)?;
    check_keys(m, key, &["num", "den"])?;
    let num = rationals(required(m, key, "num")?, &join(key, "num"))?;
    let den = rationals(required(m, key, "den")?, &join(key, "den"))?;
    if den.iter().all(Zero::is_zero) {
        return Err(invalid(&join(key, "den"), "denominator is zero"));
    }
    if num.is_empty() {
        return Err(invalid(&join(key, "num"), "empty coefficient array"));
    }
    RationalTransfer::new(&num, &den, domain).map_err(|e| invalid(key, &e.to_string()))
}

fn positive_f64(v: &Value, key: &str) -> Result<f64, ParseError> {
    let r = rational(v, key)?;
    if r <= Rational::zero() {
        return Err(invalid(key, "must be positive"));
    }
    Ok(passiv_core::poly::rational_to_f64(&r))
}

fn integer(v: &Value, key: &str) -> Result<u64, ParseError> {
    let r = rational(v, key)?;
    if !r.is_integer() || r < Rational::one() {
        return Err(invalid(key, "must be a positive integer"));
    }
    r.to_integer()
        .to_string()
        .parse()
        .map_err(|_| invalid(key, "integer out of range"))
}

fn file_options(v: &Value) -> Result<FileOptions, ParseError> {
    let m = object(v, "options")?;
    check_keys(
        m,
        "options",
        &["mult_degree", "bisect_tol", "grid_resolution", "direct_mode", "gap_tol", "feas_tol", "max_iter"],
    )?;
    let mut o = FileOptions::default();
    for (k, x) in m {
        let key = join("options", k);
        match k.as_str() {
            "mult_degree" => o.mult_degree = Some(integer(x, &key)? as u32),
            "bisect_tol" => o.bisect_tol = Some(positive_f64(x, &key)?),
            "grid_resolution" => o.grid_resolution = Some(integer(x, &key)? as usize),
            "direct_mode" => {
                o.direct_mode = Some(x.as_bool().ok_or_else(|| schema(&key, "expected a boolean"))?)
            }
            "gap_tol" => o.gap_tol = Some(positive_f64(x, &key)?),
            "feas_tol" => o.feas_tol = Some(positive_f64(x, &key)?),
            "max_iter" => o.max_iter = Some(integer(x, &key)? as usize),
            _ => unreachable!("keys checked above"),
        }
    }
    Ok(o)
}
