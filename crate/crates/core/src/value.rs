//! Typed cell values.
//!
//! Numbers are exact: integers are `i128` and rationals are reduced
//! numerator/denominator pairs, so aggregate comparisons (AVG in particular)
//! never go through floating point.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

/// Exact rational number used for every numeric computation.
pub type Rational = Ratio<i128>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttributeType {
    Integer,
    Rational,
    Text,
    Boolean,
}

impl AttributeType {
    pub fn is_numeric(self) -> bool {
        matches!(self, AttributeType::Integer | AttributeType::Rational)
    }

    /// Two types can be compared when equal, or when both are numeric.
    pub fn comparable_with(self, other: AttributeType) -> bool {
        self == other || (self.is_numeric() && other.is_numeric())
    }
}

impl fmt::Display for AttributeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttributeType::Integer => "integer",
            AttributeType::Rational => "rational",
            AttributeType::Text => "text",
            AttributeType::Boolean => "boolean",
        })
    }
}

/// A single cell. Within one column every value has the same variant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Bool(bool),
    Int(i128),
    Rat(Rational),
    Text(Arc<str>),
}

impl Value {
    pub fn text(s: &str) -> Self {
        Value::Text(Arc::from(s))
    }

    pub fn ty(&self) -> AttributeType {
        match self {
            Value::Bool(_) => AttributeType::Boolean,
            Value::Int(_) => AttributeType::Integer,
            Value::Rat(_) => AttributeType::Rational,
            Value::Text(_) => AttributeType::Text,
        }
    }

    pub fn as_rational(&self) -> Option<Rational> {
        match self {
            Value::Int(i) => Some(Rational::from_integer(*i)),
            Value::Rat(r) => Some(*r),
            _ => None,
        }
    }

    /// Comparison used by predicates: numeric values compare across
    /// integer/rational, everything else only within its own type.
    pub fn compare(&self, other: &Value) -> Option<Ordering> {
        match (self, other) {
            (Value::Bool(a), Value::Bool(b)) => Some(a.cmp(b)),
            (Value::Text(a), Value::Text(b)) => Some(a.cmp(b)),
            (Value::Int(a), Value::Int(b)) => Some(a.cmp(b)),
            _ => Some(self.as_rational()?.cmp(&other.as_rational()?)),
        }
    }

    /// Parses a cell of the given type. Empty cells are NULLs and rejected.
    pub fn parse(raw: &str, ty: AttributeType) -> Result<Value, String> {
        let s = raw.trim();
        if s.is_empty() {
            return Err("NULL values are not supported".into());
        }
        match ty {
            AttributeType::Text => Ok(Value::text(raw)),
            AttributeType::Integer => s
                .parse::<i128>()
                .map(Value::Int)
                .map_err(|_| format!("`{s}` is not an integer")),
            AttributeType::Rational => parse_rational(s)
                .map(Value::Rat)
                .ok_or_else(|| format!("`{s}` is not a rational number")),
            AttributeType::Boolean => match s.to_ascii_lowercase().as_str() {
                "true" | "t" | "1" => Ok(Value::Bool(true)),
                "false" | "f" | "0" => Ok(Value::Bool(false)),
                _ => Err(format!("`{s}` is not a boolean")),
            },
        }
    }

    /// Reads a JSON scalar: numbers become exact integers or rationals.
    pub fn from_json(v: &serde_json::Value) -> Option<Value> {
        match v {
            serde_json::Value::Bool(b) => Some(Value::Bool(*b)),
            serde_json::Value::String(s) => Some(Value::text(s)),
            serde_json::Value::Number(n) => {
                let r = parse_rational(&n.to_string())?;
                Some(if r.is_integer() { Value::Int(r.to_integer()) } else { Value::Rat(r) })
            }
            _ => None,
        }
    }

    /// Reads a command-line literal: integer, decimal or fraction, else text.
    pub fn from_literal(s: &str) -> Value {
        match parse_rational(s) {
            Some(r) if r.is_integer() => Value::Int(r.to_integer()),
            Some(r) => Value::Rat(r),
            None => Value::text(s),
        }
    }

    /// Coerces a numeric value to the representation of `ty`.
    pub fn coerce(&self, ty: AttributeType) -> Option<Value> {
        match (self, ty) {
            (v, t) if v.ty() == t => Some(v.clone()),
            (Value::Int(i), AttributeType::Rational) => Some(Value::Rat(Rational::from_integer(*i))),
            (Value::Rat(r), AttributeType::Integer) if r.is_integer() => Some(Value::Int(r.to_integer())),
            _ => None,
        }
    }
}

/// Accepts `12`, `-3.25`, `7/2`.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: i128 = n.trim().parse().ok()?;
        let d: i128 = d.trim().parse().ok()?;
        if d == 0 {
            return None;
        }
        return Some(Rational::new(n, d));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 30 {
            return None;
        }
        let negative = whole.trim_start().starts_with('-');
        let whole_abs: i128 = whole.trim_start_matches(['-', '+']).parse().unwrap_or(0);
        if !whole.trim_start_matches(['-', '+']).is_empty()
            && whole.trim_start_matches(['-', '+']).parse::<i128>().is_err()
        {
            return None;
        }
        let scale = 10i128.checked_pow(frac.len() as u32)?;
        let frac_val: i128 = frac.parse().ok()?;
        let mag = Rational::new(whole_abs.checked_mul(scale)?.checked_add(frac_val)?, scale);
        return Some(if negative { -mag } else { mag });
    }
    s.parse::<i128>().ok().map(Rational::from_integer)
}

/// Renders integers plainly, terminating decimals as decimals and anything
/// else as `n/d`.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        return r.to_integer().to_string();
    }
    let mut den = *r.denom();
    let mut twos = 0u32;
    let mut fives = 0u32;
    while den % 2 == 0 {
        den /= 2;
        twos += 1;
    }
    while den % 5 == 0 {
        den /= 5;
        fives += 1;
    }
    if den != 1 {
        return format!("{}/{}", r.numer(), r.denom());
    }
    let digits = twos.max(fives);
    let scale = 10i128.pow(digits);
    let scaled = (r * Rational::from_integer(scale)).to_integer();
    let sign = if r.is_negative() { "-" } else { "" };
    let abs = scaled.abs();
    let whole = abs / scale;
    let frac = abs % scale;
    format!("{sign}{whole}.{frac:0width$}", width = digits as usize)
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Rat(r) => f.write_str(&format_rational(r)),
            Value::Text(s) => f.write_str(s),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Bool(b) => s.serialize_bool(*b),
            Value::Int(i) => match i64::try_from(*i) {
                Ok(v) => s.serialize_i64(v),
                Err(_) => s.serialize_str(&i.to_string()),
            },
            Value::Rat(r) => {
                if r.is_integer() {
                    if let Some(v) = r.to_integer().to_i64() {
                        return s.serialize_i64(v);
                    }
                }
                s.serialize_str(&format_rational(r))
            }
            Value::Text(t) => s.serialize_str(t),
        }
    }
}
