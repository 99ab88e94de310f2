//! Named piecewise-constant profiles in `x`.
//!
//! ```text
//! zero
//! constant(c)
//! pn(x_split, c_plus, c_minus)        c_plus for x < x_split
//! pnp(x_left, x_right, c_outer, c_inner)
//! ```
//!
//! Arguments may be positional or named (`pn(x_split=0.5, c_plus=1, c_minus=-1)`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::mesh::Rect;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    Constant {
        c: f64,
    },
    Pn {
        x_split: f64,
        c_plus: f64,
        c_minus: f64,
    },
    Pnp {
        x_left: f64,
        x_right: f64,
        c_outer: f64,
        c_inner: f64,
    },
}

impl Profile {
    /// Pointwise value at abscissa `x`.
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Constant { c } => c,
            Profile::Pn {
                x_split,
                c_plus,
                c_minus,
            } => {
                if x < x_split {
                    c_plus
                } else {
                    c_minus
                }
            }
            Profile::Pnp {
                x_left,
                x_right,
                c_outer,
                c_inner,
            } => {
                if x < x_left || x >= x_right {
                    c_outer
                } else {
                    c_inner
                }
            }
        }
    }

    /// Exact mean over an axis-aligned cell.
    pub fn cell_mean(&self, r: &Rect) -> f64 {
        let w = r.width();
        // length of [x0, x1] ∩ (-∞, s)
        let left_of = |s: f64| (s.min(r.x1) - r.x0).clamp(0.0, w);
        match *self {
            Profile::Zero => 0.0,
            Profile::Constant { c } => c,
            Profile::Pn {
                x_split,
                c_plus,
                c_minus,
            } => {
                let a = left_of(x_split) / w;
                a * c_plus + (1.0 - a) * c_minus
            }
            Profile::Pnp {
                x_left,
                x_right,
                c_outer,
                c_inner,
            } => {
                let inner = ((left_of(x_right) - left_of(x_left)) / w).max(0.0);
                inner * c_inner + (1.0 - inner) * c_outer
            }
        }
    }

    /// `(min, max)` over the domain.
    pub fn range(&self) -> (f64, f64) {
        let vals: Vec<f64> = match *self {
            Profile::Zero => vec![0.0],
            Profile::Constant { c } => vec![c],
            Profile::Pn { c_plus, c_minus, .. } => vec![c_plus, c_minus],
            Profile::Pnp { c_outer, c_inner, .. } => vec![c_outer, c_inner],
        };
        (
            vals.iter().cloned().fold(f64::INFINITY, f64::min),
            vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        )
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            Profile::Zero => vec![],
            Profile::Constant { c } => vec![c],
            Profile::Pn {
                x_split,
                c_plus,
                c_minus,
            } => vec![x_split, c_plus, c_minus],
            Profile::Pnp {
                x_left,
                x_right,
                c_outer,
                c_inner,
            } => vec![x_left, x_right, c_outer, c_inner],
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Profile::Zero => return f.write_str("zero"),
            Profile::Constant { .. } => "constant",
            Profile::Pn { .. } => "pn",
            Profile::Pnp { .. } => "pnp",
        };
        let args: Vec<String> = self.params().into_iter().map(fmt_f64).collect();
        write!(f, "{name}({})", args.join(", "))
    }
}

fn parse_number(s: &str) -> Result<f64> {
    let t = s.trim().replace('\u{2212}', "-");
    t.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Scenario(format!("'{s}' is not a finite number")))
}

/// Splits `name(a, b=c, ...)` and matches arguments against `names`.
pub(crate) fn parse_call(text: &str, expected: &[(&str, &[&str])]) -> Result<(String, Vec<f64>)> {
    let t = text.trim();
    let (name, inner) = match t.find('(') {
        Some(i) => {
            let close = t
                .strip_suffix(')')
                .ok_or_else(|| Error::Scenario(format!("missing ')' in '{text}'")))?;
            (t[..i].trim(), Some(&close[i + 1..]))
        }
        None => (t, None),
    };
    let name = name.to_ascii_lowercase();
    let (_, names) = expected
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Scenario(format!("unknown profile or model '{name}'")))?;
    let args: Vec<&str> = match inner {
        Some(s) if !s.trim().is_empty() => s.split(',').collect(),
        _ => vec![],
    };
    if args.len() != names.len() {
        return Err(Error::Scenario(format!(
            "'{name}' takes {} argument(s) ({}), got {}",
            names.len(),
            names.join(", "),
            args.len()
        )));
    }
    let mut values = vec![None; names.len()];
    for (pos, a) in args.iter().enumerate() {
        match a.split_once('=') {
            Some((key, v)) => {
                let key = key.trim();
                let slot = names
                    .iter()
                    .position(|n| *n == key)
                    .ok_or_else(|| Error::Scenario(format!("'{name}' has no argument '{key}'")))?;
                if values[slot].is_some() {
                    return Err(Error::Scenario(format!("argument '{key}' given twice")));
                }
                values[slot] = Some(parse_number(v)?);
            }
            None => {
                if values[pos].is_some() {
                    return Err(Error::Scenario(format!("argument '{}' given twice", names[pos])));
                }
                values[pos] = Some(parse_number(a)?);
            }
        }
    }
    Ok((name, values.into_iter().map(|v| v.expect("all slots filled")).collect()))
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        const FORMS: &[(&str, &[&str])] = &[
            ("zero", &[]),
            ("constant", &["c"]),
            ("pn", &["x_split", "c_plus", "c_minus"]),
            ("pnp", &["x_left", "x_right", "c_outer", "c_inner"]),
        ];
        let (name, v) = parse_call(s, FORMS)?;
        Ok(match name.as_str() {
            "zero" => Profile::Zero,
            "constant" => Profile::Constant { c: v[0] },
            "pn" => Profile::Pn {
                x_split: v[0],
                c_plus: v[1],
                c_minus: v[2],
            },
            _ => {
                if v[0] > v[1] {
                    return Err(Error::Scenario("pnp needs x_left <= x_right".into()));
                }
                Profile::Pnp {
                    x_left: v[0],
                    x_right: v[1],
                    c_outer: v[2],
                    c_inner: v[3],
                }
            }
        })
    }
}
