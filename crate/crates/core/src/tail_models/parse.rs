//! Text syntax for laws, used by configuration files and the command line.
//!
//! ```text
//! deterministic:1,1
//! product:pareto(0.5);pareto(0.5)        (also: product:pareto(0.5)*2)
//! product:uniform(0,2);twosided(4,0.5)
//! dependent:beta=3;betas=1,1;psi=logpow(1,0.5)
//! tabulated:path/to/law.csv
//! ```

use std::path::Path;
use std::str::FromStr;

use super::law::LatticeLaw;
use super::marginal::Marginal1d;
use super::slowly::SlowlyVarying;
use crate::error::{Error, Result};

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

fn numbers<T: FromStr>(text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| parse_err(format!("not a number: '{s}'")))
        })
        .collect()
}

/// Splits `name(a,b,...)` into the name and argument text.
fn call(text: &str) -> Result<(&str, &str)> {
    let text = text.trim();
    let open = text
        .find('(')
        .ok_or_else(|| parse_err(format!("expected name(args), got '{text}'")))?;
    let inner = text[open + 1..]
        .strip_suffix(')')
        .ok_or_else(|| parse_err(format!("missing ')' in '{text}'")))?;
    Ok((text[..open].trim(), inner))
}

fn args(inner: &str, want: std::ops::RangeInclusive<usize>, name: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = numbers(inner)?;
    if !want.contains(&v.len()) {
        return Err(parse_err(format!(
            "{name} takes {want:?} arguments, got {}",
            v.len()
        )));
    }
    Ok(v)
}

fn parse_marginal(text: &str) -> Result<Marginal1d> {
    let (name, inner) = call(text)?;
    let m = match name {
        "pareto" => Marginal1d::Pareto {
            gamma: args(inner, 1..=1, name)?[0],
        },
        "zeta" => Marginal1d::Zeta {
            s: args(inner, 1..=1, name)?[0],
        },
        "twosided" => {
            let a = args(inner, 2..=3, name)?;
            Marginal1d::TwoSided {
                gamma: a[0],
                p: a[1],
                rho: a.get(2).copied().unwrap_or(0.0),
            }
        }
        "uniform" => {
            let a: Vec<i64> = numbers(inner)?;
            if a.len() != 2 {
                return Err(parse_err("uniform takes (lo,hi)"));
            }
            Marginal1d::Uniform { lo: a[0], hi: a[1] }
        }
        "finite" => {
            let mut parts = inner.splitn(2, ',');
            let offset: i64 = parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| parse_err("finite takes (offset,p0,p1,...)"))?;
            let probs = numbers(parts.next().unwrap_or(""))?;
            Marginal1d::Finite { offset, probs }
        }
        other => return Err(parse_err(format!("unknown marginal family '{other}'"))),
    };
    m.validate()?;
    Ok(m)
}

fn parse_psi(text: &str) -> Result<SlowlyVarying> {
    let (name, inner) = call(text)?;
    match name {
        "const" => Ok(SlowlyVarying::constant(args(inner, 1..=1, name)?[0])),
        "logpow" => {
            let a = args(inner, 2..=2, name)?;
            Ok(SlowlyVarying::LogPower { c: a[0], rho: a[1] })
        }
        other => Err(parse_err(format!("unknown slowly varying form '{other}'"))),
    }
}

/// Parses a law specification (see module docs). Relative tabulated paths
/// are resolved against `base_dir` when given.
pub fn parse_law(spec: &str, base_dir: Option<&Path>) -> Result<LatticeLaw> {
    let (family, rest) = spec
        .split_once(':')
        .ok_or_else(|| parse_err(format!("law spec '{spec}' lacks a 'family:' prefix")))?;
    match family.trim() {
        "deterministic" => LatticeLaw::deterministic(numbers(rest)?),
        "product" => {
            let mut marginals = Vec::new();
            for item in rest.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                let (body, times) = match item.rsplit_once('*') {
                    Some((b, t)) if b.trim_end().ends_with(')') => (
                        b,
                        t.trim()
                            .parse::<usize>()
                            .map_err(|_| parse_err(format!("bad repeat count in '{item}'")))?,
                    ),
                    _ => (item, 1),
                };
                let m = parse_marginal(body)?;
                marginals.extend(std::iter::repeat_n(m, times));
            }
            LatticeLaw::independent(marginals)
        }
        "dependent" => {
            let (mut beta, mut betas, mut psi) = (None, None, SlowlyVarying::constant(1.0));
            for item in rest.split(';').map(str::trim).filter(|s| !s.is_empty()) {
                let (k, v) = item
                    .split_once('=')
                    .ok_or_else(|| parse_err(format!("expected key=value, got '{item}'")))?;
                match k.trim() {
                    "beta" => {
                        beta = Some(
                            v.trim()
                                .parse::<f64>()
                                .map_err(|_| parse_err("beta must be a number"))?,
                        )
                    }
                    "betas" => betas = Some(numbers::<f64>(v)?),
                    "psi" => psi = parse_psi(v)?,
                    other => return Err(parse_err(format!("unknown dependent-law key '{other}'"))),
                }
            }
            let beta = beta.ok_or_else(|| parse_err("dependent law needs beta="))?;
            let betas = betas.ok_or_else(|| parse_err("dependent law needs betas="))?;
            LatticeLaw::dependent(betas, beta, psi)
        }
        "tabulated" => {
            let path = Path::new(rest.trim());
            let full = match base_dir {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path.to_path_buf(),
            };
            LatticeLaw::from_csv(&full)
        }
        other => Err(parse_err(format!("unknown law family '{other}'"))),
    }
}

impl FromStr for LatticeLaw {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_law(s, None)
    }
}
