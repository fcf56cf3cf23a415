use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A slowly varying function on `[1, inf)`.
///
/// `LogPower` is `c * (1 + ln x)^rho`, which keeps the value finite and
/// positive at `x = 1`. `Tabulated` interpolates `ln L` linearly in `ln x`
/// and is held flat outside the table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlowlyVarying {
    Constant { c: f64 },
    LogPower { c: f64, rho: f64 },
    Tabulated { points: Vec<(f64, f64)> },
}

impl SlowlyVarying {
    pub fn constant(c: f64) -> Self {
        SlowlyVarying::Constant { c }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SlowlyVarying::Constant { c } | SlowlyVarying::LogPower { c, .. }
                if !(*c > 0.0 && c.is_finite()) =>
            {
                Err(invalid(format!(
                    "slowly varying coefficient must be positive, got {c}"
                )))
            }
            SlowlyVarying::LogPower { rho, .. } if !rho.is_finite() => {
                Err(invalid("log-power exponent must be finite"))
            }
            SlowlyVarying::Tabulated { points } => {
                if points.is_empty() {
                    return Err(invalid(
                        "tabulated slowly varying function needs at least one point",
                    ));
                }
                for w in points.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(invalid("tabulated abscissae must be strictly increasing"));
                    }
                }
                if points
                    .iter()
                    .any(|&(x, y)| !(x >= 1.0 && y > 0.0 && y.is_finite()))
                {
                    return Err(invalid(
                        "tabulated points need x >= 1 and positive finite values",
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Value at `x`; arguments below 1 are clamped to 1.
    pub fn eval(&self, x: f64) -> f64 {
        let x = x.max(1.0);
        match self {
            SlowlyVarying::Constant { c } => *c,
            SlowlyVarying::LogPower { c, rho } => c * (1.0 + x.ln()).powf(*rho),
            SlowlyVarying::Tabulated { points } => {
                let lx = x.ln();
                let first = points[0];
                let last = points[points.len() - 1];
                if x <= first.0 {
                    return first.1;
                }
                if x >= last.0 {
                    return last.1;
                }
                let k = points.partition_point(|p| p.0 <= x);
                let (x0, y0) = points[k - 1];
                let (x1, y1) = points[k];
                let w = (lx - x0.ln()) / (x1.ln() - x0.ln());
                (y0.ln() * (1.0 - w) + y1.ln() * w).exp()
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, SlowlyVarying::Constant { .. })
    }

    /// True when the function is nonincreasing on `[1, inf)`.
    pub fn is_nonincreasing(&self) -> bool {
        match self {
            SlowlyVarying::Constant { .. } => true,
            SlowlyVarying::LogPower { rho, .. } => *rho <= 0.0,
            SlowlyVarying::Tabulated { points } => points.windows(2).all(|w| w[1].1 <= w[0].1),
        }
    }
}
