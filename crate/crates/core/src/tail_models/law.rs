use std::fmt;
use std::path::Path;

use super::dependent::DependentNorm;
use super::marginal::{Marginal1d, MarginalTailSpec};
use super::slowly::SlowlyVarying;
use crate::error::{invalid, Error, Result};

/// Dense probability table over a box, plus the mass it leaves unplaced.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedLaw {
    pub lower: Vec<i64>,
    pub shape: Vec<usize>,
    pub probs: Vec<f64>,
    /// Probability mass outside the table whose location is unspecified.
    /// The exact engine books it as dropped mass; samplers refuse it.
    pub residual: f64,
}

impl TabulatedLaw {
    fn index(&self, x: &[i64]) -> Option<usize> {
        let mut idx = 0usize;
        for ((&v, &lo), &n) in x.iter().zip(&self.lower).zip(&self.shape) {
            let off = v.checked_sub(lo)?;
            if off < 0 || off as usize >= n {
                return None;
            }
            idx = idx * n + off as usize;
        }
        Some(idx)
    }

    /// Iterates `(point, probability)` over nonzero cells.
    pub fn cells(&self) -> impl Iterator<Item = (Vec<i64>, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(move |(flat, &p)| {
                let mut rem = flat;
                let mut x = vec![0i64; self.shape.len()];
                for k in (0..self.shape.len()).rev() {
                    x[k] = self.lower[k] + (rem % self.shape[k]) as i64;
                    rem /= self.shape[k];
                }
                (x, p)
            })
    }

    fn marginal(&self, i: usize) -> Marginal1d {
        let mut probs = vec![0.0; self.shape[i]];
        for (x, p) in self.cells() {
            probs[(x[i] - self.lower[i]) as usize] += p;
        }
        let total: f64 = probs.iter().sum();
        if total > 0.0 {
            probs.iter_mut().for_each(|p| *p /= total);
        }
        Marginal1d::Finite {
            offset: self.lower[i],
            probs,
        }
    }
}

/// Family of a step law on `Z^d`.
#[derive(Debug, Clone)]
pub enum Family {
    IndependentProduct(Vec<Marginal1d>),
    DependentNorm(DependentNorm),
    Tabulated {
        table: TabulatedLaw,
        marginals: Vec<Marginal1d>,
    },
    DeterministicStep(Vec<i64>),
}

/// A step distribution on `Z^d` together with per-coordinate tail specs.
#[derive(Debug, Clone)]
pub struct LatticeLaw {
    family: Family,
    marginals: Vec<MarginalTailSpec>,
}

const NORMALIZER_TOL: f64 = 1e-9;

impl LatticeLaw {
    pub fn independent(marginals: Vec<Marginal1d>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(invalid("a law needs at least one coordinate"));
        }
        for m in &marginals {
            m.validate()?;
        }
        let specs = marginals.iter().map(Marginal1d::tail_spec).collect();
        Ok(LatticeLaw {
            family: Family::IndependentProduct(marginals),
            marginals: specs,
        })
    }

    pub fn dependent(betas: Vec<f64>, beta: f64, psi: SlowlyVarying) -> Result<Self> {
        let law = DependentNorm::new(betas, beta, psi, NORMALIZER_TOL)?;
        let specs = (0..law.dim()).map(|i| law.tail_spec(i)).collect();
        Ok(LatticeLaw {
            family: Family::DependentNorm(law),
            marginals: specs,
        })
    }

    pub fn tabulated(table: TabulatedLaw) -> Result<Self> {
        let cells: usize = table.shape.iter().product();
        if table.shape.is_empty()
            || table.lower.len() != table.shape.len()
            || cells != table.probs.len()
            || cells == 0
        {
            return Err(invalid(
                "tabulated law: shape does not match the probability array",
            ));
        }
        if table.probs.iter().any(|p| !(*p >= 0.0 && p.is_finite()))
            || !(0.0..1.0).contains(&table.residual)
        {
            return Err(invalid(
                "tabulated law: probabilities must be nonnegative and residual in [0, 1)",
            ));
        }
        let total: f64 = table.probs.iter().sum::<f64>() + table.residual;
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!(
                "tabulated law: total mass {total} is not 1"
            )));
        }
        let marginals: Vec<Marginal1d> =
            (0..table.shape.len()).map(|i| table.marginal(i)).collect();
        let specs = marginals.iter().map(Marginal1d::tail_spec).collect();
        Ok(LatticeLaw {
            family: Family::Tabulated { table, marginals },
            marginals: specs,
        })
    }

    pub fn deterministic(v: Vec<i64>) -> Result<Self> {
        if v.is_empty() {
            return Err(invalid("a law needs at least one coordinate"));
        }
        let specs = v
            .iter()
            .map(|&k| MarginalTailSpec {
                alpha: 2.0,
                gamma: f64::INFINITY,
                p: 0.5,
                q: 0.5,
                l: SlowlyVarying::constant(((k * k) as f64).max(1.0)),
                phi: SlowlyVarying::constant(1.0),
            })
            .collect();
        Ok(LatticeLaw {
            family: Family::DeterministicStep(v),
            marginals: specs,
        })
    }

    /// Loads a tabulated law from CSV with columns `x_1..x_d, p`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut rows: Vec<(Vec<i64>, f64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 2 {
                return Err(Error::Parse(format!(
                    "{}:{}: need x_1..x_d,p",
                    path.display(),
                    lineno + 1
                )));
            }
            let parsed: std::result::Result<Vec<i64>, _> = fields[..fields.len() - 1]
                .iter()
                .map(|f| f.parse())
                .collect();
            let (Ok(x), Ok(p)) = (parsed, fields[fields.len() - 1].parse::<f64>()) else {
                if rows.is_empty() {
                    continue; // header line
                }
                return Err(Error::Parse(format!(
                    "{}:{}: malformed row",
                    path.display(),
                    lineno + 1
                )));
            };
            if let Some((first, _)) = rows.first() {
                if first.len() != x.len() {
                    return Err(Error::Parse(format!(
                        "{}:{}: inconsistent dimension",
                        path.display(),
                        lineno + 1
                    )));
                }
            }
            rows.push((x, p));
        }
        if rows.is_empty() {
            return Err(Error::Parse(format!("{}: no rows", path.display())));
        }
        let d = rows[0].0.len();
        let lower: Vec<i64> = (0..d)
            .map(|k| rows.iter().map(|r| r.0[k]).min().unwrap())
            .collect();
        let upper: Vec<i64> = (0..d)
            .map(|k| rows.iter().map(|r| r.0[k]).max().unwrap())
            .collect();
        let shape: Vec<usize> = lower
            .iter()
            .zip(&upper)
            .map(|(l, u)| (u - l + 1) as usize)
            .collect();
        let mut table = TabulatedLaw {
            lower,
            shape,
            probs: vec![0.0; 0],
            residual: 0.0,
        };
        table.probs = vec![0.0; table.shape.iter().product()];
        for (x, p) in rows {
            let idx = table.index(&x).expect("row inside its own bounding box");
            table.probs[idx] += p;
        }
        let total: f64 = table.probs.iter().sum();
        table.residual = (1.0 - total).max(0.0);
        Self::tabulated(table)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginal_spec(&self, i: usize) -> &MarginalTailSpec {
        &self.marginals[i]
    }

    pub fn marginal_specs(&self) -> &[MarginalTailSpec] {
        &self.marginals
    }

    /// Overrides the tail spec of coordinate `i` (for example with a
    /// symbolic `L` used by the scaling solver).
    pub fn with_marginal_spec(mut self, i: usize, spec: MarginalTailSpec) -> Result<Self> {
        spec.validate()?;
        self.marginals[i] = spec;
        Ok(self)
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.marginals.iter().map(|m| m.alpha).collect()
    }

    fn check_dim(&self, x: &[i64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn pmf(&self, x: &[i64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.pmf_unchecked(x))
    }

    pub(crate) fn pmf_unchecked(&self, x: &[i64]) -> f64 {
        match &self.family {
            Family::IndependentProduct(ms) => ms.iter().zip(x).map(|(m, &k)| m.pmf(k)).product(),
            Family::DependentNorm(law) => law.pmf(x),
            Family::Tabulated { table, .. } => table.index(x).map_or(0.0, |i| table.probs[i]),
            Family::DeterministicStep(v) => {
                if v.as_slice() == x {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// 1D pmf of coordinate `i`.
    pub fn marginal_pmf(&self, i: usize, k: i64) -> f64 {
        match &self.family {
            Family::IndependentProduct(ms) => ms[i].pmf(k),
            Family::DependentNorm(law) => law.marginal_pmf(i, k),
            Family::Tabulated { marginals, table } => marginals[i].pmf(k) * (1.0 - table.residual),
            Family::DeterministicStep(v) => f64::from(u8::from(v[i] == k)),
        }
    }

    /// `(P(X^(i) > x), P(X^(i) <= -x))` for `x >= 0`.
    pub fn marginal_tail(&self, i: usize, x: f64) -> (f64, f64) {
        match &self.family {
            Family::IndependentProduct(ms) => (ms[i].upper_tail(x), ms[i].lower_tail(x)),
            Family::DependentNorm(law) => (law.marginal_upper_tail(i, x).0, 0.0),
            Family::Tabulated { marginals, table } => {
                let s = 1.0 - table.residual;
                (
                    marginals[i].upper_tail(x) * s,
                    marginals[i].lower_tail(x) * s,
                )
            }
            Family::DeterministicStep(v) => {
                let k = v[i] as f64;
                (f64::from(u8::from(k > x)), f64::from(u8::from(k <= -x)))
            }
        }
    }

    /// `P(X^(i) > a) + P(X^(i) < -a)` at real `a > 0`, using the continuous
    /// interpolation of closed-form tails where one exists.
    pub fn two_sided_tail(&self, i: usize, a: f64) -> f64 {
        match &self.family {
            Family::IndependentProduct(ms) => ms[i].two_sided_tail(a),
            _ => {
                let (up, _) = self.marginal_tail(i, a);
                // P(X < -a) = P(X <= -(floor(a)+1)) for a > 0
                let (_, low) = self.marginal_tail(i, a.floor() + 1.0);
                up + low
            }
        }
    }

    pub fn truncated_moments(&self, i: usize, x: f64) -> (f64, f64) {
        match &self.family {
            Family::IndependentProduct(ms) => ms[i].truncated_moments(x),
            Family::DependentNorm(law) => law.truncated_moments(i, x),
            Family::Tabulated { marginals, table } => {
                let (a, b) = marginals[i].truncated_moments(x);
                let s = 1.0 - table.residual;
                (a * s, b * s)
            }
            Family::DeterministicStep(v) => {
                let k = v[i] as f64;
                if k.abs() <= x {
                    (k, k * k)
                } else {
                    (0.0, 0.0)
                }
            }
        }
    }

    pub fn mean(&self, i: usize) -> Option<f64> {
        match &self.family {
            Family::IndependentProduct(ms) => ms[i].mean(),
            Family::DependentNorm(law) => law.marginal_mean(i),
            Family::Tabulated { marginals, .. } => marginals[i].mean(),
            Family::DeterministicStep(v) => Some(v[i] as f64),
        }
    }

    /// Support range of coordinate `i`.
    pub fn marginal_support(&self, i: usize) -> (i64, i64) {
        match &self.family {
            Family::IndependentProduct(ms) => ms[i].support(),
            Family::DependentNorm(_) => (1, i64::MAX),
            Family::Tabulated { marginals, .. } => marginals[i].support(),
            Family::DeterministicStep(v) => (v[i], v[i]),
        }
    }

    pub fn is_nonnegative(&self, i: usize) -> bool {
        self.marginal_support(i).0 >= 0
    }

    /// True when every step is `>= 1` componentwise.
    pub fn is_renewal(&self) -> bool {
        (0..self.dim()).all(|i| self.marginal_support(i).0 >= 1)
    }

    pub fn prob_zero(&self, i: usize) -> f64 {
        self.marginal_pmf(i, 0)
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self.family, Family::DeterministicStep(_))
    }

    /// Exact probability of the box `[lower, upper]` where available.
    pub fn mass_in_box(&self, lower: &[i64], upper: &[i64]) -> f64 {
        match &self.family {
            Family::IndependentProduct(ms) => ms
                .iter()
                .zip(lower.iter().zip(upper))
                .map(|(m, (&lo, &hi))| {
                    let above = m.upper_tail(hi as f64);
                    let below = m.lower_tail(-(lo as f64) + 1.0);
                    (1.0 - above - below).max(0.0)
                })
                .product(),
            Family::DeterministicStep(v) => f64::from(u8::from(
                v.iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(k, (lo, hi))| lo <= k && k <= hi),
            )),
            Family::Tabulated { table, .. } => table
                .cells()
                .filter(|(x, _)| {
                    x.iter()
                        .zip(lower.iter().zip(upper))
                        .all(|(k, (lo, hi))| lo <= k && k <= hi)
                })
                .map(|(_, p)| p)
                .sum(),
            Family::DependentNorm(_) => {
                let mut total = 0.0;
                let lo: Vec<i64> = lower.iter().map(|&l| l.max(1)).collect();
                if lo.iter().zip(upper).any(|(l, u)| l > u) {
                    return 0.0;
                }
                let mut x = lo.clone();
                loop {
                    total += self.pmf_unchecked(&x);
                    let mut k = x.len();
                    loop {
                        if k == 0 {
                            return total;
                        }
                        k -= 1;
                        if x[k] < upper[k] {
                            x[k] += 1;
                            break;
                        }
                        x[k] = lo[k];
                    }
                }
            }
        }
    }

    /// Certified error of the stated total mass (nonzero only for laws
    /// whose normalizer is computed numerically).
    pub fn mass_error(&self) -> f64 {
        match &self.family {
            Family::DependentNorm(law) => law.c0_rel_error(),
            _ => 0.0,
        }
    }

    /// Coordinates are independent (the n-step law factorizes).
    pub fn is_product(&self) -> bool {
        matches!(
            self.family,
            Family::IndependentProduct(_) | Family::DeterministicStep(_)
        )
    }
}

impl fmt::Display for LatticeLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::IndependentProduct(ms) => {
                write!(f, "product:")?;
                for (k, m) in ms.iter().enumerate() {
                    if k > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{m}")?;
                }
                Ok(())
            }
            Family::DependentNorm(law) => {
                let betas: Vec<String> = law.betas().iter().map(f64::to_string).collect();
                write!(f, "dependent:beta={};betas={}", law.beta(), betas.join(","))?;
                match law.psi() {
                    SlowlyVarying::Constant { c } if *c == 1.0 => Ok(()),
                    SlowlyVarying::Constant { c } => write!(f, ";psi=const({c})"),
                    SlowlyVarying::LogPower { c, rho } => write!(f, ";psi=logpow({c},{rho})"),
                    SlowlyVarying::Tabulated { .. } => write!(f, ";psi=table"),
                }
            }
            Family::Tabulated { table, .. } => write!(f, "tabulated:{}d-table", table.shape.len()),
            Family::DeterministicStep(v) => {
                let parts: Vec<String> = v.iter().map(i64::to_string).collect();
                write!(f, "deterministic:{}", parts.join(","))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_pmf_factorizes() {
        let law = LatticeLaw::independent(vec![Marginal1d::Pareto { gamma: 0.5 }; 2]).unwrap();
        let f1 = 1.0 - 0.5f64.sqrt();
        assert!((law.pmf(&[1, 1]).unwrap() - f1 * f1).abs() < 1e-16);
        assert!((law.pmf(&[1, 1]).unwrap() - 0.0857864).abs() < 1e-7);
        assert!(law.pmf(&[1]).is_err());
        assert!(law.is_renewal());
    }

    #[test]
    fn deterministic_point_mass() {
        let law = LatticeLaw::deterministic(vec![1, 1]).unwrap();
        assert_eq!(law.pmf(&[1, 1]).unwrap(), 1.0);
        assert_eq!(law.pmf(&[1, 2]).unwrap(), 0.0);
        let law = LatticeLaw::deterministic(vec![3, 1]).unwrap();
        assert_eq!(law.truncated_moments(0, 10.0), (3.0, 9.0));
    }

    #[test]
    fn renewal_tail_at_zero() {
        let law = LatticeLaw::dependent(vec![1.0, 1.0], 3.0, SlowlyVarying::constant(1.0)).unwrap();
        let (up, low) = law.marginal_tail(0, 0.0);
        assert!((up - 1.0).abs() < 1e-12);
        assert_eq!(low, 0.0);
        let (mu, sigma) = law.truncated_moments(1, 1.0);
        assert!((mu - law.marginal_pmf(1, 1)).abs() < 1e-15);
        assert_eq!(mu, sigma);
    }

    #[test]
    fn box_mass_of_products() {
        let law = LatticeLaw::independent(vec![Marginal1d::Uniform { lo: -1, hi: 1 }; 2]).unwrap();
        assert!((law.mass_in_box(&[-1, 0], &[1, 1]) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tabulated_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("law.csv");
        std::fs::write(&path, "x1,x2,p\n0,0,0.25\n1,0,0.25\n0,1,0.5\n").unwrap();
        let law = LatticeLaw::from_csv(&path).unwrap();
        assert_eq!(law.pmf(&[0, 1]).unwrap(), 0.5);
        assert_eq!(law.marginal_pmf(0, 0), 0.75);
        assert_eq!(law.mean(1), Some(0.5));
    }
}
