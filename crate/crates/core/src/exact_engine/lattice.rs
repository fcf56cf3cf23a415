use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::stats::KahanSum;
use crate::tail_models::{Family, LatticeLaw};

/// Default cap on the number of cells in a box.
pub const DEFAULT_VOLUME_CAP: usize = 1 << 26;

/// Axis-aligned box `[lower, upper]` in `Z^d` (both corners inclusive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    lower: Vec<i64>,
    upper: Vec<i64>,
}

impl LatticeBox {
    pub fn new(lower: Vec<i64>, upper: Vec<i64>) -> Result<Self> {
        Self::with_cap(lower, upper, DEFAULT_VOLUME_CAP)
    }

    pub fn with_cap(lower: Vec<i64>, upper: Vec<i64>, cap: usize) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(invalid("box needs at least one axis"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(invalid(format!("empty box {lower:?}..{upper:?}")));
        }
        let mut volume: u128 = 1;
        for (l, u) in lower.iter().zip(&upper) {
            volume = volume.saturating_mul((*u as i128 - *l as i128 + 1) as u128);
        }
        if volume > cap as u128 {
            return Err(Error::Resource(format!(
                "box {lower:?}..{upper:?} has {volume} cells, cap is {cap}"
            )));
        }
        Ok(LatticeBox { lower, upper })
    }

    /// `[lo, hi]^d`.
    pub fn cube(d: usize, lo: i64, hi: i64) -> Result<Self> {
        Self::new(vec![lo; d], vec![hi; d])
    }

    pub fn lower(&self) -> &[i64] {
        &self.lower
    }

    pub fn upper(&self) -> &[i64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l + 1) as usize)
            .collect()
    }

    pub fn volume(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn contains(&self, x: &[i64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| l <= v && v <= u)
    }

    /// Row-major flat index of `x`.
    pub fn index(&self, x: &[i64]) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let mut idx = 0usize;
        for (k, &v) in x.iter().enumerate() {
            idx = idx * (self.upper[k] - self.lower[k] + 1) as usize + (v - self.lower[k]) as usize;
        }
        Some(idx)
    }

    pub fn point(&self, mut idx: usize) -> Vec<i64> {
        let shape = self.shape();
        let mut x = vec![0i64; self.dim()];
        for k in (0..self.dim()).rev() {
            x[k] = self.lower[k] + (idx % shape[k]) as i64;
            idx /= shape[k];
        }
        x
    }
}

/// Nonnegative values on a box plus a certified bound on the mass that
/// fell outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    pub(crate) bbox: LatticeBox,
    pub(crate) values: Vec<f64>,
    pub(crate) dropped_mass: f64,
}

impl LatticeField {
    pub fn zeros(bbox: LatticeBox) -> Self {
        let n = bbox.volume();
        LatticeField {
            bbox,
            values: vec![0.0; n],
            dropped_mass: 0.0,
        }
    }

    pub fn from_values(bbox: LatticeBox, values: Vec<f64>, dropped_mass: f64) -> Result<Self> {
        if values.len() != bbox.volume() {
            return Err(Error::DimensionMismatch {
                expected: bbox.volume(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) || !(dropped_mass >= 0.0) {
            return Err(invalid(
                "field values and dropped mass must be finite and nonnegative",
            ));
        }
        Ok(LatticeField {
            bbox,
            values,
            dropped_mass,
        })
    }

    /// Unit mass at `x`, on the one-cell box around it.
    pub fn point_mass(x: &[i64]) -> Result<Self> {
        let bbox = LatticeBox::new(x.to_vec(), x.to_vec())?;
        Ok(LatticeField {
            bbox,
            values: vec![1.0],
            dropped_mass: 0.0,
        })
    }

    /// Law of one step restricted to `bbox`.
    pub fn one_step(law: &LatticeLaw, bbox: &LatticeBox) -> Result<Self> {
        if bbox.dim() != law.dim() {
            return Err(Error::DimensionMismatch {
                expected: law.dim(),
                got: bbox.dim(),
            });
        }
        if let Family::IndependentProduct(_) = law.family() {
            let axes: Vec<(Vec<f64>, f64)> = (0..law.dim())
                .map(|i| marginal_step(law, i, bbox.lower()[i], bbox.upper()[i], None))
                .collect();
            let mut values = vec![1.0; bbox.volume()];
            let shape = bbox.shape();
            let mut stride = bbox.volume();
            for (k, (axis, _)) in axes.iter().enumerate() {
                stride /= shape[k];
                for (j, v) in values.iter_mut().enumerate() {
                    *v *= axis[(j / stride) % shape[k]];
                }
            }
            let dropped = -axes
                .iter()
                .map(|(_, d)| (-d.min(1.0)).ln_1p())
                .sum::<f64>()
                .exp_m1();
            return Ok(LatticeField {
                bbox: bbox.clone(),
                values,
                dropped_mass: dropped.max(0.0),
            });
        }
        let mut values = vec![0.0; bbox.volume()];
        let mut total = KahanSum::default();
        match law.family() {
            Family::Tabulated { table, .. } => {
                for (x, p) in table.cells() {
                    if let Some(j) = bbox.index(&x) {
                        values[j] = p;
                        total.add(p);
                    }
                }
            }
            Family::DeterministicStep(v) => {
                if let Some(j) = bbox.index(v) {
                    values[j] = 1.0;
                    total.add(1.0);
                }
            }
            _ => {
                let lower: Vec<i64> = (0..law.dim())
                    .map(|i| bbox.lower()[i].max(law.marginal_support(i).0))
                    .collect();
                for (j, v) in values.iter_mut().enumerate() {
                    let x = bbox.point(j);
                    if x.iter().zip(&lower).all(|(a, b)| a >= b) {
                        *v = law.pmf_unchecked(&x);
                        total.add(*v);
                    }
                }
            }
        }
        let dropped = (1.0 - total.value()).max(0.0) + law.mass_error();
        Ok(LatticeField {
            bbox: bbox.clone(),
            values,
            dropped_mass: dropped,
        })
    }

    pub fn bbox(&self) -> &LatticeBox {
        &self.bbox
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dropped_mass(&self) -> f64 {
        self.dropped_mass
    }

    /// Value at `x`; zero outside the box.
    pub fn get(&self, x: &[i64]) -> f64 {
        self.bbox.index(x).map_or(0.0, |j| self.values[j])
    }

    pub fn total(&self) -> f64 {
        let mut s = KahanSum::default();
        self.values.iter().for_each(|&v| s.add(v));
        s.value()
    }

    /// Nonzero cells as `(point, value)`.
    pub fn support(&self) -> Vec<(Vec<i64>, f64)> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(j, &v)| (self.bbox.point(j), v))
            .collect()
    }

    /// Binary dump: `u64 d`, `i64 lower[d]`, `i64 upper[d]`, then the
    /// row-major values as little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.bbox.dim() as u64).to_le_bytes())?;
        for v in self.bbox.lower().iter().chain(self.bbox.upper()) {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a dump written by [`write_binary`](Self::write_binary). The
    /// dropped mass is not stored and reads back as zero.
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let d = u64::from_le_bytes(word) as usize;
        if d == 0 || d > 16 {
            return Err(Error::Parse(format!(
                "field dump has implausible dimension {d}"
            )));
        }
        let mut corners = Vec::with_capacity(2 * d);
        for _ in 0..2 * d {
            r.read_exact(&mut word)?;
            corners.push(i64::from_le_bytes(word));
        }
        let bbox = LatticeBox::new(corners[..d].to_vec(), corners[d..].to_vec())?;
        let mut values = Vec::with_capacity(bbox.volume());
        for _ in 0..bbox.volume() {
            r.read_exact(&mut word)?;
            values.push(f64::from_le_bytes(word));
        }
        LatticeField::from_values(bbox, values, 0.0)
    }

    /// CSV with columns `x1..xd,p`, one row per cell.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = (1..=self.bbox.dim()).map(|k| format!("x{k}")).collect();
        writeln!(w, "{},p", header.join(","))?;
        for (j, v) in self.values.iter().enumerate() {
            let x: Vec<String> = self.bbox.point(j).iter().map(|c| c.to_string()).collect();
            writeln!(w, "{},{:e}", x.join(","), v)?;
        }
        Ok(())
    }
}

/// Marginal pmf of coordinate `i` on `[lo, hi]`, optionally restricted to
/// steps `<= cap`. Returns the values and the mass outside `[lo, hi]` that
/// the cap does not exclude.
pub(crate) fn marginal_step(
    law: &LatticeLaw,
    i: usize,
    lo: i64,
    hi: i64,
    cap: Option<i64>,
) -> (Vec<f64>, f64) {
    let (smin, smax) = law.marginal_support(i);
    let top = cap.map_or(hi, |c| c.min(hi));
    let values: Vec<f64> = (lo..=hi)
        .map(|k| {
            if k >= smin && k <= smax && k <= top {
                law.marginal_pmf(i, k)
            } else {
                0.0
            }
        })
        .collect();
    // mass strictly above `hi` that survives the cap
    let above = match cap {
        Some(c) if c <= hi => 0.0,
        Some(c) => (law.marginal_tail(i, hi as f64).0 - law.marginal_tail(i, c as f64).0).max(0.0),
        None => law.marginal_tail(i, hi as f64).0,
    };
    // mass strictly below `lo`
    let below = if lo <= smin {
        0.0
    } else if lo <= 1 {
        law.marginal_tail(i, (1 - lo) as f64).1
    } else {
        let inside: f64 = values.iter().sum();
        (1.0 - inside - above).max(0.0)
    };
    (values, above + below)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tail_models::Marginal1d;

    #[test]
    fn box_indexing_round_trips() {
        let b = LatticeBox::new(vec![-2, 3], vec![1, 5]).unwrap();
        assert_eq!(b.volume(), 12);
        for j in 0..b.volume() {
            assert_eq!(b.index(&b.point(j)), Some(j));
        }
        assert!(b.index(&[2, 3]).is_none());
        assert!(LatticeBox::new(vec![0], vec![-1]).is_err());
        assert!(matches!(
            LatticeBox::cube(2, 0, 1 << 14),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn product_step_field_mass() {
        let law = LatticeLaw::independent(vec![Marginal1d::Pareto { gamma: 0.5 }; 2]).unwrap();
        let b = LatticeBox::cube(2, 0, 63).unwrap();
        let f = LatticeField::one_step(&law, &b).unwrap();
        let inside = (1.0 - 64f64.powf(-0.5)).powi(2);
        assert!((f.total() - inside).abs() < 1e-14);
        assert!((f.total() + f.dropped_mass() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn binary_dump_round_trip() {
        let law = LatticeLaw::independent(vec![Marginal1d::Uniform { lo: -1, hi: 1 }; 2]).unwrap();
        let f = LatticeField::one_step(&law, &LatticeBox::cube(2, -2, 2).unwrap()).unwrap();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 32 + 25 * 8);
        let g = LatticeField::read_binary(buf.as_slice()).unwrap();
        assert_eq!(g.values(), f.values());
        assert_eq!(g.bbox(), f.bbox());
    }
}
