use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::lattice::{LatticeBox, LatticeField};
use crate::error::{Error, Result};
use crate::numerics::stats::KahanSum;

/// Convolution algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvMethod {
    Naive,
    Fft,
    /// FFT once the naive operation count exceeds a fixed threshold.
    Auto,
}

const AUTO_THRESHOLD: f64 = 4e6;

fn resolve(method: ConvMethod, f: &LatticeField, nnz_g: usize) -> ConvMethod {
    match method {
        ConvMethod::Auto => {
            if (f.bbox.volume() as f64) * (nnz_g as f64) > AUTO_THRESHOLD {
                ConvMethod::Fft
            } else {
                ConvMethod::Naive
            }
        }
        m => m,
    }
}

/// Law of the sum restricted to `target`; mass landing outside is added
/// to the dropped-mass bound.
pub fn convolve(
    f: &LatticeField,
    g: &LatticeField,
    target: &LatticeBox,
    method: ConvMethod,
) -> Result<LatticeField> {
    StepConvolver::new(g.clone(), target.clone(), method)?.apply(f)
}

struct FftKernel {
    in_shape: Vec<usize>,
    pad: Vec<usize>,
    spectrum: Vec<Complex64>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

/// Repeated convolution with one fixed kernel into one fixed target box.
pub struct StepConvolver {
    step: LatticeField,
    step_total: f64,
    nonzero: Vec<(Vec<i64>, f64)>,
    target: LatticeBox,
    method: ConvMethod,
    kernel: Mutex<Option<Arc<FftKernel>>>,
}

impl StepConvolver {
    pub fn new(step: LatticeField, target: LatticeBox, method: ConvMethod) -> Result<Self> {
        if step.bbox.dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                got: step.bbox.dim(),
            });
        }
        let nonzero = step.support();
        let step_total = step.total();
        Ok(StepConvolver {
            step,
            step_total,
            nonzero,
            target,
            method,
            kernel: Mutex::new(None),
        })
    }

    pub fn target(&self) -> &LatticeBox {
        &self.target
    }

    pub fn step(&self) -> &LatticeField {
        &self.step
    }

    pub fn apply(&self, f: &LatticeField) -> Result<LatticeField> {
        if f.bbox.dim() != self.target.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.target.dim(),
                got: f.bbox.dim(),
            });
        }
        let values = match resolve(self.method, f, self.nonzero.len()) {
            ConvMethod::Fft => self.fft(f)?,
            _ => self.naive(f),
        };
        let mut in_box = KahanSum::default();
        values.iter().for_each(|&v| in_box.add(v));
        let f_total = f.total();
        let out = (f_total * self.step_total - in_box.value()).max(0.0);
        let dropped = out + f.dropped_mass + self.step.dropped_mass * f_total;
        Ok(LatticeField {
            bbox: self.target.clone(),
            values,
            dropped_mass: dropped,
        })
    }

    fn naive(&self, f: &LatticeField) -> Vec<f64> {
        let d = self.target.dim();
        let t_shape = self.target.shape();
        let f_shape = f.bbox.shape();
        let f_lower = f.bbox.lower();
        let t_lower = self.target.lower();
        let slab: usize = t_shape[1..].iter().product();
        let mut out = vec![0.0; self.target.volume()];
        out.par_chunks_mut(slab)
            .enumerate()
            .for_each(|(row, chunk)| {
                let mut y = vec![0i64; d];
                for (off, cell) in chunk.iter_mut().enumerate() {
                    let mut rem = row * slab + off;
                    for k in (0..d).rev() {
                        y[k] = t_lower[k] + (rem % t_shape[k]) as i64;
                        rem /= t_shape[k];
                    }
                    let mut acc = 0.0;
                    'steps: for (s, w) in &self.nonzero {
                        let mut idx = 0usize;
                        for k in 0..d {
                            let z = y[k] - s[k] - f_lower[k];
                            if z < 0 || z as usize >= f_shape[k] {
                                continue 'steps;
                            }
                            idx = idx * f_shape[k] + z as usize;
                        }
                        acc += w * f.values[idx];
                    }
                    *cell = acc;
                }
            });
        out
    }

    fn kernel_for(&self, f: &LatticeField) -> Arc<FftKernel> {
        let in_shape = f.bbox.shape();
        let mut guard = self.kernel.lock().expect("kernel cache");
        if let Some(k) = guard.as_ref() {
            if k.in_shape == in_shape {
                return Arc::clone(k);
            }
        }
        let g_shape = self.step.bbox.shape();
        let pad: Vec<usize> = in_shape
            .iter()
            .zip(&g_shape)
            .map(|(a, b)| (a + b - 1).next_power_of_two())
            .collect();
        let mut planner = FftPlanner::new();
        let forward: Vec<_> = pad.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse: Vec<_> = pad.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        let mut spectrum = embed(&self.step.values, &g_shape, &pad);
        fft_nd(&mut spectrum, &pad, &forward);
        let kernel = Arc::new(FftKernel {
            in_shape,
            pad,
            spectrum,
            forward,
            inverse,
        });
        *guard = Some(Arc::clone(&kernel));
        kernel
    }

    fn fft(&self, f: &LatticeField) -> Result<Vec<f64>> {
        let d = self.target.dim();
        // cells outside the sum of the two supports are exact zeros; keep
        // round-off out of them
        let Some((f_lo, f_hi)) = nonzero_extent(f) else {
            return Ok(vec![0.0; self.target.volume()]);
        };
        let s_lo: Vec<i64> =
            (0..d).map(|k| self.nonzero.iter().map(|(x, _)| x[k]).min().unwrap_or(0)).collect();
        let s_hi: Vec<i64> =
            (0..d).map(|k| self.nonzero.iter().map(|(x, _)| x[k]).max().unwrap_or(0)).collect();
        let sum_lo: Vec<i64> = (0..d).map(|k| f_lo[k] + s_lo[k]).collect();
        let sum_hi: Vec<i64> = (0..d).map(|k| f_hi[k] + s_hi[k]).collect();
        let kernel = self.kernel_for(f);
        let padded: usize = kernel.pad.iter().product();
        if padded > 4 * crate::exact_engine::DEFAULT_VOLUME_CAP {
            return Err(Error::Resource(format!(
                "FFT buffer of {padded} cells exceeds the cap"
            )));
        }
        let mut buf = embed(&f.values, &kernel.in_shape, &kernel.pad);
        fft_nd(&mut buf, &kernel.pad, &kernel.forward);
        buf.par_iter_mut()
            .zip(kernel.spectrum.par_iter())
            .for_each(|(a, b)| *a *= b);
        fft_nd(&mut buf, &kernel.pad, &kernel.inverse);
        let scale = 1.0 / padded as f64;
        // full convolution box starts at f.lower + g.lower
        let origin: Vec<i64> = (0..d)
            .map(|k| f.bbox.lower()[k] + self.step.bbox.lower()[k])
            .collect();
        let full_shape: Vec<usize> = (0..d)
            .map(|k| kernel.in_shape[k] + self.step.bbox.shape()[k] - 1)
            .collect();
        let t_shape = self.target.shape();
        let t_lower = self.target.lower();
        let mut out = vec![0.0; self.target.volume()];
        let slab: usize = t_shape[1..].iter().product();
        out.par_chunks_mut(slab)
            .enumerate()
            .for_each(|(row, chunk)| {
                let mut y = vec![0i64; d];
                for (off, cell) in chunk.iter_mut().enumerate() {
                    let mut rem = row * slab + off;
                    for k in (0..d).rev() {
                        y[k] = t_lower[k] + (rem % t_shape[k]) as i64;
                        rem /= t_shape[k];
                    }
                    let mut idx = 0usize;
                    let mut inside = true;
                    for k in 0..d {
                        let z = y[k] - origin[k];
                        if z < 0
                            || z as usize >= full_shape[k]
                            || y[k] < sum_lo[k]
                            || y[k] > sum_hi[k]
                        {
                            inside = false;
                            break;
                        }
                        idx = idx * kernel.pad[k] + z as usize;
                    }
                    *cell = if inside {
                        (buf[idx].re * scale).max(0.0)
                    } else {
                        0.0
                    };
                }
            });
        Ok(out)
    }
}

/// Per-axis bounds of the nonzero cells of `f`.
fn nonzero_extent(f: &LatticeField) -> Option<(Vec<i64>, Vec<i64>)> {
    let d = f.bbox.dim();
    let mut lo = vec![i64::MAX; d];
    let mut hi = vec![i64::MIN; d];
    let shape = f.bbox.shape();
    let lower = f.bbox.lower();
    let mut idx = vec![0usize; d];
    let mut any = false;
    for &v in &f.values {
        if v != 0.0 {
            any = true;
            for k in 0..d {
                let x = lower[k] + idx[k] as i64;
                lo[k] = lo[k].min(x);
                hi[k] = hi[k].max(x);
            }
        }
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    any.then_some((lo, hi))
}

fn embed(values: &[f64], shape: &[usize], pad: &[usize]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); pad.iter().product()];
    let d = shape.len();
    let mut idx = vec![0usize; d];
    for &v in values {
        let mut flat = 0usize;
        for k in 0..d {
            flat = flat * pad[k] + idx[k];
        }
        out[flat] = Complex64::new(v, 0.0);
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < shape[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// In-place multidimensional FFT, one axis at a time.
fn fft_nd(data: &mut [Complex64], shape: &[usize], plans: &[Arc<dyn Fft<f64>>]) {
    let d = shape.len();
    for axis in 0..d {
        let n = shape[axis];
        let stride: usize = shape[axis + 1..].iter().product();
        let plan = &plans[axis];
        if stride == 1 {
            data.par_chunks_mut(n).for_each(|line| plan.process(line));
            continue;
        }
        data.par_chunks_mut(n * stride).for_each(|block| {
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            for j in 0..stride {
                for m in 0..n {
                    line[m] = block[j + m * stride];
                }
                plan.process(&mut line);
                for m in 0..n {
                    block[j + m * stride] = line[m];
                }
            }
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(lower: Vec<i64>, upper: Vec<i64>, values: Vec<f64>) -> LatticeField {
        LatticeField::from_values(LatticeBox::new(lower, upper).unwrap(), values, 0.0).unwrap()
    }

    #[test]
    fn point_masses_add() {
        let a = LatticeField::point_mass(&[1, 1]).unwrap();
        let b = LatticeField::point_mass(&[2, 3]).unwrap();
        let t = LatticeBox::cube(2, 0, 5).unwrap();
        for m in [ConvMethod::Naive, ConvMethod::Fft] {
            let c = convolve(&a, &b, &t, m).unwrap();
            assert!((c.get(&[3, 4]) - 1.0).abs() < 1e-15);
            assert!((c.total() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn binomial_square() {
        let u = field(vec![0, 0], vec![1, 1], vec![0.25; 4]);
        let t = LatticeBox::cube(2, 0, 2).unwrap();
        let c = convolve(&u, &u, &t, ConvMethod::Naive).unwrap();
        let w = [0.25, 0.5, 0.25];
        for i in 0..3 {
            for j in 0..3 {
                assert!((c.get(&[i, j]) - w[i as usize] * w[j as usize]).abs() < 1e-16);
            }
        }
    }

    #[test]
    fn truncation_books_dropped_mass() {
        let u = field(vec![0], vec![1], vec![0.5, 0.5]);
        let t = LatticeBox::new(vec![0], vec![1]).unwrap();
        let c = convolve(&u, &u, &t, ConvMethod::Naive).unwrap();
        assert!((c.dropped_mass() - 0.25).abs() < 1e-16);
        let c2 = convolve(&c, &u, &t, ConvMethod::Fft).unwrap();
        assert!(c2.dropped_mass() >= c.dropped_mass());
        assert!((c2.total() + c2.dropped_mass() - 1.0).abs() < 1e-15);
    }
}
