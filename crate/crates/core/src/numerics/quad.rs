//! Adaptive Gauss-Kronrod (7/15) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of a quadrature: value and an estimate of the absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Quad {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kron * h;
    let error = ((kron - gauss) * h).abs();
    Quad {
        value,
        error: error.max(50.0 * f64::EPSILON * value.abs()),
    }
}

struct Segment {
    a: f64,
    b: f64,
    q: Quad,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.q.error == other.q.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.q.error.total_cmp(&other.q.error)
    }
}

/// Globally adaptive integration of `f` over `[a, b]`.
///
/// Stops once the summed error estimate is below `max(abs_tol, rel_tol*|I|)`
/// or after `max_segments` bisections; the returned error is then honest
/// but possibly above tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Quad {
    integrate_limited(&f, a, b, abs_tol, rel_tol, 2000)
}

pub fn integrate_limited<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> Quad {
    if a == b {
        return Quad {
            value: 0.0,
            error: 0.0,
        };
    }
    let first = gk15(f, a, b);
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, q: first });
    let mut count = 1;
    while error > abs_tol.max(rel_tol * value.abs()) && count < max_segments {
        let Some(seg) = heap.pop() else { break };
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            heap.push(seg);
            break;
        }
        let left = gk15(f, seg.a, mid);
        let right = gk15(f, mid, seg.b);
        value += left.value + right.value - seg.q.value;
        error += left.error + right.error - seg.q.error;
        heap.push(Segment {
            a: seg.a,
            b: mid,
            q: left,
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            q: right,
        });
        count += 1;
    }
    // Re-add from scratch to shed accumulated cancellation.
    let (mut v, mut e) = (0.0, 0.0);
    for s in heap.iter() {
        v += s.q.value;
        e += s.q.error;
    }
    Quad { value: v, error: e }
}

/// Integrates over consecutive panels `[p_k, p_{k+1}]`, splitting the
/// absolute tolerance evenly.
pub fn integrate_panels<F: Fn(f64) -> f64>(
    f: F,
    panels: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Quad {
    let n = panels.len().saturating_sub(1).max(1) as f64;
    let mut out = Quad {
        value: 0.0,
        error: 0.0,
    };
    for w in panels.windows(2) {
        let q = integrate_limited(&f, w[0], w[1], abs_tol / n, rel_tol, 400);
        out.value += q.value;
        out.error += q.error;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let q = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-14, 0.0);
        assert!((q.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity() {
        // integral of x^{-1/2} over [0,1] is 2
        let q = integrate(
            |x: f64| if x > 0.0 { x.powf(-0.5) } else { 0.0 },
            0.0,
            1.0,
            1e-10,
            0.0,
        );
        assert!((q.value - 2.0).abs() < 1e-8, "{q:?}");
    }

    #[test]
    fn gaussian_panels() {
        let panels: Vec<f64> = (-10..=10).map(f64::from).collect();
        let q = integrate_panels(|x: f64| (-x * x / 2.0).exp(), &panels, 1e-13, 0.0);
        assert!((q.value - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }
}
