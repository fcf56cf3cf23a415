use serde::{Deserialize, Serialize};

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = ctr;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
        let p0 = u64::from(M0) * u64::from(c[0]);
        let p1 = u64::from(M1) * u64::from(c[2]);
        c = [
            ((p1 >> 32) as u32) ^ c[1] ^ k[0],
            p1 as u32,
            ((p0 >> 32) as u32) ^ c[3] ^ k[1],
            p0 as u32,
        ];
    }
    c
}

const LANES: usize = 8;

/// `LANES` Philox evaluations in structure-of-arrays form, written so the
/// compiler can vectorize the rounds across lanes.
#[inline(always)]
fn philox_lanes(mut c: [[u32; LANES]; 4], key: [u32; 2]) -> [[u32; LANES]; 4] {
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
        let mut n = [[0u32; LANES]; 4];
        for l in 0..LANES {
            let p0 = u64::from(M0) * u64::from(c[0][l]);
            let p1 = u64::from(M1) * u64::from(c[2][l]);
            n[0][l] = ((p1 >> 32) as u32) ^ c[1][l] ^ k[0];
            n[1][l] = p1 as u32;
            n[2][l] = ((p0 >> 32) as u32) ^ c[3][l] ^ k[1];
            n[3][l] = p0 as u32;
        }
        c = n;
    }
    c
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
fn philox_lanes_avx2(c: [[u32; LANES]; 4], key: [u32; 2]) -> [[u32; LANES]; 4] {
    philox_lanes(c, key)
}

fn philox_lanes_dispatch(c: [[u32; LANES]; 4], key: [u32; 2]) -> [[u32; LANES]; 4] {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2, checked just above
            return unsafe { philox_lanes_avx2(c, key) };
        }
    }
    philox_lanes(c, key)
}
const BUF: usize = 4 * LANES;

/// Identifies one random stream: a master seed and a stream index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamSpec {
    pub seed: u64,
    pub stream: u64,
}

impl StreamSpec {
    pub const ALGORITHM: &'static str = "philox4x32-10";

    pub fn new(seed: u64, stream: u64) -> Self {
        StreamSpec { seed, stream }
    }

    pub fn rng(&self) -> PhiloxRng {
        PhiloxRng::new(*self)
    }
}

/// Counter-based generator: block `j` of stream `s` under seed `k` is
/// `philox(ctr = (j, s), key = k)`, so output depends only on the spec.
#[derive(Debug, Clone)]
pub struct PhiloxRng {
    key: [u32; 2],
    stream: u64,
    block: u64,
    buf: [u32; BUF],
    used: usize,
}

impl PhiloxRng {
    pub fn new(spec: StreamSpec) -> Self {
        PhiloxRng {
            key: [spec.seed as u32, (spec.seed >> 32) as u32],
            stream: spec.stream,
            block: 0,
            buf: [0; BUF],
            used: BUF,
        }
    }

    #[inline(never)]
    fn refill(&mut self) {
        let mut ctr = [[0u32; LANES]; 4];
        for l in 0..LANES {
            let b = self.block + l as u64;
            ctr[0][l] = b as u32;
            ctr[1][l] = (b >> 32) as u32;
            ctr[2][l] = self.stream as u32;
            ctr[3][l] = (self.stream >> 32) as u32;
        }
        let out = philox_lanes_dispatch(ctr, self.key);
        for l in 0..LANES {
            for w in 0..4 {
                self.buf[4 * l + w] = out[w][l];
            }
        }
        self.block += LANES as u64;
        self.used = 0;
    }

    #[inline]
    pub fn next_u32(&mut self) -> u32 {
        if self.used == BUF {
            self.refill();
        }
        let v = self.buf[self.used];
        self.used += 1;
        v
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        (u64::from(self.next_u32()) << 32) | u64::from(self.next_u32())
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `{0, ..., n-1}` (Lemire's multiply-shift with rejection).
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        if n <= u64::from(u32::MAX) {
            let n32 = n as u32;
            let mut m = u64::from(self.next_u32()) * u64::from(n32);
            if (m as u32) < n32 {
                let threshold = n32.wrapping_neg() % n32;
                while (m as u32) < threshold {
                    m = u64::from(self.next_u32()) * u64::from(n32);
                }
            }
            return m >> 32;
        }
        let mut m = u128::from(self.next_u64()) * u128::from(n);
        if (m as u64) < n {
            let threshold = n.wrapping_neg() % n;
            while (m as u64) < threshold {
                m = u128::from(self.next_u64()) * u128::from(n);
            }
        }
        (m >> 64) as u64
    }
}
