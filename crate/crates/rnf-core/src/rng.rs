//! Seeded, checkpointable pseudo-randomness.
//!
//! The generator is xoshiro256++ seeded through splitmix64. It is small
//! enough to serialize into checkpoints (four words) and is implemented here
//! rather than pulled from a crate so that sample streams are guaranteed
//! bit-stable across platforms and dependency upgrades, which the
//! reproducibility contract of this project relies on.
//!
//! Samplers:
//! - `normal`: Marsaglia polar method (the paired value is discarded so the
//!   generator state stays exactly four words),
//! - `gamma`: Marsaglia–Tsang squeeze method, with the `shape < 1` boost,
//! - `student_t`: a standard normal divided by `sqrt(chi_sq(nu) / nu)`,
//!   where `chi_sq(nu) = 2 * gamma(nu / 2)`.

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng64 {
    s: [u64; 4],
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn rotl(x: u64, k: u32) -> u64 {
    x.rotate_left(k)
}

impl Rng64 {
    /// Expand a 64-bit seed into a full generator state.
    pub fn seed_from(seed: u64) -> Self {
        let mut sm = seed;
        let mut s = [0u64; 4];
        for slot in &mut s {
            *slot = splitmix64(&mut sm);
        }
        if s == [0, 0, 0, 0] {
            s[0] = 0x9E37_79B9_7F4A_7C15;
        }
        Rng64 { s }
    }

    /// Independent stream `stream` of a base seed. Streams with different
    /// ids are decorrelated by the splitmix avalanche.
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut sm = stream.wrapping_mul(0xD134_2543_DE82_EF95);
        Self::seed_from(seed ^ splitmix64(&mut sm))
    }

    pub fn state(&self) -> [u64; 4] {
        self.s
    }

    pub fn from_state(s: [u64; 4]) -> Self {
        Rng64 { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = rotl(self.s[0].wrapping_add(self.s[3]), 23).wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = rotl(self.s[3], 45);
        result
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal via the polar method.
    pub fn normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * libm::sqrt(-2.0 * libm::log(s) / s);
            }
        }
    }

    /// Gamma(shape, 1) for `shape > 0`.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        debug_assert!(shape > 0.0);
        if shape < 1.0 {
            // Boost: Gamma(a) = Gamma(a + 1) * U^{1/a}.
            let g = self.gamma(shape + 1.0);
            let u = loop {
                let u = self.uniform();
                if u > 0.0 {
                    break u;
                }
            };
            return g * libm::pow(u, 1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / libm::sqrt(9.0 * d);
        loop {
            let x = self.normal();
            let t = 1.0 + c * x;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            let u = self.uniform();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 {
                return d * v;
            }
            if u > 0.0 && libm::log(u) < 0.5 * x2 + d * (1.0 - v + libm::log(v)) {
                return d * v;
            }
        }
    }

    /// Standard student-t with `dof` degrees of freedom.
    pub fn student_t(&mut self, dof: f64) -> f64 {
        debug_assert!(dof > 0.0);
        let z = self.normal();
        let chi_sq = 2.0 * self.gamma(0.5 * dof);
        z / libm::sqrt(chi_sq / dof)
    }
}
