//! Deterministic random numbers.
//!
//! Every randomized component in the crate (Fourier encodings, weight
//! initialization, phantom layout, measurement noise, power iteration
//! starts) draws from this generator, so a seed pins an entire pipeline
//! bit for bit. The generator is splitmix64; normal deviates come from the
//! Box-Muller transform applied to consecutive uniform pairs, with the
//! second deviate of each pair cached for the next call.

#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            state: seed,
            spare_normal: None,
        }
    }

    /// Next raw 64-bit output of splitmix64.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in [0, 1) with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Standard normal deviate.
    ///
    /// Box-Muller over a consecutive uniform pair (u1, u2): with
    /// r = sqrt(-2 ln(1 - u1)) and phi = 2 pi u2, the call returns
    /// r cos(phi) and caches r sin(phi) for the next call. The 1 - u1
    /// keeps the logarithm finite because u1 is in [0, 1).
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let phi = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * phi.sin());
        r * phi.cos()
    }
}
