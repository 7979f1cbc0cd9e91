//! Pinned pseudo-random number generator.
//!
//! Reproducibility across machines and releases requires that the generator
//! algorithm never drifts, so it is implemented here rather than pulled from
//! a crate whose output could change between versions. The generator is
//! xoshiro256** seeded through splitmix64, both taken from the published
//! reference implementations. The golden-vector tests below freeze the
//! output: if they fail, the algorithm changed and every recorded run is
//! invalidated.
//!
//! Independent subsystems draw from separate streams of the same seed so
//! that, for example, adding a draw to the traffic generator does not
//! perturb policy decisions. A stream is selected by a small integer tag.

/// splitmix64, used only to expand a 64-bit seed into generator state.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

/// xoshiro256** with explicit stream separation.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

/// Stream tags. Each independent consumer of randomness gets its own.
pub mod stream {
    pub const TRAFFIC: u64 = 0;
    pub const POLICY: u64 = 1;
}

impl Rng {
    /// Creates the generator for (`seed`, `stream`). The stream tag is
    /// folded into the splitmix64 seed by a golden-ratio multiply so that
    /// nearby tags give unrelated state.
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut sm = SplitMix64::new(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut s = [0u64; 4];
        for w in &mut s {
            *w = sm.next_u64();
        }
        Rng { s }
    }

    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform f64 in [0, 1): the top 53 bits scaled by 2^-53.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in [0, n). Reduction is by modulo; the bias for the
    /// ranges used here (n well below 2^32) is far below measurement noise,
    /// and modulo keeps the draw count fixed at one per call, which stream
    /// reproducibility depends on.
    pub fn next_below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    /// Uniform integer in [lo, hi].
    pub fn next_in(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        lo + self.next_below(hi - lo + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Golden vectors computed from the published reference algorithms by an
    // independent implementation. These freeze the generator: any change to
    // seeding or output scrambling must fail here.
    #[test]
    fn golden_stream_zero() {
        let mut r = Rng::new(0x0123_4567_89AB_CDEF, 0);
        let got: Vec<u64> = (0..6).map(|_| r.next_u64()).collect();
        assert_eq!(
            got,
            vec![
                0xA2C2_A420_38D4_EC3D,
                0x05FC_25D0_738E_7B0F,
                0x625E_7BFF_938E_701E,
                0x1BA4_DDC6_FE2B_5726,
                0xDF0A_2482_AC92_54CF,
                0x3939_EDA8_66AB_ABE8,
            ]
        );
    }

    #[test]
    fn golden_stream_one_differs() {
        let mut r = Rng::new(0x0123_4567_89AB_CDEF, 1);
        let got: Vec<u64> = (0..3).map(|_| r.next_u64()).collect();
        assert_eq!(
            got,
            vec![
                0xC8BA_B3CA_1E5B_1E1F,
                0x188B_E30A_A610_EB7D,
                0xCF06_E1E5_7C97_4F9E,
            ]
        );
    }

    #[test]
    fn golden_seed_zero() {
        let mut r = Rng::new(0, 0);
        assert_eq!(r.next_u64(), 0x99EC_5F36_CB75_F2B4);
        assert_eq!(r.next_u64(), 0xBF6E_1F78_4956_452A);
        assert_eq!(r.next_u64(), 0x1A5F_849D_4933_E6E0);
    }

    #[test]
    fn golden_f64() {
        let mut r = Rng::new(42, 0);
        let got: Vec<f64> = (0..4).map(|_| r.next_f64()).collect();
        let want = [
            0.08386297105988216,
            0.3789802506626686,
            0.6800434110281394,
            0.9246929453253876,
        ];
        for (g, w) in got.iter().zip(want.iter()) {
            assert_eq!(g, w, "f64 mapping must be bit-exact");
        }
    }

    #[test]
    fn golden_ranges() {
        let mut r = Rng::new(42, 0);
        let got: Vec<u64> = (0..10).map(|_| r.next_below(10)).collect();
        assert_eq!(got, vec![2, 2, 9, 3, 6, 4, 4, 7, 8, 5]);

        let mut r = Rng::new(7, 3);
        let got: Vec<u64> = (0..6).map(|_| r.next_in(64, 255)).collect();
        assert_eq!(got, vec![186, 168, 144, 91, 193, 232]);
    }

    #[test]
    fn f64_stays_in_unit_interval() {
        let mut r = Rng::new(0xDEAD_BEEF, 5);
        for _ in 0..10_000 {
            let v = r.next_f64();
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn streams_are_independent_of_draw_order() {
        // Drawing from one stream must not affect another.
        let mut a1 = Rng::new(9, stream::TRAFFIC);
        let mut b1 = Rng::new(9, stream::POLICY);
        let interleaved: Vec<u64> = (0..8)
            .map(|i| {
                if i % 2 == 0 {
                    a1.next_u64()
                } else {
                    b1.next_u64()
                }
            })
            .collect();

        let mut a2 = Rng::new(9, stream::TRAFFIC);
        let mut b2 = Rng::new(9, stream::POLICY);
        let a_only: Vec<u64> = (0..4).map(|_| a2.next_u64()).collect();
        let b_only: Vec<u64> = (0..4).map(|_| b2.next_u64()).collect();

        assert_eq!(
            interleaved.iter().step_by(2).copied().collect::<Vec<_>>(),
            a_only
        );
        assert_eq!(
            interleaved.iter().skip(1).step_by(2).copied().collect::<Vec<_>>(),
            b_only
        );
    }
}
