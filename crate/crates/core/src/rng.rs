//! Counter-based random numbers.
//!
//! Every draw in the engine is a pure function of `(key, counter)` through the
//! Philox4x64-10 block cipher (Salmon et al., "Parallel random numbers: as easy
//! as 1, 2, 3"). A stream is identified by a 128-bit key built from a user seed
//! and a domain tag; the 256-bit counter addresses individual blocks within it.
//! Nothing carries mutable generator state between rows, so output does not
//! depend on how work is split across threads.

const MUL0: u64 = 0xD2E7_470E_E14C_6C93;
const MUL1: u64 = 0xCA5A_8263_9512_1157;
const WEYL0: u64 = 0x9E37_79B9_7F4A_7C15;
const WEYL1: u64 = 0xBB67_AE85_84CA_A73B;
const ROUNDS: usize = 10;

#[inline(always)]
fn mulhilo(a: u64, b: u64) -> (u64, u64) {
    let p = (a as u128) * (b as u128);
    ((p >> 64) as u64, p as u64)
}

/// Philox4x64 with 10 rounds.
#[inline]
pub fn philox4x64(counter: [u64; 4], key: [u64; 2]) -> [u64; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..ROUNDS {
        if round > 0 {
            k[0] = k[0].wrapping_add(WEYL0);
            k[1] = k[1].wrapping_add(WEYL1);
        }
        let (hi0, lo0) = mulhilo(MUL0, c[0]);
        let (hi1, lo1) = mulhilo(MUL1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Stream domains. Keeping them distinct guarantees that, say, the dataset
/// drawn for replicate 3 never shares bits with bootstrap resample 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Simulate = 0x5349_4d55,
    Bootstrap = 0x424f_4f54,
    Study = 0x5354_5544,
}

/// A keyed stream of Philox blocks.
#[derive(Debug, Clone, Copy)]
pub struct Stream {
    key: [u64; 2],
}

impl Stream {
    pub fn new(seed: u64, domain: Domain) -> Self {
        Stream {
            key: [seed, domain as u64],
        }
    }

    #[inline]
    pub fn block(&self, counter: [u64; 4]) -> [u64; 4] {
        philox4x64(counter, self.key)
    }
}

/// Derive a child seed from `(seed, a, b)`; used to key per-cell and
/// per-replicate substreams in studies.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    Stream::new(seed, Domain::Study).block([a, b, 0, 0])[0]
}

/// Uniform double on [0, 1) from the top 53 bits.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer on [0, n) by 128-bit multiply-high. The bias is below
/// n / 2^64, far under anything a simulation can resolve.
#[inline]
pub fn below(bits: u64, n: usize) -> usize {
    ((bits as u128 * n as u128) >> 64) as usize
}
