//! Seed discipline: a master seed fans out into per-setup seeds, and each
//! setup seed into named per-purpose streams. Every random draw in the crate
//! goes through a [`StreamRng`] obtained here, so any trial can be replayed
//! from `(seed, purpose, index)` alone.

use num_complex::Complex64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

/// What a random stream is used for. The discriminant feeds the seed mixer,
/// so reordering variants changes every derived stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Setup = 1,
    UeDrop = 2,
    Channels = 3,
    Normalization = 4,
    CommMonteCarlo = 5,
    Symbols = 6,
    Rcs = 7,
    Noise = 8,
    Calibration = 9,
    Detection = 10,
    Reinit = 11,
    Validation = 12,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed, a purpose and an index.
pub fn derive_seed(seed: u64, purpose: Purpose, index: u64) -> u64 {
    let a = splitmix64(seed);
    let b = splitmix64(a ^ (purpose as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    splitmix64(b ^ splitmix64(index.wrapping_add(0x2545_F491_4F6C_DD1D)))
}

/// Opens the stream `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(seed, purpose, index))
}

/// Circularly-symmetric complex Gaussian with unit variance, CN(0, 1).
pub fn complex_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Uniform phase in [0, 2π).
pub fn uniform_phase<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>() * std::f64::consts::TAU
}

pub fn uniform<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}
