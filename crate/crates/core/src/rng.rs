//! Seeded generators and simplex sampling.

use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::simplex::ProbVec;

pub type SeededRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream seed from a base seed and a stream index.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform (Dirichlet(1)) draw on the simplex of dimension `dim`.
pub fn sample_simplex<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> ProbVec {
    assert!(dim >= 2, "simplex dimension must be at least 2");
    loop {
        let draws: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            let values = draws.into_iter().map(|d| d / total).collect();
            if let Ok(p) = ProbVec::new(values) {
                return p;
            }
        }
    }
}
