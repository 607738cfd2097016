//! Small shared helpers: seed derivation and complex serde representations.

use num_complex::Complex64;

/// Derives an independent seed for sub-stream `stream` of `base`.
///
/// splitmix64 finalizer over the combined words; cheap, stateless, and
/// stable across platforms, so concurrent consumers (grid points, noise
/// vs. symbol draws) get reproducible, uncorrelated streams.
pub(crate) fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Serde adapter: `Complex64` as a `[re, im]` pair.
pub mod complex_pair {
    use super::*;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        [v.re, v.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(Complex64::new(re, im))
    }
}

pub(crate) fn pairs_from_complex(vals: &[Complex64]) -> Vec<[f64; 2]> {
    vals.iter().map(|v| [v.re, v.im]).collect()
}

pub(crate) fn complex_from_pairs(pairs: &[[f64; 2]]) -> Vec<Complex64> {
    pairs.iter().map(|&[re, im]| Complex64::new(re, im)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_across_streams() {
        let a = derive_seed(42, 0);
        let b = derive_seed(42, 1);
        let c = derive_seed(43, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        // stable values: these are frozen so a refactor that silently changes
        // every downstream RNG stream shows up here first
        assert_eq!(derive_seed(0, 0), 16294208416658607535);
    }
}
