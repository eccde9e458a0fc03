//! Seeded Raman-like library generator.
//!
//! Each spectrum is a sum of Lorentzian bands on a flat baseline. Spectra are
//! organised in families: members of one family share band positions up to a
//! small jitter, the way polymorphs or solid-solution members of one mineral
//! group do in reference libraries. Families make the library coherent, which
//! is what trips dictionary methods up under noise.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{max_normalize, Spectrum};
use crate::{derive_seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthLibraryConfig {
    pub families: usize,
    pub members: usize,
    pub length: usize,
    /// Inclusive range of band counts per family.
    pub bands: [usize; 2],
    /// Largest band-position jitter between family members, in samples.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for SynthLibraryConfig {
    fn default() -> Self {
        SynthLibraryConfig {
            families: 50,
            members: 20,
            length: 256,
            bands: [4, 12],
            jitter: 2.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Band {
    center: f64,
    half_width: f64,
    height: f64,
}

fn render(bands: &[Band], length: usize) -> Vec<f64> {
    (0..length)
        .map(|i| {
            let x = i as f64;
            bands
                .iter()
                .map(|b| {
                    let d = (x - b.center) / b.half_width;
                    b.height / (1.0 + d * d)
                })
                .sum()
        })
        .collect()
}

/// Library id of member `m` of family `f`.
pub fn synth_id(family: usize, member: usize) -> alloc::string::String {
    format!("fam{family:03}-m{member:02}")
}

/// Generates `families * members` max-normalised spectra, family-major.
pub fn synth_library(config: &SynthLibraryConfig) -> Result<Vec<Spectrum>> {
    let [lo, hi] = config.bands;
    if config.families == 0 || config.members == 0 || lo == 0 || lo > hi || config.length < 16 {
        return Err(Error::Config(format!("invalid synthetic library settings {config:?}")));
    }
    let len = config.length as f64;
    let mut out = Vec::with_capacity(config.families * config.members);
    for f in 0..config.families {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, f as u64, 0x5EED));
        let count = rng.random_range(lo..=hi);
        let mut base: Vec<Band> = (0..count)
            .map(|_| Band {
                center: rng.random_range(0.03 * len..0.97 * len),
                half_width: rng.random_range(0.004 * len..0.02 * len).max(1.0),
                height: rng.random_range(0.1..1.0),
            })
            .collect();
        base[0].height = 1.0;
        for m in 0..config.members {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, f as u64, 0x1000 + m as u64));
            let mut bands: Vec<Band> = base
                .iter()
                .map(|b| Band {
                    center: b.center + rng.random_range(-config.jitter..=config.jitter),
                    half_width: b.half_width * rng.random_range(0.85..1.15),
                    height: b.height * rng.random_range(0.7..1.3),
                })
                .collect();
            if rng.random_bool(0.3) {
                bands.push(Band {
                    center: rng.random_range(0.03 * len..0.97 * len),
                    half_width: rng.random_range(0.004 * len..0.02 * len).max(1.0),
                    height: rng.random_range(0.05..0.3),
                });
            }
            let baseline = rng.random_range(0.0..0.02);
            let values: Vec<f64> = render(&bands, config.length).into_iter().map(|v| v + baseline).collect();
            out.push(Spectrum::new(synth_id(f, m), "synthetic", max_normalize(&values)?)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn library_is_normalised_and_reproducible() {
        let cfg = SynthLibraryConfig {
            families: 3,
            members: 4,
            length: 128,
            ..SynthLibraryConfig::default()
        };
        let a = synth_library(&cfg).unwrap();
        assert_eq!(a.len(), 12);
        for s in &a {
            assert_eq!(s.len(), 128);
            assert_eq!(s.values.iter().copied().fold(0.0, f64::max), 1.0);
            assert!(s.values.iter().all(|&v| v >= 0.0));
        }
        assert_eq!(a, synth_library(&cfg).unwrap());
        assert_eq!(a[5].id, "fam001-m01");
    }
}
