use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Smallest admissible mixing weight of a two-component mixture.
pub const MIN_ALPHA: f64 = 0.05;

/// `alpha * s1 + (1 - alpha) * s2`.
pub fn mix_spectra(s1: &[f64], s2: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(MIN_ALPHA..=1.0 - MIN_ALPHA).contains(&alpha) {
        return Err(Error::Config(format!(
            "mixing factor {alpha} outside [{MIN_ALPHA}, {}]",
            1.0 - MIN_ALPHA
        )));
    }
    mix_weighted(&[s1, s2], &[alpha, 1.0 - alpha])
}

/// `sum_i weights[i] * sources[i]` for equal-length sources.
pub fn mix_weighted(sources: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>> {
    let first = sources.first().ok_or_else(|| Error::Empty("mixture of zero sources".into()))?;
    if weights.len() != sources.len() {
        return Err(Error::dim("mix_weighted", &[sources.len()], &[weights.len()]));
    }
    let mut out = alloc::vec![0.0; first.len()];
    for (s, &w) in sources.iter().zip(weights) {
        if s.len() != first.len() {
            return Err(Error::dim("mix_weighted", &[first.len()], &[s.len()]));
        }
        for (o, v) in out.iter_mut().zip(*s) {
            *o += w * v;
        }
    }
    Ok(out)
}

/// Mean of squares.
pub fn mean_power(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>() / v.len().max(1) as f64
}

/// Measured SNR in dB of `signal` against `noise` (mean-square powers).
pub fn measured_snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    10.0 * Float::log10(mean_power(signal) / mean_power(noise))
}

/// The two unit-power noise processes combined by [`synthesize_noise`].
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseComponents {
    /// i.i.d. Gaussian, de-meaned, unit mean-square power.
    pub white: Vec<f64>,
    /// Cumulative sum of i.i.d. Gaussian, de-meaned, unit mean-square power.
    pub brown: Vec<f64>,
}

fn unit_power(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
    let p = mean_power(&v);
    if !(p > 0.0) {
        return Err(Error::Invariant("noise realisation has zero power".into()));
    }
    let s = 1.0 / Float::sqrt(p);
    v.iter_mut().for_each(|x| *x *= s);
    Ok(v)
}

/// Draws the white and brown components for `seed`.
pub fn noise_components(length: usize, seed: u64) -> Result<NoiseComponents> {
    if length < 2 {
        return Err(Error::Config(format!("noise length must be at least 2, got {length}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white: Vec<f64> = (0..length).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut acc = 0.0;
    let brown: Vec<f64> = (0..length)
        .map(|_| {
            let step: f64 = StandardNormal.sample(&mut rng);
            acc += step;
            acc
        })
        .collect();
    Ok(NoiseComponents {
        white: unit_power(white)?,
        brown: unit_power(brown)?,
    })
}

/// Equal-power white plus brown noise, scaled so that
/// `10 log10(P(signal) / P(e)) = snr_db` with `P` the mean-square power.
pub fn synthesize_noise(length: usize, snr_db: f64, signal: &[f64], seed: u64) -> Result<Vec<f64>> {
    if !(snr_db > 0.0 && snr_db < 80.0) {
        return Err(Error::Config(format!("SNR {snr_db} dB outside (0, 80)")));
    }
    if signal.len() != length {
        return Err(Error::dim("synthesize_noise", &[length], &[signal.len()]));
    }
    let ps = mean_power(signal);
    if !(ps > 0.0) {
        return Err(Error::Domain("SNR is undefined for an all-zero signal".into()));
    }
    let c = noise_components(length, seed)?;
    let mut e: Vec<f64> = c
        .white
        .iter()
        .zip(&c.brown)
        .map(|(w, r)| (w + r) / core::f64::consts::SQRT_2)
        .collect();
    let pe = mean_power(&e);
    let scale = Float::sqrt(ps / (pe * Float::powf(10.0, snr_db / 10.0)));
    e.iter_mut().for_each(|x| *x *= scale);
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixing_examples() {
        assert_eq!(mix_spectra(&[1.0, 0.0], &[0.0, 1.0], 0.3).unwrap(), alloc::vec![0.3, 0.7]);
        let s = [0.2, 0.9, 0.4];
        assert_eq!(mix_spectra(&s, &s, 0.5).unwrap(), s.to_vec());
        assert!(mix_spectra(&s, &[1.0], 0.5).is_err());
        assert!(mix_spectra(&s, &s, 0.01).is_err());
    }

    #[test]
    fn noise_hits_target_snr() {
        let signal: alloc::vec::Vec<f64> = (0..300).map(|i| ((i % 17) as f64) / 17.0).collect();
        for seed in 0..20 {
            let e = synthesize_noise(300, 13.7, &signal, seed).unwrap();
            assert!((measured_snr_db(&signal, &e) - 13.7).abs() < 1e-9);
            assert_eq!(e, synthesize_noise(300, 13.7, &signal, seed).unwrap());
        }
        assert!(matches!(synthesize_noise(3, 10.0, &[0.0; 3], 1), Err(Error::Domain(_))));
        assert!(synthesize_noise(3, 90.0, &[1.0; 3], 1).is_err());
    }
}
