//! Separation-quality and spectral-shape metrics.
//!
//! All functions take plain slices and compute in `f64`. Shape metrics
//! (SID, SAD, RMSE) are meant to be applied to max-normalised spectra; use
//! [`score_sample`] to get the full permutation-resolved set.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::{Error, Result};

mod report;

pub use report::{Aggregate, MetricAggregates, SampleScore, ScoreReport, SourceScore};

/// Upper (and, symmetrically, lower) bound on reported SI-SNR values in dB.
pub const SI_SNR_CAP_DB: f64 = 80.0;

/// Clamp floor applied before normalising spectra to probability vectors.
pub const SID_EPS: f64 = 1e-9;

const DB_PER_NEPER: f64 = 10.0 / core::f64::consts::LN_10;

fn check_len(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim(op, &[a.len()], &[b.len()]));
    }
    if a.is_empty() {
        return Err(Error::Empty(format!("{op} of zero-length vectors")));
    }
    Ok(())
}

fn demean(v: &[f64]) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - m).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scale-invariant signal-to-noise ratio of `est` against `reference`, in dB.
///
/// Both vectors are zero-meaned, `est` is projected onto `reference`, and the
/// ratio of projected to residual power is reported. Values are clamped to
/// `[-SI_SNR_CAP_DB, SI_SNR_CAP_DB]`; a residual below `1e-12` of the target
/// power reads as the cap.
pub fn si_snr(est: &[f64], reference: &[f64]) -> Result<f64> {
    Ok(si_snr_with_grad(est, reference, false)?.0)
}

/// [`si_snr`] together with its gradient with respect to `est` when `grad`
/// is set. The gradient is zero wherever the value is clamped.
pub fn si_snr_with_grad(est: &[f64], reference: &[f64], grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
    check_len("si_snr", est, reference)?;
    let e = demean(est);
    let r = demean(reference);
    let rr = dot(&r, &r);
    if !(rr > 0.0) || !rr.is_finite() {
        return Err(Error::Domain("SI-SNR reference has zero power after mean removal".into()));
    }
    let alpha = dot(&e, &r) / rr;
    let target: Vec<f64> = r.iter().map(|x| alpha * x).collect();
    let noise: Vec<f64> = e.iter().zip(&target).map(|(x, t)| x - t).collect();
    let p = dot(&target, &target);
    let q = dot(&noise, &noise);
    if !p.is_finite() || !q.is_finite() {
        return Err(Error::NonFinite("SI-SNR estimate".into()));
    }
    let clamped = |v: f64| (v, grad.then(|| vec![0.0; est.len()]));
    if q <= 1e-12 * p && p > 0.0 {
        return Ok(clamped(SI_SNR_CAP_DB));
    }
    if p == 0.0 {
        return Ok(clamped(-SI_SNR_CAP_DB));
    }
    let value = DB_PER_NEPER * Float::ln(p / q);
    if value >= SI_SNR_CAP_DB {
        return Ok(clamped(SI_SNR_CAP_DB));
    }
    if value <= -SI_SNR_CAP_DB {
        return Ok(clamped(-SI_SNR_CAP_DB));
    }
    let g = grad.then(|| {
        target
            .iter()
            .zip(&noise)
            .map(|(t, n)| DB_PER_NEPER * (2.0 * t / p - 2.0 * n / q))
            .collect()
    });
    Ok((value, g))
}

/// SI-SNR gain of `est` over the unprocessed `mixture`.
pub fn si_snr_improvement(est: &[f64], reference: &[f64], mixture: &[f64]) -> Result<f64> {
    Ok(si_snr(est, reference)? - si_snr(mixture, reference)?)
}

/// Spectral information divergence (symmetric KL, natural log) after
/// clamping to [`SID_EPS`] and normalising each vector to unit sum.
pub fn sid(est: &[f64], reference: &[f64]) -> Result<f64> {
    check_len("sid", est, reference)?;
    let prob = |v: &[f64]| {
        let c: Vec<f64> = v.iter().map(|x| x.max(SID_EPS)).collect();
        let s: f64 = c.iter().sum();
        c.into_iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let (p, q) = (prob(est), prob(reference));
    let d = p.iter().zip(&q).map(|(a, b)| (a - b) * Float::ln(a / b)).sum::<f64>();
    Ok(d.max(0.0))
}

/// Spectral angle in radians, `arccos` of the cosine similarity.
///
/// Evaluated as `2 atan2(|a - b|, |a + b|)` on the unit vectors, which
/// equals the arccos form but stays accurate near 0 and pi, where arccos
/// turns rounding in the cosine into an error of order 1e-8.
pub fn sad(est: &[f64], reference: &[f64]) -> Result<f64> {
    check_len("sad", est, reference)?;
    let (na, nb) = (Float::sqrt(dot(est, est)), Float::sqrt(dot(reference, reference)));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Domain("spectral angle of a zero vector".into()));
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in est.iter().zip(reference) {
        let (u, v) = (a / na, b / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    Ok(2.0 * Float::atan2(Float::sqrt(diff), Float::sqrt(sum)))
}

pub fn rmse(est: &[f64], reference: &[f64]) -> Result<f64> {
    check_len("rmse", est, reference)?;
    let ms = est.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / est.len() as f64;
    Ok(Float::sqrt(ms))
}

/// Divides by the entry of largest magnitude (keeping its sign), so the
/// dominant peak becomes `+1`. All-zero input is returned unchanged.
pub fn max_normalized(v: &[f64]) -> Vec<f64> {
    let peak = v.iter().copied().fold(0.0f64, |m, x| if Float::abs(x) > Float::abs(m) { x } else { m });
    if peak == 0.0 {
        return v.to_vec();
    }
    v.iter().map(|x| x / peak).collect()
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    loop {
        out.push(current.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| current[j] > current[i - 1]).expect("pivot has a successor");
        current.swap(i - 1, j);
        current[i..].reverse();
    }
}

/// Permutation `perm` maximising the mean of `SI-SNR(estimates[perm[i]], targets[i])`,
/// with that mean. Ties keep the lexicographically first permutation.
pub fn best_permutation(estimates: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    if estimates.len() != targets.len() || targets.is_empty() {
        return Err(Error::dim("best_permutation", &[estimates.len()], &[targets.len()]));
    }
    let c = targets.len();
    let mut table = vec![0.0; c * c];
    for (j, e) in estimates.iter().enumerate() {
        for (i, t) in targets.iter().enumerate() {
            table[j * c + i] = si_snr(e, t)?;
        }
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for perm in permutations(c) {
        let mean = perm.iter().enumerate().map(|(i, &j)| table[j * c + i]).sum::<f64>() / c as f64;
        if best.as_ref().is_none_or(|(_, b)| mean > *b) {
            best = Some((perm, mean));
        }
    }
    Ok(best.expect("at least one permutation"))
}

/// Scores one separated sample: the permutation is chosen by SI-SNR and then
/// reused for every other metric. Shape metrics use max-normalised spectra;
/// a zero estimate has SAD `pi / 2`.
pub fn score_sample(id: u64, estimates: &[Vec<f64>], targets: &[Vec<f64>], mixture: &[f64]) -> Result<SampleScore> {
    let (perm, _) = best_permutation(estimates, targets)?;
    let mix_norm_snr: Vec<f64> = targets.iter().map(|t| si_snr(mixture, t)).collect::<Result<_>>()?;
    let mut sources = Vec::with_capacity(targets.len());
    for (i, t) in targets.iter().enumerate() {
        let e = &estimates[perm[i]];
        let value = si_snr(e, t)?;
        let (en, tn) = (max_normalized(e), max_normalized(t));
        let angle = if en.iter().all(|&x| x == 0.0) {
            core::f64::consts::FRAC_PI_2
        } else {
            sad(&en, &tn)?
        };
        sources.push(SourceScore {
            si_snr: value,
            si_snri: value - mix_norm_snr[i],
            sid: sid(&en, &tn)?,
            sad: angle,
            rmse: rmse(&en, &tn)?,
        });
    }
    Ok(SampleScore::new(id, perm, sources))
}
