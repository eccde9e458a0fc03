use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use num_traits::Float;

use crate::{Error, Result};

/// Metrics for one (estimate, target) pair after permutation resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceScore {
    pub si_snr: f64,
    pub si_snri: f64,
    pub sid: f64,
    pub sad: f64,
    pub rmse: f64,
}

/// Per-sample scores; the top-level metric fields are means over sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: u64,
    /// `permutation[i]` is the estimate matched to target `i`.
    pub permutation: Vec<usize>,
    pub sources: Vec<SourceScore>,
    pub si_snr: f64,
    pub si_snri: f64,
    pub sid: f64,
    pub sad: f64,
    pub rmse: f64,
}

impl SampleScore {
    pub fn new(id: u64, permutation: Vec<usize>, sources: Vec<SourceScore>) -> Self {
        let n = sources.len().max(1) as f64;
        let mean = |f: fn(&SourceScore) -> f64| sources.iter().map(f).sum::<f64>() / n;
        SampleScore {
            id,
            si_snr: mean(|s| s.si_snr),
            si_snri: mean(|s| s.si_snri),
            sid: mean(|s| s.sid),
            sad: mean(|s| s.sad),
            rmse: mean(|s| s.rmse),
            permutation,
            sources,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("aggregate of zero samples".into()));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = Float::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n);
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            0.5 * (sorted[mid - 1] + sorted[mid])
        };
        Ok(Aggregate { mean, median, std })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricAggregates {
    pub si_snr: Aggregate,
    pub si_snri: Aggregate,
    pub sid: Aggregate,
    pub sad: Aggregate,
    pub rmse: Aggregate,
}

/// Scores of one method over a set of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub method: String,
    pub count: usize,
    pub aggregates: MetricAggregates,
    /// Fraction of samples whose identified support misses a true component
    /// (dictionary baselines only).
    pub support_error_rate: Option<f64>,
    /// Fraction of samples on which an iterative solver met its stopping
    /// rule (dictionary baselines only).
    pub converged_fraction: Option<f64>,
    pub samples: Vec<SampleScore>,
}

impl ScoreReport {
    pub fn new(method: impl Into<String>, samples: Vec<SampleScore>, support_error_rate: Option<f64>) -> Result<Self> {
        let col = |f: fn(&SampleScore) -> f64| samples.iter().map(f).collect::<Vec<f64>>();
        let aggregates = MetricAggregates {
            si_snr: Aggregate::of(&col(|s| s.si_snr))?,
            si_snri: Aggregate::of(&col(|s| s.si_snri))?,
            sid: Aggregate::of(&col(|s| s.sid))?,
            sad: Aggregate::of(&col(|s| s.sad))?,
            rmse: Aggregate::of(&col(|s| s.rmse))?,
        };
        Ok(ScoreReport {
            method: method.into(),
            count: samples.len(),
            aggregates,
            support_error_rate,
            converged_fraction: None,
            samples,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_median_and_std() {
        let a = Aggregate::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(a.mean, 2.5);
        assert_eq!(a.median, 2.5);
        assert!((a.std - 1.25f64.sqrt()).abs() < 1e-15);
        assert_eq!(Aggregate::of(&[3.0, 1.0, 2.0]).unwrap().median, 2.0);
        assert!(Aggregate::of(&[]).is_err());
    }
}
