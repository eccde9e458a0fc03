//! Scoring dictionary solvers on mixture samples.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{nnomp, reconstruct, Dictionary, NnompConfig, SparseSolution, SunsalConfig, SunsalSolver};
use crate::data::MixtureSample;
use crate::metrics::{score_sample, SampleScore, ScoreReport};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum Baseline {
    Sunsal(SunsalConfig),
    Nnomp(NnompConfig),
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::Sunsal(_) => "sunsal",
            Baseline::Nnomp(_) => "nnomp",
        }
    }
}

/// Result of unmixing one sample with a dictionary solver.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub solution: SparseSolution,
    /// Atoms taken as the identified sources: the `C` strongest support
    /// atoms.
    pub selected: Vec<usize>,
    /// One estimate per source, strongest first; zero when fewer than `C`
    /// atoms were selected.
    pub estimates: Vec<Vec<f64>>,
}

/// `true` when some true atom is not among `selected`.
pub fn misses_support(selected: &[usize], truth: &[usize]) -> bool {
    truth.iter().any(|t| !selected.contains(t))
}

fn outcome(d: &Dictionary, solution: SparseSolution, sources: usize) -> Result<BaselineOutcome> {
    let selected = solution.top(sources);
    let comps = reconstruct(d, &solution)?;
    let mut estimates = vec![vec![0.0; d.len()]; sources];
    for (slot, atom) in estimates.iter_mut().zip(&selected) {
        let k = comps.atoms.iter().position(|a| a == atom).expect("selected atoms are in the support");
        slot.clone_from(&comps.spectra[k]);
    }
    Ok(BaselineOutcome {
        solution,
        selected,
        estimates,
    })
}

/// Runs one solver over `samples`. `truth[i]` lists the dictionary
/// positions of sample `i`'s sources.
pub fn evaluate_baseline(d: &Dictionary, samples: &[MixtureSample], truth: &[Vec<usize>], method: &Baseline) -> Result<(ScoreReport, Vec<BaselineOutcome>)> {
    if samples.len() != truth.len() {
        return Err(Error::dim("evaluate_baseline", &[samples.len()], &[truth.len()]));
    }
    let solver = match method {
        Baseline::Sunsal(cfg) => Some(SunsalSolver::new(d, *cfg)?),
        Baseline::Nnomp(_) => None,
    };
    let mut scores: Vec<SampleScore> = Vec::with_capacity(samples.len());
    let mut outcomes = Vec::with_capacity(samples.len());
    let mut misses = 0usize;
    let mut converged = 0usize;
    for (s, t) in samples.iter().zip(truth) {
        let c = s.sources.len();
        let sol = match (method, &solver) {
            (Baseline::Sunsal(_), Some(solver)) => solver.solve(&s.mixed)?,
            (Baseline::Nnomp(cfg), _) => nnomp(d, &s.mixed, cfg)?,
            _ => unreachable!("solver built for SUnSAL"),
        };
        converged += sol.converged as usize;
        let o = outcome(d, sol, c)?;
        if misses_support(&o.selected, t) {
            misses += 1;
        }
        scores.push(score_sample(s.index, &o.estimates, &s.sources, &s.mixed)?);
        outcomes.push(o);
    }
    let n = samples.len().max(1) as f64;
    let name: String = method.name().into();
    let mut report = ScoreReport::new(name, scores, Some(misses as f64 / n))?;
    report.converged_fraction = Some(converged as f64 / n);
    Ok((report, outcomes))
}
