use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DVector;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::dictionary::{Dictionary, SparseSolution};
use super::nnls::nnls;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NnompConfig {
    pub max_atoms: usize,
    /// Stop once `‖r‖₂` falls below this.
    pub residual_tol: f64,
    /// Weights above this count as support.
    pub threshold: f64,
}

impl Default for NnompConfig {
    fn default() -> Self {
        NnompConfig {
            max_atoms: 2,
            residual_tol: 1e-6,
            threshold: 1e-4,
        }
    }
}

/// Nonnegative orthogonal matching pursuit: repeatedly add the atom whose
/// normalised correlation with the residual is largest and positive, then
/// refit all selected atoms by NNLS.
///
/// Stopping because no remaining atom correlates positively with the
/// residual leaves `converged == false`.
pub fn nnomp(d: &Dictionary, y: &[f64], cfg: &NnompConfig) -> Result<SparseSolution> {
    if cfg.max_atoms == 0 {
        return Err(Error::Config("max_atoms must be at least 1".into()));
    }
    if !(cfg.residual_tol >= 0.0) {
        return Err(Error::Config(format!("residual_tol must be nonnegative, got {}", cfg.residual_tol)));
    }
    let yv = d.check_signal(y)?;
    let a = d.matrix();
    let norms: Vec<f64> = (0..d.atoms()).map(|j| a.column(j).norm()).collect();
    let mut selected: Vec<usize> = Vec::new();
    let mut coef = vec![0.0; d.atoms()];
    let mut r = yv.clone();
    let mut trace = Vec::new();
    let mut converged = true;
    while selected.len() < cfg.max_atoms.min(d.atoms()) && r.norm() >= cfg.residual_tol {
        let corr = a.tr_mul(&r);
        let rn = r.norm();
        let best = (0..d.atoms())
            .filter(|j| !selected.contains(j))
            .map(|j| (j, corr[j] / norms[j]))
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)));
        match best {
            Some((j, c)) if c > 1e-12 * rn => selected.push(j),
            _ => {
                converged = false;
                break;
            }
        }
        let (w, _) = nnls(&a.select_columns(&selected), &yv)?;
        coef.iter_mut().for_each(|c| *c = 0.0);
        for (&j, &v) in selected.iter().zip(&w) {
            coef[j] = v;
        }
        r = &yv - a * DVector::from_column_slice(&coef);
        trace.push(r.norm());
    }
    if trace.iter().any(|v| !Float::is_finite(*v)) {
        return Err(Error::NonFinite("nnomp residual".into()));
    }
    SparseSolution::finish(d, y, coef, cfg.threshold, selected.len(), converged, trace)
}
