use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{max_normalize, Spectrum};
use crate::{Error, Result};

/// Library matrix `L x P` whose columns are max-normalised, nonnegative
/// spectra.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: DMatrix<f64>,
    ids: Vec<String>,
}

impl Dictionary {
    /// Checks every column: equal length, finite, nonnegative, maximum 1.
    pub fn new(columns: &[Vec<f64>], ids: Vec<String>) -> Result<Self> {
        let p = columns.len();
        if p == 0 {
            return Err(Error::Empty("dictionary".into()));
        }
        if ids.len() != p {
            return Err(Error::dim("dictionary ids", &[ids.len()], &[p]));
        }
        let l = columns[0].len();
        for (j, c) in columns.iter().enumerate() {
            if c.len() != l {
                return Err(Error::dim("dictionary atom", &[c.len()], &[l]));
            }
            if c.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Domain(format!("atom {} has negative or non-finite entries", ids[j])));
            }
            let max = c.iter().copied().fold(0.0, f64::max);
            if (max - 1.0).abs() > 1e-9 {
                return Err(Error::Domain(format!("atom {} has maximum {max}, expected 1", ids[j])));
            }
        }
        let atoms = DMatrix::from_fn(l, p, |i, j| columns[j][i]);
        Ok(Dictionary { atoms, ids })
    }

    /// Max-normalises each spectrum and uses its id as the atom id.
    pub fn from_spectra(spectra: &[Spectrum]) -> Result<Self> {
        let mut cols = Vec::with_capacity(spectra.len());
        for s in spectra {
            cols.push(max_normalize(&s.values)?);
        }
        Self::new(&cols, spectra.iter().map(|s| s.id.clone()).collect())
    }

    /// Spectrum length `L`.
    pub fn len(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.nrows() == 0
    }

    /// Atom count `P`.
    pub fn atoms(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.atoms
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn atom(&self, j: usize) -> Vec<f64> {
        self.atoms.column(j).iter().copied().collect()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    pub(crate) fn check_signal(&self, y: &[f64]) -> Result<DVector<f64>> {
        if y.len() != self.len() {
            return Err(Error::dim("dictionary signal", &[y.len()], &[self.len()]));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("signal".into()));
        }
        Ok(DVector::from_column_slice(y))
    }

    /// `D x`.
    pub fn synthesize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.atoms() {
            return Err(Error::dim("synthesize", &[x.len()], &[self.atoms()]));
        }
        Ok((&self.atoms * DVector::from_column_slice(x)).iter().copied().collect())
    }
}

/// Output of a dictionary solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSolution {
    /// Nonnegative weight per atom.
    pub coefficients: Vec<f64>,
    /// Atoms whose weight exceeds the solver's threshold, ascending.
    pub support: Vec<usize>,
    /// `‖D x − y‖₂`.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Per-iteration progress: the SUnSAL objective at `z`, or the NNOMP
    /// residual norm after each accepted atom.
    pub objective_trace: Vec<f64>,
}

impl SparseSolution {
    pub(crate) fn finish(d: &Dictionary, y: &[f64], coefficients: Vec<f64>, threshold: f64, iterations: usize, converged: bool, objective_trace: Vec<f64>) -> Result<Self> {
        let fit = d.synthesize(&coefficients)?;
        let residual_norm = fit.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let support = coefficients
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > threshold)
            .map(|(i, _)| i)
            .collect();
        Ok(SparseSolution {
            coefficients,
            support,
            residual_norm: num_traits::Float::sqrt(residual_norm),
            iterations,
            converged,
            objective_trace,
        })
    }

    /// The `count` support atoms with the largest weights, strongest first.
    pub fn top(&self, count: usize) -> Vec<usize> {
        let mut s = self.support.clone();
        s.sort_by(|&a, &b| self.coefficients[b].total_cmp(&self.coefficients[a]).then(a.cmp(&b)));
        s.truncate(count);
        s
    }
}

/// Per-atom contributions `coefficient_i * atom_i` of a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub atoms: Vec<usize>,
    pub spectra: Vec<Vec<f64>>,
}

impl Components {
    /// Element-wise sum of all components.
    pub fn total(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for s in &self.spectra {
            for (o, v) in out.iter_mut().zip(s) {
                *o += v;
            }
        }
        out
    }
}

/// Scaled atoms of the solution's support, in support order.
pub fn reconstruct(d: &Dictionary, sol: &SparseSolution) -> Result<Components> {
    if sol.coefficients.len() != d.atoms() {
        return Err(Error::dim("reconstruct", &[sol.coefficients.len()], &[d.atoms()]));
    }
    let spectra = sol
        .support
        .iter()
        .map(|&j| d.atoms.column(j).iter().map(|v| v * sol.coefficients[j]).collect())
        .collect();
    Ok(Components {
        atoms: sol.support.clone(),
        spectra,
    })
}
