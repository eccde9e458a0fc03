use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::dictionary::{Dictionary, SparseSolution};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SunsalConfig {
    /// ℓ1 weight λ.
    pub lambda: f64,
    /// ADMM penalty μ; `None` uses `‖D‖₂²`, the curvature of the data
    /// term, which keeps the objective at `z` from increasing between
    /// iterations.
    pub mu: Option<f64>,
    pub max_iter: usize,
    /// Bound on both the primal residual `‖x − z‖` and the dual residual
    /// `μ‖z − z_prev‖`.
    pub tol: f64,
    /// Weights above this count as support.
    pub threshold: f64,
    /// Adds the constraint `Σx = 1` to the x-update.
    pub sum_to_one: bool,
}

impl Default for SunsalConfig {
    fn default() -> Self {
        SunsalConfig {
            lambda: 1e-3,
            mu: None,
            max_iter: 1000,
            tol: 1e-6,
            threshold: 1e-4,
            sum_to_one: false,
        }
    }
}

impl SunsalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0 && mu.is_finite()) {
                return Err(Error::Config(format!("mu must be positive, got {mu}")));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// `½‖Dx − y‖² + λ‖x‖₁`.
pub fn sunsal_objective(d: &Dictionary, y: &[f64], x: &[f64], lambda: f64) -> Result<f64> {
    let fit = d.synthesize(x)?;
    let r: f64 = fit.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(0.5 * r + lambda * x.iter().map(|v| v.abs()).sum::<f64>())
}

/// Factorisation of `DᵀD + μI`. With fewer rows than atoms the smaller
/// `μI + DDᵀ` is factored and applied through the Woodbury identity.
enum Factor {
    Direct(Cholesky<f64, Dyn>),
    Woodbury(Cholesky<f64, Dyn>),
}

/// ADMM solver with the x-update system factored once per dictionary.
pub struct SunsalSolver<'a> {
    d: &'a Dictionary,
    cfg: SunsalConfig,
    mu: f64,
    factor: Factor,
    /// `B⁻¹1` and `1ᵀB⁻¹1` for the sum-to-one projection.
    ones: Option<(DVector<f64>, f64)>,
}

impl<'a> SunsalSolver<'a> {
    pub fn new(d: &'a Dictionary, cfg: SunsalConfig) -> Result<Self> {
        cfg.validate()?;
        let a = d.matrix();
        let (l, p) = a.shape();
        let singular = || Error::Invariant("ADMM system matrix is not positive definite".into());
        // the smaller Gram matrix shares its nonzero spectrum with the larger
        let gram = if l < p { a * a.transpose() } else { a.tr_mul(a) };
        let mu = match cfg.mu {
            Some(mu) => mu,
            None => gram.clone().symmetric_eigenvalues().max().max(f64::MIN_POSITIVE),
        };
        let n = gram.nrows();
        let chol = Cholesky::new(gram + DMatrix::identity(n, n) * mu).ok_or_else(singular)?;
        let factor = if l < p { Factor::Woodbury(chol) } else { Factor::Direct(chol) };
        let mut s = SunsalSolver {
            d,
            cfg,
            mu,
            factor,
            ones: None,
        };
        if cfg.sum_to_one {
            let v = s.apply_inverse(&DVector::from_element(p, 1.0));
            let t = v.sum();
            s.ones = Some((v, t));
        }
        Ok(s)
    }

    fn apply_inverse(&self, w: &DVector<f64>) -> DVector<f64> {
        match &self.factor {
            Factor::Direct(c) => c.solve(w),
            Factor::Woodbury(c) => {
                let a = self.d.matrix();
                let t = c.solve(&(a * w));
                (w - a.tr_mul(&t)) / self.mu
            }
        }
    }

    /// The penalty in use.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn solve(&self, y: &[f64]) -> Result<SparseSolution> {
        let cfg = &self.cfg;
        let mu = self.mu;
        let yv = self.d.check_signal(y)?;
        let a = self.d.matrix();
        let p = self.d.atoms();
        let dty = a.tr_mul(&yv);
        let shrink = cfg.lambda / mu;
        let mut z = DVector::zeros(p);
        let mut u = DVector::zeros(p);
        let mut trace = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        for _ in 0..cfg.max_iter {
            iterations += 1;
            let w = &dty + (&z - &u) * mu;
            let mut x = self.apply_inverse(&w);
            if let Some((v, t)) = &self.ones {
                x -= v * ((x.sum() - 1.0) / t);
            }
            let z_prev = core::mem::replace(&mut z, (&x + &u).map(|v| (v - shrink).max(0.0)));
            u += &x - &z;
            let zs: Vec<f64> = z.iter().copied().collect();
            trace.push(sunsal_objective(self.d, y, &zs, cfg.lambda)?);
            let primal = (&x - &z).norm();
            let dual = mu * (&z - &z_prev).norm();
            if !primal.is_finite() || !dual.is_finite() {
                return Err(Error::NonFinite("ADMM iterate".into()));
            }
            if primal < cfg.tol && dual < cfg.tol {
                converged = true;
                break;
            }
        }
        SparseSolution::finish(self.d, y, z.iter().copied().collect(), cfg.threshold, iterations, converged, trace)
    }
}

/// SUnSAL: `min ½‖Dx − y‖² + λ‖x‖₁` subject to `x ≥ 0` by ADMM with the
/// split `x = z`. The returned weights are the feasible iterate `z`.
pub fn sunsal(d: &Dictionary, y: &[f64], cfg: &SunsalConfig) -> Result<SparseSolution> {
    SunsalSolver::new(d, *cfg)?.solve(y)
}
