use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, Tensor, Var};
use crate::{Error, Result};

/// Settings for [`grad_check_many`].
#[derive(Debug, Clone, Copy)]
pub struct GradCheckOptions {
    /// Central-difference half step; must lie in `[1e-6, 1e-4]`.
    pub step: f64,
    /// Coordinates probed per input tensor; larger tensors are subsampled.
    pub max_coords: usize,
    /// Denominator floor of the relative error, so that gradients which are
    /// zero analytically do not turn rounding noise into large ratios. Below
    /// the floor the check is effectively absolute: with the default 1e-4, a
    /// zero gradient passes a 1e-4 bound when the difference quotient is
    /// under 1e-8, well above the ~1e-11 rounding noise of central
    /// differences at `step = 1e-5`.
    pub floor: f64,
    /// Seed of the coordinate subsampling.
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            max_coords: usize::MAX,
            floor: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(input, coordinate)` at which `max_rel_error` occurred.
    pub worst: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub probes: usize,
}

/// Checks the gradient of a scalar `f` at `point` by central differences.
/// Returns the maximum relative error over all coordinates.
pub fn grad_check<F>(f: F, point: &Tensor<f64>, step: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let opts = GradCheckOptions {
        step,
        ..GradCheckOptions::default()
    };
    let report = grad_check_many(|g, vars| f(g, vars[0]), core::slice::from_ref(point), &opts)?;
    Ok(report.max_rel_error)
}

/// Multi-input form of [`grad_check`]: `f` receives one leaf per entry of
/// `points` and must return a scalar.
pub fn grad_check_many<F>(f: F, points: &[Tensor<f64>], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    if !(1e-6..=1e-4).contains(&opts.step) {
        return Err(Error::Config(format!(
            "finite-difference step {} outside [1e-6, 1e-4]",
            opts.step
        )));
    }
    let eval = |pts: &[Tensor<f64>]| -> Result<(Graph<f64>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars: Vec<Var> = pts.iter().map(|p| g.param(p.clone())).collect();
        let loss = f(&mut g, &vars)?;
        if g.value(loss).len() != 1 {
            return Err(Error::Contract("gradient check needs a scalar function".into()));
        }
        Ok((g, vars, loss))
    };
    let (g, vars, loss) = eval(points)?;
    let grads = g.backward(loss)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work: Vec<Tensor<f64>> = points.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        analytic: 0.0,
        numeric: 0.0,
        probes: 0,
    };
    for (t, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("leaf requires grad").to_vec();
        let n = analytic.len();
        let coords: Vec<usize> = if n <= opts.max_coords {
            (0..n).collect()
        } else {
            let mut c = rand::seq::index::sample(&mut rng, n, opts.max_coords).into_vec();
            c.sort_unstable();
            c
        };
        for i in coords {
            let original = work[t].data()[i];
            let probe = |delta: f64, work: &mut Vec<Tensor<f64>>| -> Result<f64> {
                work[t].data_mut()[i] = original + delta;
                let (pg, _, l) = eval(work)?;
                let v = pg.value(l)[0];
                if !v.is_finite() {
                    return Err(Error::Probe { index: i });
                }
                Ok(v)
            };
            let plus = probe(opts.step, &mut work);
            let minus = probe(-opts.step, &mut work);
            work[t].data_mut()[i] = original;
            let numeric = (plus? - minus?) / (2.0 * opts.step);
            let a = analytic[i];
            let rel = Float::abs(a - numeric) / Float::abs(a).max(Float::abs(numeric)).max(opts.floor);
            report.probes += 1;
            if rel > report.max_rel_error || !rel.is_finite() {
                report.max_rel_error = rel;
                report.worst = (t, i);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
