use alloc::vec::Vec;

use crate::autograd::{Graph, Real, Var};
use crate::metrics::best_permutation;
use crate::{Error, Result};

/// `-max_pi mean_i SI-SNR(est[pi(i)], target[i])` for plain vectors, with
/// the maximizing assignment.
pub fn pit_loss_value(estimates: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(f64, Vec<usize>)> {
    let (perm, mean) = best_permutation(estimates, targets)?;
    Ok((-mean, perm))
}

/// PIT loss over a batch `est, targets: [B, C, L]`, averaged over the batch.
///
/// The assignment is chosen per sample on the forward values and then held
/// fixed, so the gradient is that of the selected permutation.
pub fn pit_si_snr_loss<T: Real>(g: &mut Graph<T>, est: Var, targets: Var) -> Result<(Var, Vec<Vec<usize>>)> {
    let shape = g.shape(est).to_vec();
    if shape.len() != 3 || g.shape(targets) != shape.as_slice() {
        return Err(Error::dim("pit_si_snr_loss", &shape, g.shape(targets)));
    }
    let (b, c, l) = (shape[0], shape[1], shape[2]);
    let rows = |v: &[T]| -> Vec<Vec<f64>> { v.chunks(l).map(|r| r.iter().map(|x| x.as_f64()).collect()).collect() };
    let e = rows(g.value(est));
    let t = rows(g.value(targets));
    let mut perms = Vec::with_capacity(b);
    let mut order = Vec::with_capacity(b * c);
    for i in 0..b {
        let (perm, _) = best_permutation(&e[i * c..(i + 1) * c], &t[i * c..(i + 1) * c])?;
        order.extend(perm.iter().map(|&p| i * c + p));
        perms.push(perm);
    }
    let flat = g.reshape(est, &[b * c, l])?;
    let picked = g.gather_rows(flat, &order)?;
    let tflat = g.reshape(targets, &[b * c, l])?;
    let snr = g.si_snr(picked, tflat)?;
    let mean = g.mean(snr);
    Ok((g.scale(mean, T::from_f64_lossy(-1.0)), perms))
}
