use approx::assert_abs_diff_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rssnet_core::autograd::nn::{multi_head_attention, AttentionVars};
use rssnet_core::autograd::{grad_check, grad_check_many, GradCheckOptions, Graph, Tensor, Var};
use rssnet_core::Error;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape, data.to_vec()).unwrap()
}

/// Weighted sum `sum(w * x)` with fixed pseudo-random weights, so every
/// output coordinate gets a distinct cotangent.
fn probe_loss(g: &mut Graph<f64>, y: Var) -> rssnet_core::Result<Var> {
    let n = g.value(y).len();
    let shape = g.shape(y).to_vec();
    let w: Vec<f64> = (0..n).map(|i| ((i * 7919) % 97) as f64 / 97.0 - 0.4).collect();
    let w = g.constant(Tensor::new(&shape, w).unwrap());
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

const PRIM_TOL: f64 = 1e-4;

fn check1(f: impl Fn(&mut Graph<f64>, Var) -> rssnet_core::Result<Var>, x: &Tensor<f64>) -> f64 {
    grad_check(|g, v| { let y = f(g, v)?; probe_loss(g, y) }, x, 1e-5).unwrap()
}

#[test]
fn conv1d_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(t(&[1, 3], &[1.0, 2.0, 3.0]));
    let id = g.constant(t(&[1, 1, 3], &[0.0, 1.0, 0.0]));
    let ones = g.constant(t(&[1, 1, 3], &[1.0, 1.0, 1.0]));
    let a = g.conv1d(x, id, None, 1, 1, 1).unwrap();
    let b = g.conv1d(x, ones, None, 1, 1, 1).unwrap();
    assert_eq!(g.value(a), &[1.0, 2.0, 3.0]);
    assert_eq!(g.value(b), &[3.0, 6.0, 5.0]);

    let x = g.constant(Tensor::zeros(&[1, 1024]));
    let w = g.constant(Tensor::zeros(&[256, 1, 3]));
    let y = g.conv1d(x, w, None, 1, 1, 1).unwrap();
    assert_eq!(g.shape(y), &[256, 1024]);
}

#[test]
fn conv1d_shape_errors_name_both_shapes() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(Tensor::zeros(&[2, 5]));
    let w = g.constant(Tensor::zeros(&[4, 3, 3]));
    match g.conv1d(x, w, None, 1, 1, 1) {
        Err(Error::Dimension { left, right, .. }) => {
            assert_eq!(left, vec![2, 5]);
            assert_eq!(right, vec![4, 3, 3]);
        }
        other => panic!("expected dimension error, got {other:?}"),
    }
}

#[test]
fn conv_transpose_examples() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(t(&[1, 3], &[1.0, 0.0, 0.0]));
    let w = g.constant(t(&[1, 1, 3], &[1.0, 2.0, 3.0]));
    let y = g.conv_transpose1d(x, w, 1, 0).unwrap();
    assert_eq!(&g.value(y)[..3], &[1.0, 2.0, 3.0]);
    assert_eq!(g.shape(y), &[1, 5]);

    let h = g.constant(Tensor::zeros(&[256, 1024]));
    let w = g.constant(Tensor::zeros(&[256, 1, 3]));
    let s = g.conv_transpose1d(h, w, 1, 1).unwrap();
    assert_eq!(g.shape(s), &[1, 1024]);
}

/// Independent direct-summation reference for strided, padded convolution.
#[allow(clippy::too_many_arguments)]
fn conv_reference(x: &[f64], w: &[f64], c_in: usize, len: usize, c_out: usize, k: usize, stride: usize, pad: usize) -> Vec<f64> {
    let len_out = (len + 2 * pad - k) / stride + 1;
    let mut y = vec![0.0; c_out * len_out];
    for o in 0..c_out {
        for t in 0..len_out {
            for c in 0..c_in {
                for j in 0..k {
                    let p = (t * stride + j) as isize - pad as isize;
                    if p >= 0 && (p as usize) < len {
                        y[o * len_out + t] += w[(o * c_in + c) * k + j] * x[c * len + p as usize];
                    }
                }
            }
        }
    }
    y
}

#[test]
fn conv1d_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..30 {
        let c_in = rng.random_range(1..5);
        let c_out = rng.random_range(1..5);
        let k = rng.random_range(1..6);
        let stride = rng.random_range(1..4);
        let pad = rng.random_range(0..3);
        let len = rng.random_range(k.max(2)..20);
        let x = random(&mut rng, &[c_in, len]);
        let w = random(&mut rng, &[c_out, c_in, k]);
        let mut g = Graph::<f64>::new();
        let (xv, wv) = (g.constant(x.clone()), g.constant(w.clone()));
        let y = g.conv1d(xv, wv, None, stride, pad, 1).unwrap();
        let want = conv_reference(x.data(), w.data(), c_in, len, c_out, k, stride, pad);
        for (a, b) in g.value(y).iter().zip(&want) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }
}

#[test]
fn conv_and_transpose_are_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&mut rng, &[4, 16]);
    let w = random(&mut rng, &[3, 4, 3]);
    let mut g = Graph::<f64>::new();
    let (a, wv) = (g.constant(x), g.constant(w));
    let ca = g.conv1d(a, wv, None, 1, 1, 1).unwrap();
    let b = g.constant(random(&mut rng, g.shape(ca).to_vec().as_slice()));
    // a conv kernel [C_out, C_in, k] read as a transpose kernel maps C_out -> C_in
    let tb = g.conv_transpose1d(b, wv, 1, 1).unwrap();
    let lhs: f64 = g.value(ca).iter().zip(g.value(b)).map(|(p, q)| p * q).sum();
    let rhs: f64 = g.value(a).iter().zip(g.value(tb)).map(|(p, q)| p * q).sum();
    assert!((lhs - rhs).abs() <= 1e-5 * lhs.abs().max(rhs.abs()));
}

#[test]
fn gln_statistics() {
    let mut g = Graph::<f64>::new();
    let gain = g.constant(Tensor::filled(&[2], 1.0));
    let bias = g.constant(Tensor::zeros(&[2]));
    let c = g.constant(Tensor::filled(&[2, 3], 4.0));
    let y = g.global_layer_norm(c, gain, bias, 1e-8).unwrap();
    assert!(g.value(y).iter().all(|&v| v == 0.0));

    let x = g.constant(t(&[2, 2], &[1.0, 3.0, 5.0, 7.0]));
    let y = g.global_layer_norm(x, gain, bias, 1e-8).unwrap();
    // mean 4, variance 5
    let s = (5.0f64 + 1e-8).sqrt();
    for (v, want) in g.value(y).iter().zip([-3.0 / s, -1.0 / s, 1.0 / s, 3.0 / s]) {
        assert_abs_diff_eq!(*v, want, epsilon = 1e-12);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gain = g.constant(Tensor::filled(&[256], 1.0));
    let bias = g.constant(Tensor::zeros(&[256]));
    let x = g.constant(random(&mut rng, &[256, 128]));
    let y = g.global_layer_norm(x, gain, bias, 1e-8).unwrap();
    let v = g.value(y);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / v.len() as f64;
    assert!(mean.abs() < 1e-6 && (var - 1.0).abs() < 1e-4);
    assert!(g.global_layer_norm(x, gain, bias, 0.0).is_err());
}

#[test]
fn prelu_examples() {
    let mut g = Graph::<f64>::new();
    let slope = g.param(t(&[1], &[0.25]));
    let x = g.constant(t(&[3], &[2.0, 0.0, 5.0]));
    let y = g.prelu(x, slope).unwrap();
    assert_eq!(g.value(y), &[2.0, 0.0, 5.0]);
    let x = g.constant(t(&[1], &[-4.0]));
    let y = g.prelu(x, slope).unwrap();
    assert_eq!(g.value(y), &[-1.0]);
    let l = g.sum(y);
    let grads = g.backward(l).unwrap();
    assert_abs_diff_eq!(grads.get(slope).unwrap()[0], -4.0);
    let err = grad_check(
        |g, s| {
            let x = g.constant(t(&[1], &[-4.0]));
            let y = g.prelu(x, s)?;
            Ok(g.sum(y))
        },
        &t(&[1], &[0.25]),
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-8);
}

#[test]
fn backward_linear_and_quadratic() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x0 = random(&mut rng, &[3, 4]);
    let mut g = Graph::<f64>::new();
    let x = g.param(x0.clone());
    let s = g.sum(x);
    assert!(g.backward(s).unwrap().get(x).unwrap().iter().all(|&v| v == 1.0));
    let sq = g.mul(x, x).unwrap();
    let q = g.sum(sq);
    let grads = g.backward(q).unwrap();
    for (gv, xv) in grads.get(x).unwrap().iter().zip(x0.data()) {
        assert_eq!(*gv, 2.0 * xv);
    }
    assert!(matches!(g.backward(sq), Err(Error::Contract(_))));
    // an unrelated leaf gets a zero gradient
    let other = g.param(Tensor::filled(&[2], 1.0));
    let grads = g.backward(q).unwrap();
    assert_eq!(grads.get(other).unwrap(), &[0.0, 0.0]);
}

#[test]
fn grad_check_of_sum_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let err = grad_check(|g, x| Ok(g.sum(x)), &random(&mut rng, &[5, 3]), 1e-5).unwrap();
    assert!(err < 1e-9, "{err}");
    assert!(grad_check(|g, x| Ok(g.sum(x)), &random(&mut rng, &[2]), 1e-2).is_err());
}

#[test]
fn softmax_rows_are_normalised() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut g = Graph::<f64>::new();
    let x = g.constant(random(&mut rng, &[8, 64]));
    let x = g.scale(x, 20.0);
    let y = g.softmax(x);
    for row in g.value(y).chunks(64) {
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

fn attention_params(g: &mut Graph<f64>, rng: &mut ChaCha8Rng, d_in: usize, d_model: usize) -> (Vec<Var>, AttentionVars) {
    let shapes = [
        vec![d_model, d_in],
        vec![d_model],
        vec![d_model, d_in],
        vec![d_model],
        vec![d_model, d_in],
        vec![d_model],
        vec![d_in, d_model],
        vec![d_in],
    ];
    let vars: Vec<Var> = shapes.iter().map(|s| g.param(random(rng, s))).collect();
    let a = AttentionVars {
        wq: vars[0],
        bq: vars[1],
        wk: vars[2],
        bk: vars[3],
        wv: vars[4],
        bv: vars[5],
        wo: vars[6],
        bo: vars[7],
    };
    (vars, a)
}

#[test]
fn attention_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut g = Graph::<f64>::new();
    let x = g.constant(random(&mut rng, &[1, 8, 64]));
    let (_, a) = attention_params(&mut g, &mut rng, 64, 64);
    let (y, attn) = multi_head_attention(&mut g, x, &a, 8).unwrap();
    assert_eq!(g.shape(y), &[1, 8, 64]);
    assert_eq!(g.shape(attn), &[8, 8, 8]);
    for row in g.value(attn).chunks(8) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
    assert!(matches!(multi_head_attention(&mut g, x, &a, 5), Err(Error::Config(_))));
}

#[test]
fn attention_over_one_position_is_the_value_projection() {
    let mut g = Graph::<f64>::new();
    let d = 4;
    let eye: Vec<f64> = (0..d * d).map(|i| if i % (d + 1) == 0 { 1.0 } else { 0.0 }).collect();
    let id = g.constant(t(&[d, d], &eye));
    let zero = g.constant(Tensor::zeros(&[d]));
    let a = AttentionVars { wq: id, bq: zero, wk: id, bk: zero, wv: id, bv: zero, wo: id, bo: zero };
    let x = g.constant(t(&[1, 1, d], &[0.3, -1.0, 2.0, 0.5]));
    let (y, _) = multi_head_attention(&mut g, x, &a, 2).unwrap();
    assert_eq!(g.value(y), g.value(x));
}

#[test]
fn every_primitive_passes_the_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let r = &mut rng;
    let mut worst: Vec<(&str, f64)> = Vec::new();

    let x = random(r, &[2, 3, 7]);
    worst.push(("relu", check1(|g, v| Ok(g.relu(v)), &x)));
    worst.push(("sigmoid", check1(|g, v| Ok(g.sigmoid(v)), &x)));
    worst.push(("scale", check1(|g, v| Ok(g.scale(v, -1.7)), &x)));
    worst.push(("mean", check1(|g, v| Ok(g.mean(v)), &x)));
    worst.push(("softmax", check1(|g, v| Ok(g.softmax(v)), &x)));
    worst.push(("permute", check1(|g, v| g.permute(v, &[2, 0, 1]), &x)));
    worst.push(("reshape", check1(|g, v| g.reshape(v, &[6, 7]), &x)));
    worst.push(("slice", check1(|g, v| g.slice(v, 1, 1, 2), &x)));
    worst.push(("gather_rows", check1(|g, v| g.gather_rows(v, &[1, 0, 1]), &x)));
    worst.push(("concat", check1(|g, v| { let s = g.slice(v, 2, 0, 3)?; g.concat(&[v, s, v], 2) }, &x)));
    worst.push(("avg_pool", check1(|g, v| g.adaptive_avg_pool1d(v, 3), &x)));
    worst.push(("global_pool", check1(|g, v| g.global_avg_pool1d(v), &x)));
    worst.push(("nearest", check1(|g, v| g.interpolate_nearest(v, 12), &x)));
    worst.push(("windows", check1(|g, v| g.windows(v, 4, 2, 3), &x)));
    worst.push(("overlap_add", check1(|g, v| g.overlap_add(v, 3, 8), &random(r, &[2, 4, 3]))));

    let opts = GradCheckOptions::default();
    let pair = [random(r, &[3, 5]), random(r, &[3, 5])];
    for (name, op) in [("add", 0), ("sub", 1), ("mul", 2)] {
        let rep = grad_check_many(
            |g, v| {
                let y = match op {
                    0 => g.add(v[0], v[1])?,
                    1 => g.sub(v[0], v[1])?,
                    _ => g.mul(v[0], v[1])?,
                };
                probe_loss(g, y)
            },
            &pair,
            &opts,
        )
        .unwrap();
        worst.push((name, rep.max_rel_error));
    }

    let mut prelu_x = random(r, &[2, 3, 5]);
    prelu_x.data_mut().iter_mut().for_each(|v| if v.abs() < 0.05 { *v = 0.3 });
    let rep = grad_check_many(|g, v| { let y = g.prelu(v[0], v[1])?; probe_loss(g, y) }, &[prelu_x, t(&[3], &[0.25, -0.1, 0.6])], &opts).unwrap();
    worst.push(("prelu", rep.max_rel_error));

    let rep = grad_check_many(
        |g, v| { let y = g.global_layer_norm(v[0], v[1], v[2], 1e-8)?; probe_loss(g, y) },
        &[random(r, &[2, 3, 6]), random(r, &[3]), random(r, &[3])],
        &opts,
    )
    .unwrap();
    worst.push(("gln", rep.max_rel_error));

    let rep = grad_check_many(
        |g, v| { let y = g.conv1d(v[0], v[1], Some(v[2]), 2, 1, 1)?; probe_loss(g, y) },
        &[random(r, &[2, 3, 9]), random(r, &[4, 3, 3]), random(r, &[4])],
        &opts,
    )
    .unwrap();
    worst.push(("conv1d", rep.max_rel_error));

    let rep = grad_check_many(
        |g, v| { let y = g.conv1d(v[0], v[1], Some(v[2]), 1, 0, 1)?; probe_loss(g, y) },
        &[random(r, &[2, 3, 9]), random(r, &[4, 3, 1]), random(r, &[4])],
        &opts,
    )
    .unwrap();
    worst.push(("pointwise_conv1d", rep.max_rel_error));

    let rep = grad_check_many(
        |g, v| { let y = g.conv1d(v[0], v[1], Some(v[2]), 2, 2, 3)?; probe_loss(g, y) },
        &[random(r, &[2, 3, 9]), random(r, &[3, 1, 5]), random(r, &[3])],
        &opts,
    )
    .unwrap();
    worst.push(("depthwise_conv1d", rep.max_rel_error));

    let rep = grad_check_many(
        |g, v| { let y = g.conv_transpose1d(v[0], v[1], 2, 1)?; probe_loss(g, y) },
        &[random(r, &[2, 3, 6]), random(r, &[3, 2, 3])],
        &opts,
    )
    .unwrap();
    worst.push(("conv_transpose1d", rep.max_rel_error));

    for k in [1usize, 3] {
        let rep = grad_check_many(
            |g, v| { let y = g.depthwise_conv2d(v[0], v[1], v[2])?; probe_loss(g, y) },
            &[random(r, &[2, 3, 4, 5]), random(r, &[3, k, k]), random(r, &[3])],
            &opts,
        )
        .unwrap();
        worst.push(("depthwise_conv2d", rep.max_rel_error));
    }

    let rep = grad_check_many(
        |g, v| { let y = g.linear(v[0], v[1], Some(v[2]))?; probe_loss(g, y) },
        &[random(r, &[2, 3, 4]), random(r, &[5, 4]), random(r, &[5])],
        &opts,
    )
    .unwrap();
    worst.push(("linear", rep.max_rel_error));

    let rep = grad_check_many(|g, v| { let y = g.matmul(v[0], v[1])?; probe_loss(g, y) }, &[random(r, &[3, 4]), random(r, &[4, 2])], &opts).unwrap();
    worst.push(("matmul", rep.max_rel_error));
    for tb in [false, true] {
        let b_shape: &[usize] = if tb { &[2, 5, 4] } else { &[2, 4, 5] };
        let rep = grad_check_many(|g, v| { let y = g.bmm(v[0], v[1], tb)?; probe_loss(g, y) }, &[random(r, &[2, 3, 4]), random(r, b_shape)], &opts).unwrap();
        worst.push(("bmm", rep.max_rel_error));
    }

    let rep = grad_check_many(
        |g, v| {
            let s = g.si_snr(v[0], v[1])?;
            probe_loss(g, s)
        },
        &[random(r, &[2, 16]), random(r, &[2, 16])],
        &opts,
    )
    .unwrap();
    worst.push(("si_snr", rep.max_rel_error));

    let mut dims = [random(r, &[1, 2, 3, 2]), random(r, &[2, 2, 2])];
    dims[1].data_mut()[0] = 0.5;
    let rep = grad_check_many(
        |g, v| {
            let x = g.reshape(v[0], &[1, 2, 6])?;
            let wq = g.reshape(v[1], &[2, 4])?;
            let w = g.slice(wq, 1, 0, 2)?;
            let w = g.reshape(w, &[2, 2])?;
            let d = g.dropout(x, 0.5)?; // identity in eval mode
            let tt = g.permute(d, &[0, 2, 1])?;
            let y = g.linear(tt, w, None)?;
            probe_loss(g, y)
        },
        &dims,
        &opts,
    )
    .unwrap();
    worst.push(("composite", rep.max_rel_error));

    for (name, e) in &worst {
        assert!(*e < PRIM_TOL, "{name}: max relative error {e}");
    }
}

#[test]
fn multi_head_attention_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random(&mut rng, &[2, 5, 8]);
    let mut g0 = Graph::<f64>::new();
    let (vars, _) = attention_params(&mut g0, &mut rng, 8, 8);
    let mut points = vec![x];
    points.extend(vars.iter().map(|&v| g0.tensor(v)));
    let rep = grad_check_many(
        |g, v| {
            let a = AttentionVars { wq: v[1], bq: v[2], wk: v[3], bk: v[4], wv: v[5], bv: v[6], wo: v[7], bo: v[8] };
            let (y, _) = multi_head_attention(g, v[0], &a, 2)?;
            probe_loss(g, y)
        },
        &points,
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(rep.max_rel_error < PRIM_TOL, "{rep:?}");
}

#[test]
fn dropout_modes() {
    let mut g = Graph::<f64>::training(1);
    let x = g.param(Tensor::filled(&[1000], 1.0));
    let y = g.dropout(x, 0.25).unwrap();
    let kept = g.value(y).iter().filter(|&&v| v != 0.0).count();
    assert!((650..850).contains(&kept));
    assert!(g.value(y).iter().all(|&v| v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-12));
    let l = g.sum(y);
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get(x).unwrap(), g.value(y));

    let mut e = Graph::<f64>::new();
    let x = e.param(Tensor::filled(&[10], 1.0));
    assert_eq!(e.dropout(x, 0.25).unwrap(), x);
    assert!(e.dropout(x, 1.0).is_err());
}

#[test]
fn backward_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut g = Graph::<f32>::new();
        let x = g.param(random(&mut rng, &[2, 4, 16]).cast());
        let w = g.param(random(&mut rng, &[4, 4, 3]).cast());
        let y = g.conv1d(x, w, None, 1, 1, 1).unwrap();
        let y = g.sigmoid(y);
        let l = g.mean(y);
        let grads = g.backward(l).unwrap();
        (grads.get(x).unwrap().to_vec(), grads.get(w).unwrap().to_vec())
    };
    let (a, b) = (run(), run());
    assert_eq!(a.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.0.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.1.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}
