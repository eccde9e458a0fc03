use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rssnet_core::autograd::{grad_check_many, GradCheckOptions, Graph, Tensor, Var};
use rssnet_core::model::{
    chunk, count_params, forward, overlap_add, param_specs, rssnet_block, tda_forward, BoundParams, DwConvPath,
    RssNet, RssNetConfig, RssNetParams,
};
use rssnet_core::Error;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn probe_loss(g: &mut Graph<f64>, y: Var) -> rssnet_core::Result<Var> {
    let n = g.value(y).len();
    let shape = g.shape(y).to_vec();
    let w: Vec<f64> = (0..n).map(|i| ((i * 7919) % 97) as f64 / 97.0 - 0.4).collect();
    let w = g.constant(Tensor::new(&shape, w).unwrap());
    let p = g.mul(y, w)?;
    Ok(g.sum(p))
}

fn zero(params: &mut RssNetParams, name: &str) {
    params.get_mut(name).unwrap_or_else(|| panic!("{name}")).data_mut().fill(0.0);
}

#[test]
fn forward_shapes() {
    for cfg in [RssNetConfig::tiny(), RssNetConfig::desk()] {
        let net = RssNet::new(cfg.clone(), 3).unwrap();
        let mut g = Graph::<f32>::new();
        let p = net.params.bind(&mut g, false);
        let y = g.constant(Tensor::filled(&[2, 1, cfg.length], 0.5));
        let out = forward(&mut g, &p, &cfg, y).unwrap();
        assert_eq!(g.shape(out.estimates), &[2, cfg.sources, cfg.length]);
        assert_eq!(g.shape(out.masks), &[2, cfg.sources * cfg.n, cfg.encoded_len()]);
        assert!(g.value(out.estimates).iter().all(|v| v.is_finite()));
    }
}

#[test]
fn wrong_length_is_a_dimension_error() {
    let cfg = RssNetConfig::tiny();
    let net = RssNet::new(cfg.clone(), 0).unwrap();
    let mut g = Graph::<f32>::new();
    let p = net.params.bind(&mut g, false);
    let y = g.constant(Tensor::zeros(&[1, 1, cfg.length + 1]));
    assert!(matches!(forward(&mut g, &p, &cfg, y), Err(Error::Dimension { .. })));
    assert!(matches!(net.separate(&[vec![0.0; 5]]), Err(Error::Dimension { .. })));
}

#[test]
fn chunk_then_overlap_add_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for len in [64usize, 97] {
        let x = random(&mut rng, &[2, 3, len]);
        for k in 2..=64.min(len) {
            let mut g = Graph::<f64>::new();
            let v = g.constant(x.clone());
            let (c, geo) = chunk(&mut g, v, k).unwrap();
            assert_eq!(g.shape(c), &[2, 3, k, geo.count]);
            assert_eq!((geo.count - 1) * geo.stride + k, len + geo.pad);
            let back = overlap_add(&mut g, c, &geo).unwrap();
            for (a, b) in g.value(back).iter().zip(x.data()) {
                assert!((a - b).abs() < 1e-12, "K = {k}, len = {len}");
            }
        }
    }
}

#[test]
fn reference_parameter_count() {
    let n = count_params(&RssNetConfig::reference());
    let target = 5.25e6;
    let rel = (n as f64 - target).abs() / target;
    assert!(rel <= 0.15, "reference count {n} is {:.1}% from 5.25M", 100.0 * rel);
    let init = RssNetParams::init(&RssNetConfig::tiny(), 0).unwrap();
    assert_eq!(init.count(), count_params(&RssNetConfig::tiny()));
}

#[test]
fn parameter_count_scaling() {
    let base = RssNetConfig::desk();
    let wide = RssNetConfig { n: 2 * base.n, ..base.clone() };
    assert!(count_params(&wide) > count_params(&base));

    let deeper = RssNetConfig { iter: 6, ..base.clone() };
    assert_eq!(count_params(&deeper), count_params(&base));

    let unshared = RssNetConfig { weight_sharing: false, ..base.clone() };
    let unshared6 = RssNetConfig { iter: 6, ..unshared.clone() };
    assert!(count_params(&unshared6) > 2 * count_params(&unshared) - count_params(&base));
    assert!(param_specs(&unshared6).iter().any(|s| s.name.starts_with("blocks.5.")));
    assert!(!param_specs(&deeper).iter().any(|s| s.name.starts_with("blocks.1.")));
}

#[test]
fn parameter_names_are_unique() {
    let specs = param_specs(&RssNetConfig { dwconv_path: DwConvPath::P3, weight_sharing: false, ..RssNetConfig::tiny() });
    let mut names: Vec<_> = specs.iter().map(|s| s.name.clone()).collect();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), specs.len());
}

#[test]
fn from_tensors_rejects_mismatches() {
    let cfg = RssNetConfig::tiny();
    let params = RssNetParams::init(&cfg, 1).unwrap();
    let mut map: BTreeMap<_, _> = params.clone().into_tensors();
    assert_eq!(RssNetParams::from_tensors(&cfg, map.clone()).unwrap(), params);
    map.insert("decoder.weight".into(), Tensor::zeros(&[1, 1, 1]));
    assert!(matches!(RssNetParams::from_tensors(&cfg, map.clone()), Err(Error::Dimension { .. })));
    map.remove("decoder.weight");
    assert!(matches!(RssNetParams::from_tensors(&cfg, map), Err(Error::Config(_))));
}

/// With the TDA outputs forced to zero (zero out-projection and zero LA
/// shift), a block reduces to its residual branches.
#[test]
fn block_with_silent_attention_is_its_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for path in [DwConvPath::None, DwConvPath::P1] {
        let cfg = RssNetConfig { dwconv_path: path, ..RssNetConfig::tiny() };
        let mut params = RssNetParams::init(&cfg, 5).unwrap();
        for half in ["intra", "inter"] {
            zero(&mut params, &format!("blocks.0.{half}.ga.out_proj.weight"));
            zero(&mut params, &format!("blocks.0.{half}.ga.out_proj.bias"));
            for s in 0..cfg.depth {
                zero(&mut params, &format!("blocks.0.{half}.la.{s}.shift.weight"));
                zero(&mut params, &format!("blocks.0.{half}.la.{s}.shift.bias"));
            }
        }
        let x = random(&mut rng, &[2, cfg.n, cfg.chunk, 6]);
        let mut g = Graph::<f64>::new();
        let p = params.bind(&mut g, false);
        let h = g.constant(x.clone());
        let out = rssnet_block(&mut g, &p, 0, &cfg, h).unwrap();
        let expected: Vec<f64> = match path {
            DwConvPath::None => x.data().to_vec(),
            _ => {
                let w = params.get("blocks.0.path_intra.weight").unwrap().data();
                let b = params.get("blocks.0.path_intra.bias").unwrap().data();
                let plane = cfg.chunk * 6;
                x.data()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        let ch = (i / plane) % cfg.n;
                        w[ch] as f64 * v + b[ch] as f64
                    })
                    .collect()
            }
        };
        for (a, b) in g.value(out).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9, "{path:?}: {a} vs {b}");
        }
    }
}

#[test]
fn eval_forward_is_deterministic_and_dropout_is_seeded() {
    let cfg = RssNetConfig { dropout: 0.3, ..RssNetConfig::tiny() };
    let net = RssNet::new(cfg.clone(), 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mix: Vec<Vec<f64>> = (0..3).map(|_| (0..cfg.length).map(|_| rng.random::<f64>()).collect()).collect();
    assert_eq!(net.separate(&mix).unwrap(), net.separate(&mix).unwrap());

    let run = |seed: u64| {
        let mut g = Graph::<f32>::training(seed);
        let p = net.params.bind(&mut g, true);
        let data: Vec<f32> = mix.iter().flatten().map(|&v| v as f32).collect();
        let y = g.constant(Tensor::new(&[3, 1, cfg.length], data).unwrap());
        let out = forward(&mut g, &p, &cfg, y).unwrap();
        g.value(out.estimates).to_vec()
    };
    assert_eq!(run(1), run(1));
    assert_ne!(run(1), run(2));
}

#[test]
fn separate_returns_c_spectra_per_mixture() {
    let cfg = RssNetConfig::tiny();
    let net = RssNet::new(cfg.clone(), 0).unwrap();
    let out = net.separate(&[vec![0.1; cfg.length], vec![0.2; cfg.length]]).unwrap();
    assert_eq!(out.len(), 2);
    assert!(out.iter().all(|s| s.len() == cfg.sources && s.iter().all(|x| x.len() == cfg.length)));
    assert!(net.separate(&[]).unwrap().is_empty());
}

#[test]
fn tda_gradient_check() {
    let cfg = RssNetConfig { n: 8, depth: 2, heads: 2, d_model: 8, ffn_dim: 16, dropout: 0.0, ..RssNetConfig::tiny() };
    let params = RssNetParams::init(&cfg, 8).unwrap();
    let names: Vec<String> = params.iter().map(|(k, _)| k.clone()).filter(|k| k.starts_with("blocks.0.intra.")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut points = vec![random(&mut rng, &[2, 8, 16])];
    points.extend(names.iter().map(|n| params.get(n).unwrap().cast::<f64>()));
    let opts = GradCheckOptions { max_coords: 6, seed: 1, ..GradCheckOptions::default() };
    let report = grad_check_many(
        |g, vars| {
            let p = BoundParams::from_pairs(names.iter().cloned().zip(vars[1..].iter().copied()));
            let y = tda_forward(g, &p, "blocks.0.intra", &cfg, vars[0])?.output;
            probe_loss(g, y)
        },
        &points,
        &opts,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}

#[test]
fn end_to_end_gradient_check() {
    let cfg = RssNetConfig { dwconv_path: DwConvPath::P3, dwconv_kernel: 3, ..RssNetConfig::tiny() };
    let params = RssNetParams::init(&cfg, 21).unwrap();
    let names: Vec<String> = params.iter().map(|(k, _)| k.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut points = vec![random(&mut rng, &[2, 1, cfg.length])];
    points.extend(names.iter().map(|n| params.get(n).unwrap().cast::<f64>()));
    let opts = GradCheckOptions { max_coords: 3, seed: 2, ..GradCheckOptions::default() };
    let report = grad_check_many(
        |g, vars| {
            let p = BoundParams::from_pairs(names.iter().cloned().zip(vars[1..].iter().copied()));
            let out = forward(g, &p, &cfg, vars[0])?;
            probe_loss(g, out.estimates)
        },
        &points,
        &opts,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-3, "{report:?}");
}

#[test]
fn every_parameter_receives_gradient() {
    let cfg = RssNetConfig { dwconv_path: DwConvPath::P3, dwconv_kernel: 3, ..RssNetConfig::tiny() };
    let params = RssNetParams::init(&cfg, 4).unwrap();
    let mut g = Graph::<f64>::new();
    let p = params.bind(&mut g, true);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let y = g.constant(random(&mut rng, &[2, 1, cfg.length]));
    let out = forward(&mut g, &p, &cfg, y).unwrap();
    let loss = probe_loss(&mut g, out.estimates).unwrap();
    let grads = g.backward(loss).unwrap();
    for (name, var) in p.iter() {
        let gr = grads.get(*var).unwrap();
        assert!(gr.iter().all(|v| v.is_finite()), "{name}");
        assert!(gr.iter().any(|v| *v != 0.0), "{name} has an all-zero gradient");
    }
}
