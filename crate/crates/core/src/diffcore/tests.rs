use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_tensor(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Reference stride-1 convolution written as plain nested loops.
fn conv_oracle(input: &Tensor, kernel: &Tensor, bias: &Tensor, pad: usize) -> Tensor {
    let (cin, h, w) = input.dims3("oracle").unwrap();
    let ks = kernel.shape();
    let (cout, kh, kw) = (ks[0], ks[2], ks[3]);
    let (ho, wo) = (h + 2 * pad + 1 - kh, w + 2 * pad + 1 - kw);
    let mut out = vec![0.0; cout * ho * wo];
    for co in 0..cout {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = bias.data()[co];
                for ci in 0..cin {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let y = oy as isize + ky as isize - pad as isize;
                            let x = ox as isize + kx as isize - pad as isize;
                            if y < 0 || x < 0 || y >= h as isize || x >= w as isize {
                                continue;
                            }
                            let iv = input.data()[(ci * h + y as usize) * w + x as usize];
                            let kv = kernel.data()[((co * cin + ci) * kh + ky) * kw + kx];
                            acc += iv * kv;
                        }
                    }
                }
                out[(co * ho + oy) * wo + ox] = acc;
            }
        }
    }
    Tensor::new(vec![cout, ho, wo], out).unwrap()
}

#[test]
fn sigmoid_of_zero_is_half() {
    let mut g = Graph::new();
    let x = g.input(Tensor::scalar(0.0));
    let s = g.sigmoid(x);
    assert_eq!(g.value(s).item(), Some(0.5));
}

#[test]
fn max_pool_two_by_two_picks_maximum() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let p = g.max_pool(x, (2, 2)).unwrap();
    assert_eq!(g.value(p).shape(), &[1, 1, 1]);
    assert_eq!(g.value(p).data(), &[4.0]);
}

#[test]
fn max_pool_keeps_partial_windows() {
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![1, 1, 5], vec![1.0, 5.0, 2.0, 0.0, 7.0]).unwrap());
    let p = g.max_pool(x, (1, 2)).unwrap();
    assert_eq!(g.value(p).data(), &[5.0, 2.0, 7.0]);
}

#[test]
fn conv2d_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (cin, cout) in [(1, 1), (3, 4)] {
        let input = random_tensor(&mut rng, &[cin, 8, 8]);
        let kernel = random_tensor(&mut rng, &[cout, cin, 3, 3]);
        let bias = random_tensor(&mut rng, &[cout]);
        let want = conv_oracle(&input, &kernel, &bias, 1);
        let mut g = Graph::new();
        let (i, k, b) = (g.input(input), g.input(kernel), g.input(bias));
        let out = g.conv2d(i, k, b, (1, 1)).unwrap();
        assert_eq!(g.value(out).shape(), want.shape());
        for (a, b) in g.value(out).data().iter().zip(want.data()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn backward_of_sum_is_all_ones() {
    let mut store = ParamStore::new();
    store.insert("w", Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.0, 3.0, 0.0, 1.0]).unwrap());
    let mut g = Graph::new();
    let w = g.param(&store, "w").unwrap();
    let s = g.sum(w);
    g.backward(s).unwrap();
    assert!(g.grad(w).unwrap().data().iter().all(|&v| v == 1.0));
}

#[test]
fn sigmoid_derivative_at_zero_is_quarter() {
    let mut g = Graph::new();
    let w = g.variable(Tensor::scalar(0.0));
    let s = g.sigmoid(w);
    g.backward(s).unwrap();
    assert_eq!(g.grad(w).unwrap().item(), Some(0.25));
}

#[test]
fn sum_backward_accumulates_into_both_operands() {
    let mut g = Graph::new();
    let a = g.variable(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
    let b = g.variable(Tensor::new(vec![2], vec![3.0, 4.0]).unwrap());
    let c = g.add(a, b).unwrap();
    let d = g.add(c, a).unwrap();
    let s = g.sum(d);
    g.backward(s).unwrap();
    assert_eq!(g.grad(a).unwrap().data(), &[2.0, 2.0]);
    assert_eq!(g.grad(b).unwrap().data(), &[1.0, 1.0]);
}

#[test]
fn non_scalar_root_is_rejected() {
    let mut g = Graph::new();
    let a = g.variable(Tensor::zeros(&[3]));
    assert!(matches!(g.backward(a), Err(TensorError::NonScalarRoot(_))));
}

#[test]
fn shape_errors_name_the_operation() {
    let mut g = Graph::new();
    let a = g.input(Tensor::zeros(&[2, 3]));
    let b = g.input(Tensor::zeros(&[4, 2]));
    let err = g.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("matmul") && msg.contains('3') && msg.contains('4'), "{msg}");
    let err = g.add(a, b).unwrap_err();
    assert!(err.to_string().starts_with("add"));
}

#[test]
fn quadratic_grad_check() {
    let mut store = ParamStore::new();
    store.insert("w", Tensor::scalar(3.0));
    let report = grad_check::<TensorError>(
        |g, p| {
            let w = g.param(p, "w")?;
            let sq = g.mul(w, w)?;
            Ok(g.sum(sq))
        },
        &store,
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(report.passed());

    let mut g = Graph::new();
    let w = g.param(&store, "w").unwrap();
    let sq = g.mul(w, w).unwrap();
    g.backward(sq).unwrap();
    assert_eq!(g.grad(w).unwrap().item(), Some(6.0));
}

#[test]
fn grad_check_flags_corrupted_gradient() {
    let mut store = ParamStore::new();
    store.insert("w", Tensor::new(vec![2], vec![3.0, -1.5]).unwrap());
    let f = |p: &ParamStore| -> Result<f64, TensorError> {
        Ok(p.get("w").unwrap().data().iter().map(|v| v * v).sum())
    };
    let mut grads = Gradients::new();
    grads.insert("w".into(), Tensor::new(vec![2], vec![6.0, -3.0]).unwrap());
    let ok = check_gradients(f, &store, &grads, &GradCheckOptions::default()).unwrap();
    assert!(ok.passed());
    // off by a factor of two
    grads.insert("w".into(), Tensor::new(vec![2], vec![12.0, -6.0]).unwrap());
    let bad = check_gradients(f, &store, &grads, &GradCheckOptions::default()).unwrap();
    assert!(!bad.passed());
    assert_eq!(bad.failures().len(), 1);
    assert!(bad.max_rel_error() > 0.4);
}

#[test]
fn probes_across_a_kink_are_replaced_not_compared() {
    // entry 0 sits 1e-7 from the leaky-ReLU kink, entry 1 well away from it
    let mut store = ParamStore::new();
    store.insert("w", Tensor::new(vec![2], vec![1e-7, 0.5]).unwrap());
    let report = grad_check::<TensorError>(
        |g, p| {
            let w = g.param(p, "w")?;
            let y = g.leaky_relu(w, 0.2);
            Ok(g.sum(y))
        },
        &store,
        &GradCheckOptions::default(),
    )
    .unwrap();
    let w = &report.params[0];
    assert_eq!((w.checked, w.straddled), (1, 1));
    assert!(report.passed());

    // with no valid probe left the tensor counts as unchecked, hence failed
    store.insert("w", Tensor::new(vec![1], vec![-1e-7]).unwrap());
    let report = grad_check::<TensorError>(
        |g, p| {
            let w = g.param(p, "w")?;
            let y = g.leaky_relu(w, 0.2);
            Ok(g.sum(y))
        },
        &store,
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert_eq!(report.params[0].checked, 0);
    assert!(!report.passed());
}

#[test]
fn roundoff_floor_scales_with_the_function_value() {
    let mut store = ParamStore::new();
    store.insert("w", Tensor::scalar(1.0));
    let mut grads = Gradients::new();
    grads.insert("w".into(), Tensor::scalar(1e-3));
    let f = |p: &ParamStore| -> Result<f64, TensorError> { Ok(1e4 + 1e-3 * p.get("w").unwrap().data()[0]) };
    let opts = GradCheckOptions {
        roundoff_ulps: 10.0,
        ..GradCheckOptions::default()
    };
    let report = check_gradients(f, &store, &grads, &opts).unwrap();
    let want = 10.0 * f64::EPSILON * (1e4 + 1e-3) / (1e-5 * 1e-4);
    assert!((report.floor - want).abs() < 1e-12 * want);
    assert!(report.passed());
    // the plain floor cannot absorb the rounding of a value near 1e4
    let plain = check_gradients(f, &store, &grads, &GradCheckOptions::default()).unwrap();
    assert_eq!(plain.floor, 1e-6);
}

fn two_layer(g: &mut Graph, p: &ParamStore) -> Result<Var, TensorError> {
    let x = g.input(Tensor::new(vec![3, 4], (0..12).map(|i| (i as f64 * 0.7).sin()).collect())?);
    let (w1, b1) = (g.param(p, "w1")?, g.param(p, "b1")?);
    let (w2, b2) = (g.param(p, "w2")?, g.param(p, "b2")?);
    let h = g.affine(x, w1, b1)?;
    let h = g.tanh(h);
    let o = g.affine(h, w2, b2)?;
    let o = g.log_softmax(o)?;
    let o = g.mul(o, o)?;
    Ok(g.sum(o))
}

#[test]
fn random_two_layer_network_matches_finite_differences() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        store.init_uniform(&mut rng, "w1", &[4, 5], 4);
        store.init_uniform(&mut rng, "b1", &[5], 4);
        store.init_uniform(&mut rng, "w2", &[5, 3], 5);
        store.init_uniform(&mut rng, "b2", &[3], 5);
        let report = grad_check(two_layer, &store, &GradCheckOptions::default()).unwrap();
        assert!(report.passed(), "seed {seed}: {report:?}");
    }
}

#[test]
fn forward_is_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    store.init_uniform(&mut rng, "w1", &[4, 5], 4);
    store.init_uniform(&mut rng, "b1", &[5], 4);
    store.init_uniform(&mut rng, "w2", &[5, 3], 5);
    store.init_uniform(&mut rng, "b2", &[3], 5);
    let run = || {
        let mut g = Graph::new();
        let r = two_layer(&mut g, &store).unwrap();
        g.backward(r).unwrap();
        (g.value(r).data()[0].to_bits(), g.param_grads())
    };
    let (a, ga) = run();
    let (b, gb) = run();
    assert_eq!(a, b);
    for (k, t) in &ga {
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(t), bits(&gb[k]));
    }
}

type OpBuilder = fn(&mut Graph, &ParamStore) -> Result<Var, TensorError>;

/// Random projection to a scalar so every output entry gets a distinct weight.
fn project(g: &mut Graph, y: Var, seed: u64) -> Result<Var, TensorError> {
    let shape = g.value(y).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let r = g.input(random_tensor(&mut rng, &shape));
    let m = g.mul(y, r)?;
    Ok(g.sum(m))
}

fn op_cases() -> Vec<(&'static str, Vec<(&'static str, Vec<usize>)>, OpBuilder)> {
    vec![
        ("matmul", vec![("a", vec![3, 4]), ("b", vec![4, 2])], |g, p| {
            let (a, b) = (g.param(p, "a")?, g.param(p, "b")?);
            let y = g.matmul(a, b)?;
            project(g, y, 1)
        }),
        ("add_bias", vec![("a", vec![3, 4]), ("b", vec![4])], |g, p| {
            let (a, b) = (g.param(p, "a")?, g.param(p, "b")?);
            let y = g.add_bias(a, b)?;
            project(g, y, 2)
        }),
        ("add", vec![("a", vec![2, 3]), ("b", vec![2, 3])], |g, p| {
            let (a, b) = (g.param(p, "a")?, g.param(p, "b")?);
            let y = g.add(a, b)?;
            project(g, y, 3)
        }),
        ("mul", vec![("a", vec![2, 3]), ("b", vec![2, 3])], |g, p| {
            let (a, b) = (g.param(p, "a")?, g.param(p, "b")?);
            let y = g.mul(a, b)?;
            project(g, y, 4)
        }),
        ("scale", vec![("a", vec![5])], |g, p| {
            let a = g.param(p, "a")?;
            let y = g.scale(a, -0.3);
            project(g, y, 5)
        }),
        ("sigmoid", vec![("a", vec![2, 4])], |g, p| {
            let a = g.param(p, "a")?;
            let y = g.sigmoid(a);
            project(g, y, 6)
        }),
        ("tanh", vec![("a", vec![2, 4])], |g, p| {
            let a = g.param(p, "a")?;
            let y = g.tanh(a);
            project(g, y, 7)
        }),
        ("leaky_relu", vec![("a", vec![2, 4])], |g, p| {
            let a = g.param(p, "a")?;
            let y = g.leaky_relu(a, 0.2);
            project(g, y, 8)
        }),
        ("softmax", vec![("a", vec![3, 5])], |g, p| {
            let a = g.param(p, "a")?;
            let y = g.softmax(a)?;
            project(g, y, 9)
        }),
        ("log_softmax", vec![("a", vec![3, 5])], |g, p| {
            let a = g.param(p, "a")?;
            let y = g.log_softmax(a)?;
            project(g, y, 10)
        }),
        ("concat_rows", vec![("a", vec![2, 3]), ("b", vec![1, 3])], |g, p| {
            let (a, b) = (g.param(p, "a")?, g.param(p, "b")?);
            let y = g.concat(&[a, b, a], 0)?;
            project(g, y, 11)
        }),
        ("concat_cols", vec![("a", vec![2, 3]), ("b", vec![2, 2])], |g, p| {
            let (a, b) = (g.param(p, "a")?, g.param(p, "b")?);
            let y = g.concat(&[b, a], 1)?;
            project(g, y, 12)
        }),
        ("narrow_rows", vec![("a", vec![4, 3])], |g, p| {
            let a = g.param(p, "a")?;
            let y = g.narrow(a, 0, 1, 2)?;
            project(g, y, 13)
        }),
        ("narrow_cols", vec![("a", vec![3, 5])], |g, p| {
            let a = g.param(p, "a")?;
            let y = g.narrow(a, 1, 2, 3)?;
            project(g, y, 14)
        }),
        ("reshape", vec![("a", vec![2, 6])], |g, p| {
            let a = g.param(p, "a")?;
            let y = g.reshape(a, vec![3, 4])?;
            project(g, y, 15)
        }),
        (
            "conv2d",
            vec![("x", vec![2, 5, 6]), ("k", vec![3, 2, 3, 3]), ("b", vec![3])],
            |g, p| {
                let (x, k, b) = (g.param(p, "x")?, g.param(p, "k")?, g.param(p, "b")?);
                let y = g.conv2d(x, k, b, (1, 1))?;
                project(g, y, 16)
            },
        ),
        ("max_pool", vec![("x", vec![2, 5, 7])], |g, p| {
            let x = g.param(p, "x")?;
            let y = g.max_pool(x, (2, 2))?;
            project(g, y, 17)
        }),
        ("columns_to_rows", vec![("x", vec![2, 3, 4])], |g, p| {
            let x = g.param(p, "x")?;
            let y = g.columns_to_rows(x)?;
            project(g, y, 18)
        }),
        ("lstm_cell", vec![("gates", vec![2, 12]), ("c", vec![2, 3])], |g, p| {
            let (a, c) = (g.param(p, "gates")?, g.param(p, "c")?);
            let y = g.lstm_cell(a, c)?;
            project(g, y, 19)
        }),
        ("sum", vec![("a", vec![3, 2])], |g, p| {
            let a = g.param(p, "a")?;
            let s = g.sum(a);
            let t = g.tanh(s);
            project(g, t, 20)
        }),
    ]
}

#[test]
fn every_op_matches_finite_differences_over_twenty_seeds() {
    let opts = GradCheckOptions {
        max_entries_per_param: 64,
        ..GradCheckOptions::default()
    };
    for (name, shapes, build) in op_cases() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + name.len() as u64);
            let mut store = ParamStore::new();
            for (pname, shape) in &shapes {
                store.insert(*pname, random_tensor(&mut rng, shape));
            }
            let report = grad_check(build, &store, &opts).unwrap();
            assert!(report.passed(), "{name} seed {seed}: {:?}", report.failures());
        }
    }
}

#[test]
fn forward_ops_keep_finite_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut g = Graph::new();
    let x = g.input(random_tensor(&mut rng, &[3, 6]).map(|v| v * 800.0));
    for y in [
        g.sigmoid(x),
        g.tanh(x),
        g.softmax(x).unwrap(),
        g.log_softmax(x).unwrap(),
    ] {
        assert!(g.value(y).all_finite());
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut tensors = std::collections::BTreeMap::new();
    tensors.insert("enc.conv0.w".to_string(), random_tensor(&mut rng, &[2, 1, 3, 3]));
    tensors.insert("scalar".to_string(), Tensor::scalar(f64::MIN_POSITIVE));
    tensors.insert("odd".to_string(), Tensor::new(vec![3], vec![-0.0, 1e-308, f64::MAX]).unwrap());
    let ckpt = Checkpoint::new("decoder = \"flag\"\n", tensors);
    let mut buf = Vec::new();
    ckpt.write_to(&mut buf).unwrap();
    let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
    assert_eq!(back.header, ckpt.header);
    for (k, t) in &ckpt.tensors {
        let u = &back.tensors[k];
        assert_eq!(t.shape(), u.shape());
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(t), bits(u));
    }
    let mut again = Vec::new();
    back.write_to(&mut again).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn checkpoint_rejects_foreign_files() {
    let err = Checkpoint::read_from(&mut &b"NOTACKPTxxxxxxxx"[..]).unwrap_err();
    assert!(matches!(err, CheckpointError::BadMagic));
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&99u32.to_le_bytes());
    let err = Checkpoint::read_from(&mut buf.as_slice()).unwrap_err();
    assert!(matches!(err, CheckpointError::UnsupportedVersion(99)));
}
