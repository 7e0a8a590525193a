use super::*;
use crate::rng::{stream, StreamKind};
use rand::Rng as _;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs().max(b.abs()) + 1e-8)
}

fn rand_tensor(shape: &[usize], rng: &mut crate::rng::Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn init_is_deterministic_per_seed() {
    let spec = NetworkSpec::encoder([1, 16, 16], 8).unwrap();
    let a = init_params(&spec, &mut stream(3, StreamKind::ParamInit, 0)).unwrap();
    let b = init_params(&spec, &mut stream(3, StreamKind::ParamInit, 0)).unwrap();
    assert_eq!(a, b);
    let c = init_params(&spec, &mut stream(4, StreamKind::ParamInit, 0)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn dense_weight_shape_is_out_by_in() {
    let spec = NetworkSpec::new(
        vec![4],
        vec![LayerSpec::Dense { input: 4, output: 2 }],
        vec![],
    )
    .unwrap();
    let params = init_params(&spec, &mut stream(0, StreamKind::ParamInit, 0)).unwrap();
    assert_eq!(params.layers[0].as_ref().unwrap().weight.shape(), &[2, 4]);
}

#[test]
fn init_std_matches_kaiming_fan_in() {
    // dense 100 -> 100 gives a 10^4-element weight tensor
    let spec = NetworkSpec::new(
        vec![100],
        vec![LayerSpec::Dense {
            input: 100,
            output: 100,
        }],
        vec![],
    )
    .unwrap();
    let params = init_params(&spec, &mut stream(1, StreamKind::ParamInit, 0)).unwrap();
    let w = params.layers[0].as_ref().unwrap().weight.data();
    let mean: f64 = w.iter().sum::<f64>() / w.len() as f64;
    let var: f64 = w.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w.len() as f64;
    let expect = (2.0 / 100.0f64).sqrt();
    assert!(
        (var.sqrt() - expect).abs() / expect < 0.05,
        "std {} vs expected {}",
        var.sqrt(),
        expect
    );
}

#[test]
fn relu_forward_clamps_negatives() {
    let spec = NetworkSpec::new(vec![2], vec![LayerSpec::Relu], vec![]).unwrap();
    let params = ParamSet::zeros_like(&spec).unwrap();
    let x = Tensor::from_vec(&[2], vec![-1.0, 2.0]).unwrap();
    let y = forward_only(&spec, &params, &x).unwrap();
    assert_eq!(y.data(), &[0.0, 2.0]);
}

#[test]
fn conv_1x1_identity_kernel_passes_input_through() {
    let spec = NetworkSpec::new(
        vec![1, 4, 4],
        vec![LayerSpec::Conv2d {
            in_ch: 1,
            out_ch: 1,
            kernel: 1,
            stride: 1,
            pad: 0,
        }],
        vec![],
    )
    .unwrap();
    let mut params = ParamSet::zeros_like(&spec).unwrap();
    params.layers[0].as_mut().unwrap().weight.data_mut()[0] = 1.0;
    let x = rand_tensor(&[1, 4, 4], &mut stream(2, StreamKind::ParamInit, 1));
    let y = forward_only(&spec, &params, &x).unwrap();
    assert_eq!(y.data(), x.data());
}

/// Direct triple-loop convolution, independent of the im2col path.
fn conv_oracle(
    input: &Tensor,
    weight: &Tensor,
    bias: &[f64],
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let (h, w) = (input.shape()[1], input.shape()[2]);
    let oh = (h + 2 * pad - kernel) / stride + 1;
    let ow = (w + 2 * pad - kernel) / stride + 1;
    let mut out = vec![0.0; out_ch * oh * ow];
    for oc in 0..out_ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = bias[oc];
                for ic in 0..in_ch {
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                let xv = input.data()[(ic * h + iy as usize) * w + ix as usize];
                                let wv = weight.data()
                                    [(oc * in_ch + ic) * kernel * kernel + ky * kernel + kx];
                                acc += xv * wv;
                            }
                        }
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

#[test]
fn conv_impulse_stamps_kernel() {
    let spec = NetworkSpec::new(
        vec![1, 4, 4],
        vec![LayerSpec::Conv2d {
            in_ch: 1,
            out_ch: 1,
            kernel: 3,
            stride: 1,
            pad: 0,
        }],
        vec![],
    )
    .unwrap();
    let params = init_params(&spec, &mut stream(5, StreamKind::ParamInit, 0)).unwrap();
    let mut x = Tensor::zeros(&[1, 4, 4]);
    x.data_mut()[1 * 4 + 2] = 1.0; // impulse at (1,2)
    let y = forward_only(&spec, &params, &x).unwrap();
    let p = params.layers[0].as_ref().unwrap();
    let oracle = conv_oracle(&x, &p.weight, p.bias.data(), 1, 1, 3, 1, 0);
    for (a, b) in y.data().iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12);
    }
    // out(oy,ox) reads w[1-oy, 2-ox] from the impulse at input (1,2)
    let w = p.weight.data();
    assert!((y.data()[0 * 2 + 1] - w[4]).abs() < 1e-12); // out (0,1) sees w(1,1)
    assert!((y.data()[1 * 2 + 0] - w[2]).abs() < 1e-12); // out (1,0) sees w(0,2)
}

#[test]
fn conv_matches_direct_oracle_with_stride_and_pad() {
    let mut rng = stream(6, StreamKind::ParamInit, 0);
    let spec = NetworkSpec::new(
        vec![3, 7, 6],
        vec![LayerSpec::Conv2d {
            in_ch: 3,
            out_ch: 4,
            kernel: 3,
            stride: 2,
            pad: 1,
        }],
        vec![],
    )
    .unwrap();
    let params = init_params(&spec, &mut rng).unwrap();
    let x = rand_tensor(&[3, 7, 6], &mut rng);
    let y = forward_only(&spec, &params, &x).unwrap();
    let p = params.layers[0].as_ref().unwrap();
    let oracle = conv_oracle(&x, &p.weight, p.bias.data(), 3, 4, 3, 2, 1);
    assert_eq!(y.len(), oracle.len());
    for (a, b) in y.data().iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn small_net() -> NetworkSpec {
    NetworkSpec::new(
        vec![1, 8, 8],
        vec![
            LayerSpec::Conv2d {
                in_ch: 1,
                out_ch: 2,
                kernel: 3,
                stride: 2,
                pad: 1,
            },
            LayerSpec::Relu,
            LayerSpec::Conv2d {
                in_ch: 2,
                out_ch: 3,
                kernel: 3,
                stride: 1,
                pad: 1,
            },
            LayerSpec::Relu,
            LayerSpec::AvgPool { kernel: 2, stride: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                input: 3 * 2 * 2,
                output: 4,
            },
        ],
        vec![("final".into(), 6)],
    )
    .unwrap()
}

#[test]
fn backward_matches_finite_differences_on_composed_net() {
    let spec = small_net();
    let mut rng = stream(7, StreamKind::ParamInit, 0);
    let params = init_params(&spec, &mut rng).unwrap();
    let x = rand_tensor(&[1, 8, 8], &mut rng);
    let r: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let (out, trace) = forward(&spec, &params, &x).unwrap();
    assert_eq!(out.len(), 4);
    let grad_out = Tensor::from_vec(&[4], r.clone()).unwrap();
    let (grads, _) = backward(&spec, &params, &trace, &grad_out).unwrap();

    let loss = |ps: &ParamSet| -> f64 {
        let y = forward_only(&spec, ps, &x).unwrap();
        y.data().iter().zip(&r).map(|(a, b)| a * b).sum()
    };
    let numeric = numerical_gradient(loss, &params, 1e-5);

    for (li, (a, n)) in grads.layers.iter().zip(&numeric.layers).enumerate() {
        if let (Some(a), Some(n)) = (a, n) {
            for (av, nv) in a.weight.data().iter().zip(n.weight.data()) {
                assert!(rel_err(*av, *nv) < 1e-4, "layer {li} weight: {av} vs {nv}");
            }
            for (av, nv) in a.bias.data().iter().zip(n.bias.data()) {
                assert!(rel_err(*av, *nv) < 1e-4, "layer {li} bias: {av} vs {nv}");
            }
        }
    }
}

#[test]
fn input_gradient_matches_finite_differences() {
    let spec = small_net();
    let mut rng = stream(8, StreamKind::ParamInit, 0);
    let params = init_params(&spec, &mut rng).unwrap();
    let x = rand_tensor(&[1, 8, 8], &mut rng);
    let r: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let (_, trace) = forward(&spec, &params, &x).unwrap();
    let grad_out = Tensor::from_vec(&[4], r.clone()).unwrap();
    let (_, input_grad) = backward(&spec, &params, &trace, &grad_out).unwrap();

    let step = 1e-5;
    for j in (0..x.len()).step_by(7) {
        let mut xp = x.clone();
        xp.data_mut()[j] += step;
        let up: f64 = forward_only(&spec, &params, &xp)
            .unwrap()
            .data()
            .iter()
            .zip(&r)
            .map(|(a, b)| a * b)
            .sum();
        xp.data_mut()[j] -= 2.0 * step;
        let down: f64 = forward_only(&spec, &params, &xp)
            .unwrap()
            .data()
            .iter()
            .zip(&r)
            .map(|(a, b)| a * b)
            .sum();
        let numeric = (up - down) / (2.0 * step);
        assert!(
            rel_err(input_grad.data()[j], numeric) < 1e-4,
            "input coord {j}: {} vs {numeric}",
            input_grad.data()[j]
        );
    }
}

#[test]
fn relu_backward_gates_negative_preactivations() {
    let spec = NetworkSpec::new(vec![3], vec![LayerSpec::Relu], vec![]).unwrap();
    let params = ParamSet::zeros_like(&spec).unwrap();
    let x = Tensor::from_vec(&[3], vec![-0.5, 0.5, 2.0]).unwrap();
    let (_, trace) = forward(&spec, &params, &x).unwrap();
    let g = Tensor::from_vec(&[3], vec![1.0, 1.0, 1.0]).unwrap();
    let (_, gi) = backward(&spec, &params, &trace, &g).unwrap();
    assert_eq!(gi.data(), &[0.0, 1.0, 1.0]);
}

#[test]
fn dense_input_grad_is_weight_transpose_times_grad() {
    let spec = NetworkSpec::new(
        vec![3],
        vec![LayerSpec::Dense { input: 3, output: 2 }],
        vec![],
    )
    .unwrap();
    let mut rng = stream(9, StreamKind::ParamInit, 0);
    let params = init_params(&spec, &mut rng).unwrap();
    let x = rand_tensor(&[3], &mut rng);
    let (_, trace) = forward(&spec, &params, &x).unwrap();
    let g = Tensor::from_vec(&[2], vec![0.3, -0.7]).unwrap();
    let (_, gi) = backward(&spec, &params, &trace, &g).unwrap();
    let w = params.layers[0].as_ref().unwrap().weight.data();
    for i in 0..3 {
        let expect = w[i] * 0.3 + w[3 + i] * -0.7;
        assert!((gi.data()[i] - expect).abs() < 1e-12);
    }
}

/// Adjoint identity per layer: <g, J v> == <J^T g, v> with J v estimated by
/// central differences.
#[test]
fn layer_jacobians_pass_the_dot_product_test() {
    let mut rng = stream(10, StreamKind::ParamInit, 0);
    let cases: Vec<(Vec<usize>, LayerSpec)> = vec![
        (
            vec![2, 6, 6],
            LayerSpec::Conv2d {
                in_ch: 2,
                out_ch: 3,
                kernel: 3,
                stride: 1,
                pad: 1,
            },
        ),
        (vec![2, 6, 6], LayerSpec::AvgPool { kernel: 2, stride: 2 }),
        (vec![2, 3, 3], LayerSpec::Upsample { factor: 2 }),
        (vec![2, 3, 3], LayerSpec::Flatten),
        (vec![12], LayerSpec::Dense { input: 12, output: 5 }),
        (vec![8], LayerSpec::Relu),
    ];
    for (shape, layer) in cases {
        let spec = NetworkSpec::new(shape.clone(), vec![layer.clone()], vec![]).unwrap();
        let params = init_params(&spec, &mut rng).unwrap();
        // keep ReLU inputs away from the kink
        let x = {
            let mut t = rand_tensor(&shape, &mut rng);
            if matches!(layer, LayerSpec::Relu) {
                for v in t.data_mut() {
                    if v.abs() < 0.1 {
                        *v += 0.2 * v.signum().max(0.5);
                    }
                }
            }
            t
        };
        let v = rand_tensor(&shape, &mut rng);
        let (out, trace) = forward(&spec, &params, &x).unwrap();
        let g = rand_tensor(out.shape(), &mut rng);

        let eps = 1e-6;
        let mut xp = x.clone();
        for (a, b) in xp.data_mut().iter_mut().zip(v.data()) {
            *a += eps * b;
        }
        let up = forward_only(&spec, &params, &xp).unwrap();
        let mut xm = x.clone();
        for (a, b) in xm.data_mut().iter_mut().zip(v.data()) {
            *a -= eps * b;
        }
        let down = forward_only(&spec, &params, &xm).unwrap();
        let jv: Vec<f64> = up
            .data()
            .iter()
            .zip(down.data())
            .map(|(u, d)| (u - d) / (2.0 * eps))
            .collect();

        let lhs: f64 = g.data().iter().zip(&jv).map(|(a, b)| a * b).sum();
        let (_, jt_g) = backward(&spec, &params, &trace, &g).unwrap();
        let rhs: f64 = jt_g.data().iter().zip(v.data()).map(|(a, b)| a * b).sum();
        assert!(
            (lhs - rhs).abs() < 1e-8 * (1.0 + lhs.abs().max(rhs.abs())),
            "{}: <g,Jv>={lhs} vs <J^Tg,v>={rhs}",
            layer.tag()
        );
    }
}

#[test]
fn forward_is_batch_equivariant() {
    let spec = small_net();
    let mut rng = stream(11, StreamKind::ParamInit, 0);
    let params = init_params(&spec, &mut rng).unwrap();
    let xs: Vec<Tensor> = (0..3).map(|_| rand_tensor(&[1, 8, 8], &mut rng)).collect();
    let stacked: Vec<Vec<f64>> = xs
        .iter()
        .map(|x| forward_only(&spec, &params, x).unwrap().into_data())
        .collect();
    for (x, expect) in xs.iter().zip(&stacked) {
        let again = forward_only(&spec, &params, x).unwrap();
        assert_eq!(again.data(), expect.as_slice());
    }
}

#[test]
fn trace_cannot_be_consumed_twice() {
    let spec = small_net();
    let mut rng = stream(12, StreamKind::ParamInit, 0);
    let params = init_params(&spec, &mut rng).unwrap();
    let x = rand_tensor(&[1, 8, 8], &mut rng);
    let (out, trace) = forward(&spec, &params, &x).unwrap();
    let g = Tensor::zeros(out.shape());
    backward(&spec, &params, &trace, &g).unwrap();
    match backward(&spec, &params, &trace, &g) {
        Err(Error::TraceReused) => {}
        other => panic!("expected TraceReused, got {other:?}"),
    }
}

#[test]
fn wrong_input_shape_is_rejected() {
    let spec = small_net();
    let params = ParamSet::zeros_like(&spec).unwrap();
    let x = Tensor::zeros(&[1, 6, 6]);
    match forward_only(&spec, &params, &x) {
        Err(Error::ShapeMismatch(_)) => {}
        other => panic!("expected ShapeMismatch, got {other:?}"),
    }
}

#[test]
fn numerical_gradient_on_quadratic_and_product_losses() {
    let spec = NetworkSpec::new(
        vec![2],
        vec![LayerSpec::Dense { input: 2, output: 1 }],
        vec![],
    )
    .unwrap();
    let mut params = ParamSet::zeros_like(&spec).unwrap();
    params.layers[0].as_mut().unwrap().weight.data_mut()[0] = 2.0;
    params.layers[0].as_mut().unwrap().weight.data_mut()[1] = 3.0;

    // quadratic ||p||^2 / 2 -> gradient p
    let quad = |ps: &ParamSet| -> f64 {
        let mut acc = 0.0;
        for p in ps.layers.iter().flatten() {
            acc += p.weight.sq_norm() + p.bias.sq_norm();
        }
        acc / 2.0
    };
    let g = numerical_gradient(quad, &params, 1e-6);
    let gw = g.layers[0].as_ref().unwrap().weight.data();
    assert!((gw[0] - 2.0).abs() < 1e-8);
    assert!((gw[1] - 3.0).abs() < 1e-8);

    // constant loss -> zero gradient
    let g = numerical_gradient(|_| 5.0, &params, 1e-6);
    assert!(g.layers[0].as_ref().unwrap().weight.data().iter().all(|v| *v == 0.0));

    // product p0 * p1 at (2,3) -> gradient (3,2)
    let prod = |ps: &ParamSet| -> f64 {
        let w = ps.layers[0].as_ref().unwrap().weight.data();
        w[0] * w[1]
    };
    let g = numerical_gradient(prod, &params, 1e-6);
    let gw = g.layers[0].as_ref().unwrap().weight.data();
    assert!((gw[0] - 3.0).abs() < 1e-8);
    assert!((gw[1] - 2.0).abs() < 1e-8);
}

#[test]
fn checkpoint_roundtrip_preserves_forward_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.strw");
    let spec = small_net();
    let mut rng = stream(13, StreamKind::ParamInit, 0);
    let params = init_params(&spec, &mut rng).unwrap();
    save_checkpoint(&spec, &params, &path).unwrap();
    let (spec2, params2) = load_checkpoint(&path).unwrap();
    assert_eq!(spec, spec2);
    assert_eq!(params, params2);
    let x = rand_tensor(&[1, 8, 8], &mut rng);
    let a = forward_only(&spec, &params, &x).unwrap();
    let b = forward_only(&spec2, &params2, &x).unwrap();
    let bits_a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
    let bits_b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
    assert_eq!(bits_a, bits_b);
}

#[test]
fn truncated_checkpoint_returns_error_not_partial_params() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.strw");
    let spec = small_net();
    let params = init_params(&spec, &mut stream(14, StreamKind::ParamInit, 0)).unwrap();
    save_checkpoint(&spec, &params, &path).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes.truncate(bytes.len() / 2);
    std::fs::write(&path, &bytes).unwrap();
    assert!(load_checkpoint(&path).is_err());
}

#[test]
fn checkpoint_spec_mismatch_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.strw");
    let spec = small_net();
    let params = init_params(&spec, &mut stream(15, StreamKind::ParamInit, 0)).unwrap();
    save_checkpoint(&spec, &params, &path).unwrap();
    let other = NetworkSpec::encoder([1, 16, 16], 8).unwrap();
    match load_checkpoint_expecting(&path, &other) {
        Err(Error::SpecMismatch(_)) => {}
        other => panic!("expected SpecMismatch, got {other:?}"),
    }
}

/// Stabilized mean cosine between successive difference vectors.
fn straightness(traj: &[Vec<f64>]) -> f64 {
    let mut acc = 0.0;
    let mut n = 0;
    for w in traj.windows(3) {
        let d1: Vec<f64> = w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect();
        let d2: Vec<f64> = w[2].iter().zip(&w[1]).map(|(a, b)| a - b).collect();
        let dot: f64 = d1.iter().zip(&d2).map(|(a, b)| a * b).sum();
        let n1 = d1.iter().map(|v| v * v).sum::<f64>().sqrt();
        let n2 = d2.iter().map(|v| v * v).sum::<f64>().sqrt();
        acc += dot / (n1 * n2 + 1e-30);
        n += 1;
    }
    acc / n as f64
}

#[test]
fn relu_reduces_or_preserves_straightness() {
    let spec = NetworkSpec::new(vec![6], vec![LayerSpec::Relu], vec![]).unwrap();
    let params = ParamSet::zeros_like(&spec).unwrap();
    let mut rng = stream(16, StreamKind::ParamInit, 0);

    // straight lines crossing rectifier boundaries: straightness can only drop
    for _ in 0..20 {
        let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let traj: Vec<Vec<f64>> = (0..6)
            .map(|t| a.iter().zip(&b).map(|(x, y)| x + t as f64 * y).collect())
            .collect();
        let crossed = traj
            .iter()
            .zip(traj.iter().skip(1))
            .any(|(p, q)| p.iter().zip(q).any(|(x, y)| x.signum() != y.signum()));
        let out: Vec<Vec<f64>> = traj
            .iter()
            .map(|p| {
                forward_only(&spec, &params, &Tensor::from_vec(&[6], p.clone()).unwrap())
                    .unwrap()
                    .into_data()
            })
            .collect();
        let before = straightness(&traj);
        let after = straightness(&out);
        assert!(after <= before + 1e-12, "before {before} after {after}");
        if !crossed {
            // entirely inside one orthant: if positive, ReLU is the identity
            let positive = traj.iter().all(|p| p.iter().all(|v| *v > 0.0));
            if positive {
                assert!((after - before).abs() < 1e-15);
            }
        }
    }

    // trajectories strictly inside the positive orthant are untouched
    for _ in 0..5 {
        let a: Vec<f64> = (0..6).map(|_| rng.gen_range(2.0..3.0)).collect();
        let b: Vec<f64> = (0..6).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let traj: Vec<Vec<f64>> = (0..5)
            .map(|t| a.iter().zip(&b).map(|(x, y)| x + t as f64 * y).collect())
            .collect();
        let out: Vec<Vec<f64>> = traj
            .iter()
            .map(|p| {
                forward_only(&spec, &params, &Tensor::from_vec(&[6], p.clone()).unwrap())
                    .unwrap()
                    .into_data()
            })
            .collect();
        assert_eq!(traj, out);
    }
}

#[test]
fn encoder_default_has_seven_weight_layers_and_expected_shapes() {
    let spec = NetworkSpec::encoder([1, 64, 64], 128).unwrap();
    let weight_layers = spec.layers.iter().filter(|l| l.has_params()).count();
    assert_eq!(weight_layers, 7);
    let shapes = spec.boundary_shapes().unwrap();
    assert_eq!(shapes.last().unwrap(), &vec![128]);
    assert_eq!(spec.tap_dim("final").unwrap(), 128);
    assert_eq!(spec.tap_dim("mid").unwrap(), 64 * 16 * 16);
}

#[test]
fn decoder_mirrors_to_frame_shape() {
    let spec = NetworkSpec::decoder(128, [1, 64, 64]).unwrap();
    let weight_layers = spec.layers.iter().filter(|l| l.has_params()).count();
    assert_eq!(weight_layers, 7);
    let shapes = spec.boundary_shapes().unwrap();
    assert_eq!(shapes.last().unwrap(), &vec![1, 64, 64]);
}
