//! Operation-level tests against independent brute-force oracles, plus
//! central finite-difference gradient checks in 64-bit mode.

use ddl_core::tensor::gradcheck::{central_diff_grad, max_rel_err};
use ddl_core::tensor::{ConvSpec, Graph, Scalar, Shape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

fn random_vec(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

/// Independent nested-loop dilated-convolution oracle.
#[allow(clippy::too_many_arguments)]
fn conv_oracle(
    input: &[f64],
    (n, cin, d, h, w): (usize, usize, usize, usize, usize),
    weights: &[f64],
    bias: Option<&[f64]>,
    spec: &ConvSpec,
) -> Vec<f64> {
    let [kd, kh, kw] = spec.kernel;
    let [sd, sh, sw] = spec.stride;
    let [pd, ph, pw] = spec.padding;
    let [dd, dh, dw] = spec.dilation;
    let od = (d + 2 * pd - dd * (kd - 1) - 1) / sd + 1;
    let oh = (h + 2 * ph - dh * (kh - 1) - 1) / sh + 1;
    let ow = (w + 2 * pw - dw * (kw - 1) - 1) / sw + 1;
    let mut out = vec![0.0; n * spec.out_channels * od * oh * ow];
    let mut idx = 0;
    for b in 0..n {
        for oc in 0..spec.out_channels {
            for z in 0..od {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = bias.map_or(0.0, |bv| bv[oc]);
                        for ic in 0..cin {
                            for zk in 0..kd {
                                for yk in 0..kh {
                                    for xk in 0..kw {
                                        let iz = (z * sd + zk * dd) as isize - pd as isize;
                                        let iy = (y * sh + yk * dh) as isize - ph as isize;
                                        let ix = (x * sw + xk * dw) as isize - pw as isize;
                                        if iz < 0
                                            || iy < 0
                                            || ix < 0
                                            || iz >= d as isize
                                            || iy >= h as isize
                                            || ix >= w as isize
                                        {
                                            continue;
                                        }
                                        let iv = input[(((b * cin + ic) * d + iz as usize) * h
                                            + iy as usize)
                                            * w
                                            + ix as usize];
                                        let wv = weights[(((oc * cin + ic) * kd + zk) * kh + yk)
                                            * kw
                                            + xk];
                                        acc += iv * wv;
                                    }
                                }
                            }
                        }
                        out[idx] = acc;
                        idx += 1;
                    }
                }
            }
        }
    }
    out
}

#[test]
fn conv3d_identity_kernel_passes_input_through() {
    let mut g: Graph<f64> = Graph::new();
    let x = g
        .leaf(
            Shape::new(vec![1, 1, 1, 3, 3]),
            vec![1., 2., 3., 4., 5., 6., 7., 8., 9.],
            false,
        )
        .unwrap();
    let spec = ConvSpec {
        in_channels: 1,
        out_channels: 1,
        kernel: [1, 1, 1],
        stride: [1, 1, 1],
        padding: [0, 0, 0],
        dilation: [1, 1, 1],
        bias: true,
    };
    let w = g.constant(spec.weight_shape(), vec![1.0]).unwrap();
    let b = g.constant(Shape::new(vec![1]), vec![0.0]).unwrap();
    let y = g.conv3d(x, w, Some(b), &spec).unwrap();
    assert_eq!(g.value(y), g.value(x));
}

#[test]
fn conv3d_all_ones_cube_sums_to_27() {
    let mut g: Graph<f64> = Graph::new();
    let x = g
        .leaf(Shape::new(vec![1, 1, 3, 3, 3]), vec![1.0; 27], false)
        .unwrap();
    let spec = ConvSpec {
        in_channels: 1,
        out_channels: 1,
        kernel: [3, 3, 3],
        stride: [1, 1, 1],
        padding: [0, 0, 0],
        dilation: [1, 1, 1],
        bias: false,
    };
    let w = g.constant(spec.weight_shape(), vec![1.0; 27]).unwrap();
    let y = g.conv3d(x, w, None, &spec).unwrap();
    assert_eq!(g.shape(y).dims(), &[1, 1, 1, 1, 1]);
    assert_eq!(g.value(y), &[27.0]);
}

#[test]
fn conv3d_matches_nested_loop_oracle() {
    // Covers dilation, padding, strides, multiple channels and batch.
    let cases = [
        (ConvSpec::unit(2, 3, 3, 1), (1, 2, 5, 5, 5)),
        (ConvSpec::dilated(2, 1, 3, 2), (1, 2, 5, 5, 5)),
        (
            ConvSpec {
                in_channels: 2,
                out_channels: 2,
                kernel: [2, 3, 2],
                stride: [2, 1, 2],
                padding: [0, 1, 1],
                dilation: [1, 1, 2],
                bias: true,
            },
            (2, 2, 6, 5, 6),
        ),
    ];
    for (case_idx, (spec, dims)) in cases.iter().enumerate() {
        let mut r = rng(42 + case_idx as u64);
        let (n, cin, d, h, w) = *dims;
        let input = random_vec(&mut r, n * cin * d * h * w);
        let weights = random_vec(&mut r, spec.weight_shape().numel());
        let bias: Option<Vec<f64>> = spec.bias.then(|| random_vec(&mut r, spec.out_channels));

        let mut g: Graph<f64> = Graph::new();
        let xi = g
            .leaf(Shape::new(vec![n, cin, d, h, w]), input.clone(), false)
            .unwrap();
        let wi = g.constant(spec.weight_shape(), weights.clone()).unwrap();
        let bi = bias
            .as_ref()
            .map(|bv| g.constant(Shape::new(vec![spec.out_channels]), bv.clone()).unwrap());
        let y = g.conv3d(xi, wi, bi, spec).unwrap();

        let expect = conv_oracle(&input, (n, cin, d, h, w), &weights, bias.as_deref(), spec);
        assert_eq!(g.value(y).len(), expect.len());
        for (got, want) in g.value(y).iter().zip(expect.iter()) {
            assert!(
                (got - want).abs() < 1e-6,
                "case {case_idx}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn conv3d_rejects_channel_mismatch_and_zero_output() {
    let mut g: Graph<f64> = Graph::new();
    let x = g
        .leaf(Shape::new(vec![1, 2, 4, 4, 4]), vec![0.0; 128], false)
        .unwrap();
    let spec = ConvSpec::unit(3, 1, 3, 1);
    let w = g.constant(spec.weight_shape(), vec![0.0; 81]).unwrap();
    let b = g.constant(Shape::new(vec![1]), vec![0.0]).unwrap();
    assert!(g.conv3d(x, w, Some(b), &spec).is_err());

    // 5^3 dilated kernel span exceeds a 4^3 unpadded input.
    let spec = ConvSpec {
        in_channels: 2,
        out_channels: 1,
        kernel: [3, 3, 3],
        stride: [1, 1, 1],
        padding: [0, 0, 0],
        dilation: [2, 2, 2],
        bias: false,
    };
    let w = g.constant(spec.weight_shape(), vec![0.0; 54]).unwrap();
    assert!(g.conv3d(x, w, None, &spec).is_err());
}

#[test]
fn maxpool_constant_input_stays_constant() {
    let mut g: Graph<f64> = Graph::new();
    let x = g
        .leaf(Shape::new(vec![1, 1, 4, 4, 4]), vec![2.5; 64], false)
        .unwrap();
    let y = g.maxpool3d(x, [2, 2, 2], [2, 2, 2]).unwrap();
    assert_eq!(g.shape(y).dims(), &[1, 1, 2, 2, 2]);
    assert!(g.value(y).iter().all(|&v| v == 2.5));
}

#[test]
fn maxpool_window_enumeration_picks_max() {
    let mut g: Graph<f64> = Graph::new();
    let vals: Vec<f64> = (1..=8).map(|v| v as f64).collect();
    let x = g
        .leaf(Shape::new(vec![1, 1, 2, 2, 2]), vals, false)
        .unwrap();
    let y = g.maxpool3d(x, [2, 2, 2], [2, 2, 2]).unwrap();
    assert_eq!(g.value(y), &[8.0]);
}

#[test]
fn maxpool_gradient_routes_to_argmax_only() {
    let mut g: Graph<f64> = Graph::new();
    let vals = vec![1.0, 7.0, 3.0, 2.0, 5.0, 4.0, 0.0, 6.0];
    let x = g
        .leaf(Shape::new(vec![1, 1, 2, 2, 2]), vals, true)
        .unwrap();
    let y = g.maxpool3d(x, [2, 2, 2], [2, 2, 2]).unwrap();
    let loss = g.sum(y);
    g.backward(loss).unwrap();
    let grad = g.grad(x).unwrap();
    let expect = [0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    assert_eq!(grad, &expect);
}

#[test]
fn maxpool_rejects_non_divisible_extents() {
    let mut g: Graph<f64> = Graph::new();
    let x = g
        .leaf(Shape::new(vec![1, 1, 3, 4, 4]), vec![0.0; 48], false)
        .unwrap();
    assert!(g.maxpool3d(x, [2, 2, 2], [2, 2, 2]).is_err());
}

#[test]
fn maxpool_tie_goes_to_first_in_scan_order() {
    let mut g: Graph<f64> = Graph::new();
    let x = g
        .leaf(Shape::new(vec![1, 1, 2, 2, 2]), vec![4.0; 8], true)
        .unwrap();
    let y = g.maxpool3d(x, [2, 2, 2], [2, 2, 2]).unwrap();
    let loss = g.sum(y);
    g.backward(loss).unwrap();
    let grad = g.grad(x).unwrap();
    assert_eq!(grad[0], 1.0);
    assert!(grad[1..].iter().all(|&v| v == 0.0));
}

#[test]
fn group_norm_constant_input_normalizes_to_beta() {
    let mut g: Graph<f64> = Graph::new();
    let x = g
        .leaf(Shape::new(vec![1, 4, 2, 2, 2]), vec![3.0; 32], false)
        .unwrap();
    let gamma = g.constant(Shape::new(vec![4]), vec![1.0; 4]).unwrap();
    let beta = g.constant(Shape::new(vec![4]), vec![0.0; 4]).unwrap();
    let y = g.group_norm(x, 2, gamma, beta, 1e-5).unwrap();
    assert!(g.value(y).iter().all(|&v| v.abs() < 1e-9));

    // gamma = 0, beta = c -> everything equals c
    let gamma0 = g.constant(Shape::new(vec![4]), vec![0.0; 4]).unwrap();
    let betac = g.constant(Shape::new(vec![4]), vec![0.75; 4]).unwrap();
    let y2 = g.group_norm(x, 2, gamma0, betac, 1e-5).unwrap();
    assert!(g.value(y2).iter().all(|&v| v == 0.75));
}

#[test]
fn group_norm_statistics_match_independent_recomputation() {
    let mut r = rng(7);
    let mut g: Graph<f64> = Graph::new();
    let vals = random_vec(&mut r, 2 * 6 * 3 * 3 * 3);
    let x = g
        .leaf(Shape::new(vec![2, 6, 3, 3, 3]), vals.clone(), false)
        .unwrap();
    let gamma = g.constant(Shape::new(vec![6]), vec![1.0; 6]).unwrap();
    let beta = g.constant(Shape::new(vec![6]), vec![0.0; 6]).unwrap();
    let y = g.group_norm(x, 3, gamma, beta, 1e-9).unwrap();
    let out = g.value(y);
    // Per (batch, group) the normalized block must have mean ~0, var ~1.
    let sp = 27;
    let cg = 2;
    for b in 0..2 {
        for grp in 0..3 {
            let start = (b * 6 + grp * cg) * sp;
            let block = &out[start..start + cg * sp];
            let m = cg * sp;
            let mean: f64 = block.iter().sum::<f64>() / m as f64;
            let var: f64 = block.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64;
            assert!(mean.abs() < 1e-5, "group mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "group var {var}");
        }
    }
}

#[test]
fn group_norm_rejects_indivisible_channels() {
    let mut g: Graph<f64> = Graph::new();
    let x = g
        .leaf(Shape::new(vec![1, 5, 2, 2, 2]), vec![0.0; 40], false)
        .unwrap();
    let gamma = g.constant(Shape::new(vec![5]), vec![1.0; 5]).unwrap();
    let beta = g.constant(Shape::new(vec![5]), vec![0.0; 5]).unwrap();
    assert!(g.group_norm(x, 2, gamma, beta, 1e-5).is_err());
}

#[test]
fn activations_fixed_points() {
    let mut g: Graph<f64> = Graph::new();
    let x = g
        .leaf(Shape::new(vec![4]), vec![0.0, -1.5, 2.0, -0.25], false)
        .unwrap();
    let t = g.tanh(x);
    assert_eq!(g.value(t)[0], 0.0);
    let r = g.relu(x);
    assert_eq!(g.value(r), &[0.0, 0.0, 2.0, 0.0]);
    let s = g.sigmoid(x);
    assert!((g.value(s)[0] - 0.5).abs() < 1e-12);
    assert!(g.value(s).iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn concat_channels_shapes_and_roundtrip() {
    let mut r = rng(9);
    let mut g: Graph<f64> = Graph::new();
    let a_vals = random_vec(&mut r, 4 * 8);
    let b_vals = random_vec(&mut r, 6 * 8);
    let a = g
        .leaf(Shape::new(vec![1, 4, 2, 2, 2]), a_vals.clone(), false)
        .unwrap();
    let b = g
        .leaf(Shape::new(vec![1, 6, 2, 2, 2]), b_vals.clone(), false)
        .unwrap();
    let y = g.concat_channels(a, b).unwrap();
    assert_eq!(g.shape(y).dims(), &[1, 10, 2, 2, 2]);

    // Split after concat recovers both inputs bit-exactly.
    let sa = g.slice_channels(y, 0, 4).unwrap();
    let sb = g.slice_channels(y, 4, 6).unwrap();
    assert_eq!(g.value(sa), a_vals.as_slice());
    assert_eq!(g.value(sb), b_vals.as_slice());
}

#[test]
fn concat_channels_rejects_spatial_mismatch() {
    let mut g: Graph<f64> = Graph::new();
    let a = g
        .leaf(Shape::new(vec![1, 1, 2, 2, 2]), vec![0.0; 8], false)
        .unwrap();
    let b = g
        .leaf(Shape::new(vec![1, 1, 2, 2, 3]), vec![0.0; 12], false)
        .unwrap();
    assert!(g.concat_channels(a, b).is_err());
}

#[test]
fn mean_over_set_basics() {
    let mut g: Graph<f64> = Graph::new();
    let t = g
        .leaf(Shape::new(vec![1, 1, 1, 1, 3]), vec![1.0, -2.0, 0.5], false)
        .unwrap();
    let single = g.mean_over_set(&[t]).unwrap();
    assert_eq!(g.value(single), g.value(t));

    let neg = g.neg(t);
    let zero = g.mean_over_set(&[t, neg]).unwrap();
    assert!(g.value(zero).iter().all(|&v| v == 0.0));

    assert!(g.mean_over_set(&[]).is_err());
}

#[test]
fn mean_over_set_is_bit_exact_permutation_invariant() {
    let mut r = rng(11);
    let mut g: Graph<f64> = Graph::new();
    let tensors: Vec<_> = (0..5)
        .map(|_| {
            let v = random_vec(&mut r, 16);
            g.leaf(Shape::new(vec![1, 1, 4, 2, 2]), v, false).unwrap()
        })
        .collect();
    let base = g.mean_over_set(&tensors).unwrap();
    let base_bits: Vec<u64> = g.value(base).iter().map(|v| v.to_bits()).collect();

    let perms = [
        vec![4, 3, 2, 1, 0],
        vec![2, 0, 4, 1, 3],
        vec![1, 4, 0, 3, 2],
        vec![3, 1, 4, 2, 0],
    ];
    for perm in &perms {
        let arranged: Vec<_> = perm.iter().map(|&i| tensors[i]).collect();
        let m = g.mean_over_set(&arranged).unwrap();
        let bits: Vec<u64> = g.value(m).iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, base_bits, "permutation {perm:?} changed the mean");
    }
}

#[test]
fn upsample_constant_and_oned_oracle() {
    let mut g: Graph<f64> = Graph::new();
    let c = g
        .leaf(Shape::new(vec![1, 1, 2, 2, 2]), vec![1.25; 8], false)
        .unwrap();
    let up = g.upsample_trilinear2x(c).unwrap();
    assert_eq!(g.shape(up).dims(), &[1, 1, 4, 4, 4]);
    assert!(g.value(up).iter().all(|&v| (v - 1.25).abs() < 1e-12));

    // 1-D analog [0, 2]: closed-form trilinear weights with
    // align_corners=false give [0, 0.5, 1.5, 2].
    let x = g
        .leaf(Shape::new(vec![1, 1, 1, 1, 2]), vec![0.0, 2.0], false)
        .unwrap();
    let y = g.upsample_trilinear2x(x).unwrap();
    let vals = g.value(y);
    // Output is [1,1,2,2,4]; every (z, y) row equals the 1-D answer.
    for row in vals.chunks(4) {
        assert!((row[0] - 0.0).abs() < 1e-12);
        assert!((row[1] - 0.5).abs() < 1e-12);
        assert!((row[2] - 1.5).abs() < 1e-12);
        assert!((row[3] - 2.0).abs() < 1e-12);
    }
}

#[test]
fn downsample_after_upsample_of_constant_is_identity() {
    let mut g: Graph<f64> = Graph::new();
    let c = g
        .leaf(Shape::new(vec![1, 2, 2, 2, 2]), vec![0.7; 16], false)
        .unwrap();
    let up = g.upsample_trilinear2x(c).unwrap();
    let down = g.maxpool3d(up, [2, 2, 2], [2, 2, 2]).unwrap();
    for (a, b) in g.value(down).iter().zip(g.value(c).iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn backward_sum_gives_ones_and_square_gives_2x() {
    let mut g: Graph<f64> = Graph::new();
    let w = g
        .leaf(Shape::new(vec![3]), vec![3.0, -1.0, 0.5], true)
        .unwrap();
    let loss = g.sum(w);
    g.backward(loss).unwrap();
    assert_eq!(g.grad(w).unwrap(), &[1.0, 1.0, 1.0]);

    let mut g: Graph<f64> = Graph::new();
    let w = g.leaf(Shape::new(vec![1]), vec![3.0], true).unwrap();
    let sq = g.mul(w, w).unwrap();
    let loss = g.sum(sq);
    g.backward(loss).unwrap();
    assert_eq!(g.grad(w).unwrap(), &[6.0]);
}

#[test]
fn backward_rejects_non_scalar_and_second_call() {
    let mut g: Graph<f64> = Graph::new();
    let w = g.leaf(Shape::new(vec![2]), vec![1.0, 2.0], true).unwrap();
    assert!(g.backward(w).is_err());

    let loss = g.sum(w);
    g.backward(loss).unwrap();
    assert!(g.backward(loss).is_err());
}

#[test]
fn inference_graph_matches_training_graph_values() {
    let mut r = rng(21);
    let vals = random_vec(&mut r, 2 * 8);
    let weights = random_vec(&mut r, 4 * 2 * 27);
    let bias = random_vec(&mut r, 4);
    let spec = ConvSpec::unit(2, 4, 3, 1);

    let run = |grad: bool| -> Vec<f64> {
        let mut g: Graph<f64> = if grad { Graph::new() } else { Graph::inference() };
        let x = g
            .leaf(Shape::new(vec![1, 2, 2, 2, 2]), vals.clone(), true)
            .unwrap();
        let w = g.leaf(spec.weight_shape(), weights.clone(), true).unwrap();
        let b = g.leaf(Shape::new(vec![4]), bias.clone(), true).unwrap();
        let y = g.conv3d(x, w, Some(b), &spec).unwrap();
        let a = g.relu(y);
        let s = g.sigmoid(a);
        g.value_vec(s)
    };
    let with_grad = run(true);
    let without = run(false);
    assert_eq!(with_grad, without);
}

// ---- finite-difference gradient checks, f64, 20 seeds per op ----

fn fd_check<F>(seeds: std::ops::Range<u64>, tol: f64, mut build: F)
where
    F: FnMut(&mut ChaCha12Rng) -> (Vec<f64>, Box<dyn Fn(&[f64]) -> (f64, Vec<f64>)>),
{
    for seed in seeds {
        let mut r = rng(seed);
        let (x0, eval) = build(&mut r);
        let analytic = eval(&x0).1;
        let mut f = |x: &[f64]| eval(x).0;
        let numeric = central_diff_grad(&mut f, &x0, 1e-6);
        let err = max_rel_err(&analytic, &numeric);
        assert!(err < tol, "seed {seed}: rel err {err} >= {tol}");
    }
}

#[test]
fn fd_conv3d() {
    fd_check(0..20, 1e-5, |r| {
        let spec = ConvSpec::dilated(2, 2, 3, 2);
        let n_in = 2 * 4 * 4 * 4;
        let n_w = spec.weight_shape().numel();
        let x0: Vec<f64> = (0..n_in + n_w + 2)
            .map(|_| r.gen_range(-1.5..1.5))
            .collect();
        let spec2 = spec.clone();
        (
            x0,
            Box::new(move |x: &[f64]| {
                let mut g: Graph<f64> = Graph::new();
                let xi = g
                    .leaf(Shape::new(vec![1, 2, 4, 4, 4]), x[..n_in].to_vec(), true)
                    .unwrap();
                let wi = g
                    .leaf(spec2.weight_shape(), x[n_in..n_in + n_w].to_vec(), true)
                    .unwrap();
                let bi = g
                    .leaf(Shape::new(vec![2]), x[n_in + n_w..].to_vec(), true)
                    .unwrap();
                let y = g.conv3d(xi, wi, Some(bi), &spec2).unwrap();
                let sq = g.mul(y, y).unwrap();
                let loss = g.sum(sq);
                g.backward(loss).unwrap();
                let mut grad = g.grad(xi).unwrap().to_vec();
                grad.extend_from_slice(g.grad(wi).unwrap());
                grad.extend_from_slice(g.grad(bi).unwrap());
                (g.scalar_value(loss).unwrap(), grad)
            }),
        )
    });
}

#[test]
fn fd_maxpool() {
    fd_check(0..20, 1e-5, |r| {
        let x0: Vec<f64> = (0..64).map(|_| r.gen_range(-2.0..2.0)).collect();
        (
            x0,
            Box::new(|x: &[f64]| {
                let mut g: Graph<f64> = Graph::new();
                let xi = g
                    .leaf(Shape::new(vec![1, 1, 4, 4, 4]), x.to_vec(), true)
                    .unwrap();
                let y = g.maxpool3d(xi, [2, 2, 2], [2, 2, 2]).unwrap();
                let sq = g.mul(y, y).unwrap();
                let loss = g.sum(sq);
                g.backward(loss).unwrap();
                (g.scalar_value(loss).unwrap(), g.grad(xi).unwrap().to_vec())
            }),
        )
    });
}

#[test]
fn fd_group_norm() {
    fd_check(0..20, 1e-5, |r| {
        let n_in = 4 * 8;
        let x0: Vec<f64> = (0..n_in + 8)
            .map(|_| r.gen_range(-1.5..1.5))
            .collect();
        (
            x0,
            Box::new(move |x: &[f64]| {
                let mut g: Graph<f64> = Graph::new();
                let xi = g
                    .leaf(Shape::new(vec![1, 4, 2, 2, 2]), x[..n_in].to_vec(), true)
                    .unwrap();
                let gamma = g
                    .leaf(Shape::new(vec![4]), x[n_in..n_in + 4].to_vec(), true)
                    .unwrap();
                let beta = g
                    .leaf(Shape::new(vec![4]), x[n_in + 4..].to_vec(), true)
                    .unwrap();
                let y = g.group_norm(xi, 2, gamma, beta, 1e-3).unwrap();
                let sq = g.mul(y, y).unwrap();
                let loss = g.sum(sq);
                g.backward(loss).unwrap();
                let mut grad = g.grad(xi).unwrap().to_vec();
                grad.extend_from_slice(g.grad(gamma).unwrap());
                grad.extend_from_slice(g.grad(beta).unwrap());
                (g.scalar_value(loss).unwrap(), grad)
            }),
        )
    });
}

#[test]
fn fd_activations_elementwise_and_mean() {
    // tanh gradient at random points vs central differences (also exercises
    // sigmoid, relu away from the kink, affine, and mean).
    fd_check(0..20, 1e-5, |r| {
        let x0: Vec<f64> = (0..24)
            .map(|_| {
                let v: f64 = r.gen_range(0.15..1.8);
                if r.gen_bool(0.5) {
                    v
                } else {
                    -v
                }
            })
            .collect();
        (
            x0,
            Box::new(|x: &[f64]| {
                let mut g: Graph<f64> = Graph::new();
                let xi = g.leaf(Shape::new(vec![24]), x.to_vec(), true).unwrap();
                let t = g.tanh(xi);
                let s = g.sigmoid(xi);
                let rl = g.relu(xi);
                let a = g.add(t, s).unwrap();
                let b = g.add(a, rl).unwrap();
                let c = g.affine(b, 1.7, -0.3);
                let loss = g.mean(c);
                g.backward(loss).unwrap();
                (g.scalar_value(loss).unwrap(), g.grad(xi).unwrap().to_vec())
            }),
        )
    });
}

#[test]
fn fd_upsample_concat_meanset() {
    fd_check(0..20, 1e-5, |r| {
        let x0: Vec<f64> = (0..3 * 8).map(|_| r.gen_range(-1.0..1.0)).collect();
        (
            x0,
            Box::new(|x: &[f64]| {
                let mut g: Graph<f64> = Graph::new();
                let a = g
                    .leaf(Shape::new(vec![1, 1, 2, 2, 2]), x[..8].to_vec(), true)
                    .unwrap();
                let b = g
                    .leaf(Shape::new(vec![1, 1, 2, 2, 2]), x[8..16].to_vec(), true)
                    .unwrap();
                let c = g
                    .leaf(Shape::new(vec![1, 1, 2, 2, 2]), x[16..].to_vec(), true)
                    .unwrap();
                let m = g.mean_over_set(&[a, b, c]).unwrap();
                let cat = g.concat_channels(m, a).unwrap();
                let up = g.upsample_trilinear2x(cat).unwrap();
                let sq = g.mul(up, up).unwrap();
                let loss = g.sum(sq);
                g.backward(loss).unwrap();
                let mut grad = g.grad(a).unwrap().to_vec();
                grad.extend_from_slice(g.grad(b).unwrap());
                grad.extend_from_slice(g.grad(c).unwrap());
                (g.scalar_value(loss).unwrap(), grad)
            }),
        )
    });
}

#[test]
fn fd_binary_ops_and_division() {
    fd_check(0..20, 1e-5, |r| {
        let x0: Vec<f64> = (0..12)
            .map(|i| {
                let v: f64 = r.gen_range(0.4..2.0);
                if i % 2 == 0 {
                    v
                } else {
                    -v
                }
            })
            .collect();
        (
            x0,
            Box::new(|x: &[f64]| {
                let mut g: Graph<f64> = Graph::new();
                let a = g.leaf(Shape::new(vec![6]), x[..6].to_vec(), true).unwrap();
                let b = g.leaf(Shape::new(vec![6]), x[6..].to_vec(), true).unwrap();
                let s = g.add(a, b).unwrap();
                let d = g.sub(a, b).unwrap();
                let p = g.mul(s, d).unwrap();
                let q = g.div(p, b).unwrap();
                let loss = g.sum(q);
                g.backward(loss).unwrap();
                let mut grad = g.grad(a).unwrap().to_vec();
                grad.extend_from_slice(g.grad(b).unwrap());
                (g.scalar_value(loss).unwrap(), grad)
            }),
        )
    });
}

/// The f32 path takes the accelerated kernels; pin it against the f64
/// nested-loop oracle and the f64 generic backward path.
#[test]
fn conv3d_f32_fast_path_matches_f64_oracle_and_grads() {
    for (case_idx, spec) in [
        ConvSpec::unit(3, 4, 3, 1),
        ConvSpec::dilated(2, 3, 3, 2),
        ConvSpec::dilated(4, 2, 3, 4),
    ]
    .iter()
    .enumerate()
    {
        let mut r = rng(100 + case_idx as u64);
        let (n, cin, d, h, w) = (1, spec.in_channels, 10, 9, 12);
        let input = random_vec(&mut r, n * cin * d * h * w);
        let weights = random_vec(&mut r, spec.weight_shape().numel());
        let bias = random_vec(&mut r, spec.out_channels);

        let oracle = conv_oracle(&input, (n, cin, d, h, w), &weights, Some(&bias), spec);

        // f32 forward + backward
        let mut g32: Graph<f32> = Graph::new();
        let xi = g32
            .leaf(
                Shape::new(vec![n, cin, d, h, w]),
                input.iter().map(|&v| v as f32).collect(),
                true,
            )
            .unwrap();
        let wi = g32
            .leaf(
                spec.weight_shape(),
                weights.iter().map(|&v| v as f32).collect(),
                true,
            )
            .unwrap();
        let bi = g32
            .leaf(
                Shape::new(vec![spec.out_channels]),
                bias.iter().map(|&v| v as f32).collect(),
                true,
            )
            .unwrap();
        let y32 = g32.conv3d(xi, wi, Some(bi), spec).unwrap();
        for (got, want) in g32.value(y32).iter().zip(oracle.iter()) {
            assert!(
                (got.to_f64() - want).abs() < 2e-4,
                "case {case_idx} forward: {got} vs {want}"
            );
        }
        let sq32 = g32.mul(y32, y32).unwrap();
        let loss32 = g32.sum(sq32);
        g32.backward(loss32).unwrap();

        // f64 reference gradients through the generic path
        let mut g64: Graph<f64> = Graph::new();
        let xi64 = g64
            .leaf(Shape::new(vec![n, cin, d, h, w]), input.clone(), true)
            .unwrap();
        let wi64 = g64.leaf(spec.weight_shape(), weights.clone(), true).unwrap();
        let bi64 = g64
            .leaf(Shape::new(vec![spec.out_channels]), bias.clone(), true)
            .unwrap();
        let y64 = g64.conv3d(xi64, wi64, Some(bi64), spec).unwrap();
        let sq64 = g64.mul(y64, y64).unwrap();
        let loss64 = g64.sum(sq64);
        g64.backward(loss64).unwrap();

        for (label, got, want) in [
            ("input", g32.grad(xi).unwrap(), g64.grad(xi64).unwrap()),
            ("weights", g32.grad(wi).unwrap(), g64.grad(wi64).unwrap()),
            ("bias", g32.grad(bi).unwrap(), g64.grad(bi64).unwrap()),
        ] {
            for (a, b) in got.iter().zip(want.iter()) {
                let scale = b.abs().max(1.0);
                assert!(
                    (a.to_f64() - b).abs() / scale < 5e-4,
                    "case {case_idx} {label} grad: {a} vs {b}"
                );
            }
        }
    }
}
