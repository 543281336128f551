mod common;

use common::oracles::{affine, attention_oracle, mat, max_diff, param_error, random, unary_error};
use intentdrive::diffcore::{
    nn::zero_params, Attention, ConvGeom, Mlp, Optimizer, OptimizerConfig, OptimizerKind, ParamStore, Tape,
    Tensor, Var,
};
use intentdrive::gradcheck::{numeric_gradient, relative_error};
use intentdrive::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn check_unary(x: &Tensor, op: impl Fn(&mut Tape, Var) -> Var, tol: f64) {
    let err = unary_error(x, op);
    assert!(err < tol, "relative error {err}");
}

// ---------------------------------------------------------------- matmul

#[test]
fn matmul_identity_and_hand_arithmetic() {
    let mut tape = Tape::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = tape.constant(random(&[2, 2], &mut rng));
    let eye = tape.constant(Tensor::eye(2));
    let y = tape.matmul(eye, x).unwrap();
    assert_eq!(tape.value(y), tape.value(x));

    let a = tape.constant(Tensor::new([2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let b = tape.constant(Tensor::new([2, 1], vec![1.0, 1.0]).unwrap());
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c).data(), &[3.0, 7.0]);
    assert_eq!(tape.shape(c), &[2, 1]);
}

#[test]
fn matmul_gradient_of_sum_is_ones_times_b_transposed() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (av, bv) = (random(&[3, 4], &mut rng), random(&[4, 5], &mut rng));
    let mut tape = Tape::new();
    let a = tape.input(av.clone());
    let b = tape.constant(bv.clone());
    let c = tape.matmul(a, b).unwrap();
    let loss = tape.sum(c);
    let g = tape.backward(loss).unwrap().get(a).unwrap().clone();
    // ones(3,5)·bᵀ: every row equals the row sums of b.
    for i in 0..3 {
        for k in 0..4 {
            let row_sum: f64 = (0..5).map(|j| bv.get(&[k, j])).sum();
            assert!((g.get(&[i, k]) - row_sum).abs() < 1e-12);
        }
    }
    let numeric = numeric_gradient(
        |p| {
            let mut t = Tape::new();
            let a = t.constant(p.clone());
            let b = t.constant(bv.clone());
            let c = t.matmul(a, b).unwrap();
            t.value(c).sum()
        },
        &av,
        1e-5,
    );
    assert!(relative_error(g.data(), numeric.data(), 1e-12) < 1e-4);
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros([2, 3]));
    let b = tape.constant(Tensor::zeros([4, 5]));
    match tape.matmul(a, b) {
        Err(Error::ShapeMismatch { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![4, 5]);
        }
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn batched_and_transposed_matmul_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b_shared = random(&[4, 3], &mut rng);
    check_unary(&random(&[2, 3, 4], &mut rng), |t, x| {
        let b = t.constant(b_shared.clone());
        t.matmul(x, b).unwrap()
    }, 1e-4);
    let b_batched = random(&[2, 5, 4], &mut rng);
    check_unary(&random(&[2, 3, 4], &mut rng), |t, x| {
        let b = t.constant(b_batched.clone());
        t.matmul_t(x, b).unwrap()
    }, 1e-4);
    // gradient w.r.t. the right operand, both layouts
    let a_fixed = random(&[2, 3, 4], &mut rng);
    check_unary(&random(&[2, 5, 4], &mut rng), |t, x| {
        let a = t.constant(a_fixed.clone());
        t.matmul_t(a, x).unwrap()
    }, 1e-4);
    check_unary(&random(&[4, 6], &mut rng), |t, x| {
        let a = t.constant(a_fixed.clone());
        t.matmul(a, x).unwrap()
    }, 1e-4);
}

// ---------------------------------------------------------------- softmax

fn softmax_of(values: &[f64]) -> Vec<f64> {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new([values.len()], values.to_vec()).unwrap());
    let y = tape.softmax(x, 0).unwrap();
    tape.value(y).data().to_vec()
}

#[test]
fn softmax_examples() {
    for p in softmax_of(&[0.0, 0.0, 0.0]) {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
    let s = softmax_of(&[1000.0, 0.0]);
    assert!((s[0] - 1.0).abs() < 1e-12 && s[1].abs() < 1e-12);

    let s = softmax_of(&[1.0, 2.0, 3.0]);
    let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| (v - 3.0).exp()).sum();
    for (i, v) in [1.0f64, 2.0, 3.0].iter().enumerate() {
        assert!((s[i] - (v - 3.0).exp() / z).abs() < 1e-15);
    }
    assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn softmax_gradient_along_inner_axis() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    check_unary(&random(&[3, 4, 2], &mut rng), |t, x| t.softmax(x, 1).unwrap(), 1e-4);
    check_unary(&random(&[3, 5], &mut rng), |t, x| t.softmax(x, 1).unwrap(), 1e-4);
}

proptest! {
    #[test]
    fn softmax_normalised_and_shift_invariant(
        xs in proptest::collection::vec(-50.0f64..50.0, 1..12),
        shift in -100.0f64..100.0,
    ) {
        let a = softmax_of(&xs);
        let shifted: Vec<f64> = xs.iter().map(|v| v + shift).collect();
        let b = softmax_of(&shifted);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(a.iter().all(|&p| p >= 0.0));
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }
}

// ---------------------------------------------------------------- other ops

#[test]
fn elementwise_and_structural_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[3, 4], &mut rng);
    let other = random(&[3, 4], &mut rng);
    let row = random(&[4], &mut rng);
    check_unary(&x, |t, x| t.gelu(x), 1e-4);
    check_unary(&x, |t, x| t.scale(x, -1.7), 1e-4);
    check_unary(&x, |t, x| {
        let o = t.constant(other.clone());
        t.mul(x, o).unwrap()
    }, 1e-4);
    check_unary(&x, |t, x| {
        let o = t.constant(other.clone());
        let y = t.sub(o, x).unwrap();
        let y = t.add(y, o).unwrap();
        t.add(y, y).unwrap()
    }, 1e-4);
    check_unary(&row, |t, r| {
        let o = t.constant(other.clone());
        t.add_broadcast(o, r).unwrap()
    }, 1e-4);
    check_unary(&random(&[2, 3, 4], &mut rng), |t, x| t.permute(x, &[2, 0, 1]).unwrap(), 1e-4);
    check_unary(&x, |t, x| {
        let o = t.constant(other.clone());
        t.concat(&[x, o, x], 1).unwrap()
    }, 1e-4);
    check_unary(&x, |t, x| t.gather(x, &[2, 0, 2, 1]).unwrap(), 1e-4);
    check_unary(&random(&[2, 3, 4], &mut rng), |t, x| t.mean_axis(x, 1).unwrap(), 1e-4);
    check_unary(&x, |t, x| t.reshape(x, [2, 6]).unwrap(), 1e-4);
}

#[test]
fn im2col_gradient_and_layout() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let geom = ConvGeom { kernel: 3, stride: 2, pad: 1 };
    check_unary(&random(&[2, 6, 6, 2], &mut rng), |t, x| t.im2col(x, geom).unwrap(), 1e-4);

    // centre tap of a 3x3 patch with stride 1 reproduces the input pixel
    let img = random(&[1, 4, 4, 1], &mut rng);
    let mut tape = Tape::new();
    let x = tape.constant(img.clone());
    let cols = tape.im2col(x, ConvGeom { kernel: 3, stride: 1, pad: 1 }).unwrap();
    assert_eq!(tape.shape(cols), &[16, 9]);
    for p in 0..16 {
        assert_eq!(tape.value(cols).get(&[p, 4]), img.data()[p]);
    }
}

// ---------------------------------------------------------------- mlp

#[test]
fn mlp_zero_weights_annihilate() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "m", &[4, 4, 3], &mut rng).unwrap();
    zero_params(&mut store, &mlp.params());
    let mut tape = Tape::new();
    let x = tape.constant(random(&[5, 4], &mut rng));
    let y = mlp.forward(&mut tape, &store, x).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn single_identity_layer_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "m", &[3, 3], &mut rng).unwrap();
    *store.value_mut(mlp.layers[0].weight) = Tensor::eye(3);
    *store.value_mut(mlp.layers[0].bias) = Tensor::zeros([3]);
    let input = random(&[4, 3], &mut rng);
    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let y = mlp.forward(&mut tape, &store, x).unwrap();
    assert_eq!(tape.value(y), &input);
}

#[test]
fn mlp_dimension_mismatch_is_an_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "m", &[3, 3], &mut rng).unwrap();
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::zeros([2, 4]));
    assert!(matches!(mlp.forward(&mut tape, &store, x), Err(Error::ShapeMismatch { .. })));
}

/// Checks every parameter gradient of `loss_fn` against central differences.
fn check_params(store: &ParamStore, loss_fn: impl Fn(&mut Tape, &ParamStore) -> Var, tol: f64) {
    let (err, name) = param_error(store, loss_fn);
    assert!(err < tol, "{name}: relative error {err}");
}

#[test]
fn mlp_parameter_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "m", &[4, 6, 3], &mut rng).unwrap();
    let input = random(&[5, 4], &mut rng);
    let target = random(&[5, 3], &mut rng);
    check_params(&store, |t, s| {
        let x = t.constant(input.clone());
        let y = mlp.forward(t, s, x).unwrap();
        let target = t.constant(target.clone());
        t.mse(y, target).unwrap()
    }, 1e-4);
}

// ---------------------------------------------------------------- attention

#[test]
fn self_attention_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for heads in [1, 2, 4] {
        let mut store = ParamStore::new();
        let attn = Attention::new(&mut store, "a", 8, 8, heads, &mut rng).unwrap();
        let tokens = random(&[3, 8], &mut rng);
        let mut tape = Tape::new();
        let x = tape.constant(tokens.clone());
        let y = attn.self_attention(&mut tape, &store, x).unwrap();
        let oracle = attention_oracle(&attn, &store, &tokens, &tokens);
        assert!(max_diff(tape.value(y), &oracle) < 1e-10, "heads={heads}");
    }
}

#[test]
fn cross_attention_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for heads in [1, 4] {
        let mut store = ParamStore::new();
        let attn = Attention::new(&mut store, "a", 8, 6, heads, &mut rng).unwrap();
        let (q, c) = (random(&[2, 8], &mut rng), random(&[5, 6], &mut rng));
        let mut tape = Tape::new();
        let (qv, cv) = (tape.constant(q.clone()), tape.constant(c.clone()));
        let y = attn.cross_attention(&mut tape, &store, qv, cv).unwrap();
        assert!(max_diff(tape.value(y), &attention_oracle(&attn, &store, &q, &c)) < 1e-10);
    }
}

#[test]
fn single_token_attention_is_affine() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut store = ParamStore::new();
    let attn = Attention::new(&mut store, "a", 8, 8, 4, &mut rng).unwrap();
    let token = random(&[1, 8], &mut rng);
    let mut tape = Tape::new();
    let x = tape.constant(token.clone());
    let y = attn.self_attention(&mut tape, &store, x).unwrap();
    let v = affine(&mat(&token), &mat(store.value(attn.value.weight)), store.value(attn.value.bias).data());
    let expected = affine(&v, &mat(store.value(attn.output.weight)), store.value(attn.output.bias).data());
    assert!(max_diff(tape.value(y), &expected) < 1e-12);
}

#[test]
fn single_context_token_gives_identical_query_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut store = ParamStore::new();
    let attn = Attention::new(&mut store, "a", 8, 8, 2, &mut rng).unwrap();
    let mut tape = Tape::new();
    let q = tape.constant(random(&[4, 8], &mut rng));
    let c = tape.constant(random(&[1, 8], &mut rng));
    let y = attn.cross_attention(&mut tape, &store, q, c).unwrap();
    let rows = mat(tape.value(y));
    for r in &rows[1..] {
        assert_eq!(r, &rows[0]);
    }
}

#[test]
fn attention_permutation_equivariance_and_duplicates() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut store = ParamStore::new();
    let attn = Attention::new(&mut store, "a", 8, 8, 4, &mut rng).unwrap();
    let q = random(&[4, 8], &mut rng);
    let c = random(&[6, 8], &mut rng);
    let perm = [2, 0, 3, 1];
    let run = |qt: &Tensor, ct: &Tensor| {
        let mut tape = Tape::new();
        let (qv, cv) = (tape.constant(qt.clone()), tape.constant(ct.clone()));
        let y = attn.cross_attention(&mut tape, &store, qv, cv).unwrap();
        tape.value(y).clone()
    };
    let permuted_q = Tensor::from_fn([4, 8], |i| q.get(&[perm[i / 8], i % 8]));
    let base = run(&q, &c);
    let out = run(&permuted_q, &c);
    for (i, &p) in perm.iter().enumerate() {
        for j in 0..8 {
            assert!((out.get(&[i, j]) - base.get(&[p, j])).abs() < 1e-12);
        }
    }
    // context order does not matter
    let reversed_c = Tensor::from_fn([6, 8], |i| c.get(&[5 - i / 8, i % 8]));
    assert!(run(&q, &reversed_c).max_abs_diff(&base) < 1e-12);

    // duplicate tokens in self-attention give duplicate rows
    let row = random(&[1, 8], &mut rng);
    let dup = Tensor::from_fn([3, 8], |i| if i / 8 == 1 { q.get(&[0, i % 8]) } else { row.data()[i % 8] });
    let mut tape = Tape::new();
    let x = tape.constant(dup);
    let y = attn.self_attention(&mut tape, &store, x).unwrap();
    let rows = mat(tape.value(y));
    assert_eq!(rows[0], rows[2]);
}

#[test]
fn attention_rejects_indivisible_heads() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut store = ParamStore::new();
    assert!(matches!(
        Attention::new(&mut store, "a", 10, 10, 4, &mut rng),
        Err(Error::HeadCount { dim: 10, heads: 4 })
    ));
}

#[test]
fn attention_parameter_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut store = ParamStore::new();
    let attn = Attention::new(&mut store, "a", 8, 6, 2, &mut rng).unwrap();
    let (q, c) = (random(&[3, 8], &mut rng), random(&[4, 6], &mut rng));
    let weights = random(&[3, 8], &mut rng);
    check_params(&store, |t, s| {
        let (qv, cv) = (t.constant(q.clone()), t.constant(c.clone()));
        let y = attn.cross_attention(t, s, qv, cv).unwrap();
        let w = t.constant(weights.clone());
        let p = t.mul(y, w).unwrap();
        t.sum(p)
    }, 1e-4);
}

// ---------------------------------------------------------------- losses

#[test]
fn loss_examples() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::new([3], vec![1.0, -2.0, 0.5]).unwrap());
    let l1 = tape.l1(a, a).unwrap();
    let mse = tape.mse(a, a).unwrap();
    assert_eq!(tape.value(l1).item(), 0.0);
    assert_eq!(tape.value(mse).item(), 0.0);

    let sure = tape.constant(Tensor::new([2], vec![0.0, 1.0]).unwrap());
    let f = tape.focal(sure, 1, 2.0).unwrap();
    assert_eq!(tape.value(f).item(), 0.0);

    let probs = tape.constant(Tensor::new([2], vec![0.25, 0.75]).unwrap());
    let f = tape.focal(probs, 1, 2.0).unwrap();
    let expected = -(0.25f64).powi(2) * 0.75f64.ln();
    assert!((tape.value(f).item() - expected).abs() < 1e-15);
    assert!((tape.value(f).item() - 0.01798).abs() < 1e-5);

    // p_j = 0 is clamped rather than producing infinity
    let zero = tape.constant(Tensor::new([2], vec![1.0, 0.0]).unwrap());
    let f = tape.focal(zero, 1, 2.0).unwrap();
    assert!(tape.value(f).item().is_finite());
}

#[test]
fn cross_entropy_matches_direct_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let logits = random(&[6, 4], &mut rng).map(|v| 3.0 * v);
    let targets = [0u8, 3, 255, 1, 2, 255];
    let mut tape = Tape::new();
    let x = tape.constant(logits.clone());
    let ce = tape.cross_entropy(x, &targets).unwrap();
    let mut total = 0.0;
    let mut n = 0;
    for (r, &t) in targets.iter().enumerate() {
        if t == 255 {
            continue;
        }
        let row: Vec<f64> = (0..4).map(|c| logits.get(&[r, c])).collect();
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        total += -(row[t as usize].exp() / z).ln();
        n += 1;
    }
    assert!((tape.value(ce).item() - total / n as f64).abs() < 1e-10);

    check_unary(&logits, |t, x| t.cross_entropy(x, &targets).unwrap(), 1e-4);
}

#[test]
fn loss_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let target = random(&[4, 3], &mut rng);
    let pred = random(&[4, 3], &mut rng);
    check_unary(&pred, |t, x| {
        let y = t.constant(target.clone());
        t.l1(x, y).unwrap()
    }, 1e-4);
    check_unary(&pred, |t, x| {
        let y = t.constant(target.clone());
        t.mse(x, y).unwrap()
    }, 1e-4);
    let probs = Tensor::new([4], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
    check_unary(&probs, |t, x| t.focal(x, 2, 2.0).unwrap(), 1e-4);
    let parts = Tensor::new([2], vec![0.3, 1.7]).unwrap();
    check_unary(&parts, |t, x| {
        let a = t.gather(x, &[0]).unwrap();
        let b = t.gather(x, &[1]).unwrap();
        t.weighted_sum(&[(a, 0.2), (b, 0.5)]).unwrap()
    }, 1e-4);
}

// ---------------------------------------------------------------- backward

#[test]
fn backward_of_sum_is_ones() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::new([2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let s = tape.sum(x);
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap(), &Tensor::ones([2, 2]));
}

#[test]
fn backward_hand_derivative_of_scalar_regression() {
    let (w0, x0, y0) = (0.7, 1.5, -0.4);
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::new([1, 1], vec![w0]).unwrap()).unwrap();
    let mut tape = Tape::new();
    let wv = tape.param(&store, w);
    let x = tape.constant(Tensor::new([1, 1], vec![x0]).unwrap());
    let y = tape.constant(Tensor::new([1, 1], vec![y0]).unwrap());
    let wx = tape.matmul(x, wv).unwrap();
    let loss = tape.mse(wx, y).unwrap();
    let grads = tape.backward(loss).unwrap().param_grads(&tape, &store);
    let expected = 2.0 * x0 * (w0 * x0 - y0);
    assert!((grads.get(w).unwrap().item() - expected).abs() < 1e-15);
}

#[test]
fn backward_rejects_non_scalar_and_accumulates() {
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::new([2], vec![1.0, 2.0]).unwrap()).unwrap();
    let unused = store.add("unused", Tensor::new([3], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
    let mut tape = Tape::new();
    let wv = tape.param(&store, w);
    assert!(matches!(tape.backward(wv), Err(Error::NotScalar(_))));
    let loss = tape.sum(wv);
    let grads = tape.backward(loss).unwrap().param_grads(&tape, &store);
    store.accumulate(&grads);
    store.accumulate(&grads);
    assert_eq!(store.get(w).grad.data(), &[2.0, 2.0]);
    assert!(grads.get(unused).is_none());
    assert_eq!(store.get(unused).grad.data(), &[0.0, 0.0, 0.0]);
}

#[test]
fn stop_gradient_blocks_flow() {
    let mut tape = Tape::new();
    let x = tape.input(Tensor::new([2], vec![1.0, 2.0]).unwrap());
    let d = tape.detach(x);
    let y = tape.mul(x, d).unwrap();
    let s = tape.sum(y);
    let g = tape.backward(s).unwrap();
    // d/dx (x * stopgrad(x)) = stopgrad(x)
    assert_eq!(g.get(x).unwrap().data(), &[1.0, 2.0]);
}

// ---------------------------------------------------------------- optimizer

#[test]
fn adam_descends_a_convex_quadratic_monotonically() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let centre = random(&[6], &mut rng);
    let curvature = Tensor::from_fn([6], |i| 0.5 + i as f64 * 0.3);
    let mut store = ParamStore::new();
    let w = store.add("w", Tensor::from_fn([6], |i| 3.0 - i as f64)).unwrap();
    let loss_of = |s: &ParamStore| -> f64 {
        s.value(w)
            .data()
            .iter()
            .zip(centre.data())
            .zip(curvature.data())
            .map(|((x, c), a)| a * (x - c) * (x - c))
            .sum()
    };
    let mut opt = Optimizer::new(OptimizerConfig { lr: 0.01, ..Default::default() }, &store);
    let mut losses = vec![loss_of(&store)];
    for _ in 0..100 {
        store.zero_grad();
        let grad: Vec<f64> = store
            .value(w)
            .data()
            .iter()
            .zip(centre.data())
            .zip(curvature.data())
            .map(|((x, c), a)| 2.0 * a * (x - c))
            .collect();
        store.get_mut(w).grad = Tensor::new([6], grad).unwrap();
        opt.step(&mut store);
        losses.push(loss_of(&store));
    }
    for pair in losses[5..].windows(2) {
        assert!(pair[1] < pair[0], "loss rose: {pair:?}");
    }
    assert!(losses[100] < losses[0]);
}

#[test]
fn optimizer_runs_are_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", &[3, 5, 2], &mut rng).unwrap();
        let input = random(&[4, 3], &mut rng);
        let mut opt = Optimizer::new(OptimizerConfig { kind: OptimizerKind::Adam, lr: 1e-2, ..Default::default() }, &store);
        for _ in 0..20 {
            store.zero_grad();
            let mut tape = Tape::new();
            let x = tape.constant(input.clone());
            let y = mlp.forward(&mut tape, &store, x).unwrap();
            let sq = tape.mul(y, y).unwrap();
            let loss = tape.sum(sq);
            let grads = tape.backward(loss).unwrap().param_grads(&tape, &store);
            store.accumulate(&grads);
            opt.step(&mut store);
        }
        store.iter().flat_map(|(_, p)| p.value.data().to_vec()).map(f64::to_bits).collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}
