//! Independent reference implementations shared by the module tests and
//! the acceptance runner.

use intentdrive::diffcore::{Attention, Linear, ParamStore, Tape, Tensor, Var};
use intentdrive::geometry::Point2;
use intentdrive::gradcheck::{numeric_gradient, numeric_gradient_at, relative_error};
use intentdrive::simworld::{Episode, OrientedRect};
use intentdrive::worldmodel::{LossWeights, WorldModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SampleFrames;

pub fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-1.0..1.0))
}

/// Relative error of d(sum(w ⊙ op(x)))/dx on the tape against central
/// differences, for fixed random weights `w`.
pub fn unary_error(x: &Tensor, op: impl Fn(&mut Tape, Var) -> Var) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let probe_shape = {
        let mut t = Tape::new();
        let v = t.constant(x.clone());
        let y = op(&mut t, v);
        t.shape(y).to_vec()
    };
    let weights = random(&probe_shape, &mut rng);
    let mut tape = Tape::new();
    let xv = tape.input(x.clone());
    let y = op(&mut tape, xv);
    let w = tape.constant(weights.clone());
    let prod = tape.mul(y, w).unwrap();
    let loss = tape.sum(prod);
    let grads = tape.backward(loss).unwrap();
    let analytic = grads.get(xv).unwrap().clone();
    let numeric = numeric_gradient(
        |probe| {
            let mut t = Tape::new();
            let v = t.constant(probe.clone());
            let y = op(&mut t, v);
            t.value(y).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
        },
        x,
        1e-5,
    );
    relative_error(analytic.data(), numeric.data(), 1e-6)
}

/// Worst per-parameter relative error of a scalar loss built from `store`.
pub fn param_error(store: &ParamStore, loss_fn: impl Fn(&mut Tape, &ParamStore) -> Var) -> (f64, String) {
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, store);
    let grads = tape.backward(loss).unwrap().param_grads(&tape, store);
    let mut worst = (0.0, String::new());
    for (id, p) in store.iter() {
        let analytic = grads.get(id).cloned().unwrap_or_else(|| Tensor::zeros(p.value.shape().to_vec()));
        let numeric = numeric_gradient(
            |probe| {
                let mut s = store.clone();
                *s.value_mut(id) = probe.clone();
                let mut t = Tape::new();
                let l = loss_fn(&mut t, &s);
                t.value(l).item()
            },
            &p.value,
            1e-5,
        );
        let err = relative_error(analytic.data(), numeric.data(), 1e-6);
        if err >= worst.0 {
            worst = (err, p.name.clone());
        }
    }
    worst
}

pub fn mat(t: &Tensor) -> Vec<Vec<f64>> {
    let (r, c) = (t.shape()[0], t.shape()[1]);
    (0..r).map(|i| (0..c).map(|j| t.get(&[i, j])).collect()).collect()
}

pub fn affine(x: &[Vec<f64>], w: &[Vec<f64>], b: &[f64]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|row| (0..b.len()).map(|j| b[j] + row.iter().zip(w).map(|(xi, wr)| xi * wr[j]).sum::<f64>()).collect())
        .collect()
}

/// Literal multi-head attention: per head softmax(Q Kᵀ/√dh) V, heads
/// concatenated, then the output projection.
pub fn attention_oracle(attn: &Attention, store: &ParamStore, q_in: &Tensor, c_in: &Tensor) -> Vec<Vec<f64>> {
    let lin = |l: &Linear, x: &Tensor| affine(&mat(x), &mat(store.value(l.weight)), store.value(l.bias).data());
    let (q, k, v) = (lin(&attn.query, q_in), lin(&attn.key, c_in), lin(&attn.value, c_in));
    let dim = attn.dim();
    let dh = dim / attn.heads;
    let mut concat = vec![vec![0.0; dim]; q.len()];
    for h in 0..attn.heads {
        let cols = h * dh..(h + 1) * dh;
        for (i, qi) in q.iter().enumerate() {
            let logits: Vec<f64> = k
                .iter()
                .map(|kj| cols.clone().map(|c| qi[c] * kj[c]).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            for c in cols.clone() {
                concat[i][c] = logits.iter().zip(&v).map(|(l, vj)| (l - max).exp() / z * vj[c]).sum();
            }
        }
    }
    let o = &attn.output;
    affine(&concat, &mat(store.value(o.weight)), store.value(o.bias).data())
}

pub fn max_diff(a: &Tensor, b: &[Vec<f64>]) -> f64 {
    mat(a).iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Global SSE optimum by enumerating every assignment of points to `k`
/// non-empty groups.
pub fn exhaustive_optimum(points: &[Point2], k: usize) -> f64 {
    let n = points.len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut used = vec![false; k];
        labels.iter().for_each(|&l| used[l] = true);
        if used.iter().all(|&u| u) {
            let mut total = 0.0;
            for g in 0..k {
                let members: Vec<Point2> = (0..n).filter(|&i| labels[i] == g).map(|i| points[i]).collect();
                let m = members.len() as f64;
                let cx = members.iter().map(|p| p[0]).sum::<f64>() / m;
                let cy = members.iter().map(|p| p[1]).sum::<f64>() / m;
                total += members.iter().map(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sum::<f64>();
            }
            best = best.min(total);
        }
        // odometer increment
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

pub fn random_points(n: usize, rng: &mut ChaCha8Rng) -> Vec<Point2> {
    (0..n).map(|_| [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)]).collect()
}

fn segment_distance(a0: Point2, a1: Point2, b0: Point2, b1: Point2) -> f64 {
    let point_seg = |p: Point2, s0: Point2, s1: Point2| {
        let d = [s1[0] - s0[0], s1[1] - s0[1]];
        let t = (((p[0] - s0[0]) * d[0] + (p[1] - s0[1]) * d[1]) / (d[0] * d[0] + d[1] * d[1])).clamp(0.0, 1.0);
        (p[0] - s0[0] - t * d[0]).hypot(p[1] - s0[1] - t * d[1])
    };
    point_seg(a0, b0, b1).min(point_seg(a1, b0, b1)).min(point_seg(b0, a0, a1)).min(point_seg(b1, a0, a1))
}

/// Smallest distance between the outlines of two rectangles.
pub fn boundary_gap(a: &OrientedRect, b: &OrientedRect) -> f64 {
    let (ca, cb) = (a.corners(), b.corners());
    let mut best = f64::INFINITY;
    for i in 0..4 {
        for j in 0..4 {
            best = best.min(segment_distance(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4]));
        }
    }
    best
}

/// Overlap by testing grid points over `a`'s bounding box for membership
/// in both rectangles.
pub fn grid_overlap(a: &OrientedRect, b: &OrientedRect, step: f64) -> bool {
    let ca = a.corners();
    let (lo, hi) = ca.iter().fold(([f64::MAX; 2], [f64::MIN; 2]), |(lo, hi), p| {
        ([lo[0].min(p[0]), lo[1].min(p[1])], [hi[0].max(p[0]), hi[1].max(p[1])])
    });
    let inside = |r: &OrientedRect, p: Point2| {
        let (s, c) = r.heading.sin_cos();
        let (dx, dy) = (p[0] - r.center[0], p[1] - r.center[1]);
        (c * dx + s * dy).abs() <= r.length / 2.0 && (-s * dx + c * dy).abs() <= r.width / 2.0
    };
    let mut x = lo[0];
    while x <= hi[0] {
        let mut y = lo[1];
        while y <= hi[1] {
            if inside(a, [x, y]) && inside(b, [x, y]) {
                return true;
            }
            y += step;
        }
        x += step;
    }
    false
}

pub fn random_rect(rng: &mut ChaCha8Rng) -> OrientedRect {
    OrientedRect {
        center: [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)],
        length: rng.gen_range(0.5..5.0),
        width: rng.gen_range(0.3..2.5),
        heading: rng.gen_range(-3.2..3.2),
    }
}

/// Separating-axis overlap against the 0.05 m grid oracle on `pairs`
/// decidable random pairs: `(disagreements, overlapping, skipped)`. Pairs
/// the grid reports as disjoint but whose outlines come within 0.1 m are
/// skipped, since overlaps thinner than the grid pitch are invisible to it.
pub fn grid_disagreements(seed: u64, pairs: usize) -> (usize, usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut tested, mut wrong, mut hits, mut skipped) = (0, 0, 0, 0);
    while tested < pairs {
        let (a, b) = (random_rect(&mut rng), random_rect(&mut rng));
        let grid = grid_overlap(&a, &b, 0.05);
        if !grid && boundary_gap(&a, &b) < 0.1 {
            skipped += 1;
            continue;
        }
        wrong += (a.overlaps(&b) != grid) as usize;
        hits += grid as usize;
        tested += 1;
    }
    (wrong, hits, skipped)
}

/// Worst relative error between the analytic composite-loss gradient of
/// the whole planner and central differences on three random entries of
/// every parameter that receives a gradient, with the future target
/// frozen. Returns `(worst, parameters checked)`.
pub fn full_planner_error(m: &WorldModel, ep: &Episode, t: usize, seed: u64) -> (f64, usize) {
    let frames = SampleFrames::new(ep, t, m.config.horizon);
    let w = LossWeights::default();
    let sample = frames.sample(ep);
    let target = m.target_latent(sample.future, sample.future_previous, sample.rig).unwrap();
    let mut tape = Tape::new();
    let out = m.training_forward_with_target(&mut tape, &sample, target.clone(), &w).unwrap();
    let grads = tape.backward(out.total).unwrap().param_grads(&tape, &m.store);
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (id, p) in m.store.iter() {
        let Some(g) = grads.get(id) else { continue };
        let picks: Vec<usize> = (0..3).map(|_| r.gen_range(0..p.value.numel())).collect();
        let numeric = numeric_gradient_at(
            |x| {
                let mut probe = m.clone();
                *probe.store.value_mut(id) = x.clone();
                let mut t = Tape::no_grad();
                let o = probe.training_forward_with_target(&mut t, &sample, target.clone(), &w).unwrap();
                // Keep the selected modality fixed so the loss is smooth.
                assert_eq!(o.selected, out.selected);
                o.losses.total
            },
            &p.value,
            1e-6,
            &picks,
        );
        let analytic: Vec<f64> = picks.iter().map(|&i| g.data()[i]).collect();
        worst = worst.max(relative_error(&analytic, &numeric, 1e-6));
        checked += 1;
    }
    (worst, checked)
}
