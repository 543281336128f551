//! Seeded k-means over 2-D points.
//!
//! k-means++ seeding, Lloyd iterations until the assignment is stable, then
//! single-point (Hartigan) moves until no move lowers the SSE. Several
//! seeded restarts are run and the lowest-SSE solution kept. Centroids are
//! returned sorted lexicographically (x, then y).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Point2 = [f64; 2];

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub restarts: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, seed, max_iters: 300, restarts: 8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    /// Lexicographically sorted centroids.
    pub centroids: Vec<Point2>,
    /// Index into `centroids` for every input point.
    pub assignment: Vec<usize>,
    pub sse: f64,
    /// SSE after each Lloyd iteration of the winning restart.
    pub sse_trace: Vec<f64>,
}

fn dist2(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

pub fn sse(points: &[Point2], centroids: &[Point2], assignment: &[usize]) -> f64 {
    points.iter().zip(assignment).map(|(&p, &a)| dist2(p, centroids[a])).sum()
}

/// Clusters `points` into `config.k` groups.
///
/// An empty cluster during Lloyd iterations is re-seeded at the point
/// farthest from its current centroid.
pub fn kmeans(points: &[Point2], config: &KMeansConfig) -> Result<KMeansResult> {
    let k = config.k;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if points.len() < k {
        return Err(Error::TooFewPoints { points: points.len(), k });
    }
    let mut best: Option<KMeansResult> = None;
    for restart in 0..config.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add((restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
        let run = single_run(points, k, config.max_iters, &mut rng);
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    Ok(sort_centroids(best.unwrap()))
}

fn single_run(points: &[Point2], k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let mut centroids = plus_plus_init(points, k, rng);
    let mut assignment = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        for (i, &p) in points.iter().enumerate() {
            let nearest = nearest(p, &centroids);
            if nearest != assignment[i] {
                assignment[i] = nearest;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        update_centroids(points, &mut centroids, &mut assignment);
        trace.push(sse(points, &centroids, &assignment));
    }
    hartigan_refine(points, &mut centroids, &mut assignment);
    let total = sse(points, &centroids, &assignment);
    KMeansResult { centroids, assignment, sse: total, sse_trace: trace }
}

fn plus_plus_init(points: &[Point2], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point2> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|&p| dist2(p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.gen_range(0..points.len())
        };
        let c = points[next];
        centroids.push(c);
        for (d, &p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, c));
        }
    }
    centroids
}

fn nearest(p: Point2, centroids: &[Point2]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, &c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

fn update_centroids(points: &[Point2], centroids: &mut [Point2], assignment: &mut [usize]) {
    let k = centroids.len();
    let mut sums = vec![[0.0; 2]; k];
    let mut counts = vec![0usize; k];
    for (&p, &a) in points.iter().zip(assignment.iter()) {
        sums[a][0] += p[0];
        sums[a][1] += p[1];
        counts[a] += 1;
    }
    for j in 0..k {
        if counts[j] > 0 {
            centroids[j] = [sums[j][0] / counts[j] as f64, sums[j][1] / counts[j] as f64];
        }
    }
    // Re-seed empty clusters at the point farthest from its own centroid.
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let far = (0..points.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .max_by(|&a, &b| {
                dist2(points[a], centroids[assignment[a]]).total_cmp(&dist2(points[b], centroids[assignment[b]]))
            });
        if let Some(i) = far {
            counts[assignment[i]] -= 1;
            assignment[i] = j;
            counts[j] = 1;
            centroids[j] = points[i];
        }
    }
    // Means shift once points move; recompute for consistency.
    let mut sums = vec![[0.0; 2]; k];
    for (&p, &a) in points.iter().zip(assignment.iter()) {
        sums[a][0] += p[0];
        sums[a][1] += p[1];
    }
    for j in 0..k {
        if counts[j] > 0 {
            centroids[j] = [sums[j][0] / counts[j] as f64, sums[j][1] / counts[j] as f64];
        }
    }
}

/// Moves single points between clusters while any move lowers the SSE.
fn hartigan_refine(points: &[Point2], centroids: &mut [Point2], assignment: &mut [usize]) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &a in assignment.iter() {
        counts[a] += 1;
    }
    let mut improved = true;
    let mut sweeps = 0;
    while improved && sweeps < 1000 {
        improved = false;
        sweeps += 1;
        for (i, &p) in points.iter().enumerate() {
            let from = assignment[i];
            if counts[from] <= 1 {
                continue;
            }
            let nf = counts[from] as f64;
            let removal_gain = nf / (nf - 1.0) * dist2(p, centroids[from]);
            let mut best = None;
            let mut best_cost = removal_gain;
            for to in 0..k {
                if to == from {
                    continue;
                }
                let nt = counts[to] as f64;
                let cost = nt / (nt + 1.0) * dist2(p, centroids[to]);
                // strict improvement, with slack against rounding churn
                if cost < best_cost - 1e-12 * (1.0 + best_cost) {
                    best_cost = cost;
                    best = Some(to);
                }
            }
            if let Some(to) = best {
                let nt = counts[to] as f64;
                centroids[from] = [(centroids[from][0] * nf - p[0]) / (nf - 1.0), (centroids[from][1] * nf - p[1]) / (nf - 1.0)];
                centroids[to] = [(centroids[to][0] * nt + p[0]) / (nt + 1.0), (centroids[to][1] * nt + p[1]) / (nt + 1.0)];
                counts[from] -= 1;
                counts[to] += 1;
                assignment[i] = to;
                improved = true;
            }
        }
    }
    // Exact means after incremental updates.
    let mut sums = vec![[0.0; 2]; k];
    for (&p, &a) in points.iter().zip(assignment.iter()) {
        sums[a][0] += p[0];
        sums[a][1] += p[1];
    }
    for j in 0..k {
        if counts[j] > 0 {
            centroids[j] = [sums[j][0] / counts[j] as f64, sums[j][1] / counts[j] as f64];
        }
    }
}

fn sort_centroids(mut r: KMeansResult) -> KMeansResult {
    let mut order: Vec<usize> = (0..r.centroids.len()).collect();
    order.sort_by(|&a, &b| {
        r.centroids[a][0].total_cmp(&r.centroids[b][0]).then(r.centroids[a][1].total_cmp(&r.centroids[b][1]))
    });
    let mut new_index = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new;
    }
    r.centroids = order.iter().map(|&i| r.centroids[i]).collect();
    r.assignment.iter_mut().for_each(|a| *a = new_index[*a]);
    r
}
