//! Minibatch k-means on Euclidean distance.

use log::warn;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use super::{Clustering, LatentMatrix};
use crate::rng::{substream, StreamRng};

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub batch_size: usize,
    pub max_iter: usize,
    pub init_size: usize,
    pub reassignment_ratio: f64,
    /// Independent initialisations; the one with the lowest inertia on the
    /// initialisation subsample is kept.
    pub n_init: usize,
    pub seed: u64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self { k: 750, batch_size: 4096, max_iter: 25, init_size: 20000, reassignment_ratio: 0.02, n_init: 3, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub clustering: Clustering,
    pub centers: Array2<f64>,
    /// Summed squared distance to the nearest center after the final assignment.
    pub inertia: f64,
    /// The same quantity for the initial centers.
    pub initial_inertia: f64,
}

/// `k` clamped to the number of points, with a warning when clamped.
pub fn effective_k(k: usize, n: usize) -> usize {
    if k > n {
        warn!("k = {k} exceeds the {n} points; using k = {n}");
        n
    } else {
        k.max(1)
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Nearest center and squared distance; ties go to the lower index.
fn nearest(x: ArrayView1<f64>, centers: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centers.rows().into_iter().enumerate() {
        let d = sq_dist(x, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(x: &Array2<f64>, centers: &Array2<f64>) -> (Vec<usize>, f64) {
    let res: Vec<(usize, f64)> = (0..x.nrows()).into_par_iter().map(|i| nearest(x.row(i), centers)).collect();
    let inertia = res.iter().map(|r| r.1).sum();
    (res.into_iter().map(|r| r.0).collect(), inertia)
}

/// Greedy k-means++ seeding with `2 + ln k` candidates per step.
fn kmeans_pp(x: &Array2<f64>, k: usize, rng: &mut StreamRng) -> Array2<f64> {
    let n = x.nrows();
    let trials = 2 + (k as f64).ln() as usize;
    let mut centers = Array2::zeros((k, x.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&x.row(first));
    let mut closest: Vec<f64> = x.rows().into_iter().map(|r| sq_dist(r, x.row(first))).collect();
    for c in 1..k {
        let total: f64 = closest.iter().sum();
        let candidates: Vec<usize> = (0..trials)
            .map(|_| {
                if total <= 0.0 {
                    return rng.random_range(0..n);
                }
                let target = rng.random::<f64>() * total;
                let mut acc = 0.0;
                for (i, &d) in closest.iter().enumerate() {
                    acc += d;
                    if acc > target {
                        return i;
                    }
                }
                n - 1
            })
            .collect();
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for cand in candidates {
            let updated: Vec<f64> = x.rows().into_iter().zip(&closest).map(|(r, &d)| d.min(sq_dist(r, x.row(cand)))).collect();
            let pot: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|b| pot < b.1) {
                best = Some((cand, pot, updated));
            }
        }
        let (chosen, _, updated) = best.expect("at least two trials");
        centers.row_mut(c).assign(&x.row(chosen));
        closest = updated;
    }
    centers
}

pub fn minibatch_kmeans(latent: &LatentMatrix, params: &KMeansParams) -> KMeansResult {
    let x = &latent.values;
    let n = x.nrows();
    if n == 0 {
        return KMeansResult {
            clustering: Clustering::from_labels(&[]),
            centers: Array2::zeros((0, x.ncols())),
            inertia: 0.0,
            initial_inertia: 0.0,
        };
    }
    let k = effective_k(params.k, n);
    let mut rng = substream(params.seed, "kmeans", 0);

    let init_n = params.init_size.clamp(k, n.max(k)).min(n);
    let init_idx = index::sample(&mut rng, n, init_n).into_vec();
    let init_x = x.select(Axis(0), &init_idx);
    let mut centers = Array2::zeros((k, x.ncols()));
    let mut best = f64::INFINITY;
    for _ in 0..params.n_init.max(1) {
        let c = kmeans_pp(&init_x, k, &mut rng);
        let (_, inertia) = assign(&init_x, &c);
        if inertia < best {
            best = inertia;
            centers = c;
        }
    }
    let initial_inertia = assign(x, &centers).1;

    let batch = params.batch_size.max(1).min(n);
    let steps = (params.max_iter * n).div_ceil(batch);
    let mut counts = Array1::<f64>::zeros(k);
    let mut since_reassign = 0usize;
    for _ in 0..steps {
        let idx: Vec<usize> = (0..batch).map(|_| rng.random_range(0..n)).collect();
        let xb = x.select(Axis(0), &idx);
        let (labels, _) = assign(&xb, &centers);
        let mut sums = Array2::<f64>::zeros(centers.dim());
        let mut added = Array1::<f64>::zeros(k);
        for (row, &c) in xb.rows().into_iter().zip(&labels) {
            sums.row_mut(c).scaled_add(1.0, &row);
            added[c] += 1.0;
        }
        for c in 0..k {
            if added[c] > 0.0 {
                let total = counts[c] + added[c];
                let step = (&sums.row(c) - &(&centers.row(c) * added[c])) / total;
                centers.row_mut(c).scaled_add(1.0, &step);
                counts[c] = total;
            }
        }

        since_reassign += batch;
        if params.reassignment_ratio > 0.0 && since_reassign >= 10 * k {
            since_reassign = 0;
            let max = counts.fold(0.0f64, |a, &b| a.max(b));
            let mut low: Vec<usize> = (0..k).filter(|&c| counts[c] < params.reassignment_ratio * max).collect();
            if low.len() > batch / 2 {
                low.sort_by(|&a, &b| counts[a].total_cmp(&counts[b]).then(a.cmp(&b)));
                low.truncate(batch / 2);
            }
            if !low.is_empty() {
                let picks = index::sample(&mut rng, batch, low.len()).into_vec();
                let floor = (0..k).filter(|c| !low.contains(c)).map(|c| counts[c]).fold(f64::INFINITY, f64::min);
                for (&c, &p) in low.iter().zip(&picks) {
                    centers.row_mut(c).assign(&xb.row(p));
                    counts[c] = if floor.is_finite() { floor } else { 0.0 };
                }
            }
        }
    }

    let (labels, inertia) = assign(x, &centers);
    KMeansResult { clustering: Clustering::from_labels(&labels), centers, inertia, initial_inertia }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn latent(values: Array2<f64>) -> LatentMatrix {
        let n = values.nrows();
        LatentMatrix::new(values, (0..n).map(|i| format!("c{i}")).collect(), vec!["s".into(); n]).unwrap()
    }

    fn blobs(k: usize, per: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = substream(seed, "blobs", 0);
        let centers = Array2::from_shape_fn((k, 3), |(i, j)| if j == i % 3 { 4.0 * (1 + i / 3) as f64 } else { 0.0 });
        let values = Array2::from_shape_fn((k * per, 3), |(r, j)| centers[(r % k, j)] + 0.1 * rng.sample::<f64, _>(StandardNormal));
        (values, (0..k * per).map(|r| r % k).collect())
    }

    #[test]
    fn distinct_points_each_own_cluster() {
        let pts = ndarray::array![[0.0, 0.0], [5.0, 5.0], [0.0, 0.0], [-3.0, 1.0], [5.0, 5.0]];
        let r = minibatch_kmeans(&latent(pts), &KMeansParams { k: 3, seed: 4, ..Default::default() });
        assert_eq!(r.inertia, 0.0);
        assert_eq!(r.clustering.assignment, vec![0, 1, 0, 2, 1]);
    }

    #[test]
    fn k_is_clamped() {
        assert_eq!(effective_k(750, 10), 10);
        let (values, _) = blobs(2, 5, 1);
        let r = minibatch_kmeans(&latent(values), &KMeansParams::default());
        assert_eq!(r.centers.nrows(), 10);
    }

    #[test]
    fn two_blobs_recovered() {
        let (values, truth) = blobs(2, 50, 2);
        let r = minibatch_kmeans(&latent(values), &KMeansParams { k: 2, batch_size: 16, seed: 1, ..Default::default() });
        assert!(super::super::same_partition(&r.clustering.assignment, &truth));
    }

    #[test]
    fn final_inertia_not_above_initial() {
        for seed in 0..5 {
            let (values, _) = blobs(6, 40, 10 + seed);
            let r = minibatch_kmeans(&latent(values), &KMeansParams { k: 6, batch_size: 32, seed, ..Default::default() });
            assert!(r.inertia <= r.initial_inertia * (1.0 + 1e-12), "{} > {}", r.inertia, r.initial_inertia);
        }
    }

    #[test]
    fn reproducible() {
        let (values, _) = blobs(4, 30, 3);
        let p = KMeansParams { k: 4, batch_size: 20, seed: 9, ..Default::default() };
        let a = minibatch_kmeans(&latent(values.clone()), &p);
        let b = minibatch_kmeans(&latent(values), &p);
        assert_eq!(a.clustering, b.clustering);
        assert_eq!(a.centers, b.centers);
    }
}
