//! Feature-space distortions used to build positive pairs for contrastive training.

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

/// One distortion operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugmentationKind {
    GaussianNoise,
    RandomMask,
    RandomShift,
}

/// Operator parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub gaussian_scale: f64,
    pub mask_p: f64,
    pub shift_fraction: f64,
    /// Multiply the noise by the per-dimension mean instead of a constant.
    pub gaussian_literal_mu: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { gaussian_scale: 0.15, mask_p: 0.01, shift_fraction: 0.01, gaussian_literal_mu: false }
    }
}

/// The two operators applied to the two views of each row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FormPair {
    pub first: AugmentationKind,
    pub second: AugmentationKind,
}

impl FormPair {
    /// Unordered pairs with repetition over the three operators.
    pub const ALL: [FormPair; 6] = {
        use AugmentationKind::*;
        [
            FormPair { first: GaussianNoise, second: GaussianNoise },
            FormPair { first: GaussianNoise, second: RandomMask },
            FormPair { first: GaussianNoise, second: RandomShift },
            FormPair { first: RandomMask, second: RandomMask },
            FormPair { first: RandomMask, second: RandomShift },
            FormPair { first: RandomShift, second: RandomShift },
        ]
    };
}

/// Per-dimension mean and population variance of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl FeatureStats {
    pub fn from_rows(rows: &Array2<f64>) -> Self {
        let n = rows.nrows().max(1) as f64;
        let mean: Vec<f64> = rows.sum_axis(Axis(0)).iter().map(|s| s / n).collect();
        let var = rows
            .columns()
            .into_iter()
            .zip(&mean)
            .map(|(c, m)| c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
            .collect();
        Self { mean, var }
    }
}

pub fn gaussian_noise<R: Rng + ?Sized>(row: ArrayView1<f64>, stats: &FeatureStats, cfg: &AugmentConfig, rng: &mut R) -> Vec<f64> {
    assert_eq!(row.len(), stats.var.len(), "stats dimension");
    row.iter()
        .zip(stats.var.iter().zip(&stats.mean))
        .map(|(&x, (&v, &m))| {
            let z: f64 = rng.sample(StandardNormal);
            let scale = if cfg.gaussian_literal_mu { cfg.gaussian_scale * m } else { cfg.gaussian_scale };
            x + scale * v.sqrt() * z
        })
        .collect()
}

pub fn random_mask<R: Rng + ?Sized>(row: ArrayView1<f64>, p: f64, rng: &mut R) -> Vec<f64> {
    assert!((0.0..=1.0).contains(&p), "mask probability out of range");
    row.iter().map(|&x| if rng.random_bool(p) { 0.0 } else { x }).collect()
}

/// Number of disjoint pairs moved by [`random_shift`] for a row of width `dim`.
pub fn shift_pair_count(dim: usize, fraction: f64) -> usize {
    ((fraction * dim as f64).round() as usize).max(1).min(dim / 2)
}

/// Moves a tenth of `row[i]` onto `row[j]`.
pub fn shift_pair(row: &mut [f64], i: usize, j: usize) {
    let moved = row[i] / 10.0;
    row[i] -= moved;
    row[j] += moved;
}

/// Applies [`shift_pair`] to randomly chosen disjoint ordered pairs. Rows
/// narrower than two dimensions are returned unchanged.
pub fn random_shift<R: Rng + ?Sized>(row: ArrayView1<f64>, fraction: f64, rng: &mut R) -> Vec<f64> {
    let mut out = row.to_vec();
    let d = out.len();
    if d < 2 {
        return out;
    }
    let m = shift_pair_count(d, fraction);
    let idx = index::sample(rng, d, 2 * m).into_vec();
    for p in idx.chunks_exact(2) {
        shift_pair(&mut out, p[0], p[1]);
    }
    out
}

pub fn sample_form_pair<R: Rng + ?Sized>(rng: &mut R) -> FormPair {
    FormPair::ALL[rng.random_range(0..FormPair::ALL.len())]
}

fn apply<R: Rng + ?Sized>(
    kind: AugmentationKind,
    row: ArrayView1<f64>,
    stats: &FeatureStats,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Vec<f64> {
    match kind {
        AugmentationKind::GaussianNoise => gaussian_noise(row, stats, cfg, rng),
        AugmentationKind::RandomMask => random_mask(row, cfg.mask_p, rng),
        AugmentationKind::RandomShift => random_shift(row, cfg.shift_fraction, rng),
    }
}

/// Two distorted views per input row, interleaved: output rows `2k` and
/// `2k + 1` (zero-based) both derive from input row `k`.
pub fn augment_batch<R: Rng + ?Sized>(batch: &Array2<f64>, pair: FormPair, cfg: &AugmentConfig, rng: &mut R) -> Array2<f64> {
    let (n, d) = batch.dim();
    let stats = FeatureStats::from_rows(batch);
    let mut out = Array2::zeros((2 * n, d));
    for (k, row) in batch.rows().into_iter().enumerate() {
        let a = apply(pair.first, row, &stats, cfg, rng);
        let b = apply(pair.second, row, &stats, cfg, rng);
        out.row_mut(2 * k).iter_mut().zip(a).for_each(|(o, v)| *o = v);
        out.row_mut(2 * k + 1).iter_mut().zip(b).for_each(|(o, v)| *o = v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    fn stats_for(var: Vec<f64>) -> FeatureStats {
        FeatureStats { mean: vec![0.0; var.len()], var }
    }

    #[test]
    fn zero_variance_noise_is_identity() {
        let row = array![1.0, -2.0, 3.5];
        let mut rng = substream(1, "t", 0);
        let out = gaussian_noise(row.view(), &stats_for(vec![0.0; 3]), &AugmentConfig::default(), &mut rng);
        assert_eq!(out, row.to_vec());
    }

    #[test]
    fn noise_variance_matches_closed_form() {
        let sigma2 = 4.0;
        let stats = stats_for(vec![sigma2]);
        let cfg = AugmentConfig::default();
        let mut rng = substream(2, "t", 0);
        let row = array![1.0];
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let d = gaussian_noise(row.view(), &stats, &cfg, &mut rng)[0] - 1.0;
            s += d;
            s2 += d * d;
        }
        let var = s2 / n as f64 - (s / n as f64).powi(2);
        let expected = 0.0225 * sigma2;
        assert!((var - expected).abs() / expected < 0.02, "var {var}");
    }

    #[test]
    fn literal_mu_reading_scales_by_mean() {
        let cfg = AugmentConfig { gaussian_literal_mu: true, ..Default::default() };
        let stats = FeatureStats { mean: vec![0.0, 2.0], var: vec![1.0, 1.0] };
        let mut rng = substream(3, "t", 0);
        let out = gaussian_noise(array![5.0, 5.0].view(), &stats, &cfg, &mut rng);
        assert_eq!(out[0], 5.0);
        assert_ne!(out[1], 5.0);
    }

    #[test]
    fn noise_is_reproducible() {
        let stats = stats_for(vec![1.0; 4]);
        let row = Array1::zeros(4);
        let a = gaussian_noise(row.view(), &stats, &AugmentConfig::default(), &mut substream(9, "t", 0));
        let b = gaussian_noise(row.view(), &stats, &AugmentConfig::default(), &mut substream(9, "t", 0));
        assert_eq!(a, b);
    }

    #[test]
    fn mask_extremes() {
        let row = array![1.0, 2.0, 3.0];
        let mut rng = substream(4, "t", 0);
        assert_eq!(random_mask(row.view(), 0.0, &mut rng), row.to_vec());
        assert_eq!(random_mask(row.view(), 1.0, &mut rng), vec![0.0; 3]);
    }

    #[test]
    fn mask_rate_within_binomial_interval() {
        let n = 1_000_000;
        let row = Array1::from_elem(n, 1.0);
        let out = random_mask(row.view(), 0.01, &mut substream(5, "t", 0));
        let masked = out.iter().filter(|&&v| v == 0.0).count() as f64;
        let p = 0.01;
        let half_width = 2.5758 * (p * (1.0 - p) / n as f64).sqrt();
        assert!((masked / n as f64 - p).abs() <= half_width, "rate {}", masked / n as f64);
    }

    #[test]
    fn shift_moves_a_tenth() {
        let mut row = [10.0, 0.0];
        shift_pair(&mut row, 0, 1);
        assert_eq!(row, [9.0, 1.0]);
    }

    #[test]
    fn shift_pair_counts() {
        assert_eq!(shift_pair_count(113, 0.01), 1);
        assert_eq!(shift_pair_count(2, 0.01), 1);
        assert_eq!(shift_pair_count(350, 0.01), 4);
        let row = Array1::from_iter((0..113).map(|i| i as f64 + 1.0));
        let out = random_shift(row.view(), 0.01, &mut substream(6, "t", 0));
        let changed = row.iter().zip(&out).filter(|(a, b)| a != b).count();
        assert_eq!(changed, 2);
    }

    #[test]
    fn form_pairs_are_uniform() {
        let mut rng = substream(7, "t", 0);
        let n = 600_000;
        let mut counts = [0usize; 6];
        for _ in 0..n {
            let p = sample_form_pair(&mut rng);
            counts[FormPair::ALL.iter().position(|q| *q == p).unwrap()] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 6.0).abs() < 0.01);
        }
        let a: Vec<_> = (0..20).map(|_| sample_form_pair(&mut substream(8, "t", 0))).collect();
        let b: Vec<_> = (0..20).map(|_| sample_form_pair(&mut substream(8, "t", 0))).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_is_interleaved() {
        let batch = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        let identity = AugmentConfig { mask_p: 0.0, ..Default::default() };
        let pair = FormPair { first: AugmentationKind::RandomMask, second: AugmentationKind::RandomMask };
        let out = augment_batch(&batch, pair, &identity, &mut substream(1, "t", 0));
        assert_eq!(out.nrows(), 6);
        for k in 0..3 {
            assert_eq!(out.row(2 * k), batch.row(k));
            assert_eq!(out.row(2 * k + 1), batch.row(k));
        }
    }

    #[test]
    fn batch_is_reproducible() {
        let batch = Array2::from_shape_fn((5, 7), |(i, j)| (i * 7 + j) as f64 * 0.1);
        let before = batch.clone();
        for pair in FormPair::ALL {
            let a = augment_batch(&batch, pair, &AugmentConfig::default(), &mut substream(3, "t", 1));
            let b = augment_batch(&batch, pair, &AugmentConfig::default(), &mut substream(3, "t", 1));
            assert_eq!(a, b);
        }
        assert_eq!(batch, before);
    }

    proptest! {
        #[test]
        fn shift_preserves_total_and_stays_finite(row in prop::collection::vec(-1e6f64..1e6, 2..300), seed in 0u64..1000) {
            let r = Array1::from(row);
            let out = random_shift(r.view(), 0.01, &mut substream(seed, "p", 0));
            prop_assert!(out.iter().all(|v| v.is_finite()));
            let before: f64 = r.sum();
            let after: f64 = out.iter().sum();
            prop_assert!((before - after).abs() <= 1e-9 * r.iter().map(|v| v.abs()).sum::<f64>().max(1.0));
        }

        #[test]
        fn mask_only_zeroes(row in prop::collection::vec(-1e3f64..1e3, 1..200), seed in 0u64..1000) {
            let r = Array1::from(row);
            let out = random_mask(r.view(), 0.3, &mut substream(seed, "p", 0));
            for (a, b) in r.iter().zip(&out) {
                prop_assert!(*b == 0.0 || a == b);
            }
        }
    }
}
