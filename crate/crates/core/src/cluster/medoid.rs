//! Iterative medoid clustering on cosine distance.
//!
//! Starting from the lowest-index unclustered point, the seed moves to the
//! medoid of its close neighbourhood until it settles. A cluster radius is
//! then read off the smoothed histogram of distances from the medoid (the
//! first clear valley after the near peak) and every unclustered point inside
//! it forms a cluster.

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;

use super::{Clustering, LatentMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct MedoidParams {
    pub max_steps: usize,
    /// Neighbourhood radius used while moving the seed to a medoid.
    pub medoid_radius: f64,
    /// Radius used when the histogram has no valley.
    pub default_radius: f64,
    /// Radius used for points with no close neighbours.
    pub loner_radius: f64,
    pub bin_width: f64,
    pub xmax: f64,
    pub smoothing_sd: f64,
    pub peak_valley_ratio: f64,
    /// Clusters smaller than this are broken into singletons.
    pub min_cluster_size: usize,
}

impl Default for MedoidParams {
    fn default() -> Self {
        Self {
            max_steps: 25,
            medoid_radius: 0.05,
            default_radius: 0.06,
            loner_radius: 0.025,
            bin_width: 0.005,
            xmax: 0.3,
            smoothing_sd: 0.01,
            peak_valley_ratio: 0.1,
            min_cluster_size: 1,
        }
    }
}

fn unit_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut u = x.clone();
    for mut row in u.rows_mut() {
        let n = row.dot(&row).sqrt();
        if n > 0.0 {
            row /= n;
        }
    }
    u
}

/// `(1 - cos) / 2` from `point` to every candidate.
fn distances(u: &Array2<f64>, point: usize, candidates: &[usize]) -> Vec<f64> {
    let p = u.row(point);
    candidates.par_iter().map(|&c| ((1.0 - p.dot(&u.row(c))) / 2.0).max(0.0)).collect()
}

fn smooth(hist: &[f64], sd_bins: f64) -> Vec<f64> {
    if sd_bins <= 0.0 {
        return hist.to_vec();
    }
    let half = (3.0 * sd_bins).ceil() as isize;
    let kernel: Vec<f64> = (-half..=half).map(|k| (-(k as f64).powi(2) / (2.0 * sd_bins * sd_bins)).exp()).collect();
    let total: f64 = kernel.iter().sum();
    (0..hist.len() as isize)
        .map(|i| {
            (-half..=half)
                .filter_map(|k| {
                    let j = i + k;
                    (j >= 0 && (j as usize) < hist.len()).then(|| hist[j as usize] * kernel[(k + half) as usize])
                })
                .sum::<f64>()
                / total
        })
        .collect()
}

/// Cluster radius from distances to the medoid (the medoid itself excluded).
pub fn find_threshold(dists: &[f64], params: &MedoidParams) -> f64 {
    let nbins = (params.xmax / params.bin_width).round() as usize;
    let mut hist = vec![0.0; nbins];
    for &d in dists {
        if d < params.xmax {
            hist[((d / params.bin_width) as usize).min(nbins - 1)] += 1.0;
        }
    }
    let near_bins = ((params.medoid_radius / params.bin_width).round() as usize).min(nbins);
    if hist[..near_bins].iter().sum::<f64>() == 0.0 {
        return params.loner_radius;
    }
    let hist = smooth(&hist, params.smoothing_sd / params.bin_width);

    let mut peak = 0.0f64;
    let mut past_peak = false;
    let mut minimum = f64::INFINITY;
    for (i, &density) in hist.iter().enumerate() {
        peak = peak.max(density);
        if !past_peak && density < 0.6 * peak {
            past_peak = true;
            minimum = density;
        }
        if !past_peak {
            continue;
        }
        if density > 1.5 * minimum {
            break;
        }
        if density <= minimum {
            minimum = density;
            if minimum / peak < params.peak_valley_ratio {
                return i as f64 * params.bin_width;
            }
        }
    }
    params.default_radius
}

/// Point of `members` minimising the summed distance to the others; ties go
/// to the earliest member.
fn medoid_of(u: &Array2<f64>, members: &[usize]) -> usize {
    let sub = u.select(Axis(0), members);
    let sims = sub.dot(&sub.t());
    let totals: Array1<f64> = sims.mapv(|s| (1.0 - s) / 2.0).sum_axis(Axis(1));
    let mut best = 0;
    for (i, &t) in totals.iter().enumerate() {
        if t < totals[best] {
            best = i;
        }
    }
    members[best]
}

pub fn iterative_medoid(latent: &LatentMatrix, params: &MedoidParams) -> Clustering {
    let n = latent.len();
    let u = unit_rows(&latent.values);
    let mut labels = vec![usize::MAX; n];
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut next_label = 0;
    while let Some(&seed) = remaining.first() {
        let mut medoid = seed;
        for _ in 0..params.max_steps {
            let d = distances(&u, medoid, &remaining);
            let near: Vec<usize> = remaining.iter().zip(&d).filter(|(_, &d)| d <= params.medoid_radius).map(|(&i, _)| i).collect();
            if near.is_empty() {
                break;
            }
            let moved = medoid_of(&u, &near);
            if moved == medoid {
                break;
            }
            medoid = moved;
        }
        let d = distances(&u, medoid, &remaining);
        let others: Vec<f64> = remaining.iter().zip(&d).filter(|(&i, _)| i != medoid).map(|(_, &d)| d).collect();
        let radius = find_threshold(&others, params);
        let (members, rest): (Vec<(usize, f64)>, Vec<(usize, f64)>) =
            remaining.iter().copied().zip(d).partition(|&(i, d)| i == medoid || d <= radius);
        if members.len() >= params.min_cluster_size {
            for (i, _) in &members {
                labels[*i] = next_label;
            }
            next_label += 1;
        } else {
            for (i, _) in &members {
                labels[*i] = next_label;
                next_label += 1;
            }
        }
        remaining = rest.into_iter().map(|(i, _)| i).collect();
    }
    Clustering::from_labels(&labels)
}
