//! Density-based clustering on Euclidean distance. Noise points become
//! singleton clusters.

use std::collections::VecDeque;

use ndarray::Axis;
use rayon::prelude::*;

use super::{Clustering, LatentMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct DbscanParams {
    pub eps: f64,
    /// Neighbourhood size, the point itself included, that makes a core point.
    pub min_samples: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self { eps: 0.35, min_samples: 2 }
    }
}

pub fn dbscan(latent: &LatentMatrix, params: &DbscanParams) -> Clustering {
    let x = &latent.values;
    let n = x.nrows();
    let eps2 = params.eps * params.eps;
    let neighbors: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = x.row(i);
            x.axis_iter(Axis(0))
                .enumerate()
                .filter(|(_, b)| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() <= eps2)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= params.min_samples).collect();

    let mut labels = vec![usize::MAX; n];
    let mut next = 0;
    for start in 0..n {
        if labels[start] != usize::MAX || !core[start] {
            continue;
        }
        labels[start] = next;
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            if !core[p] {
                continue;
            }
            for &q in &neighbors[p] {
                if labels[q] == usize::MAX {
                    labels[q] = next;
                    queue.push_back(q);
                }
            }
        }
        next += 1;
    }
    for l in labels.iter_mut().filter(|l| **l == usize::MAX) {
        *l = next;
        next += 1;
    }
    Clustering::from_labels(&labels)
}
