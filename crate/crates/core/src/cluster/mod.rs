//! Clustering of latent vectors into bins.

mod dbscan;
mod kmeans;
mod medoid;

use std::collections::HashMap;
use std::io::{BufRead, Write};

use ndarray::Array2;

use crate::{Error, Result};

pub use dbscan::{dbscan, DbscanParams};
pub use kmeans::{effective_k, minibatch_kmeans, KMeansParams, KMeansResult};
pub use medoid::{find_threshold, iterative_medoid, MedoidParams};

/// Contig representations, row order matching the feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentMatrix {
    pub values: Array2<f64>,
    pub contig_ids: Vec<String>,
    pub sample_of_contig: Vec<String>,
}

impl LatentMatrix {
    pub fn new(values: Array2<f64>, contig_ids: Vec<String>, sample_of_contig: Vec<String>) -> Result<Self> {
        if values.nrows() != contig_ids.len() || contig_ids.len() != sample_of_contig.len() {
            return Err(Error::ShapeMismatch("latent rows, contig ids and samples differ in length".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent matrix has non-finite entries".into()));
        }
        Ok(Self { values, contig_ids, sample_of_contig })
    }

    pub fn len(&self) -> usize {
        self.contig_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contig_ids.is_empty()
    }
}

/// Cluster id per point, ids contiguous from zero in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    pub assignment: Vec<usize>,
    pub n_clusters: usize,
}

impl Clustering {
    /// Relabels arbitrary labels to contiguous ids by first appearance.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map = HashMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self { assignment, n_clusters: map.len() }
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (i, &c) in self.assignment.iter().enumerate() {
            out[c].push(i);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bin {
    pub id: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BinSet {
    pub bins: Vec<Bin>,
}

impl BinSet {
    pub fn n_contigs(&self) -> usize {
        self.bins.iter().map(|b| b.members.len()).sum()
    }
}

/// Splits every cluster by source sample. Bin ids are `<cluster>C<sample>S`.
pub fn multi_split(clustering: &Clustering, contig_ids: &[String], sample_of_contig: &[String]) -> Result<BinSet> {
    if clustering.assignment.len() != contig_ids.len() || contig_ids.len() != sample_of_contig.len() {
        return Err(Error::ShapeMismatch("clustering, contig ids and samples differ in length".into()));
    }
    let mut bins = Vec::new();
    for (c, members) in clustering.members().into_iter().enumerate() {
        let mut by_sample: Vec<(String, Vec<String>)> = Vec::new();
        for i in members {
            let s = &sample_of_contig[i];
            match by_sample.iter_mut().find(|(k, _)| k == s) {
                Some((_, v)) => v.push(contig_ids[i].clone()),
                None => by_sample.push((s.clone(), vec![contig_ids[i].clone()])),
            }
        }
        for (s, members) in by_sample {
            bins.push(Bin { id: format!("{c}C{s}S"), members });
        }
    }
    Ok(BinSet { bins })
}

/// Pools all samples into one bin per cluster.
pub fn bins_without_split(clustering: &Clustering, contig_ids: &[String]) -> BinSet {
    let bins = clustering
        .members()
        .into_iter()
        .enumerate()
        .map(|(c, m)| Bin { id: format!("{c}C"), members: m.into_iter().map(|i| contig_ids[i].clone()).collect() })
        .collect();
    BinSet { bins }
}

/// `bin_id<TAB>contig_id`, one row per contig, no header.
pub fn write_clusters<W: Write>(mut w: W, bins: &BinSet) -> Result<()> {
    for b in &bins.bins {
        for m in &b.members {
            writeln!(w, "{}\t{}", b.id, m)?;
        }
    }
    Ok(())
}

/// Reads a clusters TSV. A leading `bin_id<TAB>contig_id` header is accepted.
pub fn read_clusters<R: BufRead>(r: R) -> Result<BinSet> {
    let mut bins: Vec<Bin> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut seen = std::collections::HashSet::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') || (n == 0 && line == "bin_id\tcontig_id") {
            continue;
        }
        let (bin, contig) = line.split_once('\t').ok_or_else(|| Error::parse(n + 1, "expected bin_id<TAB>contig_id"))?;
        if bin.is_empty() || contig.is_empty() || contig.contains('\t') {
            return Err(Error::parse(n + 1, "expected bin_id<TAB>contig_id"));
        }
        if !seen.insert(contig.to_string()) {
            return Err(Error::DuplicateContig(contig.to_string()));
        }
        let i = *index.entry(bin.to_string()).or_insert_with(|| {
            bins.push(Bin { id: bin.to_string(), members: Vec::new() });
            bins.len() - 1
        });
        bins[i].members.push(contig.to_string());
    }
    Ok(BinSet { bins })
}

/// Pair-counting agreement between two labelings: true when they describe
/// the same partition.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    a.len() == b.len() && Clustering::from_labels(a) == Clustering::from_labels(b)
}

/// Adjusted Rand index of two labelings.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let pairs = |x: f64| x * (x - 1.0) / 2.0;
    let mut table: HashMap<(usize, usize), f64> = HashMap::new();
    let mut ra: HashMap<usize, f64> = HashMap::new();
    let mut rb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *ra.entry(x).or_default() += 1.0;
        *rb.entry(y).or_default() += 1.0;
    }
    let index: f64 = table.values().map(|&v| pairs(v)).sum();
    let sa: f64 = ra.values().map(|&v| pairs(v)).sum();
    let sb: f64 = rb.values().map(|&v| pairs(v)).sum();
    let expected = sa * sb / pairs(n);
    let max = 0.5 * (sa + sb);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
