//! Contig features: constrained k-mer composition (TNF), RPKM abundance and
//! their normalized concatenation.

mod io;
mod kernel;

use std::collections::{HashMap, HashSet};

use ndarray::{concatenate, Array2, Axis};
use rayon::prelude::*;

use crate::ingest::{ContigRecord, MappingRecord};
use crate::{Error, Result};

pub use io::{read_features, write_features, write_features_tsv};
pub use kernel::{build_kernel, reverse_complement_index, KmerKernel};

/// 2-bit code of a k-mer of definite bases, `None` if it contains anything else.
pub fn kmer_index(kmer: &[u8]) -> Option<usize> {
    kmer.iter().try_fold(0usize, |acc, &b| Some((acc << 2) | base_code(b)?))
}

fn base_code(b: u8) -> Option<usize> {
    match b {
        b'A' => Some(0),
        b'C' => Some(1),
        b'G' => Some(2),
        b'T' => Some(3),
        _ => None,
    }
}

/// Raw k-mer counts over windows of definite bases; windows touching `N` are skipped.
pub fn kmer_counts(seq: &[u8], k: usize) -> Vec<f64> {
    let mask = (1usize << (2 * k)) - 1;
    let mut counts = vec![0.0; 1 << (2 * k)];
    let mut code = 0usize;
    let mut valid = 0usize;
    for &b in seq {
        match base_code(b) {
            Some(c) => {
                code = ((code << 2) | c) & mask;
                valid += 1;
                if valid >= k {
                    counts[code] += 1.0;
                }
            }
            None => valid = 0,
        }
    }
    counts
}

/// Projected k-mer composition of one sequence.
pub fn compute_composition(seq: &[u8], kernel: &KmerKernel) -> Result<Vec<f64>> {
    let counts = kmer_counts(seq, kernel.k());
    let total: f64 = counts.iter().sum();
    if total == 0.0 {
        return Err(Error::Unfeaturizable(String::from_utf8_lossy(&seq[..seq.len().min(20)]).into_owned()));
    }
    let m = kernel.matrix();
    let mut out = vec![0.0; kernel.projected_dim()];
    for (w, &c) in counts.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let f = c / total;
        for (o, &kv) in out.iter_mut().zip(m.row(w)) {
            *o += f * kv;
        }
    }
    Ok(out)
}

/// Per-contig composition rows, before normalization.
#[derive(Debug, Clone)]
pub struct TnfMatrix {
    pub values: Array2<f64>,
    pub contig_ids: Vec<String>,
    pub sample_of_contig: Vec<String>,
}

pub fn compute_tnf(contigs: &[ContigRecord], kernel: &KmerKernel) -> Result<TnfMatrix> {
    let rows: Vec<Vec<f64>> = contigs
        .par_iter()
        .map(|c| {
            compute_composition(&c.sequence, kernel).map_err(|_| Error::Unfeaturizable(c.contig_id.clone()))
        })
        .collect::<Result<_>>()?;
    let mut values = Array2::zeros((contigs.len(), kernel.projected_dim()));
    for (mut dst, src) in values.rows_mut().into_iter().zip(&rows) {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d = *s);
    }
    Ok(TnfMatrix {
        values,
        contig_ids: contigs.iter().map(|c| c.contig_id.clone()).collect(),
        sample_of_contig: contigs.iter().map(|c| c.sample_id.clone()).collect(),
    })
}

/// Reads per kilobase per million mapped reads, contigs x samples.
#[derive(Debug, Clone)]
pub struct AbundanceMatrix {
    pub values: Array2<f64>,
    pub sample_ids: Vec<String>,
}

/// RPKM from read mappings.
///
/// A read mapped to `n` contigs adds `1/n` to each. Every mapped read counts
/// once towards its sample's total, including reads whose contigs are not in
/// `contigs` (e.g. removed by the length filter); such contigs simply get no
/// row. A sample without mapped reads yields an all-zero column.
pub fn compute_rpkm(
    mappings: &[MappingRecord],
    contigs: &[ContigRecord],
    samples: &[String],
) -> Result<AbundanceMatrix> {
    let row_of: HashMap<&str, usize> =
        contigs.iter().enumerate().map(|(i, c)| (c.contig_id.as_str(), i)).collect();
    let col_of: HashMap<&str, usize> = samples.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut counts = Array2::<f64>::zeros((contigs.len(), samples.len()));
    let mut totals = vec![0.0f64; samples.len()];
    for m in mappings {
        let Some(&col) = col_of.get(m.sample_id.as_str()) else {
            return Err(Error::InvalidArgument(format!("read '{}' has unknown sample '{}'", m.read_id, m.sample_id)));
        };
        if m.mapped_contig_ids.is_empty() {
            return Err(Error::InvalidArgument(format!("read '{}' has an empty mapping", m.read_id)));
        }
        totals[col] += 1.0;
        let share = 1.0 / m.mapped_contig_ids.len() as f64;
        for c in &m.mapped_contig_ids {
            if let Some(&row) = row_of.get(c.as_str()) {
                counts[(row, col)] += share;
            }
        }
    }
    for (row, contig) in contigs.iter().enumerate() {
        let kb = contig.len() as f64 / 1000.0;
        for (col, &total) in totals.iter().enumerate() {
            counts[(row, col)] = if total > 0.0 { counts[(row, col)] / kb / (total / 1e6) } else { 0.0 };
        }
    }
    Ok(AbundanceMatrix { values: counts, sample_ids: samples.to_vec() })
}

/// Normalized model input: abundance distribution over samples followed by
/// z-scaled composition.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    /// contigs x s, rows sum to one.
    pub abundance: Array2<f64>,
    /// contigs x tnf_dim, columns z-scaled.
    pub tnf: Array2<f64>,
    pub contig_ids: Vec<String>,
    pub sample_of_contig: Vec<String>,
    pub sample_ids: Vec<String>,
}

/// Which feature blocks to keep, for fusion experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSet {
    Abundance,
    Tnf,
    Both,
}

impl FeatureMatrix {
    pub fn n_contigs(&self) -> usize {
        self.contig_ids.len()
    }

    pub fn n_samples(&self) -> usize {
        self.abundance.ncols()
    }

    pub fn tnf_dim(&self) -> usize {
        self.tnf.ncols()
    }

    pub fn dim(&self) -> usize {
        self.n_samples() + self.tnf_dim()
    }

    /// `[abundance | tnf]` row-major.
    pub fn concat(&self) -> Array2<f64> {
        concatenate(Axis(1), &[self.abundance.view(), self.tnf.view()]).expect("row counts match")
    }

    pub fn select(&self, set: FeatureSet) -> FeatureMatrix {
        let mut out = self.clone();
        match set {
            FeatureSet::Both => {}
            FeatureSet::Abundance => out.tnf = Array2::zeros((self.n_contigs(), 0)),
            FeatureSet::Tnf => {
                out.abundance = Array2::zeros((self.n_contigs(), 0));
                out.sample_ids.clear();
            }
        }
        out
    }
}

/// Z-scales each composition column (zero-variance columns become zero) and
/// turns each abundance row into a distribution over samples (all-zero rows
/// become uniform).
pub fn normalize_features(tnf: &TnfMatrix, abundance: &AbundanceMatrix) -> Result<FeatureMatrix> {
    let n = tnf.values.nrows();
    if abundance.values.nrows() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} composition rows vs {} abundance rows",
            n,
            abundance.values.nrows()
        )));
    }
    let mut t = tnf.values.clone();
    if n > 0 {
        for mut col in t.columns_mut() {
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if sd > 1e-12 * mean.abs().max(1.0) {
                col.mapv_inplace(|v| (v - mean) / sd);
            } else {
                col.fill(0.0);
            }
        }
    }
    let mut a = abundance.values.clone();
    let s = a.ncols();
    for mut row in a.rows_mut() {
        let total = row.sum();
        if total > 0.0 {
            row.mapv_inplace(|v| v / total);
        } else if s > 0 {
            row.fill(1.0 / s as f64);
        }
    }
    Ok(FeatureMatrix {
        abundance: a,
        tnf: t,
        contig_ids: tnf.contig_ids.clone(),
        sample_of_contig: tnf.sample_of_contig.clone(),
        sample_ids: abundance.sample_ids.clone(),
    })
}

/// Samples in order of first appearance among contigs, then mappings.
pub fn collect_samples(contigs: &[ContigRecord], mappings: &[MappingRecord]) -> Vec<String> {
    let mut seen = HashSet::new();
    contigs
        .iter()
        .map(|c| &c.sample_id)
        .chain(mappings.iter().map(|m| &m.sample_id))
        .filter(|s| seen.insert(s.as_str()))
        .cloned()
        .collect()
}

/// Composition + abundance + normalization in one step.
pub fn featurize(contigs: &[ContigRecord], mappings: &[MappingRecord], kernel: &KmerKernel) -> Result<FeatureMatrix> {
    let samples = collect_samples(contigs, mappings);
    let tnf = compute_tnf(contigs, kernel)?;
    let abundance = compute_rpkm(mappings, contigs, &samples)?;
    normalize_features(&tnf, &abundance)
}
