//! Nucleotide-level bin evaluation against a reference, recovered-genome
//! counts per taxonomic rank, and a PCA baseline.

mod pca;

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use crate::cluster::BinSet;
use crate::ingest::{ReferenceMap, Taxon};
use crate::{Error, Result};

pub use pca::{pca_project, Pca};

/// Recall thresholds of the report columns.
pub const RECALL_GRID: [f64; 7] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99];
pub const PRECISION_FLOOR: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct BinGenomeMetrics {
    pub bin_id: String,
    pub genome_id: String,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    /// The genome with the most true-positive bases for this bin.
    pub best: bool,
}

/// Total length of the union of half-open intervals.
pub fn union_length(spans: &mut [(u64, u64)]) -> u64 {
    spans.sort_unstable();
    let mut total = 0;
    let mut current: Option<(u64, u64)> = None;
    for &(s, e) in spans.iter() {
        match current {
            Some((cs, ce)) if s <= ce => current = Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += ce - cs;
                current = Some((s, e));
            }
            None => current = Some((s, e)),
        }
    }
    if let Some((cs, ce)) = current {
        total += ce - cs;
    }
    total
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores every (bin, genome) pair with at least one true-positive base.
///
/// True positives are genome bases covered by the bin's contigs, false
/// positives are bases the bin covers on other genomes plus the full length
/// of contigs absent from the reference, and false negatives are genome bases
/// covered by some contig of the reference but not by the bin. Lengths of
/// unknown contigs come from `unknown_lengths`.
pub fn evaluate_bins(bins: &BinSet, truth: &ReferenceMap, unknown_lengths: Option<&HashMap<String, u64>>) -> Result<Vec<BinGenomeMetrics>> {
    let mut by_contig = HashMap::new();
    let mut dataset: BTreeMap<&str, Vec<(u64, u64)>> = BTreeMap::new();
    for e in &truth.entries {
        if e.start >= e.end {
            return Err(Error::InvalidArgument(format!("inverted span for contig '{}'", e.contig_id)));
        }
        by_contig.insert(e.contig_id.as_str(), e);
        dataset.entry(&e.genome_id).or_default().push((e.start, e.end));
    }
    let covered: BTreeMap<&str, u64> = dataset.into_iter().map(|(g, mut s)| (g, union_length(&mut s))).collect();

    let mut out = Vec::new();
    for bin in &bins.bins {
        let mut spans: BTreeMap<&str, Vec<(u64, u64)>> = BTreeMap::new();
        let mut unknown = 0u64;
        for c in &bin.members {
            match by_contig.get(c.as_str()) {
                Some(e) => spans.entry(&e.genome_id).or_default().push((e.start, e.end)),
                None => {
                    let len = unknown_lengths.and_then(|m| m.get(c)).ok_or_else(|| Error::UnknownContig(c.clone()))?;
                    unknown += len;
                }
            }
        }
        let per_genome: Vec<(&str, u64)> = spans.into_iter().map(|(g, mut s)| (g, union_length(&mut s))).collect();
        let total: u64 = per_genome.iter().map(|p| p.1).sum::<u64>() + unknown;
        let best = per_genome.iter().enumerate().max_by(|a, b| a.1 .1.cmp(&b.1 .1).then(b.0.cmp(&a.0))).map(|(i, _)| i);
        for (i, &(g, tp)) in per_genome.iter().enumerate() {
            let fp = total - tp;
            let fn_ = covered[g] - tp;
            out.push(BinGenomeMetrics {
                bin_id: bin.id.clone(),
                genome_id: g.to_string(),
                tp,
                fp,
                fn_,
                precision: ratio(tp, tp + fp),
                recall: ratio(tp, tp + fn_),
                best: Some(i) == best,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rank {
    Strain,
    Species,
    Genus,
}

impl Rank {
    pub const ALL: [Rank; 3] = [Rank::Strain, Rank::Species, Rank::Genus];

    pub fn name(self) -> &'static str {
        match self {
            Rank::Strain => "strain",
            Rank::Species => "species",
            Rank::Genus => "genus",
        }
    }

    fn label(self, t: &Taxon) -> &str {
        match self {
            Rank::Strain => &t.strain,
            Rank::Species => &t.species,
            Rank::Genus => &t.genus,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub binner: String,
    pub rank: Rank,
    /// Recovered taxa per recall threshold.
    pub counts: Vec<usize>,
    /// Taxa with a bin at recall > 0.9 and precision > 0.95.
    pub nc: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub grid: Vec<f64>,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn row(&self, rank: Rank) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.rank == rank)
    }

    /// Near-complete strains.
    pub fn nc_strains(&self) -> usize {
        self.row(Rank::Strain).map_or(0, |r| r.nc)
    }

    pub fn extend(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
    }
}

/// Counts taxa recovered at each recall threshold with `precision >= floor`.
pub fn count_recovered(
    metrics: &[BinGenomeMetrics],
    taxonomy: &BTreeMap<String, Taxon>,
    binner: &str,
    precision_floor: f64,
    grid: &[f64],
) -> Result<EvalReport> {
    let mut rows = Vec::new();
    for rank in Rank::ALL {
        let mut hits: Vec<std::collections::BTreeSet<&str>> = vec![Default::default(); grid.len()];
        let mut nc = std::collections::BTreeSet::new();
        for m in metrics {
            let taxon = taxonomy.get(&m.genome_id).ok_or_else(|| Error::MissingTaxonomy(m.genome_id.clone()))?;
            let label = rank.label(taxon);
            for (set, &r) in hits.iter_mut().zip(grid) {
                if m.precision >= precision_floor && m.recall > r {
                    set.insert(label);
                }
            }
            if m.recall > 0.9 && m.precision > 0.95 {
                nc.insert(label);
            }
        }
        rows.push(ReportRow { binner: binner.to_string(), rank, counts: hits.iter().map(|s| s.len()).collect(), nc: nc.len() });
    }
    Ok(EvalReport { grid: grid.to_vec(), rows })
}

/// Taxonomy that labels every genome by its own id at all ranks.
pub fn identity_taxonomy(truth: &ReferenceMap) -> BTreeMap<String, Taxon> {
    truth
        .genome_lengths
        .keys()
        .map(|g| (g.clone(), Taxon { strain: g.clone(), species: g.clone(), genus: g.clone() }))
        .collect()
}

/// `binner rank <grid...> NC`
pub fn write_report<W: Write>(mut w: W, report: &EvalReport) -> Result<()> {
    write!(w, "binner\trank")?;
    for r in &report.grid {
        write!(w, "\t{r:.2}")?;
    }
    writeln!(w, "\tNC")?;
    for row in &report.rows {
        write!(w, "{}\t{}", row.binner, row.rank.name())?;
        for c in &row.counts {
            write!(w, "\t{c}")?;
        }
        writeln!(w, "\t{}", row.nc)?;
    }
    Ok(())
}

pub fn write_bin_metrics<W: Write>(mut w: W, metrics: &[BinGenomeMetrics]) -> Result<()> {
    writeln!(w, "bin_id\tgenome_id\tbest\tTP\tFP\tFN\tprecision\trecall")?;
    for m in metrics {
        writeln!(w, "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}", m.bin_id, m.genome_id, m.best, m.tp, m.fp, m.fn_, m.precision, m.recall)?;
    }
    Ok(())
}

/// Highest recall any bin reaches per genome, with that bin's precision.
pub fn best_recall_per_genome(metrics: &[BinGenomeMetrics], truth: &ReferenceMap) -> Vec<(String, f64, f64)> {
    truth
        .genome_lengths
        .keys()
        .map(|g| {
            let best = metrics
                .iter()
                .filter(|m| &m.genome_id == g)
                .max_by(|a, b| a.recall.total_cmp(&b.recall).then(a.precision.total_cmp(&b.precision)));
            (g.clone(), best.map_or(0.0, |m| m.recall), best.map_or(0.0, |m| m.precision))
        })
        .collect()
}

pub fn write_genome_recall<W: Write>(mut w: W, rows: &[(String, f64, f64)]) -> Result<()> {
    writeln!(w, "genome_id\tbest_recall\tprecision")?;
    for (g, r, p) in rows {
        writeln!(w, "{g}\t{r:.6}\t{p:.6}")?;
    }
    Ok(())
}
