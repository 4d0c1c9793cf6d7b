//! Input parsing, contig filtering and synthetic dataset generation.

mod fasta;
mod mapping;
mod reference;
mod synth;

pub use fasta::{parse_fasta, write_fasta, ContigRecord, SampleAssignment};
pub use mapping::{parse_mapping, write_mapping, MappingRecord};
pub use reference::{
    parse_genome_lengths, parse_reference, parse_taxonomy, write_genome_lengths, write_reference,
    write_taxonomy, ReferenceEntry, ReferenceMap, Taxon,
};
pub use synth::{reverse_complement, synthesize_dataset, SynthConfig, SyntheticDataset};

/// Minimum contig length kept for binning.
pub const DEFAULT_MIN_CONTIG_LEN: usize = 2000;

/// Keeps records with `len() >= min_length`, preserving order.
pub fn filter_contigs(records: Vec<ContigRecord>, min_length: usize) -> Vec<ContigRecord> {
    records.into_iter().filter(|r| r.len() >= min_length).collect()
}

/// Sample ids in order of first appearance among the contigs.
pub fn sample_order(records: &[ContigRecord]) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut order = Vec::new();
    for r in records {
        if seen.insert(r.sample_id.as_str()) {
            order.push(r.sample_id.clone());
        }
    }
    order
}
