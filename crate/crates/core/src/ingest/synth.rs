//! Synthetic metagenomes with known provenance.
//!
//! Genomes are order-3 Markov chains with distinct transition tables. Every
//! sample is "assembled" independently: each genome is tiled into contigs with
//! sample-specific breakpoints, so a per-sample bin can reach full recall.
//! Reads are never materialized; each simulated read is a uniformly placed
//! genome position, mapped to every contig (from any sample) covering it.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{ContigRecord, MappingRecord, ReferenceEntry, ReferenceMap, Taxon};
use crate::rng::{substream, StreamRng};
use crate::{Error, Result};

const BASES: [u8; 4] = *b"ACGT";
const MAX_ATTEMPTS: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub genomes: usize,
    pub samples: usize,
    /// Contigs per genome in every sample's assembly.
    pub contigs_per_genome: usize,
    pub min_contig_len: usize,
    pub mean_contig_len: usize,
    /// Overrides `contigs_per_genome * mean_contig_len`.
    pub genome_length: Option<usize>,
    /// Minimum pairwise L1 distance between genome tetramer profiles.
    pub divergence: f64,
    /// Dirichlet concentration of the Markov transition rows.
    pub dirichlet_alpha: f64,
    /// Log-normal sigma of per-(genome, sample) read counts.
    pub abundance_sigma: f64,
    /// Median read count per genome per sample.
    pub reads_per_genome: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            genomes: 20,
            samples: 5,
            contigs_per_genome: 20,
            min_contig_len: 2000,
            mean_contig_len: 4000,
            genome_length: None,
            divergence: 0.3,
            dirichlet_alpha: 1.0,
            abundance_sigma: 1.0,
            reads_per_genome: 2000.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub sample_ids: Vec<String>,
    pub genomes: Vec<(String, Vec<u8>)>,
    pub contigs: Vec<ContigRecord>,
    pub mappings: Vec<MappingRecord>,
    pub reference: ReferenceMap,
}

struct Placed {
    genome: usize,
    sample: usize,
    start: usize,
    end: usize,
    reverse: bool,
}

pub fn synthesize_dataset(cfg: &SynthConfig) -> Result<SyntheticDataset> {
    if cfg.genomes == 0 || cfg.samples == 0 || cfg.contigs_per_genome == 0 {
        return Err(Error::InvalidArgument("genomes, samples and contigs_per_genome must be >= 1".into()));
    }
    if cfg.min_contig_len < 4 || cfg.dirichlet_alpha <= 0.0 || cfg.reads_per_genome < 0.0 {
        return Err(Error::InvalidArgument("invalid synthesis parameters".into()));
    }
    let genome_len = cfg.genome_length.unwrap_or(cfg.contigs_per_genome * cfg.mean_contig_len);
    if genome_len < cfg.contigs_per_genome * cfg.min_contig_len {
        return Err(Error::InvalidArgument(format!(
            "genome length {genome_len} cannot be split into {} contigs of at least {} bp",
            cfg.contigs_per_genome, cfg.min_contig_len
        )));
    }

    let mut rng = substream(cfg.seed, "synth.genomes", 0);
    let mut genomes: Vec<(String, Vec<u8>)> = Vec::with_capacity(cfg.genomes);
    let mut profiles: Vec<Vec<f64>> = Vec::with_capacity(cfg.genomes);
    for g in 0..cfg.genomes {
        let mut accepted = None;
        for _ in 0..MAX_ATTEMPTS {
            let table = transition_table(cfg.dirichlet_alpha, &mut rng)?;
            let seq = markov_sequence(&table, genome_len, &mut rng);
            let profile = tetramer_profile(&seq);
            if profiles.iter().all(|p| l1(p, &profile) >= cfg.divergence) {
                accepted = Some((seq, profile));
                break;
            }
        }
        let Some((seq, profile)) = accepted else {
            return Err(Error::InvalidArgument(format!(
                "could not draw genome {g} at tetramer divergence {} in {MAX_ATTEMPTS} attempts",
                cfg.divergence
            )));
        };
        genomes.push((format!("g{:02}", g + 1), seq));
        profiles.push(profile);
    }

    let sample_ids: Vec<String> = (1..=cfg.samples).map(|j| format!("s{j}")).collect();

    // Per-sample tilings of every genome.
    let mut rng = substream(cfg.seed, "synth.fragments", 0);
    let mut placed = Vec::new();
    // tilings[g][sample] = sorted contig starts with placed indices
    let mut tilings: Vec<Vec<Vec<(usize, usize)>>> = vec![vec![Vec::new(); cfg.samples]; cfg.genomes];
    for (g, tiling) in tilings.iter_mut().enumerate() {
        for (j, lane) in tiling.iter_mut().enumerate() {
            let lens = piece_lengths(genome_len, cfg.contigs_per_genome, cfg.min_contig_len, &mut rng);
            let mut start = 0;
            for len in lens {
                lane.push((start, placed.len()));
                placed.push(Placed { genome: g, sample: j, start, end: start + len, reverse: rng.random_bool(0.5) });
                start += len;
            }
            debug_assert_eq!(start, genome_len);
        }
    }

    // Dataset order is shuffled so contigs of one genome are not adjacent.
    let mut order: Vec<usize> = (0..placed.len()).collect();
    order.shuffle(&mut substream(cfg.seed, "synth.order", 0));
    let mut names = vec![String::new(); placed.len()];
    let mut per_sample = vec![0usize; cfg.samples];
    for &p in &order {
        let j = placed[p].sample;
        per_sample[j] += 1;
        names[p] = format!("{}c{:05}", sample_ids[j], per_sample[j]);
    }

    let mut contigs = Vec::with_capacity(placed.len());
    let mut entries = Vec::with_capacity(placed.len());
    for &p in &order {
        let pl = &placed[p];
        let genome = &genomes[pl.genome];
        let mut seq = genome.1[pl.start..pl.end].to_vec();
        if pl.reverse {
            seq = reverse_complement(&seq);
        }
        contigs.push(ContigRecord { contig_id: names[p].clone(), sample_id: sample_ids[pl.sample].clone(), sequence: seq });
        entries.push(ReferenceEntry {
            contig_id: names[p].clone(),
            genome_id: genome.0.clone(),
            start: pl.start as u64,
            end: pl.end as u64,
        });
    }

    let mut rng = substream(cfg.seed, "synth.reads", 0);
    let mut mappings = Vec::new();
    for (g, tiling) in tilings.iter().enumerate() {
        for sample in &sample_ids {
            let z: f64 = StandardNormal.sample(&mut rng);
            let n_reads = (cfg.reads_per_genome * (cfg.abundance_sigma * z).exp()).round() as usize;
            for r in 0..n_reads {
                let pos = rng.random_range(0..genome_len);
                let mapped: Vec<String> = tiling
                    .iter()
                    .map(|lane| {
                        let k = lane.partition_point(|&(start, _)| start <= pos) - 1;
                        names[lane[k].1].clone()
                    })
                    .collect();
                mappings.push(MappingRecord {
                    read_id: format!("{}_r{g}_{r}", sample),
                    sample_id: sample.clone(),
                    mapped_contig_ids: mapped,
                });
            }
        }
    }

    let genome_lengths: BTreeMap<String, u64> =
        genomes.iter().map(|(id, _)| (id.clone(), genome_len as u64)).collect();
    let taxonomy: BTreeMap<String, Taxon> = genomes
        .iter()
        .enumerate()
        .map(|(g, (id, _))| {
            (
                id.clone(),
                Taxon { strain: id.clone(), species: format!("sp{:02}", g / 2 + 1), genus: format!("ge{:02}", g / 4 + 1) },
            )
        })
        .collect();
    let reference = ReferenceMap::new(entries, genome_lengths, taxonomy)?;

    Ok(SyntheticDataset { sample_ids, genomes, contigs, mappings, reference })
}

fn transition_table(alpha: f64, rng: &mut StreamRng) -> Result<Vec<[f64; 4]>> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok((0..64)
        .map(|_| {
            let mut row = [0.0; 4];
            for v in row.iter_mut() {
                *v = gamma.sample(rng).max(1e-12);
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
            row
        })
        .collect())
}

fn markov_sequence(table: &[[f64; 4]], len: usize, rng: &mut StreamRng) -> Vec<u8> {
    let mut idx = Vec::with_capacity(len);
    for _ in 0..3.min(len) {
        idx.push(rng.random_range(0..4usize));
    }
    while idx.len() < len {
        let n = idx.len();
        let ctx = idx[n - 3] * 16 + idx[n - 2] * 4 + idx[n - 1];
        let u: f64 = rng.random();
        let row = &table[ctx];
        let mut acc = 0.0;
        let mut next = 3;
        for (b, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = b;
                break;
            }
        }
        idx.push(next);
    }
    idx.into_iter().map(|i| BASES[i]).collect()
}

/// Random lengths `>= min_len` summing to `total`.
fn piece_lengths(total: usize, pieces: usize, min_len: usize, rng: &mut StreamRng) -> Vec<usize> {
    let slack = total - pieces * min_len;
    let mut cuts: Vec<usize> = (0..pieces - 1).map(|_| rng.random_range(0..=slack)).collect();
    cuts.sort_unstable();
    let mut prev = 0;
    let mut out = Vec::with_capacity(pieces);
    for c in cuts.into_iter().chain(std::iter::once(slack)) {
        out.push(min_len + c - prev);
        prev = c;
    }
    out
}

/// Relative frequencies of the 256 tetramers over a sequence of definite bases.
pub(crate) fn tetramer_profile(seq: &[u8]) -> Vec<f64> {
    let mut counts = vec![0.0; 256];
    let mut total = 0.0;
    for w in seq.windows(4) {
        if let Some(i) = crate::features::kmer_index(w) {
            counts[i] += 1.0;
            total += 1.0;
        }
    }
    if total > 0.0 {
        counts.iter_mut().for_each(|c| *c /= total);
    }
    counts
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Reverse complement; non-ACGT bytes are kept as is.
pub fn reverse_complement(seq: &[u8]) -> Vec<u8> {
    seq.iter()
        .rev()
        .map(|b| match b {
            b'A' => b'T',
            b'C' => b'G',
            b'G' => b'C',
            b'T' => b'A',
            other => *other,
        })
        .collect()
}
