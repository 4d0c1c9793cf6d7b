use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use clmb_core::features::FeatureSet;

use crate::commands::{self, BenchInput, ContigSource, Transform, Truth};
use crate::config::{Algorithm, PipelineConfig};

#[derive(Debug, Parser)]
#[command(name = "clmb", version, about = "Contrastive VAE binning of metagenomic contigs")]
pub struct Cli {
    /// Master seed; overrides `run.seed` from the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Configuration file of `section.key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; 1 gives the bit-reproducible reference mode.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ContigArgs {
    /// Contig FASTA; headers are `<sample><sep><contig>` unless --sample is given.
    #[arg(long)]
    pub fasta: PathBuf,
    /// Sample of every record when headers are bare contig ids.
    #[arg(long)]
    pub sample: Option<String>,
}

impl ContigArgs {
    fn source(&self) -> ContigSource {
        ContigSource { fasta: self.fasta.clone(), sample: self.sample.clone() }
    }
}

#[derive(Debug, Args)]
pub struct TruthArgs {
    /// `contig<TAB>genome<TAB>start<TAB>end`
    #[arg(long)]
    pub reference: PathBuf,
    /// `genome<TAB>strain<TAB>species<TAB>genus`; every genome is its own taxon if omitted.
    #[arg(long)]
    pub taxonomy: Option<PathBuf>,
    /// `genome<TAB>length`; defaults to the largest span end per genome.
    #[arg(long)]
    pub genome_lengths: Option<PathBuf>,
}

impl TruthArgs {
    fn truth(&self) -> Truth {
        Truth { reference: self.reference.clone(), taxonomy: self.taxonomy.clone(), genome_lengths: self.genome_lengths.clone() }
    }
}

#[derive(Debug, Args, Default)]
pub struct TrainOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlgorithmArg {
    Medoid,
    Kmeans,
    Dbscan,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Medoid => Algorithm::Medoid,
            AlgorithmArg::Kmeans => Algorithm::KMeans,
            AlgorithmArg::Dbscan => Algorithm::Dbscan,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FeatureSetArg {
    Abundance,
    Tnf,
    Both,
}

impl From<FeatureSetArg> for FeatureSet {
    fn from(a: FeatureSetArg) -> Self {
        match a {
            FeatureSetArg::Abundance => FeatureSet::Abundance,
            FeatureSetArg::Tnf => FeatureSet::Tnf,
            FeatureSetArg::Both => FeatureSet::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TransformArg {
    Raw,
    Pca,
    Encoded,
}

impl From<TransformArg> for Transform {
    fn from(a: TransformArg) -> Self {
        match a {
            TransformArg::Raw => Transform::Raw,
            TransformArg::Pca => Transform::Pca,
            TransformArg::Encoded => Transform::Encoded,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset with known provenance.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        genomes: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        contigs_per_genome: Option<usize>,
    },
    /// Compute normalized composition and abundance features.
    Featurize {
        #[command(flatten)]
        contigs: ContigArgs,
        /// `read<TAB>sample<TAB>contig1,contig2,...`
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        min_length: Option<usize>,
        /// Also write features.tsv.
        #[arg(long)]
        tsv: bool,
    },
    /// Train the contrastive VAE.
    Train {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: TrainOverrides,
        /// Continue from a checkpoint up to the configured epoch count.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Encode, cluster and split contigs into bins.
    Bin {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Contig FASTA for per-bin FASTA output.
        #[arg(long)]
        fasta: Option<PathBuf>,
        #[arg(long, requires = "fasta")]
        sample: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        algorithm: Option<AlgorithmArg>,
    },
    /// Score bins against a reference, or run the feature fusion matrix.
    Bench {
        #[command(flatten)]
        truth: TruthArgs,
        /// Clusters TSV to score.
        #[arg(long, conflicts_with = "feature_file", required_unless_present = "feature_file")]
        clusters: Option<PathBuf>,
        #[arg(long, default_value = "clmb")]
        binner: String,
        /// Feature file for fusion mode.
        #[arg(long)]
        feature_file: Option<PathBuf>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "both", requires = "feature_file")]
        features: Vec<FeatureSetArg>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "raw", requires = "feature_file")]
        transform: Vec<TransformArg>,
        /// Contig FASTA, for lengths of contigs missing from the reference.
        #[arg(long)]
        fasta: Option<PathBuf>,
        #[arg(long, requires = "fasta")]
        sample: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        algorithm: Option<AlgorithmArg>,
    },
    /// featurize, train, bin and optionally bench in one go.
    Pipeline {
        #[command(flatten)]
        contigs: ContigArgs,
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, requires = "reference")]
        taxonomy: Option<PathBuf>,
        #[arg(long, requires = "reference")]
        genome_lengths: Option<PathBuf>,
        #[command(flatten)]
        overrides: TrainOverrides,
        #[arg(long, value_enum)]
        algorithm: Option<AlgorithmArg>,
    },
}

fn apply_overrides(cfg: &mut PipelineConfig, o: &TrainOverrides) {
    if let Some(e) = o.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = o.batch_size {
        cfg.train.batch_size = b;
    }
}

fn apply_algorithm(cfg: &mut PipelineConfig, a: Option<AlgorithmArg>) {
    if let Some(a) = a {
        cfg.cluster.algorithm = a.into();
    }
}

/// Builds the effective configuration: defaults, then the config file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_file(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    match &cli.command {
        Command::Synth { genomes, samples, contigs_per_genome, .. } => {
            cfg.synth.genomes = genomes.unwrap_or(cfg.synth.genomes);
            cfg.synth.samples = samples.unwrap_or(cfg.synth.samples);
            cfg.synth.contigs_per_genome = contigs_per_genome.unwrap_or(cfg.synth.contigs_per_genome);
        }
        Command::Featurize { k, min_length, .. } => {
            cfg.featurize.k = k.unwrap_or(cfg.featurize.k);
            cfg.featurize.min_length = min_length.unwrap_or(cfg.featurize.min_length);
        }
        Command::Train { overrides, .. } => apply_overrides(&mut cfg, overrides),
        Command::Bin { algorithm, .. } | Command::Bench { algorithm, .. } => apply_algorithm(&mut cfg, *algorithm),
        Command::Pipeline { overrides, algorithm, .. } => {
            apply_overrides(&mut cfg, overrides);
            apply_algorithm(&mut cfg, *algorithm);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    let source = |fasta: &Option<PathBuf>, sample: &Option<String>| fasta.as_ref().map(|f| ContigSource { fasta: f.clone(), sample: sample.clone() });
    match &cli.command {
        Command::Synth { out, .. } => commands::synth(&cfg, out),
        Command::Featurize { contigs, mapping, out, tsv, .. } => commands::featurize(&cfg, &contigs.source(), mapping.as_deref(), out, *tsv).map(|_| ()),
        Command::Train { features, out, resume, .. } => commands::train(&cfg, features, out, resume.as_deref()).map(|_| ()),
        Command::Bin { features, checkpoint, fasta, sample, out, .. } => {
            commands::bin(&cfg, features, checkpoint, source(fasta, sample).as_ref(), out).map(|_| ())
        }
        Command::Bench { truth, clusters, binner, feature_file, features, transform, fasta, sample, out, .. } => {
            let input = match (clusters, feature_file) {
                (Some(path), _) => BenchInput::Clusters { path: path.clone(), binner: binner.clone() },
                (None, Some(ff)) => BenchInput::Fusion {
                    features: ff.clone(),
                    sets: features.iter().map(|&f| f.into()).collect(),
                    transforms: transform.iter().map(|&t| t.into()).collect(),
                },
                (None, None) => unreachable!("clap requires --clusters or --feature-file"),
            };
            commands::bench(&cfg, &input, &truth.truth(), source(fasta, sample).as_ref(), out).map(|_| ())
        }
        Command::Pipeline { contigs, mapping, out, reference, taxonomy, genome_lengths, .. } => {
            let truth = reference.as_ref().map(|r| Truth { reference: r.clone(), taxonomy: taxonomy.clone(), genome_lengths: genome_lengths.clone() });
            commands::pipeline(&cfg, &contigs.source(), mapping.as_deref(), truth.as_ref(), out).map(|_| ())
        }
    }
}

/// 3 for numeric failures, 2 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    let numeric = err.chain().any(|e| e.downcast_ref::<clmb_core::Error>().is_some_and(clmb_core::Error::is_numeric));
    if numeric {
        3
    } else {
        2
    }
}
