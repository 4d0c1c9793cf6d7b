//! Plain-text run configuration: one `section.key = value` per line, `#`
//! starts a comment. Every key has a default; unknown keys are rejected.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clmb_core::cluster::{DbscanParams, KMeansParams, MedoidParams};
use clmb_core::ingest::{SynthConfig, DEFAULT_MIN_CONTIG_LEN};
use clmb_core::nn::NetworkSpec;
use clmb_core::train::TrainConfig;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Medoid,
    KMeans,
    Dbscan,
}

impl FromStr for Algorithm {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "medoid" => Ok(Algorithm::Medoid),
            "kmeans" => Ok(Algorithm::KMeans),
            "dbscan" => Ok(Algorithm::Dbscan),
            _ => bail!("unknown clustering algorithm '{s}' (expected medoid, kmeans or dbscan)"),
        }
    }
}

impl Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Medoid => "medoid",
            Algorithm::KMeans => "kmeans",
            Algorithm::Dbscan => "dbscan",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaturizeOptions {
    pub k: usize,
    pub min_length: usize,
    /// Separator between sample and contig id in FASTA headers.
    pub separator: char,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOptions {
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
}

impl NetworkOptions {
    pub fn spec(&self, n_samples: usize, tnf_dim: usize) -> NetworkSpec {
        NetworkSpec {
            n_samples,
            tnf_dim,
            encoder_hidden: self.encoder_hidden.clone(),
            latent_dim: self.latent_dim,
            dropout_p: self.dropout,
            leaky_slope: self.leaky_slope,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOptions {
    pub algorithm: Algorithm,
    /// Separate every cluster by source sample.
    pub split: bool,
    pub medoid: MedoidParams,
    pub kmeans: KMeansParams,
    pub dbscan: DbscanParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub featurize: FeaturizeOptions,
    pub network: NetworkOptions,
    pub train: TrainConfig,
    pub cluster: ClusterOptions,
    /// Components kept by the PCA baseline; 0 means the latent dimension.
    pub pca_dims: usize,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let spec = NetworkSpec::new(1, 1);
        let mut cfg = Self {
            seed: 1,
            featurize: FeaturizeOptions { k: 4, min_length: DEFAULT_MIN_CONTIG_LEN, separator: '|' },
            network: NetworkOptions {
                encoder_hidden: spec.encoder_hidden,
                latent_dim: spec.latent_dim,
                dropout: spec.dropout_p,
                leaky_slope: spec.leaky_slope,
            },
            train: TrainConfig::default(),
            cluster: ClusterOptions {
                algorithm: Algorithm::Medoid,
                split: true,
                medoid: MedoidParams::default(),
                kmeans: KMeansParams::default(),
                dbscan: DbscanParams::default(),
            },
            pca_dims: 0,
            synth: SynthConfig::default(),
        };
        cfg.sync_seed();
        cfg
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| anyhow!("invalid value '{value}' for {key}"))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_char(key: &str, value: &str) -> Result<char> {
    let mut chars = value.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Ok(c),
        _ => bail!("{key} must be a single character, got '{value}'"),
    }
}

fn parse_optional(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl PipelineConfig {
    /// Sets one key. The seed is carried into every randomized component.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "run.seed" => self.seed = parse(key, v)?,
            "featurize.k" => self.featurize.k = parse(key, v)?,
            "featurize.min_length" => self.featurize.min_length = parse(key, v)?,
            "featurize.separator" => self.featurize.separator = parse_char(key, v)?,
            "network.encoder_hidden" => self.network.encoder_hidden = parse_list(key, v)?,
            "network.latent_dim" => self.network.latent_dim = parse(key, v)?,
            "network.dropout" => self.network.dropout = parse(key, v)?,
            "network.leaky_slope" => self.network.leaky_slope = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.learning_rate" => self.train.learning_rate = parse(key, v)?,
            "train.beta1" => self.train.beta1 = parse(key, v)?,
            "train.beta2" => self.train.beta2 = parse(key, v)?,
            "train.adam_eps" => self.train.adam_eps = parse(key, v)?,
            "train.tau" => self.train.tau = parse(key, v)?,
            "train.contrast_on_split" => self.train.contrast_on_split = parse(key, v)?,
            "augment.gaussian_scale" => self.train.augment.gaussian_scale = parse(key, v)?,
            "augment.mask_p" => self.train.augment.mask_p = parse(key, v)?,
            "augment.shift_fraction" => self.train.augment.shift_fraction = parse(key, v)?,
            "augment.gaussian_literal_mu" => self.train.augment.gaussian_literal_mu = parse(key, v)?,
            "cluster.algorithm" => self.cluster.algorithm = v.parse()?,
            "cluster.split" => self.cluster.split = parse(key, v)?,
            "medoid.max_steps" => self.cluster.medoid.max_steps = parse(key, v)?,
            "medoid.medoid_radius" => self.cluster.medoid.medoid_radius = parse(key, v)?,
            "medoid.default_radius" => self.cluster.medoid.default_radius = parse(key, v)?,
            "medoid.loner_radius" => self.cluster.medoid.loner_radius = parse(key, v)?,
            "medoid.bin_width" => self.cluster.medoid.bin_width = parse(key, v)?,
            "medoid.xmax" => self.cluster.medoid.xmax = parse(key, v)?,
            "medoid.smoothing_sd" => self.cluster.medoid.smoothing_sd = parse(key, v)?,
            "medoid.peak_valley_ratio" => self.cluster.medoid.peak_valley_ratio = parse(key, v)?,
            "medoid.min_cluster_size" => self.cluster.medoid.min_cluster_size = parse(key, v)?,
            "kmeans.k" => self.cluster.kmeans.k = parse(key, v)?,
            "kmeans.batch_size" => self.cluster.kmeans.batch_size = parse(key, v)?,
            "kmeans.max_iter" => self.cluster.kmeans.max_iter = parse(key, v)?,
            "kmeans.init_size" => self.cluster.kmeans.init_size = parse(key, v)?,
            "kmeans.reassignment_ratio" => self.cluster.kmeans.reassignment_ratio = parse(key, v)?,
            "kmeans.n_init" => self.cluster.kmeans.n_init = parse(key, v)?,
            "dbscan.eps" => self.cluster.dbscan.eps = parse(key, v)?,
            "dbscan.min_samples" => self.cluster.dbscan.min_samples = parse(key, v)?,
            "bench.pca_dims" => self.pca_dims = parse(key, v)?,
            "synth.genomes" => self.synth.genomes = parse(key, v)?,
            "synth.samples" => self.synth.samples = parse(key, v)?,
            "synth.contigs_per_genome" => self.synth.contigs_per_genome = parse(key, v)?,
            "synth.min_contig_len" => self.synth.min_contig_len = parse(key, v)?,
            "synth.mean_contig_len" => self.synth.mean_contig_len = parse(key, v)?,
            "synth.genome_length" => self.synth.genome_length = parse_optional(key, v)?,
            "synth.divergence" => self.synth.divergence = parse(key, v)?,
            "synth.dirichlet_alpha" => self.synth.dirichlet_alpha = parse(key, v)?,
            "synth.abundance_sigma" => self.synth.abundance_sigma = parse(key, v)?,
            "synth.reads_per_genome" => self.synth.reads_per_genome = parse(key, v)?,
            _ => bail!("unknown configuration key '{key}'"),
        }
        self.sync_seed();
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.sync_seed();
    }

    fn sync_seed(&mut self) {
        self.train.seed = self.seed;
        self.cluster.kmeans.seed = self.seed;
        self.synth.seed = self.seed;
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let (t, a, c) = (&self.train, &self.train.augment, &self.cluster);
        let (m, k, s) = (&c.medoid, &c.kmeans, &self.synth);
        vec![
            ("run.seed", self.seed.to_string()),
            ("featurize.k", self.featurize.k.to_string()),
            ("featurize.min_length", self.featurize.min_length.to_string()),
            ("featurize.separator", self.featurize.separator.to_string()),
            ("network.encoder_hidden", join(&self.network.encoder_hidden)),
            ("network.latent_dim", self.network.latent_dim.to_string()),
            ("network.dropout", format!("{:?}", self.network.dropout)),
            ("network.leaky_slope", format!("{:?}", self.network.leaky_slope)),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.epochs", t.epochs.to_string()),
            ("train.learning_rate", format!("{:?}", t.learning_rate)),
            ("train.beta1", format!("{:?}", t.beta1)),
            ("train.beta2", format!("{:?}", t.beta2)),
            ("train.adam_eps", format!("{:?}", t.adam_eps)),
            ("train.tau", format!("{:?}", t.tau)),
            ("train.contrast_on_split", t.contrast_on_split.to_string()),
            ("augment.gaussian_scale", format!("{:?}", a.gaussian_scale)),
            ("augment.mask_p", format!("{:?}", a.mask_p)),
            ("augment.shift_fraction", format!("{:?}", a.shift_fraction)),
            ("augment.gaussian_literal_mu", a.gaussian_literal_mu.to_string()),
            ("cluster.algorithm", c.algorithm.to_string()),
            ("cluster.split", c.split.to_string()),
            ("medoid.max_steps", m.max_steps.to_string()),
            ("medoid.medoid_radius", format!("{:?}", m.medoid_radius)),
            ("medoid.default_radius", format!("{:?}", m.default_radius)),
            ("medoid.loner_radius", format!("{:?}", m.loner_radius)),
            ("medoid.bin_width", format!("{:?}", m.bin_width)),
            ("medoid.xmax", format!("{:?}", m.xmax)),
            ("medoid.smoothing_sd", format!("{:?}", m.smoothing_sd)),
            ("medoid.peak_valley_ratio", format!("{:?}", m.peak_valley_ratio)),
            ("medoid.min_cluster_size", m.min_cluster_size.to_string()),
            ("kmeans.k", k.k.to_string()),
            ("kmeans.batch_size", k.batch_size.to_string()),
            ("kmeans.max_iter", k.max_iter.to_string()),
            ("kmeans.init_size", k.init_size.to_string()),
            ("kmeans.reassignment_ratio", format!("{:?}", k.reassignment_ratio)),
            ("kmeans.n_init", k.n_init.to_string()),
            ("dbscan.eps", format!("{:?}", c.dbscan.eps)),
            ("dbscan.min_samples", c.dbscan.min_samples.to_string()),
            ("bench.pca_dims", self.pca_dims.to_string()),
            ("synth.genomes", s.genomes.to_string()),
            ("synth.samples", s.samples.to_string()),
            ("synth.contigs_per_genome", s.contigs_per_genome.to_string()),
            ("synth.min_contig_len", s.min_contig_len.to_string()),
            ("synth.mean_contig_len", s.mean_contig_len.to_string()),
            ("synth.genome_length", s.genome_length.map_or("auto".into(), |v| v.to_string())),
            ("synth.divergence", format!("{:?}", s.divergence)),
            ("synth.dirichlet_alpha", format!("{:?}", s.dirichlet_alpha)),
            ("synth.abundance_sigma", format!("{:?}", s.abundance_sigma)),
            ("synth.reads_per_genome", format!("{:?}", s.reads_per_genome)),
        ]
    }

    /// Canonical text form; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn sha256(&self) -> String {
        hex(&Sha256::digest(self.to_text().as_bytes()))
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected 'section.key = value'", n + 1))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                bail!("line {}: key '{key}' given twice", n + 1);
            }
            self.set(key, value).with_context(|| format!("line {}", n + 1))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text).with_context(|| format!("in config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.network.spec(2, 1).validate()?;
        if !(2..=5).contains(&self.featurize.k) {
            bail!("featurize.k must be in 2..=5");
        }
        if self.cluster.kmeans.k == 0 || self.cluster.kmeans.batch_size == 0 {
            bail!("kmeans.k and kmeans.batch_size must be positive");
        }
        if self.cluster.dbscan.min_samples == 0 || !(self.cluster.dbscan.eps > 0.0) {
            bail!("dbscan.eps and dbscan.min_samples must be positive");
        }
        let m = &self.cluster.medoid;
        if !(m.bin_width > 0.0 && m.xmax > m.bin_width) {
            bail!("medoid.bin_width must be positive and below medoid.xmax");
        }
        Ok(())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
