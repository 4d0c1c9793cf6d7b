//! Subcommand implementations. Every command writes its outputs and a
//! manifest into one output directory.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clmb_core::bench::{
    best_recall_per_genome, count_recovered, evaluate_bins, identity_taxonomy, pca_project, write_bin_metrics, write_genome_recall,
    write_report, EvalReport, PRECISION_FLOOR, RECALL_GRID,
};
use clmb_core::cluster::{bins_without_split, dbscan, iterative_medoid, minibatch_kmeans, multi_split, read_clusters, write_clusters, BinSet, Clustering, LatentMatrix};
use clmb_core::features::{build_kernel, featurize as compute_features, read_features, write_features, write_features_tsv, FeatureMatrix, FeatureSet};
use clmb_core::ingest::{
    filter_contigs, parse_fasta, parse_genome_lengths, parse_mapping, parse_reference, parse_taxonomy, synthesize_dataset, write_fasta,
    write_genome_lengths, write_mapping, write_reference, write_taxonomy, ContigRecord, ReferenceMap, SampleAssignment,
};
use clmb_core::nn::{read_params, VaeParams};
use clmb_core::train::{encode_features, write_loss_log, Trainer};
use log::{info, warn};
use ndarray::Array2;

use crate::config::{Algorithm, ClusterOptions, PipelineConfig};
use crate::manifest::Manifest;

pub const FEATURES_FILE: &str = "features.clmb";
pub const CHECKPOINT_FILE: &str = "checkpoint.clmb";
pub const LOSS_FILE: &str = "loss.tsv";
pub const CLUSTERS_FILE: &str = "clusters.tsv";
pub const REPORT_FILE: &str = "report.tsv";
pub const BINS_DIR: &str = "bins";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Raw,
    Pca,
    Encoded,
}

impl Transform {
    pub fn name(self) -> &'static str {
        match self {
            Transform::Raw => "raw",
            Transform::Pca => "pca",
            Transform::Encoded => "encoded",
        }
    }
}

pub fn feature_set_name(set: FeatureSet) -> &'static str {
    match set {
        FeatureSet::Abundance => "abundance",
        FeatureSet::Tnf => "tnf",
        FeatureSet::Both => "both",
    }
}

/// Contig input: a FASTA file plus how to find each record's sample.
#[derive(Debug, Clone)]
pub struct ContigSource {
    pub fasta: PathBuf,
    /// Every record comes from this sample; headers are bare contig ids.
    pub sample: Option<String>,
}

impl ContigSource {
    fn assignment(&self, cfg: &PipelineConfig) -> SampleAssignment {
        match &self.sample {
            Some(s) => SampleAssignment::Fixed(s.clone()),
            None => SampleAssignment::Header { separator: cfg.featurize.separator },
        }
    }

    pub fn read(&self, cfg: &PipelineConfig) -> Result<Vec<ContigRecord>> {
        let f = open(&self.fasta)?;
        parse_fasta(f, &self.assignment(cfg)).with_context(|| format!("parsing {}", self.fasta.display()))
    }

    /// Header token the record was read from.
    fn header(&self, cfg: &PipelineConfig, r: &ContigRecord) -> String {
        match self.sample {
            Some(_) => r.contig_id.clone(),
            None => format!("{}{}{}", r.sample_id, cfg.featurize.separator, r.contig_id),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Truth {
    pub reference: PathBuf,
    pub taxonomy: Option<PathBuf>,
    pub genome_lengths: Option<PathBuf>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating directory {}", dir.display()))
}

pub fn synth(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    ensure_dir(out)?;
    let mut manifest = Manifest::new("synth");
    let ds = synthesize_dataset(&cfg.synth)?;
    let files = [("contigs", "contigs.fna"), ("mapping", "mapping.tsv"), ("reference", "reference.tsv"), ("taxonomy", "taxonomy.tsv"), ("genome_lengths", "genome_lengths.tsv")];
    for (name, file) in files {
        let path = out.join(file);
        let mut w = create(&path)?;
        match name {
            "contigs" => write_fasta(&mut w, &ds.contigs, cfg.featurize.separator)?,
            "mapping" => write_mapping(&mut w, &ds.mappings)?,
            "reference" => write_reference(&mut w, &ds.reference.entries)?,
            "taxonomy" => write_taxonomy(&mut w, &ds.reference.taxonomy)?,
            _ => write_genome_lengths(&mut w, &ds.reference.genome_lengths)?,
        }
        w.flush()?;
        drop(w);
        manifest.output(name, &path)?;
    }
    info!("synthesized {} contigs from {} genomes in {} samples", ds.contigs.len(), ds.genomes.len(), ds.sample_ids.len());
    manifest.write(out, cfg)?;
    Ok(())
}

pub fn featurize(cfg: &PipelineConfig, contigs: &ContigSource, mapping: Option<&Path>, out: &Path, tsv: bool) -> Result<PathBuf> {
    let Some(mapping) = mapping else {
        bail!("a read mapping file is required: abundance is a mandatory feature (compare composition-only clustering with `clmb bench --features tnf`)");
    };
    ensure_dir(out)?;
    let mut manifest = Manifest::new("featurize");
    let all = contigs.read(cfg)?;
    let mappings = parse_mapping(open(mapping)?, &all).with_context(|| format!("parsing {}", mapping.display()))?;
    manifest.input("fasta", &contigs.fasta)?;
    manifest.input("mapping", mapping)?;
    let n_all = all.len();
    let kept = filter_contigs(all, cfg.featurize.min_length);
    if kept.is_empty() {
        bail!("no contig is at least {} bases long", cfg.featurize.min_length);
    }
    info!("{} of {} contigs pass the {} bp length filter", kept.len(), n_all, cfg.featurize.min_length);
    let kernel = build_kernel(cfg.featurize.k)?;
    let fm = compute_features(&kept, &mappings, &kernel)?;
    info!("features: {} contigs, {} samples, {} composition dims", fm.n_contigs(), fm.n_samples(), fm.tnf_dim());

    let path = out.join(FEATURES_FILE);
    let mut w = create(&path)?;
    write_features(&mut w, &fm)?;
    w.flush()?;
    drop(w);
    manifest.output("features", &path)?;
    if tsv {
        let tsv_path = out.join("features.tsv");
        let mut w = create(&tsv_path)?;
        write_features_tsv(&mut w, &fm)?;
        w.flush()?;
    }
    manifest.write(out, cfg)?;
    Ok(path)
}

pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    read_features(open(path)?).with_context(|| format!("reading features {}", path.display()))
}

pub fn train(cfg: &PipelineConfig, features: &Path, out: &Path, resume: Option<&Path>) -> Result<PathBuf> {
    ensure_dir(out)?;
    let mut manifest = Manifest::new("train");
    let fm = load_features(features)?;
    manifest.input("features", features)?;
    let spec = cfg.network.spec(fm.n_samples(), fm.tnf_dim());
    let mut trainer = match resume {
        Some(ckpt) => {
            manifest.input("resume", ckpt)?;
            let t = Trainer::from_checkpoint(open(ckpt)?, &fm, &spec, cfg.train.clone())
                .with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
            info!("resuming after epoch {} (optimizer step {})", t.epoch, t.adam.step);
            if t.epoch >= cfg.train.epochs {
                warn!("checkpoint already has {} epochs; nothing to train", t.epoch);
            }
            t
        }
        None => Trainer::new(&fm, &spec, cfg.train.clone())?,
    };
    let log = trainer.run()?;

    let ckpt_path = out.join(CHECKPOINT_FILE);
    let mut w = create(&ckpt_path)?;
    trainer.write_checkpoint(&mut w)?;
    w.flush()?;
    drop(w);

    let loss_path = out.join(LOSS_FILE);
    if resume.is_some() && loss_path.exists() {
        let mut buf = Vec::new();
        write_loss_log(&mut buf, &log)?;
        let body = buf.splitn(2, |&b| b == b'\n').nth(1).unwrap_or_default();
        fs::OpenOptions::new().append(true).open(&loss_path)?.write_all(body)?;
    } else {
        let mut w = create(&loss_path)?;
        write_loss_log(&mut w, &log)?;
        w.flush()?;
    }
    manifest.output("checkpoint", &ckpt_path)?;
    manifest.note(format!("epochs completed: {}", trainer.epoch));
    manifest.write(out, cfg)?;
    Ok(ckpt_path)
}

pub fn load_params(path: &Path, fm: &FeatureMatrix) -> Result<VaeParams<f32>> {
    let params: VaeParams<f32> = read_params(open(path)?, None).with_context(|| format!("reading checkpoint {}", path.display()))?;
    if params.spec.n_samples != fm.n_samples() || params.spec.tnf_dim != fm.tnf_dim() {
        return Err(clmb_core::Error::ShapeMismatch(format!(
            "checkpoint expects {} samples and {} composition dims, features have {} and {}",
            params.spec.n_samples,
            params.spec.tnf_dim,
            fm.n_samples(),
            fm.tnf_dim()
        ))
        .into());
    }
    Ok(params)
}

pub fn cluster(latent: &LatentMatrix, opts: &ClusterOptions) -> Clustering {
    let c = match opts.algorithm {
        Algorithm::Medoid => iterative_medoid(latent, &opts.medoid),
        Algorithm::KMeans => minibatch_kmeans(latent, &opts.kmeans).clustering,
        Algorithm::Dbscan => dbscan(latent, &opts.dbscan),
    };
    info!("{} found {} clusters over {} contigs", opts.algorithm, c.n_clusters, latent.len());
    c
}

/// Clusters rows of `values` (aligned with `fm`) into bins.
pub fn bin_rows(values: Array2<f64>, fm: &FeatureMatrix, opts: &ClusterOptions) -> Result<BinSet> {
    let latent = LatentMatrix::new(values, fm.contig_ids.clone(), fm.sample_of_contig.clone())?;
    let clustering = cluster(&latent, opts);
    Ok(if opts.split { multi_split(&clustering, &fm.contig_ids, &fm.sample_of_contig)? } else { bins_without_split(&clustering, &fm.contig_ids) })
}

fn file_name_safe(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' }).collect()
}

pub fn bin(cfg: &PipelineConfig, features: &Path, checkpoint: &Path, contigs: Option<&ContigSource>, out: &Path) -> Result<PathBuf> {
    ensure_dir(out)?;
    let mut manifest = Manifest::new("bin");
    let fm = load_features(features)?;
    let params = load_params(checkpoint, &fm)?;
    manifest.input("features", features)?;
    manifest.input("checkpoint", checkpoint)?;
    let bins = bin_rows(encode_features(&params, &fm)?, &fm, &cfg.cluster)?;

    let path = out.join(CLUSTERS_FILE);
    let mut w = create(&path)?;
    write_clusters(&mut w, &bins)?;
    w.flush()?;
    drop(w);
    manifest.output("clusters", &path)?;
    info!("wrote {} bins", bins.bins.len());

    if let Some(src) = contigs {
        manifest.input("fasta", &src.fasta)?;
        write_bin_fastas(cfg, src, &bins, &out.join(BINS_DIR))?;
    }
    manifest.write(out, cfg)?;
    Ok(path)
}

fn write_bin_fastas(cfg: &PipelineConfig, src: &ContigSource, bins: &BinSet, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "fna") {
            fs::remove_file(&p)?;
        }
    }
    let records = src.read(cfg)?;
    let by_id: HashMap<&str, &ContigRecord> = records.iter().map(|r| (r.contig_id.as_str(), r)).collect();
    let mut names = std::collections::HashSet::new();
    for b in &bins.bins {
        let name = file_name_safe(&b.id);
        if !names.insert(name.clone()) {
            bail!("bin ids '{}' collide after file-name sanitizing", b.id);
        }
        let mut w = create(&dir.join(format!("{name}.fna")))?;
        for m in &b.members {
            let r = by_id.get(m.as_str()).with_context(|| format!("contig '{m}' is not in {}", src.fasta.display()))?;
            writeln!(w, ">{}", src.header(cfg, r))?;
            for chunk in r.sequence.chunks(80) {
                w.write_all(chunk)?;
                w.write_all(b"\n")?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

pub fn load_truth(truth: &Truth, manifest: &mut Manifest) -> Result<ReferenceMap> {
    let entries = parse_reference(open(&truth.reference)?).with_context(|| format!("parsing {}", truth.reference.display()))?;
    manifest.input("reference", &truth.reference)?;
    let lengths = match &truth.genome_lengths {
        Some(p) => {
            manifest.input("genome_lengths", p)?;
            parse_genome_lengths(open(p)?).with_context(|| format!("parsing {}", p.display()))?
        }
        None => Default::default(),
    };
    let taxonomy = match &truth.taxonomy {
        Some(p) => {
            manifest.input("taxonomy", p)?;
            parse_taxonomy(open(p)?).with_context(|| format!("parsing {}", p.display()))?
        }
        None => Default::default(),
    };
    let mut map = ReferenceMap::new(entries, lengths, taxonomy)?;
    if truth.taxonomy.is_none() {
        map.taxonomy = identity_taxonomy(&map);
    }
    Ok(map)
}

/// Scores one bin set and writes its per-bin and per-genome tables.
fn score(bins: &BinSet, truth: &ReferenceMap, lengths: Option<&HashMap<String, u64>>, binner: &str, out: &Path) -> Result<EvalReport> {
    let metrics = evaluate_bins(bins, truth, lengths)?;
    let report = count_recovered(&metrics, &truth.taxonomy, binner, PRECISION_FLOOR, &RECALL_GRID)?;
    let tag = file_name_safe(binner);
    let mut w = create(&out.join(format!("bin_metrics-{tag}.tsv")))?;
    write_bin_metrics(&mut w, &metrics)?;
    w.flush()?;
    let mut w = create(&out.join(format!("genome_recall-{tag}.tsv")))?;
    write_genome_recall(&mut w, &best_recall_per_genome(&metrics, truth))?;
    w.flush()?;
    info!("{binner}: {} NC genomes", report.nc_strains());
    Ok(report)
}

#[derive(Debug, Clone)]
pub enum BenchInput {
    /// A clusters TSV scored under the given binner name.
    Clusters { path: PathBuf, binner: String },
    /// Cluster every (feature set, transform) combination of a feature file.
    Fusion { features: PathBuf, sets: Vec<FeatureSet>, transforms: Vec<Transform> },
}

pub fn bench(cfg: &PipelineConfig, input: &BenchInput, truth: &Truth, contigs: Option<&ContigSource>, out: &Path) -> Result<EvalReport> {
    ensure_dir(out)?;
    let mut manifest = Manifest::new("bench");
    let reference = load_truth(truth, &mut manifest)?;
    let lengths: Option<HashMap<String, u64>> = match contigs {
        Some(src) => {
            manifest.input("fasta", &src.fasta)?;
            Some(src.read(cfg)?.into_iter().map(|r| (r.contig_id.clone(), r.len() as u64)).collect())
        }
        None => None,
    };
    let mut report = EvalReport { grid: RECALL_GRID.to_vec(), rows: Vec::new() };
    match input {
        BenchInput::Clusters { path, binner } => {
            manifest.input("clusters", path)?;
            let bins = read_clusters(open(path)?).with_context(|| format!("parsing {}", path.display()))?;
            report.extend(score(&bins, &reference, lengths.as_ref(), binner, out)?);
        }
        BenchInput::Fusion { features, sets, transforms } => {
            manifest.input("features", features)?;
            let fm = load_features(features)?;
            for &set in sets {
                let sub = fm.select(set);
                for &t in transforms {
                    let binner = format!("{}-{}", feature_set_name(set), t.name());
                    let values = transform(cfg, &sub, t)?;
                    let bins = bin_rows(values, &sub, &cfg.cluster)?;
                    report.extend(score(&bins, &reference, lengths.as_ref(), &binner, out)?);
                }
            }
        }
    }
    let path = out.join(REPORT_FILE);
    let mut w = create(&path)?;
    write_report(&mut w, &report)?;
    w.flush()?;
    drop(w);
    manifest.output("report", &path)?;
    manifest.write(out, cfg)?;
    Ok(report)
}

/// Feature rows under one of the fusion transforms. `Encoded` trains a fresh
/// model on exactly these features.
pub fn transform(cfg: &PipelineConfig, fm: &FeatureMatrix, t: Transform) -> Result<Array2<f64>> {
    let x = fm.concat();
    if x.ncols() == 0 {
        bail!("the selected feature set is empty");
    }
    Ok(match t {
        Transform::Raw => x,
        Transform::Pca => {
            let wanted = if cfg.pca_dims == 0 { cfg.network.latent_dim } else { cfg.pca_dims };
            pca_project(&x, wanted.min(x.ncols()))?.projected
        }
        Transform::Encoded => {
            let spec = cfg.network.spec(fm.n_samples(), fm.tnf_dim());
            let mut trainer = Trainer::new(fm, &spec, cfg.train.clone())?;
            trainer.run()?;
            encode_features(&trainer.params, fm)?
        }
    })
}

/// featurize, train, bin and (with a reference) bench in one directory.
pub fn pipeline(cfg: &PipelineConfig, contigs: &ContigSource, mapping: Option<&Path>, truth: Option<&Truth>, out: &Path) -> Result<Option<EvalReport>> {
    let mut manifest = Manifest::new("pipeline");
    let features = featurize(cfg, contigs, mapping, out, false)?;
    let checkpoint = train(cfg, &features, out, None)?;
    let clusters = bin(cfg, &features, &checkpoint, Some(contigs), out)?;
    let report = match truth {
        Some(t) => {
            let input = BenchInput::Clusters { path: clusters.clone(), binner: "clmb".into() };
            Some(bench(cfg, &input, t, Some(contigs), out)?)
        }
        None => None,
    };
    manifest.input("fasta", &contigs.fasta)?;
    if let Some(m) = mapping {
        manifest.input("mapping", m)?;
    }
    for (name, path) in [("features", &features), ("checkpoint", &checkpoint), ("clusters", &clusters)] {
        manifest.output(name, path)?;
    }
    if report.is_some() {
        manifest.output("report", &out.join(REPORT_FILE))?;
    }
    manifest.write(out, cfg)?;
    Ok(report)
}
