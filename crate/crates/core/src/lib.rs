//! Contrastive-learning metagenomic binning.
//!
//! The crate covers the whole path from assembled contigs to evaluated bins:
//!
//! * [`ingest`] parses FASTA, read-mapping and reference files and synthesizes
//!   desk-scale datasets with known provenance.
//! * [`features`] computes the constrained k-mer composition (TNF) and RPKM
//!   abundance and normalizes them into a [`features::FeatureMatrix`].
//! * [`augment`] implements the three feature-space noise operators and the
//!   form-pair sampling used to build contrastive training pairs.
//! * [`nn`] is the variational autoencoder with hand-derived gradients.
//! * [`loss`] holds the reconstruction, KL and NT-Xent terms and their weighting.
//! * [`train`] runs the minibatch training loop with Adam.
//! * [`cluster`] groups latent vectors into bins (iterative medoid, minibatch
//!   k-means, DBSCAN) and applies the per-sample split.
//! * [`bench`] scores bins against a reference and provides the PCA baseline.

pub mod augment;
pub mod bench;
pub mod cluster;
mod error;
pub mod features;
pub mod ingest;
pub mod loss;
pub mod nn;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
