//! Binary feature file and TSV export.
//!
//! Layout: a text line `CLMBFEAT v1 <n> <s> <tnf_dim>`, then `n` rows of
//! little-endian f32 (abundance then composition), then per contig a
//! length-prefixed id and sample id, then the `s` sample ids. Lengths are u32 LE.

use std::io::{BufRead, Read, Write};

use ndarray::Array2;

use super::FeatureMatrix;
use crate::{Error, Result};

const MAGIC: &str = "CLMBFEAT";
const VERSION: &str = "v1";

pub fn write_features<W: Write>(mut w: W, fm: &FeatureMatrix) -> Result<()> {
    writeln!(w, "{MAGIC} {VERSION} {} {} {}", fm.n_contigs(), fm.n_samples(), fm.tnf_dim())?;
    let mut buf = Vec::with_capacity(fm.n_contigs() * fm.dim() * 4);
    for i in 0..fm.n_contigs() {
        for v in fm.abundance.row(i).iter().chain(fm.tnf.row(i).iter()) {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    for (id, sample) in fm.contig_ids.iter().zip(&fm.sample_of_contig) {
        write_str(&mut w, id)?;
        write_str(&mut w, sample)?;
    }
    for s in &fm.sample_ids {
        write_str(&mut w, s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_features<R: BufRead>(mut r: R) -> Result<FeatureMatrix> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 5 || fields[0] != MAGIC {
        return Err(Error::Format("not a feature file".into()));
    }
    if fields[1] != VERSION {
        return Err(Error::Format(format!("unsupported feature file version '{}'", fields[1])));
    }
    let dims: Vec<usize> = fields[2..]
        .iter()
        .map(|f| f.parse().map_err(|_| Error::Format(format!("bad dimension '{f}'"))))
        .collect::<Result<_>>()?;
    let (n, s, t) = (dims[0], dims[1], dims[2]);
    let d = s + t;
    let mut raw = vec![0u8; n * d * 4];
    r.read_exact(&mut raw).map_err(truncated)?;
    let vals: Vec<f64> = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    let mut abundance = Array2::zeros((n, s));
    let mut tnf = Array2::zeros((n, t));
    for i in 0..n {
        let row = &vals[i * d..(i + 1) * d];
        abundance.row_mut(i).iter_mut().zip(&row[..s]).for_each(|(a, v)| *a = *v);
        tnf.row_mut(i).iter_mut().zip(&row[s..]).for_each(|(a, v)| *a = *v);
    }
    let mut contig_ids = Vec::with_capacity(n);
    let mut sample_of_contig = Vec::with_capacity(n);
    for _ in 0..n {
        contig_ids.push(read_str(&mut r)?);
        sample_of_contig.push(read_str(&mut r)?);
    }
    let sample_ids = (0..s).map(|_| read_str(&mut r)).collect::<Result<_>>()?;
    Ok(FeatureMatrix { abundance, tnf, contig_ids, sample_of_contig, sample_ids })
}

/// Human-readable dump: `contig_id sample_id a_* t_*` with a header row.
pub fn write_features_tsv<W: Write>(mut w: W, fm: &FeatureMatrix) -> Result<()> {
    write!(w, "contig_id\tsample_id")?;
    for s in &fm.sample_ids {
        write!(w, "\tab_{s}")?;
    }
    for j in 0..fm.tnf_dim() {
        write!(w, "\ttnf_{j}")?;
    }
    writeln!(w)?;
    for i in 0..fm.n_contigs() {
        write!(w, "{}\t{}", fm.contig_ids[i], fm.sample_of_contig[i])?;
        for v in fm.abundance.row(i).iter().chain(fm.tnf.row(i).iter()) {
            write!(w, "\t{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(truncated)?;
    let mut buf = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut buf).map_err(truncated)?;
    String::from_utf8(buf).map_err(|_| Error::Format("non-UTF-8 identifier".into()))
}

fn truncated(_: std::io::Error) -> Error {
    Error::Format("truncated feature file".into())
}
