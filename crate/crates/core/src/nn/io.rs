//! Parameter serialization: a `CLMBVAE v1` line, a spec line, then the
//! trainable arrays and the batch-norm running statistics as little-endian f32.

use std::io::{BufRead, Read, Write};

use super::{NetworkSpec, Real, VaeParams};
use crate::{Error, Result};

const MAGIC: &str = "CLMBVAE v1";

fn spec_line(spec: &NetworkSpec) -> String {
    let hidden: Vec<String> = spec.encoder_hidden.iter().map(|h| h.to_string()).collect();
    format!(
        "spec n_samples={} tnf_dim={} encoder_hidden={} latent_dim={} dropout_p={:?} leaky_slope={:?}",
        spec.n_samples,
        spec.tnf_dim,
        hidden.join(","),
        spec.latent_dim,
        spec.dropout_p,
        spec.leaky_slope
    )
}

fn parse_spec(line: &str) -> Result<NetworkSpec> {
    let bad = |m: &str| Error::Format(format!("bad spec line: {m}"));
    let mut it = line.split_whitespace();
    if it.next() != Some("spec") {
        return Err(bad("missing 'spec'"));
    }
    let mut spec = NetworkSpec::new(0, 0);
    let mut seen = 0;
    for tok in it {
        let (k, v) = tok.split_once('=').ok_or_else(|| bad(tok))?;
        let num = |v: &str| v.parse::<usize>().map_err(|_| bad(tok));
        let flt = |v: &str| v.parse::<f64>().map_err(|_| bad(tok));
        match k {
            "n_samples" => spec.n_samples = num(v)?,
            "tnf_dim" => spec.tnf_dim = num(v)?,
            "encoder_hidden" => {
                spec.encoder_hidden = if v.is_empty() { Vec::new() } else { v.split(',').map(num).collect::<Result<_>>()? }
            }
            "latent_dim" => spec.latent_dim = num(v)?,
            "dropout_p" => spec.dropout_p = flt(v)?,
            "leaky_slope" => spec.leaky_slope = flt(v)?,
            _ => return Err(bad(tok)),
        }
        seen += 1;
    }
    if seen != 6 {
        return Err(bad("missing fields"));
    }
    Ok(spec)
}

pub(crate) fn write_f32s<W: Write, T: Real>(w: &mut W, values: &[T]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(crate) fn read_f32s<R: Read, T: Real>(r: &mut R, dst: &mut [T]) -> Result<()> {
    let mut buf = vec![0u8; dst.len() * 4];
    r.read_exact(&mut buf).map_err(|_| Error::Format("truncated checkpoint".into()))?;
    for (d, c) in dst.iter_mut().zip(buf.chunks_exact(4)) {
        *d = T::cast(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    }
    Ok(())
}

pub fn write_params<W: Write, T: Real>(mut w: W, params: &VaeParams<T>) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "{}", spec_line(&params.spec))?;
    for block in params.trainable().into_iter().chain(params.running_stats()) {
        write_f32s(&mut w, block)?;
    }
    Ok(())
}

/// Reads parameters; if `expected` is given, a different architecture is rejected.
pub fn read_params<R: BufRead, T: Real>(mut r: R, expected: Option<&NetworkSpec>) -> Result<VaeParams<T>> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(Error::Format("not a model checkpoint".into()));
    }
    line.clear();
    r.read_line(&mut line)?;
    let spec = parse_spec(line.trim_end())?;
    spec.validate()?;
    if let Some(e) = expected {
        if *e != spec {
            return Err(Error::ShapeMismatch(format!("checkpoint has '{}', expected '{}'", spec_line(&spec), spec_line(e))));
        }
    }
    let mut params = VaeParams::<T>::blank(&spec);
    for block in params.trainable_mut() {
        read_f32s(&mut r, block)?;
    }
    for block in params.running_stats_mut() {
        read_f32s(&mut r, block)?;
    }
    Ok(params)
}
