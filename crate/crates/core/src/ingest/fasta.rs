use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use crate::{Error, Result};

/// One assembled contig and the sample it was assembled from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContigRecord {
    pub contig_id: String,
    pub sample_id: String,
    /// Uppercase bases over `{A, C, G, T, N}`.
    pub sequence: Vec<u8>,
}

impl ContigRecord {
    pub fn new(
        contig_id: impl Into<String>,
        sample_id: impl Into<String>,
        sequence: Vec<u8>,
    ) -> Result<Self> {
        let contig_id = contig_id.into();
        if sequence.is_empty() {
            return Err(Error::InvalidArgument(format!("contig '{contig_id}' has an empty sequence")));
        }
        if let Some(&b) = sequence.iter().find(|b| !matches!(b, b'A' | b'C' | b'G' | b'T' | b'N')) {
            return Err(Error::InvalidArgument(format!(
                "contig '{contig_id}' contains invalid base '{}'",
                b as char
            )));
        }
        Ok(ContigRecord { contig_id, sample_id: sample_id.into(), sequence })
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }
}

/// Where the sample of a FASTA record comes from.
#[derive(Debug, Clone)]
pub enum SampleAssignment {
    /// Header is `<sample><sep><contig>`.
    Header { separator: char },
    /// Bare contig ids, all from one sample.
    Fixed(String),
    /// Bare contig ids, sample looked up per contig.
    Map(HashMap<String, String>),
}

impl Default for SampleAssignment {
    fn default() -> Self {
        SampleAssignment::Header { separator: '|' }
    }
}

struct Pending {
    header_line: usize,
    contig_id: String,
    sample_id: String,
    sequence: Vec<u8>,
}

/// Parses FASTA text into contig records.
///
/// Sequences may span several lines and are upper-cased. Only the first
/// whitespace-delimited token of a header is used as the identifier.
pub fn parse_fasta<R: BufRead>(reader: R, samples: &SampleAssignment) -> Result<Vec<ContigRecord>> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut current: Option<Pending> = None;

    let finish = |p: Pending, records: &mut Vec<ContigRecord>, seen: &mut HashSet<String>| {
        if p.sequence.is_empty() {
            return Err(Error::parse(p.header_line, format!("contig '{}' has an empty sequence", p.contig_id)));
        }
        if !seen.insert(p.contig_id.clone()) {
            return Err(Error::DuplicateContig(p.contig_id));
        }
        records.push(ContigRecord { contig_id: p.contig_id, sample_id: p.sample_id, sequence: p.sequence });
        Ok(())
    };

    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end();
        if let Some(header) = line.strip_prefix('>') {
            if let Some(p) = current.take() {
                finish(p, &mut records, &mut seen)?;
            }
            let token = header.split_whitespace().next().unwrap_or("");
            if token.is_empty() {
                return Err(Error::parse(line_no, "empty FASTA header"));
            }
            let (sample_id, contig_id) = split_header(token, samples, line_no)?;
            current = Some(Pending { header_line: line_no, contig_id, sample_id, sequence: Vec::new() });
        } else if line.is_empty() {
            continue;
        } else {
            let Some(p) = current.as_mut() else {
                return Err(Error::parse(line_no, "sequence data before the first header"));
            };
            for &b in line.as_bytes() {
                let up = b.to_ascii_uppercase();
                if !matches!(up, b'A' | b'C' | b'G' | b'T' | b'N') {
                    return Err(Error::parse(line_no, format!("invalid character '{}'", b as char)));
                }
                p.sequence.push(up);
            }
        }
    }
    if let Some(p) = current.take() {
        finish(p, &mut records, &mut seen)?;
    }
    Ok(records)
}

fn split_header(token: &str, samples: &SampleAssignment, line_no: usize) -> Result<(String, String)> {
    match samples {
        SampleAssignment::Header { separator } => match token.split_once(*separator) {
            Some((s, c)) if !s.is_empty() && !c.is_empty() => Ok((s.to_string(), c.to_string())),
            _ => Err(Error::parse(
                line_no,
                format!("header '{token}' is not of the form <sample>{separator}<contig>"),
            )),
        },
        SampleAssignment::Fixed(sample) => Ok((sample.clone(), token.to_string())),
        SampleAssignment::Map(map) => match map.get(token) {
            Some(s) => Ok((s.clone(), token.to_string())),
            None => Err(Error::parse(line_no, format!("no sample assignment for contig '{token}'"))),
        },
    }
}

/// Writes records as `><sample><sep><contig>` with 80-column sequence lines.
pub fn write_fasta<'a, W, I>(mut writer: W, records: I, separator: char) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a ContigRecord>,
{
    for r in records {
        writeln!(writer, ">{}{}{}", r.sample_id, separator, r.contig_id)?;
        for chunk in r.sequence.chunks(80) {
            writer.write_all(chunk)?;
            writer.write_all(b"\n")?;
        }
    }
    Ok(())
}
