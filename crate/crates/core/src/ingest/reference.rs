use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use crate::{Error, Result};

/// Placement of one contig on its source genome, half-open `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceEntry {
    pub contig_id: String,
    pub genome_id: String,
    pub start: u64,
    pub end: u64,
}

impl ReferenceEntry {
    pub fn span_len(&self) -> u64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxon {
    pub strain: String,
    pub species: String,
    pub genus: String,
}

/// Ground truth for benchmarking: contig provenance, genome sizes and taxonomy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceMap {
    pub entries: Vec<ReferenceEntry>,
    pub genome_lengths: BTreeMap<String, u64>,
    pub taxonomy: BTreeMap<String, Taxon>,
}

impl ReferenceMap {
    /// Validates spans and fills in any missing genome length with the
    /// largest span end seen for that genome.
    pub fn new(
        entries: Vec<ReferenceEntry>,
        mut genome_lengths: BTreeMap<String, u64>,
        taxonomy: BTreeMap<String, Taxon>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.start >= e.end {
                return Err(Error::InvalidArgument(format!(
                    "inverted span {}..{} for contig '{}'",
                    e.start, e.end, e.contig_id
                )));
            }
            if !seen.insert(e.contig_id.as_str()) {
                return Err(Error::DuplicateContig(e.contig_id.clone()));
            }
        }
        let mut max_end: BTreeMap<&str, u64> = BTreeMap::new();
        for e in &entries {
            let m = max_end.entry(e.genome_id.as_str()).or_default();
            *m = (*m).max(e.end);
        }
        for (genome, end) in max_end {
            match genome_lengths.get(genome) {
                Some(&len) if end > len => {
                    return Err(Error::InvalidArgument(format!(
                        "span end {end} exceeds length {len} of genome '{genome}'"
                    )))
                }
                Some(_) => {}
                None => {
                    genome_lengths.insert(genome.to_string(), end);
                }
            }
        }
        Ok(ReferenceMap { entries, genome_lengths, taxonomy })
    }
}

fn tsv_lines<R: BufRead>(reader: R, fields: usize) -> Result<Vec<(usize, Vec<String>)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<String> = line.split('\t').map(str::to_string).collect();
        if cols.len() != fields {
            return Err(Error::parse(idx + 1, format!("expected {fields} tab-separated fields, found {}", cols.len())));
        }
        out.push((idx + 1, cols));
    }
    Ok(out)
}

fn parse_u64(s: &str, line: usize) -> Result<u64> {
    s.parse().map_err(|_| Error::parse(line, format!("'{s}' is not a non-negative integer")))
}

/// `contig_id<TAB>genome_id<TAB>start<TAB>end`
pub fn parse_reference<R: BufRead>(reader: R) -> Result<Vec<ReferenceEntry>> {
    tsv_lines(reader, 4)?
        .into_iter()
        .map(|(line, c)| {
            let start = parse_u64(&c[2], line)?;
            let end = parse_u64(&c[3], line)?;
            if start >= end {
                return Err(Error::parse(line, format!("inverted span {start}..{end}")));
            }
            Ok(ReferenceEntry { contig_id: c[0].clone(), genome_id: c[1].clone(), start, end })
        })
        .collect()
}

/// `genome_id<TAB>strain<TAB>species<TAB>genus`
pub fn parse_taxonomy<R: BufRead>(reader: R) -> Result<BTreeMap<String, Taxon>> {
    let mut out = BTreeMap::new();
    for (line, c) in tsv_lines(reader, 4)? {
        let taxon = Taxon { strain: c[1].clone(), species: c[2].clone(), genus: c[3].clone() };
        if out.insert(c[0].clone(), taxon).is_some() {
            return Err(Error::parse(line, format!("duplicate genome '{}'", c[0])));
        }
    }
    Ok(out)
}

/// `genome_id<TAB>length`
pub fn parse_genome_lengths<R: BufRead>(reader: R) -> Result<BTreeMap<String, u64>> {
    tsv_lines(reader, 2)?
        .into_iter()
        .map(|(line, c)| Ok((c[0].clone(), parse_u64(&c[1], line)?)))
        .collect()
}

pub fn write_reference<W: Write>(mut w: W, entries: &[ReferenceEntry]) -> Result<()> {
    for e in entries {
        writeln!(w, "{}\t{}\t{}\t{}", e.contig_id, e.genome_id, e.start, e.end)?;
    }
    Ok(())
}

pub fn write_taxonomy<W: Write>(mut w: W, taxonomy: &BTreeMap<String, Taxon>) -> Result<()> {
    for (g, t) in taxonomy {
        writeln!(w, "{g}\t{}\t{}\t{}", t.strain, t.species, t.genus)?;
    }
    Ok(())
}

pub fn write_genome_lengths<W: Write>(mut w: W, lengths: &BTreeMap<String, u64>) -> Result<()> {
    for (g, l) in lengths {
        writeln!(w, "{g}\t{l}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_validates() {
        let entries = parse_reference("c1\tg1\t0\t100\nc2\tg1\t50\t200\n".as_bytes()).unwrap();
        let map = ReferenceMap::new(entries, BTreeMap::new(), BTreeMap::new()).unwrap();
        assert_eq!(map.genome_lengths["g1"], 200);

        assert!(parse_reference("c1\tg1\t10\t10\n".as_bytes()).is_err());
        assert!(parse_reference("c1\tg1\t10\n".as_bytes()).is_err());

        let e = vec![ReferenceEntry { contig_id: "c".into(), genome_id: "g".into(), start: 5, end: 3 }];
        assert!(ReferenceMap::new(e, BTreeMap::new(), BTreeMap::new()).is_err());

        let e = vec![ReferenceEntry { contig_id: "c".into(), genome_id: "g".into(), start: 0, end: 30 }];
        let lengths = BTreeMap::from([("g".to_string(), 20)]);
        assert!(ReferenceMap::new(e, lengths, BTreeMap::new()).is_err());
    }

    #[test]
    fn taxonomy_round_trip() {
        let tax = parse_taxonomy("g1\tst1\tsp1\tge1\ng2\tst2\tsp1\tge1\n".as_bytes()).unwrap();
        assert_eq!(tax["g2"].species, "sp1");
        let mut buf = Vec::new();
        write_taxonomy(&mut buf, &tax).unwrap();
        assert_eq!(parse_taxonomy(buf.as_slice()).unwrap(), tax);
        assert!(parse_taxonomy("g1\ta\tb\tc\ng1\ta\tb\tc\n".as_bytes()).is_err());
    }
}
