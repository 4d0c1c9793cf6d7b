use std::collections::HashSet;
use std::io::{BufRead, Write};

use super::ContigRecord;
use crate::{Error, Result};

/// A read from one sample and every contig it mapped to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingRecord {
    pub read_id: String,
    pub sample_id: String,
    pub mapped_contig_ids: Vec<String>,
}

/// Parses `read_id<TAB>sample_id<TAB>contig1,contig2,...` lines.
///
/// `contigs` is the full (unfiltered) contig set the reads were mapped
/// against; every listed contig must be in it.
pub fn parse_mapping<R: BufRead>(reader: R, contigs: &[ContigRecord]) -> Result<Vec<MappingRecord>> {
    let known: HashSet<&str> = contigs.iter().map(|c| c.contig_id.as_str()).collect();
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(read_id), Some(sample_id)) = (fields.next(), fields.next()) else {
            return Err(Error::parse(line_no, "expected read_id<TAB>sample_id<TAB>contigs"));
        };
        let targets = fields.next().unwrap_or("");
        if fields.next().is_some() {
            return Err(Error::parse(line_no, "too many fields"));
        }
        if read_id.is_empty() || sample_id.is_empty() {
            return Err(Error::parse(line_no, "empty read or sample id"));
        }
        let mapped: Vec<String> =
            targets.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect();
        if mapped.is_empty() {
            return Err(Error::parse(line_no, format!("read '{read_id}' has an empty mapping")));
        }
        if let Some(bad) = mapped.iter().find(|c| !known.contains(c.as_str())) {
            return Err(Error::UnknownContig(bad.clone()));
        }
        out.push(MappingRecord {
            read_id: read_id.to_string(),
            sample_id: sample_id.to_string(),
            mapped_contig_ids: mapped,
        });
    }
    Ok(out)
}

pub fn write_mapping<W: Write>(mut writer: W, records: &[MappingRecord]) -> Result<()> {
    for r in records {
        writeln!(writer, "{}\t{}\t{}", r.read_id, r.sample_id, r.mapped_contig_ids.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn contigs() -> Vec<ContigRecord> {
        ["c1", "c2"]
            .iter()
            .map(|id| ContigRecord::new(*id, "s1", b"ACGT".to_vec()).unwrap())
            .collect()
    }

    #[test]
    fn parses_multi_mapped_read() {
        let recs = parse_mapping("r1\ts1\tc1,c2\n".as_bytes(), &contigs()).unwrap();
        assert_eq!(
            recs,
            vec![MappingRecord {
                read_id: "r1".into(),
                sample_id: "s1".into(),
                mapped_contig_ids: vec!["c1".into(), "c2".into()],
            }]
        );
    }

    #[test]
    fn empty_mapping_is_rejected() {
        assert!(matches!(parse_mapping("r1\ts1\t".as_bytes(), &contigs()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_mapping("r1\ts1".as_bytes(), &contigs()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn unknown_contig_is_named() {
        match parse_mapping("r1\ts1\tc1,zz\n".as_bytes(), &contigs()) {
            Err(Error::UnknownContig(id)) => assert_eq!(id, "zz"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reads_are_per_sample() {
        let recs = parse_mapping("r1\ts1\tc1\nr1\ts2\tc2\n".as_bytes(), &contigs()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_ne!(recs[0], recs[1]);
    }

    #[test]
    fn write_round_trips() {
        let recs = parse_mapping("r1\ts1\tc1,c2\nr2\ts2\tc2\n".as_bytes(), &contigs()).unwrap();
        let mut buf = Vec::new();
        write_mapping(&mut buf, &recs).unwrap();
        assert_eq!(parse_mapping(buf.as_slice(), &contigs()).unwrap(), recs);
    }
}
