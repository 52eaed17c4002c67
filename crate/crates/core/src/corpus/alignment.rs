//! Alignment file format: one tab-separated record per word occurrence
//! (`utterance, word, begin_sample, end_sample`) with a one-line header.
//!
//! Sample-index units avoid float-second rounding. Forced-aligner output
//! (e.g. TextGrid word tiers) maps onto this format by converting each
//! word interval to sample indices at the audio's rate; that conversion is
//! out of scope here.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Interval;
use crate::labeling::{Event, Lexicon};

pub const ALIGNMENT_HEADER: &str = "utterance\tword\tbegin_sample\tend_sample";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentRecord {
    pub utterance: String,
    pub word: String,
    pub begin: i64,
    pub end: i64,
}

pub fn write_alignments<W: Write>(mut out: W, records: &[AlignmentRecord]) -> std::io::Result<()> {
    writeln!(out, "{ALIGNMENT_HEADER}")?;
    for r in records {
        writeln!(out, "{}\t{}\t{}\t{}", r.utterance, r.word, r.begin, r.end)?;
    }
    Ok(())
}

pub fn write_alignments_to(path: &Path, records: &[AlignmentRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_alignments(std::io::BufWriter::new(file), records).map_err(|e| Error::io(path, e))
}

pub fn read_alignments(path: &Path) -> Result<Vec<AlignmentRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if i == 0 {
            if line != ALIGNMENT_HEADER {
                return Err(Error::RecordParse {
                    path: path.into(),
                    line: lineno,
                    message: format!("expected header {ALIGNMENT_HEADER:?}"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::RecordParse {
                path: path.into(),
                line: lineno,
                message: format!("expected 4 tab-separated fields, got {}", fields.len()),
            });
        }
        let parse = |s: &str, what: &str| -> Result<i64> {
            s.parse().map_err(|_| Error::RecordParse {
                path: path.into(),
                line: lineno,
                message: format!("bad {what}: {s:?}"),
            })
        };
        let begin = parse(fields[2], "begin_sample")?;
        let end = parse(fields[3], "end_sample")?;
        if begin >= end {
            return Err(Error::RecordParse {
                path: path.into(),
                line: lineno,
                message: format!("begin {begin} must be before end {end}"),
            });
        }
        records.push(AlignmentRecord {
            utterance: fields[0].to_string(),
            word: fields[1].to_string(),
            begin,
            end,
        });
    }
    Ok(records)
}

/// Alignments grouped per utterance and mapped into lexicon indices.
#[derive(Debug, Clone)]
pub struct LoadedAlignments {
    pub events_by_utterance: BTreeMap<String, Vec<Event>>,
    pub total_records: usize,
    /// Records whose word is not in the lexicon (dropped).
    pub out_of_lexicon: usize,
    /// Same-utterance record pairs that overlap in time (kept, but real
    /// aligner output is expected to be non-overlapping).
    pub overlapping: usize,
}

impl LoadedAlignments {
    pub fn dropped_fraction(&self) -> f64 {
        if self.total_records == 0 {
            0.0
        } else {
            self.out_of_lexicon as f64 / self.total_records as f64
        }
    }
}

/// Group records by utterance and map words onto the lexicon.
pub fn load_alignments(path: &Path, lexicon: &Lexicon) -> Result<LoadedAlignments> {
    let records = read_alignments(path)?;
    group_alignments(&records, lexicon)
}

pub fn group_alignments(
    records: &[AlignmentRecord],
    lexicon: &Lexicon,
) -> Result<LoadedAlignments> {
    let mut events_by_utterance: BTreeMap<String, Vec<Event>> = BTreeMap::new();
    let mut out_of_lexicon = 0usize;
    for r in records {
        match lexicon.index_of(&r.word) {
            Some(w) => {
                let span = Interval::new(r.begin, r.end)?;
                events_by_utterance
                    .entry(r.utterance.clone())
                    .or_default()
                    .push(Event::new(w, span));
            }
            None => out_of_lexicon += 1,
        }
    }
    let mut overlapping = 0usize;
    for events in events_by_utterance.values_mut() {
        events.sort_by_key(|e| (e.span.begin(), e.span.end(), e.word));
        for pair in events.windows(2) {
            if pair[1].span.begin() < pair[0].span.end() {
                overlapping += 1;
            }
        }
    }
    Ok(LoadedAlignments {
        events_by_utterance,
        total_records: records.len(),
        out_of_lexicon,
        overlapping,
    })
}

/// Words ranked by occurrence count (descending, ties alphabetical).
pub fn rank_words_by_frequency(records: &[AlignmentRecord]) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        *counts.entry(&r.word).or_default() += 1;
    }
    let mut ranked: Vec<(String, usize)> =
        counts.into_iter().map(|(w, c)| (w.to_string(), c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
}

/// Lexicon of the `k` most frequent words in the records.
pub fn lexicon_from_records(records: &[AlignmentRecord], k: usize) -> Result<Lexicon> {
    let ranked = rank_words_by_frequency(records);
    Lexicon::new(ranked.into_iter().take(k).map(|(w, _)| w).collect())
}
