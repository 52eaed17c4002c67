//! Line-delimited event record format.
//!
//! One tab-separated record per detected event:
//! `utterance, word, begin_sample, end_sample, begin_seconds, end_seconds,
//! score`. This is what inference emits and what the evaluation commands
//! consume. Scores are printed with full roundtrip precision since
//! threshold sweeps depend on them.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::infer::Proposal;
use crate::labeling::Lexicon;

pub const EVENT_HEADER: &str =
    "utterance\tword\tbegin_sample\tend_sample\tbegin_seconds\tend_seconds\tscore";

#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub utterance: String,
    pub word: String,
    pub begin_sample: i64,
    pub end_sample: i64,
    pub begin_seconds: f64,
    pub end_seconds: f64,
    pub score: f64,
}

impl EventRecord {
    pub fn from_proposal(
        utterance: &str,
        proposal: &Proposal,
        lexicon: &Lexicon,
        sample_rate: u32,
    ) -> Self {
        let rate = sample_rate as f64;
        EventRecord {
            utterance: utterance.to_string(),
            word: lexicon.word(proposal.word).to_string(),
            begin_sample: proposal.begin.round() as i64,
            end_sample: proposal.end.round() as i64,
            begin_seconds: proposal.begin / rate,
            end_seconds: proposal.end / rate,
            score: proposal.score,
        }
    }
}

pub fn write_event_records<W: Write>(mut out: W, records: &[EventRecord]) -> std::io::Result<()> {
    writeln!(out, "{EVENT_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}",
            r.utterance, r.word, r.begin_sample, r.end_sample, r.begin_seconds, r.end_seconds,
            r.score
        )?;
    }
    Ok(())
}

pub fn read_event_records(path: &Path) -> Result<Vec<EventRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if i == 0 {
            if line != EVENT_HEADER {
                return Err(Error::RecordParse {
                    path: path.into(),
                    line: lineno,
                    message: format!("expected header {EVENT_HEADER:?}"),
                });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(Error::RecordParse {
                path: path.into(),
                line: lineno,
                message: format!("expected 7 tab-separated fields, got {}", fields.len()),
            });
        }
        let parse_i64 = |s: &str, what: &str| -> Result<i64> {
            s.parse().map_err(|_| Error::RecordParse {
                path: path.into(),
                line: lineno,
                message: format!("bad {what}: {s:?}"),
            })
        };
        let parse_f64 = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::RecordParse {
                path: path.into(),
                line: lineno,
                message: format!("bad {what}: {s:?}"),
            })
        };
        let begin_sample = parse_i64(fields[2], "begin_sample")?;
        let end_sample = parse_i64(fields[3], "end_sample")?;
        if begin_sample >= end_sample {
            return Err(Error::RecordParse {
                path: path.into(),
                line: lineno,
                message: format!("begin {begin_sample} must be before end {end_sample}"),
            });
        }
        records.push(EventRecord {
            utterance: fields[0].to_string(),
            word: fields[1].to_string(),
            begin_sample,
            end_sample,
            begin_seconds: parse_f64(fields[4], "begin_seconds")?,
            end_seconds: parse_f64(fields[5], "end_seconds")?,
            score: parse_f64(fields[6], "score")?,
        });
    }
    Ok(records)
}

pub fn write_event_records_to(path: &Path, records: &[EventRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_event_records(std::io::BufWriter::new(file), records).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_scores_exactly() {
        let records = vec![
            EventRecord {
                utterance: "u1".into(),
                word: "word_03".into(),
                begin_sample: 480,
                end_sample: 640,
                begin_seconds: 0.24,
                end_seconds: 0.32,
                score: 0.9751234567890123,
            },
            EventRecord {
                utterance: "u2".into(),
                word: "word_00".into(),
                begin_sample: 0,
                end_sample: 100,
                begin_seconds: 0.0,
                end_seconds: 0.05,
                score: 1.0,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.tsv");
        write_event_records_to(&path, &records).unwrap();
        let back = read_event_records(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].score, records[0].score);
        assert_eq!(back[0].word, "word_03");
        assert_eq!(back[1].begin_sample, 0);
    }

    #[test]
    fn malformed_lines_are_rejected_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        std::fs::write(&path, format!("{EVENT_HEADER}\nu1\tw\t5\t3\t0\t0\t0.5\n")).unwrap();
        let err = read_event_records(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(":2:"), "{msg}");
        std::fs::write(&path, "not a header\n").unwrap();
        assert!(read_event_records(&path).is_err());
    }
}
