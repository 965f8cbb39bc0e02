//! Report records and their file formats.
//!
//! Corpus-level metrics are written as one flat record per
//! `(system, segment_ms)`, both as CSV and as newline-delimited JSON.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub system: String,
    pub segment_ms: u64,
    pub al_ms: Option<f64>,
    pub atd_ms: Option<f64>,
    pub bleu: f64,
    pub length_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub system: String,
    pub segment_ms: u64,
    pub id: String,
    pub al_ms: Option<f64>,
    pub al_tokens: Option<f64>,
    pub atd_ms: Option<f64>,
    pub hypothesis: String,
    pub reference: String,
}

pub fn reports_to_csv(reports: &[MetricReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r).expect("report serializes");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

pub fn reports_from_csv(text: &str) -> Result<Vec<MetricReport>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Data(format!("bad report csv: {e}")))
}

pub fn to_json_lines<T: Serialize>(records: &[T]) -> String {
    records
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

pub fn reports_from_json_lines(text: &str) -> Result<Vec<MetricReport>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Data(format!("bad report line: {e}"))))
        .collect()
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn hypothesis_file(dir: &Path, segment_ms: u64) -> PathBuf {
    dir.join(format!("hyp.{segment_ms}.txt"))
}

pub fn reference_file(dir: &Path, segment_ms: u64) -> PathBuf {
    dir.join(format!("ref.{segment_ms}.txt"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScore {
    pub system: String,
    pub segment_ms: u64,
    pub metric: String,
    pub score: f64,
    pub sentences: usize,
}

/// Reads sentence-level scores produced by an external scorer (one number
/// per line, aligned with `hyp.<segment_ms>.txt`), averages them, and
/// appends the result to `external_scores.csv` in `run_dir`.
pub fn import_external_scores(
    run_dir: &Path,
    system: &str,
    segment_ms: u64,
    metric: &str,
    scores: &Path,
) -> Result<ExternalScore> {
    let hyp_path = hypothesis_file(run_dir, segment_ms);
    let n_hyp = fs::read_to_string(&hyp_path)
        .map_err(|e| Error::io(&hyp_path, e))?
        .lines()
        .count();
    let file = File::open(scores).map_err(|e| Error::io(scores, e))?;
    let mut values = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(scores, e))?;
        let v: f64 = line.trim().parse().map_err(|_| Error::Parse {
            path: scores.to_path_buf(),
            line: i + 1,
            message: format!("not a number: {line:?}"),
        })?;
        values.push(v);
    }
    if values.len() != n_hyp || values.is_empty() {
        return Err(Error::Data(format!(
            "{} has {} scores for {} hypotheses",
            scores.display(),
            values.len(),
            n_hyp
        )));
    }
    let record = ExternalScore {
        system: system.to_string(),
        segment_ms,
        metric: metric.to_string(),
        score: values.iter().sum::<f64>() / values.len() as f64,
        sentences: values.len(),
    };
    let out = run_dir.join("external_scores.csv");
    let fresh = !out.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&out)
        .map_err(|e| Error::io(&out, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    w.serialize(&record)
        .and_then(|_| w.flush().map_err(Into::into))
        .map_err(|e| Error::Data(format!("writing {}: {e}", out.display())))?;
    Ok(record)
}

pub(crate) fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    for l in lines {
        writeln!(f, "{l}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn report() -> impl Strategy<Value = MetricReport> {
        (
            "[a-z+-]{1,12}",
            1u64..5000,
            proptest::option::of(-1e6f64..1e6),
            proptest::option::of(0f64..1e6),
            0f64..100.0,
            0f64..5.0,
        )
            .prop_map(|(system, segment_ms, al_ms, atd_ms, bleu, length_ratio)| MetricReport {
                system,
                segment_ms,
                al_ms,
                atd_ms,
                bleu,
                length_ratio,
            })
    }

    proptest! {
        #[test]
        fn csv_and_json_lines_round_trip(rs in prop::collection::vec(report(), 0..6)) {
            prop_assert_eq!(reports_from_csv(&reports_to_csv(&rs)).unwrap(), rs.clone());
            prop_assert_eq!(reports_from_json_lines(&to_json_lines(&rs)).unwrap(), rs);
        }
    }

    #[test]
    fn csv_header_is_flat() {
        let csv = reports_to_csv(&[MetricReport {
            system: "s".into(),
            segment_ms: 200,
            al_ms: None,
            atd_ms: Some(12.5),
            bleu: 30.0,
            length_ratio: 0.9,
        }]);
        assert_eq!(csv, "system,segment_ms,al_ms,atd_ms,bleu,length_ratio\ns,200,,12.5,30.0,0.9\n");
    }

    #[test]
    fn external_scores_are_averaged_and_appended() {
        let dir = tempfile::tempdir().unwrap();
        write_lines(&hypothesis_file(dir.path(), 400), &["a".into(), "b".into()]).unwrap();
        let scores = dir.path().join("bleurt.txt");
        fs::write(&scores, "0.5\n0.25\n").unwrap();
        let rec = import_external_scores(dir.path(), "sys", 400, "bleurt", &scores).unwrap();
        assert_eq!(rec.score, 0.375);
        import_external_scores(dir.path(), "sys", 400, "bleurt", &scores).unwrap();
        let text = fs::read_to_string(dir.path().join("external_scores.csv")).unwrap();
        assert_eq!(text.lines().count(), 3);

        fs::write(&scores, "0.5\n").unwrap();
        assert!(import_external_scores(dir.path(), "sys", 400, "bleurt", &scores).is_err());
    }
}
