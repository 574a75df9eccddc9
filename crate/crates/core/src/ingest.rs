//! JSONL ingestion of sampled paths and result export.
//!
//! One [`PathRecord`] per line. Records are grouped by `problem_id` in file
//! order. Strict loading aborts on the first pass if any line is malformed
//! and reports every bad line; lenient loading skips them with a warning.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, LineError, Result};
use crate::paths::{AnswerLabel, ProbMode, ReasoningPath, SampleBatch};

/// Wire form of one sampled path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathRecord {
    pub problem_id: String,
    pub text: String,
    pub token_logprobs: Vec<f64>,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ext_score: Option<f64>,
}

impl PathRecord {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.token_logprobs.is_empty() {
            return Err("token_logprobs is empty".into());
        }
        if let Some((i, lp)) = self
            .token_logprobs
            .iter()
            .enumerate()
            .find(|(_, lp)| !(lp.is_finite() && **lp <= 0.0))
        {
            return Err(format!("token_logprobs[{i}] = {lp} is not a finite value <= 0"));
        }
        if AnswerLabel::new(&self.answer).is_empty() {
            return Err("answer is empty after canonicalization".into());
        }
        if let Some(s) = self.ext_score {
            if !(0.0..=1.0).contains(&s) {
                return Err(format!("ext_score {s} outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn into_path(self, mode: ProbMode) -> Result<ReasoningPath> {
        let answer = AnswerLabel::with_class(self.answer, self.class_id);
        let mut path = ReasoningPath::new(self.text, self.token_logprobs, answer, mode)?;
        path.ext_score = self.ext_score;
        Ok(path)
    }

    /// Inverse of [`PathRecord::into_path`] on the required fields.
    pub fn from_path(problem_id: &str, path: &ReasoningPath) -> Self {
        PathRecord {
            problem_id: problem_id.to_string(),
            text: path.text.clone(),
            token_logprobs: path.token_logprobs.clone(),
            answer: path.answer.raw().to_string(),
            class_id: path.answer.class_id(),
            ext_score: path.ext_score,
        }
    }
}

fn parse_line(line: &str, mode: ProbMode) -> std::result::Result<(String, ReasoningPath), String> {
    let record: PathRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    record.validate()?;
    let id = record.problem_id.clone();
    let path = record.into_path(mode).map_err(|e| e.to_string())?;
    Ok((id, path))
}

/// Load sampled paths, grouped by problem in order of first appearance.
///
/// Blank lines are ignored.
pub fn load_jsonl(path: &Path, mode: ProbMode, lenient: bool) -> Result<IndexMap<String, SampleBatch>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut batches: IndexMap<String, SampleBatch> = IndexMap::new();
    let mut bad = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, mode) {
            Ok((id, p)) => batches
                .entry(id.clone())
                .or_insert_with(|| SampleBatch::new(id, Vec::new()))
                .paths
                .push(p),
            Err(message) => bad.push(LineError { line: i + 1, message }),
        }
    }
    if !bad.is_empty() {
        if !lenient {
            return Err(Error::Parse(bad));
        }
        for e in &bad {
            log::warn!("{}: skipping {e}", path.display());
        }
    }
    Ok(batches)
}

/// Write records as JSONL, one per line.
pub fn write_jsonl<'a>(records: impl IntoIterator<Item = &'a PathRecord>, dest: &Path) -> Result<()> {
    write_atomic(dest, |w| {
        for r in records {
            serde_json::to_writer(&mut *w, r).map_err(|e| Error::Serialize(e.to_string()))?;
            w.write_all(b"\n").map_err(|e| Error::io(dest, e))?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidArgument(format!("unknown format '{other}'"))),
        }
    }
}

/// One selection: columns in export order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub problem_id: String,
    pub method: String,
    pub n: usize,
    pub selected_answer: String,
    pub confidence: f64,
    /// Unknown for real data, which carries no ground truth.
    pub correct: Option<bool>,
}

/// Write `dest` through a sibling temporary file so a failure never leaves
/// a partial file behind.
pub fn write_atomic<F>(dest: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match dest.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        body(&mut w)?;
        w.flush().map_err(|e| Error::io(dest, e))?;
    }
    tmp.persist(dest).map_err(|e| Error::io(dest, e.error))?;
    Ok(())
}

/// Serialize rows in `format` to any writer.
pub fn write_rows(rows: &[ResultRow], w: &mut dyn Write, format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut csv = csv::Writer::from_writer(w);
            // Header is written even for zero rows.
            csv.write_record(["problem_id", "method", "n", "selected_answer", "confidence", "correct"])
                .map_err(|e| Error::Serialize(e.to_string()))?;
            for r in rows {
                csv.write_record([
                    r.problem_id.clone(),
                    r.method.clone(),
                    r.n.to_string(),
                    r.selected_answer.clone(),
                    r.confidence.to_string(),
                    r.correct.map(|c| c.to_string()).unwrap_or_default(),
                ])
                .map_err(|e| Error::Serialize(e.to_string()))?;
            }
            csv.flush().map_err(|e| Error::Serialize(e.to_string()))
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut *w, rows).map_err(|e| Error::Serialize(e.to_string()))?;
            w.write_all(b"\n").map_err(|e| Error::Serialize(e.to_string()))
        }
    }
}

pub fn export_results(rows: &[ResultRow], dest: &Path, format: OutputFormat) -> Result<()> {
    write_atomic(dest, |w| write_rows(rows, w, format))
}
