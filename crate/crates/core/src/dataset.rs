//! Execution-annotated dataset records and corpus statistics.
//!
//! Records are NDJSON — one JSON object per line — written in shards of
//! exactly [`SHARD_SIZE`] records (the final shard may be smaller). Reading
//! validates every line and reports failures with file and line number.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::ContextPatch;
use crate::render;

/// Records per shard file.
pub const SHARD_SIZE: usize = 1000;

/// One executed session. Field order is the serialization order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub session_id: u64,
    /// The full input as executed, opening `cd` included.
    pub input: String,
    /// Session cells after the opening `cd` row, with `;` separators
    /// between rows that don't supply their own connector.
    pub input_args: Vec<String>,
    pub exit_code: i32,
    pub output: String,
    /// JSON-encoded compact context patch.
    pub context_patch: String,
    /// Session-level irreducibility summary in `[0, 1]`.
    pub irreducibility: f64,
    /// Optional per-command scores, in row order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command_scores: Option<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{file}:{line}: {reason}")]
    Invalid {
        file: String,
        line: usize,
        reason: String,
    },
    #[error("duplicate session id {0}")]
    DuplicateSession(u64),
}

/// A written shard.
#[derive(Clone, Debug, PartialEq)]
pub struct ShardInfo {
    pub path: PathBuf,
    pub records: usize,
}

/// Writes `records` under `dir` as `records-00000.ndjson`,
/// `records-00001.ndjson`, … in the order given. Duplicate session ids are
/// rejected before anything is written.
pub fn write_records(dir: &Path, records: &[Record]) -> Result<Vec<ShardInfo>, DatasetError> {
    let mut seen = HashSet::with_capacity(records.len());
    for record in records {
        if !seen.insert(record.session_id) {
            return Err(DatasetError::DuplicateSession(record.session_id));
        }
    }
    std::fs::create_dir_all(dir)?;
    let mut shards = Vec::new();
    for (index, chunk) in records.chunks(SHARD_SIZE).enumerate() {
        let path = dir.join(format!("records-{index:05}.ndjson"));
        let mut file = std::io::BufWriter::new(std::fs::File::create(&path)?);
        for record in chunk {
            let line = serde_json::to_string(record).expect("records always serialize");
            file.write_all(line.as_bytes())?;
            file.write_all(b"\n")?;
        }
        file.flush()?;
        shards.push(ShardInfo {
            path,
            records: chunk.len(),
        });
    }
    Ok(shards)
}

/// Reads and validates records from `pattern`: a directory (all `.ndjson`
/// files inside), a single file, or a path whose final component uses `*`
/// and `?` wildcards. Files are read in sorted order.
pub fn read_records(pattern: &str) -> Result<Vec<Record>, DatasetError> {
    let mut records = Vec::new();
    for path in expand_pattern(pattern)? {
        let file_label = path.display().to_string();
        let reader = BufReader::new(std::fs::File::open(&path)?);
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let record: Record =
                serde_json::from_str(&line).map_err(|e| DatasetError::Invalid {
                    file: file_label.clone(),
                    line: idx + 1,
                    reason: e.to_string(),
                })?;
            validate_record(&record).map_err(|reason| DatasetError::Invalid {
                file: file_label.clone(),
                line: idx + 1,
                reason,
            })?;
            records.push(record);
        }
    }
    Ok(records)
}

fn validate_record(record: &Record) -> Result<(), String> {
    if record.input.is_empty() {
        return Err("empty input".to_string());
    }
    if !(0..=255).contains(&record.exit_code) {
        return Err(format!("exit code {} out of range", record.exit_code));
    }
    if !record.irreducibility.is_finite() || !(0.0..=1.0).contains(&record.irreducibility) {
        return Err(format!(
            "irreducibility {} outside [0, 1]",
            record.irreducibility
        ));
    }
    if let Some(scores) = &record.command_scores {
        for (i, score) in scores.iter().enumerate() {
            if !score.is_finite() || !(0.0..=1.0).contains(score) {
                return Err(format!("command score {i} ({score}) outside [0, 1]"));
            }
        }
    }
    serde_json::from_str::<ContextPatch>(&record.context_patch)
        .map_err(|e| format!("context patch: {e}"))?;
    Ok(())
}

fn expand_pattern(pattern: &str) -> Result<Vec<PathBuf>, DatasetError> {
    let path = Path::new(pattern);
    if path.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)?
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .map(|entry| entry.path())
            .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("ndjson"))
            .collect();
        files.sort();
        return Ok(files);
    }
    let name = match path.file_name().and_then(|n| n.to_str()) {
        Some(n) => n,
        None => return Ok(vec![path.to_path_buf()]),
    };
    if !name.contains('*') && !name.contains('?') {
        return Ok(vec![path.to_path_buf()]);
    }
    let parent = if path.parent().map_or(true, |p| p.as_os_str().is_empty()) {
        Path::new(".")
    } else {
        path.parent().unwrap()
    };
    let pat: Vec<char> = name.chars().collect();
    let mut files: Vec<PathBuf> = std::fs::read_dir(parent)?
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .map_or(false, |n| {
                    let name: Vec<char> = n.chars().collect();
                    wildcard_match(&pat, &name)
                })
        })
        .collect();
    files.sort();
    Ok(files)
}

fn wildcard_match(pat: &[char], name: &[char]) -> bool {
    match pat.first() {
        None => name.is_empty(),
        Some('*') => {
            wildcard_match(&pat[1..], name)
                || (!name.is_empty() && wildcard_match(pat, &name[1..]))
        }
        Some('?') => !name.is_empty() && wildcard_match(&pat[1..], &name[1..]),
        Some(&c) => name.first() == Some(&c) && wildcard_match(&pat[1..], &name[1..]),
    }
}

// ---------------------------------------------------------------------------
// Corpus statistics
// ---------------------------------------------------------------------------

/// Number of argument tokens in a flattened cell list: `;` and connectors
/// hand the walk back to command position, command tokens themselves are
/// not arguments, and everything else is.
pub fn count_arguments(input_args: &[String]) -> usize {
    let mut count = 0;
    let mut expect_command = true;
    for token in input_args {
        if token == render::ROW_SEPARATOR || render::is_connector(token) {
            expect_command = true;
        } else if expect_command {
            expect_command = false;
        } else {
            count += 1;
        }
    }
    count
}

/// The command tokens of a flattened cell list, in order.
pub fn command_tokens(input_args: &[String]) -> Vec<&str> {
    let mut commands = Vec::new();
    let mut expect_command = true;
    for token in input_args {
        if token == render::ROW_SEPARATOR || render::is_connector(token) {
            expect_command = true;
        } else if expect_command {
            commands.push(token.as_str());
            expect_command = false;
        }
    }
    commands
}

/// Record filter plus a tag echoed into emitted statistics.
#[derive(Clone, Debug, Default)]
pub struct StatsFilter {
    /// Keep records with irreducibility >= this.
    pub score_min: Option<f64>,
    /// Keep records with irreducibility <= this.
    pub score_max: Option<f64>,
    /// Free-form tag copied into the CSV/JSON output rows.
    pub label: Option<String>,
}

impl StatsFilter {
    fn keeps(&self, record: &Record) -> bool {
        if let Some(min) = self.score_min {
            if record.irreducibility < min {
                return false;
            }
        }
        if let Some(max) = self.score_max {
            if record.irreducibility > max {
                return false;
            }
        }
        true
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BucketStats {
    pub n_args: usize,
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CdfPoint {
    pub score: f64,
    /// Fraction of records with irreducibility <= `score`.
    pub fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CorpusStats {
    pub label: String,
    pub total_records: usize,
    pub by_n_args: Vec<BucketStats>,
    pub cdf: Vec<CdfPoint>,
    pub per_command: BTreeMap<String, usize>,
}

/// Aggregates irreducibility statistics over the records `filter` keeps.
pub fn corpus_stats(records: &[Record], filter: &StatsFilter) -> CorpusStats {
    let kept: Vec<&Record> = records.iter().filter(|r| filter.keeps(r)).collect();
    let mut buckets: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut per_command: BTreeMap<String, usize> = BTreeMap::new();
    for record in &kept {
        buckets
            .entry(count_arguments(&record.input_args))
            .or_default()
            .push(record.irreducibility);
        for command in command_tokens(&record.input_args) {
            *per_command.entry(command.to_string()).or_insert(0) += 1;
        }
    }
    let by_n_args = buckets
        .into_iter()
        .map(|(n_args, scores)| {
            let count = scores.len();
            let mean = scores.iter().sum::<f64>() / count as f64;
            let variance =
                scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / count as f64;
            BucketStats {
                n_args,
                count,
                mean,
                std: variance.sqrt(),
            }
        })
        .collect();
    let mut scores: Vec<f64> = kept.iter().map(|r| r.irreducibility).collect();
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut cdf = Vec::new();
    let total = scores.len();
    for (i, score) in scores.iter().enumerate() {
        // Emit one point per distinct score, at its highest rank.
        if i + 1 == total || scores[i + 1] > *score {
            cdf.push(CdfPoint {
                score: *score,
                fraction: (i + 1) as f64 / total as f64,
            });
        }
    }
    CorpusStats {
        label: filter.label.clone().unwrap_or_default(),
        total_records: kept.len(),
        by_n_args,
        cdf,
        per_command,
    }
}

/// Bucket table as CSV (`label,n_args,count,mean,std`).
pub fn stats_to_csv(stats: &CorpusStats) -> String {
    let mut out = String::from("label,n_args,count,mean,std\n");
    for bucket in &stats.by_n_args {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6}\n",
            stats.label, bucket.n_args, bucket.count, bucket.mean, bucket.std
        ));
    }
    out
}

/// Full statistics as pretty-printed JSON.
pub fn stats_to_json(stats: &CorpusStats) -> String {
    serde_json::to_string_pretty(stats).expect("stats always serialize")
}
