use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{Context, Result};
use log::warn;
use serde::de::DeserializeOwned;

use rhs_core::corpus::{load_annotated_dataset, AnnotatedSentence, FieldMap, LengthBounds, RecordError};
use rhs_core::sentiment::{LexiconProvider, RemoteConfig, RemoteProvider, SentimentProvider};

use super::{GateArgs, GlobalArgs, ProviderArgs, ProviderKind, Run, UsageError};

pub fn field_map(g: &GlobalArgs) -> Result<FieldMap> {
    FieldMap::from_pairs(&g.map).map_err(|e| UsageError(e.to_string()).into())
}

pub fn bounds(gate: GateArgs) -> Result<LengthBounds> {
    LengthBounds::new(gate.min_chars, gate.max_chars).map_err(|e| UsageError(e.to_string()).into())
}

pub fn warn_record_errors(path: &Path, errors: &[RecordError]) {
    if errors.is_empty() {
        return;
    }
    for e in errors.iter().take(5) {
        warn!("{}:{}: {}", path.display(), e.line_no, e.reason);
    }
    warn!("{}: skipped {} malformed record(s)", path.display(), errors.len());
}

pub fn annotated(run: &mut Run, g: &GlobalArgs, path: &Path) -> Result<Vec<AnnotatedSentence>> {
    run.input(path)?;
    let report = load_annotated_dataset(path, &field_map(g)?)?;
    warn_record_errors(path, &report.errors);
    if report.records.is_empty() {
        anyhow::bail!("{}: no usable annotated sentences", path.display());
    }
    Ok(report.records)
}

/// Reads a JSON-lines file into `T`, failing on the first bad line.
pub fn jsonl<T: DeserializeOwned>(run: &mut Run, path: &Path) -> Result<Vec<T>> {
    run.input(path)?;
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("cannot read {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(&line).with_context(|| format!("{}:{}: malformed record", path.display(), i + 1))?,
        );
    }
    Ok(rows)
}

pub fn provider(run: &mut Run, args: &ProviderArgs) -> Result<Box<dyn SentimentProvider>> {
    match args.provider {
        ProviderKind::Lexicon => match (&args.positive_words, &args.negative_words) {
            (Some(p), Some(n)) => {
                run.input(p)?;
                run.input(n)?;
                Ok(Box::new(LexiconProvider::from_files(p, n)?))
            }
            _ => Ok(Box::<LexiconProvider>::default()),
        },
        ProviderKind::Remote => {
            let url = args
                .remote_url
                .as_ref()
                .ok_or_else(|| UsageError("--provider remote requires --remote-url".into()))?;
            Ok(Box::new(RemoteProvider::new(RemoteConfig::new(url.clone()))?))
        }
    }
}
