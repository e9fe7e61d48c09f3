//! Four-class sentence sentiment behind a pluggable provider, plus the
//! positive/negative pool split used by the selection pipeline.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalmetrics::pearson;

const POSITIVE_WORDS: &str = include_str!("../data/positive.txt");
const NEGATIVE_WORDS: &str = include_str!("../data/negative.txt");

/// Tolerance for the sum-to-one check on provider scores.
pub const SUM_TOLERANCE: f64 = 1e-6;
pub const NEGATION_WINDOW: usize = 3;
const NEUTRAL_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Positive,
    Negative,
    Neutral,
    Mixed,
}

impl SentimentLabel {
    /// Tie-break order for argmax.
    pub const ALL: [SentimentLabel; 4] = [
        SentimentLabel::Positive,
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
        SentimentLabel::Mixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Positive => "positive",
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
            SentimentLabel::Mixed => "mixed",
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SentimentLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown sentiment label {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SentimentScores {
    pub positive: f64,
    pub negative: f64,
    pub neutral: f64,
    pub mixed: f64,
}

impl SentimentScores {
    pub fn get(&self, label: SentimentLabel) -> f64 {
        match label {
            SentimentLabel::Positive => self.positive,
            SentimentLabel::Negative => self.negative,
            SentimentLabel::Neutral => self.neutral,
            SentimentLabel::Mixed => self.mixed,
        }
    }

    pub fn sum(&self) -> f64 {
        self.positive + self.negative + self.neutral + self.mixed
    }

    /// Scale to sum one. Fails on negative, non-finite or all-zero scores.
    pub fn normalized(self) -> Result<Self> {
        let vals = [self.positive, self.negative, self.neutral, self.mixed];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(format!("bad sentiment scores {self:?}")));
        }
        let s = self.sum();
        if s <= 0.0 {
            return Err(Error::InvalidInput("sentiment scores sum to zero".into()));
        }
        Ok(SentimentScores {
            positive: self.positive / s,
            negative: self.negative / s,
            neutral: self.neutral / s,
            mixed: self.mixed / s,
        })
    }

    /// First label with the maximal score, in `SentimentLabel::ALL` order.
    pub fn argmax(&self) -> SentimentLabel {
        let mut best = SentimentLabel::Positive;
        for l in SentimentLabel::ALL {
            if self.get(l) > self.get(best) {
                best = l;
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentResult {
    pub label: SentimentLabel,
    pub scores: SentimentScores,
}

impl SentimentResult {
    /// Normalizes the scores and derives the label from them.
    pub fn from_scores(scores: SentimentScores) -> Result<Self> {
        let scores = scores.normalized()?;
        Ok(SentimentResult {
            label: scores.argmax(),
            scores,
        })
    }

    pub fn is_valid(&self) -> bool {
        (self.scores.sum() - 1.0).abs() <= SUM_TOLERANCE
            && SentimentLabel::ALL
                .iter()
                .all(|&l| (0.0..=1.0).contains(&self.scores.get(l)))
            && self.label == self.scores.argmax()
    }
}

pub trait SentimentProvider: Send + Sync {
    fn kind(&self) -> &'static str;

    /// Results are aligned with `texts`.
    fn classify_batch(&self, texts: &[&str]) -> Result<Vec<SentimentResult>>;

    fn classify(&self, text: &str) -> Result<SentimentResult> {
        self.classify_batch(&[text])?
            .pop()
            .ok_or_else(|| Error::InvalidInput("provider returned no result".into()))
    }
}

// ---------------------------------------------------------------------------
// Lexicon provider
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LexiconProvider {
    positive: HashSet<String>,
    negative: HashSet<String>,
}

fn parse_word_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

fn is_negation(token: &str) -> bool {
    matches!(token, "not" | "no" | "never") || token.ends_with("n't")
}

/// Lowercased word tokens; apostrophes stay inside words so that
/// contractions like "don't" survive as one token.
fn lexicon_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .replace('\u{2019}', "'")
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

impl Default for LexiconProvider {
    fn default() -> Self {
        LexiconProvider {
            positive: parse_word_list(POSITIVE_WORDS),
            negative: parse_word_list(NEGATIVE_WORDS),
        }
    }
}

impl LexiconProvider {
    pub fn new<I, J, S, T>(positive: I, negative: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        LexiconProvider {
            positive: positive.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
            negative: negative.into_iter().map(|w| w.as_ref().to_lowercase()).collect(),
        }
    }

    pub fn from_files(positive: &Path, negative: &Path) -> Result<Self> {
        let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
        Ok(LexiconProvider {
            positive: parse_word_list(&read(positive)?),
            negative: parse_word_list(&read(negative)?),
        })
    }

    /// Positive and negative hit counts after negation flipping.
    pub fn hits(&self, text: &str) -> (usize, usize) {
        let (mut p, mut n) = (0, 0);
        let mut negated_at: Option<usize> = None;
        for (i, tok) in lexicon_tokens(text).iter().enumerate() {
            if is_negation(tok) {
                negated_at = Some(i);
                continue;
            }
            let polarity = if self.positive.contains(tok) {
                Some(true)
            } else if self.negative.contains(tok) {
                Some(false)
            } else {
                None
            };
            let Some(mut positive) = polarity else {
                continue;
            };
            if let Some(at) = negated_at.take() {
                if i - at <= NEGATION_WINDOW {
                    positive = !positive;
                }
            }
            if positive {
                p += 1;
            } else {
                n += 1;
            }
        }
        (p, n)
    }

    pub fn classify_text(&self, text: &str) -> SentimentResult {
        let (p, n) = self.hits(text);
        let denom = (p + n + 1) as f64;
        let e_pos = p as f64 / denom;
        let e_neg = n as f64 / denom;
        let raw = SentimentScores {
            positive: e_pos,
            negative: e_neg,
            neutral: (1.0 - e_pos - e_neg).max(NEUTRAL_FLOOR),
            mixed: 2.0 * e_pos.min(e_neg),
        };
        // neutral is at least the floor, so the sum is positive
        SentimentResult::from_scores(raw).expect("lexicon scores are positive")
    }
}

impl SentimentProvider for LexiconProvider {
    fn kind(&self) -> &'static str {
        "lexicon"
    }

    fn classify_batch(&self, texts: &[&str]) -> Result<Vec<SentimentResult>> {
        Ok(texts.iter().map(|t| self.classify_text(t)).collect())
    }
}

// ---------------------------------------------------------------------------
// Remote provider
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub url: String,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
    pub batch_size: usize,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        RemoteConfig {
            url: url.into(),
            max_attempts: 3,
            initial_backoff: Duration::from_millis(200),
            timeout: Duration::from_secs(30),
            batch_size: 64,
        }
    }
}

#[derive(Serialize)]
struct RemoteRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct RemoteResponse {
    results: Vec<RemoteItem>,
}

#[derive(Deserialize)]
struct RemoteItem {
    label: String,
    scores: SentimentScores,
}

/// HTTP client for an external classifier. Transport errors and 5xx
/// responses are retried with exponential backoff; anything else fails
/// immediately.
pub struct RemoteProvider {
    config: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Result<Self> {
        if config.max_attempts == 0 || config.batch_size == 0 {
            return Err(Error::InvalidInput(
                "remote provider needs max_attempts >= 1 and batch_size >= 1".into(),
            ));
        }
        let agent = ureq::Agent::new_with_config(
            ureq::Agent::config_builder()
                .http_status_as_error(false)
                .timeout_global(Some(config.timeout))
                .build(),
        );
        Ok(RemoteProvider { config, agent })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn request_once(&self, texts: &[&str]) -> std::result::Result<Vec<SentimentResult>, (String, Option<u16>, bool)> {
        let mut resp = self
            .agent
            .post(&self.config.url)
            .send_json(RemoteRequest { texts })
            .map_err(|e| (format!("transport: {e}"), None, true))?;
        let status = resp.status().as_u16();
        if status != 200 {
            let retryable = status >= 500;
            return Err((format!("HTTP status {status}"), Some(status), retryable));
        }
        let body: RemoteResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| (format!("malformed response body: {e}"), Some(status), false))?;
        if body.results.len() != texts.len() {
            return Err((
                format!("expected {} results, got {}", texts.len(), body.results.len()),
                Some(status),
                false,
            ));
        }
        body.results
            .into_iter()
            .map(|item| {
                let result = SentimentResult::from_scores(item.scores)
                    .map_err(|e| (format!("malformed scores: {e}"), Some(status), false))?;
                if !item.label.eq_ignore_ascii_case(result.label.as_str()) {
                    log::debug!(
                        "remote label {:?} disagrees with score argmax {}; using argmax",
                        item.label,
                        result.label
                    );
                }
                Ok(result)
            })
            .collect()
    }

    fn request_with_retry(&self, texts: &[&str]) -> Result<Vec<SentimentResult>> {
        let mut backoff = self.config.initial_backoff;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.request_once(texts) {
                Ok(r) => return Ok(r),
                Err((message, status, retryable)) => {
                    if !retryable || attempt >= self.config.max_attempts {
                        return Err(Error::Provider {
                            message,
                            status,
                            retryable,
                            attempts: attempt,
                        });
                    }
                    log::warn!("sentiment request failed ({message}); retry {attempt} in {backoff:?}");
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
            }
        }
    }
}

impl SentimentProvider for RemoteProvider {
    fn kind(&self) -> &'static str {
        "remote"
    }

    fn classify_batch(&self, texts: &[&str]) -> Result<Vec<SentimentResult>> {
        let chunks: Vec<Vec<SentimentResult>> = texts
            .par_chunks(self.config.batch_size)
            .map(|chunk| self.request_with_retry(chunk))
            .collect::<Result<_>>()?;
        Ok(chunks.into_iter().flatten().collect())
    }
}

// ---------------------------------------------------------------------------
// Partition and analysis
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SentimentPartition<T> {
    pub positive: Vec<(T, SentimentResult)>,
    pub negative: Vec<(T, SentimentResult)>,
    pub neutral_discarded: usize,
    pub mixed_discarded: usize,
}

impl<T> SentimentPartition<T> {
    pub fn discarded(&self) -> usize {
        self.neutral_discarded + self.mixed_discarded
    }
}

/// Classify every item and split into positive and negative pools. Input
/// order is kept within each pool.
pub fn partition_by_sentiment<T, F>(
    items: Vec<T>,
    text_of: F,
    provider: &dyn SentimentProvider,
) -> Result<SentimentPartition<T>>
where
    F: Fn(&T) -> &str,
{
    let texts: Vec<&str> = items.iter().map(&text_of).collect();
    let results = provider.classify_batch(&texts)?;
    if results.len() != items.len() {
        return Err(Error::DimensionMismatch {
            expected: items.len(),
            actual: results.len(),
        });
    }
    let mut out = SentimentPartition {
        positive: Vec::new(),
        negative: Vec::new(),
        neutral_discarded: 0,
        mixed_discarded: 0,
    };
    for (item, res) in items.into_iter().zip(results) {
        match res.label {
            SentimentLabel::Positive => out.positive.push((item, res)),
            SentimentLabel::Negative => out.negative.push((item, res)),
            SentimentLabel::Neutral => out.neutral_discarded += 1,
            SentimentLabel::Mixed => out.mixed_discarded += 1,
        }
    }
    Ok(out)
}

/// Pearson correlation between gold helpfulness and the neutral-class score.
pub fn sentiment_neutral_correlation(items: &[(&str, f64)], provider: &dyn SentimentProvider) -> Result<f64> {
    if items.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 sentences, got {}",
            items.len()
        )));
    }
    let texts: Vec<&str> = items.iter().map(|(t, _)| *t).collect();
    let neutral: Vec<f64> = provider
        .classify_batch(&texts)?
        .iter()
        .map(|r| r.scores.neutral)
        .collect();
    let gold: Vec<f64> = items.iter().map(|(_, h)| *h).collect();
    pearson(&gold, &neutral)
}
