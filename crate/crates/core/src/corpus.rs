//! Review ingestion, markup cleanup, sentence splitting and length gating.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub review_id: String,
    pub product_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub helpful_votes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub star_rating: Option<u8>,
}

/// One preprocessed review sentence. `ordinal` is the position among all
/// sentences the review split into, counted before length filtering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub sentence_id: String,
    pub review_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product_id: Option<String>,
    pub ordinal: usize,
    pub text: String,
    pub char_len: usize,
}

impl Sentence {
    pub fn new(review_id: &str, product_id: Option<&str>, ordinal: usize, text: impl Into<String>) -> Self {
        let text = text.into();
        Sentence {
            sentence_id: sentence_id(review_id, ordinal),
            review_id: review_id.to_string(),
            product_id: product_id.map(str::to_string),
            ordinal,
            char_len: text.chars().count(),
            text,
        }
    }
}

pub fn sentence_id(review_id: &str, ordinal: usize) -> String {
    format!("{review_id}#{ordinal}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorRating {
    pub annotator_id: String,
    pub rating: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub sentence: Sentence,
    pub ratings: Vec<AnnotatorRating>,
    pub helpfulness: f64,
}

impl AnnotatedSentence {
    /// Builds an annotated sentence whose score is the mean of `ratings`.
    pub fn from_ratings(sentence: Sentence, ratings: Vec<AnnotatorRating>) -> Result<Self> {
        if ratings.is_empty() {
            return Err(Error::InvalidInput(
                "cannot derive helpfulness from an empty rating list".into(),
            ));
        }
        if let Some(bad) = ratings.iter().find(|r| r.rating > 2) {
            return Err(Error::InvalidInput(format!("rating {} outside {{0,1,2}}", bad.rating)));
        }
        let sum: u32 = ratings.iter().map(|r| u32::from(r.rating)).sum();
        let helpfulness = f64::from(sum) / ratings.len() as f64;
        Ok(AnnotatedSentence {
            sentence,
            ratings,
            helpfulness,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBounds {
    pub min_chars: usize,
    pub max_chars: usize,
}

impl Default for LengthBounds {
    fn default() -> Self {
        LengthBounds {
            min_chars: 30,
            max_chars: 200,
        }
    }
}

impl LengthBounds {
    pub fn new(min_chars: usize, max_chars: usize) -> Result<Self> {
        if min_chars == 0 || min_chars > max_chars {
            return Err(Error::InvalidInput(format!(
                "length bounds must satisfy 0 < min <= max, got [{min_chars}, {max_chars}]"
            )));
        }
        Ok(LengthBounds { min_chars, max_chars })
    }

    /// Inclusive on both ends.
    pub fn contains(&self, char_len: usize) -> bool {
        (self.min_chars..=self.max_chars).contains(&char_len)
    }
}

// ---------------------------------------------------------------------------
// Markup removal
// ---------------------------------------------------------------------------

/// Removes markup, decodes entity references and collapses whitespace.
///
/// Runs single passes to a fixed point, so an entity that decodes into
/// something tag-shaped (`&lt;b&gt;`) is stripped too and the function is
/// idempotent.
pub fn strip_html(text: &str) -> String {
    let mut current = strip_once(text);
    loop {
        let next = strip_once(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

fn strip_once(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(pos) = rest.find(['<', '&']) {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        if let Some(after) = tail.strip_prefix('<') {
            match tag_extent(tail) {
                Some((len, skip_until)) => {
                    out.push(' ');
                    rest = &tail[len..];
                    if let Some(close) = skip_until {
                        rest = skip_raw_text(rest, close);
                    }
                }
                None => {
                    out.push('<');
                    rest = after;
                }
            }
        } else {
            match decode_entity(tail) {
                Some((len, decoded)) => {
                    out.push(decoded);
                    rest = &tail[len..];
                }
                None => {
                    out.push('&');
                    rest = &tail[1..];
                }
            }
        }
    }
    out.push_str(rest);
    collapse_whitespace(&out)
}

/// Returns the byte length of the tag at the start of `s`, plus the closing
/// tag to skip to for elements whose body is not prose.
fn tag_extent(s: &str) -> Option<(usize, Option<&'static str>)> {
    let mut chars = s[1..].chars();
    let first = chars.next()?;
    if !(first.is_ascii_alphabetic() || matches!(first, '/' | '!' | '?')) {
        return None;
    }
    if s.starts_with("<!--") {
        let end = s.find("-->").map(|e| e + 3).unwrap_or(s.len());
        return Some((end, None));
    }
    let end = s.find('>')? + 1;
    let name: String = s[1..end]
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    let skip = match name.as_str() {
        "script" => Some("</script"),
        "style" => Some("</style"),
        _ => None,
    };
    Some((end, skip))
}

fn skip_raw_text<'a>(s: &'a str, close: &str) -> &'a str {
    let lower = s.to_ascii_lowercase();
    match lower.find(close) {
        Some(pos) => match s[pos..].find('>') {
            Some(gt) => &s[pos + gt + 1..],
            None => "",
        },
        None => "",
    }
}

fn decode_entity(s: &str) -> Option<(usize, char)> {
    let semi = s.char_indices().take(12).find(|&(_, c)| c == ';').map(|(i, _)| i)?;
    let body = &s[1..semi];
    let decoded = if let Some(num) = body.strip_prefix('#') {
        let code = if let Some(hex) = num.strip_prefix(['x', 'X']) {
            u32::from_str_radix(hex, 16).ok()?
        } else {
            num.parse::<u32>().ok()?
        };
        char::from_u32(code)?
    } else {
        match body {
            "amp" => '&',
            "lt" => '<',
            "gt" => '>',
            "quot" => '"',
            "apos" => '\'',
            "nbsp" => ' ',
            "ndash" => '\u{2013}',
            "mdash" => '\u{2014}',
            "hellip" => '\u{2026}',
            "lsquo" => '\u{2018}',
            "rsquo" => '\u{2019}',
            "ldquo" => '\u{201c}',
            "rdquo" => '\u{201d}',
            _ => return None,
        }
    };
    Some((semi + 1, decoded))
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------------------
// Sentence splitting
// ---------------------------------------------------------------------------

const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "vs.", "etc.", "e.g.", "i.e.", "u.s.", "inc.", "st.", "jr.", "sr.", "prof.",
];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn is_opener(c: char) -> bool {
    c.is_uppercase() || c.is_ascii_digit() || matches!(c, '"' | '\'' | '(' | '\u{201c}' | '\u{2018}')
}

/// Rule-based splitter: a boundary follows a run of `.`/`!`/`?` (plus any
/// closing quotes or brackets) when whitespace and then an uppercase letter,
/// digit or opening quote come next, unless the period ends a known
/// abbreviation.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if !is_terminal(c) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && (is_terminal(chars[j].1) || is_closer(chars[j].1)) {
            j += 1;
        }
        if j >= chars.len() || !chars[j].1.is_whitespace() {
            i = j;
            continue;
        }
        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        if k < chars.len() && !is_opener(chars[k].1) {
            i = k;
            continue;
        }
        let run_is_single_period = c == '.' && j == i + 1;
        if run_is_single_period && ends_with_abbreviation(&text[start..pos + 1]) {
            i = k;
            continue;
        }
        let end = chars[j].0;
        push_trimmed(&mut out, &text[start..end]);
        start = if k < chars.len() { chars[k].0 } else { text.len() };
        i = k;
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn ends_with_abbreviation(prefix: &str) -> bool {
    let word = prefix
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(['(', '"', '\'', '\u{201c}', '\u{2018}'])
        .to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let t = s.trim();
    if !t.is_empty() {
        out.push(t.to_string());
    }
}

/// Cleans and splits a review, keeping sentences inside `bounds`.
pub fn preprocess_review(review: &Review, bounds: &LengthBounds) -> Vec<Sentence> {
    split_review(review)
        .into_iter()
        .filter(|s| bounds.contains(s.char_len))
        .collect()
}

/// All sentences of a review, before the length gate.
pub fn split_review(review: &Review) -> Vec<Sentence> {
    let clean = strip_html(&review.text);
    split_sentences(&clean)
        .into_iter()
        .enumerate()
        .map(|(ordinal, text)| Sentence::new(&review.review_id, Some(&review.product_id), ordinal, text))
        .collect()
}

// ---------------------------------------------------------------------------
// File ingestion
// ---------------------------------------------------------------------------

/// Canonical field name → name used in the input file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FieldMap {
    renames: HashMap<String, String>,
}

impl FieldMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `canonical=actual` pairs as given on the command line.
    pub fn from_pairs<S: AsRef<str>>(pairs: &[S]) -> Result<Self> {
        let mut map = FieldMap::new();
        for pair in pairs {
            let pair = pair.as_ref();
            let (canonical, actual) = pair
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("field mapping `{pair}` is not canonical=actual")))?;
            if canonical.is_empty() || actual.is_empty() {
                return Err(Error::InvalidInput(format!("field mapping `{pair}` has an empty side")));
            }
            map.insert(canonical, actual);
        }
        Ok(map)
    }

    pub fn insert(&mut self, canonical: &str, actual: &str) {
        self.renames.insert(canonical.to_string(), actual.to_string());
    }

    pub fn resolve<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.renames.get(canonical).map(String::as_str).unwrap_or(canonical)
    }

    /// The record's value for a canonical field; JSON null counts as absent.
    pub fn get<'v>(&self, record: &'v Value, canonical: &str) -> Option<&'v Value> {
        record.get(self.resolve(canonical)).filter(|v| !v.is_null())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub line_no: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct LoadReport<T> {
    pub records: Vec<T>,
    pub errors: Vec<RecordError>,
}

fn for_each_record(
    path: &Path,
    mut f: impl FnMut(usize, &Value) -> std::result::Result<(), String>,
) -> Result<Vec<RecordError>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut errors = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = serde_json::from_str::<Value>(&line)
            .map_err(|e| format!("malformed json: {e}"))
            .and_then(|v| {
                if v.is_object() {
                    f(line_no, &v)
                } else {
                    Err("record is not a json object".to_string())
                }
            });
        if let Err(reason) = outcome {
            errors.push(RecordError { line_no, reason });
        }
    }
    Ok(errors)
}

fn id_field(map: &FieldMap, record: &Value, canonical: &str) -> std::result::Result<Option<String>, String> {
    match map.get(record, canonical) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(Value::Number(n)) => Ok(Some(n.to_string())),
        Some(_) => Err(format!("field `{}` is not a string or number", map.resolve(canonical))),
    }
}

fn required_text(map: &FieldMap, record: &Value, canonical: &str) -> std::result::Result<String, String> {
    let name = map.resolve(canonical);
    match map.get(record, canonical) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
        Some(Value::String(_)) => Err(format!("field `{name}` is empty")),
        Some(_) => Err(format!("field `{name}` is not a string")),
        None => Err(format!("missing field `{name}`")),
    }
}

fn optional_uint(map: &FieldMap, record: &Value, canonical: &str) -> std::result::Result<Option<u64>, String> {
    match map.get(record, canonical) {
        None => Ok(None),
        Some(v) => v
            .as_u64()
            .map(Some)
            .ok_or_else(|| format!("field `{}` is not a non-negative integer", map.resolve(canonical))),
    }
}

fn review_from_record(map: &FieldMap, record: &Value) -> std::result::Result<Review, String> {
    let review_id = id_field(map, record, "review_id")?
        .filter(|s| !s.is_empty())
        .ok_or_else(|| format!("missing field `{}`", map.resolve("review_id")))?;
    let product_id =
        id_field(map, record, "product_id")?.ok_or_else(|| format!("missing field `{}`", map.resolve("product_id")))?;
    let text = required_text(map, record, "text")?;
    let helpful_votes = optional_uint(map, record, "helpful_votes")?;
    let star_rating = match optional_uint(map, record, "star_rating")? {
        None => None,
        Some(r @ 1..=5) => Some(r as u8),
        Some(r) => return Err(format!("star rating {r} outside 1..=5")),
    };
    Ok(Review {
        review_id,
        product_id,
        text,
        helpful_votes,
        star_rating,
    })
}

/// Loads line-delimited JSON reviews. Records that fail the mapping are
/// reported with their line number and skipped.
pub fn load_reviews(path: impl AsRef<Path>, field_map: &FieldMap) -> Result<LoadReport<Review>> {
    let mut records = Vec::new();
    let errors = for_each_record(path.as_ref(), |_, v| {
        records.push(review_from_record(field_map, v)?);
        Ok(())
    })?;
    Ok(LoadReport { records, errors })
}

fn parse_ratings(value: &Value) -> std::result::Result<Vec<AnnotatorRating>, String> {
    let items = value.as_array().ok_or_else(|| "ratings is not an array".to_string())?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let (annotator_id, raw) = match item {
                Value::Object(o) => {
                    let id = match o.get("annotator_id") {
                        Some(Value::String(s)) => s.clone(),
                        Some(Value::Number(n)) => n.to_string(),
                        _ => i.to_string(),
                    };
                    (id, o.get("rating").cloned().unwrap_or(Value::Null))
                }
                other => (i.to_string(), other.clone()),
            };
            match raw.as_u64() {
                Some(r @ 0..=2) => Ok(AnnotatorRating {
                    annotator_id,
                    rating: r as u8,
                }),
                _ => Err(format!("rating {raw} outside {{0,1,2}}")),
            }
        })
        .collect()
}

fn annotated_from_record(
    map: &FieldMap,
    record: &Value,
    line_no: usize,
) -> std::result::Result<AnnotatedSentence, String> {
    let text = required_text(map, record, "sentence")?;
    let product_id = id_field(map, record, "product_id")?;
    let review_id = id_field(map, record, "review_id")?.unwrap_or_default();
    let ratings = match map.get(record, "ratings") {
        Some(v) => parse_ratings(v)?,
        None => Vec::new(),
    };
    let mut sentence = Sentence::new(&review_id, product_id.as_deref(), 0, text);
    sentence.sentence_id = match id_field(map, record, "sentence_id")? {
        Some(id) => id,
        None => format!("line-{line_no}"),
    };
    match map.get(record, "helpfulness") {
        Some(v) => {
            let h = v.as_f64().ok_or_else(|| "helpfulness is not a number".to_string())?;
            if !(0.0..=2.0).contains(&h) {
                return Err(format!("helpfulness {h} outside [0, 2]"));
            }
            Ok(AnnotatedSentence {
                sentence,
                ratings,
                helpfulness: h,
            })
        }
        None if !ratings.is_empty() => AnnotatedSentence::from_ratings(sentence, ratings).map_err(|e| e.to_string()),
        None => Err("record has neither ratings nor helpfulness".to_string()),
    }
}

/// Loads an annotated sentence dataset. Default fields: `sentence`,
/// `helpfulness`, `ratings` (array of `{annotator_id, rating}` or bare
/// integers), `product_id`; optional `sentence_id` and `review_id`.
pub fn load_annotated_dataset(path: impl AsRef<Path>, field_map: &FieldMap) -> Result<LoadReport<AnnotatedSentence>> {
    let mut records = Vec::new();
    let errors = for_each_record(path.as_ref(), |line_no, v| {
        records.push(annotated_from_record(field_map, v, line_no)?);
        Ok(())
    })?;
    Ok(LoadReport { records, errors })
}

/// A sentence to score: an id and its text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub sentence_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product_id: Option<String>,
}

/// Loads sentences from either a preprocessed sentence file (`text`) or an
/// annotated dataset (`sentence`). Ids default to `line-<n>` as in
/// [`load_annotated_dataset`].
pub fn load_sentence_records(path: impl AsRef<Path>, field_map: &FieldMap) -> Result<LoadReport<SentenceRecord>> {
    let mut records = Vec::new();
    let errors = for_each_record(path.as_ref(), |line_no, v| {
        let text = if field_map.get(v, "text").is_some() {
            required_text(field_map, v, "text")?
        } else {
            required_text(field_map, v, "sentence")?
        };
        records.push(SentenceRecord {
            sentence_id: id_field(field_map, v, "sentence_id")?.unwrap_or_else(|| format!("line-{line_no}")),
            text,
            product_id: id_field(field_map, v, "product_id")?,
        });
        Ok(())
    })?;
    Ok(LoadReport { records, errors })
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use super::*;

    fn review(text: &str) -> Review {
        Review {
            review_id: "r1".into(),
            product_id: "p1".into(),
            text: text.into(),
            helpful_votes: None,
            star_rating: None,
        }
    }

    fn jsonl(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn sentence_records_from_either_format() {
        let f = jsonl(&[
            r#"{"sentence_id": "r1#0", "text": "From a sentence file."}"#,
            r#"{"sentence": "From an annotated dataset.", "helpfulness": 1.2}"#,
            r#"{"other": 1}"#,
        ]);
        let report = load_sentence_records(f.path(), &FieldMap::new()).unwrap();
        let ids: Vec<&str> = report.records.iter().map(|r| r.sentence_id.as_str()).collect();
        assert_eq!(ids, vec!["r1#0", "line-2"]);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].line_no, 3);
    }

    #[test]
    fn strip_html_examples() {
        assert_eq!(strip_html("<b>Great</b> sound"), "Great sound");
        assert_eq!(strip_html("plain text"), "plain text");
        assert_eq!(strip_html("A &amp; B<br/>C"), "A & B C");
    }

    #[test]
    fn strip_html_best_effort() {
        assert_eq!(strip_html("3<5 and 6>4"), "3<5 and 6>4");
        assert_eq!(strip_html("fish & chips"), "fish & chips");
        assert_eq!(strip_html("<p>unclosed <i"), "unclosed <i");
        assert_eq!(strip_html("a<script>var x = 1;</script>b"), "a b");
        assert_eq!(strip_html("x <!-- note --> y"), "x y");
        assert_eq!(strip_html("&#72;&#x69;"), "Hi");
        assert_eq!(strip_html("&lt;b&gt;bold&lt;/b&gt;"), "bold");
        assert_eq!(strip_html("caf&eacute;ééééééééééé"), "caf&eacute;ééééééééééé");
    }

    #[test]
    fn split_examples() {
        assert_eq!(split_sentences("Good sound. Bad fit."), vec!["Good sound.", "Bad fit."]);
        assert_eq!(
            split_sentences("Mr. Smith approved it."),
            vec!["Mr. Smith approved it."]
        );
        assert!(split_sentences("").is_empty());
    }

    #[test]
    fn split_handles_quotes_and_runs() {
        assert_eq!(
            split_sentences("Wow!! It works. \"Really\" it does? 3 stars."),
            vec!["Wow!!", "It works.", "\"Really\" it does?", "3 stars."]
        );
        assert_eq!(
            split_sentences("Sizes e.g. small fit. version 2.0 is out"),
            vec!["Sizes e.g. small fit. version 2.0 is out"]
        );
        assert_eq!(
            split_sentences("He said \"no.\" Then left."),
            vec!["He said \"no.\"", "Then left."]
        );
    }

    #[test]
    fn curated_boundary_cases() {
        let cases: &[(&str, &[&str])] = &[
            ("Dr. Who is fun. I liked it.", &["Dr. Who is fun.", "I liked it."]),
            ("Made in the U.S. It shows.", &["Made in the U.S. It shows."]),
            ("Apples vs. Oranges is silly.", &["Apples vs. Oranges is silly."]),
            ("Great price! Would buy again?", &["Great price!", "Would buy again?"]),
            ("Ends without punctuation", &["Ends without punctuation"]),
            (
                "It costs $5. 10 of them cost $50.",
                &["It costs $5.", "10 of them cost $50."],
            ),
            ("See www.example.com for more.", &["See www.example.com for more."]),
            ("Okay... but not great.", &["Okay... but not great."]),
        ];
        for (input, expected) in cases {
            assert_eq!(&split_sentences(input), expected, "input: {input}");
        }
    }

    #[test]
    fn length_gate() {
        let bounds = LengthBounds::default();
        let short = "This movie was really good.";
        assert_eq!(short.chars().count(), 27);
        assert!(preprocess_review(&review(short), &bounds).is_empty());

        let exactly_30 = "abcdefghij abcdefghij abcdefg.";
        assert_eq!(exactly_30.chars().count(), 30);
        assert_eq!(preprocess_review(&review(exactly_30), &bounds).len(), 1);

        let long = format!("{}.", "a".repeat(200));
        assert_eq!(long.chars().count(), 201);
        assert!(preprocess_review(&review(&long), &bounds).is_empty());
    }

    #[test]
    fn ordinals_survive_filtering() {
        let r = review("Short one. This second sentence is long enough to keep. Tiny.");
        let out = preprocess_review(&r, &LengthBounds::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].ordinal, 1);
        assert_eq!(out[0].sentence_id, "r1#1");
        assert_eq!(out[0].product_id.as_deref(), Some("p1"));
    }

    #[test]
    fn char_len_counts_scalars() {
        let s = Sentence::new("r", None, 0, "héllo wörld");
        assert_eq!(s.char_len, 11);
    }

    #[test]
    fn bounds_validation() {
        assert!(LengthBounds::new(0, 10).is_err());
        assert!(LengthBounds::new(11, 10).is_err());
        assert!(LengthBounds::new(5, 5).is_ok());
    }

    #[test]
    fn load_reviews_examples() {
        let f = jsonl(&[
            r#"{"review_id":"a","product_id":"p","text":"Nice."}"#,
            r#"{"review_id":"b","product_id":"p","text":"Fine.","helpful_votes":3,"star_rating":4}"#,
        ]);
        let rep = load_reviews(f.path(), &FieldMap::new()).unwrap();
        assert_eq!(rep.records.len(), 2);
        assert!(rep.errors.is_empty());
        assert_eq!(rep.records[1].helpful_votes, Some(3));

        let f = jsonl(&[r#"{"review_id":"a","product_id":"p"}"#]);
        let rep = load_reviews(f.path(), &FieldMap::new()).unwrap();
        assert!(rep.records.is_empty());
        assert_eq!(rep.errors.len(), 1);
        assert_eq!(rep.errors[0].line_no, 1);

        let f = jsonl(&[r#"{"review_id":7,"product_id":"p","body":"Mapped text."}"#]);
        let map = FieldMap::from_pairs(&["text=body"]).unwrap();
        let rep = load_reviews(f.path(), &map).unwrap();
        assert_eq!(rep.records[0].text, "Mapped text.");
        assert_eq!(rep.records[0].review_id, "7");
    }

    #[test]
    fn load_reviews_reports_dirt() {
        let f = jsonl(&[
            "not json",
            "",
            r#"{"review_id":"a","product_id":"p","text":"   "}"#,
            r#"{"review_id":"a","product_id":"p","text":"ok","star_rating":9}"#,
            r#"[1,2]"#,
        ]);
        let rep = load_reviews(f.path(), &FieldMap::new()).unwrap();
        assert!(rep.records.is_empty());
        let lines: Vec<_> = rep.errors.iter().map(|e| e.line_no).collect();
        assert_eq!(lines, vec![1, 3, 4, 5]);
    }

    #[test]
    fn load_reviews_missing_file_is_fatal() {
        assert!(matches!(
            load_reviews("/nonexistent/file.jsonl", &FieldMap::new()),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn load_annotated_examples() {
        let f = jsonl(&[
            r#"{"sentence":"s one","ratings":[{"annotator_id":"x","rating":2},{"annotator_id":"y","rating":1},{"annotator_id":"z","rating":1}]}"#,
            r#"{"sentence":"Really great headphones, especially for $25","helpfulness":1.97}"#,
            r#"{"sentence":"bad","ratings":[3]}"#,
            r#"{"sentence":"nothing"}"#,
        ]);
        let rep = load_annotated_dataset(f.path(), &FieldMap::new()).unwrap();
        assert_eq!(rep.records.len(), 2);
        assert!((rep.records[0].helpfulness - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(rep.records[1].helpfulness, 1.97);
        assert!(rep.records[1].ratings.is_empty());
        assert_eq!(rep.errors.len(), 2);
        assert_eq!(rep.errors[0].line_no, 3);
        assert_eq!(rep.records[0].sentence.sentence_id, "line-1");
    }

    #[test]
    fn field_map_parsing() {
        assert!(FieldMap::from_pairs(&["oops"]).is_err());
        assert!(FieldMap::from_pairs(&["=x"]).is_err());
        let m = FieldMap::from_pairs(&["sentence=text"]).unwrap();
        assert_eq!(m.resolve("sentence"), "text");
        assert_eq!(m.resolve("helpfulness"), "helpfulness");
    }

    mod props {
        use proptest::prelude::*;

        use super::super::*;

        proptest! {
            #[test]
            fn strip_is_idempotent(s in "[a-z <>/&;#!bpr0-9amplt]{0,60}") {
                let once = strip_html(&s);
                prop_assert_eq!(strip_html(&once), once);
            }

            #[test]
            fn split_reconstructs_input(s in "[A-Za-z0-9 .!?\"']{0,80}") {
                let joined: String = split_sentences(&s).concat();
                let squeezed: String = s.chars().filter(|c| !c.is_whitespace()).collect();
                let rejoined: String = joined.chars().filter(|c| !c.is_whitespace()).collect();
                prop_assert_eq!(squeezed, rejoined);
            }

            #[test]
            fn preprocess_respects_bounds(s in "[A-Za-z ,.!?]{0,400}", lo in 1usize..40, span in 0usize..120) {
                let bounds = LengthBounds::new(lo, lo + span).unwrap();
                let r = Review { review_id: "r".into(), product_id: "p".into(), text: s, helpful_votes: None, star_rating: None };
                let a = preprocess_review(&r, &bounds);
                prop_assert_eq!(&a, &preprocess_review(&r, &bounds));
                for sent in &a {
                    prop_assert!(bounds.contains(sent.char_len));
                    prop_assert_eq!(sent.char_len, sent.text.chars().count());
                }
            }

            #[test]
            fn mean_of_ratings_in_range(rs in proptest::collection::vec(0u8..=2, 1..40)) {
                let ratings: Vec<_> = rs.iter().enumerate().map(|(i, &r)| AnnotatorRating { annotator_id: i.to_string(), rating: r }).collect();
                let a = AnnotatedSentence::from_ratings(Sentence::new("r", None, 0, "x"), ratings).unwrap();
                let mean = rs.iter().map(|&r| f64::from(r)).sum::<f64>() / rs.len() as f64;
                prop_assert!((a.helpfulness - mean).abs() < 1e-12);
                prop_assert!((0.0..=2.0).contains(&a.helpfulness));
            }
        }
    }
}
