//! Sentence vectors: TF-IDF features, idf-weighted bag-of-words for
//! similarity, and precomputed external embeddings.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPACE_TFIDF: &str = "tfidf";
pub const SPACE_IDF_BOW: &str = "idf-bow";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub min_token_chars: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            min_token_chars: 2,
        }
    }
}

/// Splits on runs of alphanumeric characters.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    let min = config.min_token_chars.max(1);
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= min)
        .map(|t| {
            if config.lowercase {
                t.to_lowercase()
            } else {
                t.to_string()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabularyConfig {
    /// Terms appearing in fewer documents are dropped.
    pub min_df: u64,
    /// Keep only the most frequent terms (by document frequency, then term).
    pub max_features: Option<usize>,
}

impl Default for VocabularyConfig {
    fn default() -> Self {
        VocabularyConfig {
            min_df: 1,
            max_features: None,
        }
    }
}

/// Terms are kept in lexicographic order, which makes the build independent
/// of corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    pub terms: Vec<String>,
    pub doc_freq: Vec<u64>,
    pub n_docs: u64,
    term_index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_parts(terms: Vec<String>, doc_freq: Vec<u64>, n_docs: u64) -> Result<Self> {
        if terms.len() != doc_freq.len() {
            return Err(Error::DimensionMismatch {
                expected: terms.len(),
                actual: doc_freq.len(),
            });
        }
        if let Some(bad) = doc_freq.iter().find(|&&df| df == 0 || df > n_docs) {
            return Err(Error::InvalidInput(format!(
                "document frequency {bad} outside [1, {n_docs}]"
            )));
        }
        let term_index: HashMap<String, usize> = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if term_index.len() != terms.len() {
            return Err(Error::InvalidInput("duplicate vocabulary term".into()));
        }
        Ok(Vocabulary {
            terms,
            doc_freq,
            n_docs,
            term_index,
        })
    }

    pub fn build<'a>(
        docs: impl IntoIterator<Item = &'a str>,
        tokenizer: &TokenizerConfig,
        config: &VocabularyConfig,
    ) -> Result<Self> {
        let mut df: BTreeMap<String, u64> = BTreeMap::new();
        let mut n_docs = 0u64;
        for doc in docs {
            n_docs += 1;
            let unique: HashSet<String> = tokenize(doc, tokenizer).into_iter().collect();
            for t in unique {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(String, u64)> = df.into_iter().filter(|(_, d)| *d >= config.min_df).collect();
        if let Some(max) = config.max_features {
            if kept.len() > max {
                kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                kept.truncate(max);
                kept.sort_by(|a, b| a.0.cmp(&b.0));
            }
        }
        if kept.is_empty() {
            return Err(Error::InvalidInput(
                "empty effective corpus: no document produced a retained token".into(),
            ));
        }
        let (terms, doc_freq) = kept.into_iter().unzip();
        Vocabulary::from_parts(terms, doc_freq, n_docs)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.term_index.get(term).copied()
    }

    /// Smoothed inverse document frequency, `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self) -> Vec<f64> {
        let n = self.n_docs as f64;
        self.doc_freq
            .iter()
            .map(|&df| ((1.0 + n) / (1.0 + df as f64)).ln() + 1.0)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Values {
    /// Sorted, deduplicated `(index, value)` pairs.
    Sparse {
        dim: usize,
        entries: Vec<(u32, f64)>,
    },
    Dense(Vec<f64>),
}

impl Values {
    pub fn dim(&self) -> usize {
        match self {
            Values::Sparse { dim, .. } => *dim,
            Values::Dense(v) => v.len(),
        }
    }

    fn sum_squares(&self) -> f64 {
        match self {
            Values::Sparse { entries, .. } => entries.iter().map(|(_, v)| v * v).sum(),
            Values::Dense(v) => v.iter().map(|x| x * x).sum(),
        }
    }

    /// Dot product. Summation runs in ascending index order for every
    /// representation pair, so `a.dot(b)` and `b.dot(a)` are bit-identical.
    pub fn dot(&self, other: &Values) -> f64 {
        match (self, other) {
            (Values::Dense(a), Values::Dense(b)) => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            (Values::Sparse { entries: a, .. }, Values::Sparse { entries: b, .. }) => {
                let (mut i, mut j, mut acc) = (0, 0, 0.0);
                while i < a.len() && j < b.len() {
                    match a[i].0.cmp(&b[j].0) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            acc += a[i].1 * b[j].1;
                            i += 1;
                            j += 1;
                        }
                    }
                }
                acc
            }
            (Values::Sparse { entries, .. }, Values::Dense(d)) | (Values::Dense(d), Values::Sparse { entries, .. }) => {
                entries.iter().map(|&(i, v)| v * d[i as usize]).sum()
            }
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            Values::Dense(v) => v.clone(),
            Values::Sparse { dim, entries } => {
                let mut out = vec![0.0; *dim];
                for &(i, v) in entries {
                    out[i as usize] = v;
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceEmbedding {
    pub sentence_id: String,
    pub space_id: String,
    pub values: Values,
    pub norm: f64,
}

impl SentenceEmbedding {
    pub fn new(sentence_id: impl Into<String>, space_id: impl Into<String>, values: Values) -> Self {
        let norm = values.sum_squares().sqrt();
        SentenceEmbedding {
            sentence_id: sentence_id.into(),
            space_id: space_id.into(),
            values,
            norm,
        }
    }

    pub fn dense(sentence_id: impl Into<String>, space_id: impl Into<String>, v: Vec<f64>) -> Self {
        Self::new(sentence_id, space_id, Values::Dense(v))
    }

    pub fn dim(&self) -> usize {
        self.values.dim()
    }

    pub fn check_compatible(&self, other: &SentenceEmbedding) -> Result<()> {
        if self.space_id != other.space_id {
            return Err(Error::SpaceMismatch {
                left: self.space_id.clone(),
                right: other.space_id.clone(),
            });
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: other.dim(),
            });
        }
        Ok(())
    }
}

/// Cosine similarity; 0 when either vector has zero norm.
pub fn cosine_similarity(a: &SentenceEmbedding, b: &SentenceEmbedding) -> Result<f64> {
    a.check_compatible(b)?;
    Ok(cosine_unchecked(a, b))
}

pub(crate) fn cosine_unchecked(a: &SentenceEmbedding, b: &SentenceEmbedding) -> f64 {
    if a.norm == 0.0 || b.norm == 0.0 {
        return 0.0;
    }
    (a.values.dot(&b.values) / (a.norm * b.norm)).clamp(-1.0, 1.0)
}

/// Anything that can turn a sentence into a vector in a named space.
pub trait Embedder: Send + Sync {
    fn space_id(&self) -> &str;
    fn embed(&self, sentence_id: &str, text: &str) -> Result<SentenceEmbedding>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    pub vocabulary: Vocabulary,
    pub idf: Vec<f64>,
    pub tokenizer: TokenizerConfig,
}

impl TfidfModel {
    pub fn from_vocabulary(vocabulary: Vocabulary, tokenizer: TokenizerConfig) -> Self {
        let idf = vocabulary.idf();
        TfidfModel {
            vocabulary,
            idf,
            tokenizer,
        }
    }

    pub fn dim(&self) -> usize {
        self.vocabulary.len()
    }

    fn term_counts(&self, text: &str) -> BTreeMap<u32, u32> {
        let mut counts = BTreeMap::new();
        for tok in tokenize(text, &self.tokenizer) {
            if let Some(i) = self.vocabulary.index_of(&tok) {
                *counts.entry(i as u32).or_insert(0u32) += 1;
            }
        }
        counts
    }

    fn weighted(&self, counts: BTreeMap<u32, u32>, binary: bool) -> Values {
        let mut entries: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(i, c)| {
                let tf = if binary { 1.0 } else { f64::from(c) };
                (i, tf * self.idf[i as usize])
            })
            .collect();
        let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for e in &mut entries {
                e.1 /= norm;
            }
        }
        Values::Sparse {
            dim: self.dim(),
            entries,
        }
    }

    /// Raw counts times idf, L2-normalized. Unknown tokens are ignored.
    pub fn vectorize(&self, sentence_id: &str, text: &str) -> SentenceEmbedding {
        let values = self.weighted(self.term_counts(text), false);
        SentenceEmbedding::new(sentence_id, SPACE_TFIDF, values)
    }
}

impl Embedder for TfidfModel {
    fn space_id(&self) -> &str {
        SPACE_TFIDF
    }

    fn embed(&self, sentence_id: &str, text: &str) -> Result<SentenceEmbedding> {
        Ok(self.vectorize(sentence_id, text))
    }
}

pub fn build_tfidf_model<'a>(
    docs: impl IntoIterator<Item = &'a str>,
    tokenizer: TokenizerConfig,
    vocab: &VocabularyConfig,
) -> Result<TfidfModel> {
    let vocabulary = Vocabulary::build(docs, &tokenizer, vocab)?;
    Ok(TfidfModel::from_vocabulary(vocabulary, tokenizer))
}

/// Bag-of-words similarity vectors: each distinct in-vocabulary token gets
/// its idf as weight, then the vector is L2-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct IdfBowEmbedder {
    model: TfidfModel,
}

impl IdfBowEmbedder {
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a str>, tokenizer: TokenizerConfig) -> Result<Self> {
        let model = build_tfidf_model(docs, tokenizer, &VocabularyConfig::default())?;
        Ok(IdfBowEmbedder { model })
    }

    pub fn vectorize(&self, sentence_id: &str, text: &str) -> SentenceEmbedding {
        let values = self.model.weighted(self.model.term_counts(text), true);
        SentenceEmbedding::new(sentence_id, SPACE_IDF_BOW, values)
    }
}

impl Embedder for IdfBowEmbedder {
    fn space_id(&self) -> &str {
        SPACE_IDF_BOW
    }

    fn embed(&self, sentence_id: &str, text: &str) -> Result<SentenceEmbedding> {
        Ok(self.vectorize(sentence_id, text))
    }
}

pub fn build_idf_bow_embedder<'a>(docs: impl IntoIterator<Item = &'a str>) -> Result<IdfBowEmbedder> {
    IdfBowEmbedder::build(docs, TokenizerConfig::default())
}

/// Dense vectors keyed by sentence id, loaded from an embedding file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    pub space_id: String,
    pub dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingStore {
    pub fn new(name: &str, dim: usize) -> Self {
        EmbeddingStore {
            space_id: format!("external:{name}"),
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
        }
    }

    /// Inserts a vector; returns true when it replaced an existing one.
    pub fn insert(&mut self, sentence_id: &str, vector: Vec<f64>) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if let Some(&i) = self.index.get(sentence_id) {
            self.vectors[i] = vector;
            return Ok(true);
        }
        self.index.insert(sentence_id.to_string(), self.ids.len());
        self.ids.push(sentence_id.to_string());
        self.vectors.push(vector);
        Ok(false)
    }

    pub fn get(&self, sentence_id: &str) -> Option<&[f64]> {
        self.index.get(sentence_id).map(|&i| self.vectors[i].as_slice())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.vectors.iter().map(Vec::as_slice))
    }

    /// Reads `dim=<D>` followed by `<sentence_id>\t<f_1> ... <f_D>` lines.
    /// The space is named after the file stem.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "embeddings".into());
        Self::load_named(path, &name)
    }

    pub fn load_named(path: impl AsRef<Path>, name: &str) -> Result<Self> {
        let path = path.as_ref();
        let parse_err = |line: usize, reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing `dim=<D>` header".into()))?
            .map_err(|e| Error::io(path, e))?;
        let dim: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| parse_err(1, format!("bad header `{header}`")))?;
        let mut store = EmbeddingStore::new(name, dim);
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (id, rest) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(line_no, "missing TAB after sentence id".into()))?;
            let vector = rest
                .split_whitespace()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| parse_err(line_no, format!("bad float: {e}")))?;
            if vector.len() != dim {
                return Err(parse_err(
                    line_no,
                    format!("expected {dim} values, found {}", vector.len()),
                ));
            }
            if store.insert(id, vector)? {
                log::warn!(
                    "{}:{line_no}: duplicate sentence id `{id}`, keeping the last",
                    path.display()
                );
            }
        }
        Ok(store)
    }

    /// Writes the store in the format `load` reads; floats use the shortest
    /// representation that round-trips exactly.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "dim={}", self.dim)?;
        for (id, v) in self.iter() {
            write!(w, "{id}\t")?;
            for (i, x) in v.iter().enumerate() {
                if i > 0 {
                    w.write_all(b" ")?;
                }
                write!(w, "{x:?}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl Embedder for EmbeddingStore {
    fn space_id(&self) -> &str {
        &self.space_id
    }

    fn embed(&self, sentence_id: &str, _text: &str) -> Result<SentenceEmbedding> {
        let v = self.get(sentence_id).ok_or_else(|| {
            Error::InvalidInput(format!("no vector for sentence `{sentence_id}` in {}", self.space_id))
        })?;
        Ok(SentenceEmbedding::dense(sentence_id, self.space_id.clone(), v.to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    fn cfg() -> TokenizerConfig {
        TokenizerConfig::default()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Great sound!", &cfg()), vec!["great", "sound"]);
        assert_eq!(tokenize("A 4K TV", &cfg()), vec!["4k", "tv"]);
        assert!(tokenize("", &cfg()).is_empty());
        let keep_case = TokenizerConfig {
            lowercase: false,
            min_token_chars: 1,
        };
        assert_eq!(tokenize("A 4K", &keep_case), vec!["A", "4K"]);
    }

    #[test]
    fn idf_formula() {
        let m = build_tfidf_model(["good sound"], cfg(), &VocabularyConfig::default()).unwrap();
        assert!(m.idf.iter().all(|&x| (x - 1.0).abs() < 1e-15));

        let m = build_tfidf_model(
            ["shared alpha", "shared beta", "shared gamma"],
            cfg(),
            &VocabularyConfig::default(),
        )
        .unwrap();
        let shared = m.vocabulary.index_of("shared").unwrap();
        let alpha = m.vocabulary.index_of("alpha").unwrap();
        assert_abs_diff_eq!(m.idf[shared], 1.0, epsilon = 1e-15);
        // ln(4/2) + 1
        assert_abs_diff_eq!(m.idf[alpha], 2.0f64.ln() + 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.idf[alpha], 1.6931, epsilon = 1e-4);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(build_tfidf_model(["", "a b"], cfg(), &VocabularyConfig::default()).is_err());
        let none: [&str; 0] = [];
        assert!(build_tfidf_model(none, cfg(), &VocabularyConfig::default()).is_err());
    }

    #[test]
    fn vocabulary_cutoffs() {
        let docs = ["aa bb", "aa cc", "aa bb dd"];
        let v = Vocabulary::build(
            docs,
            &cfg(),
            &VocabularyConfig {
                min_df: 2,
                max_features: None,
            },
        )
        .unwrap();
        assert_eq!(v.terms, vec!["aa", "bb"]);
        let v = Vocabulary::build(
            docs,
            &cfg(),
            &VocabularyConfig {
                min_df: 1,
                max_features: Some(1),
            },
        )
        .unwrap();
        assert_eq!(v.terms, vec!["aa"]);
    }

    #[test]
    fn tfidf_vectors() {
        let m = build_tfidf_model(["good sound", "good fit"], cfg(), &VocabularyConfig::default()).unwrap();
        let oov = m.vectorize("x", "unknown words only");
        assert_eq!(oov.norm, 0.0);

        let single = m.vectorize("x", "fit");
        assert_abs_diff_eq!(single.norm, 1.0, epsilon = 1e-12);
        assert_eq!(single.values.to_dense().iter().filter(|v| **v != 0.0).count(), 1);

        // equal idf for both terms
        let m = build_tfidf_model(["good sound"], cfg(), &VocabularyConfig::default()).unwrap();
        let v = m.vectorize("x", "good good sound").values.to_dense();
        let g = m.vocabulary.index_of("good").unwrap();
        let s = m.vocabulary.index_of("sound").unwrap();
        assert_abs_diff_eq!(v[g], 2.0 / 5f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(v[s], 1.0 / 5f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn idf_bow_similarity() {
        let docs = [
            "the sound quality is great",
            "the sound quality is great",
            "battery drains overnight",
            "great sound and a comfortable fit",
        ];
        let e = build_idf_bow_embedder(docs).unwrap();
        let v: Vec<_> = docs
            .iter()
            .enumerate()
            .map(|(i, d)| e.vectorize(&i.to_string(), d))
            .collect();
        assert_abs_diff_eq!(cosine_similarity(&v[0], &v[1]).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(cosine_similarity(&v[0], &v[2]).unwrap(), 0.0);

        // brute-force overlap: shared tokens {great, sound}
        let c = cosine_similarity(&v[0], &v[3]).unwrap();
        let idf = |t: &str| e.model.idf[e.model.vocabulary.index_of(t).unwrap()];
        let a: Vec<&str> = vec!["the", "sound", "quality", "is", "great"];
        let b: Vec<&str> = vec!["great", "sound", "and", "comfortable", "fit"];
        let dot: f64 = ["sound", "great"].iter().map(|t| idf(t) * idf(t)).sum();
        let na = a.iter().map(|t| idf(t).powi(2)).sum::<f64>().sqrt();
        let nb = b.iter().map(|t| idf(t).powi(2)).sum::<f64>().sqrt();
        assert_abs_diff_eq!(c, dot / (na * nb), epsilon = 1e-12);
        assert!(c > 0.0 && c < 1.0);
    }

    #[test]
    fn cosine_examples() {
        let e = |v: Vec<f64>| SentenceEmbedding::dense("x", "s", v);
        assert_eq!(cosine_similarity(&e(vec![1.0, 0.0]), &e(vec![0.0, 1.0])).unwrap(), 0.0);
        let v = e(vec![0.3, -2.0, 5.5]);
        assert_abs_diff_eq!(cosine_similarity(&v, &v).unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(
            cosine_similarity(&e(vec![1.0, 1.0]), &e(vec![1.0, 0.0])).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-12
        );
        assert_eq!(cosine_similarity(&e(vec![0.0, 0.0]), &e(vec![1.0, 0.0])).unwrap(), 0.0);
        let other = SentenceEmbedding::dense("y", "t", vec![1.0, 0.0]);
        assert!(matches!(
            cosine_similarity(&e(vec![1.0, 0.0]), &other),
            Err(Error::SpaceMismatch { .. })
        ));
        assert!(cosine_similarity(&e(vec![1.0]), &e(vec![1.0, 0.0])).is_err());
    }

    #[test]
    fn mixed_representations_agree() {
        let sparse = Values::Sparse {
            dim: 4,
            entries: vec![(1, 2.0), (3, -1.0)],
        };
        let dense = Values::Dense(vec![0.5, 1.0, 7.0, 2.0]);
        assert_eq!(sparse.dot(&dense), 0.0);
        assert_eq!(sparse.dot(&Values::Dense(sparse.to_dense())), 5.0);
    }

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(".emb").tempfile().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn embedding_file_examples() {
        let f = write("dim=3\ns1\t0.1 0.2 0.3\n");
        let store = EmbeddingStore::load(f.path()).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.get("s1").unwrap(), &[0.1, 0.2, 0.3]);
        assert!(store.space_id.starts_with("external:"));

        let f = write("dim=3\ns1\t0.1 0.2 0.3\ns2\t0.1 0.2\n");
        match EmbeddingStore::load(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }

        let f = write("dim=2\na\t1 2\na\t3 4\n");
        let store = EmbeddingStore::load(f.path()).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.get("a").unwrap(), &[3.0, 4.0]);

        assert!(EmbeddingStore::load(write("3\n").path()).is_err());
        assert!(EmbeddingStore::load(write("dim=1\nnotab 1\n").path()).is_err());
    }

    #[test]
    fn embedding_round_trip_is_bit_identical() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut store = EmbeddingStore::new("rt", 16);
        for i in 0..2000 {
            let v: Vec<f64> = (0..16)
                .map(|_| rng.random_range(-1e3..1e3) * rng.random::<f64>().powi(7))
                .collect();
            store.insert(&format!("s{i}"), v).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.emb");
        store.save(&path).unwrap();
        let back = EmbeddingStore::load(&path).unwrap();
        assert_eq!(back.len(), 2000);
        for (id, v) in store.iter() {
            let w = back.get(id).unwrap();
            assert!(v.iter().zip(w).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        assert_eq!(back.space_id, store.space_id);
    }

    #[test]
    fn store_embedder_requires_known_ids() {
        let mut store = EmbeddingStore::new("x", 2);
        store.insert("a", vec![1.0, 0.0]).unwrap();
        assert!(store.embed("a", "").is_ok());
        assert!(store.embed("b", "").is_err());
        assert!(store.insert("c", vec![1.0]).is_err());
    }

    mod props {
        use proptest::prelude::*;

        use super::super::*;

        fn vecs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
            (1usize..12).prop_flat_map(|n| {
                (
                    proptest::collection::vec(-100.0f64..100.0, n),
                    proptest::collection::vec(-100.0f64..100.0, n),
                )
            })
        }

        proptest! {
            #[test]
            fn cosine_symmetric_bounded_scale_invariant((a, b) in vecs(), k in 0.001f64..1000.0) {
                let ea = SentenceEmbedding::dense("a", "s", a.clone());
                let eb = SentenceEmbedding::dense("b", "s", b);
                let ab = cosine_similarity(&ea, &eb).unwrap();
                let ba = cosine_similarity(&eb, &ea).unwrap();
                prop_assert_eq!(ab.to_bits(), ba.to_bits());
                prop_assert!(ab.abs() <= 1.0 + 1e-9);
                let scaled = SentenceEmbedding::dense("a", "s", a.iter().map(|x| x * k).collect());
                prop_assert!((cosine_similarity(&scaled, &eb).unwrap() - ab).abs() <= 1e-9);
            }

            #[test]
            fn tfidf_rows_are_unit_or_zero(docs in proptest::collection::vec("[a-d ]{0,20}", 1..8), probe in "[a-e ]{0,20}") {
                if let Ok(m) = build_tfidf_model(docs.iter().map(String::as_str), TokenizerConfig { lowercase: true, min_token_chars: 1 }, &VocabularyConfig::default()) {
                    let v = m.vectorize("p", &probe);
                    prop_assert!(v.norm == 0.0 || (v.norm - 1.0).abs() <= 1e-9);
                    let dense = v.values.to_dense();
                    let direct = dense.iter().map(|x| x * x).sum::<f64>().sqrt();
                    prop_assert!((direct - v.norm).abs() <= 1e-9);
                }
            }

            #[test]
            fn vocabulary_order_insensitive(docs in proptest::collection::vec("[a-f ]{0,20}", 1..8), seed in any::<u64>()) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let cfg = TokenizerConfig { lowercase: true, min_token_chars: 1 };
                let mut shuffled = docs.clone();
                shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let a = build_tfidf_model(docs.iter().map(String::as_str), cfg, &VocabularyConfig::default());
                let b = build_tfidf_model(shuffled.iter().map(String::as_str), cfg, &VocabularyConfig::default());
                match (a, b) {
                    (Ok(a), Ok(b)) => {
                        prop_assert_eq!(&a.vocabulary.terms, &b.vocabulary.terms);
                        prop_assert_eq!(a.idf, b.idf);
                        let idf = a.vocabulary.idf();
                        for i in 0..a.vocabulary.len() {
                            for j in 0..a.vocabulary.len() {
                                if a.vocabulary.doc_freq[i] <= a.vocabulary.doc_freq[j] {
                                    prop_assert!(idf[i] >= idf[j]);
                                }
                            }
                        }
                    }
                    (Err(_), Err(_)) => {}
                    _ => prop_assert!(false, "build outcome depends on order"),
                }
            }
        }
    }
}
