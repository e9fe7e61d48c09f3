//! Sentence helpfulness regression (ridge) and the helpfulness gate.
//!
//! Two solvers sit behind [`train_ridge`]: a Cholesky factorization of the
//! dense normal equations for external embeddings, and Jacobi-preconditioned
//! conjugate gradient over the implicitly centered sparse design for TF-IDF
//! features. Both fit the intercept by centering, so it is never penalized.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::AnnotatedSentence;
use crate::error::{Error, Result};
use crate::textvec::{
    build_tfidf_model, EmbeddingStore, SentenceEmbedding, TfidfModel, TokenizerConfig, Values, Vocabulary,
    VocabularyConfig, SPACE_TFIDF,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_HELPFUL_FLOOR: f64 = 1.0;

const CG_TOLERANCE: f64 = 1e-8;
const ROW_CHUNK: usize = 256;
const MAX_DENSE_UNPENALIZED_DIM: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HelpfulnessPrediction {
    pub sentence_id: String,
    pub score: f64,
    pub raw_score: f64,
}

impl HelpfulnessPrediction {
    pub fn from_raw(sentence_id: impl Into<String>, raw_score: f64) -> Self {
        HelpfulnessPrediction {
            sentence_id: sentence_id.into(),
            score: raw_score.clamp(0.0, 2.0),
            raw_score,
        }
    }
}

/// Weights and intercept of a fitted ridge regression.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl RidgeFit {
    pub fn predict_row(&self, x: &Values) -> f64 {
        match x {
            Values::Dense(v) => v.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.intercept,
            Values::Sparse { entries, .. } => {
                entries.iter().map(|&(i, v)| v * self.weights[i as usize]).sum::<f64>() + self.intercept
            }
        }
    }

    /// Value of `Σ (w·x_i + b − y_i)² + λ‖w‖²`.
    pub fn objective(&self, rows: &[Values], targets: &[f64], lambda: f64) -> f64 {
        let sse: f64 = rows
            .iter()
            .zip(targets)
            .map(|(x, y)| (self.predict_row(x) - y).powi(2))
            .sum();
        sse + lambda * self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Gradient of [`RidgeFit::objective`] with respect to `(w, b)`; the
    /// intercept component is last.
    pub fn gradient(&self, rows: &[Values], targets: &[f64], lambda: f64) -> Vec<f64> {
        let d = self.weights.len();
        let mut g: Vec<f64> = self.weights.iter().map(|w| 2.0 * lambda * w).collect();
        g.push(0.0);
        for (x, y) in rows.iter().zip(targets) {
            let r = 2.0 * (self.predict_row(x) - y);
            match x {
                Values::Dense(v) => {
                    for (gj, xj) in g.iter_mut().zip(v) {
                        *gj += r * xj;
                    }
                }
                Values::Sparse { entries, .. } => {
                    for &(j, v) in entries {
                        g[j as usize] += r * v;
                    }
                }
            }
            g[d] += r;
        }
        g
    }
}

/// Minimizes `Σ (w·x_i + b − y_i)² + λ‖w‖²` with `b` unpenalized.
///
/// All-dense input goes to the Cholesky path; sparse input goes to
/// conjugate gradient when `lambda > 0`.
pub fn train_ridge(rows: &[Values], targets: &[f64], lambda: f64) -> Result<RidgeFit> {
    let dim = validate_design(rows, targets, lambda)?;
    if rows.iter().all(|r| matches!(r, Values::Dense(_))) {
        solve_dense(rows, targets, lambda, dim)
    } else if lambda == 0.0 {
        // CG cannot tell a singular system from a slowly converging one, so
        // unpenalized fits go through the factorization.
        if dim > MAX_DENSE_UNPENALIZED_DIM {
            return Err(Error::Singular);
        }
        let dense: Vec<Values> = rows.iter().map(|r| Values::Dense(r.to_dense())).collect();
        solve_dense(&dense, targets, lambda, dim)
    } else {
        solve_sparse_cg(rows, targets, lambda, dim)
    }
}

fn validate_design(rows: &[Values], targets: &[f64], lambda: f64) -> Result<usize> {
    if rows.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "ridge needs at least 2 rows, got {}",
            rows.len()
        )));
    }
    if rows.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            actual: targets.len(),
        });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be >= 0, got {lambda}")));
    }
    if let Some(y) = targets.iter().find(|y| !(0.0..=2.0).contains(*y)) {
        return Err(Error::InvalidInput(format!("target {y} outside [0, 2]")));
    }
    let dim = rows[0].dim();
    if let Some(r) = rows.iter().find(|r| r.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: r.dim(),
        });
    }
    if dim == 0 {
        return Err(Error::InvalidInput("zero-dimensional features".into()));
    }
    Ok(dim)
}

fn column_means(rows: &[Values], dim: usize) -> Vec<f64> {
    let mut mu = vec![0.0; dim];
    for r in rows {
        match r {
            Values::Dense(v) => mu.iter_mut().zip(v).for_each(|(m, x)| *m += x),
            Values::Sparse { entries, .. } => entries.iter().for_each(|&(j, v)| mu[j as usize] += v),
        }
    }
    let n = rows.len() as f64;
    mu.iter_mut().for_each(|m| *m /= n);
    mu
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn solve_dense(rows: &[Values], targets: &[f64], lambda: f64, dim: usize) -> Result<RidgeFit> {
    let mu = column_means(rows, dim);
    let y_bar = mean(targets);

    // Gram matrix of centered rows (lower triangle), accumulated per chunk in
    // parallel and reduced in chunk order so the result is deterministic.
    let partials: Vec<(Vec<f64>, Vec<f64>)> = rows
        .par_chunks(ROW_CHUNK)
        .zip(targets.par_chunks(ROW_CHUNK))
        .map(|(chunk, ys)| {
            let mut gram = vec![0.0; dim * dim];
            let mut rhs = vec![0.0; dim];
            let mut xc = vec![0.0; dim];
            for (row, y) in chunk.iter().zip(ys) {
                let Values::Dense(v) = row else { unreachable!() };
                for j in 0..dim {
                    xc[j] = v[j] - mu[j];
                }
                let yc = y - y_bar;
                for i in 0..dim {
                    let xi = xc[i];
                    rhs[i] += xi * yc;
                    let base = i * dim;
                    for j in 0..=i {
                        gram[base + j] += xi * xc[j];
                    }
                }
            }
            (gram, rhs)
        })
        .collect();
    let mut gram = vec![0.0; dim * dim];
    let mut rhs = vec![0.0; dim];
    for (g, r) in partials {
        gram.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        rhs.iter_mut().zip(&r).for_each(|(a, b)| *a += b);
    }
    for i in 0..dim {
        gram[i * dim + i] += lambda;
    }

    let factor = cholesky_lower(&mut gram, dim)?;
    let weights = cholesky_solve(factor, dim, &rhs);
    let intercept = y_bar - weights.iter().zip(&mu).map(|(w, m)| w * m).sum::<f64>();
    Ok(RidgeFit { weights, intercept })
}

/// In-place Cholesky of a symmetric matrix stored in the lower triangle.
fn cholesky_lower(a: &mut [f64], n: usize) -> Result<&[f64]> {
    let scale = (0..n)
        .map(|i| a[i * n + i].abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= scale * 1e-13 {
            return Err(Error::Singular);
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(a)
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Centered design `X − 1μᵀ` applied without materializing it.
struct CenteredDesign<'a> {
    rows: &'a [Values],
    mu: Vec<f64>,
    dim: usize,
}

impl CenteredDesign<'_> {
    fn row_dot(row: &Values, v: &[f64]) -> f64 {
        match row {
            Values::Dense(x) => x.iter().zip(v).map(|(a, b)| a * b).sum(),
            Values::Sparse { entries, .. } => entries.iter().map(|&(j, x)| x * v[j as usize]).sum(),
        }
    }

    /// `(X − 1μᵀ) v`
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let shift: f64 = self.mu.iter().zip(v).map(|(a, b)| a * b).sum();
        self.rows.par_iter().map(|r| Self::row_dot(r, v) - shift).collect()
    }

    /// `(X − 1μᵀ)ᵀ u`
    fn apply_t(&self, u: &[f64]) -> Vec<f64> {
        let partials: Vec<Vec<f64>> = self
            .rows
            .par_chunks(ROW_CHUNK)
            .zip(u.par_chunks(ROW_CHUNK))
            .map(|(chunk, us)| {
                let mut out = vec![0.0; self.dim];
                for (row, &ui) in chunk.iter().zip(us) {
                    match row {
                        Values::Dense(x) => out.iter_mut().zip(x).for_each(|(o, xj)| *o += xj * ui),
                        Values::Sparse { entries, .. } => entries.iter().for_each(|&(j, x)| out[j as usize] += x * ui),
                    }
                }
                out
            })
            .collect();
        let mut out = vec![0.0; self.dim];
        for p in partials {
            out.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        }
        let total: f64 = u.iter().sum();
        out.iter_mut().zip(&self.mu).for_each(|(o, m)| *o -= m * total);
        out
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut sq = vec![0.0; self.dim];
        for r in self.rows {
            match r {
                Values::Dense(x) => sq.iter_mut().zip(x).for_each(|(s, v)| *s += v * v),
                Values::Sparse { entries, .. } => entries.iter().for_each(|&(j, v)| sq[j as usize] += v * v),
            }
        }
        let n = self.rows.len() as f64;
        sq.iter().zip(&self.mu).map(|(s, m)| (s - n * m * m).max(0.0)).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn solve_sparse_cg(rows: &[Values], targets: &[f64], lambda: f64, dim: usize) -> Result<RidgeFit> {
    let design = CenteredDesign {
        rows,
        mu: column_means(rows, dim),
        dim,
    };
    let y_bar = mean(targets);
    let yc: Vec<f64> = targets.iter().map(|y| y - y_bar).collect();
    let b = design.apply_t(&yc);
    let b_norm = dot(&b, &b).sqrt();

    let op = |v: &[f64]| -> Vec<f64> {
        let mut out = design.apply_t(&design.apply(v));
        out.iter_mut().zip(v).for_each(|(o, x)| *o += lambda * x);
        out
    };
    let precond: Vec<f64> = design
        .diagonal()
        .iter()
        .map(|d| {
            let d = d + lambda;
            if d > 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();

    let mut w = vec![0.0; dim];
    if b_norm > 0.0 {
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&precond).map(|(a, p)| a * p).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let max_iter = (10 * dim).max(1000);
        let mut converged = false;
        for _ in 0..max_iter {
            let ap = op(&p);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(Error::Singular);
            }
            let step = rz / pap;
            w.iter_mut().zip(&p).for_each(|(wi, pi)| *wi += step * pi);
            r.iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= step * api);
            if dot(&r, &r).sqrt() <= CG_TOLERANCE * b_norm {
                converged = true;
                break;
            }
            z = r.iter().zip(&precond).map(|(a, p)| a * p).collect();
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            p.iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        }
        if !converged {
            return Err(Error::Degenerate("conjugate gradient did not converge".into()));
        }
    }
    let intercept = y_bar - dot(&w, &design.mu);
    Ok(RidgeFit { weights: w, intercept })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModelMetadata {
    pub trained_on: String,
    pub timestamp: Option<String>,
}

/// A trained helpfulness regressor over one feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub feature_space: String,
    pub fit: RidgeFit,
    pub lambda: f64,
    pub tfidf: Option<TfidfModel>,
    pub tokenizer: TokenizerConfig,
    pub metadata: ModelMetadata,
}

impl RidgeModel {
    pub fn dim(&self) -> usize {
        self.fit.weights.len()
    }

    pub fn predict(&self, embedding: &SentenceEmbedding) -> Result<HelpfulnessPrediction> {
        if embedding.space_id != self.feature_space {
            return Err(Error::SpaceMismatch {
                left: self.feature_space.clone(),
                right: embedding.space_id.clone(),
            });
        }
        if embedding.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: embedding.dim(),
            });
        }
        Ok(HelpfulnessPrediction::from_raw(
            embedding.sentence_id.clone(),
            self.fit.predict_row(&embedding.values),
        ))
    }

    /// Builds the model's feature vector for a sentence. External feature
    /// spaces need the matching embedding store.
    pub fn featurize(
        &self,
        sentence_id: &str,
        text: &str,
        external: Option<&EmbeddingStore>,
    ) -> Result<SentenceEmbedding> {
        if let Some(tfidf) = &self.tfidf {
            return Ok(tfidf.vectorize(sentence_id, text));
        }
        let store = external.ok_or_else(|| {
            Error::InvalidInput(format!("model over `{}` needs an embedding file", self.feature_space))
        })?;
        if store.space_id != self.feature_space {
            return Err(Error::SpaceMismatch {
                left: self.feature_space.clone(),
                right: store.space_id.clone(),
            });
        }
        let v = store
            .get(sentence_id)
            .ok_or_else(|| Error::InvalidInput(format!("no embedding for sentence `{sentence_id}`")))?;
        Ok(SentenceEmbedding::dense(
            sentence_id,
            store.space_id.clone(),
            v.to_vec(),
        ))
    }

    pub fn score(
        &self,
        sentence_id: &str,
        text: &str,
        external: Option<&EmbeddingStore>,
    ) -> Result<HelpfulnessPrediction> {
        self.predict(&self.featurize(sentence_id, text, external)?)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            feature_space: self.feature_space.clone(),
            lambda: self.lambda,
            intercept: self.fit.intercept,
            weights: self.fit.weights.clone(),
            vocabulary: self.tfidf.as_ref().map(|m| VocabularyFile {
                terms: m.vocabulary.terms.clone(),
                doc_freq: m.vocabulary.doc_freq.clone(),
                n_docs: m.vocabulary.n_docs,
            }),
            tokenizer: self.tokenizer,
            metadata: self.metadata.clone(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        let tfidf = match (&file.vocabulary, file.feature_space.as_str()) {
            (Some(v), SPACE_TFIDF) => {
                let vocab = Vocabulary::from_parts(v.terms.clone(), v.doc_freq.clone(), v.n_docs)?;
                Some(TfidfModel::from_vocabulary(vocab, file.tokenizer))
            }
            (None, SPACE_TFIDF) => return Err(Error::InvalidInput("tfidf model file lacks a vocabulary".into())),
            _ => None,
        };
        if let Some(m) = &tfidf {
            if m.dim() != file.weights.len() {
                return Err(Error::DimensionMismatch {
                    expected: m.dim(),
                    actual: file.weights.len(),
                });
            }
        }
        Ok(RidgeModel {
            feature_space: file.feature_space,
            fit: RidgeFit {
                weights: file.weights,
                intercept: file.intercept,
            },
            lambda: file.lambda,
            tfidf,
            tokenizer: file.tokenizer,
            metadata: file.metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(&self.to_file())?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabularyFile {
    pub terms: Vec<String>,
    pub doc_freq: Vec<u64>,
    pub n_docs: u64,
}

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub feature_space: String,
    pub lambda: f64,
    pub intercept: f64,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<VocabularyFile>,
    pub tokenizer: TokenizerConfig,
    pub metadata: ModelMetadata,
}

/// TF-IDF features plus ridge, fitted on an annotated dataset.
pub fn train_tfidf_ridge(
    data: &[AnnotatedSentence],
    lambda: f64,
    tokenizer: TokenizerConfig,
    vocab: &VocabularyConfig,
) -> Result<RidgeModel> {
    let tfidf = build_tfidf_model(data.iter().map(|a| a.sentence.text.as_str()), tokenizer, vocab)?;
    let rows: Vec<Values> = data
        .par_iter()
        .map(|a| tfidf.vectorize(&a.sentence.sentence_id, &a.sentence.text).values)
        .collect();
    let targets: Vec<f64> = data.iter().map(|a| a.helpfulness).collect();
    let fit = train_ridge(&rows, &targets, lambda)?;
    Ok(RidgeModel {
        feature_space: SPACE_TFIDF.to_string(),
        fit,
        lambda,
        tfidf: Some(tfidf),
        tokenizer,
        metadata: ModelMetadata::default(),
    })
}

/// Ridge over precomputed embeddings looked up by sentence id.
pub fn train_embedding_ridge(data: &[AnnotatedSentence], store: &EmbeddingStore, lambda: f64) -> Result<RidgeModel> {
    let rows = data
        .iter()
        .map(|a| {
            store
                .get(&a.sentence.sentence_id)
                .map(|v| Values::Dense(v.to_vec()))
                .ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "no embedding for training sentence `{}`",
                        a.sentence.sentence_id
                    ))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<f64> = data.iter().map(|a| a.helpfulness).collect();
    let fit = train_ridge(&rows, &targets, lambda)?;
    Ok(RidgeModel {
        feature_space: store.space_id.clone(),
        fit,
        lambda,
        tfidf: None,
        tokenizer: TokenizerConfig::default(),
        metadata: ModelMetadata::default(),
    })
}

/// Held-out MSE for each λ in `grid`, fitted on `train` rows.
pub fn lambda_grid(
    train_rows: &[Values],
    train_targets: &[f64],
    valid_rows: &[Values],
    valid_targets: &[f64],
    grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    grid.iter()
        .map(|&lambda| {
            let fit = train_ridge(train_rows, train_targets, lambda)?;
            let mse = valid_rows
                .iter()
                .zip(valid_targets)
                .map(|(x, y)| (fit.predict_row(x) - y).powi(2))
                .sum::<f64>()
                / valid_rows.len().max(1) as f64;
            Ok((lambda, mse))
        })
        .collect()
}

/// Keeps predictions with `score >= floor`, preserving order.
pub fn filter_helpful(predictions: Vec<HelpfulnessPrediction>, floor: f64) -> Vec<HelpfulnessPrediction> {
    predictions.into_iter().filter(|p| p.score >= floor).collect()
}
