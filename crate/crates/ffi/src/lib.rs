//! C interface to the sentence selection engine.
//!
//! Every fallible call returns an [`RhsStatus`]; on failure a message is
//! available from [`rhs_last_error`] on the same thread. Strings handed out
//! by the library must be released with [`rhs_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::LazyLock;

use rhs_core::corpus::{LengthBounds, Review};
use rhs_core::helpfulness::{RidgeModel, DEFAULT_HELPFUL_FLOOR};
use rhs_core::rhs::{
    group_by_product, Pipeline, PipelineConfig, RhsResult, SelectionConfig, SimilaritySpace, SupportConfig,
    DEFAULT_ALPHA, DEFAULT_MIN_SUPPORT, DEFAULT_SIGMA, DEFAULT_TOP_K_SUPPORTERS,
};
use rhs_core::sentiment::{LexiconProvider, SentimentLabel};
use rhs_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Io = 4,
    Parse = 5,
    Provider = 6,
    Numeric = 7,
    /// A panic was caught at the boundary.
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsSentimentLabel {
    Positive = 0,
    Negative = 1,
    Neutral = 2,
    Mixed = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhsSentiment {
    pub label: RhsSentimentLabel,
    pub positive: f64,
    pub negative: f64,
    pub neutral: f64,
    pub mixed: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsSimilarity {
    /// Idf-weighted bag of words fitted per product.
    IdfBow = 0,
    /// The model's own TF-IDF space.
    ModelTfidf = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhsConfig {
    pub sigma: f64,
    pub min_support: usize,
    pub alpha: f64,
    pub min_chars: usize,
    pub max_chars: usize,
    pub helpful_floor: f64,
    pub top_k_supporters: usize,
    pub similarity: RhsSimilarity,
}

/// Opaque handle to a trained helpfulness model.
pub struct RhsModel {
    inner: RidgeModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

static LEXICON: LazyLock<LexiconProvider> = LazyLock::new(LexiconProvider::default);

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    let c = CString::new(msg).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> RhsStatus {
    match err {
        Error::Io { .. } => RhsStatus::Io,
        Error::Parse { .. } | Error::Json(_) => RhsStatus::Parse,
        Error::Provider { .. } => RhsStatus::Provider,
        Error::Singular | Error::Degenerate(_) => RhsStatus::Numeric,
        Error::Stage { source, .. } => status_of(source),
        _ => RhsStatus::InvalidInput,
    }
}

struct Failure(RhsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording any error or panic for `rhs_last_error`.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RhsStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RhsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RhsStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(RhsStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(RhsStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn null(name: &str) -> Failure {
    Failure(RhsStatus::NullArgument, format!("{name} is null"))
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn rhs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static version string.
#[no_mangle]
pub extern "C" fn rhs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn rhs_config_default() -> RhsConfig {
    let bounds = LengthBounds::default();
    RhsConfig {
        sigma: DEFAULT_SIGMA,
        min_support: DEFAULT_MIN_SUPPORT,
        alpha: DEFAULT_ALPHA,
        min_chars: bounds.min_chars,
        max_chars: bounds.max_chars,
        helpful_floor: DEFAULT_HELPFUL_FLOOR,
        top_k_supporters: DEFAULT_TOP_K_SUPPORTERS,
        similarity: RhsSimilarity::IdfBow,
    }
}

/// Defaults with the relaxed support settings for small review sets.
#[no_mangle]
pub extern "C" fn rhs_config_relaxed() -> RhsConfig {
    let relaxed = SupportConfig::relaxed();
    RhsConfig {
        sigma: relaxed.sigma,
        min_support: relaxed.min_support,
        ..rhs_config_default()
    }
}

/// Loads a model file written by `rhs train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rhs_model_load(path: *const c_char, out: *mut *mut RhsModel) -> RhsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = str_arg(path, "path")?;
        let inner = RidgeModel::load(path)?;
        *out = Box::into_raw(Box::new(RhsModel { inner }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from `rhs_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rhs_model_free(model: *mut RhsModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Predicted helpfulness of one sentence: `score` clamped to [0, 2] and the
/// unclamped `raw`. Either output may be null. Only models with built-in
/// text features can score raw text.
///
/// # Safety
/// `model` must be a live handle and `text` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rhs_model_predict(
    model: *const RhsModel,
    text: *const c_char,
    score: *mut f64,
    raw: *mut f64,
) -> RhsStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let text = str_arg(text, "text")?;
        let p = model.inner.score("ffi", text, None)?;
        if !score.is_null() {
            *score = p.score;
        }
        if !raw.is_null() {
            *raw = p.raw_score;
        }
        Ok(())
    })
}

/// Lexicon sentiment of one sentence.
///
/// # Safety
/// `text` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rhs_sentiment_classify(text: *const c_char, out: *mut RhsSentiment) -> RhsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(text, "text")?;
        let r = LEXICON.classify_text(text);
        *out = RhsSentiment {
            label: match r.label {
                SentimentLabel::Positive => RhsSentimentLabel::Positive,
                SentimentLabel::Negative => RhsSentimentLabel::Negative,
                SentimentLabel::Neutral => RhsSentimentLabel::Neutral,
                SentimentLabel::Mixed => RhsSentimentLabel::Mixed,
            },
            positive: r.scores.positive,
            negative: r.scores.negative,
            neutral: r.scores.neutral,
            mixed: r.scores.mixed,
        };
        Ok(())
    })
}

fn pipeline_config(cfg: &RhsConfig) -> Result<PipelineConfig, Failure> {
    let support = SupportConfig {
        sigma: cfg.sigma,
        min_support: cfg.min_support,
    };
    let selection = SelectionConfig {
        alpha: cfg.alpha,
        top_k_supporters: cfg.top_k_supporters,
    };
    support.validate()?;
    selection.validate()?;
    if !cfg.helpful_floor.is_finite() {
        return Err(Failure(RhsStatus::InvalidInput, "helpful_floor must be finite".into()));
    }
    Ok(PipelineConfig {
        bounds: LengthBounds::new(cfg.min_chars, cfg.max_chars)?,
        helpful_floor: cfg.helpful_floor,
        support,
        selection,
    })
}

/// Selects representative sentences with the lexicon sentiment provider.
///
/// `reviews_json` is a JSON array of `{review_id, product_id, text}`
/// objects. On success `*out_json` receives a JSON array with one result
/// per product in first-appearance order (one empty result for an empty
/// array); free it with `rhs_string_free`. A null `config` means defaults.
///
/// # Safety
/// Pointers must be valid; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rhs_extract_json(
    model: *const RhsModel,
    reviews_json: *const c_char,
    config: *const RhsConfig,
    out_json: *mut *mut c_char,
) -> RhsStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        *out_json = ptr::null_mut();
        let model = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        let text = str_arg(reviews_json, "reviews_json")?;
        let cfg = config.as_ref().copied().unwrap_or_else(|| rhs_config_default());
        let reviews: Vec<Review> = serde_json::from_str(text).map_err(Error::from)?;
        let similarity = match cfg.similarity {
            RhsSimilarity::IdfBow => SimilaritySpace::IdfBowPerProduct,
            RhsSimilarity::ModelTfidf => SimilaritySpace::Embedder(
                model
                    .tfidf
                    .as_ref()
                    .ok_or_else(|| Failure(RhsStatus::InvalidInput, "model has no TF-IDF space".into()))?,
            ),
        };
        let pipeline = Pipeline {
            model,
            features: None,
            provider: &*LEXICON,
            similarity,
            config: pipeline_config(&cfg)?,
        };
        let groups = group_by_product(reviews);
        let results: Vec<RhsResult> = if groups.is_empty() {
            vec![pipeline.select(&[])?]
        } else {
            groups
                .iter()
                .map(|(_, r)| pipeline.select(r))
                .collect::<Result<_, _>>()?
        };
        let json = serde_json::to_string(&results).map_err(Error::from)?;
        *out_json = CString::new(json)
            .map_err(|_| Failure(RhsStatus::Internal, "output contains NUL".into()))?
            .into_raw();
        Ok(())
    })
}

/// Releases a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rhs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
