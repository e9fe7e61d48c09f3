#ifndef RHS_H
#define RHS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RhsSimilarity {
  /**
   * Idf-weighted bag of words fitted per product.
   */
  RHS_SIMILARITY_IDF_BOW = 0,
  /**
   * The model's own TF-IDF space.
   */
  RHS_SIMILARITY_MODEL_TFIDF = 1,
} RhsSimilarity;

typedef enum RhsStatus {
  RHS_STATUS_OK = 0,
  RHS_STATUS_NULL_ARGUMENT = 1,
  RHS_STATUS_INVALID_UTF8 = 2,
  RHS_STATUS_INVALID_INPUT = 3,
  RHS_STATUS_IO = 4,
  RHS_STATUS_PARSE = 5,
  RHS_STATUS_PROVIDER = 6,
  RHS_STATUS_NUMERIC = 7,
  /**
   * A panic was caught at the boundary.
   */
  RHS_STATUS_INTERNAL = 8,
} RhsStatus;

typedef enum RhsSentimentLabel {
  RHS_SENTIMENT_LABEL_POSITIVE = 0,
  RHS_SENTIMENT_LABEL_NEGATIVE = 1,
  RHS_SENTIMENT_LABEL_NEUTRAL = 2,
  RHS_SENTIMENT_LABEL_MIXED = 3,
} RhsSentimentLabel;

/**
 * Opaque handle to a trained helpfulness model.
 */
typedef struct RhsModel RhsModel;

typedef struct RhsConfig {
  double sigma;
  size_t min_support;
  double alpha;
  size_t min_chars;
  size_t max_chars;
  double helpful_floor;
  size_t top_k_supporters;
  enum RhsSimilarity similarity;
} RhsConfig;

typedef struct RhsSentiment {
  enum RhsSentimentLabel label;
  double positive;
  double negative;
  double neutral;
  double mixed;
} RhsSentiment;

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next library call on the same thread.
 */
const char *rhs_last_error(void);

/**
 * Static version string.
 */
const char *rhs_version(void);

struct RhsConfig rhs_config_default(void);

/**
 * Defaults with the relaxed support settings for small review sets.
 */
struct RhsConfig rhs_config_relaxed(void);

/**
 * Loads a model file written by `rhs train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RhsStatus rhs_model_load(const char *path, struct RhsModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from `rhs_model_load` and not be used afterwards.
 */
void rhs_model_free(struct RhsModel *model);

/**
 * Predicted helpfulness of one sentence: `score` clamped to [0, 2] and the
 * unclamped `raw`. Either output may be null. Only models with built-in
 * text features can score raw text.
 *
 * # Safety
 * `model` must be a live handle and `text` NUL-terminated.
 */
enum RhsStatus rhs_model_predict(const struct RhsModel *model,
                                 const char *text,
                                 double *score,
                                 double *raw);

/**
 * Lexicon sentiment of one sentence.
 *
 * # Safety
 * `text` must be NUL-terminated; `out` must be writable.
 */
enum RhsStatus rhs_sentiment_classify(const char *text, struct RhsSentiment *out);

/**
 * Selects representative sentences with the lexicon sentiment provider.
 *
 * `reviews_json` is a JSON array of `{review_id, product_id, text}`
 * objects. On success `*out_json` receives a JSON array with one result
 * per product in first-appearance order (one empty result for an empty
 * array); free it with `rhs_string_free`. A null `config` means defaults.
 *
 * # Safety
 * Pointers must be valid; `out_json` must be writable.
 */
enum RhsStatus rhs_extract_json(const struct RhsModel *model,
                                const char *reviews_json,
                                const struct RhsConfig *config,
                                char **out_json);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void rhs_string_free(char *s);

#endif  /* RHS_H */
