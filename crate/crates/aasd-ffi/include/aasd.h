/* C interface for the aasd speculative decoding engine. */

#ifndef AASD_H
#define AASD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Verification mode selector for [`AasdConfig`].
 */
typedef enum AasdMode {
  AASD_MODE_STRICT = 0,
  AASD_MODE_FIXED_THRESHOLD = 1,
  AASD_MODE_TOP_K = 2,
  AASD_MODE_ADAPTIVE = 3,
} AasdMode;

/**
 * Status code for every fallible call.
 */
typedef enum AasdStatus {
  AASD_STATUS_OK = 0,
  AASD_STATUS_NULL_POINTER = 1,
  AASD_STATUS_INVALID_ARGUMENT = 2,
  AASD_STATUS_UTF8_ERROR = 3,
  AASD_STATUS_IO_ERROR = 4,
  AASD_STATUS_PARSE_ERROR = 5,
  AASD_STATUS_MODEL_ERROR = 6,
  AASD_STATUS_ENGINE_ERROR = 7,
  AASD_STATUS_BUFFER_TOO_SMALL = 8,
  /**
   * The session already emitted its end-of-sequence token or spent its
   * budget; no further steps are possible.
   */
  AASD_STATUS_FINISHED = 9,
  /**
   * A panic was caught at the boundary; see the last error message.
   */
  AASD_STATUS_INTERNAL = 10,
} AasdStatus;

/**
 * Opaque shared model handle. Safe to use from multiple sessions at once.
 */
typedef struct AasdModel AasdModel;

/**
 * Opaque decode session handle. Single-threaded use only.
 */
typedef struct AasdSession AasdSession;

/**
 * Plain-data engine configuration. `fixed_threshold` is read only in
 * `FIXED_THRESHOLD` mode and `top_k` only in `TOP_K` mode. A negative
 * `eos_token` selects the default (`vocab_size - 1`).
 */
typedef struct AasdConfig {
  size_t ngram_len;
  size_t max_key_len;
  size_t min_key_len;
  size_t max_expansion;
  size_t cache_topk;
  double alpha;
  double beta;
  enum AasdMode mode;
  double fixed_threshold;
  size_t top_k;
  size_t max_candidates;
  size_t max_new_tokens;
  int64_t eos_token;
  uint64_t seed;
} AasdConfig;

/**
 * Per-step accounting mirrored from the engine. `bonus` is -1 when the
 * step's bonus token was clipped away.
 */
typedef struct AasdStepStats {
  size_t drafted;
  size_t accepted;
  size_t emitted;
  int64_t bonus;
} AasdStepStats;

/**
 * Aggregated run metrics. Rates are NaN when their class was never drafted;
 * `tokens_per_sec` is NaN when no wall time was recorded.
 */
typedef struct AasdMetrics {
  size_t steps;
  size_t tokens_emitted;
  double mal;
  double acc_rate_input;
  double acc_rate_generated;
  double acc_rate_sampled;
  double aligned_acc;
  double misaligned_acc;
  double total_wall_ms;
  double tokens_per_sec;
} AasdMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Write the library version into `buffer` (NUL-terminated when capacity
 * allows). Returns the full version length in bytes.
 */
size_t aasd_version(char *buffer, size_t capacity);

/**
 * Copy the current thread's last error message into `buffer`. Returns the
 * message length in bytes (0 when no error has occurred).
 */
size_t aasd_last_error_message(char *buffer, size_t capacity);

/**
 * Fill `out` with the default configuration (adaptive mode).
 *
 * # Safety
 * `out` must be a valid pointer to an `AasdConfig`, or null.
 */
enum AasdStatus aasd_config_default(struct AasdConfig *out);

/**
 * Load a lookup-table model from its JSON file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum AasdStatus aasd_model_table_from_file(const char *path, struct AasdModel **out);

/**
 * Train an n-gram model from a whitespace-separated token-id file.
 * `vocab_size` of 0 infers the vocab from the stream.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum AasdStatus aasd_model_ngram_from_file(const char *path,
                                           size_t order,
                                           double smoothing,
                                           size_t vocab_size,
                                           struct AasdModel **out);

/**
 * Train an n-gram model from an in-memory token buffer.
 *
 * # Safety
 * `tokens` must point to `len` readable `uint32_t`s; `out` must be valid.
 */
enum AasdStatus aasd_model_ngram_train(const uint32_t *tokens,
                                       size_t len,
                                       size_t order,
                                       double smoothing,
                                       size_t vocab_size,
                                       struct AasdModel **out);

/**
 * Vocab size of a model handle; 0 for a null handle.
 *
 * # Safety
 * `model` must be a live handle from a model constructor, or null.
 */
size_t aasd_model_vocab_size(const struct AasdModel *model);

/**
 * Release a model handle. Sessions created from it stay valid (the model is
 * reference-counted).
 *
 * # Safety
 * `model` must come from a model constructor and not be freed twice.
 */
void aasd_model_free(struct AasdModel *model);

/**
 * Create a decode session over `prompt` and run the prefill pass.
 *
 * # Safety
 * `model` must be a live model handle, `prompt` must point to `prompt_len`
 * readable tokens, `config` may be null (defaults), `out` must be valid.
 */
enum AasdStatus aasd_session_new(const struct AasdModel *model,
                                 const struct AasdConfig *config,
                                 const uint32_t *prompt,
                                 size_t prompt_len,
                                 struct AasdSession **out);

/**
 * Run one draft/verify/commit step. `stats` may be null.
 *
 * # Safety
 * `session` must be a live session handle.
 */
enum AasdStatus aasd_session_step(struct AasdSession *session, struct AasdStepStats *stats);

/**
 * Step until the end-of-sequence token or the budget.
 *
 * # Safety
 * `session` must be a live session handle.
 */
enum AasdStatus aasd_session_generate(struct AasdSession *session);

/**
 * 1 when the session can take no more steps, 0 otherwise, -1 on null.
 *
 * # Safety
 * `session` must be a live session handle, or null.
 */
int32_t aasd_session_finished(const struct AasdSession *session);

/**
 * Total sequence length (prompt plus generated).
 *
 * # Safety
 * `session` must be a live session handle, or null.
 */
size_t aasd_session_len(const struct AasdSession *session);

/**
 * Length of the prompt the session was created with.
 *
 * # Safety
 * `session` must be a live session handle, or null.
 */
size_t aasd_session_prompt_len(const struct AasdSession *session);

/**
 * Copy the whole sequence into `out`. `written` receives the token count.
 * Fails with `BUFFER_TOO_SMALL` when `capacity` is insufficient (and stores
 * the required size in `written` when that pointer is non-null).
 *
 * # Safety
 * `session` must be live; `out` must point to `capacity` writable tokens.
 */
enum AasdStatus aasd_session_tokens(const struct AasdSession *session,
                                    uint32_t *out,
                                    size_t capacity,
                                    size_t *written);

/**
 * Aggregate metrics over the steps taken so far.
 *
 * # Safety
 * `session` must be live and `out` a valid pointer.
 */
enum AasdStatus aasd_session_metrics(const struct AasdSession *session, struct AasdMetrics *out);

/**
 * Release a session handle.
 *
 * # Safety
 * `session` must come from `aasd_session_new` and not be freed twice.
 */
void aasd_session_free(struct AasdSession *session);

/**
 * Plain autoregressive greedy decoding, for parity checks from bindings.
 * Appends up to `max_new` tokens to `prompt` and writes the full sequence.
 * A negative `eos` decodes to the full budget.
 *
 * # Safety
 * `model` must be live; `prompt` must point to `prompt_len` tokens; `out`
 * must point to `capacity` writable tokens; `written` may be null.
 */
enum AasdStatus aasd_greedy_decode(const struct AasdModel *model,
                                   const uint32_t *prompt,
                                   size_t prompt_len,
                                   size_t max_new,
                                   int64_t eos,
                                   uint32_t *out,
                                   size_t capacity,
                                   size_t *written);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* AASD_H */
