#ifndef DWELLCAST_H
#define DWELLCAST_H

#include <stddef.h>
#include <stdint.h>

typedef enum DcStatus {
  DC_STATUS_OK = 0,
  DC_STATUS_NULL_POINTER = 1,
  DC_STATUS_INVALID_ARGUMENT = 2,
  DC_STATUS_IO = 3,
  DC_STATUS_FORMAT = 4,
  DC_STATUS_PANIC = 5,
} DcStatus;

/*
 A trained model loaded from the registry.
 */
typedef struct DcModel DcModel;

/*
 A loaded ontology store.
 */
typedef struct DcStore DcStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *dc_version(void);

/*
 Copies the calling thread's last error message into `buf` (truncated,
 always NUL-terminated when `len > 0`). Returns the full message length
 excluding the NUL, or 0 when there is no error.

 # Safety
 `buf` must be null or point to `len` writable bytes.
 */
uintptr_t dc_last_error_message(char *buf, uintptr_t len);

/*
 Runs the command-line interface with `argv` (including the program name)
 and returns its exit code.

 # Safety
 `argv` must point to `argc` valid NUL-terminated strings.
 */
int dc_cli_run(int argc, const char *const *argv);

/*
 Loads a store directory written by the `ingest`, `link` or `classify` stage.

 # Safety
 `dir` must be a NUL-terminated string; `out` must be writable.
 */
enum DcStatus dc_store_load(const char *dir, struct DcStore **out);

/*
 Number of containers in the store, or 0 for a null handle.

 # Safety
 `store` must be null or a live handle from [`dc_store_load`].
 */
uintptr_t dc_store_len(const struct DcStore *store);

/*
 # Safety
 `store` must be null or a handle from [`dc_store_load`] not yet freed.
 */
void dc_store_free(struct DcStore *store);

/*
 Loads a model file from a registry's `models/` directory.

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DcStatus dc_model_load(const char *path, struct DcModel **out);

/*
 Feature count the model expects, or 0 for a null handle.

 # Safety
 `model` must be null or a live handle.
 */
uintptr_t dc_model_n_features(const struct DcModel *model);

/*
 Scores `n_rows` rows of row-major `x` (`n_rows * n_cols` values) into `out`.

 # Safety
 `x` must hold `n_rows * n_cols` doubles and `out` room for `n_rows`.
 */
enum DcStatus dc_model_predict(const struct DcModel *model,
                               const double *x,
                               uintptr_t n_rows,
                               uintptr_t n_cols,
                               double *out);

/*
 # Safety
 `model` must be null or a handle from [`dc_model_load`] not yet freed.
 */
void dc_model_free(struct DcModel *model);

/*
 Handling-reduction bound `alpha*beta*delta_s + alpha*(1-beta)*delta_d`.

 # Safety
 `out` must be writable.
 */
enum DcStatus dc_impact_estimate(double alpha,
                                 double beta,
                                 double delta_s,
                                 double delta_d,
                                 double *out);

/*
 Jaccard similarity of the character-trigram sets of two names.

 # Safety
 `a` and `b` must be NUL-terminated strings; `out` must be writable.
 */
enum DcStatus dc_trigram_similarity(const char *a, const char *b, double *out);

/*
 Area under the ROC curve. `labels` are 0/1 bytes.

 # Safety
 `scores` and `labels` must hold `n` values; `out` must be writable.
 */
enum DcStatus dc_auc(const double *scores, const uint8_t *labels, uintptr_t n, double *out);

/*
 Threshold maximising TPR - FPR; a score is positive when strictly above it.

 # Safety
 `scores` and `labels` must hold `n` values; `out` must be writable.
 */
enum DcStatus dc_youden_threshold(const double *scores,
                                  const uint8_t *labels,
                                  uintptr_t n,
                                  double *out);

/*
 Writes the indices of the `min(k, n)` highest scores to `out_idx`, best
 first, ties by lower index. `*written` receives the count.

 # Safety
 `scores` must hold `n` values, `out_idx` room for `min(k, n)`.
 */
enum DcStatus dc_rank_topk(const double *scores,
                           uintptr_t n,
                           uintptr_t k,
                           uintptr_t *out_idx,
                           uintptr_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DWELLCAST_H */
