#ifndef CKD_H
#define CKD_H

/* C interface to the consistent-distillation laboratory. All heavy
 * lifting happens behind opaque handles; functions return a status code
 * and the last error message is available per thread. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ckd_status {
    CKD_OK = 0,
    CKD_ERR_IO = 1,
    CKD_ERR_CONFIG = 2,
    CKD_ERR_SHAPE = 3,
    CKD_ERR_DOMAIN = 4,
    CKD_ERR_STATE = 5,
    CKD_ERR_INTERNAL = 6
} ckd_status;

/* Message for the most recent failing call on this thread; empty string
 * if none. The pointer stays valid until the next failing call. */
const char *ckd_last_error(void);

/* Generates the synthetic two-view dataset described by the [data]
 * section of the config (NULL config = defaults) and writes it to
 * out_path. seed_override replaces the config seed when has_seed != 0. */
ckd_status ckd_generate_dataset(const char *config_path, int has_seed,
                                uint64_t seed_override, const char *out_path);

/* Trains one variant and writes checkpoints, the epoch log, curve CSVs,
 * and metrics.json into out_dir. variant NULL = the config's variant;
 * seed_override as above. */
ckd_status ckd_train(const char *config_path, const char *variant, int has_seed,
                     uint64_t seed_override, const char *out_dir);

/* Full ablation grid (every configured variant x seed) plus the summary
 * table with relative gains. */
ckd_status ckd_ablate(const char *config_path, const char *out_dir);

/* Re-evaluates a finished training cell from its stored checkpoints and
 * writes metrics.json to out_json_path. */
ckd_status ckd_eval(const char *config_path, const char *cell_dir, const char *variant,
                    int has_seed, uint64_t seed_override, const char *out_json_path);

/* Runs every analytic verification check and writes the JSON report and
 * the two-logit regularizer landscape CSV into out_dir. Returns
 * CKD_ERR_DOMAIN if any check fails. */
ckd_status ckd_verify_theory(uint64_t seed, const char *out_dir);

/* Collates a finished ablation directory into per-channel CSVs under
 * <run_dir>/report. */
ckd_status ckd_report(const char *run_dir);

/* Trained-model handle: load a checkpoint and compute deployment-view
 * embeddings for row-major float64 inputs. */
typedef struct ckd_model ckd_model;

ckd_status ckd_model_load(const char *checkpoint_path, ckd_model **out);
void ckd_model_free(ckd_model *m);
ckd_status ckd_model_embed_dim(const ckd_model *m, size_t *out_dim);
ckd_status ckd_model_input_dim(const ckd_model *m, size_t *out_dim);
/* out must hold rows * embed_dim doubles. */
ckd_status ckd_model_embed(const ckd_model *m, const double *x, size_t rows, size_t cols,
                           double *out);

#ifdef __cplusplus
}
#endif

#endif /* CKD_H */
