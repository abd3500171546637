/* C interface to the uqfuse library. Every function returns a uqf_status;
 * on failure the message, offending path and line (if any) are available
 * from uqf_last_error* on the calling thread. Objects are opaque handles
 * released with their matching *_free function. Strings returned through
 * char** must be released with uqf_string_free. */
#ifndef UQFUSE_H
#define UQFUSE_H

#include <stddef.h>
#include <stdint.h>

#if defined(UQF_BUILDING_LIBRARY)
#define UQF_API __attribute__((visibility("default")))
#else
#define UQF_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum uqf_status {
  UQF_OK = 0,
  UQF_ERR_INVALID = 1,  /* bad argument or contract violation */
  UQF_ERR_IO = 2,       /* missing or unwritable file */
  UQF_ERR_PARSE = 3,    /* malformed file contents */
  UQF_ERR_COMPUTE = 4,  /* numerical failure */
  UQF_ERR_INTERNAL = 5  /* out of memory or unexpected failure */
} uqf_status;

#define UQF_NUM_COLUMNS 6

typedef struct uqf_dataset uqf_dataset;
typedef struct uqf_head uqf_head;
typedef struct uqf_gp uqf_gp;
typedef struct uqf_scores uqf_scores;
typedef struct uqf_policy uqf_policy;

UQF_API const char* uqf_version(void);
UQF_API const char* uqf_last_error(void);
UQF_API const char* uqf_last_error_path(void);
UQF_API long uqf_last_error_line(void);
UQF_API void uqf_string_free(char* s);
/* Name of fused column k (0..5), or NULL. */
UQF_API const char* uqf_column_name(size_t k);

/* Datasets */
UQF_API uqf_status uqf_dataset_generate(size_t n_per_class, size_t dim, double separation,
                                        uint64_t seed, uqf_dataset** out);
/* mean_shift has length 1 (broadcast) or the dataset dimension. */
UQF_API uqf_status uqf_dataset_shift(const uqf_dataset* base, const double* mean_shift,
                                     size_t shift_len, double cov_scale, uint64_t seed,
                                     uqf_dataset** out);
/* Format is sniffed from the "UQF1" magic. */
UQF_API uqf_status uqf_dataset_load(const char* path, uqf_dataset** out);
UQF_API uqf_status uqf_dataset_save(const uqf_dataset* d, const char* path, int binary);
UQF_API size_t uqf_dataset_size(const uqf_dataset* d);
UQF_API size_t uqf_dataset_dim(const uqf_dataset* d);
/* Copies embedding i into `embedding` (dim entries) and its label. */
UQF_API uqf_status uqf_dataset_get(const uqf_dataset* d, size_t i, double* embedding, int* label);
UQF_API void uqf_dataset_free(uqf_dataset* d);

/* Classifier head */
typedef struct uqf_train_options {
  size_t h1, h2, epochs, batch;
  double lr, dropout;
  int adam;
  uint64_t seed;
} uqf_train_options;

UQF_API uqf_train_options uqf_train_options_default(void);
UQF_API uqf_status uqf_head_train(const uqf_dataset* data, const uqf_train_options* opts,
                                  uqf_head** out);
UQF_API uqf_status uqf_head_load(const char* path, uqf_head** out);
UQF_API uqf_status uqf_head_save(const uqf_head* h, const char* path);
UQF_API uqf_status uqf_head_prob(const uqf_head* h, const double* x, size_t len, double* prob);
UQF_API uqf_status uqf_head_accuracy(const uqf_head* h, const uqf_dataset* data, double* acc);
UQF_API void uqf_head_free(uqf_head* h);

/* Sparse variational GP */
typedef struct uqf_gp_options {
  size_t m_per_class, steps, mc;
  double lr, jitter;
  int kmeans;
  uint64_t seed;
} uqf_gp_options;

UQF_API uqf_gp_options uqf_gp_options_default(void);
UQF_API uqf_status uqf_gp_fit(const uqf_dataset* data, const uqf_gp_options* opts, uqf_gp** out);
UQF_API uqf_status uqf_gp_load(const char* path, uqf_gp** out);
UQF_API uqf_status uqf_gp_save(const uqf_gp* g, const char* path);
UQF_API uqf_status uqf_gp_predict(const uqf_gp* g, const double* z, size_t len, double* mean,
                                  double* variance);
UQF_API void uqf_gp_free(uqf_gp* g);

/* Uncertainty scores */
typedef struct uqf_score_options {
  size_t mc_passes;
  double prob_clip;
  uint64_t seed;
  size_t threads;
} uqf_score_options;

UQF_API uqf_score_options uqf_score_options_default(void);
UQF_API uqf_status uqf_scores_compute(const uqf_head* h, const uqf_gp* g, const uqf_dataset* data,
                                      const uqf_score_options* opts, uqf_scores** out);
UQF_API uqf_status uqf_scores_load(const char* path, uqf_scores** out);
UQF_API uqf_status uqf_scores_save(const uqf_scores* s, const char* path);
UQF_API size_t uqf_scores_size(const uqf_scores* s);
/* columns receives UQF_NUM_COLUMNS values; any output pointer may be NULL. */
UQF_API uqf_status uqf_scores_get(const uqf_scores* s, size_t i, int* label, int* predicted,
                                  double* prob, double* columns);
UQF_API void uqf_scores_free(uqf_scores* s);

/* Calibration and evaluation */
typedef struct uqf_pso_options {
  size_t swarm, iters;
  double inertia, cognitive, social;
  uint64_t seed;
  size_t threads;
} uqf_pso_options;

UQF_API uqf_pso_options uqf_pso_options_default(void);
/* history_csv may be NULL; otherwise receives iteration,best_score rows. */
UQF_API uqf_status uqf_calibrate(const uqf_scores* s, const uqf_pso_options* opts,
                                 uqf_policy** out, double* score, char** history_csv);
UQF_API uqf_status uqf_policy_load(const char* path, uqf_policy** out);
UQF_API uqf_status uqf_policy_save(const uqf_policy* p, const char* path);
/* weights receives UQF_NUM_COLUMNS values. */
UQF_API uqf_status uqf_policy_get(const uqf_policy* p, double* weights, double* tau);
UQF_API void uqf_policy_free(uqf_policy* p);

UQF_API uqf_status uqf_evaluate(const uqf_scores* s, const uqf_policy* p, char** report_json);
/* measure: a column name, "prob", "ee" or "combined" (needs policy). */
UQF_API uqf_status uqf_sweep(const uqf_scores* s, const char* measure, const uqf_policy* p,
                             double* tau, double* score, char** curve_csv);
UQF_API uqf_status uqf_classification_metrics(size_t tn, size_t fp, size_t fn, size_t tp,
                                              double* accuracy, double* precision,
                                              double* recall, double* f1);

/* Adversarial perturbation of head inputs. method: 0 = FGSM, 1 = PGD.
 * alpha <= 0 selects eps / 3. */
UQF_API uqf_status uqf_attack(const uqf_head* h, const uqf_dataset* data, int method, double eps,
                              double alpha, size_t steps, size_t threads, uqf_dataset** out);

/* Texture statistics between two sources (PGM directory or feature CSV).
 * Any output pointer may be NULL. */
UQF_API uqf_status uqf_texture_stats(const char* real, const char* fake, size_t bins,
                                     char** report_json, char** report_csv, char** pairplot_csv);

/* End-to-end run. config_json uses the keys of the report's "config"
 * object plus "out_dir"; missing keys keep their defaults. */
UQF_API uqf_status uqf_run_pipeline(const char* config_json, char** report_json);
/* Resolved configuration with defaults filled in. */
UQF_API uqf_status uqf_resolve_config(const char* config_json, char** resolved_json);

#ifdef __cplusplus
}
#endif

#endif
