/* Shared-library C interface. All handles are opaque; every call that can
 * fail returns an fl_status and leaves a message in fl_last_error(). */
#ifndef FISHERLENS_H
#define FISHERLENS_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define FL_API __attribute__((visibility("default")))
#else
#define FL_API
#endif

typedef enum fl_status {
  FL_OK = 0,
  FL_ERR_DIMENSION = 1,
  FL_ERR_CONTRACT = 2,
  FL_ERR_DEGENERATE = 3,
  FL_ERR_FORMAT = 4,
  FL_ERR_NUMERIC = 5,
  FL_ERR_STATE = 6,
  FL_ERR_CONFIG = 7,
  FL_ERR_IO = 8,
  FL_ERR_NULL_ARGUMENT = 9,
  FL_ERR_INTERNAL = 10
} fl_status;

typedef enum fl_activation {
  FL_ACT_NONE = 0,
  FL_ACT_RELU = 1,
  FL_ACT_TANH = 2
} fl_activation;

typedef struct fl_network fl_network;
typedef struct fl_dataset fl_dataset;

typedef struct fl_fisher_stats {
  double fro_norm;
  double lambda_max;
  double trace;
  double cramer_rao; /* 1/lambda_max; +inf when the Fisher matrix is zero */
} fl_fisher_stats;

FL_API const char* fl_version(void);
FL_API const char* fl_status_name(fl_status status);
/* Message of the most recent failure on this thread ("" if none). */
FL_API const char* fl_last_error(void);
/* Human-readable summary of the most recent successful fl_cmd_* call. */
FL_API const char* fl_last_summary(void);

/* widths: hidden layer widths followed by the number of classes. */
FL_API fl_status fl_network_create(size_t input_dim, const size_t* widths, size_t num_layers,
                                   fl_activation activation, uint64_t seed, fl_network** out);
FL_API fl_status fl_network_load(const char* path, fl_network** out);
FL_API fl_status fl_network_save(const fl_network* net, const char* path);
FL_API void fl_network_free(fl_network* net);
FL_API size_t fl_network_input_dim(const fl_network* net);
FL_API size_t fl_network_num_classes(const fl_network* net);

/* probs_out holds num_classes values. */
FL_API fl_status fl_network_forward(const fl_network* net, const double* x, size_t dim,
                                    double* probs_out, size_t out_len);
/* Row-major num_classes x dim matrix of d log f_j / dx. */
FL_API fl_status fl_network_jacobian_logp(const fl_network* net, const double* x, size_t dim,
                                          double* out, size_t out_len);

/* Row-major dim x dim input-space Fisher matrix. */
FL_API fl_status fl_fisher_matrix(const fl_network* net, const double* x, size_t dim,
                                  double* out, size_t out_len);
FL_API fl_status fl_fisher_stats_at(const fl_network* net, const double* x, size_t dim,
                                    uint64_t seed, fl_fisher_stats* out);

FL_API fl_status fl_kl(const double* p, const double* q, size_t n, double* out);
FL_API fl_status fl_js(const double* p, const double* q, size_t n, double* out);
FL_API fl_status fl_cross_entropy(size_t label, const double* p, size_t n, double* out);

FL_API fl_status fl_dataset_load_idx(const char* images, const char* labels, size_t limit,
                                     fl_dataset** out);
FL_API void fl_dataset_free(fl_dataset* ds);
FL_API size_t fl_dataset_size(const fl_dataset* ds);
FL_API size_t fl_dataset_dim(const fl_dataset* ds);
FL_API size_t fl_dataset_num_classes(const fl_dataset* ds);
FL_API fl_status fl_dataset_row(const fl_dataset* ds, size_t index, double* x_out, size_t dim,
                                size_t* label_out);
/* max_pairs = 0 uses every cross-label pair. */
FL_API fl_status fl_cckl(const fl_network* net, const fl_dataset* ds, size_t max_pairs,
                         uint64_t seed, double* out);

/* Experiment commands. out_dir and seed may be NULL to keep the config's values. */
FL_API fl_status fl_cmd_train(const char* config_path, const char* out_dir, const uint64_t* seed);
FL_API fl_status fl_cmd_eval(const char* config_path, const char* out_dir, const uint64_t* seed);
FL_API fl_status fl_cmd_sweep(const char* config_path, const char* out_dir, const uint64_t* seed);
FL_API fl_status fl_cmd_plot(const char* config_path, const char* out_dir, const uint64_t* seed);
FL_API fl_status fl_cmd_synth_idx(const char* config_path, const char* out_dir,
                                  const uint64_t* seed);

#ifdef __cplusplus
}
#endif

#endif /* FISHERLENS_H */
