/*
 * Copyright 2026 The nnreduce Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to nnreduce. Every handle is opaque and owned by the caller
 * once returned; release it with the matching *_free function. Functions
 * return an nnr_status; on failure nnr_last_error() describes the problem
 * for the calling thread. */

#ifndef NNREDUCE_NNREDUCE_H
#define NNREDUCE_NNREDUCE_H

#include <stddef.h>
#include <stdint.h>

#if defined(NNR_BUILDING_LIBRARY)
#define NNR_API __attribute__((visibility("default")))
#else
#define NNR_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nnr_status {
  NNR_OK = 0,
  NNR_ERR_INTERNAL = 1,
  NNR_ERR_CONFIG = 2, /* shape, contract, parameter or configuration errors */
  NNR_ERR_DATA = 3,   /* unreadable, malformed or invalid input files */
  NNR_ERR_NUMERIC = 4 /* numerical failure or diverged training */
} nnr_status;

typedef enum nnr_reducer { NNR_REDUCER_POD = 0, NNR_REDUCER_AS = 1 } nnr_reducer;
typedef enum nnr_head_kind { NNR_HEAD_PCE = 0, NNR_HEAD_FNN = 1 } nnr_head_kind;
typedef enum nnr_pce_family { NNR_PCE_HERMITE = 0, NNR_PCE_LEGENDRE = 1 } nnr_pce_family;
typedef enum nnr_fit_loss { NNR_FIT_LABELS = 0, NNR_FIT_LOGITS = 1 } nnr_fit_loss;

typedef struct nnr_model nnr_model;
typedef struct nnr_dataset nnr_dataset;
typedef struct nnr_projection nnr_projection;
typedef struct nnr_head nnr_head;
typedef struct nnr_reduced nnr_reduced;

/* Settings shared by the reduction stages. Fill with nnr_options_init. */
typedef struct nnr_options {
  size_t cut;  /* layers kept in the pre-model, 1..L-1 */
  size_t rank; /* reduced dimension r */
  nnr_reducer reducer;
  int center;
  int exact_covariance; /* active subspaces: exact covariance instead of a sketch */
  size_t fd_sketch;     /* sketch rows, 0 for 2 * rank */
  int normalize_gradients;

  nnr_head_kind head;
  size_t pce_degree;
  nnr_pce_family pce_family;
  size_t hidden;
  size_t hidden_layers;
  double beta;
  nnr_fit_loss head_fit_loss; /* FNN: labels (cross-entropy) or teacher logits (MSE) */
  size_t head_fit_epochs;
  double head_fit_learning_rate;
  size_t head_fit_batch_size;

  double tau;
  double lambda;
  size_t epochs;
  size_t batch_size;
  double learning_rate;
  double momentum;
  int train_head;
  int train_projection;
  int train_pre;

  uint64_t seed;
} nnr_options;

typedef struct nnr_storage {
  size_t pre_model;
  size_t projection;
  size_t head;
  size_t total;
  size_t teacher;
  double compression_ratio;
} nnr_storage;

typedef struct nnr_summary {
  double teacher_accuracy;
  double epoch0_accuracy;
  double final_accuracy;
  nnr_storage storage;
} nnr_summary;

typedef struct nnr_synthetic_spec {
  uint64_t seed;
  size_t n_class;
  size_t n_per_class;
  size_t channels;
  size_t height;
  size_t width;
  double noise;
} nnr_synthetic_spec;

typedef struct nnr_teacher_options {
  size_t epochs;
  size_t batch_size;
  double learning_rate;
  double momentum;
  uint64_t seed;
} nnr_teacher_options;

NNR_API const char* nnr_version(void);
NNR_API const char* nnr_last_error(void);
NNR_API const char* nnr_status_string(nnr_status status);

NNR_API void nnr_options_init(nnr_options* opts);
NNR_API void nnr_synthetic_spec_init(nnr_synthetic_spec* spec);
NNR_API void nnr_teacher_options_init(nnr_teacher_options* opts);
NNR_API nnr_status nnr_parse_reducer(const char* name, nnr_reducer* out);
NNR_API nnr_status nnr_parse_head(const char* name, nnr_head_kind* out);
NNR_API nnr_status nnr_parse_fit_loss(const char* name, nnr_fit_loss* out);
NNR_API nnr_status nnr_parse_pce_family(const char* name, nnr_pce_family* out);

/* Models */
NNR_API nnr_status nnr_model_load(const char* path, nnr_model** out);
NNR_API nnr_status nnr_model_save(const nnr_model* model, const char* path);
NNR_API void nnr_model_free(nnr_model* model);
NNR_API nnr_status nnr_model_info(const nnr_model* model, size_t* layer_count, size_t* parameter_count,
                                  size_t* storage_bytes);
NNR_API nnr_status nnr_model_split(const nnr_model* model, size_t cut, nnr_model** pre, nnr_model** post);
NNR_API nnr_status nnr_model_eval(const nnr_model* model, const nnr_dataset* data, double* accuracy);
NNR_API nnr_status nnr_default_teacher(const nnr_dataset* train, uint64_t seed, nnr_model** out);
NNR_API nnr_status nnr_train_teacher(nnr_model* model, const nnr_dataset* train, const nnr_dataset* test,
                                     const nnr_teacher_options* opts, double* test_accuracy);

/* Datasets */
NNR_API nnr_status nnr_dataset_load(const char* path, nnr_dataset** out);
NNR_API nnr_status nnr_dataset_save(const nnr_dataset* data, const char* path);
NNR_API void nnr_dataset_free(nnr_dataset* data);
NNR_API nnr_status nnr_dataset_info(const nnr_dataset* data, size_t* size, size_t* n_class);
NNR_API nnr_status nnr_gen_synthetic(const nnr_synthetic_spec* spec, nnr_dataset** train, nnr_dataset** test);
/* Flattened pre-model outputs of every sample, labels preserved. */
NNR_API nnr_status nnr_features(const nnr_model* pre, const nnr_dataset* data, nnr_dataset** out);

/* Projections */
NNR_API nnr_status nnr_reduce(const nnr_model* teacher, const nnr_dataset* train, const nnr_options* opts,
                              nnr_projection** out);
NNR_API nnr_status nnr_projection_load(const char* path, nnr_projection** out);
NNR_API nnr_status nnr_projection_save(const nnr_projection* proj, const char* path);
NNR_API void nnr_projection_free(nnr_projection* proj);
NNR_API nnr_status nnr_projection_info(const nnr_projection* proj, size_t* rank, size_t* input_dim,
                                       size_t* storage_bytes);

/* Heads */
NNR_API nnr_status nnr_fit_head(const nnr_model* teacher, const nnr_projection* proj, const nnr_dataset* train,
                                const nnr_options* opts, nnr_head** out);
NNR_API nnr_status nnr_head_load(const char* path, nnr_head** out);
NNR_API nnr_status nnr_head_save(const nnr_head* head, const char* path);
NNR_API void nnr_head_free(nnr_head* head);
NNR_API nnr_status nnr_head_info(const nnr_head* head, size_t* parameter_count, size_t* storage_bytes);

/* Reduced networks: pre-model, projection and head stored side by side in
 * a directory as pre.nsnn, projection.nsnn and head.nsnn. */
NNR_API nnr_status nnr_reduced_assemble(const nnr_model* pre, const nnr_projection* proj, const nnr_head* head,
                                        nnr_reduced** out);
NNR_API nnr_status nnr_reduced_load(const char* dir, nnr_reduced** out);
NNR_API nnr_status nnr_reduced_save(const nnr_reduced* net, const char* dir);
NNR_API void nnr_reduced_free(nnr_reduced* net);
NNR_API nnr_status nnr_reduced_eval(const nnr_reduced* net, const nnr_dataset* data, double* accuracy);
NNR_API nnr_status nnr_reduced_storage(const nnr_reduced* net, const nnr_model* teacher, nnr_storage* out);
/* Distillation from `teacher`. `history_path` (may be NULL) receives one
 * JSON line per epoch, epoch 0 included. */
NNR_API nnr_status nnr_distill(const nnr_reduced* student, const nnr_model* teacher, const nnr_dataset* train,
                               const nnr_dataset* test, const nnr_options* opts, const char* history_path,
                               nnr_reduced** out);

/* Whole pipeline from files; see the README for the files written. */
NNR_API nnr_status nnr_pipeline_run(const char* model_path, const char* train_path, const char* test_path,
                                    const char* out_dir, const nnr_options* opts, nnr_summary* summary);
/* FNN head grid; writes a tab-separated table to `table_path`. */
NNR_API nnr_status nnr_sweep_heads(const char* model_path, const char* train_path, const char* test_path,
                                   const nnr_options* opts, const size_t* widths, size_t n_widths,
                                   const size_t* depths, size_t n_depths, const char* table_path);

#ifdef __cplusplus
}
#endif

#endif /* NNREDUCE_NNREDUCE_H */
