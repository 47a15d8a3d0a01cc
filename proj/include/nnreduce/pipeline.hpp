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

#ifndef NNREDUCE_PIPELINE_HPP
#define NNREDUCE_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "nnreduce/dataset.hpp"
#include "nnreduce/distill.hpp"
#include "nnreduce/splitter.hpp"

namespace nnr {

enum class HeadKind { pce, fnn };

std::string_view to_string(HeadKind k);
HeadKind parse_head_kind(std::string_view name);

/// Objective of the FNN head fit: cross-entropy against the labels, or mean
/// squared error against the teacher logits.
enum class FnnFitLoss { labels, logits };

std::string_view to_string(FnnFitLoss l);
FnnFitLoss parse_fnn_fit_loss(std::string_view name);

struct HeadConfig {
  HeadKind kind = HeadKind::fnn;
  std::size_t pce_degree = 2;
  PceFamily family = PceFamily::hermite;
  std::size_t hidden = 20;
  std::size_t hidden_layers = 1;
  double beta = 1.0;
  // FNN heads are trained with Adam for fit_epochs before distillation.
  FnnFitLoss fit_loss = FnnFitLoss::logits;
  std::size_t fit_epochs = 500;
  double fit_learning_rate = 1e-2;
  std::size_t fit_batch_size = 32;
};

struct ReduceConfig {
  ReductionMethod method = ReductionMethod::pod;
  std::size_t rank = 0;
  bool center = false;
  // Active subspaces: stream the gradients through a Frequent Directions
  // sketch of `fd_sketch` rows (0 means 2 * rank) unless `exact_covariance`.
  bool exact_covariance = false;
  std::size_t fd_sketch = 0;
  bool normalize_gradients = false;
};

struct PipelineOptions {
  std::size_t cut = 0;
  ReduceConfig reduce;
  HeadConfig head;
  DistillConfig distill;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Storage in bytes: each part is 4 bytes per stored value plus its manifest.
struct StorageBreakdown {
  std::size_t pre_model = 0;
  std::size_t projection = 0;
  std::size_t head = 0;
  std::size_t total = 0;
  std::size_t teacher_total = 0;
  double compression_ratio = 0.0;
};

StorageBreakdown make_storage(std::size_t pre, std::size_t projection, std::size_t head, std::size_t teacher);

struct Report {
  PipelineOptions options;
  double teacher_accuracy = 0.0;
  double epoch0_accuracy = 0.0;  // after head initialization, before distillation
  double final_accuracy = 0.0;
  StorageBreakdown storage;
  double init_seconds = 0.0;
  double train_seconds = 0.0;
  std::vector<EpochRecord> history;
};

/// Everything that depends only on the teacher, the cut and the reducer.
struct PreparedReduction {
  SplitNetwork split;
  ProjectionMap projection;
  Matrix train_z;        // N x r reduced coordinates of the training set
  Matrix train_targets;  // N x n_out teacher logits
  std::vector<std::size_t> train_labels;
  double seconds = 0.0;
};

struct PipelineResult {
  ReducedNet net;
  Report report;
};

/// Snapshot matrix of `data` under `pre`, [n_l x N].
Matrix dataset_features(const Network& pre, const Dataset& data);
Matrix teacher_outputs(const Network& teacher, const Dataset& data);
ProjectionMap build_projection(const SplitNetwork& split, const Matrix& features, std::span<const std::size_t> labels,
                               const ReduceConfig& cfg);

/// Input-output map from reduced coordinates (rows of z): a PCE least
/// squares fit to the teacher logits, or an FNN initialized from `seed` and
/// trained for cfg.fit_epochs epochs on cfg.fit_loss.
Head fit_head(const Matrix& z, const Matrix& targets, std::span<const std::size_t> labels, const HeadConfig& cfg,
              std::uint64_t seed);
FnnHead train_fnn_head(FnnHead head, const Matrix& z, const Matrix& targets, std::span<const std::size_t> labels,
                       const HeadConfig& cfg, std::uint64_t seed);

PreparedReduction prepare_reduction(const Network& teacher, const Dataset& train, const PipelineOptions& opts);
PipelineResult finish_pipeline(const PreparedReduction& prepared, const Network& teacher, const Dataset& train,
                               const Dataset& test, const PipelineOptions& opts);
/// split -> features -> reduce -> head fit -> distillation -> evaluation.
/// Storage figures are computed from the in-memory artifacts.
PipelineResult run_pipeline(const Network& teacher, const Dataset& train, const Dataset& test,
                            const PipelineOptions& opts);

/// File-backed run: loads teacher and data, runs the pipeline, writes
/// pre.nsnn, projection.nsnn, head.nsnn (each with its .bin), report.json,
/// report.txt, history.jsonl and timings.json into `out_dir`. Storage is
/// recounted from the files written. On failure the files this run created
/// are removed and the error names the failing stage.
Report run_pipeline_files(const std::filesystem::path& model_path, const std::filesystem::path& train_path,
                          const std::filesystem::path& test_path, const std::filesystem::path& out_dir,
                          const PipelineOptions& opts);

/// Reduced-net artifacts in `dir`.
void save_reduced(const ReducedNet& net, const std::filesystem::path& dir);
ReducedNet load_reduced(const std::filesystem::path& dir);
StorageBreakdown storage_on_disk(const std::filesystem::path& dir, const std::filesystem::path& teacher_manifest);

/// Deterministic (timing-free) report encodings.
nlohmann::json report_json(const Report& report);
std::string report_text(const Report& report);
std::string history_jsonl(const std::vector<EpochRecord>& history);

struct SweepCell {
  std::size_t width = 0;
  std::size_t depth = 0;
  bool ok = false;
  std::string error;
  double epoch0_accuracy = 0.0;
  double final_accuracy = 0.0;
  std::size_t head_bytes = 0;  // 4 * head_param_count
};

/// FNN heads over widths x depths (hidden layers of equal width). The split,
/// features and projection are computed once and shared by every cell. A
/// failing cell is recorded and the sweep moves on.
std::vector<SweepCell> sweep_heads(const Network& teacher, const Dataset& train, const Dataset& test,
                                   const PipelineOptions& base, std::span<const std::size_t> widths,
                                   std::span<const std::size_t> depths);
std::string sweep_table(std::span<const SweepCell> cells);

/// Teacher used by the bundled benchmark: two conv blocks (conv 3x3 pad 1,
/// relu, maxpool 2) with 8 and 16 channels, flatten, linear 64, relu,
/// linear n_class. Ten layers; the conv blocks end at layer 6.
Network make_default_teacher(const Shape& input, std::size_t n_class, std::uint64_t seed);

struct ClassifierTrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct ClassifierEpoch {
  std::size_t epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = -1.0;
};

/// Cross-entropy training with mini-batch SGD and momentum.
std::vector<ClassifierEpoch> train_classifier(Network& net, const Dataset& train, const Dataset* test,
                                              const ClassifierTrainConfig& cfg);

}  // namespace nnr

#endif  // NNREDUCE_PIPELINE_HPP
