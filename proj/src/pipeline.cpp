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

#include "nnreduce/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "nnreduce/errors.hpp"
#include "nnreduce/linalg.hpp"
#include "nnreduce/log.hpp"
#include "nnreduce/losses.hpp"
#include "nnreduce/model_io.hpp"
#include "nnreduce/random.hpp"

namespace nnr {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Seeds for the independent random streams of one run.
std::uint64_t head_init_seed(std::uint64_t seed) { return seed * 0x9E3779B97F4A7C15ULL + 1; }
std::uint64_t head_fit_seed(std::uint64_t seed) { return seed * 0x9E3779B97F4A7C15ULL + 2; }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string_view to_string(HeadKind k) { return k == HeadKind::pce ? "pce" : "fnn"; }

HeadKind parse_head_kind(std::string_view name) {
  if (name == "pce") return HeadKind::pce;
  if (name == "fnn") return HeadKind::fnn;
  throw ConfigError("unknown head '" + std::string(name) + "' (expected pce or fnn)");
}

std::string_view to_string(FnnFitLoss l) { return l == FnnFitLoss::labels ? "labels" : "logits"; }

FnnFitLoss parse_fnn_fit_loss(std::string_view name) {
  if (name == "labels") return FnnFitLoss::labels;
  if (name == "logits") return FnnFitLoss::logits;
  throw ConfigError("unknown head fit target '" + std::string(name) + "' (expected labels or logits)");
}

void PipelineOptions::validate() const {
  if (cut < 1) throw ConfigError("cut layer must be given (>= 1)");
  if (reduce.rank < 1) throw ConfigError("rank must be given (>= 1)");
  if (head.kind == HeadKind::pce && head.pce_degree < 1) throw ConfigError("pce degree must be >= 1");
  if (head.kind == HeadKind::fnn && (head.hidden < 1 || head.hidden_layers < 1))
    throw ConfigError("fnn head needs at least one hidden layer of positive width");
  if (!(head.beta > 0.0)) throw ConfigError("softplus beta must be positive");
  if (head.fit_batch_size < 1) throw ConfigError("head fit batch size must be positive");
  if (!(head.fit_learning_rate >= 0.0)) throw ConfigError("head fit learning rate must be >= 0");
  distill.validate();
}

StorageBreakdown make_storage(std::size_t pre, std::size_t projection, std::size_t head, std::size_t teacher) {
  StorageBreakdown s;
  s.pre_model = pre;
  s.projection = projection;
  s.head = head;
  s.total = pre + projection + head;
  s.teacher_total = teacher;
  s.compression_ratio = s.total ? static_cast<double>(teacher) / static_cast<double>(s.total) : 0.0;
  return s;
}

Matrix dataset_features(const Network& pre, const Dataset& data) {
  return collect_features(pre, data.inputs);
}

Matrix teacher_outputs(const Network& teacher, const Dataset& data) {
  const std::size_t n_out = numel(teacher.output_shape());
  Matrix y(data.size(), n_out);
  for (std::size_t j = 0; j < data.size(); ++j) {
    const Tensor out = predict(teacher, data.inputs[j]);
    std::copy(out.values().begin(), out.values().end(), y.row(j).begin());
  }
  return y;
}

ProjectionMap build_projection(const SplitNetwork& split, const Matrix& features, std::span<const std::size_t> labels,
                               const ReduceConfig& cfg) {
  if (cfg.method == ReductionMethod::pod) return pod_basis(features, cfg.rank, cfg.center);

  Matrix grads = as_gradients(split.post, features, labels);
  if (cfg.exact_covariance) return as_basis(grads, cfg.rank, cfg.normalize_gradients);

  const std::size_t ell = cfg.fd_sketch ? cfg.fd_sketch : 2 * cfg.rank;
  if (ell < cfg.rank) throw ConfigError("sketch size must be at least the rank");
  FdSketch sketch(ell, grads.cols());
  for (std::size_t i = 0; i < grads.rows(); ++i) {
    auto row = grads.row(i);
    if (cfg.normalize_gradients) {
      const double nr = norm2(row);
      if (nr > 0.0)
        for (double& v : row) v /= nr;
    }
    sketch.update(row);
  }
  return sketch.finalize(cfg.rank);
}

FnnHead train_fnn_head(FnnHead head, const Matrix& z, const Matrix& targets, std::span<const std::size_t> labels,
                       const HeadConfig& cfg, std::uint64_t seed) {
  const std::size_t n = z.rows();
  const bool use_labels = cfg.fit_loss == FnnFitLoss::labels;
  if (use_labels ? labels.size() != n : targets.rows() != n)
    throw ShapeError("head fit: input and target counts differ");
  if (n == 0 || cfg.fit_epochs == 0) return head;

  Head h = std::move(head);
  auto params = head_parameters(h);
  std::vector<std::vector<double>> m(params.size()), v(params.size()), g(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    m[k].assign(params[k].get().values().size(), 0.0);
    v[k] = m[k];
    g[k] = m[k];
  }
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::size_t step = 0;
  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.fit_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < n; start += cfg.fit_batch_size) {
      const std::size_t stop = std::min(n, start + cfg.fit_batch_size);
      const double inv_b = 1.0 / static_cast<double>(stop - start);
      for (auto& gk : g) std::fill(gk.begin(), gk.end(), 0.0);
      for (std::size_t s = start; s < stop; ++s) {
        const std::size_t j = order[s];
        std::vector<double> out = head_forward(h, z.row(j));
        if (use_labels) {
          if (labels[j] >= out.size()) throw DataError("head fit: label out of range at sample " + std::to_string(j));
          out = cross_entropy_grad(out, labels[j]);
          for (double& v : out) v *= inv_b;
        } else {
          for (std::size_t o = 0; o < out.size(); ++o) out[o] = (out[o] - targets(j, o)) * inv_b;
        }
        const HeadGradient hg = head_backward(h, z.row(j), out);
        for (std::size_t k = 0; k < g.size(); ++k) {
          const auto src = hg.parameters[k].values();
          for (std::size_t i = 0; i < src.size(); ++i) g[k][i] += src[i];
        }
      }
      ++step;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto w = params[k].get().values();
        for (std::size_t i = 0; i < w.size(); ++i) {
          m[k][i] = b1 * m[k][i] + (1.0 - b1) * g[k][i];
          v[k][i] = b2 * v[k][i] + (1.0 - b2) * g[k][i] * g[k][i];
          w[i] -= cfg.fit_learning_rate * (m[k][i] / c1) / (std::sqrt(v[k][i] / c2) + eps);
        }
      }
    }
    for (const auto& p : params) {
      if (!p.get().all_finite())
        throw TrainingDivergedError("head fit diverged at epoch " + std::to_string(epoch + 1));
    }
  }
  return std::get<FnnHead>(std::move(h));
}

Head fit_head(const Matrix& z, const Matrix& targets, std::span<const std::size_t> labels, const HeadConfig& cfg,
              std::uint64_t seed) {
  if (cfg.kind == HeadKind::pce) return pce_fit(z, targets, cfg.pce_degree, cfg.family);
  Rng rng(head_init_seed(seed));
  FnnHead head = make_fnn_head(z.cols(), cfg.hidden, targets.cols(), cfg.hidden_layers, cfg.beta, rng);
  return train_fnn_head(std::move(head), z, targets, labels, cfg, head_fit_seed(seed));
}

PreparedReduction prepare_reduction(const Network& teacher, const Dataset& train, const PipelineOptions& opts) {
  opts.validate();
  train.validate();
  if (train.sample_shape() != teacher.input_shape()) {
    throw ConfigError("dataset samples have shape " + to_string(train.sample_shape()) + " but the model expects " +
                      to_string(teacher.input_shape()));
  }
  const auto t0 = Clock::now();
  PreparedReduction p;
  p.split = split_network(teacher, opts.cut);
  const Matrix features = dataset_features(p.split.pre, train);
  p.projection = build_projection(p.split, features, train.labels, opts.reduce);
  p.train_z = Matrix(train.size(), p.projection.rank());
  for (std::size_t j = 0; j < train.size(); ++j) {
    const std::vector<double> zj = project(p.projection, std::span<const double>(features.column(j)));
    std::copy(zj.begin(), zj.end(), p.train_z.row(j).begin());
  }
  p.train_targets = teacher_outputs(teacher, train);
  p.train_labels = train.labels;
  p.seconds = seconds_since(t0);
  return p;
}

PipelineResult finish_pipeline(const PreparedReduction& prepared, const Network& teacher, const Dataset& train,
                               const Dataset& test, const PipelineOptions& opts) {
  opts.validate();
  test.validate();
  const auto t0 = Clock::now();
  ReducedNet net{prepared.split.pre, prepared.projection,
                 fit_head(prepared.train_z, prepared.train_targets, prepared.train_labels, opts.head, opts.seed)};
  net.validate();

  PipelineResult result;
  Report& rep = result.report;
  rep.options = opts;
  rep.init_seconds = prepared.seconds + seconds_since(t0);
  rep.teacher_accuracy = evaluate(teacher, test);
  rep.epoch0_accuracy = evaluate(net, test);

  const auto t1 = Clock::now();
  TrainResult trained = train_reduced(std::move(net), teacher, train, &test, opts.distill);
  rep.train_seconds = seconds_since(t1);
  rep.history = std::move(trained.history);
  result.net = std::move(trained.net);
  rep.final_accuracy = evaluate(result.net, test);
  rep.storage = make_storage(storage_bytes(result.net.pre), storage_bytes(result.net.projection),
                             storage_bytes(result.net.head), storage_bytes(teacher));
  return result;
}

PipelineResult run_pipeline(const Network& teacher, const Dataset& train, const Dataset& test,
                            const PipelineOptions& opts) {
  return finish_pipeline(prepare_reduction(teacher, train, opts), teacher, train, test, opts);
}

void save_reduced(const ReducedNet& net, const fs::path& dir) {
  fs::create_directories(dir);
  save_model(net.pre, dir / "pre.nsnn");
  save_projection(net.projection, dir / "projection.nsnn");
  save_head(net.head, dir / "head.nsnn");
}

ReducedNet load_reduced(const fs::path& dir) {
  ReducedNet net{load_model(dir / "pre.nsnn"), load_projection(dir / "projection.nsnn"), load_head(dir / "head.nsnn")};
  net.validate();
  return net;
}

StorageBreakdown storage_on_disk(const fs::path& dir, const fs::path& teacher_manifest) {
  return make_storage(artifact_storage_on_disk(dir / "pre.nsnn"), artifact_storage_on_disk(dir / "projection.nsnn"),
                      artifact_storage_on_disk(dir / "head.nsnn"), artifact_storage_on_disk(teacher_manifest));
}

nlohmann::json report_json(const Report& r) {
  using nlohmann::json;
  const PipelineOptions& o = r.options;
  json head = {{"kind", to_string(o.head.kind)}};
  if (o.head.kind == HeadKind::pce) {
    head["degree"] = o.head.pce_degree;
    head["family"] = to_string(o.head.family);
  } else {
    head["hidden"] = o.head.hidden;
    head["hidden_layers"] = o.head.hidden_layers;
    head["beta"] = o.head.beta;
    head["fit_loss"] = to_string(o.head.fit_loss);
    head["fit_epochs"] = o.head.fit_epochs;
    head["fit_learning_rate"] = o.head.fit_learning_rate;
  }
  json reduce = {{"method", to_string(o.reduce.method)}, {"rank", o.reduce.rank}, {"center", o.reduce.center}};
  if (o.reduce.method == ReductionMethod::as) {
    reduce["exact_covariance"] = o.reduce.exact_covariance;
    reduce["sketch"] = o.reduce.exact_covariance ? 0 : (o.reduce.fd_sketch ? o.reduce.fd_sketch : 2 * o.reduce.rank);
    reduce["normalize_gradients"] = o.reduce.normalize_gradients;
  }
  json distill = {{"tau", o.distill.tau},
                  {"lambda", o.distill.lambda},
                  {"epochs", o.distill.epochs},
                  {"batch_size", o.distill.batch_size},
                  {"learning_rate", o.distill.learning_rate},
                  {"momentum", o.distill.momentum},
                  {"train_head", o.distill.train_head},
                  {"train_projection", o.distill.train_projection},
                  {"train_pre", o.distill.train_pre}};
  json history = json::array();
  for (const EpochRecord& e : r.history) {
    history.push_back({{"epoch", e.epoch},
                       {"loss", e.loss},
                       {"distill_loss", e.distill_loss},
                       {"student_loss", e.student_loss},
                       {"train_accuracy", e.train_accuracy},
                       {"test_accuracy", e.test_accuracy}});
  }
  const StorageBreakdown& s = r.storage;
  return json{{"cut_layer", o.cut},
              {"seed", o.seed},
              {"reduce", reduce},
              {"head", head},
              {"distill", distill},
              {"accuracy",
               {{"teacher", r.teacher_accuracy}, {"epoch0", r.epoch0_accuracy}, {"final", r.final_accuracy}}},
              {"storage_bytes",
               {{"pre_model", s.pre_model},
                {"projection", s.projection},
                {"head", s.head},
                {"total", s.total},
                {"teacher", s.teacher_total}}},
              {"compression_ratio", s.compression_ratio},
              {"history", history}};
}

std::string report_text(const Report& r) {
  const PipelineOptions& o = r.options;
  std::string head = std::string(to_string(o.head.kind));
  if (o.head.kind == HeadKind::pce)
    head += " (degree " + std::to_string(o.head.pce_degree) + ", " + std::string(to_string(o.head.family)) + ")";
  else
    head += " (" + std::to_string(o.head.hidden_layers) + " x " + std::to_string(o.head.hidden) + ")";
  std::string out;
  out += "reducer         " + std::string(to_string(o.reduce.method)) + ", r = " + std::to_string(o.reduce.rank) +
         ", cut after layer " + std::to_string(o.cut) + "\n";
  out += "head            " + head + "\n";
  out += "teacher acc     " + fmt("%.4f", r.teacher_accuracy) + "\n";
  out += "epoch-0 acc     " + fmt("%.4f", r.epoch0_accuracy) + "\n";
  out += "final acc       " + fmt("%.4f", r.final_accuracy) + "\n";
  const StorageBreakdown& s = r.storage;
  out += "storage (bytes)\n";
  out += "  pre-model     " + std::to_string(s.pre_model) + "\n";
  out += "  projection    " + std::to_string(s.projection) + "\n";
  out += "  head          " + std::to_string(s.head) + "\n";
  out += "  total         " + std::to_string(s.total) + "\n";
  out += "  teacher       " + std::to_string(s.teacher_total) + "\n";
  out += "compression     " + fmt("%.3f", s.compression_ratio) + "\n";
  out += "epoch  loss        distill     student     train_acc  test_acc\n";
  for (const EpochRecord& e : r.history) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%5zu  %-10.6f  %-10.6f  %-10.6f  %-9.4f  %.4f\n", e.epoch, e.loss, e.distill_loss,
                  e.student_loss, e.train_accuracy, e.test_accuracy);
    out += buf;
  }
  return out;
}

std::string history_jsonl(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const EpochRecord& e : history) {
    nlohmann::json line = {{"epoch", e.epoch},
                           {"loss", e.loss},
                           {"distill_loss", e.distill_loss},
                           {"student_loss", e.student_loss},
                           {"train_accuracy", e.train_accuracy},
                           {"test_accuracy", e.test_accuracy}};
    out += line.dump() + "\n";
  }
  return out;
}

namespace {

template <class Fn>
auto run_stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("stage '") + name + "' failed: " + e.what());
  } catch (const fs::filesystem_error& e) {
    throw IoError(std::string("stage '") + name + "' failed: " + e.what());
  }
}

}  // namespace

Report run_pipeline_files(const fs::path& model_path, const fs::path& train_path, const fs::path& test_path,
                          const fs::path& out_dir, const PipelineOptions& opts) {
  run_stage("config", [&] {
    opts.validate();
    return 0;
  });
  const Network teacher = run_stage("load", [&] { return load_model(model_path); });
  const Dataset train = run_stage("load", [&] { return load_dataset(train_path); });
  const Dataset test = run_stage("load", [&] { return load_dataset(test_path); });

  PreparedReduction prepared = run_stage("reduce", [&] { return prepare_reduction(teacher, train, opts); });
  PipelineResult result =
      run_stage("distill", [&] { return finish_pipeline(prepared, teacher, train, test, opts); });

  const std::vector<std::string> names = {"pre.nsnn",    "pre.nsnn.bin", "projection.nsnn", "projection.nsnn.bin",
                                          "head.nsnn",   "head.nsnn.bin", "report.json",    "report.txt",
                                          "history.jsonl", "timings.json"};
  std::vector<fs::path> created;
  for (const auto& n : names)
    if (!fs::exists(out_dir / n)) created.push_back(out_dir / n);
  try {
    run_stage("write", [&] {
      fs::create_directories(out_dir);
      save_reduced(result.net, out_dir);
      result.report.storage = storage_on_disk(out_dir, model_path);
      write_file_atomic(out_dir / "report.json", report_json(result.report).dump(2) + "\n");
      write_file_atomic(out_dir / "report.txt", report_text(result.report));
      write_file_atomic(out_dir / "history.jsonl", history_jsonl(result.report.history));
      const nlohmann::json timings = {{"init_seconds", result.report.init_seconds},
                                      {"train_seconds", result.report.train_seconds}};
      write_file_atomic(out_dir / "timings.json", timings.dump(2) + "\n");
      return 0;
    });
  } catch (...) {
    std::error_code ec;
    for (const auto& p : created) fs::remove(p, ec);
    throw;
  }
  return result.report;
}

std::vector<SweepCell> sweep_heads(const Network& teacher, const Dataset& train, const Dataset& test,
                                   const PipelineOptions& base, std::span<const std::size_t> widths,
                                   std::span<const std::size_t> depths) {
  if (widths.empty() || depths.empty()) throw ConfigError("sweep needs at least one width and one depth");
  PipelineOptions first = base;
  first.head.kind = HeadKind::fnn;
  // The shared stages do not depend on the head; a bad cell must not stop them.
  PipelineOptions shared = first;
  shared.head = HeadConfig{};
  const PreparedReduction prepared = prepare_reduction(teacher, train, shared);

  std::vector<SweepCell> cells;
  for (std::size_t depth : depths) {
    for (std::size_t width : widths) {
      SweepCell cell;
      cell.width = width;
      cell.depth = depth;
      PipelineOptions opts = first;
      opts.head.hidden = width;
      opts.head.hidden_layers = depth;
      try {
        const PipelineResult res = finish_pipeline(prepared, teacher, train, test, opts);
        cell.ok = true;
        cell.epoch0_accuracy = res.report.epoch0_accuracy;
        cell.final_accuracy = res.report.final_accuracy;
        cell.head_bytes = 4 * head_param_count(res.net.head);
      } catch (const Error& e) {
        cell.error = e.what();
        warn("sweep cell width " + std::to_string(width) + " depth " + std::to_string(depth) + " failed: " + e.what());
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::string sweep_table(std::span<const SweepCell> cells) {
  std::string out = "width\tdepth\tstatus\tepoch0_acc\tfinal_acc\thead_bytes\n";
  for (const SweepCell& c : cells) {
    out += std::to_string(c.width) + "\t" + std::to_string(c.depth) + "\t";
    if (c.ok) {
      out += "ok\t" + fmt("%.4f", c.epoch0_accuracy) + "\t" + fmt("%.4f", c.final_accuracy) + "\t" +
             std::to_string(c.head_bytes) + "\n";
    } else {
      out += "failed\t-\t-\t-\n";
    }
  }
  return out;
}

Network make_default_teacher(const Shape& input, std::size_t n_class, std::uint64_t seed) {
  if (input.size() != 3) throw ShapeError("default teacher expects C x H x W input, got " + to_string(input));
  if (input[1] % 4 != 0 || input[2] % 4 != 0)
    throw ShapeError("default teacher needs height and width divisible by 4, got " + to_string(input));
  if (n_class < 2) throw ConfigError("need at least two classes");
  Rng rng(seed);
  const std::size_t flat = 16 * (input[1] / 4) * (input[2] / 4);
  std::vector<Layer> layers;
  layers.emplace_back(make_conv2d(input[0], 8, 3, 1, 1, rng));
  layers.emplace_back(Relu{});
  layers.emplace_back(MaxPool2d{2, 2});
  layers.emplace_back(make_conv2d(8, 16, 3, 1, 1, rng));
  layers.emplace_back(Relu{});
  layers.emplace_back(MaxPool2d{2, 2});
  layers.emplace_back(Flatten{});
  layers.emplace_back(make_linear(flat, 64, rng));
  layers.emplace_back(Relu{});
  layers.emplace_back(make_linear(64, n_class, rng));
  return Network(input, std::move(layers));
}

std::vector<ClassifierEpoch> train_classifier(Network& net, const Dataset& train, const Dataset* test,
                                              const ClassifierTrainConfig& cfg) {
  train.validate();
  if (train.sample_shape() != net.input_shape())
    throw ConfigError("dataset samples have shape " + to_string(train.sample_shape()) + " but the model expects " +
                      to_string(net.input_shape()));
  if (numel(net.output_shape()) != train.n_class)
    throw ConfigError("model has " + std::to_string(numel(net.output_shape())) + " outputs for " +
                      std::to_string(train.n_class) + " classes");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be positive");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");

  auto params = net.parameters();
  std::vector<std::vector<double>> velocity(params.size()), grad(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    velocity[k].assign(params[k].get().values().size(), 0.0);
    grad[k] = velocity[k];
  }
  Rng rng(cfg.seed);
  const std::size_t n = train.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<ClassifierEpoch> history;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t start = 0, batch = 0; start < n; start += cfg.batch_size, ++batch) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const double inv_b = 1.0 / static_cast<double>(stop - start);
      for (auto& g : grad) std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t s = start; s < stop; ++s) {
        const std::size_t j = order[s];
        const Trace trace = forward(net, train.inputs[j]);
        const auto logits = trace.output().values();
        const double loss = cross_entropy(logits, train.labels[j]);
        if (!std::isfinite(loss))
          throw TrainingDivergedError("teacher training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                      std::to_string(batch));
        loss_sum += loss;
        hits += argmax(logits) == train.labels[j] ? 1 : 0;
        std::vector<double> g = cross_entropy_grad(logits, train.labels[j]);
        for (double& v : g) v *= inv_b;
        const GradientBundle bundle = backward(net, trace, Tensor(net.output_shape(), g));
        std::size_t k = 0;
        for (const auto& layer_grads : bundle.parameters) {
          for (const Tensor& t : layer_grads) {
            const auto src = t.values();
            for (std::size_t i = 0; i < src.size(); ++i) grad[k][i] += src[i];
            ++k;
          }
        }
      }
      for (std::size_t k = 0; k < params.size(); ++k) {
        auto w = params[k].get().values();
        for (std::size_t i = 0; i < w.size(); ++i) {
          velocity[k][i] = cfg.momentum * velocity[k][i] - cfg.learning_rate * grad[k][i];
          w[i] += velocity[k][i];
        }
      }
    }
    ClassifierEpoch rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(n);
    rec.train_accuracy = static_cast<double>(hits) / static_cast<double>(n);
    if (test) rec.test_accuracy = evaluate(net, *test);
    history.push_back(rec);
  }
  return history;
}

}  // namespace nnr
