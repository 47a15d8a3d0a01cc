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

#include "nnreduce/distill.hpp"

#include <cmath>
#include <numeric>

#include "nnreduce/errors.hpp"
#include "nnreduce/linalg.hpp"
#include "nnreduce/losses.hpp"

namespace nnr {

void DistillConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("distillation temperature must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
}

LossParts combined_loss_parts(std::span<const double> truth_onehot, std::span<const double> teacher,
                              std::span<const double> student, const DistillConfig& cfg) {
  LossParts parts;
  parts.distill = kl_distill_loss(teacher, student, cfg.tau);
  parts.student = ce_student_loss(truth_onehot, student);
  parts.total = cfg.lambda * parts.distill + (1.0 - cfg.lambda) * parts.student;
  return parts;
}

double combined_loss(std::span<const double> truth_onehot, std::span<const double> teacher,
                     std::span<const double> student, const DistillConfig& cfg) {
  return combined_loss_parts(truth_onehot, teacher, student, cfg).total;
}

std::vector<double> combined_loss_grad(std::size_t label, std::span<const double> teacher,
                                       std::span<const double> student, const DistillConfig& cfg) {
  std::vector<double> g = kl_distill_grad(teacher, student, cfg.tau);
  const std::vector<double> gs = cross_entropy_grad(student, label);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = cfg.lambda * g[i] + (1.0 - cfg.lambda) * gs[i];
  return g;
}

void ReducedNet::validate() const {
  const std::size_t n_l = numel(pre.output_shape());
  if (projection.input_dim() != n_l) {
    throw ConfigError("projection expects " + std::to_string(projection.input_dim()) +
                      " features but the pre-model produces " + std::to_string(n_l));
  }
  if (head_input_dim(head) != projection.rank()) {
    throw ConfigError("head expects " + std::to_string(head_input_dim(head)) + " inputs but the projection has rank " +
                      std::to_string(projection.rank()));
  }
}

std::vector<double> reduced_forward(const ReducedNet& net, const Tensor& x) {
  const Tensor features = predict(net.pre, x);
  return head_forward(net.head, project(net.projection, features));
}

double accuracy(std::span<const std::vector<double>> logits, std::span<const std::size_t> labels) {
  if (logits.size() != labels.size()) throw ShapeError("accuracy: prediction and label counts differ");
  if (logits.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t j = 0; j < logits.size(); ++j) hits += argmax(logits[j]) == labels[j] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(logits.size());
}

namespace {

template <class Fn>
double evaluate_with(std::size_t out_dim, const Dataset& data, Fn&& fn) {
  if (out_dim != data.n_class) {
    throw ConfigError("predictor emits " + std::to_string(out_dim) + " logits but the dataset has " +
                      std::to_string(data.n_class) + " classes");
  }
  std::vector<std::vector<double>> logits;
  logits.reserve(data.size());
  for (const auto& x : data.inputs) logits.push_back(fn(x));
  return accuracy(logits, data.labels);
}

}  // namespace

double evaluate(const Network& net, const Dataset& data) {
  return evaluate_with(numel(net.output_shape()), data, [&](const Tensor& x) {
    const Tensor y = predict(net, x);
    return std::vector<double>(y.values().begin(), y.values().end());
  });
}

double evaluate(const ReducedNet& net, const Dataset& data) {
  return evaluate_with(net.output_dim(), data, [&](const Tensor& x) { return reduced_forward(net, x); });
}

std::vector<std::span<double>> trainable_parameters(ReducedNet& net, const DistillConfig& cfg) {
  std::vector<std::span<double>> out;
  if (cfg.train_head)
    for (Matrix& m : head_parameters(net.head)) out.push_back(m.values());
  if (cfg.train_projection) out.push_back(net.projection.basis.values());
  if (cfg.train_pre)
    for (Tensor& t : net.pre.parameters()) out.push_back(t.values());
  return out;
}

namespace {

// Per-sample inputs that stay fixed while the corresponding parts are frozen.
struct SampleInputs {
  const Tensor* image = nullptr;
  const std::vector<double>* features = nullptr;  // flattened pre-model output
  const std::vector<double>* z = nullptr;
};

SampleGradient gradient_of(const ReducedNet& net, const SampleInputs& in, std::span<const double> teacher,
                           std::size_t label, const DistillConfig& cfg) {
  SampleGradient out;
  Trace trace;
  std::vector<double> features_local;
  const std::vector<double>* features = in.features;
  if (cfg.train_pre || !features) {
    trace = forward(net.pre, *in.image);
    features_local.assign(trace.output().values().begin(), trace.output().values().end());
    features = &features_local;
  }
  std::vector<double> z_local;
  const std::vector<double>* z = in.z;
  if (cfg.train_pre || cfg.train_projection || !z) {
    z_local = project(net.projection, *features);
    z = &z_local;
  }

  out.logits = head_forward(net.head, *z);
  if (label >= out.logits.size()) {
    throw DataError("label " + std::to_string(label) + " outside [0, " + std::to_string(out.logits.size()) + ")");
  }
  out.loss = combined_loss_parts(one_hot(label, out.logits.size()), teacher, out.logits, cfg);
  const std::vector<double> dy = combined_loss_grad(label, teacher, out.logits, cfg);
  HeadGradient hg = head_backward(net.head, *z, dy);

  if (cfg.train_head)
    for (Matrix& m : hg.parameters) out.parameters.emplace_back(m.values().begin(), m.values().end());
  if (cfg.train_projection) {
    const ProjectionMap& p = net.projection;
    std::vector<double> gb(p.basis.size());
    for (std::size_t k = 0; k < p.rank(); ++k)
      for (std::size_t i = 0; i < p.input_dim(); ++i) {
        const double shifted = (*features)[i] - (p.centered() ? p.center[i] : 0.0);
        gb[k * p.input_dim() + i] = hg.input[k] * shifted;
      }
    out.parameters.push_back(std::move(gb));
  }
  if (cfg.train_pre) {
    const std::vector<double> dx = matvec_transposed(net.projection.basis, hg.input);
    const GradientBundle bundle = backward(net.pre, trace, Tensor(net.pre.output_shape(), dx));
    for (const auto& layer : bundle.parameters)
      for (const Tensor& t : layer) out.parameters.emplace_back(t.values().begin(), t.values().end());
  }
  return out;
}

}  // namespace

SampleGradient sample_gradient(const ReducedNet& net, const Tensor& x, std::span<const double> teacher_logits,
                               std::size_t label, const DistillConfig& cfg) {
  SampleInputs in;
  in.image = &x;
  return gradient_of(net, in, teacher_logits, label, cfg);
}

TrainResult train_reduced(ReducedNet student, const Network& teacher, const Dataset& train, const Dataset* test,
                          const DistillConfig& cfg) {
  cfg.validate();
  student.validate();
  train.validate();
  const std::size_t n_out = student.output_dim();
  if (numel(teacher.output_shape()) != n_out) {
    throw ConfigError("teacher emits " + std::to_string(numel(teacher.output_shape())) +
                      " logits but the student emits " + std::to_string(n_out));
  }
  if (train.n_class != n_out) {
    throw ConfigError("dataset has " + std::to_string(train.n_class) + " classes but the student emits " +
                      std::to_string(n_out) + " logits");
  }
  const std::size_t n = train.size();
  if (n == 0) throw DataError("training set is empty");

  std::vector<std::vector<double>> teacher_logits(n);
  for (std::size_t j = 0; j < n; ++j) {
    const Tensor y = predict(teacher, train.inputs[j]);
    teacher_logits[j].assign(y.values().begin(), y.values().end());
  }
  // Frozen parts are evaluated once.
  std::vector<std::vector<double>> features, zs;
  if (!cfg.train_pre) {
    features.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const Tensor f = predict(student.pre, train.inputs[j]);
      features[j].assign(f.values().begin(), f.values().end());
    }
    if (!cfg.train_projection) {
      zs.resize(n);
      for (std::size_t j = 0; j < n; ++j) zs[j] = project(student.projection, features[j]);
    }
  }
  auto inputs_of = [&](std::size_t j) {
    SampleInputs in;
    in.image = &train.inputs[j];
    if (!features.empty()) in.features = &features[j];
    if (!zs.empty()) in.z = &zs[j];
    return in;
  };

  std::vector<std::span<double>> params = trainable_parameters(student, cfg);
  std::vector<std::vector<double>> velocity;
  for (const auto& p : params) velocity.emplace_back(p.size(), 0.0);

  TrainResult result;
  std::vector<LossParts> sample_loss(n);
  std::vector<std::vector<double>> sample_logits(n);
  auto close_epoch = [&](std::size_t epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t j = 0; j < n; ++j) {
      rec.loss += sample_loss[j].total;
      rec.distill_loss += sample_loss[j].distill;
      rec.student_loss += sample_loss[j].student;
    }
    rec.loss /= static_cast<double>(n);
    rec.distill_loss /= static_cast<double>(n);
    rec.student_loss /= static_cast<double>(n);
    rec.train_accuracy = accuracy(sample_logits, train.labels);
    if (test) rec.test_accuracy = evaluate(student, *test);
    result.history.push_back(rec);
  };

  for (std::size_t j = 0; j < n; ++j) {
    const SampleGradient g = gradient_of(student, inputs_of(j), teacher_logits[j], train.labels[j], cfg);
    sample_loss[j] = g.loss;
    sample_logits[j] = g.logits;
  }
  close_epoch(0);

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      std::vector<std::vector<double>> grad;
      for (const auto& p : params) grad.emplace_back(p.size(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t j = order[b];
        SampleGradient g = gradient_of(student, inputs_of(j), teacher_logits[j], train.labels[j], cfg);
        if (!std::isfinite(g.loss.total)) {
          throw TrainingDivergedError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                      ", batch " + std::to_string(batch_index));
        }
        sample_loss[j] = g.loss;
        sample_logits[j] = std::move(g.logits);
        for (std::size_t k = 0; k < grad.size(); ++k)
          for (std::size_t i = 0; i < grad[k].size(); ++i) grad[k][i] += g.parameters[k][i];
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (std::size_t k = 0; k < params.size(); ++k) {
        for (std::size_t i = 0; i < params[k].size(); ++i) {
          velocity[k][i] = cfg.momentum * velocity[k][i] + grad[k][i] * inv;
          params[k][i] -= cfg.learning_rate * velocity[k][i];
        }
      }
    }
    close_epoch(epoch);
  }
  result.net = std::move(student);
  return result;
}

}  // namespace nnr
