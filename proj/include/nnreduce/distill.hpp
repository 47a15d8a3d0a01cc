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

#ifndef NNREDUCE_DISTILL_HPP
#define NNREDUCE_DISTILL_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "nnreduce/dataset.hpp"
#include "nnreduce/heads.hpp"
#include "nnreduce/network.hpp"
#include "nnreduce/reducers.hpp"

namespace nnr {

/// Knowledge-distillation settings. The loss is
/// lambda * L_D(T = tau) + (1 - lambda) * L_S(T = 1), minimized with
/// mini-batch SGD with momentum (v = momentum * v + g; p -= lr * v).
struct DistillConfig {
  double tau = 4.0;
  double lambda = 0.5;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  bool train_head = true;
  bool train_projection = false;
  bool train_pre = false;

  void validate() const;
};

struct LossParts {
  double total = 0.0;
  double distill = 0.0;
  double student = 0.0;
};

LossParts combined_loss_parts(std::span<const double> truth_onehot, std::span<const double> teacher_logits,
                              std::span<const double> student_logits, const DistillConfig& cfg);
double combined_loss(std::span<const double> truth_onehot, std::span<const double> teacher_logits,
                     std::span<const double> student_logits, const DistillConfig& cfg);
/// Gradient of the combined loss with respect to the student logits.
std::vector<double> combined_loss_grad(std::size_t label, std::span<const double> teacher_logits,
                                       std::span<const double> student_logits, const DistillConfig& cfg);

/// Frozen-by-default pre-model, projection and input-output head.
struct ReducedNet {
  Network pre;
  ProjectionMap projection;
  Head head;

  /// Throws ConfigError unless n_0 -> n_l -> r -> n_out chains.
  void validate() const;
  std::size_t output_dim() const { return head_output_dim(head); }
};

std::vector<double> reduced_forward(const ReducedNet& net, const Tensor& x);

/// Fraction of samples whose argmax logit equals the label; ties resolve to
/// the lowest class index. Throws ConfigError when the output size differs
/// from the dataset's class count.
double evaluate(const Network& net, const Dataset& data);
double evaluate(const ReducedNet& net, const Dataset& data);
double accuracy(std::span<const std::vector<double>> logits, std::span<const std::size_t> labels);

/// Views of the parameters `cfg` marks trainable, ordered head, projection
/// basis, pre-model. The views alias `net`.
std::vector<std::span<double>> trainable_parameters(ReducedNet& net, const DistillConfig& cfg);

struct SampleGradient {
  LossParts loss;
  std::vector<double> logits;
  std::vector<std::vector<double>> parameters;  // same order as trainable_parameters
};

/// Combined loss of one sample and its gradient with respect to every
/// trainable parameter.
SampleGradient sample_gradient(const ReducedNet& net, const Tensor& x, std::span<const double> teacher_logits,
                               std::size_t label, const DistillConfig& cfg);

/// One record per epoch. Epoch 0 is measured before any update.
struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double distill_loss = 0.0;
  double student_loss = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = -1.0;  // -1 when no test set was given
};

struct TrainResult {
  ReducedNet net;
  std::vector<EpochRecord> history;
};

/// Distills `teacher` into `student` on `train`. The teacher runs in
/// inference mode only and its logits are computed once. Deterministic for
/// a fixed cfg.seed: shuffling uses the seed and gradients are summed in a
/// fixed order.
TrainResult train_reduced(ReducedNet student, const Network& teacher, const Dataset& train, const Dataset* test,
                          const DistillConfig& cfg);

}  // namespace nnr

#endif  // NNREDUCE_DISTILL_HPP
