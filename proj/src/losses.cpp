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

#include "nnreduce/losses.hpp"

#include <algorithm>
#include <cmath>

#include "nnreduce/errors.hpp"

namespace nnr {

std::vector<double> softmax_t(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive, got " + std::to_string(temperature));
  if (logits.empty()) throw ShapeError("softmax of an empty vector");
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp((logits[i] - top) / temperature);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

namespace {

void require_same_length(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": logits of length " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  }
}

// log softmax without forming p, for the log-ratio in the KL term.
std::vector<double> log_softmax_t(std::span<const double> logits, double temperature) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double y : logits) sum += std::exp((y - top) / temperature);
  const double lse = std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (logits[i] - top) / temperature - lse;
  return out;
}

}  // namespace

double kl_distill_loss(std::span<const double> teacher, std::span<const double> student, double temperature) {
  require_same_length(teacher, student, "kl_distill_loss");
  const std::vector<double> pt = softmax_t(teacher, temperature);
  const std::vector<double> lt = log_softmax_t(teacher, temperature);
  const std::vector<double> ls = log_softmax_t(student, temperature);
  double kl = 0.0;
  for (std::size_t j = 0; j < pt.size(); ++j) {
    if (pt[j] > 0.0) kl += pt[j] * (lt[j] - ls[j]);
  }
  return temperature * temperature * std::max(kl, 0.0);
}

std::vector<double> kl_distill_grad(std::span<const double> teacher, std::span<const double> student,
                                    double temperature) {
  require_same_length(teacher, student, "kl_distill_grad");
  const std::vector<double> pt = softmax_t(teacher, temperature);
  std::vector<double> g = softmax_t(student, temperature);
  for (std::size_t j = 0; j < g.size(); ++j) g[j] = temperature * (g[j] - pt[j]);
  return g;
}

double ce_student_loss(std::span<const double> truth_onehot, std::span<const double> student) {
  require_same_length(truth_onehot, student, "ce_student_loss");
  std::size_t hot = truth_onehot.size();
  for (std::size_t i = 0; i < truth_onehot.size(); ++i) {
    const double v = truth_onehot[i];
    if (v == 1.0 && hot == truth_onehot.size()) {
      hot = i;
    } else if (v != 0.0) {
      throw DataError("ground-truth vector is not one-hot (entry " + std::to_string(i) + ")");
    }
  }
  if (hot == truth_onehot.size()) throw DataError("ground-truth vector has no hot entry");
  return cross_entropy(student, hot);
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw DataError("label " + std::to_string(label) + " outside [0, " + std::to_string(logits.size()) + ")");
  }
  return -log_softmax_t(logits, 1.0)[label];
}

std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw DataError("label " + std::to_string(label) + " outside [0, " + std::to_string(logits.size()) + ")");
  }
  std::vector<double> g = softmax_t(logits, 1.0);
  g[label] -= 1.0;
  return g;
}

std::vector<double> one_hot(std::size_t label, std::size_t n_class) {
  std::vector<double> v(n_class, 0.0);
  v.at(label) = 1.0;
  return v;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

}  // namespace nnr
