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

#ifndef NNREDUCE_LOSSES_HPP
#define NNREDUCE_LOSSES_HPP

#include <span>
#include <vector>

namespace nnr {

/// exp(y_i / T) / sum_j exp(y_j / T), with the max logit subtracted first.
std::vector<double> softmax_t(std::span<const double> logits, double temperature);

/// T^2 * sum_j p_j(teacher, T) * log(p_j(teacher, T) / p_j(student, T)).
double kl_distill_loss(std::span<const double> teacher_logits, std::span<const double> student_logits,
                       double temperature);

/// Gradient of kl_distill_loss with respect to the student logits:
/// T * (p(student, T) - p(teacher, T)).
std::vector<double> kl_distill_grad(std::span<const double> teacher_logits, std::span<const double> student_logits,
                                    double temperature);

/// -log p_c(student, T = 1) where c is the hot entry of `truth_onehot`.
/// Throws DataError unless the vector is exactly one-hot.
double ce_student_loss(std::span<const double> truth_onehot, std::span<const double> student_logits);

/// Cross-entropy against a class index, and its gradient p - e_c.
double cross_entropy(std::span<const double> logits, std::size_t label);
std::vector<double> cross_entropy_grad(std::span<const double> logits, std::size_t label);

std::vector<double> one_hot(std::size_t label, std::size_t n_class);

/// Lowest index among the maximal entries.
std::size_t argmax(std::span<const double> values);

}  // namespace nnr

#endif  // NNREDUCE_LOSSES_HPP
