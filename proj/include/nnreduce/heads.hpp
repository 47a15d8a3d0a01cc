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

#ifndef NNREDUCE_HEADS_HPP
#define NNREDUCE_HEADS_HPP

#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"
#include "nnreduce/random.hpp"
#include "nnreduce/tensor.hpp"

namespace nnr {

class BlobWriter;
class BlobReader;

using MultiIndex = std::vector<unsigned>;

/// All multi-indices of length r with total degree <= p, in graded
/// lexicographic order: by total degree, then lexicographically descending,
/// e.g. r=2, p=1 gives (0,0), (1,0), (0,1).
std::vector<MultiIndex> multi_indices(std::size_t r, std::size_t p);

std::size_t binomial(std::size_t n, std::size_t k);

enum class PceFamily { hermite, legendre };

std::string_view to_string(PceFamily f);
PceFamily parse_pce_family(std::string_view name);

/// Univariate polynomial of degree k: probabilists' Hermite He_k or Legendre P_k.
double univariate(PceFamily family, unsigned k, double x);
double univariate_derivative(PceFamily family, unsigned k, double x);

/// Polynomial chaos expansion y = sum_a c_a phi_a(u), u_i = (z_i - mean_i) / scale_i.
/// Hermite models standardize with the sample mean and standard deviation;
/// Legendre models map the sample range onto [-1, 1].
struct PceModel {
  std::vector<MultiIndex> indices;
  Matrix coefficients;  // n_terms x n_out
  PceFamily family = PceFamily::hermite;
  std::size_t degree = 0;
  std::vector<double> mean;
  std::vector<double> scale;

  std::size_t input_dim() const noexcept { return mean.size(); }
  std::size_t output_dim() const noexcept { return coefficients.cols(); }
  std::size_t term_count() const noexcept { return indices.size(); }
};

/// Coefficient-free model: indices and standardization only, zero coefficients.
PceModel make_pce_model(std::size_t r, std::size_t p, std::size_t n_out, PceFamily family,
                        std::vector<double> mean, std::vector<double> scale);

std::vector<double> pce_basis_eval(const PceModel& model, std::span<const double> z);

/// d phi_a / d z_i, shape n_terms x r.
Matrix pce_basis_jacobian(const PceModel& model, std::span<const double> z);

/// Least-squares fit of Y [N x n_out] on the basis evaluated at Z [N x r].
/// When N < n_terms a warning is emitted and lstsq takes its ridge path.
PceModel pce_fit(const Matrix& z, const Matrix& y, std::size_t p, PceFamily family);

std::vector<double> pce_predict(const PceModel& model, std::span<const double> z);

/// Feed-forward head: hidden layers h_k = softplus_beta(W_k h_{k-1}) starting
/// from h_0 = z, then a linear read-out. No bias terms.
struct FnnHead {
  std::vector<Matrix> weights;  // weights[0]: n1 x r, ..., weights.back(): n_out x n_last
  double beta = 1.0;

  std::size_t input_dim() const { return weights.front().cols(); }
  std::size_t output_dim() const { return weights.back().rows(); }
  std::size_t hidden_width() const { return weights.front().rows(); }
  std::size_t hidden_layers() const { return weights.size() - 1; }
};

FnnHead make_fnn_head(std::size_t r, std::size_t hidden, std::size_t n_out, std::size_t hidden_layers, double beta,
                      Rng& rng);
std::vector<double> fnn_forward(const FnnHead& head, std::span<const double> z);

using Head = std::variant<PceModel, FnnHead>;

/// Gradients of a head: one matrix per trainable tensor (PCE: coefficients;
/// FNN: each weight matrix) plus the gradient with respect to z.
struct HeadGradient {
  std::vector<Matrix> parameters;
  std::vector<double> input;
};

std::vector<double> head_forward(const Head& head, std::span<const double> z);
HeadGradient head_backward(const Head& head, std::span<const double> z, std::span<const double> grad_out);
std::vector<std::reference_wrapper<Matrix>> head_parameters(Head& head);
std::size_t head_input_dim(const Head& head);
std::size_t head_output_dim(const Head& head);
std::string_view head_kind(const Head& head);

/// FNN: sum of weight-matrix sizes. PCE: n_terms * n_out + 2r (coefficients
/// plus standardization).
std::size_t head_param_count(const Head& head);

nlohmann::json head_manifest(const Head& head, BlobWriter* blob);
Head head_from_manifest(const nlohmann::json& manifest, const BlobReader& blob);
void save_head(const Head& head, const std::filesystem::path& path);
Head load_head(const std::filesystem::path& path);
std::size_t storage_bytes(const Head& head);

}  // namespace nnr

#endif  // NNREDUCE_HEADS_HPP
