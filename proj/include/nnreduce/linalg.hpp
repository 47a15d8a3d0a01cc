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

#ifndef NNREDUCE_LINALG_HPP
#define NNREDUCE_LINALG_HPP

#include <span>
#include <vector>

#include "nnreduce/tensor.hpp"

namespace nnr {

/// Thin SVD, A = U * diag(S) * Vt with k = min(m, n).
struct SvdResult {
  Matrix U;               // m x k, orthonormal columns
  std::vector<double> S;  // descending, nonnegative
  Matrix Vt;              // k x n, orthonormal rows
};

struct EigResult {
  std::vector<double> values;  // descending
  Matrix vectors;              // n x n, eigenvector i in column i
};

Matrix matmul(const Matrix& a, const Matrix& b);
std::vector<double> matvec(const Matrix& a, std::span<const double> x);
/// a^T * x without forming the transpose.
std::vector<double> matvec_transposed(const Matrix& a, std::span<const double> x);
/// a^T * a.
Matrix gram(const Matrix& a);

double frobenius_norm(const Matrix& a);
double max_abs(const Matrix& a);
double dot(std::span<const double> x, std::span<const double> y);
double norm2(std::span<const double> x);

// One-sided Jacobi. Each left singular vector is sign-normalized so that its
// largest-magnitude entry is nonnegative; the matching row of Vt follows.
// Columns of U belonging to zero singular values are completed to an
// orthonormal set.
SvdResult svd(const Matrix& a);

// Cyclic Jacobi on a symmetric matrix. Throws ContractError if
// max|A - A^T| > 1e-8 * max|A|. Ties keep the order the solver found them in.
EigResult sym_eig(const Matrix& a);

// Minimizes ||A X - B||_F through the SVD of A. When A is numerically rank
// deficient (s_min <= eps * max(m, n) * s_max) every component is damped as
// s / (s^2 + 1e-10), i.e. the ridge solution of (A^T A + 1e-10 I) X = A^T B.
Matrix lstsq(const Matrix& a, const Matrix& b);

inline constexpr double kLstsqRidge = 1e-10;

/// True when lstsq(a, .) would take the ridge path.
bool is_rank_deficient(const SvdResult& s, std::size_t m, std::size_t n);

}  // namespace nnr

#endif  // NNREDUCE_LINALG_HPP
