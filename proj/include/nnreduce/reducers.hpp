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

#ifndef NNREDUCE_REDUCERS_HPP
#define NNREDUCE_REDUCERS_HPP

#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "nnreduce/network.hpp"
#include "nnreduce/tensor.hpp"

namespace nnr {

class BlobWriter;
class BlobReader;

enum class ReductionMethod { pod, as };

std::string_view to_string(ReductionMethod m);
ReductionMethod parse_reduction_method(std::string_view name);

/// Rank-r linear map z = basis * (flatten(x) - center). Rows of `basis` are
/// orthonormal when produced by a reducer; training the projection may
/// relax that.
struct ProjectionMap {
  Matrix basis;                  // r x n_l
  ReductionMethod method = ReductionMethod::pod;
  std::vector<double> spectrum;  // retained singular values (pod) or eigenvalues (as), descending
  std::vector<double> center;    // empty unless built with centering

  std::size_t rank() const noexcept { return basis.rows(); }
  std::size_t input_dim() const noexcept { return basis.cols(); }
  bool centered() const noexcept { return !center.empty(); }
};

/// POD: the first r left singular vectors of the snapshot matrix
/// [n_l x N]. With `center`, the per-feature snapshot mean is removed first
/// and kept in the map.
ProjectionMap pod_basis(const Matrix& snapshots, std::size_t r, bool center = false);

/// Row j holds the gradient with respect to the post-model input of the
/// cross-entropy between softmax(post(x_j)) and labels[j], where x_j is
/// feature column j reshaped to the post-model input shape.
Matrix as_gradients(const Network& post, const Matrix& features, std::span<const std::size_t> labels);

/// Active subspace: top-r eigenvectors of C = (1/N) G^T G. With
/// `normalize_rows`, each gradient is scaled to unit length first (zero rows
/// are left alone). A zero C yields zero spectrum and the leading standard
/// basis vectors as rows.
ProjectionMap as_basis(const Matrix& gradients, std::size_t r, bool normalize_rows = false);

/// Frequent Directions sketch of a row stream. Rows are appended into the
/// sketch's free slots; when none is free the sketch is rotated onto its
/// right singular vectors and every squared singular value is reduced by
/// the squared singular value at 0-based position floor(ell/2) (floored at
/// zero), which frees at least the trailing half of the rows.
class FdSketch {
 public:
  FdSketch(std::size_t ell, std::size_t dim);

  void update(std::span<const double> row);

  /// Top-r right singular directions of the sketch. Spectrum entries are
  /// sigma^2 / rows_seen so that they estimate eigenvalues of (1/N) A^T A.
  ProjectionMap finalize(std::size_t r) const;

  const Matrix& sketch() const noexcept { return b_; }
  std::size_t ell() const noexcept { return b_.rows(); }
  std::size_t rows_seen() const noexcept { return rows_seen_; }

 private:
  void shrink();

  Matrix b_;
  std::size_t filled_ = 0;
  std::size_t rows_seen_ = 0;
};

/// z = basis * (flatten(x) - center).
std::vector<double> project(const ProjectionMap& map, const Tensor& x);
std::vector<double> project(const ProjectionMap& map, std::span<const double> x);

nlohmann::json projection_manifest(const ProjectionMap& map, BlobWriter* blob);
ProjectionMap projection_from_manifest(const nlohmann::json& manifest, const BlobReader& blob);
void save_projection(const ProjectionMap& map, const std::filesystem::path& path);
ProjectionMap load_projection(const std::filesystem::path& path);
std::size_t storage_bytes(const ProjectionMap& map);
std::size_t stored_value_count(const ProjectionMap& map);

}  // namespace nnr

#endif  // NNREDUCE_REDUCERS_HPP
