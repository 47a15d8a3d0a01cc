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

#include "nnreduce/reducers.hpp"

#include <algorithm>
#include <cmath>

#include "nnreduce/errors.hpp"
#include "nnreduce/linalg.hpp"
#include "nnreduce/losses.hpp"
#include "nnreduce/model_io.hpp"

namespace nnr {

using nlohmann::json;

std::string_view to_string(ReductionMethod m) { return m == ReductionMethod::pod ? "pod" : "as"; }

ReductionMethod parse_reduction_method(std::string_view name) {
  if (name == "pod") return ReductionMethod::pod;
  if (name == "as") return ReductionMethod::as;
  throw ConfigError("unknown reducer '" + std::string(name) + "' (expected pod or as)");
}

namespace {

void check_rank(std::size_t r, std::size_t limit, const char* what) {
  if (r < 1 || r > limit) {
    throw ParameterError(std::string(what) + ": rank " + std::to_string(r) + " out of range; valid range is 1.." +
                         std::to_string(limit));
  }
}

void normalize_row_signs(Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    const auto it = std::max_element(r.begin(), r.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    if (it != r.end() && *it < 0.0)
      for (double& v : r) v = -v;
  }
}

}  // namespace

ProjectionMap pod_basis(const Matrix& snapshots, std::size_t r, bool center) {
  const std::size_t n = snapshots.rows();
  const std::size_t count = snapshots.cols();
  check_rank(r, std::min(n, count), "pod_basis");

  Matrix work = snapshots;
  ProjectionMap map;
  map.method = ReductionMethod::pod;
  if (center) {
    map.center.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (double v : work.row(i)) s += v;
      map.center[i] = s / static_cast<double>(count);
      for (double& v : work.row(i)) v -= map.center[i];
    }
  }
  const SvdResult s = svd(work);
  map.basis = Matrix(r, n);
  for (std::size_t k = 0; k < r; ++k)
    for (std::size_t i = 0; i < n; ++i) map.basis(k, i) = s.U(i, k);
  map.spectrum.assign(s.S.begin(), s.S.begin() + static_cast<std::ptrdiff_t>(r));
  return map;
}

Matrix as_gradients(const Network& post, const Matrix& features, std::span<const std::size_t> labels) {
  const std::size_t n = numel(post.input_shape());
  if (features.rows() != n) {
    throw ShapeError("feature columns have length " + std::to_string(features.rows()) + ", post-model expects " +
                     to_string(post.input_shape()));
  }
  if (labels.size() != features.cols()) {
    throw ShapeError(std::to_string(features.cols()) + " feature columns but " + std::to_string(labels.size()) +
                     " labels");
  }
  const std::size_t n_out = numel(post.output_shape());
  Matrix grads(features.cols(), n);
  for (std::size_t j = 0; j < features.cols(); ++j) {
    if (labels[j] >= n_out) {
      throw DataError("label " + std::to_string(labels[j]) + " of sample " + std::to_string(j) + " outside [0, " +
                      std::to_string(n_out) + ")");
    }
    Tensor x(post.input_shape(), features.column(j));
    const Trace trace = forward(post, x);
    const std::vector<double> g = cross_entropy_grad(trace.output().values(), labels[j]);
    const GradientBundle bundle = backward(post, trace, Tensor(post.output_shape(), g));
    std::copy(bundle.input.values().begin(), bundle.input.values().end(), grads.row(j).begin());
  }
  return grads;
}

ProjectionMap as_basis(const Matrix& gradients, std::size_t r, bool normalize_rows) {
  const std::size_t n = gradients.cols();
  if (gradients.rows() == 0) throw ParameterError("as_basis: no gradient samples");
  check_rank(r, n, "as_basis");

  Matrix g = gradients;
  if (normalize_rows) {
    for (std::size_t i = 0; i < g.rows(); ++i) {
      const double nr = norm2(g.row(i));
      if (nr > 0.0)
        for (double& v : g.row(i)) v /= nr;
    }
  }
  Matrix cov = gram(g);
  const double inv_n = 1.0 / static_cast<double>(g.rows());
  for (double& v : cov.values()) v *= inv_n;
  const EigResult eig = sym_eig(cov);

  ProjectionMap map;
  map.method = ReductionMethod::as;
  map.basis = Matrix(r, n);
  for (std::size_t k = 0; k < r; ++k)
    for (std::size_t i = 0; i < n; ++i) map.basis(k, i) = eig.vectors(i, k);
  map.spectrum.resize(r);
  for (std::size_t k = 0; k < r; ++k) map.spectrum[k] = std::max(eig.values[k], 0.0);
  return map;
}

FdSketch::FdSketch(std::size_t ell, std::size_t dim) : b_(ell, dim) {
  if (ell < 1 || dim < 1) throw ParameterError("frequent directions: sketch size and dimension must be positive");
}

void FdSketch::update(std::span<const double> row) {
  if (row.size() != b_.cols()) {
    throw ShapeError("frequent directions: row of length " + std::to_string(row.size()) + ", sketch expects " +
                     std::to_string(b_.cols()));
  }
  if (filled_ == b_.rows()) shrink();
  std::copy(row.begin(), row.end(), b_.row(filled_).begin());
  ++filled_;
  ++rows_seen_;
}

void FdSketch::shrink() {
  const SvdResult s = svd(b_);
  const std::size_t k = s.S.size();
  const std::size_t pivot = b_.rows() / 2;
  // With more rows than columns the rotation alone frees rows.
  const double delta = k < b_.rows() ? 0.0 : s.S[pivot] * s.S[pivot];
  Matrix next(b_.rows(), b_.cols());
  std::size_t kept = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double shrunk = s.S[i] * s.S[i] - delta;
    if (shrunk <= 0.0) continue;
    const double scale = std::sqrt(shrunk);
    auto dst = next.row(kept++);
    const auto v = s.Vt.row(i);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = scale * v[c];
  }
  b_ = std::move(next);
  filled_ = kept;
}

ProjectionMap FdSketch::finalize(std::size_t r) const {
  check_rank(r, std::min(b_.rows(), b_.cols()), "fd_finalize");
  const SvdResult s = svd(b_);
  ProjectionMap map;
  map.method = ReductionMethod::as;
  map.basis = Matrix(r, b_.cols());
  map.spectrum.resize(r);
  const double inv_n = rows_seen_ ? 1.0 / static_cast<double>(rows_seen_) : 0.0;
  for (std::size_t k = 0; k < r; ++k) {
    std::copy(s.Vt.row(k).begin(), s.Vt.row(k).end(), map.basis.row(k).begin());
    map.spectrum[k] = s.S[k] * s.S[k] * inv_n;
  }
  normalize_row_signs(map.basis);
  return map;
}

std::vector<double> project(const ProjectionMap& map, std::span<const double> x) {
  if (x.size() != map.input_dim()) {
    throw ShapeError("projection expects " + std::to_string(map.input_dim()) + " features, got " +
                     std::to_string(x.size()));
  }
  if (!map.centered()) return matvec(map.basis, x);
  std::vector<double> shifted(x.begin(), x.end());
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] -= map.center[i];
  return matvec(map.basis, shifted);
}

std::vector<double> project(const ProjectionMap& map, const Tensor& x) { return project(map, x.values()); }

json projection_manifest(const ProjectionMap& map, BlobWriter* blob) {
  BlobWriter scratch;
  BlobWriter& w = blob ? *blob : scratch;
  json tensors = json::array();
  tensors.push_back(w.add("basis", map.basis.to_tensor()));
  tensors.push_back(w.add("spectrum", Tensor({map.spectrum.size()}, map.spectrum)));
  if (map.centered()) tensors.push_back(w.add("center", Tensor({map.center.size()}, map.center)));
  return json{{"format", "nsnn"},
              {"version", kBlobVersion},
              {"kind", "projection"},
              {"method", std::string(to_string(map.method))},
              {"r", map.rank()},
              {"n_l", map.input_dim()},
              {"centered", map.centered()},
              {"value_count", stored_value_count(map)},
              {"tensors", std::move(tensors)}};
}

ProjectionMap projection_from_manifest(const json& m, const BlobReader& blob) {
  try {
    if (m.at("kind").get<std::string>() != "projection") {
      throw ValidationError("manifest kind is '" + m.at("kind").get<std::string>() + "', expected 'projection'");
    }
    ProjectionMap map;
    map.method = parse_reduction_method(m.at("method").get<std::string>());
    const std::size_t r = m.at("r").get<std::size_t>();
    const std::size_t n = m.at("n_l").get<std::size_t>();
    const bool centered = m.at("centered").get<bool>();
    const auto& ts = m.at("tensors");
    if (ts.size() != (centered ? 3u : 2u)) throw ValidationError("projection manifest has the wrong tensor count");
    map.basis = Matrix::from_tensor(blob.read(ts[0]));
    const Tensor spectrum = blob.read(ts[1]);
    map.spectrum.assign(spectrum.values().begin(), spectrum.values().end());
    if (centered) {
      const Tensor c = blob.read(ts[2]);
      map.center.assign(c.values().begin(), c.values().end());
    }
    if (map.basis.rows() != r || map.basis.cols() != n || map.spectrum.size() != r ||
        (centered && map.center.size() != n)) {
      throw ValidationError("projection tensors disagree with r=" + std::to_string(r) + ", n_l=" + std::to_string(n));
    }
    if (kBlobHeaderBytes + 4 * stored_value_count(map) != blob.size()) {
      throw ValidationError("projection blob size does not match its manifest");
    }
    return map;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("projection manifest is missing or mistypes a field: ") + e.what());
  }
}

void save_projection(const ProjectionMap& map, const std::filesystem::path& path) {
  BlobWriter blob;
  const json manifest = projection_manifest(map, &blob);
  write_artifact(path, manifest, blob.bytes());
}

ProjectionMap load_projection(const std::filesystem::path& path) {
  return projection_from_manifest(read_manifest(path), BlobReader::open(blob_path_for(path)));
}

std::size_t stored_value_count(const ProjectionMap& map) {
  return map.basis.size() + map.spectrum.size() + map.center.size();
}

std::size_t storage_bytes(const ProjectionMap& map) {
  return 4 * stored_value_count(map) + manifest_text(projection_manifest(map, nullptr)).size();
}

}  // namespace nnr
