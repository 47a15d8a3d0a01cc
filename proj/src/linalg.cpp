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

#include "nnreduce/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nnreduce/errors.hpp"

namespace nnr {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

std::string dims(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void rotate(std::span<double> x, std::span<double> y, double c, double s) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double yi = y[i];
    x[i] = c * xi - s * yi;
    y[i] = s * xi + c * yi;
  }
}

// Flip each vector (stored as a row) so its largest-magnitude entry is
// nonnegative; mirror the flip into `partner` when given.
void normalize_signs(Matrix& rows, Matrix* partner) {
  for (std::size_t j = 0; j < rows.rows(); ++j) {
    auto r = rows.row(j);
    std::size_t best = 0;
    for (std::size_t i = 1; i < r.size(); ++i)
      if (std::abs(r[i]) > std::abs(r[best])) best = i;
    if (!r.empty() && r[best] < 0.0) {
      for (auto& v : r) v = -v;
      if (partner)
        for (auto& v : partner->row(j)) v = -v;
    }
  }
}

// Replace rows flagged in `missing` by unit vectors orthogonal to all other
// rows, drawn from the standard basis by Gram-Schmidt.
void complete_orthonormal(Matrix& rows, const std::vector<bool>& missing) {
  const std::size_t dim = rows.cols();
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < rows.rows(); ++j) {
    if (!missing[j]) continue;
    bool placed = false;
    while (!placed && candidate < dim) {
      std::vector<double> v(dim, 0.0);
      v[candidate++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < rows.rows(); ++k) {
          if (k == j || (missing[k] && k > j)) continue;
          const double proj = dot(v, rows.row(k));
          const auto rk = rows.row(k);
          for (std::size_t i = 0; i < dim; ++i) v[i] -= proj * rk[i];
        }
      }
      const double nv = norm2(v);
      if (nv > 0.5) {
        auto rj = rows.row(j);
        for (std::size_t i = 0; i < dim; ++i) rj[i] = v[i] / nv;
        placed = true;
      }
    }
  }
}

// Hestenes one-sided Jacobi for m >= n. Works on A^T so each column of A is a
// contiguous row. Returns (U^T, S, V^T) with U^T of shape n x m.
struct TallSvd {
  Matrix Ut;
  std::vector<double> S;
  Matrix Vt;
};

TallSvd svd_tall(const Matrix& a) {
  const std::size_t n = a.cols();
  Matrix w = a.transposed();
  Matrix v = Matrix::identity(n);

  constexpr int kMaxSweeps = 80;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = dot(w.row(p), w.row(p));
        const double beta = dot(w.row(q), w.row(q));
        const double gamma = dot(w.row(p), w.row(q));
        if (gamma == 0.0 || std::abs(gamma) <= kEps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(w.row(p), w.row(q), c, s);
        rotate(v.row(p), v.row(q), c, s);
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = norm2(w.row(j));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  TallSvd out{Matrix(n, a.rows()), std::vector<double>(n), Matrix(n, n)};
  const double smax = n ? sigma[order[0]] : 0.0;
  std::vector<bool> missing(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.S[k] = sigma[j];
    std::copy(v.row(j).begin(), v.row(j).end(), out.Vt.row(k).begin());
    if (sigma[j] == 0.0 || sigma[j] <= smax * 1e-13) {
      missing[k] = true;
      continue;
    }
    auto dst = out.Ut.row(k);
    const auto src = w.row(j);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] / sigma[j];
  }
  if (std::find(missing.begin(), missing.end(), true) != missing.end()) complete_orthonormal(out.Ut, missing);
  return out;
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ for " + dims(a) + " and " + dims(b));
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ci = c.row(i);
    for (std::size_t t = 0; t < a.cols(); ++t) {
      const double ait = a(i, t);
      if (ait == 0.0) continue;
      const auto bt = b.row(t);
      for (std::size_t j = 0; j < ci.size(); ++j) ci[j] += ait * bt[j];
    }
  }
  return c;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) {
    throw ShapeError("matvec: matrix " + dims(a) + " against vector of length " + std::to_string(x.size()));
  }
  std::vector<double> y(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

std::vector<double> matvec_transposed(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size()) {
    throw ShapeError("matvec_transposed: matrix " + dims(a) + " against vector of length " +
                     std::to_string(x.size()));
  }
  std::vector<double> y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ai = a.row(i);
    for (std::size_t j = 0; j < y.size(); ++j) y[j] += x[i] * ai[j];
  }
  return y;
}

Matrix gram(const Matrix& a) {
  const std::size_t n = a.cols();
  Matrix g(n, n);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto ar = a.row(r);
    for (std::size_t i = 0; i < n; ++i) {
      if (ar[i] == 0.0) continue;
      auto gi = g.row(i);
      for (std::size_t j = i; j < n; ++j) gi[j] += ar[i] * ar[j];
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
  return g;
}

double dot(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

double frobenius_norm(const Matrix& a) { return norm2(a.values()); }

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

SvdResult svd(const Matrix& a) {
  if (a.rows() == 0 || a.cols() == 0) throw ParameterError("svd: empty matrix " + dims(a));
  if (!a.all_finite()) throw NumericError("svd: matrix " + dims(a) + " has non-finite entries");

  SvdResult out;
  if (a.rows() >= a.cols()) {
    TallSvd t = svd_tall(a);
    out.U = t.Ut.transposed();
    out.S = std::move(t.S);
    out.Vt = std::move(t.Vt);
    // Sign convention is stated on the left vectors, which live in Ut rows.
    Matrix ut = out.U.transposed();
    normalize_signs(ut, &out.Vt);
    out.U = ut.transposed();
  } else {
    // A^T = U' S V'^T  =>  A = V' S U'^T.
    TallSvd t = svd_tall(a.transposed());
    Matrix ut = std::move(t.Vt);  // rows = left vectors of A
    Matrix vt = std::move(t.Ut);  // rows = right vectors of A
    normalize_signs(ut, &vt);
    out.U = ut.transposed();
    out.S = std::move(t.S);
    out.Vt = std::move(vt);
  }
  return out;
}

EigResult sym_eig(const Matrix& input) {
  const std::size_t n = input.rows();
  if (n == 0 || input.cols() != n) throw ShapeError("sym_eig: expected a nonempty square matrix, got " + dims(input));
  if (!input.all_finite()) throw NumericError("sym_eig: matrix has non-finite entries");
  const double amax = max_abs(input);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(input(i, j) - input(j, i)) > 1e-8 * amax) {
        throw ContractError("sym_eig: matrix is not symmetric at (" + std::to_string(i) + ", " + std::to_string(j) +
                            ")");
      }

  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (input(i, j) + input(j, i));
  Matrix v = Matrix::identity(n);
  const double scale = frobenius_norm(a);

  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off == 0.0 || std::sqrt(off) <= kEps * 1e-2 * scale) break;

    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        rotate(a.row(p), a.row(q), c, s);
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });

  EigResult out{std::vector<double>(n), Matrix(n, n)};
  Matrix rows(n, n);  // eigenvectors as rows for sign handling
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t i = 0; i < n; ++i) rows(k, i) = v(i, order[k]);
  }
  normalize_signs(rows, nullptr);
  out.vectors = rows.transposed();
  return out;
}

bool is_rank_deficient(const SvdResult& s, std::size_t m, std::size_t n) {
  if (s.S.empty() || s.S.front() == 0.0) return true;
  return s.S.back() <= kEps * static_cast<double>(std::max(m, n)) * s.S.front();
}

Matrix lstsq(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("lstsq: A is " + dims(a) + " but B is " + dims(b));
  const SvdResult s = svd(a);
  if (!b.all_finite()) throw NumericError("lstsq: right-hand side has non-finite entries");
  const bool ridge = is_rank_deficient(s, a.rows(), a.cols());
  const std::size_t k = s.S.size();

  // coeff = diag(inv) * U^T * B
  Matrix coeff = matmul(s.U.transposed(), b);
  for (std::size_t i = 0; i < k; ++i) {
    const double si = s.S[i];
    const double inv = ridge ? si / (si * si + kLstsqRidge) : 1.0 / si;
    for (double& x : coeff.row(i)) x *= inv;
  }
  return matmul(s.Vt.transposed(), coeff);
}

}  // namespace nnr
