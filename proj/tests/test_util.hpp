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

#ifndef NNREDUCE_TESTS_TEST_UTIL_HPP
#define NNREDUCE_TESTS_TEST_UTIL_HPP

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "nnreduce/linalg.hpp"
#include "nnreduce/network.hpp"
#include "nnreduce/random.hpp"
#include "nnreduce/tensor.hpp"

namespace nnr::test {

inline Matrix random_matrix(std::size_t m, std::size_t n, Rng& rng) {
  Matrix a(m, n);
  for (double& v : a.values()) v = rng.normal();
  return a;
}

inline Tensor random_tensor(const Shape& shape, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.normal();
  return t;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

// Largest |a - b| relative to max(1, |a|, |b|), elementwise.
inline double max_rel_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({1.0, std::abs(a[i]), std::abs(b[i])});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Central differences of a scalar function over every entry of `params`.
inline std::vector<double> numeric_gradient(std::span<double> params, const std::function<double()>& f,
                                            double h = 1e-5) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = f();
    params[i] = keep - h;
    const double down = f();
    params[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// conv(c->4) relu maxpool conv(4->4) flatten linear: six layers on c x 8 x 8.
inline Network random_conv_net(std::size_t channels, std::size_t n_out, Rng& rng) {
  std::vector<Layer> layers;
  layers.emplace_back(make_conv2d(channels, 4, 3, 1, 1, rng));
  layers.emplace_back(Relu{});
  layers.emplace_back(MaxPool2d{2, 2});
  layers.emplace_back(make_conv2d(4, 4, 3, 1, 0, rng));
  layers.emplace_back(Flatten{});
  layers.emplace_back(make_linear(16, n_out, rng));
  return Network({channels, 8, 8}, std::move(layers));
}

// Power iteration for the spectral norm of a symmetric matrix.
inline double spectral_norm_sym(const Matrix& a, std::size_t iters = 2000) {
  std::vector<double> v(a.cols(), 1.0);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += 0.01 * static_cast<double>(i);
  double lambda = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    std::vector<double> w = matvec(a, v);
    const double nw = norm2(w);
    if (nw == 0.0) return 0.0;
    for (double& x : w) x /= nw;
    lambda = nw;
    v = std::move(w);
  }
  return lambda;
}

}  // namespace nnr::test

#endif  // NNREDUCE_TESTS_TEST_UTIL_HPP
