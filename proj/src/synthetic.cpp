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

#include <cmath>
#include <numbers>

#include "nnreduce/dataset.hpp"
#include "nnreduce/errors.hpp"
#include "nnreduce/random.hpp"

namespace nnr {

namespace {

Tensor grating_sample(const SyntheticSpec& spec, std::size_t label, Rng& rng) {
  constexpr double pi = std::numbers::pi;
  const double spacing = pi / static_cast<double>(spec.n_class);
  const double theta = spacing * static_cast<double>(label) + 0.3 * spacing * rng.uniform(-1.0, 1.0);
  const double freq = rng.uniform(0.15, 0.30);
  const double phase = rng.uniform(0.0, 2.0 * pi);
  const double amp = rng.uniform(0.6, 1.0);
  const double blob_y = rng.uniform(0.0, static_cast<double>(spec.height));
  const double blob_x = rng.uniform(0.0, static_cast<double>(spec.width));
  const double blob_amp = rng.uniform(0.0, 1.5);
  const double c = std::cos(theta), s = std::sin(theta);
  const double cy = 0.5 * static_cast<double>(spec.height - 1);
  const double cx = 0.5 * static_cast<double>(spec.width - 1);

  Tensor x({spec.channels, spec.height, spec.width});
  std::size_t k = 0;
  for (std::size_t ch = 0; ch < spec.channels; ++ch) {
    for (std::size_t i = 0; i < spec.height; ++i) {
      for (std::size_t j = 0; j < spec.width; ++j) {
        const double yy = static_cast<double>(i) - cy;
        const double xx = static_cast<double>(j) - cx;
        const double dy = static_cast<double>(i) - blob_y;
        const double dx = static_cast<double>(j) - blob_x;
        double v = amp * std::sin(2.0 * pi * freq * (xx * c + yy * s) + phase);
        v += blob_amp * std::exp(-(dx * dx + dy * dy) / 8.0);
        v += spec.noise * rng.normal();
        x[k++] = static_cast<double>(static_cast<float>(v));
      }
    }
  }
  return x;
}

}  // namespace

std::pair<Dataset, Dataset> gen_synthetic(const SyntheticSpec& spec) {
  if (spec.n_class < 2) throw ParameterError("synthetic data needs at least 2 classes");
  if (spec.n_per_class < 1 || spec.channels < 1 || spec.height < 1 || spec.width < 1) {
    throw ParameterError("synthetic data needs positive sample counts and image extents");
  }
  Rng rng(spec.seed);
  const std::size_t n_train = (spec.n_per_class * 4) / 5;
  Dataset train{{}, {}, spec.n_class, Split::train};
  Dataset test{{}, {}, spec.n_class, Split::test};
  for (std::size_t i = 0; i < spec.n_per_class; ++i) {
    Dataset& dst = i < n_train ? train : test;
    for (std::size_t label = 0; label < spec.n_class; ++label) {
      dst.inputs.push_back(grating_sample(spec, label, rng));
      dst.labels.push_back(label);
    }
  }
  return {std::move(train), std::move(test)};
}

}  // namespace nnr
