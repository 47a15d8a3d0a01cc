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

#include "nnreduce/splitter.hpp"

#include "nnreduce/errors.hpp"

namespace nnr {

SplitNetwork split_network(const Network& net, std::size_t cut) {
  const std::size_t L = net.layer_count();
  if (cut < 1 || cut >= L) {
    throw ParameterError("cut-off layer " + std::to_string(cut) + " out of range; valid range is 1.." +
                         std::to_string(L - 1));
  }
  const auto& layers = net.layers();
  std::vector<Layer> head(layers.begin(), layers.begin() + static_cast<std::ptrdiff_t>(cut));
  std::vector<Layer> tail(layers.begin() + static_cast<std::ptrdiff_t>(cut), layers.end());
  Network pre(net.input_shape(), std::move(head));
  Network post(pre.output_shape(), std::move(tail));
  return {std::move(pre), std::move(post), cut};
}

Matrix collect_features(const Network& pre, std::span<const Tensor> inputs) {
  const std::size_t n = numel(pre.output_shape());
  Matrix snapshots(n, inputs.size());
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    if (inputs[j].shape() != pre.input_shape()) {
      throw ShapeError("sample " + std::to_string(j) + " has shape " + to_string(inputs[j].shape()) +
                       ", pre-model expects " + to_string(pre.input_shape()));
    }
    const Tensor out = predict(pre, inputs[j]);
    for (std::size_t i = 0; i < n; ++i) snapshots(i, j) = out[i];
  }
  return snapshots;
}

}  // namespace nnr
