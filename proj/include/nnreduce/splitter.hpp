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

#ifndef NNREDUCE_SPLITTER_HPP
#define NNREDUCE_SPLITTER_HPP

#include <span>

#include "nnreduce/network.hpp"

namespace nnr {

/// A network cut after layer `cut` (1-based, counting every layer including
/// activations and pooling): pre holds layers 1..cut, post the rest.
struct SplitNetwork {
  Network pre;
  Network post;
  std::size_t cut = 0;
};

/// Requires 1 <= cut < L; throws ParameterError otherwise.
SplitNetwork split_network(const Network& net, std::size_t cut);

/// Snapshot matrix [n_l x N]: column j is the row-major flattening of the
/// pre-model output for inputs[j].
Matrix collect_features(const Network& pre, std::span<const Tensor> inputs);

}  // namespace nnr

#endif  // NNREDUCE_SPLITTER_HPP
