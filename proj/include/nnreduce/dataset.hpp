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

#ifndef NNREDUCE_DATASET_HPP
#define NNREDUCE_DATASET_HPP

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "nnreduce/tensor.hpp"

namespace nnr {

enum class Split : std::uint8_t { train = 0, test = 1 };

/// Labelled samples sharing one shape. Labels lie in [0, n_class).
struct Dataset {
  std::vector<Tensor> inputs;
  std::vector<std::size_t> labels;
  std::size_t n_class = 0;
  Split split = Split::train;

  std::size_t size() const noexcept { return inputs.size(); }
  const Shape& sample_shape() const;
  /// Throws DataError on a length mismatch, ragged shapes or a bad label.
  void validate() const;
};

// File layout (all integers little-endian):
//   "NSDS" | u8 version=1 | u8 split | u32 n_class | u32 N | u32 rank |
//   u32 dims[rank] | f32 values[N * prod(dims)] | u32 labels[N]
inline constexpr std::uint8_t kDatasetVersion = 1;

void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct SyntheticSpec {
  std::uint64_t seed = 0;
  std::size_t n_class = 4;
  std::size_t n_per_class = 500;
  std::size_t channels = 1;
  std::size_t height = 16;
  std::size_t width = 16;
  double noise = 1.4;
};

/// Oriented gratings, one orientation per class, with jittered frequency,
/// phase and orientation, a random bright blob and Gaussian pixel noise.
/// Values are stored at float32 precision so files reload bit-exactly.
/// Split 80/20 per class; the first samples of each class go to train.
std::pair<Dataset, Dataset> gen_synthetic(const SyntheticSpec& spec);

}  // namespace nnr

#endif  // NNREDUCE_DATASET_HPP
