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

#include "nnreduce/dataset.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include "nnreduce/errors.hpp"
#include "nnreduce/model_io.hpp"

namespace nnr {

namespace fs = std::filesystem;

namespace {

void put_u32(std::vector<char>& out, std::uint64_t v) {
  if (v > std::numeric_limits<std::uint32_t>::max()) throw DataError("value " + std::to_string(v) + " exceeds u32");
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xFFu));
}

class Cursor {
 public:
  explicit Cursor(const std::vector<char>& bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (pos_ + n > bytes_.size()) {
      throw ParseError(std::string("dataset truncated while reading ") + what, bytes_.size());
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + k])) << (8 * k);
    pos_ += 4;
    return v;
  }
  double f32(const char* what) { return static_cast<double>(std::bit_cast<float>(u32(what))); }
  std::size_t pos() const noexcept { return pos_; }
  std::size_t size() const noexcept { return bytes_.size(); }

 private:
  const std::vector<char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Shape& Dataset::sample_shape() const {
  if (inputs.empty()) throw DataError("empty dataset has no sample shape");
  return inputs.front().shape();
}

void Dataset::validate() const {
  if (inputs.size() != labels.size()) {
    throw DataError(std::to_string(inputs.size()) + " samples but " + std::to_string(labels.size()) + " labels");
  }
  if (n_class < 1) throw DataError("dataset declares no classes");
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    if (inputs[j].shape() != inputs.front().shape()) {
      throw DataError("sample " + std::to_string(j) + " has shape " + to_string(inputs[j].shape()) +
                      ", expected " + to_string(inputs.front().shape()));
    }
    if (labels[j] >= n_class) {
      throw DataError("label " + std::to_string(labels[j]) + " of sample " + std::to_string(j) + " outside [0, " +
                      std::to_string(n_class) + ")");
    }
  }
}

void save_dataset(const Dataset& data, const fs::path& path) {
  data.validate();
  std::vector<char> out = {'N', 'S', 'D', 'S', static_cast<char>(kDatasetVersion), static_cast<char>(data.split)};
  put_u32(out, data.n_class);
  put_u32(out, data.size());
  const Shape shape = data.size() ? data.sample_shape() : Shape{};
  put_u32(out, shape.size());
  for (auto d : shape) put_u32(out, d);
  for (const auto& x : data.inputs) {
    for (double v : x.values()) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      put_u32(out, bits);
    }
  }
  for (auto l : data.labels) put_u32(out, l);
  write_file_atomic(path, out);
}

Dataset load_dataset(const fs::path& path) {
  const std::vector<char> bytes = read_file(path);
  Cursor c(bytes);
  c.need(4, "magic");
  if (std::memcmp(bytes.data(), "NSDS", 4) != 0) throw ParseError("dataset magic is not NSDS", 0);
  for (int k = 0; k < 4; ++k) c.u8("magic");
  const std::size_t version_at = c.pos();
  if (c.u8("version") != kDatasetVersion) throw ParseError("unsupported dataset version", version_at);
  const std::size_t split_at = c.pos();
  const std::uint8_t split = c.u8("split");
  if (split > 1) throw ParseError("unknown split tag " + std::to_string(split), split_at);

  Dataset data;
  data.split = static_cast<Split>(split);
  data.n_class = c.u32("n_class");
  const std::size_t n = c.u32("sample count");
  const std::size_t rank_at = c.pos();
  const std::size_t rank = c.u32("rank");
  if (rank == 0 && n > 0) throw ParseError("sample rank is zero", rank_at);
  Shape shape;
  for (std::size_t k = 0; k < rank; ++k) shape.push_back(c.u32("dims"));
  const std::size_t per = numel(shape);
  c.need(4 * (per * n + n), "samples and labels");
  data.inputs.reserve(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> v(per);
    for (auto& x : v) x = c.f32("sample values");
    data.inputs.emplace_back(shape, std::move(v));
  }
  data.labels.resize(n);
  for (auto& l : data.labels) l = c.u32("labels");
  if (c.pos() != c.size()) throw ParseError("trailing bytes after labels", c.pos());
  data.validate();
  return data;
}

}  // namespace nnr
