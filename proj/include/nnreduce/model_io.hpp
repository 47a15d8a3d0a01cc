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

#ifndef NNREDUCE_MODEL_IO_HPP
#define NNREDUCE_MODEL_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "nnreduce/network.hpp"

namespace nnr {

// On-disk artifacts are a pair of files: a UTF-8 JSON manifest at `path` and
// a binary blob at `path + ".bin"`. The blob starts with the magic "NSNN" and
// a version byte, followed by little-endian float32 values. Each manifest
// tensor record carries the absolute byte offset and length of its values.

inline constexpr char kBlobMagic[4] = {'N', 'S', 'N', 'N'};
inline constexpr std::uint8_t kBlobVersion = 1;
inline constexpr std::size_t kBlobHeaderBytes = 5;

std::filesystem::path blob_path_for(const std::filesystem::path& manifest_path);

/// Accumulates float32 tensors into a blob and produces their manifest records.
class BlobWriter {
 public:
  BlobWriter();
  nlohmann::json add(const std::string& name, const Tensor& t);
  const std::vector<char>& bytes() const noexcept { return bytes_; }
  std::size_t value_count() const noexcept { return (bytes_.size() - kBlobHeaderBytes) / 4; }

 private:
  std::vector<char> bytes_;
};

/// Validated view over a blob file's contents.
class BlobReader {
 public:
  explicit BlobReader(std::vector<char> bytes);
  static BlobReader open(const std::filesystem::path& path);

  /// Tensor named by a manifest record; throws ParseError with the byte
  /// offset when the record points past the end of the blob.
  Tensor read(const nlohmann::json& record) const;
  std::size_t size() const noexcept { return bytes_.size(); }

 private:
  std::vector<char> bytes_;
};

/// Canonical manifest text; identical input gives identical bytes.
std::string manifest_text(const nlohmann::json& manifest);

/// Writes manifest and blob atomically (temp file + rename for each).
void write_artifact(const std::filesystem::path& path, const nlohmann::json& manifest, const std::vector<char>& blob);

/// Parses the manifest at `path`; malformed JSON becomes a ParseError with the
/// byte offset reported by the parser.
nlohmann::json read_manifest(const std::filesystem::path& path);

void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
void write_file_atomic(const std::filesystem::path& path, const std::vector<char>& contents);
std::vector<char> read_file(const std::filesystem::path& path);

/// Bytes on disk of an artifact, counted as manifest + blob payload (the
/// 5-byte blob header is excluded so the figure matches storage_bytes).
std::size_t artifact_storage_on_disk(const std::filesystem::path& manifest_path);

nlohmann::json network_manifest(const Network& net, BlobWriter* blob);
Network network_from_manifest(const nlohmann::json& manifest, const BlobReader& blob);

void save_model(const Network& net, const std::filesystem::path& path);
Network load_model(const std::filesystem::path& path);

/// 4 bytes per parameter plus the size of the model's manifest text.
std::size_t storage_bytes(const Network& net);

/// Rounds every parameter to float32 precision, as a save/load cycle would.
Network round_to_float32(const Network& net);

}  // namespace nnr

#endif  // NNREDUCE_MODEL_IO_HPP
