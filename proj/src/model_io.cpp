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

#include "nnreduce/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "nnreduce/errors.hpp"

namespace nnr {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void put_f32(std::vector<char>& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFFu));
}

double get_f32(const char* p) {
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[k])) << (8 * k);
  return static_cast<double>(std::bit_cast<float>(bits));
}

Shape shape_from(const json& j) {
  Shape s;
  for (const auto& d : j) s.push_back(d.get<std::size_t>());
  return s;
}

}  // namespace

fs::path blob_path_for(const fs::path& manifest_path) {
  fs::path p = manifest_path;
  p += ".bin";
  return p;
}

BlobWriter::BlobWriter() : bytes_(std::begin(kBlobMagic), std::end(kBlobMagic)) {
  bytes_.push_back(static_cast<char>(kBlobVersion));
}

json BlobWriter::add(const std::string& name, const Tensor& t) {
  json record = {{"name", name}, {"shape", t.shape()}, {"offset", bytes_.size()}, {"length", 4 * t.size()}};
  for (double v : t.values()) put_f32(bytes_, v);
  return record;
}

BlobReader::BlobReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {
  if (bytes_.size() < kBlobHeaderBytes) throw ParseError("blob shorter than its header", bytes_.size());
  if (std::memcmp(bytes_.data(), kBlobMagic, 4) != 0) throw ParseError("blob magic is not NSNN", 0);
  if (static_cast<std::uint8_t>(bytes_[4]) != kBlobVersion) {
    throw ParseError("unsupported blob version " + std::to_string(static_cast<unsigned char>(bytes_[4])), 4);
  }
}

BlobReader BlobReader::open(const fs::path& path) { return BlobReader(read_file(path)); }

Tensor BlobReader::read(const json& record) const {
  const std::string name = record.at("name").get<std::string>();
  const Shape shape = shape_from(record.at("shape"));
  const std::size_t offset = record.at("offset").get<std::size_t>();
  const std::size_t length = record.at("length").get<std::size_t>();
  if (length != 4 * numel(shape)) {
    throw ValidationError("tensor '" + name + "' declares " + std::to_string(length) + " bytes for shape " +
                          to_string(shape));
  }
  if (offset < kBlobHeaderBytes) throw ParseError("tensor '" + name + "' overlaps the blob header", offset);
  if (offset + length > bytes_.size()) {
    throw ParseError("tensor '" + name + "' runs past the end of the blob (" + std::to_string(bytes_.size()) +
                         " bytes)",
                     bytes_.size());
  }
  std::vector<double> values(numel(shape));
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = get_f32(bytes_.data() + offset + 4 * i);
  return Tensor(shape, std::move(values));
}

std::string manifest_text(const json& manifest) { return manifest.dump(1) + "\n"; }

void write_file_atomic(const fs::path& path, const std::vector<char>& contents) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " into place");
  }
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  write_file_atomic(path, std::vector<char>(contents.begin(), contents.end()));
}

std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_artifact(const fs::path& path, const json& manifest, const std::vector<char>& blob) {
  write_file_atomic(blob_path_for(path), blob);
  write_file_atomic(path, manifest_text(manifest));
}

json read_manifest(const fs::path& path) {
  const std::vector<char> bytes = read_file(path);
  try {
    return json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw ParseError("malformed manifest " + path.string(), e.byte);
  }
}

std::size_t artifact_storage_on_disk(const fs::path& manifest_path) {
  return fs::file_size(manifest_path) + fs::file_size(blob_path_for(manifest_path)) - kBlobHeaderBytes;
}

json network_manifest(const Network& net, BlobWriter* blob) {
  BlobWriter scratch;
  BlobWriter& w = blob ? *blob : scratch;
  json layers = json::array();
  for (const auto& layer : net.layers()) {
    json rec = {{"kind", std::string(layer_kind(layer))}};
    if (const auto* l = std::get_if<Linear>(&layer)) {
      rec["in"] = l->weight.shape()[1];
      rec["out"] = l->weight.shape()[0];
      rec["tensors"] = {w.add("weight", l->weight), w.add("bias", l->bias)};
    } else if (const auto* c = std::get_if<Conv2d>(&layer)) {
      rec["stride"] = c->stride;
      rec["padding"] = c->padding;
      rec["tensors"] = {w.add("weight", c->weight), w.add("bias", c->bias)};
    } else if (const auto* s = std::get_if<Softplus>(&layer)) {
      rec["beta"] = s->beta;
    } else if (const auto* m = std::get_if<MaxPool2d>(&layer)) {
      rec["window"] = m->window;
      rec["stride"] = m->stride;
    }
    layers.push_back(std::move(rec));
  }
  return json{{"format", "nsnn"},
              {"version", kBlobVersion},
              {"kind", "network"},
              {"input_shape", net.input_shape()},
              {"layer_count", net.layer_count()},
              {"value_count", net.parameter_count()},
              {"layers", std::move(layers)}};
}

Network network_from_manifest(const json& m, const BlobReader& blob) {
  try {
    if (m.at("kind").get<std::string>() != "network") {
      throw ValidationError("manifest kind is '" + m.at("kind").get<std::string>() + "', expected 'network'");
    }
    const auto& recs = m.at("layers");
    const std::size_t declared = m.at("layer_count").get<std::size_t>();
    if (recs.size() != declared) {
      throw ValidationError("manifest declares " + std::to_string(declared) + " layers but lists " +
                            std::to_string(recs.size()));
    }
    std::vector<Layer> layers;
    std::size_t values = 0;
    for (const auto& rec : recs) {
      const std::string kind = rec.at("kind").get<std::string>();
      if (kind == "linear" || kind == "conv2d") {
        const auto& ts = rec.at("tensors");
        if (ts.size() != 2) throw ValidationError(kind + " layer needs weight and bias tensors");
        Tensor weight = blob.read(ts[0]);
        Tensor bias = blob.read(ts[1]);
        values += weight.size() + bias.size();
        if (kind == "linear") {
          layers.emplace_back(Linear{std::move(weight), std::move(bias)});
        } else {
          layers.emplace_back(Conv2d{std::move(weight), std::move(bias), rec.at("stride").get<std::size_t>(),
                                     rec.at("padding").get<std::size_t>()});
        }
      } else if (kind == "relu") {
        layers.emplace_back(Relu{});
      } else if (kind == "softplus") {
        layers.emplace_back(Softplus{rec.at("beta").get<double>()});
      } else if (kind == "maxpool2d") {
        layers.emplace_back(MaxPool2d{rec.at("window").get<std::size_t>(), rec.at("stride").get<std::size_t>()});
      } else if (kind == "flatten") {
        layers.emplace_back(Flatten{});
      } else {
        throw ValidationError("unknown layer kind '" + kind + "'");
      }
    }
    if (kBlobHeaderBytes + 4 * values != blob.size()) {
      throw ValidationError("blob holds " + std::to_string((blob.size() - kBlobHeaderBytes) / 4) +
                            " values but the manifest accounts for " + std::to_string(values));
    }
    return Network(shape_from(m.at("input_shape")), std::move(layers));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest is missing or mistypes a field: ") + e.what());
  }
}

void save_model(const Network& net, const fs::path& path) {
  BlobWriter blob;
  const json manifest = network_manifest(net, &blob);
  write_artifact(path, manifest, blob.bytes());
}

Network load_model(const fs::path& path) {
  const json manifest = read_manifest(path);
  return network_from_manifest(manifest, BlobReader::open(blob_path_for(path)));
}

std::size_t storage_bytes(const Network& net) {
  return 4 * net.parameter_count() + manifest_text(network_manifest(net, nullptr)).size();
}

Network round_to_float32(const Network& net) {
  Network out = net;
  for (Tensor& t : out.parameters())
    for (double& v : t.values()) v = static_cast<double>(static_cast<float>(v));
  return out;
}

}  // namespace nnr
