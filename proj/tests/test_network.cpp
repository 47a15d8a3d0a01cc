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
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "nnreduce/errors.hpp"
#include "nnreduce/model_io.hpp"
#include "nnreduce/network.hpp"
#include "nnreduce/splitter.hpp"
#include "test_util.hpp"

using namespace nnr;
namespace fs = std::filesystem;
using nnr::test::max_rel_diff;
using nnr::test::random_tensor;

namespace {

Linear identity_linear(std::size_t n) {
  Linear l{Tensor({n, n}), Tensor({n})};
  for (std::size_t i = 0; i < n; ++i) l.weight[i * n + i] = 1.0;
  return l;
}

// Finite-difference check of every parameter and the input of `net` under
// the scalar objective sum(w .* out).
void check_gradients(Network net, const Tensor& x, Rng& rng, double tol = 1e-4) {
  const Tensor w = random_tensor(net.output_shape(), rng);
  const Trace trace = forward(net, x);
  const GradientBundle g = backward(net, trace, w);

  auto objective = [&](const Network& n, const Tensor& in) {
    const Tensor out = predict(n, in);
    return dot(out.values(), w.values());
  };
  auto params = net.parameters();
  std::size_t k = 0;
  for (std::size_t j = 0; j < g.parameters.size(); ++j) {
    for (const Tensor& analytic : g.parameters[j]) {
      const auto numeric =
          nnr::test::numeric_gradient(params[k].get().values(), [&] { return objective(net, x); });
      INFO("layer " << j << " (" << layer_kind(net.layers()[j]) << ")");
      CHECK(max_rel_diff(analytic.values(), numeric) <= tol);
      ++k;
    }
  }
  CHECK(k == params.size());
  Tensor xin = x;
  const auto numeric_in = nnr::test::numeric_gradient(xin.values(), [&] { return objective(net, xin); });
  CHECK(max_rel_diff(g.input.values(), numeric_in) <= tol);
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nnreduce_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("forward basics") {
  Network id({3}, {identity_linear(3)});
  const Tensor x({3}, {1.5, -2.0, 0.25});
  CHECK(predict(id, x) == x);

  Network relu({3}, {Relu{}});
  CHECK(predict(relu, Tensor({3}, {-1, 0, 2})) == Tensor({3}, {0, 0, 2}));

  CHECK(softplus(0.0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(softplus(800.0, 1.0) == doctest::Approx(800.0));
  CHECK(std::isfinite(softplus(-800.0, 1.0)));
}

TEST_CASE("1x1 convolution equals a per-pixel dense map") {
  Rng rng(7);
  Conv2d c = make_conv2d(2, 2, 1, 1, 0, rng);
  Network net({2, 3, 4}, {c});
  const Tensor x = random_tensor({2, 3, 4}, rng);
  const Tensor y = predict(net, x);
  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t p = 0; p < 12; ++p) {
      double ref = c.bias[o];
      for (std::size_t i = 0; i < 2; ++i) ref += c.weight[o * 2 + i] * x[i * 12 + p];
      CHECK(std::abs(y[o * 12 + p] - ref) <= 1e-12);
    }
}

TEST_CASE("strided padded convolution against a direct sum") {
  Rng rng(8);
  Conv2d c = make_conv2d(2, 3, 3, 2, 1, rng);
  Network net({2, 5, 5}, {c});
  CHECK(net.output_shape() == Shape{3, 3, 3});
  const Tensor x = random_tensor({2, 5, 5}, rng);
  const Tensor y = predict(net, x);
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t oh = 0; oh < 3; ++oh)
      for (std::size_t ow = 0; ow < 3; ++ow) {
        double ref = c.bias[o];
        for (std::size_t i = 0; i < 2; ++i)
          for (std::size_t u = 0; u < 3; ++u)
            for (std::size_t v = 0; v < 3; ++v) {
              const long h = static_cast<long>(oh * 2 + u) - 1, w = static_cast<long>(ow * 2 + v) - 1;
              if (h < 0 || w < 0 || h >= 5 || w >= 5) continue;
              ref += c.weight[((o * 2 + i) * 3 + u) * 3 + v] * x[(i * 5 + h) * 5 + w];
            }
        CHECK(std::abs(y[(o * 3 + oh) * 3 + ow] - ref) <= 1e-12);
      }
}

TEST_CASE("maxpool routes the gradient to the first maximum") {
  Network net({1, 2, 2}, {MaxPool2d{2, 2}});
  const Tensor x({1, 2, 2}, {3, 3, 1, 3});
  const Trace t = forward(net, x);
  CHECK(t.output()[0] == 3.0);
  const GradientBundle g = backward(net, t, Tensor({1, 1, 1}, {1.0}));
  CHECK(g.input == Tensor({1, 2, 2}, {1, 0, 0, 0}));
}

TEST_CASE("backward base cases") {
  Rng rng(9);
  Network net({4}, {make_linear(4, 3, rng)});
  const Tensor x = random_tensor({4}, rng);
  const Trace t = forward(net, x);
  GradientBundle g = backward(net, t, Tensor({3}));
  for (const auto& layer : g.parameters)
    for (const Tensor& p : layer)
      for (double v : p.values()) CHECK(v == 0.0);

  const Tensor go({3}, {1.0, -2.0, 0.5});
  g = backward(net, t, go);
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t i = 0; i < 4; ++i) CHECK(g.parameters[0][0][o * 4 + i] == doctest::Approx(go[o] * x[i]));
  CHECK(g.parameters[0][1] == go);
}

TEST_CASE("finite differences for every layer kind") {
  Rng rng(10);
  SUBCASE("linear, relu, softplus") {
    std::vector<Layer> layers;
    layers.emplace_back(make_linear(5, 6, rng));
    layers.emplace_back(Relu{});
    layers.emplace_back(make_linear(6, 4, rng));
    layers.emplace_back(Softplus{1.7});
    layers.emplace_back(make_linear(4, 3, rng));
    check_gradients(Network({5}, std::move(layers)), random_tensor({5}, rng), rng);
  }
  SUBCASE("conv, maxpool, flatten") {
    std::vector<Layer> layers;
    layers.emplace_back(make_conv2d(2, 3, 3, 1, 1, rng));
    layers.emplace_back(MaxPool2d{2, 2});
    layers.emplace_back(make_conv2d(3, 2, 2, 2, 1, rng));
    layers.emplace_back(Softplus{1.0});
    layers.emplace_back(Flatten{});
    layers.emplace_back(make_linear(8, 3, rng));
    check_gradients(Network({2, 6, 6}, std::move(layers)), random_tensor({2, 6, 6}, rng), rng);
  }
}

TEST_CASE("shape chain validation") {
  Rng rng(11);
  std::vector<Layer> layers;
  layers.emplace_back(make_linear(4, 3, rng));
  layers.emplace_back(make_linear(5, 2, rng));
  CHECK_THROWS_AS(Network({4}, std::move(layers)), ValidationError);
  CHECK_THROWS_AS(Network({4, 4}, {MaxPool2d{2, 2}}), ValidationError);
  Network ok({4}, {Relu{}});
  CHECK_THROWS_AS(predict(ok, Tensor({5})), ShapeError);
}

TEST_CASE("split and compose") {
  Rng rng(12);
  const Network net = nnr::test::random_conv_net(1, 3, rng);
  const std::size_t L = net.layer_count();
  for (std::size_t cut = 1; cut < L; ++cut) {
    const SplitNetwork s = split_network(net, cut);
    CHECK(s.pre.layer_count() == cut);
    CHECK(s.post.layer_count() == L - cut);
    for (int k = 0; k < 5; ++k) {
      const Tensor x = random_tensor({1, 8, 8}, rng);
      CHECK(predict(s.post, predict(s.pre, x)) == predict(net, x));
    }
  }
  CHECK_THROWS_AS(split_network(net, 0), ParameterError);
  CHECK_THROWS_AS(split_network(net, L), ParameterError);

  std::vector<Layer> four;
  for (int i = 0; i < 4; ++i) four.emplace_back(Relu{});
  Network n4({3}, std::move(four));
  CHECK(split_network(n4, 1).post.layer_count() == 3);
  CHECK(split_network(n4, 3).post.layer_count() == 1);
}

TEST_CASE("collect_features") {
  Rng rng(13);
  Network id({3}, {identity_linear(3)});
  std::vector<Tensor> xs = {random_tensor({3}, rng), random_tensor({3}, rng)};
  const Matrix f = collect_features(id, xs);
  CHECK(f.rows() == 3);
  CHECK(f.cols() == 2);
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t i = 0; i < 3; ++i) CHECK(f(i, j) == xs[j][i]);

  const Network net = nnr::test::random_conv_net(1, 3, rng);
  const Network pre = split_network(net, 3).pre;
  std::vector<Tensor> imgs;
  for (int k = 0; k < 3; ++k) imgs.push_back(random_tensor({1, 8, 8}, rng));
  const Matrix g = collect_features(pre, imgs);
  for (std::size_t j = 0; j < 3; ++j) {
    const Tensor y = predict(pre, imgs[j]);
    CHECK(g.column(j) == std::vector<double>(y.values().begin(), y.values().end()));
  }
  imgs.push_back(random_tensor({1, 7, 8}, rng));
  CHECK_THROWS_AS(collect_features(pre, imgs), ShapeError);
}

TEST_CASE("model round trip and storage") {
  Rng rng(14);
  const fs::path dir = temp_dir("model");
  const Network net = round_to_float32(nnr::test::random_conv_net(2, 5, rng));
  save_model(net, dir / "m.nsnn");
  const Network back = load_model(dir / "m.nsnn");
  CHECK(back == net);
  CHECK(storage_bytes(net) == artifact_storage_on_disk(dir / "m.nsnn"));

  std::size_t by_layer = 0;
  for (const Layer& l : net.layers()) by_layer += parameter_count(l);
  CHECK(net.parameter_count() == by_layer);
  CHECK(storage_bytes(net) == 4 * by_layer + manifest_text(network_manifest(net, nullptr)).size());

  CHECK(parameter_count(Layer{make_linear(50, 10, rng)}) == 510);
  CHECK(parameter_count(Layer{Relu{}}) == 0);
  CHECK(parameter_count(Layer{Flatten{}}) == 0);
}

TEST_CASE("corrupt model artifacts are rejected") {
  Rng rng(15);
  const fs::path dir = temp_dir("corrupt");
  const Network net = nnr::test::random_conv_net(1, 3, rng);
  save_model(net, dir / "m.nsnn");

  SUBCASE("truncated blob") {
    fs::resize_file(dir / "m.nsnn.bin", fs::file_size(dir / "m.nsnn.bin") - 6);
    CHECK_THROWS_AS(load_model(dir / "m.nsnn"), Error);
  }
  SUBCASE("layer count mismatch") {
    auto manifest = read_manifest(dir / "m.nsnn");
    manifest["layer_count"] = 7;
    write_file_atomic(dir / "m.nsnn", manifest_text(manifest));
    CHECK_THROWS_AS(load_model(dir / "m.nsnn"), ValidationError);
  }
  SUBCASE("broken json reports a byte offset") {
    write_file_atomic(dir / "m.nsnn", std::string("{\"format\": \"nsnn\", "));
    CHECK_THROWS_AS(load_model(dir / "m.nsnn"), ParseError);
  }
  SUBCASE("bad magic") {
    std::vector<char> blob = read_file(dir / "m.nsnn.bin");
    blob[0] = 'X';
    write_file_atomic(dir / "m.nsnn.bin", blob);
    CHECK_THROWS_AS(load_model(dir / "m.nsnn"), ParseError);
  }
}
