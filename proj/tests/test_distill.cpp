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
#include <numeric>

#include "doctest.h"
#include "nnreduce/dataset.hpp"
#include "nnreduce/distill.hpp"
#include "nnreduce/errors.hpp"
#include "nnreduce/losses.hpp"
#include "nnreduce/pipeline.hpp"
#include "nnreduce/reducers.hpp"
#include "nnreduce/splitter.hpp"
#include "test_util.hpp"

using namespace nnr;
using nnr::test::random_tensor;
using nnr::test::random_vector;

namespace {

// Direct formula: T^2 * sum p_t (log p_t - log p_s) with p = softmax(y / T).
double kl_oracle(const std::vector<double>& yt, const std::vector<double>& ys, double T) {
  auto soft = [&](const std::vector<double>& y) {
    std::vector<double> p(y.size());
    double z = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) z += std::exp(y[i] / T);
    for (std::size_t i = 0; i < y.size(); ++i) p[i] = std::exp(y[i] / T) / z;
    return p;
  };
  const auto pt = soft(yt), ps = soft(ys);
  double s = 0.0;
  for (std::size_t i = 0; i < pt.size(); ++i) s += pt[i] * (std::log(pt[i]) - std::log(ps[i]));
  return T * T * s;
}

Dataset labelled_onehots(std::size_t k, std::size_t per_class) {
  Dataset d;
  d.n_class = k;
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      Tensor x({k});
      x[c] = 1.0;
      d.inputs.push_back(x);
      d.labels.push_back(c);
    }
  return d;
}

// Teacher relu -> linear(3, 3); student copies the relu, projects with the
// identity and reproduces the linear layer with a degree-1 PCE.
struct Mirror {
  Network teacher;
  ReducedNet student;
};

Mirror mirror(Rng& rng) {
  Linear lin = make_linear(3, 3, rng);
  std::vector<Layer> layers;
  layers.emplace_back(Relu{});
  layers.emplace_back(lin);
  Mirror m;
  m.teacher = Network({3}, std::move(layers));
  PceModel pce = make_pce_model(3, 1, 3, PceFamily::hermite, {0, 0, 0}, {1, 1, 1});
  for (std::size_t t = 0; t < pce.term_count(); ++t) {
    const MultiIndex& a = pce.indices[t];
    const auto it = std::find(a.begin(), a.end(), 1u);
    for (std::size_t o = 0; o < 3; ++o) {
      if (it == a.end()) {
        pce.coefficients(t, o) = lin.bias[o];
      } else {
        const std::size_t i = static_cast<std::size_t>(it - a.begin());
        pce.coefficients(t, o) = lin.weight[o * 3 + i];
      }
    }
  }
  ProjectionMap id;
  id.basis = Matrix::identity(3);
  m.student = ReducedNet{Network({3}, {Relu{}}), id, pce};
  return m;
}

Dataset random_dataset(std::size_t n, std::size_t k, const Shape& shape, Rng& rng) {
  Dataset d;
  d.n_class = k;
  for (std::size_t j = 0; j < n; ++j) {
    d.inputs.push_back(random_tensor(shape, rng));
    d.labels.push_back(j % k);
  }
  return d;
}

}  // namespace

TEST_CASE("softmax with temperature") {
  for (double T : {0.5, 1.0, 7.0}) {
    const auto p = softmax_t(std::vector<double>{2.0, 2.0, 2.0, 2.0}, T);
    for (double v : p) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  }
  const auto p = softmax_t(std::vector<double>{std::log(2.0), 0.0}, 1.0);
  CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const auto flat = softmax_t(std::vector<double>{10.0, -3.0, 4.0}, 1e6);
  for (double v : flat) CHECK(std::abs(v - 1.0 / 3.0) <= 1e-5);
  const auto big = softmax_t(std::vector<double>{1000.0, 0.0}, 1.0);
  CHECK(std::isfinite(big[1]));
  CHECK_THROWS_AS(softmax_t(std::vector<double>{1.0}, 0.0), ParameterError);
}

TEST_CASE("distillation loss") {
  Rng rng(40);
  for (double T : {1.0, 2.0, 4.0}) {
    const std::vector<double> y = random_vector(5, rng);
    CHECK(kl_distill_loss(y, y, T) == 0.0);
  }
  const std::vector<double> yt = {1, 0}, ys = {0, 1};
  const double e = std::exp(1.0);
  const double pt0 = e / (1 + e), pt1 = 1 / (1 + e);
  const double direct = pt0 * (std::log(pt0) - std::log(pt1)) + pt1 * (std::log(pt1) - std::log(pt0));
  CHECK(std::abs(kl_distill_loss(yt, ys, 1.0) - direct) <= 1e-12);

  for (int t = 0; t < 5; ++t) {
    const std::vector<double> a = random_vector(4, rng), b = random_vector(4, rng);
    std::vector<double> a2 = a, b2 = b;
    for (double& v : a2) v *= 2.0;
    for (double& v : b2) v *= 2.0;
    CHECK(kl_distill_loss(a2, b2, 6.0) == 4.0 * kl_distill_loss(a, b, 3.0));
    CHECK(std::abs(kl_distill_loss(a, b, 2.5) - kl_oracle(a, b, 2.5)) <= 1e-12);
  }
}

TEST_CASE("student loss") {
  Rng rng(41);
  CHECK(ce_student_loss(one_hot(0, 3), std::vector<double>{50.0, 0.0, 0.0}) <= 1e-20);
  CHECK(ce_student_loss(one_hot(2, 5), std::vector<double>(5, 0.3)) == doctest::Approx(std::log(5.0)).epsilon(1e-15));
  const std::vector<double> y = random_vector(4, rng);
  double z = 0.0;
  for (double v : y) z += std::exp(v);
  CHECK(std::abs(ce_student_loss(one_hot(1, 4), y) - (std::log(z) - y[1])) <= 1e-12);
  CHECK_THROWS_AS(ce_student_loss(std::vector<double>{0.5, 0.5}, std::vector<double>{1, 2}), DataError);
  CHECK(argmax(std::vector<double>{1.0, 3.0, 3.0}) == 1);
}

TEST_CASE("combined loss") {
  Rng rng(42);
  const std::vector<double> yt = random_vector(4, rng), ys = random_vector(4, rng);
  const auto truth = one_hot(3, 4);
  DistillConfig cfg;
  cfg.tau = 3.0;
  cfg.lambda = 1.0;
  CHECK(combined_loss(truth, yt, ys, cfg) == kl_distill_loss(yt, ys, 3.0));
  cfg.lambda = 0.0;
  CHECK(combined_loss(truth, yt, ys, cfg) == ce_student_loss(truth, ys));
  cfg.lambda = 0.5;
  CHECK(std::abs(combined_loss(truth, yt, ys, cfg) -
                 0.5 * (kl_distill_loss(yt, ys, 3.0) + ce_student_loss(truth, ys))) <= 1e-15);

  for (double lambda : {0.0, 0.3, 1.0}) {
    cfg.lambda = lambda;
    std::vector<double> s = ys;
    const auto analytic = combined_loss_grad(3, yt, s, cfg);
    const auto numeric = nnr::test::numeric_gradient(s, [&] { return combined_loss(truth, yt, s, cfg); });
    CHECK(nnr::test::max_rel_diff(analytic, numeric) <= 1e-6);
  }
}

TEST_CASE("sample gradient of the reduced net matches finite differences") {
  Rng rng(43);
  std::vector<Layer> pre_layers;
  pre_layers.emplace_back(make_conv2d(1, 2, 3, 1, 1, rng));
  pre_layers.emplace_back(Relu{});
  pre_layers.emplace_back(Flatten{});
  pre_layers.emplace_back(make_linear(32, 6, rng));
  ReducedNet net;
  net.pre = Network({1, 4, 4}, std::move(pre_layers));
  net.projection.basis = nnr::test::random_matrix(3, 6, rng);
  net.head = make_fnn_head(3, 4, 3, 1, 1.0, rng);
  const Tensor x = random_tensor({1, 4, 4}, rng);
  const std::vector<double> teacher = random_vector(3, rng);

  DistillConfig cfg;
  cfg.tau = 2.0;
  cfg.lambda = 0.4;
  cfg.train_projection = true;
  cfg.train_pre = true;
  const SampleGradient g = sample_gradient(net, x, teacher, 1, cfg);
  auto params = trainable_parameters(net, cfg);
  REQUIRE(params.size() == g.parameters.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto numeric = nnr::test::numeric_gradient(params[k], [&] {
      return combined_loss(one_hot(1, 3), teacher, reduced_forward(net, x), cfg);
    });
    CHECK(nnr::test::max_rel_diff(g.parameters[k], numeric) <= 1e-4);
  }
}

TEST_CASE("evaluate") {
  Rng rng(44);
  Network id({3}, {Linear{[] {
                         Tensor w({3, 3});
                         for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
                         return w;
                       }(),
                       Tensor({3})}});
  const Dataset d = labelled_onehots(3, 4);
  CHECK(evaluate(id, d) == 1.0);

  Network constant({3}, {Linear{Tensor({3, 3}), Tensor({3}, {0.0, 1.0, 0.0})}});
  CHECK(evaluate(constant, d) == 1.0 / 3.0);

  const Dataset r = random_dataset(100, 4, {5}, rng);
  Network random({5}, {make_linear(5, 4, rng)});
  std::size_t hits = 0;
  for (std::size_t j = 0; j < r.size(); ++j) {
    const Tensor y = predict(random, r.inputs[j]);
    std::size_t best = 0;
    for (std::size_t c = 1; c < 4; ++c)
      if (y[c] > y[best]) best = c;
    hits += best == r.labels[j];
  }
  CHECK(evaluate(random, r) == static_cast<double>(hits) / 100.0);

  Network wrong({5}, {make_linear(5, 3, rng)});
  CHECK_THROWS_AS(evaluate(wrong, r), ConfigError);
}

TEST_CASE("distillation training") {
  Rng rng(45);
  Mirror m = mirror(rng);
  const Dataset d = random_dataset(40, 3, {3}, rng);

  SUBCASE("identical logits give a zero distillation term") {
    DistillConfig cfg;
    cfg.epochs = 1;
    const TrainResult r = train_reduced(m.student, m.teacher, d, nullptr, cfg);
    CHECK(r.history.front().epoch == 0);
    CHECK(r.history.front().distill_loss <= 1e-12);
  }
  SUBCASE("null update") {
    DistillConfig cfg;
    cfg.lambda = 0.0;
    cfg.learning_rate = 0.0;
    cfg.epochs = 3;
    const TrainResult r = train_reduced(m.student, m.teacher, d, nullptr, cfg);
    CHECK(std::get<PceModel>(r.net.head).coefficients == std::get<PceModel>(m.student.head).coefficients);
    REQUIRE(r.history.size() == 4);
    for (const auto& e : r.history) CHECK(e.loss == r.history.front().loss);
  }
  SUBCASE("divergence is reported") {
    DistillConfig cfg;
    cfg.lambda = 0.0;
    cfg.learning_rate = 1e308;
    cfg.epochs = 3;
    CHECK_THROWS_AS(train_reduced(m.student, m.teacher, d, nullptr, cfg), TrainingDivergedError);
  }
  SUBCASE("mismatched configuration") {
    Dataset four = d;
    four.n_class = 4;
    CHECK_THROWS_AS(train_reduced(m.student, m.teacher, four, nullptr, DistillConfig{}), ConfigError);
    DistillConfig bad;
    bad.tau = 0.0;
    CHECK_THROWS_AS(train_reduced(m.student, m.teacher, d, nullptr, bad), ConfigError);
  }
  SUBCASE("same seed, same history") {
    DistillConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 9;
    ReducedNet s = m.student;
    for (double& v : std::get<PceModel>(s.head).coefficients.values()) v += 0.3;
    const TrainResult a = train_reduced(s, m.teacher, d, nullptr, cfg);
    const TrainResult b = train_reduced(s, m.teacher, d, nullptr, cfg);
    CHECK(std::get<PceModel>(a.net.head).coefficients == std::get<PceModel>(b.net.head).coefficients);
    for (std::size_t e = 0; e < a.history.size(); ++e) CHECK(a.history[e].loss == b.history[e].loss);
  }
}

TEST_CASE("distillation lowers the loss on a small synthetic problem") {
  SyntheticSpec spec;
  spec.n_class = 3;
  spec.n_per_class = 60;
  spec.height = 8;
  spec.width = 8;
  spec.noise = 0.6;
  const auto [train, test] = gen_synthetic(spec);
  Network teacher = make_default_teacher(train.sample_shape(), 3, 0);
  ClassifierTrainConfig tcfg;
  tcfg.epochs = 20;
  train_classifier(teacher, train, nullptr, tcfg);

  const SplitNetwork split = split_network(teacher, 6);
  ReducedNet student;
  student.pre = split.pre;
  student.projection = pod_basis(dataset_features(split.pre, train), 8);
  Rng head_rng(47);
  student.head = make_fnn_head(8, 20, 3, 1, 1.0, head_rng);

  DistillConfig cfg;
  cfg.epochs = 10;
  const TrainResult r = train_reduced(student, teacher, train, &test, cfg);
  REQUIRE(r.history.size() == 11);
  MESSAGE("loss epoch 0 " << r.history[0].loss << ", epoch 1 " << r.history[1].loss << ", epoch 10 "
                          << r.history[10].loss);
  CHECK(r.history[10].loss <= 0.8 * r.history[1].loss);
}
