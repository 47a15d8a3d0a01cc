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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "nnreduce/dataset.hpp"
#include "nnreduce/errors.hpp"
#include "nnreduce/model_io.hpp"
#include "nnreduce/pipeline.hpp"
#include "test_util.hpp"

using namespace nnr;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nnreduce_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.n_class = 3;
  s.n_per_class = 50;
  s.height = 8;
  s.width = 8;
  s.noise = 0.8;
  return s;
}

// conv 3x3 -> relu -> maxpool -> flatten -> linear(16, 8) -> relu -> linear(8, 3)
Network small_teacher(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Layer> layers;
  layers.emplace_back(make_conv2d(1, 4, 3, 1, 1, rng));
  layers.emplace_back(Relu{});
  layers.emplace_back(MaxPool2d{2, 2});
  layers.emplace_back(Flatten{});
  layers.emplace_back(make_linear(64, 8, rng));
  layers.emplace_back(Relu{});
  layers.emplace_back(make_linear(8, 3, rng));
  return Network({1, 8, 8}, std::move(layers));
}

PipelineOptions small_options() {
  PipelineOptions o;
  o.cut = 4;
  o.reduce.rank = 6;
  o.head.hidden = 8;
  o.head.fit_epochs = 20;
  o.distill.epochs = 2;
  return o;
}

}  // namespace

TEST_CASE("synthetic data") {
  const SyntheticSpec spec = small_spec();
  const auto [train, test] = gen_synthetic(spec);
  CHECK(train.size() == 120);
  CHECK(test.size() == 30);
  std::vector<std::size_t> counts(3, 0), train_counts(3, 0);
  for (std::size_t l : train.labels) ++counts[l], ++train_counts[l];
  for (std::size_t l : test.labels) ++counts[l];
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(counts[c] == 50);
    CHECK(train_counts[c] == 40);
  }
  CHECK(train.split == Split::train);
  CHECK(test.split == Split::test);
  CHECK(train.sample_shape() == Shape{1, 8, 8});

  const fs::path dir = temp_dir("synthetic");
  save_dataset(train, dir / "a.nsds");
  const auto again = gen_synthetic(spec);
  save_dataset(again.first, dir / "b.nsds");
  CHECK(slurp(dir / "a.nsds") == slurp(dir / "b.nsds"));

  SyntheticSpec other = spec;
  other.seed = 1;
  save_dataset(gen_synthetic(other).first, dir / "c.nsds");
  CHECK(slurp(dir / "a.nsds") != slurp(dir / "c.nsds"));

  SyntheticSpec bad = spec;
  bad.n_class = 1;
  CHECK_THROWS_AS(gen_synthetic(bad), Error);
}

TEST_CASE("dataset files") {
  const fs::path dir = temp_dir("dataset");
  const auto [train, test] = gen_synthetic(small_spec());
  save_dataset(test, dir / "t.nsds");
  const Dataset back = load_dataset(dir / "t.nsds");
  CHECK(back.labels == test.labels);
  CHECK(back.n_class == test.n_class);
  CHECK(back.split == Split::test);
  CHECK(back.inputs == test.inputs);

  SUBCASE("truncated") {
    fs::resize_file(dir / "t.nsds", fs::file_size(dir / "t.nsds") - 3);
    CHECK_THROWS_AS(load_dataset(dir / "t.nsds"), ParseError);
  }
  SUBCASE("bad magic") {
    std::vector<char> bytes = read_file(dir / "t.nsds");
    bytes[1] = 'x';
    write_file_atomic(dir / "t.nsds", bytes);
    CHECK_THROWS_AS(load_dataset(dir / "t.nsds"), ParseError);
  }
  SUBCASE("label out of range") {
    Dataset d = test;
    d.labels[0] = 7;
    CHECK_THROWS_AS(d.validate(), DataError);
  }
  CHECK_THROWS_AS(load_dataset(dir / "missing.nsds"), Error);
}

TEST_CASE("classifier training lowers the loss") {
  const auto [train, test] = gen_synthetic(small_spec());
  Network net = small_teacher(3);
  ClassifierTrainConfig cfg;
  cfg.epochs = 5;
  const auto hist = train_classifier(net, train, &test, cfg);
  REQUIRE(hist.size() == 5);
  CHECK(hist.back().loss < hist.front().loss);
  CHECK(hist.back().test_accuracy >= 0.0);
}

TEST_CASE("lossless path reproduces the teacher at epoch 0") {
  // Linear post-model; r equals the feature dimension and the head is a
  // degree-1 PCE, so the replacement is exact.
  Rng rng(50);
  std::vector<Layer> layers;
  layers.emplace_back(make_conv2d(1, 2, 3, 1, 1, rng));
  layers.emplace_back(Flatten{});
  layers.emplace_back(make_linear(32, 3, rng));
  const Network teacher({1, 4, 4}, std::move(layers));
  SyntheticSpec spec;
  spec.n_class = 3;
  spec.n_per_class = 60;
  spec.height = 4;
  spec.width = 4;
  const auto [train, test] = gen_synthetic(spec);

  PipelineOptions o;
  o.cut = 2;
  o.reduce.rank = 32;
  o.head.kind = HeadKind::pce;
  o.head.pce_degree = 1;
  o.distill.epochs = 0;
  const PipelineResult r = run_pipeline(teacher, train, test, o);
  CHECK(r.report.epoch0_accuracy == r.report.teacher_accuracy);
  for (std::size_t j = 0; j < test.size(); ++j) {
    const Tensor t = predict(teacher, test.inputs[j]);
    const std::vector<double> s = reduced_forward(r.net, test.inputs[j]);
    CHECK(nnr::test::max_abs_diff(t.values(), s) <= 1e-6);
  }
}

TEST_CASE("pipeline report") {
  const auto [train, test] = gen_synthetic(small_spec());
  const Network teacher = round_to_float32(small_teacher(4));
  const fs::path dir = temp_dir("pipeline");
  save_model(teacher, dir / "teacher.nsnn");
  save_dataset(train, dir / "train.nsds");
  save_dataset(test, dir / "test.nsds");

  for (auto method : {ReductionMethod::pod, ReductionMethod::as}) {
    PipelineOptions o = small_options();
    o.reduce.method = method;
    const Report a = run_pipeline_files(dir / "teacher.nsnn", dir / "train.nsds", dir / "test.nsds", dir / "a", o);
    const Report b = run_pipeline_files(dir / "teacher.nsnn", dir / "train.nsds", dir / "test.nsds", dir / "b", o);
    for (const char* f : {"report.json", "report.txt", "history.jsonl"}) CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
    CHECK(fs::exists(dir / "a" / "timings.json"));

    const StorageBreakdown& s = a.storage;
    CHECK(s.total == s.pre_model + s.projection + s.head);
    CHECK(s.teacher_total == artifact_storage_on_disk(dir / "teacher.nsnn"));
    CHECK(s.pre_model == artifact_storage_on_disk(dir / "a" / "pre.nsnn"));
    CHECK(s.projection == artifact_storage_on_disk(dir / "a" / "projection.nsnn"));
    CHECK(s.head == artifact_storage_on_disk(dir / "a" / "head.nsnn"));
    CHECK(s.compression_ratio == static_cast<double>(s.teacher_total) / static_cast<double>(s.total));
    CHECK(a.history.size() == 3);
    CHECK(a.history.front().test_accuracy == a.epoch0_accuracy);
    CHECK(a.history.back().test_accuracy == a.final_accuracy);

    const ReducedNet loaded = load_reduced(dir / "a");
    CHECK(evaluate(loaded, test) == doctest::Approx(a.final_accuracy).epsilon(0.05));
  }
}

TEST_CASE("pipeline failures name the stage and leave no artifacts") {
  const auto [train, test] = gen_synthetic(small_spec());
  const fs::path dir = temp_dir("pipeline_fail");
  save_model(small_teacher(5), dir / "teacher.nsnn");
  save_dataset(train, dir / "train.nsds");
  save_dataset(test, dir / "test.nsds");

  PipelineOptions o = small_options();
  o.reduce.rank = 65;
  try {
    run_pipeline_files(dir / "teacher.nsnn", dir / "train.nsds", dir / "test.nsds", dir / "out", o);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("stage 'reduce'") != std::string::npos);
    CHECK(exit_code_for(e.kind()) == 2);
  }
  CHECK((!fs::exists(dir / "out") || fs::is_empty(dir / "out")));

  o = small_options();
  o.cut = 7;
  CHECK_THROWS_AS(run_pipeline_files(dir / "teacher.nsnn", dir / "train.nsds", dir / "test.nsds", dir / "out", o),
                  Error);
  o = small_options();
  try {
    run_pipeline_files(dir / "teacher.nsnn", dir / "missing.nsds", dir / "test.nsds", dir / "out", o);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("stage 'load'") != std::string::npos);
    CHECK(exit_code_for(e.kind()) == 3);
  }
  o.reduce.rank = 0;
  CHECK_THROWS_AS(o.validate(), ConfigError);
}

TEST_CASE("head sweep") {
  const auto [train, test] = gen_synthetic(small_spec());
  const Network teacher = small_teacher(6);
  const PipelineOptions base = small_options();

  SUBCASE("single cell equals a plain run") {
    const std::vector<std::size_t> w = {8}, d = {1};
    const auto cells = sweep_heads(teacher, train, test, base, w, d);
    REQUIRE(cells.size() == 1);
    const PipelineResult plain = run_pipeline(teacher, train, test, base);
    CHECK(cells[0].ok);
    CHECK(cells[0].epoch0_accuracy == plain.report.epoch0_accuracy);
    CHECK(cells[0].final_accuracy == plain.report.final_accuracy);
    CHECK(cells[0].head_bytes == 4 * head_param_count(plain.net.head));
  }
  SUBCASE("grid storage") {
    const std::vector<std::size_t> w = {4, 8, 12}, d = {1, 2};
    const auto cells = sweep_heads(teacher, train, test, base, w, d);
    REQUIRE(cells.size() == 6);
    for (const auto& c : cells) {
      CHECK(c.ok);
      std::size_t params = base.reduce.rank * c.width + c.width * 3 + (c.depth - 1) * c.width * c.width;
      CHECK(c.head_bytes == 4 * params);
    }
    for (std::size_t i = 1; i < cells.size(); ++i)
      if (cells[i].depth == cells[i - 1].depth) CHECK(cells[i].head_bytes > cells[i - 1].head_bytes);
    const std::string table = sweep_table(cells);
    CHECK(table.rfind("width\tdepth\tstatus", 0) == 0);
    CHECK(std::count(table.begin(), table.end(), '\n') == 7);
  }
  SUBCASE("failed cells are marked and the sweep continues") {
    const std::vector<std::size_t> w = {0, 6}, d = {1};
    const auto cells = sweep_heads(teacher, train, test, base, w, d);
    REQUIRE(cells.size() == 2);
    CHECK_FALSE(cells[0].ok);
    CHECK(cells[1].ok);
    CHECK(sweep_table(cells).find("failed") != std::string::npos);
  }
}
