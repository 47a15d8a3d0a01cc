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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "nnreduce/nnreduce.h"

namespace fs = std::filesystem;

#ifndef NNR_CLI_PATH
#error "NNR_CLI_PATH must name the command-line binary"
#endif

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nnreduce_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(NNR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Small benchmark shared by the CLI cases: 3 classes of 8x8 images and a
// briefly trained default teacher.
struct Fixture {
  fs::path dir;
  Fixture() : dir(temp_dir("cli")) {
    nnr_synthetic_spec spec;
    nnr_synthetic_spec_init(&spec);
    spec.n_class = 3;
    spec.n_per_class = 30;
    spec.height = 8;
    spec.width = 8;
    nnr_dataset *train = nullptr, *test = nullptr;
    REQUIRE(nnr_gen_synthetic(&spec, &train, &test) == NNR_OK);
    fs::create_directories(dir / "data");
    REQUIRE(nnr_dataset_save(train, (dir / "data" / "train.nsds").c_str()) == NNR_OK);
    REQUIRE(nnr_dataset_save(test, (dir / "data" / "test.nsds").c_str()) == NNR_OK);
    nnr_model* teacher = nullptr;
    REQUIRE(nnr_default_teacher(train, 0, &teacher) == NNR_OK);
    nnr_teacher_options topts;
    nnr_teacher_options_init(&topts);
    topts.epochs = 3;
    double acc = -1.0;
    REQUIRE(nnr_train_teacher(teacher, train, test, &topts, &acc) == NNR_OK);
    CHECK(acc >= 0.0);
    REQUIRE(nnr_model_save(teacher, (dir / "teacher.nsnn").c_str()) == NNR_OK);
    nnr_model_free(teacher);
    nnr_dataset_free(train);
    nnr_dataset_free(test);
  }
  std::string common() const {
    return "--model " + (dir / "teacher.nsnn").string() + " --data " + (dir / "data").string();
  }
};

}  // namespace

TEST_CASE("status codes and error messages") {
  nnr_model* m = nullptr;
  CHECK(nnr_model_load("/nonexistent/model.nsnn", &m) == NNR_ERR_DATA);
  CHECK(m == nullptr);
  CHECK(std::string(nnr_last_error()).size() > 0);
  CHECK(nnr_model_load(nullptr, &m) == NNR_ERR_CONFIG);
  CHECK(std::string(nnr_status_string(NNR_ERR_NUMERIC)) == "numerical error");

  nnr_reducer r;
  CHECK(nnr_parse_reducer("as", &r) == NNR_OK);
  CHECK(r == NNR_REDUCER_AS);
  CHECK(nnr_parse_reducer("svd", &r) == NNR_ERR_CONFIG);
  nnr_head_kind h;
  CHECK(nnr_parse_head("pce", &h) == NNR_OK);
  CHECK(h == NNR_HEAD_PCE);
  CHECK(nnr_parse_head("pce", nullptr) == NNR_ERR_CONFIG);

  nnr_options o;
  nnr_options_init(&o);
  CHECK(o.tau == 4.0);
  CHECK(o.lambda == 0.5);
  CHECK(o.epochs == 10);
  CHECK(o.pce_degree == 2);
  CHECK(o.hidden == 20);
  CHECK(o.cut == 0);
  CHECK(o.rank == 0);
}

TEST_CASE("staged use of the C interface") {
  Fixture fx;
  nnr_model* teacher = nullptr;
  nnr_dataset *train = nullptr, *test = nullptr;
  REQUIRE(nnr_model_load((fx.dir / "teacher.nsnn").c_str(), &teacher) == NNR_OK);
  REQUIRE(nnr_dataset_load((fx.dir / "data" / "train.nsds").c_str(), &train) == NNR_OK);
  REQUIRE(nnr_dataset_load((fx.dir / "data" / "test.nsds").c_str(), &test) == NNR_OK);

  size_t layers = 0;
  REQUIRE(nnr_model_info(teacher, &layers, nullptr, nullptr) == NNR_OK);
  CHECK(layers == 10);

  nnr_options o;
  nnr_options_init(&o);
  o.cut = 6;
  o.rank = 8;
  o.head_fit_epochs = 20;
  o.epochs = 1;
  nnr_projection* proj = nullptr;
  REQUIRE(nnr_reduce(teacher, train, &o, &proj) == NNR_OK);
  size_t rank = 0, n_l = 0;
  REQUIRE(nnr_projection_info(proj, &rank, &n_l, nullptr) == NNR_OK);
  CHECK(rank == 8);
  CHECK(n_l == 64);

  nnr_head* head = nullptr;
  REQUIRE(nnr_fit_head(teacher, proj, train, &o, &head) == NNR_OK);
  nnr_model *pre = nullptr, *post = nullptr;
  REQUIRE(nnr_model_split(teacher, 6, &pre, &post) == NNR_OK);
  nnr_reduced* net = nullptr;
  REQUIRE(nnr_reduced_assemble(pre, proj, head, &net) == NNR_OK);
  nnr_reduced* trained = nullptr;
  REQUIRE(nnr_distill(net, teacher, train, test, &o, nullptr, &trained) == NNR_OK);
  double acc = -1.0;
  REQUIRE(nnr_reduced_eval(trained, test, &acc) == NNR_OK);
  CHECK(acc >= 0.0);
  nnr_storage s;
  REQUIRE(nnr_reduced_storage(trained, teacher, &s) == NNR_OK);
  CHECK(s.total == s.pre_model + s.projection + s.head);

  // Projection rank beyond the feature dimension.
  o.rank = 65;
  nnr_projection* bad = nullptr;
  CHECK(nnr_reduce(teacher, train, &o, &bad) == NNR_ERR_CONFIG);
  CHECK(bad == nullptr);
  // Dataset of the wrong shape for the model.
  nnr_dataset* feats = nullptr;
  REQUIRE(nnr_features(pre, train, &feats) == NNR_OK);
  CHECK(nnr_model_eval(teacher, feats, &acc) != NNR_OK);

  nnr_dataset_free(feats);
  nnr_reduced_free(trained);
  nnr_reduced_free(net);
  nnr_model_free(pre);
  nnr_model_free(post);
  nnr_head_free(head);
  nnr_projection_free(proj);
  nnr_dataset_free(train);
  nnr_dataset_free(test);
  nnr_model_free(teacher);
}

TEST_CASE("command line") {
  Fixture fx;
  const std::string c = fx.common();
  const std::string out = (fx.dir / "run").string();
  const std::string quick = " --head-epochs 20 --epochs 1";

  SUBCASE("exit codes") {
    CHECK(run_cli("") == 2);
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("pipeline " + c + " --cut-layer 6 --reducer pod --head fnn --out " + out) == 2);  // no --rank
    CHECK(run_cli("pipeline " + c + " --cut-layer 6 --rank 8 --reducer svd --head fnn --out " + out) == 2);
    CHECK(run_cli("pipeline " + c + " --cut-layer 10 --rank 8 --reducer pod --head fnn --out " + out) == 2);
    CHECK(run_cli("pipeline --model /nonexistent.nsnn --data " + (fx.dir / "data").string() +
                  " --cut-layer 6 --rank 8 --reducer pod --head fnn --out " + out) == 3);
    CHECK(run_cli("pipeline " + c + " --cut-layer 6 --rank 8 --reducer pod --head fnn --lr 1e308 --out " + out +
                  quick) == 4);
  }
  SUBCASE("pipeline writes reproducible reports") {
    const std::string args = "pipeline " + c + " --cut-layer 6 --rank 8 --reducer as --head pce --seed 3" + quick;
    REQUIRE(run_cli(args + " --out " + out + "_a") == 0);
    REQUIRE(run_cli(args + " --out " + out + "_b") == 0);
    for (const char* f : {"pre.nsnn", "projection.nsnn", "head.nsnn", "report.json", "report.txt", "history.jsonl"}) {
      CHECK(fs::exists(fs::path(out + "_a") / f));
      CHECK(slurp(fs::path(out + "_a") / f) == slurp(fs::path(out + "_b") / f));
    }
  }
  SUBCASE("staged subcommands") {
    CHECK(run_cli("split --model " + (fx.dir / "teacher.nsnn").string() + " --cut-layer 6 --out " + out) == 0);
    CHECK(fs::exists(fs::path(out) / "pre.nsnn"));
    CHECK(fs::exists(fs::path(out) / "post.nsnn"));
    CHECK(run_cli("features " + c + " --cut-layer 6 --out " + out + "/features.nsds") == 0);
    CHECK(run_cli("reduce " + c + " --cut-layer 6 --rank 8 --reducer pod --out " + out) == 0);
    CHECK(run_cli("fit-head " + c + " --cut-layer 6 --head fnn --head-epochs 20 --out " + out) == 0);
    CHECK(run_cli("distill " + c + " --epochs 1 --out " + out) == 0);
    CHECK(fs::exists(fs::path(out) / "history.jsonl"));
    CHECK(run_cli("eval --reduced " + out + " --data " + (fx.dir / "data").string()) == 0);
    CHECK(run_cli("eval --model " + (fx.dir / "teacher.nsnn").string() + " --data " + (fx.dir / "data").string() +
                  " --split test") == 0);
    CHECK(run_cli("sweep-heads " + c + " --cut-layer 6 --rank 8 --reducer pod --widths 4,8 --depths 1" + quick +
                  " --out " + out + "/sweep.tsv") == 0);
    CHECK(slurp(fs::path(out) / "sweep.tsv").rfind("width\tdepth", 0) == 0);
  }
}
