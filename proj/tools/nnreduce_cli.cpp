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

// nnreduce command-line tool.

#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "nnreduce/nnreduce.h"

namespace fs = std::filesystem;

namespace {

// Carries an nnr_status out of a subcommand.
struct Failure {
  nnr_status status;
};

void check(nnr_status s) {
  if (s != NNR_OK) {
    std::fprintf(stderr, "nnreduce: %s: %s\n", nnr_status_string(s), nnr_last_error());
    throw Failure{s};
  }
}

[[noreturn]] void config_error(const std::string& msg) {
  std::fprintf(stderr, "nnreduce: configuration error: %s\n", msg.c_str());
  throw Failure{NNR_ERR_CONFIG};
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Model = std::unique_ptr<nnr_model, Deleter<nnr_model, nnr_model_free>>;
using Data = std::unique_ptr<nnr_dataset, Deleter<nnr_dataset, nnr_dataset_free>>;
using Projection = std::unique_ptr<nnr_projection, Deleter<nnr_projection, nnr_projection_free>>;
using HeadPtr = std::unique_ptr<nnr_head, Deleter<nnr_head, nnr_head_free>>;
using Reduced = std::unique_ptr<nnr_reduced, Deleter<nnr_reduced, nnr_reduced_free>>;

Model load_model(const std::string& path) {
  nnr_model* m = nullptr;
  check(nnr_model_load(path.c_str(), &m));
  return Model(m);
}

Data load_data(const std::string& path) {
  nnr_dataset* d = nullptr;
  check(nnr_dataset_load(path.c_str(), &d));
  return Data(d);
}

// --data names either a directory holding train.nsds and test.nsds (as
// written by gen-data) or a single dataset file.
struct DataPaths {
  std::string data;
  std::string test;  // --test overrides the test split

  std::string train_path() const { return fs::is_directory(data) ? (fs::path(data) / "train.nsds").string() : data; }
  std::string test_path() const {
    if (!test.empty()) return test;
    if (fs::is_directory(data)) return (fs::path(data) / "test.nsds").string();
    config_error("--data is a single file; pass the test split with --test");
  }
  std::string split_path(const std::string& split) const { return split == "test" ? test_path() : train_path(); }
};

struct Flags {
  nnr_options opts{};
  std::string model, out, reduced, projection, split = "train", eval_split = "test";
  DataPaths data;
  std::string reducer, head, family = "hermite", fit_loss = "logits";
  std::size_t sketch = 0;
  std::vector<std::size_t> widths, depths;
  // gen-data / train-teacher
  nnr_synthetic_spec spec{};
  nnr_teacher_options teacher{};
};

void add_model(CLI::App* c, Flags& f) { c->add_option("--model", f.model, "teacher model manifest (.nsnn)")->required(); }
void add_data(CLI::App* c, Flags& f) {
  c->add_option("--data", f.data.data, "dataset directory or file")->required();
  c->add_option("--test", f.data.test, "test split file when --data is a file");
}
void add_cut(CLI::App* c, Flags& f) {
  c->add_option("--cut-layer", f.opts.cut, "layers kept in the pre-model, counting every layer")->required();
}
void add_reduce(CLI::App* c, Flags& f) {
  c->add_option("--rank", f.opts.rank, "reduced dimension r")->required();
  c->add_option("--reducer", f.reducer, "pod or as")->required();
  c->add_flag("--center", f.opts.center, "subtract the snapshot mean (pod)");
  c->add_flag("--exact-covariance", f.opts.exact_covariance, "as: exact gradient covariance instead of a sketch");
  c->add_option("--sketch", f.opts.fd_sketch, "as: Frequent Directions sketch rows (default 2 * rank)");
  c->add_flag("--normalize-gradients", f.opts.normalize_gradients, "as: scale each gradient to unit norm");
}
void add_head(CLI::App* c, Flags& f, bool required) {
  auto* o = c->add_option("--head", f.head, "pce or fnn");
  if (required) o->required();
  c->add_option("--pce-degree", f.opts.pce_degree, "total degree of the PCE head")->capture_default_str();
  c->add_option("--pce-family", f.family, "hermite or legendre")->capture_default_str();
  c->add_option("--hidden", f.opts.hidden, "FNN hidden width")->capture_default_str();
  c->add_option("--hidden-layers", f.opts.hidden_layers, "FNN hidden layer count")->capture_default_str();
  c->add_option("--beta", f.opts.beta, "Softplus beta of the FNN head")->capture_default_str();
  c->add_option("--head-fit", f.fit_loss, "FNN fit target: labels or logits")->capture_default_str();
  c->add_option("--head-epochs", f.opts.head_fit_epochs, "FNN fit epochs before distillation")
      ->capture_default_str();
  c->add_option("--head-lr", f.opts.head_fit_learning_rate, "FNN fit learning rate (Adam)")
      ->capture_default_str();
}
void add_distill(CLI::App* c, Flags& f) {
  c->add_option("--epochs", f.opts.epochs, "distillation epochs")->capture_default_str();
  c->add_option("--tau", f.opts.tau, "distillation temperature")->capture_default_str();
  c->add_option("--lambda", f.opts.lambda, "weight of the distillation term")->capture_default_str();
  c->add_option("--lr", f.opts.learning_rate, "SGD learning rate")->capture_default_str();
  c->add_option("--momentum", f.opts.momentum, "SGD momentum")->capture_default_str();
  c->add_option("--batch-size", f.opts.batch_size, "mini-batch size")->capture_default_str();
  c->add_flag("--train-projection", f.opts.train_projection, "also train the projection basis");
  c->add_flag("--train-pre", f.opts.train_pre, "also train the pre-model");
}
void add_seed(CLI::App* c, Flags& f) { c->add_option("--seed", f.opts.seed, "random seed")->capture_default_str(); }
void add_out(CLI::App* c, Flags& f, const char* what) { c->add_option("--out", f.out, what)->required(); }

void resolve_names(Flags& f) {
  if (!f.reducer.empty()) check(nnr_parse_reducer(f.reducer.c_str(), &f.opts.reducer));
  if (!f.head.empty()) check(nnr_parse_head(f.head.c_str(), &f.opts.head));
  check(nnr_parse_pce_family(f.family.c_str(), &f.opts.pce_family));
  check(nnr_parse_fit_loss(f.fit_loss.c_str(), &f.opts.head_fit_loss));
}

void print_storage(const nnr_storage& s) {
  std::printf("storage bytes: pre-model %zu, projection %zu, head %zu, total %zu, teacher %zu\n", s.pre_model,
              s.projection, s.head, s.total, s.teacher);
  std::printf("compression ratio: %.3f\n", s.compression_ratio);
}

void cmd_gen_data(Flags& f) {
  nnr_dataset *tr = nullptr, *te = nullptr;
  check(nnr_gen_synthetic(&f.spec, &tr, &te));
  Data train(tr), test(te);
  fs::create_directories(f.out);
  check(nnr_dataset_save(train.get(), (fs::path(f.out) / "train.nsds").c_str()));
  check(nnr_dataset_save(test.get(), (fs::path(f.out) / "test.nsds").c_str()));
  std::size_t n_train = 0, n_test = 0;
  check(nnr_dataset_info(train.get(), &n_train, nullptr));
  check(nnr_dataset_info(test.get(), &n_test, nullptr));
  std::printf("wrote %zu train and %zu test samples to %s\n", n_train, n_test, f.out.c_str());
}

void cmd_train_teacher(Flags& f) {
  Data train = load_data(f.data.train_path());
  Data test = load_data(f.data.test_path());
  nnr_model* m = nullptr;
  check(nnr_default_teacher(train.get(), f.opts.seed, &m));
  Model model(m);
  f.teacher.seed = f.opts.seed;
  double acc = 0.0;
  check(nnr_train_teacher(model.get(), train.get(), test.get(), &f.teacher, &acc));
  check(nnr_model_save(model.get(), f.out.c_str()));
  std::printf("teacher test accuracy: %.4f\n", acc);
}

void cmd_split(Flags& f) {
  Model model = load_model(f.model);
  nnr_model *pre = nullptr, *post = nullptr;
  check(nnr_model_split(model.get(), f.opts.cut, &pre, &post));
  Model p(pre), q(post);
  fs::create_directories(f.out);
  check(nnr_model_save(p.get(), (fs::path(f.out) / "pre.nsnn").c_str()));
  check(nnr_model_save(q.get(), (fs::path(f.out) / "post.nsnn").c_str()));
}

void cmd_features(Flags& f) {
  Model model = load_model(f.model);
  Data data = load_data(f.data.split_path(f.split));
  nnr_model *pre = nullptr, *post = nullptr;
  check(nnr_model_split(model.get(), f.opts.cut, &pre, &post));
  Model p(pre), q(post);
  nnr_dataset* out = nullptr;
  check(nnr_features(p.get(), data.get(), &out));
  Data features(out);
  check(nnr_dataset_save(features.get(), f.out.c_str()));
}

void cmd_reduce(Flags& f) {
  resolve_names(f);
  Model model = load_model(f.model);
  Data train = load_data(f.data.train_path());
  nnr_projection* p = nullptr;
  check(nnr_reduce(model.get(), train.get(), &f.opts, &p));
  Projection proj(p);
  fs::create_directories(f.out);
  check(nnr_projection_save(proj.get(), (fs::path(f.out) / "projection.nsnn").c_str()));
}

void cmd_fit_head(Flags& f) {
  resolve_names(f);
  Model model = load_model(f.model);
  Data train = load_data(f.data.train_path());
  const std::string proj_path = f.projection.empty() ? (fs::path(f.out) / "projection.nsnn").string() : f.projection;
  nnr_projection* p = nullptr;
  check(nnr_projection_load(proj_path.c_str(), &p));
  Projection proj(p);
  nnr_head* h = nullptr;
  check(nnr_fit_head(model.get(), proj.get(), train.get(), &f.opts, &h));
  HeadPtr head(h);
  fs::create_directories(f.out);
  check(nnr_head_save(head.get(), (fs::path(f.out) / "head.nsnn").c_str()));
}

void cmd_distill(Flags& f) {
  Model teacher = load_model(f.model);
  Data train = load_data(f.data.train_path());
  Data test = load_data(f.data.test_path());
  const std::string in_dir = f.reduced.empty() ? f.out : f.reduced;
  nnr_reduced* r = nullptr;
  check(nnr_reduced_load(in_dir.c_str(), &r));
  Reduced student(r);
  fs::create_directories(f.out);
  const std::string history = (fs::path(f.out) / "history.jsonl").string();
  nnr_reduced* o = nullptr;
  check(nnr_distill(student.get(), teacher.get(), train.get(), test.get(), &f.opts, history.c_str(), &o));
  Reduced trained(o);
  check(nnr_reduced_save(trained.get(), f.out.c_str()));
  double acc = 0.0;
  check(nnr_reduced_eval(trained.get(), test.get(), &acc));
  std::printf("test accuracy after distillation: %.4f\n", acc);
}

void cmd_eval(Flags& f) {
  if (f.model.empty() == f.reduced.empty()) config_error("pass exactly one of --model and --reduced");
  Data data = load_data(f.data.split_path(f.eval_split));
  double acc = 0.0;
  if (!f.model.empty()) {
    Model model = load_model(f.model);
    check(nnr_model_eval(model.get(), data.get(), &acc));
  } else {
    nnr_reduced* r = nullptr;
    check(nnr_reduced_load(f.reduced.c_str(), &r));
    Reduced net(r);
    check(nnr_reduced_eval(net.get(), data.get(), &acc));
  }
  std::printf("accuracy: %.4f\n", acc);
}

void cmd_pipeline(Flags& f) {
  resolve_names(f);
  nnr_summary s{};
  check(nnr_pipeline_run(f.model.c_str(), f.data.train_path().c_str(), f.data.test_path().c_str(), f.out.c_str(),
                         &f.opts, &s));
  std::printf("teacher accuracy: %.4f\nepoch-0 accuracy: %.4f\nfinal accuracy: %.4f\n", s.teacher_accuracy,
              s.epoch0_accuracy, s.final_accuracy);
  print_storage(s.storage);
}

void cmd_sweep(Flags& f) {
  resolve_names(f);
  f.opts.head = NNR_HEAD_FNN;
  check(nnr_sweep_heads(f.model.c_str(), f.data.train_path().c_str(), f.data.test_path().c_str(), &f.opts,
                        f.widths.data(), f.widths.size(), f.depths.data(), f.depths.size(), f.out.c_str()));
  std::printf("wrote %s\n", f.out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reduce a trained network: split, project, replace the tail, distill."};
  app.require_subcommand(1);
  app.set_version_flag("--version", nnr_version());

  Flags f;
  nnr_options_init(&f.opts);
  nnr_synthetic_spec_init(&f.spec);
  nnr_teacher_options_init(&f.teacher);
  void (*run)(Flags&) = nullptr;

  auto* gen = app.add_subcommand("gen-data", "write the synthetic benchmark (train.nsds, test.nsds)");
  add_out(gen, f, "output directory");
  gen->add_option("--seed", f.spec.seed, "random seed")->capture_default_str();
  gen->add_option("--n-class", f.spec.n_class, "number of classes")->capture_default_str();
  gen->add_option("--n-per-class", f.spec.n_per_class, "samples per class")->capture_default_str();
  gen->add_option("--channels", f.spec.channels)->capture_default_str();
  gen->add_option("--height", f.spec.height)->capture_default_str();
  gen->add_option("--width", f.spec.width)->capture_default_str();
  gen->add_option("--noise", f.spec.noise, "pixel noise standard deviation")->capture_default_str();
  gen->callback([&] { run = cmd_gen_data; });

  auto* tt = app.add_subcommand("train-teacher", "train the default CNN teacher");
  add_data(tt, f);
  add_seed(tt, f);
  add_out(tt, f, "model manifest to write");
  tt->add_option("--epochs", f.teacher.epochs)->capture_default_str();
  tt->add_option("--lr", f.teacher.learning_rate)->capture_default_str();
  tt->add_option("--batch-size", f.teacher.batch_size)->capture_default_str();
  tt->callback([&] { run = cmd_train_teacher; });

  auto* split = app.add_subcommand("split", "write pre.nsnn and post.nsnn");
  add_model(split, f);
  add_cut(split, f);
  add_out(split, f, "output directory");
  split->callback([&] { run = cmd_split; });

  auto* feat = app.add_subcommand("features", "write pre-model outputs as a dataset file");
  add_model(feat, f);
  add_data(feat, f);
  add_cut(feat, f);
  feat->add_option("--split", f.split, "train or test")->check(CLI::IsMember({"train", "test"}));
  add_out(feat, f, "dataset file to write");
  feat->callback([&] { run = cmd_features; });

  auto* red = app.add_subcommand("reduce", "build the projection (projection.nsnn)");
  add_model(red, f);
  add_data(red, f);
  add_cut(red, f);
  add_reduce(red, f);
  add_out(red, f, "output directory");
  red->callback([&] { run = cmd_reduce; });

  auto* fit = app.add_subcommand("fit-head", "fit the replacement head (head.nsnn)");
  add_model(fit, f);
  add_data(fit, f);
  add_cut(fit, f);
  add_head(fit, f, true);
  add_seed(fit, f);
  fit->add_option("--projection", f.projection, "projection manifest (default OUT/projection.nsnn)");
  add_out(fit, f, "output directory");
  fit->callback([&] { run = cmd_fit_head; });

  auto* dis = app.add_subcommand("distill", "train a reduced net against the teacher");
  add_model(dis, f);
  add_data(dis, f);
  add_distill(dis, f);
  add_seed(dis, f);
  dis->add_option("--reduced", f.reduced, "directory with pre.nsnn, projection.nsnn, head.nsnn (default OUT)");
  add_out(dis, f, "output directory");
  dis->callback([&] { run = cmd_distill; });

  auto* ev = app.add_subcommand("eval", "accuracy of a model or reduced net");
  ev->add_option("--model", f.model, "model manifest");
  ev->add_option("--reduced", f.reduced, "reduced net directory");
  add_data(ev, f);
  ev->add_option("--split", f.eval_split, "train or test")->check(CLI::IsMember({"train", "test"}));
  ev->callback([&] { run = cmd_eval; });

  auto* pipe = app.add_subcommand("pipeline", "run every stage and write a report");
  add_model(pipe, f);
  add_data(pipe, f);
  add_cut(pipe, f);
  add_reduce(pipe, f);
  add_head(pipe, f, true);
  add_distill(pipe, f);
  add_seed(pipe, f);
  add_out(pipe, f, "output directory");
  pipe->callback([&] { run = cmd_pipeline; });

  auto* sweep = app.add_subcommand("sweep-heads", "grid of FNN heads, written as a TSV table");
  add_model(sweep, f);
  add_data(sweep, f);
  add_cut(sweep, f);
  add_reduce(sweep, f);
  add_head(sweep, f, false);
  add_distill(sweep, f);
  add_seed(sweep, f);
  sweep->add_option("--widths", f.widths, "hidden widths")->delimiter(',')->required();
  sweep->add_option("--depths", f.depths, "hidden layer counts")->delimiter(',')->required();
  add_out(sweep, f, "table file to write");
  sweep->callback([&] { run = cmd_sweep; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return NNR_ERR_CONFIG;
  }
  try {
    run(f);
  } catch (const Failure& e) {
    return e.status;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "nnreduce: data error: %s\n", e.what());
    return NNR_ERR_DATA;
  }
  return 0;
}
