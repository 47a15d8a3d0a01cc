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

#include "nnreduce/nnreduce.h"

#include <cstring>
#include <new>
#include <string>

#include "json.hpp"
#include "nnreduce/errors.hpp"
#include "nnreduce/model_io.hpp"
#include "nnreduce/pipeline.hpp"

struct nnr_model {
  nnr::Network net;
};
struct nnr_dataset {
  nnr::Dataset data;
};
struct nnr_projection {
  nnr::ProjectionMap map;
};
struct nnr_head {
  nnr::Head head;
};
struct nnr_reduced {
  nnr::ReducedNet net;
};

namespace {

thread_local std::string last_error;

nnr_status fail(nnr_status status, const std::string& message) {
  last_error = message;
  return status;
}

template <class Fn>
nnr_status guarded(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return NNR_OK;
  } catch (const nnr::Error& e) {
    return fail(static_cast<nnr_status>(nnr::exit_code_for(e.kind())), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(NNR_ERR_DATA, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(NNR_ERR_DATA, e.what());
  } catch (const std::bad_alloc&) {
    return fail(NNR_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(NNR_ERR_INTERNAL, e.what());
  }
}

template <class T>
const T& need(const T* p, const char* what) {
  if (!p) throw nnr::ContractError(std::string(what) + " is null");
  return *p;
}

template <class T>
T** need_out(T** p) {
  if (!p) throw nnr::ContractError("output pointer is null");
  return p;
}

template <class T>
T* need_ptr(T* p) {
  if (!p) throw nnr::ContractError("output pointer is null");
  return p;
}

const char* need_str(const char* s, const char* what) {
  if (!s) throw nnr::ContractError(std::string(what) + " is null");
  return s;
}

nnr::PipelineOptions to_options(const nnr_options& o) {
  nnr::PipelineOptions p;
  p.cut = o.cut;
  p.seed = o.seed;
  p.reduce.method = o.reducer == NNR_REDUCER_AS ? nnr::ReductionMethod::as : nnr::ReductionMethod::pod;
  p.reduce.rank = o.rank;
  p.reduce.center = o.center != 0;
  p.reduce.exact_covariance = o.exact_covariance != 0;
  p.reduce.fd_sketch = o.fd_sketch;
  p.reduce.normalize_gradients = o.normalize_gradients != 0;
  p.head.kind = o.head == NNR_HEAD_PCE ? nnr::HeadKind::pce : nnr::HeadKind::fnn;
  p.head.pce_degree = o.pce_degree;
  p.head.family = o.pce_family == NNR_PCE_LEGENDRE ? nnr::PceFamily::legendre : nnr::PceFamily::hermite;
  p.head.hidden = o.hidden;
  p.head.hidden_layers = o.hidden_layers;
  p.head.beta = o.beta;
  p.head.fit_loss = o.head_fit_loss == NNR_FIT_LOGITS ? nnr::FnnFitLoss::logits : nnr::FnnFitLoss::labels;
  p.head.fit_epochs = o.head_fit_epochs;
  p.head.fit_learning_rate = o.head_fit_learning_rate;
  p.head.fit_batch_size = o.head_fit_batch_size;
  p.distill.tau = o.tau;
  p.distill.lambda = o.lambda;
  p.distill.epochs = o.epochs;
  p.distill.batch_size = o.batch_size;
  p.distill.learning_rate = o.learning_rate;
  p.distill.momentum = o.momentum;
  p.distill.train_head = o.train_head != 0;
  p.distill.train_projection = o.train_projection != 0;
  p.distill.train_pre = o.train_pre != 0;
  p.distill.seed = o.seed;
  return p;
}

nnr_storage to_c(const nnr::StorageBreakdown& s) {
  return nnr_storage{s.pre_model, s.projection, s.head, s.total, s.teacher_total, s.compression_ratio};
}

nnr::Dataset load_data(const char* path, const char* what) { return nnr::load_dataset(need_str(path, what)); }

}  // namespace

extern "C" {

const char* nnr_version(void) { return "0.1.0"; }

const char* nnr_last_error(void) { return last_error.c_str(); }

const char* nnr_status_string(nnr_status status) {
  switch (status) {
    case NNR_OK:
      return "ok";
    case NNR_ERR_INTERNAL:
      return "internal error";
    case NNR_ERR_CONFIG:
      return "configuration error";
    case NNR_ERR_DATA:
      return "data error";
    case NNR_ERR_NUMERIC:
      return "numerical error";
  }
  return "unknown status";
}

void nnr_options_init(nnr_options* o) {
  if (!o) return;
  const nnr::PipelineOptions p;
  std::memset(o, 0, sizeof *o);
  o->reducer = NNR_REDUCER_POD;
  o->head = NNR_HEAD_FNN;
  o->pce_degree = p.head.pce_degree;
  o->pce_family = NNR_PCE_HERMITE;
  o->hidden = p.head.hidden;
  o->hidden_layers = p.head.hidden_layers;
  o->beta = p.head.beta;
  o->head_fit_loss = p.head.fit_loss == nnr::FnnFitLoss::logits ? NNR_FIT_LOGITS : NNR_FIT_LABELS;
  o->head_fit_epochs = p.head.fit_epochs;
  o->head_fit_learning_rate = p.head.fit_learning_rate;
  o->head_fit_batch_size = p.head.fit_batch_size;
  o->tau = p.distill.tau;
  o->lambda = p.distill.lambda;
  o->epochs = p.distill.epochs;
  o->batch_size = p.distill.batch_size;
  o->learning_rate = p.distill.learning_rate;
  o->momentum = p.distill.momentum;
  o->train_head = 1;
}

void nnr_synthetic_spec_init(nnr_synthetic_spec* spec) {
  if (!spec) return;
  const nnr::SyntheticSpec s;
  *spec = nnr_synthetic_spec{s.seed, s.n_class, s.n_per_class, s.channels, s.height, s.width, s.noise};
}

void nnr_teacher_options_init(nnr_teacher_options* opts) {
  if (!opts) return;
  const nnr::ClassifierTrainConfig c;
  *opts = nnr_teacher_options{c.epochs, c.batch_size, c.learning_rate, c.momentum, c.seed};
}

nnr_status nnr_parse_reducer(const char* name, nnr_reducer* out) {
  return guarded([&] {
    const auto m = nnr::parse_reduction_method(need_str(name, "reducer name"));
    *need_ptr(out) = m == nnr::ReductionMethod::as ? NNR_REDUCER_AS : NNR_REDUCER_POD;
  });
}

nnr_status nnr_parse_head(const char* name, nnr_head_kind* out) {
  return guarded([&] {
    const auto k = nnr::parse_head_kind(need_str(name, "head name"));
    *need_ptr(out) = k == nnr::HeadKind::pce ? NNR_HEAD_PCE : NNR_HEAD_FNN;
  });
}

nnr_status nnr_parse_fit_loss(const char* name, nnr_fit_loss* out) {
  return guarded([&] {
    const auto l = nnr::parse_fnn_fit_loss(need_str(name, "fit target"));
    *need_ptr(out) = l == nnr::FnnFitLoss::logits ? NNR_FIT_LOGITS : NNR_FIT_LABELS;
  });
}

nnr_status nnr_parse_pce_family(const char* name, nnr_pce_family* out) {
  return guarded([&] {
    const auto f = nnr::parse_pce_family(need_str(name, "family name"));
    *need_ptr(out) = f == nnr::PceFamily::legendre ? NNR_PCE_LEGENDRE : NNR_PCE_HERMITE;
  });
}

nnr_status nnr_model_load(const char* path, nnr_model** out) {
  return guarded([&] { *need_out(out) = new nnr_model{nnr::load_model(need_str(path, "path"))}; });
}

nnr_status nnr_model_save(const nnr_model* model, const char* path) {
  return guarded([&] { nnr::save_model(need(model, "model").net, need_str(path, "path")); });
}

void nnr_model_free(nnr_model* model) { delete model; }

nnr_status nnr_model_info(const nnr_model* model, size_t* layer_count, size_t* parameter_count,
                          size_t* storage_bytes) {
  return guarded([&] {
    const nnr::Network& net = need(model, "model").net;
    if (layer_count) *layer_count = net.layer_count();
    if (parameter_count) *parameter_count = net.parameter_count();
    if (storage_bytes) *storage_bytes = nnr::storage_bytes(net);
  });
}

nnr_status nnr_model_split(const nnr_model* model, size_t cut, nnr_model** pre, nnr_model** post) {
  return guarded([&] {
    need_out(pre);
    need_out(post);
    nnr::SplitNetwork s = nnr::split_network(need(model, "model").net, cut);
    auto* a = new nnr_model{std::move(s.pre)};
    *pre = a;
    try {
      *post = new nnr_model{std::move(s.post)};
    } catch (...) {
      delete a;
      *pre = nullptr;
      throw;
    }
  });
}

nnr_status nnr_model_eval(const nnr_model* model, const nnr_dataset* data, double* accuracy) {
  return guarded([&] {
    const double acc = nnr::evaluate(need(model, "model").net, need(data, "dataset").data);
    if (accuracy) *accuracy = acc;
  });
}

nnr_status nnr_default_teacher(const nnr_dataset* train, uint64_t seed, nnr_model** out) {
  return guarded([&] {
    const nnr::Dataset& d = need(train, "dataset").data;
    d.validate();
    *need_out(out) = new nnr_model{nnr::make_default_teacher(d.sample_shape(), d.n_class, seed)};
  });
}

nnr_status nnr_train_teacher(nnr_model* model, const nnr_dataset* train, const nnr_dataset* test,
                             const nnr_teacher_options* opts, double* test_accuracy) {
  return guarded([&] {
    if (!model) throw nnr::ContractError("model is null");
    const nnr_teacher_options& o = need(opts, "options");
    nnr::ClassifierTrainConfig cfg{o.epochs, o.batch_size, o.learning_rate, o.momentum, o.seed};
    const nnr::Dataset* t = test ? &test->data : nullptr;
    nnr::Network trained = model->net;
    nnr::train_classifier(trained, need(train, "dataset").data, t, cfg);
    model->net = nnr::round_to_float32(trained);
    if (test_accuracy) *test_accuracy = t ? nnr::evaluate(model->net, *t) : -1.0;
  });
}

nnr_status nnr_dataset_load(const char* path, nnr_dataset** out) {
  return guarded([&] { *need_out(out) = new nnr_dataset{load_data(path, "path")}; });
}

nnr_status nnr_dataset_save(const nnr_dataset* data, const char* path) {
  return guarded([&] { nnr::save_dataset(need(data, "dataset").data, need_str(path, "path")); });
}

void nnr_dataset_free(nnr_dataset* data) { delete data; }

nnr_status nnr_dataset_info(const nnr_dataset* data, size_t* size, size_t* n_class) {
  return guarded([&] {
    const nnr::Dataset& d = need(data, "dataset").data;
    if (size) *size = d.size();
    if (n_class) *n_class = d.n_class;
  });
}

nnr_status nnr_gen_synthetic(const nnr_synthetic_spec* spec, nnr_dataset** train, nnr_dataset** test) {
  return guarded([&] {
    need_out(train);
    need_out(test);
    const nnr_synthetic_spec& s = need(spec, "spec");
    auto [tr, te] = nnr::gen_synthetic(nnr::SyntheticSpec{s.seed, s.n_class, s.n_per_class, s.channels, s.height,
                                                          s.width, s.noise});
    auto* a = new nnr_dataset{std::move(tr)};
    try {
      *test = new nnr_dataset{std::move(te)};
    } catch (...) {
      delete a;
      throw;
    }
    *train = a;
  });
}

nnr_status nnr_features(const nnr_model* pre, const nnr_dataset* data, nnr_dataset** out) {
  return guarded([&] {
    need_out(out);
    const nnr::Dataset& d = need(data, "dataset").data;
    const nnr::Matrix f = nnr::dataset_features(need(pre, "model").net, d);
    nnr::Dataset result;
    result.n_class = d.n_class;
    result.split = d.split;
    result.labels = d.labels;
    result.inputs.reserve(f.cols());
    for (std::size_t j = 0; j < f.cols(); ++j) result.inputs.emplace_back(nnr::Shape{f.rows()}, f.column(j));
    *out = new nnr_dataset{std::move(result)};
  });
}

nnr_status nnr_reduce(const nnr_model* teacher, const nnr_dataset* train, const nnr_options* opts,
                      nnr_projection** out) {
  return guarded([&] {
    need_out(out);
    const nnr::PipelineOptions p = to_options(need(opts, "options"));
    const nnr::Network& t = need(teacher, "model").net;
    const nnr::Dataset& d = need(train, "dataset").data;
    d.validate();
    const nnr::SplitNetwork split = nnr::split_network(t, p.cut);
    const nnr::Matrix features = nnr::dataset_features(split.pre, d);
    *out = new nnr_projection{nnr::build_projection(split, features, d.labels, p.reduce)};
  });
}

nnr_status nnr_projection_load(const char* path, nnr_projection** out) {
  return guarded([&] { *need_out(out) = new nnr_projection{nnr::load_projection(need_str(path, "path"))}; });
}

nnr_status nnr_projection_save(const nnr_projection* proj, const char* path) {
  return guarded([&] { nnr::save_projection(need(proj, "projection").map, need_str(path, "path")); });
}

void nnr_projection_free(nnr_projection* proj) { delete proj; }

nnr_status nnr_projection_info(const nnr_projection* proj, size_t* rank, size_t* input_dim, size_t* storage_bytes) {
  return guarded([&] {
    const nnr::ProjectionMap& m = need(proj, "projection").map;
    if (rank) *rank = m.rank();
    if (input_dim) *input_dim = m.input_dim();
    if (storage_bytes) *storage_bytes = nnr::storage_bytes(m);
  });
}

nnr_status nnr_fit_head(const nnr_model* teacher, const nnr_projection* proj, const nnr_dataset* train,
                        const nnr_options* opts, nnr_head** out) {
  return guarded([&] {
    need_out(out);
    nnr::PipelineOptions p = to_options(need(opts, "options"));
    const nnr::ProjectionMap& map = need(proj, "projection").map;
    p.reduce.rank = map.rank();
    p.validate();
    const nnr::Network& t = need(teacher, "model").net;
    const nnr::Dataset& d = need(train, "dataset").data;
    d.validate();
    const nnr::SplitNetwork split = nnr::split_network(t, p.cut);
    const nnr::Matrix features = nnr::dataset_features(split.pre, d);
    if (features.rows() != map.input_dim()) {
      throw nnr::ConfigError("projection expects " + std::to_string(map.input_dim()) + " features but layer " +
                             std::to_string(p.cut) + " produces " + std::to_string(features.rows()));
    }
    nnr::Matrix z(d.size(), map.rank());
    for (std::size_t j = 0; j < d.size(); ++j) {
      const std::vector<double> zj = nnr::project(map, std::span<const double>(features.column(j)));
      std::copy(zj.begin(), zj.end(), z.row(j).begin());
    }
    *out = new nnr_head{nnr::fit_head(z, nnr::teacher_outputs(t, d), d.labels, p.head, p.seed)};
  });
}

nnr_status nnr_head_load(const char* path, nnr_head** out) {
  return guarded([&] { *need_out(out) = new nnr_head{nnr::load_head(need_str(path, "path"))}; });
}

nnr_status nnr_head_save(const nnr_head* head, const char* path) {
  return guarded([&] { nnr::save_head(need(head, "head").head, need_str(path, "path")); });
}

void nnr_head_free(nnr_head* head) { delete head; }

nnr_status nnr_head_info(const nnr_head* head, size_t* parameter_count, size_t* storage_bytes) {
  return guarded([&] {
    const nnr::Head& h = need(head, "head").head;
    if (parameter_count) *parameter_count = nnr::head_param_count(h);
    if (storage_bytes) *storage_bytes = nnr::storage_bytes(h);
  });
}

nnr_status nnr_reduced_assemble(const nnr_model* pre, const nnr_projection* proj, const nnr_head* head,
                                nnr_reduced** out) {
  return guarded([&] {
    need_out(out);
    nnr::ReducedNet net{need(pre, "model").net, need(proj, "projection").map, need(head, "head").head};
    net.validate();
    *out = new nnr_reduced{std::move(net)};
  });
}

nnr_status nnr_reduced_load(const char* dir, nnr_reduced** out) {
  return guarded([&] { *need_out(out) = new nnr_reduced{nnr::load_reduced(need_str(dir, "directory"))}; });
}

nnr_status nnr_reduced_save(const nnr_reduced* net, const char* dir) {
  return guarded([&] { nnr::save_reduced(need(net, "reduced net").net, need_str(dir, "directory")); });
}

void nnr_reduced_free(nnr_reduced* net) { delete net; }

nnr_status nnr_reduced_eval(const nnr_reduced* net, const nnr_dataset* data, double* accuracy) {
  return guarded([&] {
    const double acc = nnr::evaluate(need(net, "reduced net").net, need(data, "dataset").data);
    if (accuracy) *accuracy = acc;
  });
}

nnr_status nnr_reduced_storage(const nnr_reduced* net, const nnr_model* teacher, nnr_storage* out) {
  return guarded([&] {
    if (!out) throw nnr::ContractError("output pointer is null");
    const nnr::ReducedNet& r = need(net, "reduced net").net;
    *out = to_c(nnr::make_storage(nnr::storage_bytes(r.pre), nnr::storage_bytes(r.projection),
                                  nnr::storage_bytes(r.head), nnr::storage_bytes(need(teacher, "model").net)));
  });
}

nnr_status nnr_distill(const nnr_reduced* student, const nnr_model* teacher, const nnr_dataset* train,
                       const nnr_dataset* test, const nnr_options* opts, const char* history_path,
                       nnr_reduced** out) {
  return guarded([&] {
    need_out(out);
    const nnr::PipelineOptions p = to_options(need(opts, "options"));
    nnr::TrainResult res = nnr::train_reduced(need(student, "reduced net").net, need(teacher, "model").net,
                                              need(train, "dataset").data, test ? &test->data : nullptr, p.distill);
    if (history_path) nnr::write_file_atomic(history_path, nnr::history_jsonl(res.history));
    *out = new nnr_reduced{std::move(res.net)};
  });
}

nnr_status nnr_pipeline_run(const char* model_path, const char* train_path, const char* test_path,
                            const char* out_dir, const nnr_options* opts, nnr_summary* summary) {
  return guarded([&] {
    const nnr::Report r =
        nnr::run_pipeline_files(need_str(model_path, "model path"), need_str(train_path, "train path"),
                                need_str(test_path, "test path"), need_str(out_dir, "output directory"),
                                to_options(need(opts, "options")));
    if (summary) *summary = nnr_summary{r.teacher_accuracy, r.epoch0_accuracy, r.final_accuracy, to_c(r.storage)};
  });
}

nnr_status nnr_sweep_heads(const char* model_path, const char* train_path, const char* test_path,
                           const nnr_options* opts, const size_t* widths, size_t n_widths, const size_t* depths,
                           size_t n_depths, const char* table_path) {
  return guarded([&] {
    if ((!widths && n_widths) || (!depths && n_depths)) throw nnr::ContractError("grid array is null");
    const nnr::Network teacher = nnr::load_model(need_str(model_path, "model path"));
    const nnr::Dataset train = load_data(train_path, "train path");
    const nnr::Dataset test = load_data(test_path, "test path");
    const auto cells = nnr::sweep_heads(teacher, train, test, to_options(need(opts, "options")),
                                        std::span<const std::size_t>(widths, n_widths),
                                        std::span<const std::size_t>(depths, n_depths));
    nnr::write_file_atomic(need_str(table_path, "table path"), nnr::sweep_table(cells));
  });
}

}  // extern "C"
