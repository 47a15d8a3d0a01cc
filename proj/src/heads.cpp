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

#include "nnreduce/heads.hpp"

#include <cmath>

#include "nnreduce/errors.hpp"
#include "nnreduce/linalg.hpp"
#include "nnreduce/log.hpp"
#include "nnreduce/model_io.hpp"
#include "nnreduce/network.hpp"

namespace nnr {

using nlohmann::json;

namespace {

void compositions(std::size_t remaining, std::size_t pos, MultiIndex& current, std::vector<MultiIndex>& out) {
  if (pos + 1 == current.size()) {
    current[pos] = static_cast<unsigned>(remaining);
    out.push_back(current);
    return;
  }
  for (std::size_t v = remaining + 1; v-- > 0;) {
    current[pos] = static_cast<unsigned>(v);
    compositions(remaining - v, pos + 1, current, out);
  }
}

constexpr double kScaleFloor = 1e-12;

// Table t[i][k] = P_k(u_i) for k <= degree.
std::vector<std::vector<double>> univariate_table(const PceModel& m, std::span<const double> z, bool derivative) {
  if (z.size() != m.input_dim()) {
    throw ShapeError("PCE expects " + std::to_string(m.input_dim()) + " inputs, got " + std::to_string(z.size()));
  }
  std::vector<std::vector<double>> t(z.size(), std::vector<double>(m.degree + 1));
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double u = (z[i] - m.mean[i]) / m.scale[i];
    for (unsigned k = 0; k <= m.degree; ++k)
      t[i][k] = derivative ? univariate_derivative(m.family, k, u) / m.scale[i] : univariate(m.family, k, u);
  }
  return t;
}

std::size_t hidden_width_of(const FnnHead& h) { return h.hidden_layers() ? h.hidden_width() : 0; }

}  // namespace

std::vector<MultiIndex> multi_indices(std::size_t r, std::size_t p) {
  if (r < 1) throw ParameterError("multi_indices: r must be at least 1");
  std::vector<MultiIndex> out;
  out.reserve(binomial(r + p, p));
  MultiIndex current(r, 0);
  for (std::size_t d = 0; d <= p; ++d) compositions(d, 0, current, out);
  return out;
}

std::size_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::size_t result = 1;
  for (std::size_t i = 1; i <= k; ++i) result = result * (n - k + i) / i;
  return result;
}

std::string_view to_string(PceFamily f) { return f == PceFamily::hermite ? "hermite" : "legendre"; }

PceFamily parse_pce_family(std::string_view name) {
  if (name == "hermite") return PceFamily::hermite;
  if (name == "legendre") return PceFamily::legendre;
  throw ConfigError("unknown PCE family '" + std::string(name) + "' (expected hermite or legendre)");
}

double univariate(PceFamily family, unsigned k, double x) {
  if (k == 0) return 1.0;
  double prev = 1.0;
  double cur = x;
  for (unsigned n = 1; n < k; ++n) {
    double next;
    if (family == PceFamily::hermite) {
      next = x * cur - n * prev;
    } else {
      next = ((2.0 * n + 1.0) * x * cur - n * prev) / (n + 1.0);
    }
    prev = cur;
    cur = next;
  }
  return cur;
}

double univariate_derivative(PceFamily family, unsigned k, double x) {
  if (k == 0) return 0.0;
  if (family == PceFamily::hermite) return k * univariate(family, k - 1, x);
  // P'_{n+1} = (n+1) P_n + x P'_n
  double d = 0.0;
  for (unsigned n = 0; n < k; ++n) d = (n + 1.0) * univariate(family, n, x) + x * d;
  return d;
}

PceModel make_pce_model(std::size_t r, std::size_t p, std::size_t n_out, PceFamily family, std::vector<double> mean,
                        std::vector<double> scale) {
  if (mean.size() != r || scale.size() != r) throw ShapeError("PCE standardization must have one entry per input");
  for (double s : scale)
    if (!(s > 0.0)) throw ValidationError("PCE scales must be positive");
  PceModel m;
  m.indices = multi_indices(r, p);
  m.coefficients = Matrix(m.indices.size(), n_out);
  m.family = family;
  m.degree = p;
  m.mean = std::move(mean);
  m.scale = std::move(scale);
  return m;
}

std::vector<double> pce_basis_eval(const PceModel& model, std::span<const double> z) {
  const auto t = univariate_table(model, z, false);
  std::vector<double> phi(model.term_count(), 1.0);
  for (std::size_t k = 0; k < phi.size(); ++k) {
    const MultiIndex& a = model.indices[k];
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i]) phi[k] *= t[i][a[i]];
  }
  return phi;
}

Matrix pce_basis_jacobian(const PceModel& model, std::span<const double> z) {
  const auto t = univariate_table(model, z, false);
  const auto dt = univariate_table(model, z, true);
  const std::size_t r = model.input_dim();
  Matrix jac(model.term_count(), r);
  for (std::size_t k = 0; k < model.term_count(); ++k) {
    const MultiIndex& a = model.indices[k];
    for (std::size_t i = 0; i < r; ++i) {
      if (a[i] == 0) continue;
      double v = dt[i][a[i]];
      for (std::size_t q = 0; q < r; ++q)
        if (q != i && a[q]) v *= t[q][a[q]];
      jac(k, i) = v;
    }
  }
  return jac;
}

PceModel pce_fit(const Matrix& z, const Matrix& y, std::size_t p, PceFamily family) {
  const std::size_t n = z.rows();
  const std::size_t r = z.cols();
  if (n < 1) throw ParameterError("pce_fit: no samples");
  if (y.rows() != n) {
    throw ShapeError("pce_fit: " + std::to_string(n) + " inputs but " + std::to_string(y.rows()) + " targets");
  }
  std::vector<double> mean(r, 0.0), scale(r, 1.0);
  for (std::size_t i = 0; i < r; ++i) {
    if (family == PceFamily::hermite) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += z(j, i);
      mean[i] = s / static_cast<double>(n);
      double v = 0.0;
      for (std::size_t j = 0; j < n; ++j) v += (z(j, i) - mean[i]) * (z(j, i) - mean[i]);
      scale[i] = std::max(std::sqrt(v / static_cast<double>(n)), kScaleFloor);
    } else {
      double lo = z(0, i), hi = z(0, i);
      for (std::size_t j = 1; j < n; ++j) {
        lo = std::min(lo, z(j, i));
        hi = std::max(hi, z(j, i));
      }
      mean[i] = 0.5 * (lo + hi);
      scale[i] = std::max(0.5 * (hi - lo), kScaleFloor);
    }
  }
  PceModel model = make_pce_model(r, p, y.cols(), family, std::move(mean), std::move(scale));
  if (n < model.term_count()) {
    warn("pce_fit: " + std::to_string(n) + " samples for " + std::to_string(model.term_count()) +
         " terms; the least-squares problem is underdetermined and the ridge solution is used");
  }
  Matrix phi(n, model.term_count());
  for (std::size_t j = 0; j < n; ++j) {
    const auto row = pce_basis_eval(model, z.row(j));
    std::copy(row.begin(), row.end(), phi.row(j).begin());
  }
  model.coefficients = lstsq(phi, y);
  return model;
}

std::vector<double> pce_predict(const PceModel& model, std::span<const double> z) {
  const auto phi = pce_basis_eval(model, z);
  return matvec_transposed(model.coefficients, phi);
}

FnnHead make_fnn_head(std::size_t r, std::size_t hidden, std::size_t n_out, std::size_t hidden_layers, double beta,
                      Rng& rng) {
  if (r < 1 || n_out < 1) throw ParameterError("FNN head needs positive input and output sizes");
  if (hidden_layers > 0 && hidden < 1) throw ParameterError("FNN head hidden width must be positive");
  if (!(beta > 0.0)) throw ParameterError("softplus beta must be positive");
  FnnHead head;
  head.beta = beta;
  std::size_t in = r;
  auto layer = [&](std::size_t out) {
    Matrix w(out, in);
    const double bound = std::sqrt(1.0 / static_cast<double>(in));
    for (double& v : w.values()) v = rng.uniform(-bound, bound);
    head.weights.push_back(std::move(w));
    in = out;
  };
  for (std::size_t k = 0; k < hidden_layers; ++k) layer(hidden);
  layer(n_out);
  return head;
}

std::vector<double> fnn_forward(const FnnHead& head, std::span<const double> z) {
  std::vector<double> h(z.begin(), z.end());
  for (std::size_t k = 0; k < head.weights.size(); ++k) {
    h = matvec(head.weights[k], h);
    if (k + 1 < head.weights.size())
      for (double& v : h) v = softplus(v, head.beta);
  }
  return h;
}

std::vector<double> head_forward(const Head& head, std::span<const double> z) {
  if (const auto* p = std::get_if<PceModel>(&head)) return pce_predict(*p, z);
  return fnn_forward(std::get<FnnHead>(head), z);
}

HeadGradient head_backward(const Head& head, std::span<const double> z, std::span<const double> grad_out) {
  HeadGradient g;
  if (const auto* p = std::get_if<PceModel>(&head)) {
    if (grad_out.size() != p->output_dim()) throw ShapeError("PCE head: gradient length mismatch");
    const auto phi = pce_basis_eval(*p, z);
    Matrix gc(p->term_count(), p->output_dim());
    for (std::size_t k = 0; k < phi.size(); ++k)
      for (std::size_t o = 0; o < grad_out.size(); ++o) gc(k, o) = phi[k] * grad_out[o];
    // dL/dz = J^T (C g)
    const std::vector<double> cg = matvec(p->coefficients, grad_out);
    g.input = matvec_transposed(pce_basis_jacobian(*p, z), cg);
    g.parameters.push_back(std::move(gc));
    return g;
  }
  const auto& f = std::get<FnnHead>(head);
  if (grad_out.size() != f.output_dim()) throw ShapeError("FNN head: gradient length mismatch");
  // Keep layer inputs and pre-activations for the reverse sweep.
  std::vector<std::vector<double>> inputs, pre;
  std::vector<double> h(z.begin(), z.end());
  for (std::size_t k = 0; k < f.weights.size(); ++k) {
    inputs.push_back(h);
    std::vector<double> a = matvec(f.weights[k], h);
    pre.push_back(a);
    if (k + 1 < f.weights.size())
      for (double& v : a) v = softplus(v, f.beta);
    h = std::move(a);
  }
  g.parameters.resize(f.weights.size());
  std::vector<double> up(grad_out.begin(), grad_out.end());
  for (std::size_t k = f.weights.size(); k-- > 0;) {
    if (k + 1 < f.weights.size())
      for (std::size_t i = 0; i < up.size(); ++i) up[i] *= softplus_derivative(pre[k][i], f.beta);
    const Matrix& w = f.weights[k];
    Matrix gw(w.rows(), w.cols());
    for (std::size_t i = 0; i < w.rows(); ++i)
      for (std::size_t j = 0; j < w.cols(); ++j) gw(i, j) = up[i] * inputs[k][j];
    g.parameters[k] = std::move(gw);
    up = matvec_transposed(w, up);
  }
  g.input = std::move(up);
  return g;
}

std::vector<std::reference_wrapper<Matrix>> head_parameters(Head& head) {
  std::vector<std::reference_wrapper<Matrix>> out;
  if (auto* p = std::get_if<PceModel>(&head)) {
    out.emplace_back(p->coefficients);
  } else {
    for (auto& w : std::get<FnnHead>(head).weights) out.emplace_back(w);
  }
  return out;
}

std::size_t head_input_dim(const Head& head) {
  if (const auto* p = std::get_if<PceModel>(&head)) return p->input_dim();
  return std::get<FnnHead>(head).input_dim();
}

std::size_t head_output_dim(const Head& head) {
  if (const auto* p = std::get_if<PceModel>(&head)) return p->output_dim();
  return std::get<FnnHead>(head).output_dim();
}

std::string_view head_kind(const Head& head) { return std::holds_alternative<PceModel>(head) ? "pce" : "fnn"; }

std::size_t head_param_count(const Head& head) {
  if (const auto* p = std::get_if<PceModel>(&head)) return p->coefficients.size() + 2 * p->input_dim();
  std::size_t n = 0;
  for (const auto& w : std::get<FnnHead>(head).weights) n += w.size();
  return n;
}

json head_manifest(const Head& head, BlobWriter* blob) {
  BlobWriter scratch;
  BlobWriter& w = blob ? *blob : scratch;
  json m = {{"format", "nsnn"}, {"version", kBlobVersion}, {"value_count", head_param_count(head)}};
  if (const auto* p = std::get_if<PceModel>(&head)) {
    m["kind"] = "pce_head";
    m["family"] = std::string(to_string(p->family));
    m["degree"] = p->degree;
    m["r"] = p->input_dim();
    m["n_out"] = p->output_dim();
    m["n_terms"] = p->term_count();
    m["ordering"] = "graded-lex-descending";
    m["tensors"] = {w.add("coefficients", p->coefficients.to_tensor()),
                    w.add("mean", Tensor({p->mean.size()}, p->mean)),
                    w.add("scale", Tensor({p->scale.size()}, p->scale))};
  } else {
    const auto& f = std::get<FnnHead>(head);
    m["kind"] = "fnn_head";
    m["r"] = f.input_dim();
    m["hidden"] = hidden_width_of(f);
    m["hidden_layers"] = f.hidden_layers();
    m["n_out"] = f.output_dim();
    m["beta"] = f.beta;
    json ts = json::array();
    for (std::size_t k = 0; k < f.weights.size(); ++k)
      ts.push_back(w.add("w" + std::to_string(k + 1), f.weights[k].to_tensor()));
    m["tensors"] = std::move(ts);
  }
  return m;
}

Head head_from_manifest(const json& m, const BlobReader& blob) {
  try {
    const std::string kind = m.at("kind").get<std::string>();
    const auto& ts = m.at("tensors");
    Head head;
    if (kind == "pce_head") {
      if (ts.size() != 3) throw ValidationError("PCE manifest needs coefficient, mean and scale tensors");
      const Tensor mean = blob.read(ts[1]);
      const Tensor scale = blob.read(ts[2]);
      PceModel model = make_pce_model(m.at("r").get<std::size_t>(), m.at("degree").get<std::size_t>(),
                                      m.at("n_out").get<std::size_t>(), parse_pce_family(m.at("family").get<std::string>()),
                                      {mean.values().begin(), mean.values().end()},
                                      {scale.values().begin(), scale.values().end()});
      Matrix coeff = Matrix::from_tensor(blob.read(ts[0]));
      if (coeff.rows() != model.term_count() || coeff.cols() != model.output_dim()) {
        throw ValidationError("PCE coefficient tensor has shape " + to_string(coeff.shape()));
      }
      model.coefficients = std::move(coeff);
      head = std::move(model);
    } else if (kind == "fnn_head") {
      FnnHead f;
      f.beta = m.at("beta").get<double>();
      if (!(f.beta > 0.0)) throw ValidationError("softplus beta must be positive");
      if (ts.empty()) throw ValidationError("FNN manifest lists no weights");
      for (const auto& rec : ts) f.weights.push_back(Matrix::from_tensor(blob.read(rec)));
      for (std::size_t k = 1; k < f.weights.size(); ++k)
        if (f.weights[k].cols() != f.weights[k - 1].rows()) throw ValidationError("FNN weight shapes do not chain");
      if (f.input_dim() != m.at("r").get<std::size_t>() || f.output_dim() != m.at("n_out").get<std::size_t>()) {
        throw ValidationError("FNN weights disagree with declared r / n_out");
      }
      head = std::move(f);
    } else {
      throw ValidationError("manifest kind '" + kind + "' is not a head");
    }
    if (kBlobHeaderBytes + 4 * head_param_count(head) != blob.size()) {
      throw ValidationError("head blob size does not match its manifest");
    }
    return head;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("head manifest is missing or mistypes a field: ") + e.what());
  }
}

void save_head(const Head& head, const std::filesystem::path& path) {
  BlobWriter blob;
  const json manifest = head_manifest(head, &blob);
  write_artifact(path, manifest, blob.bytes());
}

Head load_head(const std::filesystem::path& path) {
  return head_from_manifest(read_manifest(path), BlobReader::open(blob_path_for(path)));
}

std::size_t storage_bytes(const Head& head) {
  return 4 * head_param_count(head) + manifest_text(head_manifest(head, nullptr)).size();
}

}  // namespace nnr
