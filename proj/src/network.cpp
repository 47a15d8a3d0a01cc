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

#include "nnreduce/network.hpp"

#include <algorithm>
#include <cmath>

#include "nnreduce/errors.hpp"

namespace nnr {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string where(std::size_t index, const Layer& layer) {
  return "layer " + std::to_string(index) + " (" + std::string(layer_kind(layer)) + ")";
}

// Half-open range of output positions o with 0 <= o*stride + k - pad < extent.
struct Span {
  std::size_t lo;
  std::size_t hi;
};

Span valid_outputs(std::size_t out_extent, std::size_t in_extent, std::size_t stride, std::size_t k, std::size_t pad) {
  std::size_t lo = 0;
  if (pad > k) lo = (pad - k + stride - 1) / stride;
  // o*stride + k - pad <= in_extent - 1
  std::size_t hi = 0;
  if (in_extent + pad > k) hi = (in_extent + pad - k - 1) / stride + 1;
  hi = std::min(hi, out_extent);
  return {std::min(lo, hi), hi};
}

Tensor linear_forward(const Linear& l, const Tensor& x) {
  const std::size_t out = l.weight.shape()[0];
  const std::size_t in = l.weight.shape()[1];
  Tensor y({out});
  const auto w = l.weight.values();
  const auto xv = x.values();
  for (std::size_t i = 0; i < out; ++i) {
    double s = l.bias[i];
    const double* wi = w.data() + i * in;
    for (std::size_t j = 0; j < in; ++j) s += wi[j] * xv[j];
    y[i] = s;
  }
  return y;
}

Tensor conv_forward(const Conv2d& c, const Tensor& x, const Shape& out_shape) {
  const auto& ws = c.weight.shape();
  const std::size_t cout = ws[0], cin = ws[1], kh = ws[2], kw = ws[3];
  const std::size_t h = x.shape()[1], w = x.shape()[2];
  const std::size_t oh = out_shape[1], ow = out_shape[2];
  Tensor y(out_shape);
  auto yv = y.values();
  const auto xv = x.values();
  const auto wv = c.weight.values();
  const std::size_t s = c.stride, p = c.padding;
  for (std::size_t co = 0; co < cout; ++co) {
    double* yc = yv.data() + co * oh * ow;
    std::fill(yc, yc + oh * ow, c.bias[co]);
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* xc = xv.data() + ci * h * w;
      for (std::size_t a = 0; a < kh; ++a) {
        const Span rows = valid_outputs(oh, h, s, a, p);
        for (std::size_t b = 0; b < kw; ++b) {
          const double wt = wv[((co * cin + ci) * kh + a) * kw + b];
          const Span cols = valid_outputs(ow, w, s, b, p);
          for (std::size_t i = rows.lo; i < rows.hi; ++i) {
            const double* xr = xc + (i * s + a - p) * w;
            double* yr = yc + i * ow;
            for (std::size_t j = cols.lo; j < cols.hi; ++j) yr[j] += wt * xr[j * s + b - p];
          }
        }
      }
    }
  }
  return y;
}

void conv_backward(const Conv2d& c, const Tensor& x, const Tensor& gout, Tensor& gw, Tensor& gb, Tensor& gx) {
  const auto& ws = c.weight.shape();
  const std::size_t cout = ws[0], cin = ws[1], kh = ws[2], kw = ws[3];
  const std::size_t h = x.shape()[1], w = x.shape()[2];
  const std::size_t oh = gout.shape()[1], ow = gout.shape()[2];
  const std::size_t s = c.stride, p = c.padding;
  const auto xv = x.values();
  const auto gv = gout.values();
  const auto wv = c.weight.values();
  auto gwv = gw.values();
  auto gxv = gx.values();
  for (std::size_t co = 0; co < cout; ++co) {
    const double* gc = gv.data() + co * oh * ow;
    double bsum = 0.0;
    for (std::size_t k = 0; k < oh * ow; ++k) bsum += gc[k];
    gb[co] += bsum;
    for (std::size_t ci = 0; ci < cin; ++ci) {
      const double* xc = xv.data() + ci * h * w;
      double* gxc = gxv.data() + ci * h * w;
      for (std::size_t a = 0; a < kh; ++a) {
        const Span rows = valid_outputs(oh, h, s, a, p);
        for (std::size_t b = 0; b < kw; ++b) {
          const std::size_t widx = ((co * cin + ci) * kh + a) * kw + b;
          const double wt = wv[widx];
          const Span cols = valid_outputs(ow, w, s, b, p);
          double acc = 0.0;
          for (std::size_t i = rows.lo; i < rows.hi; ++i) {
            const std::size_t base = (i * s + a - p) * w + b - p;
            const double* gr = gc + i * ow;
            for (std::size_t j = cols.lo; j < cols.hi; ++j) {
              acc += gr[j] * xc[base + j * s];
              gxc[base + j * s] += wt * gr[j];
            }
          }
          gwv[widx] += acc;
        }
      }
    }
  }
}

// Index of the max in each pooling window, first in row-major order on ties.
template <class Visit>
void pool_windows(const MaxPool2d& m, const Tensor& x, const Shape& out_shape, Visit&& visit) {
  const std::size_t ch = x.shape()[0], h = x.shape()[1], w = x.shape()[2];
  const std::size_t oh = out_shape[1], ow = out_shape[2];
  const auto xv = x.values();
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = c * h * w + (i * m.stride) * w + j * m.stride;
        for (std::size_t a = 0; a < m.window; ++a) {
          for (std::size_t b = 0; b < m.window; ++b) {
            const std::size_t idx = c * h * w + (i * m.stride + a) * w + j * m.stride + b;
            if (xv[idx] > xv[best]) best = idx;
          }
        }
        visit((c * oh + i) * ow + j, best);
      }
    }
  }
}

void require(bool ok, std::size_t index, const Layer& layer, const std::string& msg) {
  if (!ok) throw ValidationError(where(index, layer) + ": " + msg);
}

}  // namespace

std::string_view layer_kind(const Layer& layer) {
  return std::visit(overloaded{[](const Linear&) { return std::string_view("linear"); },
                               [](const Conv2d&) { return std::string_view("conv2d"); },
                               [](const Relu&) { return std::string_view("relu"); },
                               [](const Softplus&) { return std::string_view("softplus"); },
                               [](const MaxPool2d&) { return std::string_view("maxpool2d"); },
                               [](const Flatten&) { return std::string_view("flatten"); }},
                    layer);
}

std::size_t parameter_count(const Layer& layer) {
  if (const auto* l = std::get_if<Linear>(&layer)) return l->weight.size() + l->bias.size();
  if (const auto* c = std::get_if<Conv2d>(&layer)) return c->weight.size() + c->bias.size();
  return 0;
}

Shape infer_output_shape(const Layer& layer, const Shape& in, std::size_t index) {
  return std::visit(
      overloaded{
          [&](const Linear& l) -> Shape {
            require(l.weight.rank() == 2, index, layer, "weight must be rank 2");
            require(l.bias.rank() == 1 && l.bias.size() == l.weight.shape()[0], index, layer,
                    "bias shape " + to_string(l.bias.shape()) + " does not match weight " +
                        to_string(l.weight.shape()));
            require(in.size() == 1 && in[0] == l.weight.shape()[1], index, layer,
                    "expects input [" + std::to_string(l.weight.shape()[1]) + "], got " + to_string(in));
            return {l.weight.shape()[0]};
          },
          [&](const Conv2d& c) -> Shape {
            require(c.weight.rank() == 4, index, layer, "kernel must be rank 4");
            const auto& ws = c.weight.shape();
            require(c.bias.rank() == 1 && c.bias.size() == ws[0], index, layer, "bias does not match c_out");
            require(c.stride >= 1, index, layer, "stride must be positive");
            require(in.size() == 3 && in[0] == ws[1], index, layer,
                    "expects input with " + std::to_string(ws[1]) + " channels, got " + to_string(in));
            require(in[1] + 2 * c.padding >= ws[2] && in[2] + 2 * c.padding >= ws[3], index, layer,
                    "kernel larger than padded input " + to_string(in));
            return {ws[0], (in[1] + 2 * c.padding - ws[2]) / c.stride + 1,
                    (in[2] + 2 * c.padding - ws[3]) / c.stride + 1};
          },
          [&](const Relu&) -> Shape { return in; },
          [&](const Softplus& s) -> Shape {
            require(s.beta > 0.0 && std::isfinite(s.beta), index, layer, "beta must be positive");
            return in;
          },
          [&](const MaxPool2d& m) -> Shape {
            require(m.window >= 1 && m.stride >= 1, index, layer, "window and stride must be positive");
            require(in.size() == 3 && in[1] >= m.window && in[2] >= m.window, index, layer,
                    "expects [C, H, W] input at least as large as the window, got " + to_string(in));
            return {in[0], (in[1] - m.window) / m.stride + 1, (in[2] - m.window) / m.stride + 1};
          },
          [&](const Flatten&) -> Shape { return {numel(in)}; }},
      layer);
}

Network::Network(Shape input_shape, std::vector<Layer> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  if (layers_.empty()) throw ValidationError("network needs at least one layer");
  if (input_shape_.empty() || numel(input_shape_) == 0) {
    throw ValidationError("network input shape " + to_string(input_shape_) + " is empty");
  }
  Shape current = input_shape_;
  shapes_.reserve(layers_.size());
  for (std::size_t j = 0; j < layers_.size(); ++j) {
    current = infer_output_shape(layers_[j], current, j);
    shapes_.push_back(current);
  }
}

std::vector<std::reference_wrapper<Tensor>> Network::parameters() {
  std::vector<std::reference_wrapper<Tensor>> out;
  for (auto& layer : layers_) {
    if (auto* l = std::get_if<Linear>(&layer)) {
      out.emplace_back(l->weight);
      out.emplace_back(l->bias);
    } else if (auto* c = std::get_if<Conv2d>(&layer)) {
      out.emplace_back(c->weight);
      out.emplace_back(c->bias);
    }
  }
  return out;
}

std::vector<std::reference_wrapper<const Tensor>> Network::parameters() const {
  std::vector<std::reference_wrapper<const Tensor>> out;
  for (const auto& layer : layers_) {
    if (const auto* l = std::get_if<Linear>(&layer)) {
      out.emplace_back(l->weight);
      out.emplace_back(l->bias);
    } else if (const auto* c = std::get_if<Conv2d>(&layer)) {
      out.emplace_back(c->weight);
      out.emplace_back(c->bias);
    }
  }
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += nnr::parameter_count(layer);
  return n;
}

bool operator==(const Linear& a, const Linear& b) { return a.weight == b.weight && a.bias == b.bias; }
bool operator==(const Conv2d& a, const Conv2d& b) {
  return a.weight == b.weight && a.bias == b.bias && a.stride == b.stride && a.padding == b.padding;
}
bool operator==(const Network& a, const Network& b) {
  return a.input_shape_ == b.input_shape_ && a.layers_ == b.layers_;
}

double softplus(double x, double beta) {
  return std::max(x, 0.0) + std::log1p(std::exp(-beta * std::abs(x))) / beta;
}

double softplus_derivative(double x, double beta) {
  const double z = beta * x;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

Trace forward(const Network& net, const Tensor& x) {
  if (x.shape() != net.input_shape()) {
    throw ShapeError(where(0, net.layers().front()) + " expects input " + to_string(net.input_shape()) + ", got " +
                     to_string(x.shape()));
  }
  Trace trace{x, {}};
  trace.outputs.reserve(net.layer_count());
  for (std::size_t j = 0; j < net.layer_count(); ++j) {
    const Tensor& in = j ? trace.outputs.back() : trace.input;
    const Shape& out_shape = net.layer_output_shape(j);
    Tensor out = std::visit(
        overloaded{[&](const Linear& l) { return linear_forward(l, in); },
                   [&](const Conv2d& c) { return conv_forward(c, in, out_shape); },
                   [&](const Relu&) {
                     Tensor y = in;
                     for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
                     return y;
                   },
                   [&](const Softplus& s) {
                     Tensor y = in;
                     for (double& v : y.values()) v = softplus(v, s.beta);
                     return y;
                   },
                   [&](const MaxPool2d& m) {
                     Tensor y(out_shape);
                     pool_windows(m, in, out_shape, [&](std::size_t o, std::size_t i) { y[o] = in[i]; });
                     return y;
                   },
                   [&](const Flatten&) { return in.reshaped(out_shape); }},
        net.layers()[j]);
    trace.outputs.push_back(std::move(out));
  }
  return trace;
}

Tensor predict(const Network& net, const Tensor& x) { return forward(net, x).outputs.back(); }

GradientBundle backward(const Network& net, const Trace& trace, const Tensor& grad_out) {
  const std::size_t L = net.layer_count();
  if (trace.input.shape() != net.input_shape() || trace.outputs.size() != L) {
    throw ContractError("activation record does not belong to this network");
  }
  for (std::size_t j = 0; j < L; ++j) {
    if (trace.outputs[j].shape() != net.layer_output_shape(j)) {
      throw ContractError("activation record: " + where(j, net.layers()[j]) + " output has shape " +
                          to_string(trace.outputs[j].shape()) + ", expected " +
                          to_string(net.layer_output_shape(j)));
    }
  }
  if (grad_out.shape() != net.output_shape()) {
    throw ShapeError("gradient of shape " + to_string(grad_out.shape()) + " does not match network output " +
                     to_string(net.output_shape()));
  }

  GradientBundle g;
  g.parameters.resize(L);
  Tensor upstream = grad_out;
  for (std::size_t jj = L; jj-- > 0;) {
    const Tensor& in = jj ? trace.outputs[jj - 1] : trace.input;
    const Tensor& out = trace.outputs[jj];
    Tensor gin(in.shape());
    std::visit(overloaded{[&](const Linear& l) {
                            const std::size_t no = l.weight.shape()[0], ni = l.weight.shape()[1];
                            Tensor gw(l.weight.shape());
                            Tensor gb = upstream.reshaped({no});
                            const auto w = l.weight.values();
                            for (std::size_t i = 0; i < no; ++i) {
                              const double gi = upstream[i];
                              for (std::size_t k = 0; k < ni; ++k) {
                                gw[i * ni + k] = gi * in[k];
                                gin[k] += gi * w[i * ni + k];
                              }
                            }
                            g.parameters[jj] = {std::move(gw), std::move(gb)};
                          },
                          [&](const Conv2d& c) {
                            Tensor gw(c.weight.shape());
                            Tensor gb(c.bias.shape());
                            conv_backward(c, in, upstream, gw, gb, gin);
                            g.parameters[jj] = {std::move(gw), std::move(gb)};
                          },
                          [&](const Relu&) {
                            for (std::size_t k = 0; k < in.size(); ++k) gin[k] = in[k] > 0.0 ? upstream[k] : 0.0;
                          },
                          [&](const Softplus& s) {
                            for (std::size_t k = 0; k < in.size(); ++k)
                              gin[k] = upstream[k] * softplus_derivative(in[k], s.beta);
                          },
                          [&](const MaxPool2d& m) {
                            pool_windows(m, in, out.shape(),
                                         [&](std::size_t o, std::size_t i) { gin[i] += upstream[o]; });
                          },
                          [&](const Flatten&) { gin = upstream.reshaped(in.shape()); }},
               net.layers()[jj]);
    upstream = std::move(gin);
  }
  g.input = std::move(upstream);
  return g;
}

Linear make_linear(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  Linear l{Tensor({out, in}), Tensor({out})};
  for (double& v : l.weight.values()) v = rng.uniform(-bound, bound);
  for (double& v : l.bias.values()) v = rng.uniform(-bound, bound);
  return l;
}

Conv2d make_conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                   std::size_t padding, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in_channels * kernel * kernel));
  Conv2d c{Tensor({out_channels, in_channels, kernel, kernel}), Tensor({out_channels}), stride, padding};
  for (double& v : c.weight.values()) v = rng.uniform(-bound, bound);
  for (double& v : c.bias.values()) v = rng.uniform(-bound, bound);
  return c;
}

}  // namespace nnr
