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

#ifndef NNREDUCE_NETWORK_HPP
#define NNREDUCE_NETWORK_HPP

#include <functional>
#include <string_view>
#include <variant>
#include <vector>

#include "nnreduce/random.hpp"
#include "nnreduce/tensor.hpp"

namespace nnr {

/// y = W x + b with W of shape [out, in]; input must be rank 1.
struct Linear {
  Tensor weight;
  Tensor bias;
};

/// Cross-correlation over a [C, H, W] input with zero padding.
/// Kernel shape [c_out, c_in, kh, kw].
struct Conv2d {
  Tensor weight;
  Tensor bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct Relu {};

/// (1/beta) log(1 + exp(beta x)), evaluated in overflow-safe form.
struct Softplus {
  double beta = 1.0;
};

/// Max over window x window patches of each channel. Ties go to the first
/// position in row-major order, in both the forward pass and the gradient.
struct MaxPool2d {
  std::size_t window = 2;
  std::size_t stride = 2;
};

struct Flatten {};

using Layer = std::variant<Linear, Conv2d, Relu, Softplus, MaxPool2d, Flatten>;

std::string_view layer_kind(const Layer& layer);
std::size_t parameter_count(const Layer& layer);

/// Activations of one forward pass: the input and each layer's output.
struct Trace {
  Tensor input;
  std::vector<Tensor> outputs;

  const Tensor& output() const { return outputs.empty() ? input : outputs.back(); }
};

/// Parameter gradients per layer (weight then bias, empty for parameter-free
/// layers) plus the gradient with respect to the network input.
struct GradientBundle {
  std::vector<std::vector<Tensor>> parameters;
  Tensor input;
};

/// Sequential network f_L o ... o f_1. Shapes are checked once, at
/// construction; parameter values may be updated in place but never reshaped.
class Network {
 public:
  Network() = default;
  Network(Shape input_shape, std::vector<Layer> layers);

  const Shape& input_shape() const noexcept { return input_shape_; }
  const Shape& output_shape() const { return shapes_.empty() ? input_shape_ : shapes_.back(); }
  /// Output shape of layer j (0-based).
  const Shape& layer_output_shape(std::size_t j) const { return shapes_.at(j); }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  std::vector<std::reference_wrapper<Tensor>> parameters();
  std::vector<std::reference_wrapper<const Tensor>> parameters() const;
  std::size_t parameter_count() const;

  friend bool operator==(const Network& a, const Network& b);

 private:
  Shape input_shape_;
  std::vector<Layer> layers_;
  std::vector<Shape> shapes_;
};

bool operator==(const Linear& a, const Linear& b);
bool operator==(const Conv2d& a, const Conv2d& b);
inline bool operator==(const Relu&, const Relu&) { return true; }
inline bool operator==(const Softplus& a, const Softplus& b) { return a.beta == b.beta; }
inline bool operator==(const MaxPool2d& a, const MaxPool2d& b) {
  return a.window == b.window && a.stride == b.stride;
}
inline bool operator==(const Flatten&, const Flatten&) { return true; }

/// Output shape of `layer` applied to `in`; throws ValidationError naming
/// `index` when the layer cannot accept that shape.
Shape infer_output_shape(const Layer& layer, const Shape& in, std::size_t index);

Trace forward(const Network& net, const Tensor& x);
Tensor predict(const Network& net, const Tensor& x);
GradientBundle backward(const Network& net, const Trace& trace, const Tensor& grad_out);

double softplus(double x, double beta);
/// d softplus / dx = logistic(beta x).
double softplus_derivative(double x, double beta);

// Fresh layers with weights and biases drawn uniformly from
// [-sqrt(1/fan_in), +sqrt(1/fan_in)].
Linear make_linear(std::size_t in, std::size_t out, Rng& rng);
Conv2d make_conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                   std::size_t padding, Rng& rng);

}  // namespace nnr

#endif  // NNREDUCE_NETWORK_HPP
