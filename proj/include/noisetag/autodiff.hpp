// Copyright 2026 The Noisetag Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "noisetag/rng.hpp"
#include "noisetag/tensor.hpp"

namespace noisetag::nn {

/// A named value with an optional gradient slot. Batch-norm running
/// statistics are stored here too, flagged non-trainable.
struct ParamTensor {
  Tensor value;
  Tensor grad;
  bool trainable = true;
};

/// Insertion-ordered parameter store. Iteration order is the build order of
/// the model, which keeps optimizer updates and checkpoints deterministic.
class Parameters {
 public:
  ParamTensor& add(const std::string& name, Tensor init, bool trainable = true);
  ParamTensor& at(const std::string& name);
  const ParamTensor& at(const std::string& name) const;
  ParamTensor* find(const std::string& name);

  std::vector<std::pair<std::string, ParamTensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, ParamTensor>>& items() const {
    return items_;
  }
  std::size_t tensor_count() const { return items_.size(); }
  std::size_t trainable_element_count() const;
  void zero_grads();

 private:
  std::vector<std::pair<std::string, ParamTensor>> items_;
};

enum class Mode { kTrain, kEval };
enum class ConvImpl { kIm2col, kNaive };

/// Handle into a Graph's tape.
struct Var {
  int id = -1;
};

/// Reverse-mode autodiff tape. A graph is built by one forward pass and
/// consumed by one backward() call; gradients of bound parameters accumulate
/// into their ParamTensor::grad buffers.
class Graph {
 public:
  explicit Graph(ConvImpl conv_impl = ConvImpl::kIm2col)
      : conv_impl_(conv_impl) {}

  Var input(Tensor value);
  Var param(ParamTensor& p);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var square(Var a);
  Var sum(Var a);  // scalar

  Var relu(Var x);
  Var sigmoid(Var x);

  /// x: N x F_in, w: F_out x F_in, b: F_out -> N x F_out.
  Var dense(Var x, Var w, Var b);

  /// Cross-correlation. x: N x C x H x W, w: K x C x kh x kw, b: K.
  /// Output spatial extent: floor((H + 2*pad - kh) / stride) + 1.
  Var conv2d(Var x, Var w, Var b, std::size_t pad, std::size_t stride);

  /// Per-channel batch normalisation over (N, H, W). Train mode uses batch
  /// statistics and updates the running buffers; eval mode reads them.
  Var batchnorm(Var x, Var gamma, Var beta, Tensor& running_mean,
                Tensor& running_var, Mode mode, double momentum, double eps);

  /// 2x2 average pooling with stride 2; trailing odd row/column dropped.
  Var avgpool2x2(Var x);

  /// N x C x H x W -> N x C spatial mean.
  Var global_avg_pool(Var x);

  /// Inverted dropout: train mode zeroes units with probability rate and
  /// scales survivors by 1/(1-rate); eval mode is an exact identity.
  Var dropout(Var x, double rate, Mode mode, Rng* rng);

  /// Mean binary cross-entropy over all entries; probabilities are clamped
  /// to [1e-7, 1 - 1e-7]. targets entries must be 0 or 1.
  Var bce_loss(Var probs, const Tensor& targets);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  void backward(Var loss);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Graph&, int)> backprop;
    ParamTensor* bound = nullptr;
    bool requires_grad = false;
  };

  Var make_node(Tensor value, bool requires_grad,
                std::function<void(Graph&, int)> backprop);
  Node& node(Var v);
  const Node& node(Var v) const;
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  void ensure_grad(int id);
  void accumulate(int id, const Tensor& g);
  void check(Var v) const;

  std::vector<Node> nodes_;
  ConvImpl conv_impl_;
  bool consumed_ = false;
};

/// Direct-loop convolution forward, used as the oracle for the im2col path.
Tensor conv2d_reference(const Tensor& x, const Tensor& w, const Tensor& b,
                        std::size_t pad, std::size_t stride);

}  // namespace noisetag::nn
