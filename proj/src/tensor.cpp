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

#include "noisetag/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace noisetag::nn {

std::size_t numel_of(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(std::vector<std::size_t> s)
    : shape(std::move(s)), data(numel_of(shape), 0.0) {}

Tensor Tensor::from(std::vector<std::size_t> s, std::vector<double> d) {
  if (numel_of(s) != d.size()) {
    throw ShapeError("tensor data size " + std::to_string(d.size()) +
                     " does not match shape " + shape_str(s));
  }
  Tensor t;
  t.shape = std::move(s);
  t.data = std::move(d);
  return t;
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= shape.size()) {
    throw ShapeError("dimension " + std::to_string(i) +
                     " out of range for shape " + shape_str(shape));
  }
  return shape[i];
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

bool Tensor::all_finite() const {
  for (double x : data) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace noisetag::nn
