// Copyright 2026 The RSTB Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dense f64 tensors with a dynamically recorded reverse-mode graph.
//
// A Tensor is a cheap handle to a graph node. Leaves own their data and
// accumulate gradients across Backward() calls; interior nodes are produced
// by ops (ops.hpp) and keep their inputs alive until the last handle drops.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rstb {

using Shape = std::vector<std::size_t>;

std::size_t NumElements(const Shape& shape);
std::string ShapeString(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient arrives
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads self.grad and accumulates into the inputs that require grad.
  std::function<void(Node& self)> backward;
};

// Returns the gradient buffer of `node`, allocating zeros on first use.
std::span<double> GradBuffer(Node& node);

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor Full(Shape shape, double value, bool requires_grad = false);
  static Tensor FromData(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor Scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Leaves only: interior values are owned by the graph.
  std::span<double> mutable_data();
  double item() const;
  // Element of a C x H x W tensor.
  double at(std::size_t c, std::size_t y, std::size_t x) const;

  bool requires_grad() const;
  void set_requires_grad(bool requires_grad);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // A new leaf holding a copy of the values, cut from the graph.
  Tensor Detach() const;

  // Reverse-mode sweep from this scalar. Leaf gradients accumulate; interior
  // gradients are transient. Returns the number of ops visited.
  std::size_t Backward() const;

  // Op-implementation plumbing.
  detail::Node& node() const;
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
  static Tensor Wrap(std::shared_ptr<detail::Node> node) { return Tensor(std::move(node)); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

// While alive on this thread, ops record no graph edges.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradEnabled();

// Builds an op result. If grad mode is on and any input requires grad, the
// node is linked to `inputs` with `backward`; otherwise it is a plain leaf.
Tensor MakeOpResult(const char* op, Shape shape, std::vector<double> value,
                    std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward);

}  // namespace rstb
