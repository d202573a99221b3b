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

#include "rstb/tensor.hpp"

#include <algorithm>
#include <unordered_set>
#include <utility>

#include "rstb/error.hpp"

namespace rstb {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch:
      return "shape mismatch";
    case ErrorCode::kInvalidArgument:
      return "invalid argument";
    case ErrorCode::kEmptyTensor:
      return "empty tensor";
    case ErrorCode::kNonScalarLoss:
      return "non-scalar loss";
    case ErrorCode::kNonFinite:
      return "non-finite value";
    case ErrorCode::kIo:
      return "i/o error";
    case ErrorCode::kFormat:
      return "format error";
    case ErrorCode::kConfig:
      return "config error";
    case ErrorCode::kMissingCells:
      return "missing cells";
    case ErrorCode::kDiverged:
      return "diverged";
  }
  return "error";
}

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string ShapeString(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace detail {

std::span<double> GradBuffer(Node& node) {
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

}  // namespace detail

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> NewLeaf(Shape shape, std::vector<double> data, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw Error(ErrorCode::kEmptyTensor, "zero-sized dimension in " + ShapeString(shape));
  }
  if (NumElements(shape) != data.size()) {
    throw Error(ErrorCode::kShapeMismatch, "shape " + ShapeString(shape) + " holds " +
                                               std::to_string(NumElements(shape)) +
                                               " values, got " + std::to_string(data.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return node;
}

}  // namespace

Tensor Tensor::Zeros(Shape shape, bool requires_grad) {
  const std::size_t n = NumElements(shape);
  return Tensor(NewLeaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::Full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = NumElements(shape);
  return Tensor(NewLeaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::FromData(Shape shape, std::vector<double> data, bool requires_grad) {
  return Tensor(NewLeaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::Scalar(double value, bool requires_grad) {
  return Tensor(NewLeaf({1}, {value}, requires_grad));
}

detail::Node& Tensor::node() const {
  if (!node_) throw Error(ErrorCode::kInvalidArgument, "use of an undefined tensor");
  return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "axis " + std::to_string(axis) + " out of range for " + ShapeString(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return node().value.size(); }

std::span<const double> Tensor::data() const { return node().value; }

std::span<double> Tensor::mutable_data() {
  if (!node().leaf) throw Error(ErrorCode::kInvalidArgument, "mutable_data on an op result");
  return node().value;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw Error(ErrorCode::kShapeMismatch, "item() on tensor of shape " + ShapeString(shape()));
  }
  return node().value[0];
}

double Tensor::at(std::size_t c, std::size_t y, std::size_t x) const {
  const Shape& s = shape();
  return node().value[(c * s[1] + y) * s[2] + x];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

void Tensor::set_requires_grad(bool requires_grad) {
  if (!node().leaf) throw Error(ErrorCode::kInvalidArgument, "set_requires_grad on an op result");
  node_->requires_grad = requires_grad;
}

bool Tensor::is_leaf() const { return node().leaf; }

bool Tensor::has_grad() const { return !node().grad.empty(); }

std::span<const double> Tensor::grad() const { return node().grad; }

void Tensor::zero_grad() { node().grad.clear(); }

Tensor Tensor::Detach() const { return Tensor(NewLeaf(shape(), node().value, false)); }

std::size_t Tensor::Backward() const {
  detail::Node& root = node();
  if (root.value.size() != 1) {
    throw Error(ErrorCode::kNonScalarLoss, "backward from tensor of shape " + ShapeString(root.shape));
  }
  if (!root.requires_grad) return 0;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{&root, 0}};
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      detail::Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    order.push_back(n);
    stack.pop_back();
  }

  for (detail::Node* n : order) {
    if (!n->leaf) n->grad.clear();
  }
  detail::GradBuffer(root)[0] += 1.0;

  std::size_t visited = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->leaf) continue;
    if (!n->grad.empty() && n->backward) n->backward(*n);
    ++visited;
    n->grad.clear();
    n->grad.shrink_to_fit();
  }
  return visited;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool GradEnabled() { return g_grad_enabled; }

Tensor MakeOpResult(const char* op, Shape shape, std::vector<double> value,
                    std::vector<Tensor> inputs, std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  bool track = false;
  if (g_grad_enabled) {
    for (const Tensor& t : inputs) track = track || t.requires_grad();
  }
  if (track) {
    node->leaf = false;
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (Tensor& t : inputs) node->inputs.push_back(t.node_ptr());
    node->backward = std::move(backward);
  }
  return Tensor::Wrap(std::move(node));
}

}  // namespace rstb
