// Copyright 2026 The lpstomo developers.
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

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "lpstomo/tensor.hpp"

namespace lpstomo {

// Recorded primitive graph of tensor operations ending in a real scalar.
//
// Recording evaluates eagerly, so the value of every node is available as
// soon as it is created. The graph can then be re-evaluated in place after
// changing leaf values (forward), and differentiated in reverse (backward).
// Replaying with identical leaf values reproduces every node bit for bit:
// evaluation order and kernels are fixed at record time.
//
// Gradients follow the convention for real functions of complex parameters:
// the reported gradient of f with respect to z is df/dRe(z) + i df/dIm(z).
class ContractionTape {
 public:
  using NodeId = std::int32_t;

  // --- recording -----------------------------------------------------------

  NodeId leaf(const ComplexTensor& v, bool track_gradient = true) {
    Node node;
    node.op = Op::kLeaf;
    node.needs_grad = track_gradient;
    const NodeId id = push(node, v.shape());
    write_value(id, v);
    if (track_gradient) tracked_leaves_.push_back(id);
    return id;
  }

  NodeId constant(const ComplexTensor& v) { return leaf(v, false); }

  NodeId contract(NodeId a, NodeId b, std::vector<AxisPair> pairs) {
    detail::ContractPlan plan =
        detail::make_contract_plan(shape_of(a), shape_of(b), pairs);
    Node node;
    node.op = Op::kContract;
    node.a = a;
    node.b = b;
    node.m = plan.m;
    node.k = plan.k;
    node.n = plan.n;
    node.amap = std::move(plan.amap);
    node.bmap = std::move(plan.bmap);
    node.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    scratch_need_ = std::max({scratch_need_, len_of(a), len_of(b),
                              plan.m * plan.k, plan.k * plan.n});
    const NodeId id = push(node, std::move(plan.result_shape));
    eval(id);
    return id;
  }

  NodeId conjugate(NodeId a) { return unary(Op::kConjugate, a); }

  NodeId add(NodeId a, NodeId b) {
    require_same_shape(a, b, "add");
    Node node;
    node.op = Op::kAdd;
    node.a = a;
    node.b = b;
    node.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    const NodeId id = push(node, shape_of(a));
    eval(id);
    return id;
  }

  NodeId scale(NodeId a, Complex factor) {
    return unary(Op::kScale, a, factor);
  }

  NodeId shift(NodeId a, Complex offset) {
    return unary(Op::kShift, a, offset);
  }

  NodeId hadamard(NodeId a, NodeId b) {
    require_same_shape(a, b, "hadamard");
    Node node;
    node.op = Op::kHadamard;
    node.a = a;
    node.b = b;
    node.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    const NodeId id = push(node, shape_of(a));
    eval(id);
    return id;
  }

  NodeId reciprocal(NodeId a) { return unary(Op::kReciprocal, a); }
  NodeId real_part(NodeId a) { return unary(Op::kRealPart, a); }

  NodeId sum_all(NodeId a) {
    Node node;
    node.op = Op::kSumAll;
    node.a = a;
    node.needs_grad = nodes_[a].needs_grad;
    const NodeId id = push(node, Shape{});
    eval(id);
    return id;
  }

  NodeId reshape(NodeId a, Shape shape) {
    if (shape_size(shape) != len_of(a)) {
      throw std::invalid_argument("tape reshape: size mismatch");
    }
    Node node;
    node.op = Op::kReshape;
    node.a = a;
    node.needs_grad = nodes_[a].needs_grad;
    const NodeId id = push(node, std::move(shape));
    eval(id);
    return id;
  }

  // --- evaluation ----------------------------------------------------------

  void set_leaf(NodeId id, const ComplexTensor& v) {
    check_leaf(id);
    if (v.size() != len_of(id)) {
      throw std::invalid_argument("set_leaf: tensor size mismatch");
    }
    write_value(id, v);
  }

  void set_leaf(NodeId id, std::span<const Complex> data) {
    check_leaf(id);
    if (data.size() != len_of(id)) {
      throw std::invalid_argument("set_leaf: data size mismatch");
    }
    std::copy(data.begin(), data.end(), values_.begin() + nodes_[id].off);
  }

  // Re-evaluates every non-leaf node in recording order.
  void forward() {
    for (NodeId id = 0; id < static_cast<NodeId>(nodes_.size()); ++id) {
      if (nodes_[id].op != Op::kLeaf) eval(id);
    }
  }

  ComplexTensor value(NodeId id) const {
    const Node& node = nodes_[id];
    return ComplexTensor(node.shape,
                         std::vector<Complex>(values_.begin() + node.off,
                                              values_.begin() + node.off + node.len));
  }

  double scalar_value(NodeId id) const {
    if (len_of(id) != 1) {
      throw std::invalid_argument("scalar_value: node is not rank 0");
    }
    return values_[nodes_[id].off].real();
  }

  NodeId output() const {
    if (nodes_.empty()) throw std::logic_error("tape is empty");
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  std::size_t node_count() const { return nodes_.size(); }

  // --- differentiation -----------------------------------------------------

  // Reverse sweep from the final node, which must hold a real scalar.
  // Gradients accumulate for every node with needs_grad set; read them off
  // with gradient() or leaf_gradients().
  void backward(double seed = 1.0) {
    const NodeId root = output();
    const Node& out = nodes_[root];
    if (out.len != 1) {
      throw std::domain_error("backward: tape output is not a scalar");
    }
    const Complex v = values_[out.off];
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()) ||
        std::abs(v.imag()) > 1e-9 * std::max(1.0, std::abs(v.real()))) {
      throw std::domain_error("backward: tape output is not real");
    }

    grads_.assign(values_.size(), Complex{0.0, 0.0});
    ensure_scratch();
    grads_[out.off] = Complex{seed, 0.0};

    for (NodeId id = root; id >= 0; --id) {
      const Node& node = nodes_[id];
      if (!node.needs_grad || node.op == Op::kLeaf) continue;
      const Complex* gy = grads_.data() + node.off;
      const Complex* y = values_.data() + node.off;
      switch (node.op) {
        case Op::kContract:
          backward_contract(node, gy);
          break;
        case Op::kConjugate: {
          Complex* ga = grads_.data() + nodes_[node.a].off;
          for (std::size_t i = 0; i < node.len; ++i) ga[i] += std::conj(gy[i]);
          break;
        }
        case Op::kAdd: {
          if (nodes_[node.a].needs_grad) {
            Complex* ga = grads_.data() + nodes_[node.a].off;
            for (std::size_t i = 0; i < node.len; ++i) ga[i] += gy[i];
          }
          if (nodes_[node.b].needs_grad) {
            Complex* gb = grads_.data() + nodes_[node.b].off;
            for (std::size_t i = 0; i < node.len; ++i) gb[i] += gy[i];
          }
          break;
        }
        case Op::kScale: {
          Complex* ga = grads_.data() + nodes_[node.a].off;
          const Complex c = std::conj(node.scalar);
          for (std::size_t i = 0; i < node.len; ++i) ga[i] += c * gy[i];
          break;
        }
        case Op::kShift: {
          Complex* ga = grads_.data() + nodes_[node.a].off;
          for (std::size_t i = 0; i < node.len; ++i) ga[i] += gy[i];
          break;
        }
        case Op::kHadamard: {
          const Complex* av = values_.data() + nodes_[node.a].off;
          const Complex* bv = values_.data() + nodes_[node.b].off;
          if (nodes_[node.a].needs_grad) {
            Complex* ga = grads_.data() + nodes_[node.a].off;
            for (std::size_t i = 0; i < node.len; ++i)
              ga[i] += std::conj(bv[i]) * gy[i];
          }
          if (nodes_[node.b].needs_grad) {
            Complex* gb = grads_.data() + nodes_[node.b].off;
            for (std::size_t i = 0; i < node.len; ++i)
              gb[i] += std::conj(av[i]) * gy[i];
          }
          break;
        }
        case Op::kReciprocal: {
          Complex* ga = grads_.data() + nodes_[node.a].off;
          for (std::size_t i = 0; i < node.len; ++i) {
            const Complex cy = std::conj(y[i]);
            ga[i] += -cy * cy * gy[i];
          }
          break;
        }
        case Op::kRealPart: {
          Complex* ga = grads_.data() + nodes_[node.a].off;
          for (std::size_t i = 0; i < node.len; ++i)
            ga[i] += Complex{gy[i].real(), 0.0};
          break;
        }
        case Op::kSumAll: {
          Complex* ga = grads_.data() + nodes_[node.a].off;
          const Complex g = gy[0];
          for (std::size_t i = 0; i < nodes_[node.a].len; ++i) ga[i] += g;
          break;
        }
        case Op::kReshape: {
          Complex* ga = grads_.data() + nodes_[node.a].off;
          for (std::size_t i = 0; i < node.len; ++i) ga[i] += gy[i];
          break;
        }
        case Op::kLeaf:
          break;
      }
    }
  }

  ComplexTensor gradient(NodeId id) const {
    const Node& node = nodes_[id];
    if (grads_.size() != values_.size()) {
      throw std::logic_error("gradient: backward has not run");
    }
    return ComplexTensor(node.shape,
                         std::vector<Complex>(grads_.begin() + node.off,
                                              grads_.begin() + node.off + node.len));
  }

  // Gradients of the tracked leaves, in registration order.
  std::vector<ComplexTensor> leaf_gradients() const {
    std::vector<ComplexTensor> out;
    out.reserve(tracked_leaves_.size());
    for (NodeId id : tracked_leaves_) out.push_back(gradient(id));
    return out;
  }

  const std::vector<NodeId>& tracked_leaves() const { return tracked_leaves_; }

 private:
  enum class Op : std::uint8_t {
    kLeaf,
    kContract,
    kConjugate,
    kAdd,
    kScale,
    kShift,
    kHadamard,
    kReciprocal,
    kRealPart,
    kSumAll,
    kReshape,
  };

  struct Node {
    Op op = Op::kLeaf;
    bool needs_grad = false;
    NodeId a = -1;
    NodeId b = -1;
    std::size_t off = 0;
    std::size_t len = 0;
    Shape shape;
    Complex scalar{0.0, 0.0};
    // contraction plan
    std::size_t m = 0, k = 0, n = 0;
    std::vector<std::uint32_t> amap, bmap;
  };

  NodeId push(Node& node, Shape shape) {
    node.shape = std::move(shape);
    node.len = shape_size(node.shape);
    node.off = values_.size();
    values_.resize(values_.size() + node.len, Complex{0.0, 0.0});
    nodes_.push_back(std::move(node));
    return static_cast<NodeId>(nodes_.size() - 1);
  }

  NodeId unary(Op op, NodeId a, Complex scalar = Complex{0.0, 0.0}) {
    Node node;
    node.op = op;
    node.a = a;
    node.scalar = scalar;
    node.needs_grad = nodes_[a].needs_grad;
    const NodeId id = push(node, shape_of(a));
    eval(id);
    return id;
  }

  void require_same_shape(NodeId a, NodeId b, const char* what) const {
    if (shape_of(a) != shape_of(b)) {
      throw std::invalid_argument(std::string(what) + ": operand shapes differ");
    }
  }

  void check_leaf(NodeId id) const {
    if (id < 0 || id >= static_cast<NodeId>(nodes_.size()) ||
        nodes_[id].op != Op::kLeaf) {
      throw std::invalid_argument("set_leaf: node is not a leaf");
    }
  }

  const Shape& shape_of(NodeId id) const { return nodes_[id].shape; }
  std::size_t len_of(NodeId id) const { return nodes_[id].len; }

  void write_value(NodeId id, const ComplexTensor& v) {
    std::copy(v.data().begin(), v.data().end(), values_.begin() + nodes_[id].off);
  }

  void ensure_scratch() {
    if (scratch_a_.size() < scratch_need_) {
      scratch_a_.resize(scratch_need_);
      scratch_b_.resize(scratch_need_);
      scratch_c_.resize(scratch_need_);
    }
  }

  // Gathers a contraction operand into matrix layout, using scratch when a
  // permutation is required.
  const Complex* gathered(const Node& operand,
                          const std::vector<std::uint32_t>& map,
                          std::vector<Complex>& scratch) {
    const Complex* raw = values_.data() + operand.off;
    if (map.empty()) return raw;
    detail::gather(std::span<const Complex>(raw, operand.len), map,
                   std::span<Complex>(scratch.data(), map.size()));
    return scratch.data();
  }

  void eval(NodeId id) {
    Node& node = nodes_[id];
    Complex* out = values_.data() + node.off;
    switch (node.op) {
      case Op::kLeaf:
        break;
      case Op::kContract: {
        ensure_scratch();
        const Complex* a = gathered(nodes_[node.a], node.amap, scratch_a_);
        const Complex* b = gathered(nodes_[node.b], node.bmap, scratch_b_);
        detail::gemm_nn(a, b, out, node.m, node.k, node.n);
        break;
      }
      case Op::kConjugate: {
        const Complex* a = values_.data() + nodes_[node.a].off;
        for (std::size_t i = 0; i < node.len; ++i) out[i] = std::conj(a[i]);
        break;
      }
      case Op::kAdd: {
        const Complex* a = values_.data() + nodes_[node.a].off;
        const Complex* b = values_.data() + nodes_[node.b].off;
        for (std::size_t i = 0; i < node.len; ++i) out[i] = a[i] + b[i];
        break;
      }
      case Op::kScale: {
        const Complex* a = values_.data() + nodes_[node.a].off;
        for (std::size_t i = 0; i < node.len; ++i) out[i] = node.scalar * a[i];
        break;
      }
      case Op::kShift: {
        const Complex* a = values_.data() + nodes_[node.a].off;
        for (std::size_t i = 0; i < node.len; ++i) out[i] = a[i] + node.scalar;
        break;
      }
      case Op::kHadamard: {
        const Complex* a = values_.data() + nodes_[node.a].off;
        const Complex* b = values_.data() + nodes_[node.b].off;
        for (std::size_t i = 0; i < node.len; ++i) out[i] = a[i] * b[i];
        break;
      }
      case Op::kReciprocal: {
        const Complex* a = values_.data() + nodes_[node.a].off;
        for (std::size_t i = 0; i < node.len; ++i) out[i] = 1.0 / a[i];
        break;
      }
      case Op::kRealPart: {
        const Complex* a = values_.data() + nodes_[node.a].off;
        for (std::size_t i = 0; i < node.len; ++i)
          out[i] = Complex{a[i].real(), 0.0};
        break;
      }
      case Op::kSumAll: {
        const Complex* a = values_.data() + nodes_[node.a].off;
        Complex acc{0.0, 0.0};
        for (std::size_t i = 0; i < nodes_[node.a].len; ++i) acc += a[i];
        out[0] = acc;
        break;
      }
      case Op::kReshape: {
        const Complex* a = values_.data() + nodes_[node.a].off;
        std::copy(a, a + node.len, out);
        break;
      }
    }
  }

  void backward_contract(const Node& node, const Complex* gy) {
    const Node& na = nodes_[node.a];
    const Node& nb = nodes_[node.b];
    const Complex* a = gathered(na, node.amap, scratch_a_);
    const Complex* b = gathered(nb, node.bmap, scratch_b_);
    if (na.needs_grad) {
      Complex* ga = grads_.data() + na.off;
      if (node.amap.empty()) {
        detail::gemm_nt<true, true>(gy, b, ga, node.m, node.n, node.k);
      } else {
        detail::gemm_nt<true, false>(gy, b, scratch_c_.data(), node.m, node.n,
                                     node.k);
        detail::scatter_add(
            std::span<const Complex>(scratch_c_.data(), node.m * node.k),
            node.amap, std::span<Complex>(ga, na.len));
      }
    }
    if (nb.needs_grad) {
      Complex* gb = grads_.data() + nb.off;
      if (node.bmap.empty()) {
        detail::gemm_tn<true, true>(a, gy, gb, node.m, node.k, node.n);
      } else {
        detail::gemm_tn<true, false>(a, gy, scratch_c_.data(), node.m, node.k,
                                     node.n);
        detail::scatter_add(
            std::span<const Complex>(scratch_c_.data(), node.k * node.n),
            node.bmap, std::span<Complex>(gb, nb.len));
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<Complex> values_;
  std::vector<Complex> grads_;
  std::vector<NodeId> tracked_leaves_;
  std::size_t scratch_need_ = 0;
  std::vector<Complex> scratch_a_, scratch_b_, scratch_c_;
};

// Convenience form matching the operation signature used elsewhere: run the
// reverse sweep and collect the gradients of the tracked leaves.
inline std::vector<ComplexTensor> backward(ContractionTape& tape,
                                           double seed = 1.0) {
  tape.backward(seed);
  return tape.leaf_gradients();
}

}  // namespace lpstomo
