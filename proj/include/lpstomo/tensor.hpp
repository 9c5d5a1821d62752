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

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lpstomo/rng.hpp"

namespace lpstomo {

using Complex = std::complex<double>;
using Shape = std::vector<std::size_t>;

// Axis pair (lhs axis, rhs axis) to be summed over in a contraction.
struct AxisPair {
  std::size_t lhs;
  std::size_t rhs;
};

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

// Dense complex tensor with row-major (C order, last axis fastest) storage.
// Rank 0 is a scalar holding exactly one entry. The linearization is part of
// the serialized format and must not change.
class ComplexTensor {
 public:
  ComplexTensor() : shape_{}, data_(1, Complex{0.0, 0.0}) {}

  explicit ComplexTensor(Shape shape)
      : shape_(std::move(shape)), data_(shape_size(shape_), Complex{0.0, 0.0}) {}

  ComplexTensor(Shape shape, std::vector<Complex> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
      throw std::invalid_argument(
          "ComplexTensor: data length " + std::to_string(data_.size()) +
          " does not match shape size " + std::to_string(shape_size(shape_)));
    }
  }

  static ComplexTensor scalar(Complex value) {
    ComplexTensor t;
    t.data_[0] = value;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }

  std::span<const Complex> data() const { return data_; }
  std::span<Complex> data() { return data_; }
  const Complex& operator[](std::size_t i) const { return data_[i]; }
  Complex& operator[](std::size_t i) { return data_[i]; }

  const Complex& at(std::initializer_list<std::size_t> idx) const {
    return data_[linear_index(idx)];
  }
  Complex& at(std::initializer_list<std::size_t> idx) {
    return data_[linear_index(idx)];
  }

  bool all_finite() const {
    for (const Complex& z : data_) {
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    }
    return true;
  }

  double frobenius_norm() const {
    double s = 0.0;
    for (const Complex& z : data_) s += std::norm(z);
    return std::sqrt(s);
  }

  bool same_bits(const ComplexTensor& other) const {
    if (shape_ != other.shape_) return false;
    for (std::size_t i = 0; i < data_.size(); ++i) {
      if (data_[i].real() != other.data_[i].real() ||
          data_[i].imag() != other.data_[i].imag())
        return false;
    }
    return true;
  }

 private:
  std::size_t linear_index(std::initializer_list<std::size_t> idx) const {
    if (idx.size() != shape_.size()) {
      throw std::invalid_argument("ComplexTensor::at: wrong index rank");
    }
    std::size_t lin = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) {
      if (i >= shape_[axis]) {
        throw std::out_of_range("ComplexTensor::at: index out of range");
      }
      lin = lin * shape_[axis] + i;
      ++axis;
    }
    return lin;
  }

  Shape shape_;
  std::vector<Complex> data_;
};

namespace detail {

inline std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size());
  std::size_t s = 1;
  for (std::size_t d = shape.size(); d-- > 0;) {
    strides[d] = s;
    s *= shape[d];
  }
  return strides;
}

// Element index map realizing an axis permutation: walking the permuted
// tensor in row-major order, map[i] is the source element index. An empty
// map means the permutation is the identity.
inline std::vector<std::uint32_t> permutation_map(const Shape& shape,
                                                  const std::vector<std::size_t>& order) {
  bool identity = true;
  for (std::size_t d = 0; d < order.size(); ++d) {
    if (order[d] != d) identity = false;
  }
  if (identity) return {};

  const std::vector<std::size_t> src_strides = row_major_strides(shape);
  Shape out_shape(order.size());
  std::vector<std::size_t> out_src_stride(order.size());
  for (std::size_t d = 0; d < order.size(); ++d) {
    out_shape[d] = shape[order[d]];
    out_src_stride[d] = src_strides[order[d]];
  }

  const std::size_t total = shape_size(shape);
  std::vector<std::uint32_t> map(total);
  std::vector<std::size_t> counter(order.size(), 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < total; ++i) {
    map[i] = static_cast<std::uint32_t>(src);
    for (std::size_t d = order.size(); d-- > 0;) {
      ++counter[d];
      src += out_src_stride[d];
      if (counter[d] < out_shape[d]) break;
      src -= out_src_stride[d] * out_shape[d];
      counter[d] = 0;
    }
  }
  return map;
}

inline void gather(std::span<const Complex> src,
                   std::span<const std::uint32_t> map, std::span<Complex> dst) {
  for (std::size_t i = 0; i < map.size(); ++i) dst[i] = src[map[i]];
}

inline void scatter_add(std::span<const Complex> src,
                        std::span<const std::uint32_t> map,
                        std::span<Complex> dst) {
  for (std::size_t i = 0; i < map.size(); ++i) dst[map[i]] += src[i];
}

template <bool ConjA, bool ConjB>
inline Complex maybe_conj_prod(const Complex& a, const Complex& b) {
  const Complex ca = ConjA ? std::conj(a) : a;
  const Complex cb = ConjB ? std::conj(b) : b;
  return ca * cb;
}

// C(m x n) = [+=] A(m x k) * B(k x n), all row-major.
template <bool ConjA = false, bool ConjB = false, bool Accumulate = false>
inline void gemm_nn(const Complex* a, const Complex* b, Complex* c,
                    std::size_t m, std::size_t k, std::size_t n) {
  if (!Accumulate) std::fill(c, c + m * n, Complex{0.0, 0.0});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const Complex aip = ConjA ? std::conj(a[i * k + p]) : a[i * k + p];
      if (aip == Complex{0.0, 0.0}) continue;
      const Complex* brow = b + p * n;
      Complex* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += ConjB ? aip * std::conj(brow[j]) : aip * brow[j];
      }
    }
  }
}

// C(m x k) = [+=] Y(m x n) * op(B)^T where B is (k x n): C[i,p] = sum_j Y[i,j] op(B[p,j]).
template <bool ConjB = false, bool Accumulate = false>
inline void gemm_nt(const Complex* y, const Complex* b, Complex* c,
                    std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const Complex* yrow = y + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Complex* brow = b + p * n;
      Complex acc{0.0, 0.0};
      for (std::size_t j = 0; j < n; ++j) {
        acc += ConjB ? yrow[j] * std::conj(brow[j]) : yrow[j] * brow[j];
      }
      if (Accumulate) {
        c[i * k + p] += acc;
      } else {
        c[i * k + p] = acc;
      }
    }
  }
}

// C(k x n) = [+=] op(A)^T * Y where A is (m x k): C[p,j] = sum_i op(A[i,p]) Y[i,j].
template <bool ConjA = false, bool Accumulate = false>
inline void gemm_tn(const Complex* a, const Complex* y, Complex* c,
                    std::size_t m, std::size_t k, std::size_t n) {
  if (!Accumulate) std::fill(c, c + k * n, Complex{0.0, 0.0});
  for (std::size_t i = 0; i < m; ++i) {
    const Complex* yrow = y + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Complex aip = ConjA ? std::conj(a[i * k + p]) : a[i * k + p];
      if (aip == Complex{0.0, 0.0}) continue;
      Complex* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * yrow[j];
    }
  }
}

// Everything needed to execute a pairwise contraction as one matrix product:
// both operands are gathered into (free..., summed...) / (summed..., free...)
// layout and multiplied. Reused by the tape so forward and replay run the
// same kernels.
struct ContractPlan {
  Shape result_shape;
  std::size_t m = 1;  // product of lhs free extents
  std::size_t k = 1;  // product of summed extents
  std::size_t n = 1;  // product of rhs free extents
  std::vector<std::uint32_t> amap;  // empty when lhs is already in layout
  std::vector<std::uint32_t> bmap;  // empty when rhs is already in layout
};

inline ContractPlan make_contract_plan(const Shape& a, const Shape& b,
                                       std::span<const AxisPair> pairs) {
  std::vector<bool> a_used(a.size(), false), b_used(b.size(), false);
  for (const AxisPair& p : pairs) {
    if (p.lhs >= a.size() || p.rhs >= b.size()) {
      throw std::invalid_argument(
          "contract: axis pair (" + std::to_string(p.lhs) + ", " +
          std::to_string(p.rhs) + ") out of range for ranks " +
          std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    if (a_used[p.lhs] || b_used[p.rhs]) {
      throw std::invalid_argument("contract: axis " + std::to_string(p.lhs) +
                                  "/" + std::to_string(p.rhs) +
                                  " paired more than once");
    }
    a_used[p.lhs] = true;
    b_used[p.rhs] = true;
    if (a[p.lhs] != b[p.rhs]) {
      throw std::invalid_argument(
          "contract: paired axis " + std::to_string(p.lhs) + " of lhs (extent " +
          std::to_string(a[p.lhs]) + ") does not match axis " +
          std::to_string(p.rhs) + " of rhs (extent " + std::to_string(b[p.rhs]) +
          ")");
    }
  }

  ContractPlan plan;
  std::vector<std::size_t> a_order, b_order;
  for (std::size_t d = 0; d < a.size(); ++d) {
    if (!a_used[d]) {
      a_order.push_back(d);
      plan.result_shape.push_back(a[d]);
      plan.m *= a[d];
    }
  }
  for (const AxisPair& p : pairs) {
    a_order.push_back(p.lhs);
    plan.k *= a[p.lhs];
  }
  for (const AxisPair& p : pairs) b_order.push_back(p.rhs);
  for (std::size_t d = 0; d < b.size(); ++d) {
    if (!b_used[d]) {
      b_order.push_back(d);
      plan.result_shape.push_back(b[d]);
      plan.n *= b[d];
    }
  }
  plan.amap = permutation_map(a, a_order);
  plan.bmap = permutation_map(b, b_order);
  return plan;
}

}  // namespace detail

// Sums the paired axes of a and b. The result carries the unpaired axes of a
// (in order) followed by the unpaired axes of b.
inline ComplexTensor contract(const ComplexTensor& a, const ComplexTensor& b,
                              std::span<const AxisPair> pairs) {
  const detail::ContractPlan plan =
      detail::make_contract_plan(a.shape(), b.shape(), pairs);

  std::vector<Complex> abuf, bbuf;
  const Complex* adata = a.data().data();
  const Complex* bdata = b.data().data();
  if (!plan.amap.empty()) {
    abuf.resize(a.size());
    detail::gather(a.data(), plan.amap, abuf);
    adata = abuf.data();
  }
  if (!plan.bmap.empty()) {
    bbuf.resize(b.size());
    detail::gather(b.data(), plan.bmap, bbuf);
    bdata = bbuf.data();
  }

  ComplexTensor result(plan.result_shape);
  detail::gemm_nn(adata, bdata, result.data().data(), plan.m, plan.k, plan.n);
  if (!result.all_finite()) {
    throw std::runtime_error("contract: non-finite entries in result");
  }
  return result;
}

inline ComplexTensor contract(const ComplexTensor& a, const ComplexTensor& b,
                              std::initializer_list<AxisPair> pairs) {
  return contract(a, b, std::span<const AxisPair>(pairs.begin(), pairs.size()));
}

inline ComplexTensor conjugate(const ComplexTensor& t) {
  ComplexTensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = std::conj(t[i]);
  return out;
}

inline ComplexTensor permuted(const ComplexTensor& t,
                              const std::vector<std::size_t>& order) {
  if (order.size() != t.rank()) {
    throw std::invalid_argument("permuted: order length does not match rank");
  }
  Shape out_shape(order.size());
  for (std::size_t d = 0; d < order.size(); ++d) out_shape[d] = t.shape()[order[d]];
  const auto map = detail::permutation_map(t.shape(), order);
  ComplexTensor out(out_shape);
  if (map.empty()) {
    std::copy(t.data().begin(), t.data().end(), out.data().begin());
  } else {
    detail::gather(t.data(), map, out.data());
  }
  return out;
}

inline ComplexTensor reshaped(const ComplexTensor& t, Shape shape) {
  if (shape_size(shape) != t.size()) {
    throw std::invalid_argument("reshaped: new shape size " +
                                std::to_string(shape_size(shape)) +
                                " does not match data length " +
                                std::to_string(t.size()));
  }
  return ComplexTensor(std::move(shape),
                       std::vector<Complex>(t.data().begin(), t.data().end()));
}

inline ComplexTensor scaled(const ComplexTensor& t, Complex factor) {
  ComplexTensor out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = factor * t[i];
  return out;
}

inline ComplexTensor random_gaussian_tensor(Shape shape, double stddev, Rng& rng) {
  ComplexTensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.complex_gaussian(stddev);
  return t;
}

// Serialized form: {"shape": [...], "data": [re0, im0, re1, im1, ...]} with
// the data in row-major order. Doubles round-trip exactly through JSON.
inline void to_json(nlohmann::json& j, const ComplexTensor& t) {
  std::vector<double> interleaved;
  interleaved.reserve(2 * t.size());
  for (const Complex& z : t.data()) {
    interleaved.push_back(z.real());
    interleaved.push_back(z.imag());
  }
  j = nlohmann::json{{"shape", t.shape()}, {"data", std::move(interleaved)}};
}

inline void from_json(const nlohmann::json& j, ComplexTensor& t) {
  Shape shape = j.at("shape").get<Shape>();
  const auto& interleaved = j.at("data");
  if (interleaved.size() != 2 * shape_size(shape)) {
    throw std::invalid_argument("tensor record: data length does not match shape");
  }
  std::vector<Complex> data(shape_size(shape));
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = Complex(interleaved[2 * i].get<double>(),
                      interleaved[2 * i + 1].get<double>());
  }
  t = ComplexTensor(std::move(shape), std::move(data));
}

}  // namespace lpstomo
