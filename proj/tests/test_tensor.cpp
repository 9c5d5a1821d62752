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

#include <catch2/catch_amalgamated.hpp>

#include <complex>
#include <cstddef>
#include <vector>

#include <nlohmann/json.hpp>

#include "lpstomo/rng.hpp"
#include "lpstomo/tensor.hpp"

namespace {

using lpstomo::AxisPair;
using lpstomo::Complex;
using lpstomo::ComplexTensor;
using lpstomo::Rng;
using lpstomo::Shape;

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t d = s.size(); d-- > 1;) st[d - 1] = st[d] * s[d];
  return st;
}

// Straight nested-loop contraction used as the oracle: walk every result
// element, then every summed multi-index, and accumulate products via raw
// stride arithmetic. No shared code with the library kernel.
ComplexTensor reference_contract(const ComplexTensor& a, const ComplexTensor& b,
                                 const std::vector<AxisPair>& pairs) {
  std::vector<bool> a_summed(a.rank(), false), b_summed(b.rank(), false);
  for (const AxisPair& p : pairs) {
    a_summed[p.lhs] = true;
    b_summed[p.rhs] = true;
  }
  std::vector<std::size_t> a_free, b_free;
  Shape out_shape;
  for (std::size_t d = 0; d < a.rank(); ++d) {
    if (!a_summed[d]) {
      a_free.push_back(d);
      out_shape.push_back(a.extent(d));
    }
  }
  for (std::size_t d = 0; d < b.rank(); ++d) {
    if (!b_summed[d]) {
      b_free.push_back(d);
      out_shape.push_back(b.extent(d));
    }
  }
  Shape sum_shape;
  for (const AxisPair& p : pairs) sum_shape.push_back(a.extent(p.lhs));

  const auto sa = strides_of(a.shape());
  const auto sb = strides_of(b.shape());
  std::size_t sum_total = 1;
  for (std::size_t e : sum_shape) sum_total *= e;

  ComplexTensor out(out_shape);
  std::vector<std::size_t> oc(out_shape.size(), 0);
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    std::size_t rem = flat;
    for (std::size_t d = out_shape.size(); d-- > 0;) {
      oc[d] = rem % out_shape[d];
      rem /= out_shape[d];
    }
    std::size_t abase = 0, bbase = 0;
    for (std::size_t d = 0; d < a_free.size(); ++d) abase += oc[d] * sa[a_free[d]];
    for (std::size_t d = 0; d < b_free.size(); ++d)
      bbase += oc[a_free.size() + d] * sb[b_free[d]];

    Complex acc{0.0, 0.0};
    for (std::size_t t = 0; t < sum_total; ++t) {
      std::size_t srem = t, ai = abase, bi = bbase;
      for (std::size_t d = pairs.size(); d-- > 0;) {
        const std::size_t ci = srem % sum_shape[d];
        srem /= sum_shape[d];
        ai += ci * sa[pairs[d].lhs];
        bi += ci * sb[pairs[d].rhs];
      }
      acc += a[ai] * b[bi];
    }
    out[flat] = acc;
  }
  return out;
}

double max_abs_diff(const ComplexTensor& x, const ComplexTensor& y) {
  REQUIRE(x.shape() == y.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    m = std::max(m, std::abs(x[i] - y[i]));
  }
  return m;
}

}  // namespace

TEST_CASE("matrix product matches a triple loop", "[tensor]") {
  Rng rng(12345);
  ComplexTensor a = lpstomo::random_gaussian_tensor({3, 4}, 1.0, rng);
  ComplexTensor b = lpstomo::random_gaussian_tensor({4, 5}, 1.0, rng);

  ComplexTensor expected({3, 5});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      Complex acc{0.0, 0.0};
      for (std::size_t p = 0; p < 4; ++p) acc += a.at({i, p}) * b.at({p, j});
      expected.at({i, j}) = acc;
    }
  }

  const ComplexTensor got = lpstomo::contract(a, b, {AxisPair{1, 0}});
  REQUIRE(got.shape() == Shape{3, 5});
  CHECK(max_abs_diff(got, expected) < 1e-13);
}

TEST_CASE("contraction agrees with the nested-loop oracle on random cases",
          "[tensor]") {
  Rng rng(98765);
  for (int trial = 0; trial < 40; ++trial) {
    // Random ranks up to 4/4 with extents up to 4, and a random set of
    // compatible summed pairs (possibly none, giving an outer product).
    const std::size_t ra = 1 + rng.uniform_below(4);
    const std::size_t rb = 1 + rng.uniform_below(4);
    Shape sa(ra), sb(rb);
    for (auto& e : sa) e = 1 + rng.uniform_below(4);
    for (auto& e : sb) e = 1 + rng.uniform_below(4);

    const std::size_t max_pairs = std::min(ra, rb);
    const std::size_t n_pairs = rng.uniform_below(max_pairs + 1);
    std::vector<AxisPair> pairs;
    for (std::size_t d = 0; d < n_pairs; ++d) {
      sb[rb - 1 - d] = sa[d];  // force matching extents
      pairs.push_back(AxisPair{d, rb - 1 - d});
    }

    ComplexTensor a = lpstomo::random_gaussian_tensor(sa, 1.0, rng);
    ComplexTensor b = lpstomo::random_gaussian_tensor(sb, 1.0, rng);
    const ComplexTensor got =
        lpstomo::contract(a, b, std::span<const AxisPair>(pairs));
    const ComplexTensor expected = reference_contract(a, b, pairs);
    REQUIRE(got.shape() == expected.shape());
    CHECK(max_abs_diff(got, expected) < 1e-12);
  }
}

TEST_CASE("contraction with permuted summed axes matches the oracle",
          "[tensor]") {
  // Pairings chosen so both operands need a gather before the matrix product.
  Rng rng(4242);
  ComplexTensor a = lpstomo::random_gaussian_tensor({2, 3, 4}, 1.0, rng);
  ComplexTensor b = lpstomo::random_gaussian_tensor({4, 5, 2}, 1.0, rng);
  const std::vector<AxisPair> pairs{{2, 0}, {0, 2}};
  const ComplexTensor got =
      lpstomo::contract(a, b, std::span<const AxisPair>(pairs));
  const ComplexTensor expected = reference_contract(a, b, pairs);
  REQUIRE(got.shape() == Shape{3, 5});
  CHECK(max_abs_diff(got, expected) < 1e-12);
}

TEST_CASE("contraction is bilinear", "[tensor]") {
  Rng rng(777);
  const ComplexTensor a = lpstomo::random_gaussian_tensor({3, 4}, 1.0, rng);
  const ComplexTensor a2 = lpstomo::random_gaussian_tensor({3, 4}, 1.0, rng);
  const ComplexTensor b = lpstomo::random_gaussian_tensor({4, 2}, 1.0, rng);
  const Complex alpha{0.7, -1.3};

  // contract(alpha*a + a2, b) == alpha*contract(a, b) + contract(a2, b)
  ComplexTensor lhs_in(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) lhs_in[i] = alpha * a[i] + a2[i];
  const ComplexTensor lhs = lpstomo::contract(lhs_in, b, {AxisPair{1, 0}});

  const ComplexTensor t1 = lpstomo::contract(a, b, {AxisPair{1, 0}});
  const ComplexTensor t2 = lpstomo::contract(a2, b, {AxisPair{1, 0}});
  ComplexTensor rhs(t1.shape());
  for (std::size_t i = 0; i < t1.size(); ++i) rhs[i] = alpha * t1[i] + t2[i];

  CHECK(max_abs_diff(lhs, rhs) < 1e-12);
}

TEST_CASE("full contraction of a rank-1 pair gives a rank-0 result",
          "[tensor]") {
  ComplexTensor a({2}, {Complex{1.0, 2.0}, Complex{3.0, -1.0}});
  ComplexTensor b({2}, {Complex{0.5, 0.0}, Complex{0.0, 1.0}});
  const ComplexTensor got = lpstomo::contract(a, b, {AxisPair{0, 0}});
  REQUIRE(got.rank() == 0);
  REQUIRE(got.size() == 1);
  const Complex expected = a[0] * b[0] + a[1] * b[1];
  CHECK(std::abs(got[0] - expected) < 1e-15);
}

TEST_CASE("contract validates its axis pairs", "[tensor]") {
  Rng rng(1);
  const ComplexTensor a = lpstomo::random_gaussian_tensor({2, 3}, 1.0, rng);
  const ComplexTensor b = lpstomo::random_gaussian_tensor({3, 2}, 1.0, rng);

  CHECK_THROWS_AS(lpstomo::contract(a, b, {AxisPair{5, 0}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(lpstomo::contract(a, b, {AxisPair{0, 0}}),
                  std::invalid_argument);  // extent 2 vs 3
  CHECK_THROWS_AS(lpstomo::contract(a, b, {AxisPair{1, 0}, AxisPair{1, 1}}),
                  std::invalid_argument);  // lhs axis used twice
}

TEST_CASE("permuted reorders axes and composes with its inverse", "[tensor]") {
  Rng rng(31415);
  const ComplexTensor t = lpstomo::random_gaussian_tensor({2, 3, 4}, 1.0, rng);
  const ComplexTensor p = lpstomo::permuted(t, {2, 0, 1});
  REQUIRE(p.shape() == Shape{4, 2, 3});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 4; ++k)
        CHECK(p.at({k, i, j}) == t.at({i, j, k}));

  const ComplexTensor back = lpstomo::permuted(p, {1, 2, 0});
  CHECK(back.same_bits(t));
}

TEST_CASE("reshaped keeps the row-major element order", "[tensor]") {
  Rng rng(99);
  const ComplexTensor t = lpstomo::random_gaussian_tensor({3, 4}, 1.0, rng);
  const ComplexTensor r = lpstomo::reshaped(t, {2, 6});
  REQUIRE(r.shape() == Shape{2, 6});
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(r[i] == t[i]);
  CHECK_THROWS_AS(lpstomo::reshaped(t, {5, 2}), std::invalid_argument);
}

TEST_CASE("conjugate is an involution", "[tensor]") {
  Rng rng(55);
  const ComplexTensor t = lpstomo::random_gaussian_tensor({2, 5}, 1.0, rng);
  CHECK(lpstomo::conjugate(lpstomo::conjugate(t)).same_bits(t));
}

TEST_CASE("tensor construction validates data length", "[tensor]") {
  CHECK_THROWS_AS(ComplexTensor({2, 2}, std::vector<Complex>(3)),
                  std::invalid_argument);
  const ComplexTensor s = ComplexTensor::scalar(Complex{1.0, -2.0});
  CHECK(s.rank() == 0);
  CHECK(s.size() == 1);
  CHECK(s[0] == Complex{1.0, -2.0});
}

TEST_CASE("tensor JSON round trip is bit exact", "[tensor]") {
  Rng rng(2026);
  const ComplexTensor t = lpstomo::random_gaussian_tensor({2, 3, 2}, 0.7, rng);
  nlohmann::json j = t;
  const std::string text = j.dump();
  const ComplexTensor back = nlohmann::json::parse(text).get<ComplexTensor>();
  CHECK(back.same_bits(t));

  nlohmann::json bad = {{"shape", {2, 2}}, {"data", {1.0, 2.0}}};
  ComplexTensor sink;
  CHECK_THROWS_AS(bad.get_to(sink), std::invalid_argument);
}

TEST_CASE("seeded generators reproduce their streams", "[rng]") {
  Rng a(31337), b(31337);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.uniform01() == b.uniform01());
    CHECK(a.gaussian() == b.gaussian());
    CHECK(a.uniform_below(17) == b.uniform_below(17));
  }
  Rng c(31338);
  bool any_diff = false;
  Rng a2(31337);
  for (int i = 0; i < 10; ++i) any_diff |= (a2.uniform01() != c.uniform01());
  CHECK(any_diff);

  // Derived seeds separate by label and compose.
  const std::uint64_t base = 2026;
  CHECK(lpstomo::derive_seed(base, lpstomo::kSeedTarget) !=
        lpstomo::derive_seed(base, lpstomo::kSeedBases));
  CHECK(lpstomo::derive_seed(base, lpstomo::kSeedBases, 3) !=
        lpstomo::derive_seed(base, lpstomo::kSeedBases, 4));
  CHECK(lpstomo::derive_seed(base, lpstomo::kSeedBases, 3) ==
        lpstomo::derive_seed(base, lpstomo::kSeedBases, 3));
}

TEST_CASE("uniform_below covers its range and stays in bounds", "[rng]") {
  Rng rng(8);
  std::vector<int> seen(5, 0);
  for (int i = 0; i < 2000; ++i) {
    const std::uint64_t v = rng.uniform_below(5);
    REQUIRE(v < 5);
    ++seen[v];
  }
  for (int c : seen) CHECK(c > 0);
}

TEST_CASE("random tensors are finite and reproducible", "[tensor]") {
  Rng r1(5150), r2(5150);
  const ComplexTensor t1 = lpstomo::random_gaussian_tensor({4, 4}, 0.25, r1);
  const ComplexTensor t2 = lpstomo::random_gaussian_tensor({4, 4}, 0.25, r2);
  CHECK(t1.all_finite());
  CHECK(t1.same_bits(t2));
}
