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

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "lpstomo/rng.hpp"
#include "lpstomo/tape.hpp"
#include "lpstomo/tensor.hpp"

namespace {

using lpstomo::AxisPair;
using lpstomo::Complex;
using lpstomo::ComplexTensor;
using lpstomo::ContractionTape;
using lpstomo::Rng;
using lpstomo::Shape;

// Central finite difference of `f` with respect to one real component
// (real or imaginary part of one entry) of `t`.
template <typename F>
double central_diff(F&& f, ComplexTensor t, std::size_t idx, bool imag_part,
                    double h = 1e-5) {
  const Complex orig = t[idx];
  const Complex step = imag_part ? Complex{0.0, h} : Complex{h, 0.0};
  t[idx] = orig + step;
  const double up = f(t);
  t[idx] = orig - step;
  const double down = f(t);
  return (up - down) / (2.0 * h);
}

void check_gradient_matches_fd(const ComplexTensor& grad,
                               const ComplexTensor& point, auto&& f,
                               double rel_tol = 1e-5) {
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double fd_re = central_diff(f, point, i, false);
    const double fd_im = central_diff(f, point, i, true);
    const double scale_re = std::max({1e-10, std::abs(fd_re)});
    const double scale_im = std::max({1e-10, std::abs(fd_im)});
    CHECK(std::abs(grad[i].real() - fd_re) / scale_re < rel_tol);
    CHECK(std::abs(grad[i].imag() - fd_im) / scale_im < rel_tol);
  }
}

}  // namespace

TEST_CASE("gradient of |x|^2 is twice the point", "[tape]") {
  const Complex x0{3.0, 4.0};
  ContractionTape tape;
  const auto x = tape.leaf(ComplexTensor::scalar(x0));
  const auto xc = tape.conjugate(x);
  const auto p = tape.hadamard(x, xc);
  const auto root = tape.real_part(p);

  CHECK(tape.scalar_value(root) == Catch::Approx(25.0).margin(1e-12));
  tape.backward();
  const ComplexTensor g = tape.gradient(x);
  // d/dRe = 2 Re(x) = 6, d/dIm = 2 Im(x) = 8.
  CHECK(std::abs(g[0] - Complex{6.0, 8.0}) < 1e-12);
}

TEST_CASE("composite tape gradient matches central finite differences",
          "[tape]") {
  // loss(A, B) = 2.5 / (1.5 + sum_ij |(A B)_ij|^2), evaluated independently
  // below with plain loops.
  Rng rng(2718);
  const ComplexTensor a0 = lpstomo::random_gaussian_tensor({2, 3}, 0.8, rng);
  const ComplexTensor b0 = lpstomo::random_gaussian_tensor({3, 4}, 0.8, rng);

  auto loss_of = [](const ComplexTensor& a, const ComplexTensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        Complex t{0.0, 0.0};
        for (std::size_t p = 0; p < 3; ++p) t += a.at({i, p}) * b.at({p, j});
        s += std::norm(t);
      }
    }
    return 2.5 / (1.5 + s);
  };

  ContractionTape tape;
  const auto a = tape.leaf(a0);
  const auto b = tape.leaf(b0);
  const auto t = tape.contract(a, b, {AxisPair{1, 0}});
  const auto u = tape.hadamard(t, tape.conjugate(t));
  const auto flat = tape.reshape(u, {8});
  const auto s = tape.real_part(tape.sum_all(flat));
  const auto root = tape.scale(tape.reciprocal(tape.shift(s, 1.5)), 2.5);

  CHECK(tape.scalar_value(root) == Catch::Approx(loss_of(a0, b0)).epsilon(1e-12));

  tape.backward();
  check_gradient_matches_fd(tape.gradient(a), a0,
                            [&](const ComplexTensor& pa) { return loss_of(pa, b0); });
  check_gradient_matches_fd(tape.gradient(b), b0,
                            [&](const ComplexTensor& pb) { return loss_of(a0, pb); });
}

TEST_CASE("contraction gradient handles permuted operand layouts", "[tape]") {
  // Axis pairing that forces both operands through a gather before the
  // matrix product, so the scatter path of the backward rule is exercised.
  Rng rng(1618);
  const ComplexTensor a0 = lpstomo::random_gaussian_tensor({2, 3, 4}, 0.5, rng);
  const ComplexTensor b0 = lpstomo::random_gaussian_tensor({4, 5, 2}, 0.5, rng);
  const std::vector<AxisPair> pairs{{2, 0}, {0, 2}};

  auto loss_of = [&](const ComplexTensor& a, const ComplexTensor& b) {
    const ComplexTensor c =
        lpstomo::contract(a, b, std::span<const AxisPair>(pairs));
    double s = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) s += std::norm(c[i]);
    return s;
  };

  ContractionTape tape;
  const auto a = tape.leaf(a0);
  const auto b = tape.leaf(b0);
  const auto c = tape.contract(a, b, pairs);
  const auto root = tape.real_part(tape.sum_all(tape.hadamard(c, tape.conjugate(c))));

  CHECK(tape.scalar_value(root) == Catch::Approx(loss_of(a0, b0)).epsilon(1e-10));
  tape.backward();
  check_gradient_matches_fd(tape.gradient(a), a0,
                            [&](const ComplexTensor& pa) { return loss_of(pa, b0); });
  check_gradient_matches_fd(tape.gradient(b), b0,
                            [&](const ComplexTensor& pb) { return loss_of(a0, pb); });
}

TEST_CASE("gradients accumulate across shared subexpressions", "[tape]") {
  // f(x) = |x|^2 + 2 Re(x): gradient is (2 Re x + 2) + i (2 Im x).
  const Complex x0{1.0, 2.0};
  ContractionTape tape;
  const auto x = tape.leaf(ComplexTensor::scalar(x0));
  const auto sq = tape.real_part(tape.hadamard(x, tape.conjugate(x)));
  const auto lin = tape.real_part(tape.scale(x, 2.0));
  const auto root = tape.add(sq, lin);

  CHECK(tape.scalar_value(root) == Catch::Approx(7.0).margin(1e-12));
  tape.backward();
  CHECK(std::abs(tape.gradient(x)[0] - Complex{4.0, 4.0}) < 1e-12);
}

TEST_CASE("replaying a tape reproduces a fresh recording bit for bit",
          "[tape]") {
  Rng rng(9001);
  const ComplexTensor a1 = lpstomo::random_gaussian_tensor({3, 3}, 1.0, rng);
  const ComplexTensor b1 = lpstomo::random_gaussian_tensor({3, 3}, 1.0, rng);
  const ComplexTensor a2 = lpstomo::random_gaussian_tensor({3, 3}, 1.0, rng);
  const ComplexTensor b2 = lpstomo::random_gaussian_tensor({3, 3}, 1.0, rng);

  auto record = [](ContractionTape& tape, const ComplexTensor& av,
                   const ComplexTensor& bv) {
    const auto a = tape.leaf(av);
    const auto b = tape.leaf(bv);
    const auto c = tape.contract(a, b, {AxisPair{1, 0}});
    const auto u = tape.hadamard(c, tape.conjugate(c));
    return tape.real_part(tape.sum_all(u));
  };

  ContractionTape t1, t2;
  const auto root1 = record(t1, a1, b1);
  const auto root2 = record(t2, a2, b2);

  // Replay t1 at the second point: values and gradients must match the tape
  // that was recorded there directly, bit for bit.
  t1.set_leaf(t1.tracked_leaves()[0], a2);
  t1.set_leaf(t1.tracked_leaves()[1], b2);
  t1.forward();
  CHECK(t1.value(root1).same_bits(t2.value(root2)));

  t1.backward();
  t2.backward();
  CHECK(t1.gradient(t1.tracked_leaves()[0])
            .same_bits(t2.gradient(t2.tracked_leaves()[0])));
  CHECK(t1.gradient(t1.tracked_leaves()[1])
            .same_bits(t2.gradient(t2.tracked_leaves()[1])));

  // Replaying twice at the same point is also bit-stable.
  t1.forward();
  CHECK(t1.value(root1).same_bits(t2.value(root2)));
}

TEST_CASE("backward requires a real scalar output", "[tape]") {
  Rng rng(3);
  SECTION("non-scalar output") {
    ContractionTape tape;
    tape.leaf(lpstomo::random_gaussian_tensor({2, 2}, 1.0, rng));
    CHECK_THROWS_AS(tape.backward(), std::domain_error);
  }
  SECTION("complex scalar output") {
    ContractionTape tape;
    const auto x = tape.leaf(ComplexTensor::scalar(Complex{1.0, 0.0}));
    tape.scale(x, Complex{0.0, 1.0});
    CHECK_THROWS_AS(tape.backward(), std::domain_error);
  }
}

TEST_CASE("constants receive no gradient", "[tape]") {
  Rng rng(77);
  const ComplexTensor cv = lpstomo::random_gaussian_tensor({2, 2}, 1.0, rng);
  const ComplexTensor xv = lpstomo::random_gaussian_tensor({2, 2}, 1.0, rng);

  ContractionTape tape;
  const auto c = tape.constant(cv);
  const auto x = tape.leaf(xv);
  const auto y = tape.contract(x, c, {AxisPair{1, 0}});
  tape.real_part(tape.sum_all(tape.hadamard(y, tape.conjugate(y))));

  tape.backward();
  REQUIRE(tape.tracked_leaves().size() == 1);
  const ComplexTensor gc = tape.gradient(c);
  for (std::size_t i = 0; i < gc.size(); ++i) CHECK(gc[i] == Complex{0.0, 0.0});
  // The tracked leaf does receive one.
  CHECK(tape.gradient(x).frobenius_norm() > 0.0);
}

TEST_CASE("backward seed scales gradients linearly", "[tape]") {
  ContractionTape tape;
  const auto x = tape.leaf(ComplexTensor::scalar(Complex{2.0, -1.0}));
  tape.real_part(tape.hadamard(x, tape.conjugate(x)));

  tape.backward();
  const Complex g1 = tape.gradient(x)[0];
  tape.backward(2.0);
  const Complex g2 = tape.gradient(x)[0];
  CHECK(std::abs(g2 - 2.0 * g1) < 1e-12);
}

TEST_CASE("set_leaf validates its target", "[tape]") {
  ContractionTape tape;
  const auto x = tape.leaf(ComplexTensor::scalar(Complex{1.0, 0.0}));
  const auto y = tape.scale(x, 2.0);
  CHECK_THROWS_AS(tape.set_leaf(y, ComplexTensor::scalar(Complex{1.0, 0.0})),
                  std::invalid_argument);
  CHECK_THROWS_AS(tape.set_leaf(x, ComplexTensor(Shape{2})),
                  std::invalid_argument);
}
