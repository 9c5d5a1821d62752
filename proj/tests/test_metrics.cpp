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
#include <vector>

#include <Eigen/Dense>

#include "lpstomo/metrics.hpp"
#include "lpstomo/rng.hpp"
#include "lpstomo/target_states.hpp"

namespace {

using lpstomo::Complex;
using lpstomo::DensityMatrix;
using lpstomo::Rng;

}  // namespace

TEST_CASE("infidelity of a state with itself vanishes", "[metrics]") {
  Rng rng(101);
  for (std::size_t n = 1; n <= 5; ++n) {
    const double min_p = std::pow(2.0, -static_cast<double>(n));
    const double target = min_p + (1.0 - min_p) * rng.uniform01();
    const DensityMatrix rho = lpstomo::random_mixed(n, target, rng);
    CHECK(std::abs(lpstomo::infidelity(rho, rho)) <= 1e-9);
  }
}

TEST_CASE("orthogonal pure states have infidelity one", "[metrics]") {
  Eigen::VectorXcd a = Eigen::VectorXcd::Zero(4), b = Eigen::VectorXcd::Zero(4);
  a[0] = 1.0;
  b[3] = 1.0;
  CHECK(lpstomo::infidelity(lpstomo::pure_state(2, a), lpstomo::pure_state(2, b)) ==
        Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("pure-state infidelity reduces to one minus the overlap",
          "[metrics]") {
  Rng rng(202);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + (trial % 2);
    const Eigen::VectorXcd psi = lpstomo::haar_random_state(n, rng);
    const Eigen::VectorXcd phi = lpstomo::haar_random_state(n, rng);
    const double overlap = std::abs((psi.adjoint() * phi)(0, 0));
    const double got = lpstomo::infidelity(lpstomo::pure_state(n, psi),
                                           lpstomo::pure_state(n, phi));
    CHECK(std::abs(got - (1.0 - overlap)) <= 1e-9);
  }
}

TEST_CASE("infidelity is symmetric and unitarily invariant", "[metrics]") {
  Rng rng(303);
  const DensityMatrix a = lpstomo::random_mixed(3, 0.55, rng);
  const DensityMatrix b = lpstomo::random_mixed(3, 0.8, rng);
  CHECK(std::abs(lpstomo::infidelity(a, b) - lpstomo::infidelity(b, a)) <= 1e-9);

  const Eigen::MatrixXcd u = lpstomo::random_unitary(8, rng);
  auto rotate = [&](const DensityMatrix& rho) {
    Eigen::MatrixXcd m = u * rho.matrix() * u.adjoint();
    m = 0.5 * (m + m.adjoint().eval());
    m /= m.trace().real();
    return DensityMatrix(3, std::move(m));
  };
  CHECK(std::abs(lpstomo::infidelity(rotate(a), rotate(b)) -
                 lpstomo::infidelity(a, b)) <= 1e-9);
}

TEST_CASE("infidelity separates distinct states at desk tolerance",
          "[metrics]") {
  Rng rng(404);
  const DensityMatrix a = lpstomo::random_mixed(2, 0.7, rng);
  const DensityMatrix b = lpstomo::depolarize(a, 0.3);
  CHECK(lpstomo::infidelity(a, b) > 1e-6);
  CHECK((a.matrix() - b.matrix()).cwiseAbs().maxCoeff() > 1e-6);

  const DensityMatrix c = lpstomo::depolarize(a, 1e-9);
  CHECK(lpstomo::infidelity(a, c) < 1e-6);
}

TEST_CASE("infidelity rejects dimension mismatches", "[metrics]") {
  Rng rng(9);
  const DensityMatrix a = lpstomo::random_mixed(2, 0.5, rng);
  const DensityMatrix b = lpstomo::random_mixed(3, 0.5, rng);
  CHECK_THROWS_AS(lpstomo::infidelity(a, b), std::invalid_argument);
}

TEST_CASE("least squares recovers an exact line", "[metrics]") {
  std::vector<std::pair<double, double>> pts;
  for (double x : {0.0, 1.0, 2.0, 5.0}) pts.push_back({x, 2.0 * x + 1.0});
  const auto fit = lpstomo::linear_fit(pts);
  CHECK(fit.slope == Catch::Approx(2.0).margin(1e-13));
  CHECK(fit.intercept == Catch::Approx(1.0).margin(1e-13));
  CHECK(fit.r_squared == Catch::Approx(1.0).margin(1e-13));
}

TEST_CASE("least squares on constant data uses the flat-line convention",
          "[metrics]") {
  const auto fit = lpstomo::linear_fit({{1.0, 3.5}, {2.0, 3.5}, {4.0, 3.5}});
  CHECK(fit.slope == Catch::Approx(0.0).margin(1e-14));
  CHECK(fit.intercept == Catch::Approx(3.5).margin(1e-14));
  CHECK(fit.r_squared == 1.0);
}

TEST_CASE("least squares matches the closed-form normal equations",
          "[metrics]") {
  const auto fit = lpstomo::linear_fit({{1.0, 2.1}, {2.0, 3.9}, {3.0, 6.2}});
  CHECK(fit.slope == Catch::Approx(2.05).margin(1e-12));
  CHECK(fit.intercept == Catch::Approx(-1.0 / 30.0).margin(1e-12));
  CHECK(fit.r_squared ==
        Catch::Approx(1.0 - (1.0 / 24.0) / (1267.0 / 150.0)).margin(1e-12));

  double mean_res = 0.0;
  for (double r : fit.residuals) mean_res += r;
  mean_res /= static_cast<double>(fit.residuals.size());
  CHECK(std::abs(mean_res) <= 1e-10 * 6.2);
}

TEST_CASE("least squares validates its input", "[metrics]") {
  CHECK_THROWS_AS(lpstomo::linear_fit({{1.0, 2.0}, {2.0, 3.0}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(lpstomo::linear_fit({{1.0, 2.0}, {1.0, 3.0}, {1.0, 4.0}}),
                  std::domain_error);
}
