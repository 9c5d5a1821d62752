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
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lpstomo/target_states.hpp"

namespace lpstomo {

namespace detail {

// Clips negative eigenvalues to zero and renormalizes the trace, making the
// matrix safe for square roots despite finite-precision positivity
// violations.
inline Eigen::MatrixXcd clip_to_state(const Eigen::MatrixXcd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(
      Eigen::MatrixXcd(0.5 * (m + m.adjoint())));
  Eigen::VectorXd lambda = solver.eigenvalues().cwiseMax(0.0);
  lambda /= lambda.sum();
  return solver.eigenvectors() * lambda.asDiagonal() *
         solver.eigenvectors().adjoint();
}

inline Eigen::MatrixXcd hermitian_sqrt(const Eigen::MatrixXcd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(m);
  const Eigen::VectorXd root =
      solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * root.asDiagonal() *
         solver.eigenvectors().adjoint();
}

}  // namespace detail

// 1 - Tr sqrt( sqrt(a) b sqrt(a) ): zero iff the states coincide, one for
// orthogonal pure states, and 1 - |<psi|phi>| for pure inputs. Both inputs
// are eigenvalue-clipped and renormalized first so that slightly
// out-of-cone numerical states are handled gracefully. The trace term is
// evaluated as the nuclear norm of sqrt(a) sqrt(b) — the same quantity, but
// summing singular values directly sidesteps the precision loss of taking
// eigenvalue square roots of the triple product.
inline double infidelity(const DensityMatrix& a, const DensityMatrix& b) {
  if (a.dim() != b.dim()) {
    throw std::invalid_argument("infidelity: dimension mismatch");
  }
  const Eigen::MatrixXcd ra = detail::hermitian_sqrt(detail::clip_to_state(a.matrix()));
  const Eigen::MatrixXcd rb = detail::hermitian_sqrt(detail::clip_to_state(b.matrix()));
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(ra * rb);
  return 1.0 - svd.singularValues().sum();
}

// Ordinary least squares y = kx + c with the R^2 goodness-of-fit summary.
struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::vector<double> xs, ys, residuals;
};

inline FitResult linear_fit(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) {
    throw std::invalid_argument("linear_fit: need at least 3 points, got " +
                                std::to_string(points.size()));
  }
  const double n = static_cast<double>(points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : points) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (sxx == 0.0) {
    throw std::domain_error("linear_fit: all x values identical");
  }

  FitResult fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (const auto& [x, y] : points) {
    const double r = y - (fit.slope * x + fit.intercept);
    fit.xs.push_back(x);
    fit.ys.push_back(y);
    fit.residuals.push_back(r);
    ss_res += r * r;
  }
  // A flat response is fit exactly by the constant line.
  fit.r_squared = syy == 0.0 ? 1.0 : 1.0 - ss_res / syy;
  return fit;
}

}  // namespace lpstomo
