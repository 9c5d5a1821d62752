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
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lpstomo/rng.hpp"
#include "lpstomo/tensor.hpp"

namespace lpstomo {

// Validated N-qubit density matrix: Hermitian, unit trace, positive
// semidefinite up to tight numerical tolerances.
class DensityMatrix {
 public:
  DensityMatrix(std::size_t n_qubits, Eigen::MatrixXcd matrix)
      : n_qubits_(n_qubits), matrix_(std::move(matrix)) {
    const Eigen::Index dim = Eigen::Index{1} << n_qubits_;
    if (matrix_.rows() != dim || matrix_.cols() != dim) {
      throw std::invalid_argument("DensityMatrix: matrix is " +
                                  std::to_string(matrix_.rows()) + "x" +
                                  std::to_string(matrix_.cols()) +
                                  ", expected " + std::to_string(dim));
    }
    const double herm_err = (matrix_ - matrix_.adjoint()).cwiseAbs().maxCoeff();
    if (herm_err > 1e-12) {
      throw std::invalid_argument("DensityMatrix: not Hermitian (deviation " +
                                  std::to_string(herm_err) + ")");
    }
    const double trace_err = std::abs(matrix_.trace() - Complex{1.0, 0.0});
    if (trace_err > 1e-12) {
      throw std::invalid_argument("DensityMatrix: trace off by " +
                                  std::to_string(trace_err));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(
        matrix_, Eigen::EigenvaluesOnly);
    if (solver.eigenvalues().minCoeff() < -1e-10) {
      throw std::invalid_argument(
          "DensityMatrix: negative eigenvalue " +
          std::to_string(solver.eigenvalues().minCoeff()));
    }
  }

  std::size_t n_qubits() const { return n_qubits_; }
  std::size_t dim() const { return std::size_t{1} << n_qubits_; }
  const Eigen::MatrixXcd& matrix() const { return matrix_; }

 private:
  std::size_t n_qubits_;
  Eigen::MatrixXcd matrix_;
};

inline double purity(const DensityMatrix& rho) {
  // Tr(rho^2) = sum |rho_ij|^2 for Hermitian rho.
  return rho.matrix().squaredNorm();
}

inline double von_neumann_entropy(const DensityMatrix& rho) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(rho.matrix(),
                                                         Eigen::EigenvaluesOnly);
  double s = 0.0;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
    const double lambda = solver.eigenvalues()[i];
    if (lambda > 1e-12) s -= lambda * std::log(lambda);
  }
  return s;
}

inline DensityMatrix pure_state(std::size_t n_qubits,
                                const Eigen::VectorXcd& psi) {
  const Eigen::VectorXcd normed = psi / psi.norm();
  return DensityMatrix(n_qubits, normed * normed.adjoint());
}

inline Eigen::VectorXcd haar_random_state(std::size_t n_qubits, Rng& rng) {
  const Eigen::Index dim = Eigen::Index{1} << n_qubits;
  Eigen::VectorXcd psi(dim);
  for (Eigen::Index i = 0; i < dim; ++i) psi[i] = rng.complex_gaussian(1.0);
  psi /= psi.norm();
  return psi;
}

inline DensityMatrix random_pure(std::size_t n_qubits, Rng& rng) {
  return pure_state(n_qubits, haar_random_state(n_qubits, rng));
}

// Haar-distributed unitary: QR of a Ginibre matrix with the R diagonal's
// phases folded into Q.
inline Eigen::MatrixXcd random_unitary(std::size_t dim, Rng& rng) {
  Eigen::MatrixXcd g(dim, dim);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t c = 0; c < dim; ++c) g(r, c) = rng.complex_gaussian(1.0);
  Eigen::HouseholderQR<Eigen::MatrixXcd> qr(g);
  Eigen::MatrixXcd q = qr.householderQ();
  const Eigen::MatrixXcd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (std::size_t c = 0; c < dim; ++c) {
    const Complex d = r(c, c);
    q.col(c) *= d / std::abs(d);
  }
  return q;
}

inline DensityMatrix depolarize(const DensityMatrix& rho, double eps) {
  if (eps < 0.0 || eps > 1.0) {
    throw std::invalid_argument("depolarize: noise strength " +
                                std::to_string(eps) + " outside [0, 1]");
  }
  const Eigen::Index dim = static_cast<Eigen::Index>(rho.dim());
  Eigen::MatrixXcd out =
      (1.0 - eps) * rho.matrix() +
      (eps / static_cast<double>(dim)) *
          Eigen::MatrixXcd::Identity(dim, dim);
  return DensityMatrix(rho.n_qubits(), std::move(out));
}

// Random state with a requested purity, drawn from a one-parameter family
// that interpolates between a Haar-random pure state (p = 0) and the
// maximally mixed state (p = 1) through a normalized Wishart state W:
//
//   rho(p) = (1-p) |psi><psi| + p [ (1-p) W + p I/2^N ]
//
// The mixing weight p is solved by bisection so that Tr(rho^2) matches
// target_purity to 1e-6. The family is continuous with endpoint purities
// exactly 1 and 2^-N, so every admissible purity is reachable; the retry
// loop guards against pathological draws.
inline DensityMatrix random_mixed(std::size_t n_qubits, double target_purity,
                                  Rng& rng) {
  const std::size_t dim = std::size_t{1} << n_qubits;
  const double min_purity = 1.0 / static_cast<double>(dim);
  if (target_purity < min_purity - 1e-12 || target_purity > 1.0 + 1e-12) {
    throw std::invalid_argument("random_mixed: requested purity " +
                                std::to_string(target_purity) +
                                " outside [2^-N, 1]");
  }

  const Eigen::Index d = static_cast<Eigen::Index>(dim);
  const Eigen::MatrixXcd eye = Eigen::MatrixXcd::Identity(d, d);

  for (int attempt = 0; attempt < 10; ++attempt) {
    const Eigen::VectorXcd psi = haar_random_state(n_qubits, rng);
    const Eigen::MatrixXcd proj = psi * psi.adjoint();
    Eigen::MatrixXcd g(d, d);
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c) g(r, c) = rng.complex_gaussian(1.0);
    Eigen::MatrixXcd w = g * g.adjoint();
    w /= w.trace().real();

    const auto mix = [&](double p) -> Eigen::MatrixXcd {
      return (1.0 - p) * proj +
             p * ((1.0 - p) * w + (p / static_cast<double>(dim)) * eye);
    };
    const auto purity_at = [&](double p) { return mix(p).squaredNorm(); };

    double lo = 0.0, hi = 1.0;
    if (target_purity >= purity_at(lo)) {
      lo = hi = 0.0;
    } else if (target_purity <= purity_at(hi)) {
      lo = hi = 1.0;
    } else {
      for (int iter = 0; iter < 200; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (purity_at(mid) > target_purity) {
          lo = mid;
        } else {
          hi = mid;
        }
        if (hi - lo < 1e-14) break;
      }
    }
    const double p = 0.5 * (lo + hi);
    if (std::abs(purity_at(p) - target_purity) <= 1e-6) {
      Eigen::MatrixXcd m = mix(p);
      m = Eigen::MatrixXcd(0.5 * (m + m.adjoint()));  // scrub rounding skew
      m /= m.trace().real();
      return DensityMatrix(n_qubits, std::move(m));
    }
  }
  throw std::runtime_error(
      "random_mixed: bisection failed to reach requested purity after 10 "
      "draws");
}

inline DensityMatrix random_mixed(std::size_t n_qubits, double target_purity,
                                  std::uint64_t seed) {
  Rng rng(seed);
  return random_mixed(n_qubits, target_purity, rng);
}

// Entangled pair of product branches: |phi> = (|+...+> + e^{i beta}
// |-...->)/sqrt(2) with local states |+-_n> = (|0> +- i^N e^{i gamma_n}
// |1>)/sqrt(2). The two branches are orthogonal, so |phi> is normalized and
// the state is pure for every choice of phases.
inline DensityMatrix ghz(std::size_t n_qubits, double beta,
                         const std::vector<double>& gammas) {
  if (gammas.size() != n_qubits) {
    throw std::invalid_argument("ghz: expected " + std::to_string(n_qubits) +
                                " local phases, got " +
                                std::to_string(gammas.size()));
  }
  const std::size_t dim = std::size_t{1} << n_qubits;
  // i^N, the qubit-count-dependent phase in front of every |1> component.
  const Complex in =
      std::polar(1.0, 0.5 * std::numbers::pi * static_cast<double>(n_qubits % 4));
  Eigen::VectorXcd phi(dim);
  const double branch_norm = std::pow(2.0, -0.5 * static_cast<double>(n_qubits));
  const Complex phase_beta = std::polar(1.0, beta);
  for (std::size_t b = 0; b < dim; ++b) {
    // Amplitude of bitstring b (qubit 0 in the most significant position) in
    // each product branch: every set bit contributes +-(i^N e^{i gamma_q}).
    Complex amp_plus{1.0, 0.0}, amp_minus{1.0, 0.0};
    for (std::size_t q = 0; q < n_qubits; ++q) {
      if ((b >> (n_qubits - 1 - q)) & 1u) {
        const Complex a = in * std::polar(1.0, gammas[q]);
        amp_plus *= a;
        amp_minus *= -a;
      }
    }
    phi[static_cast<Eigen::Index>(b)] =
        branch_norm * (amp_plus + phase_beta * amp_minus) / std::sqrt(2.0);
  }
  return pure_state(n_qubits, phi);
}

// Serialized with the shared dense-tensor layout plus a kind tag.
inline nlohmann::json density_matrix_to_json(const DensityMatrix& rho) {
  const std::size_t d = rho.dim();
  std::vector<Complex> data;
  data.reserve(d * d);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) data.push_back(rho.matrix()(r, c));
  nlohmann::json j = ComplexTensor(Shape{d, d}, std::move(data));
  j["kind"] = "density-matrix";
  j["n_qubits"] = rho.n_qubits();
  return j;
}

inline DensityMatrix density_matrix_from_json(const nlohmann::json& j) {
  if (j.at("kind").get<std::string>() != "density-matrix") {
    throw std::invalid_argument("density matrix record: wrong kind tag");
  }
  const std::size_t n = j.at("n_qubits").get<std::size_t>();
  const ComplexTensor t = j.get<ComplexTensor>();
  const std::size_t d = std::size_t{1} << n;
  if (t.shape() != Shape{d, d}) {
    throw std::invalid_argument("density matrix record: bad shape");
  }
  Eigen::MatrixXcd m(d, d);
  for (std::size_t r = 0; r < d; ++r)
    for (std::size_t c = 0; c < d; ++c) m(r, c) = t.at({r, c});
  return DensityMatrix(n, std::move(m));
}

}  // namespace lpstomo
