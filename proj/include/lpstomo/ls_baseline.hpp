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
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "lpstomo/povm.hpp"
#include "lpstomo/target_states.hpp"

namespace lpstomo {

// Linear-inversion tomography estimate: Pauli-string expectation values
// averaged over every measured setting that covers each string, assembled
// into 2^-N sum_w <sigma_w> sigma_w, then projected onto the physical cone.
struct LsEstimate {
  DensityMatrix rho;           // post-projection, always a valid state
  Eigen::MatrixXcd raw;        // pre-projection linear-inversion matrix
  double residual = 0.0;       // spread of per-setting expectation estimates
};

namespace detail {

// Pauli strings are indexed base 4 with digits I=0, X=1, Y=2, Z=3 and qubit
// 0 as the most significant digit.
inline std::size_t pauli_string_count(std::size_t n_qubits) {
  std::size_t c = 1;
  for (std::size_t q = 0; q < n_qubits; ++q) c *= 4;
  return c;
}

inline int pauli_letter(std::size_t w, std::size_t q, std::size_t n) {
  for (std::size_t k = n - 1 - q; k-- > 0;) w /= 4;
  return static_cast<int>(w % 4);
}

// Eigenvalue sign mask: bit q set when string w acts nontrivially on qubit
// q, so <sigma_w> = sum_v P(v) (-1)^popcount(v & mask).
inline std::uint32_t support_mask(std::size_t w, std::size_t n) {
  std::uint32_t mask = 0;
  for (std::size_t q = 0; q < n; ++q) {
    if (pauli_letter(w, q, n) != 0) mask |= 1u << (n - 1 - q);
  }
  return mask;
}

// Whether every non-identity factor of w matches the setting's letters.
inline bool covered_by(std::size_t w, const PovmBasis& basis) {
  const std::size_t n = basis.n_qubits();
  for (std::size_t q = 0; q < n; ++q) {
    const int letter = pauli_letter(w, q, n);
    if (letter == 0) continue;
    const char want = "IXYZ"[letter];
    if (basis.axes[q] != want) return false;
  }
  return true;
}

// Adds coeff * sigma_w to m, using the fact that a Pauli string is a signed
// permutation: row r maps to column r ^ xmask with a per-row phase.
inline void add_pauli_string(Eigen::MatrixXcd& m, std::size_t w,
                             std::size_t n, Complex coeff) {
  const std::size_t dim = std::size_t{1} << n;
  std::uint32_t xmask = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const int letter = pauli_letter(w, q, n);
    if (letter == 1 || letter == 2) xmask |= 1u << (n - 1 - q);
  }
  for (std::size_t r = 0; r < dim; ++r) {
    Complex phase{1.0, 0.0};
    for (std::size_t q = 0; q < n; ++q) {
      const int letter = pauli_letter(w, q, n);
      const bool bit = (r >> (n - 1 - q)) & 1u;
      if (letter == 3 && bit) phase = -phase;                   // Z
      if (letter == 2) phase *= bit ? Complex{0.0, 1.0}          // Y
                                    : Complex{0.0, -1.0};
    }
    m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r ^ xmask)) +=
        coeff * phase;
  }
}

// Euclidean projection of a real vector onto the probability simplex
// {lambda >= 0, sum lambda = 1} by the sort-and-threshold rule.
inline Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  std::vector<double> sorted(v.data(), v.data() + v.size());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double cumulative = 0.0, tau = 0.0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    cumulative += sorted[k];
    const double candidate =
        (cumulative - 1.0) / static_cast<double>(k + 1);
    if (sorted[k] - candidate > 0.0) tau = candidate;
  }
  return (v.array() - tau).cwiseMax(0.0);
}

}  // namespace detail

inline LsEstimate ls_reconstruct(const MeasurementDataset& data) {
  if (data.n_bases() == 0) {
    throw std::domain_error("ls_reconstruct: dataset has no settings");
  }
  const std::size_t n = data.n_qubits();
  const std::size_t dim = std::size_t{1} << n;
  const std::size_t n_strings = detail::pauli_string_count(n);

  Eigen::MatrixXcd raw = Eigen::MatrixXcd::Zero(dim, dim);
  double residual_sq = 0.0;
  for (std::size_t w = 0; w < n_strings; ++w) {
    const std::uint32_t mask = detail::support_mask(w, n);
    std::vector<double> estimates;
    for (const BasisRecord& rec : data.records()) {
      if (!detail::covered_by(w, rec.basis)) continue;
      double e = 0.0;
      for (std::size_t v = 0; v < dim; ++v) {
        const int parity = std::popcount(static_cast<std::uint32_t>(v) & mask) & 1;
        e += rec.frequencies[v] * (parity ? -1.0 : 1.0);
      }
      estimates.push_back(e);
    }
    if (estimates.empty()) continue;  // unmeasured strings contribute zero
    double mean = 0.0;
    for (double e : estimates) mean += e;
    mean /= static_cast<double>(estimates.size());
    for (double e : estimates) residual_sq += (e - mean) * (e - mean);
    detail::add_pauli_string(
        raw, w, n, Complex{mean / static_cast<double>(dim), 0.0});
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(
      Eigen::MatrixXcd(0.5 * (raw + raw.adjoint())));
  const Eigen::VectorXd lambda = detail::project_to_simplex(solver.eigenvalues());
  Eigen::MatrixXcd projected = solver.eigenvectors() * lambda.asDiagonal() *
                               solver.eigenvectors().adjoint();
  projected = 0.5 * (projected + projected.adjoint().eval());
  projected /= projected.trace().real();
  return LsEstimate{DensityMatrix(n, std::move(projected)), std::move(raw),
                    std::sqrt(residual_sq)};
}

}  // namespace lpstomo
