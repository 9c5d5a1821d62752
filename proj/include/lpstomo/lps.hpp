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
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lpstomo/povm.hpp"
#include "lpstomo/rng.hpp"
#include "lpstomo/tensor.hpp"

namespace lpstomo {

// Hyperparameters of the purified tensor-network ansatz.
struct LpsHyperparams {
  std::size_t n_qubits = 1;
  std::size_t chi = 1;        // virtual bond extent
  std::size_t n_beta = 0;     // number of sites carrying a purification bond
  double init_scale = 0.0;    // 0 selects the default 0.5 / sqrt(chi)
  std::uint64_t seed = 0;

  void validate() const {
    if (n_qubits < 1) throw std::invalid_argument("LpsHyperparams: n_qubits < 1");
    if (chi < 1) throw std::invalid_argument("LpsHyperparams: chi < 1");
    if (n_beta > n_qubits) {
      throw std::invalid_argument("LpsHyperparams: n_beta exceeds n_qubits");
    }
  }

  double effective_init_scale() const {
    return init_scale > 0.0 ? init_scale
                            : 0.5 / std::sqrt(static_cast<double>(chi));
  }
};

// Locally purified tensor-network state over N qubits. Site n holds a
// tensor with a physical axis of extent 2, up to two virtual axes of extent
// chi shared with its neighbours, and a purification axis of extent 1 or 2.
// Axis order per site:
//   interior:   (physical, left virtual, right virtual, purification)
//   first site: (physical, right virtual, purification)
//   last site:  (physical, left virtual, purification)
//   single site:(physical, purification)
// The represented operator is rho = sum_beta L(beta) L(beta)^dagger, which
// is positive semidefinite for any tensor values; purification bonds of
// extent 2 sit on the first n_beta sites. The model is unnormalized: all
// probability queries divide by the trace.
class Lps {
 public:
  Lps(std::size_t n_qubits, std::size_t chi, std::vector<std::size_t> beta_dims,
      std::vector<ComplexTensor> tensors)
      : n_qubits_(n_qubits),
        chi_(chi),
        beta_dims_(std::move(beta_dims)),
        tensors_(std::move(tensors)) {
    if (n_qubits_ < 1) throw std::invalid_argument("Lps: n_qubits < 1");
    if (beta_dims_.size() != n_qubits_ || tensors_.size() != n_qubits_) {
      throw std::invalid_argument("Lps: per-site lists have wrong length");
    }
    for (std::size_t n = 0; n < n_qubits_; ++n) {
      if (beta_dims_[n] != 1 && beta_dims_[n] != 2) {
        throw std::invalid_argument("Lps: purification extent must be 1 or 2");
      }
      if (tensors_[n].shape() != site_shape(n)) {
        throw std::invalid_argument("Lps: tensor " + std::to_string(n) +
                                    " has the wrong shape");
      }
    }
  }

  std::size_t n_qubits() const { return n_qubits_; }
  std::size_t chi() const { return chi_; }
  const std::vector<std::size_t>& beta_dims() const { return beta_dims_; }
  std::size_t n_beta() const {
    std::size_t c = 0;
    for (std::size_t b : beta_dims_) c += (b == 2);
    return c;
  }
  const std::vector<ComplexTensor>& tensors() const { return tensors_; }

  Shape site_shape(std::size_t n) const {
    const std::size_t b = beta_dims_[n];
    if (n_qubits_ == 1) return Shape{2, b};
    if (n == 0) return Shape{2, chi_, b};
    if (n == n_qubits_ - 1) return Shape{2, chi_, b};
    return Shape{2, chi_, chi_, b};
  }

  void set_tensor(std::size_t n, ComplexTensor t) {
    if (t.shape() != site_shape(n)) {
      throw std::invalid_argument("Lps::set_tensor: wrong shape for site " +
                                  std::to_string(n));
    }
    tensors_[n] = std::move(t);
  }

  std::size_t parameter_count() const {
    std::size_t c = 0;
    for (const ComplexTensor& t : tensors_) c += t.size();
    return c;
  }

  // Tr(rho) via the left-to-right transfer sweep: at each site the physical
  // and purification axes are summed against the conjugated site tensor,
  // carrying a (right-bond, conjugate right-bond) matrix down the chain.
  double trace() const {
    if (n_qubits_ == 1) {
      const ComplexTensor s =
          contract(tensors_[0], conjugate(tensors_[0]), {{0, 0}, {1, 1}});
      return as_positive_real(s[0], "trace");
    }
    // First site (physical, right, beta).
    ComplexTensor left = contract(tensors_[0], conjugate(tensors_[0]),
                                  {{0, 0}, {2, 2}});
    for (std::size_t n = 1; n + 1 < n_qubits_; ++n) {
      // (left', physical, right, beta) <- (left, left') x (phys, left, right, beta)
      const ComplexTensor tmp = contract(left, tensors_[n], {{0, 1}});
      left = contract(tmp, conjugate(tensors_[n]), {{0, 1}, {1, 0}, {3, 3}});
    }
    const ComplexTensor tmp = contract(left, tensors_[n_qubits_ - 1], {{0, 1}});
    const ComplexTensor s =
        contract(tmp, conjugate(tensors_[n_qubits_ - 1]), {{0, 1}, {1, 0}, {2, 2}});
    return as_positive_real(s[0], "trace");
  }

  // <v|rho|v> for a product state v given as one local 2-vector per qubit,
  // unnormalized. Same sweep as trace with the physical axis pre-contracted
  // against the local bra.
  double unnormalized_prob(const std::vector<Eigen::Vector2cd>& local_states) const {
    if (local_states.size() != n_qubits_) {
      throw std::invalid_argument("prob: expected " + std::to_string(n_qubits_) +
                                  " local states, got " +
                                  std::to_string(local_states.size()));
    }
    std::vector<ComplexTensor> av(n_qubits_);
    for (std::size_t n = 0; n < n_qubits_; ++n) {
      const ComplexTensor bra(
          Shape{2}, {std::conj(local_states[n][0]), std::conj(local_states[n][1])});
      av[n] = contract(bra, tensors_[n], {{0, 0}});
    }
    if (n_qubits_ == 1) {
      const ComplexTensor s = contract(av[0], conjugate(av[0]), {{0, 0}});
      return as_positive_real(s[0], "prob");
    }
    ComplexTensor left = contract(av[0], conjugate(av[0]), {{1, 1}});
    for (std::size_t n = 1; n + 1 < n_qubits_; ++n) {
      const ComplexTensor tmp = contract(left, av[n], {{0, 0}});
      left = contract(tmp, conjugate(av[n]), {{0, 0}, {2, 2}});
    }
    const ComplexTensor tmp = contract(left, av[n_qubits_ - 1], {{0, 0}});
    const ComplexTensor s =
        contract(tmp, conjugate(av[n_qubits_ - 1]), {{0, 0}, {1, 1}});
    return as_positive_real(s[0], "prob");
  }

  double prob(const std::vector<Eigen::Vector2cd>& local_states) const {
    return unnormalized_prob(local_states) / trace();
  }

  double prob(const CollapseOutcome& outcome) const {
    return prob(outcome_state(outcome));
  }

  // The full 2^N x 2^N operator sum_beta L(beta) L(beta)^dagger,
  // unnormalized. Exponential in N; guarded by the cap.
  Eigen::MatrixXcd to_dense(std::size_t n_qubit_cap = 10) const {
    if (n_qubits_ > n_qubit_cap) {
      throw std::length_error("to_dense: " + std::to_string(n_qubits_) +
                              " qubits exceeds the dense cap of " +
                              std::to_string(n_qubit_cap));
    }
    // Absorb sites left to right, tracking axis labels so one final
    // permutation can order the result as (phys 0..N-1, purif 0..N-1).
    // Labels: physical n -> n, purification n -> N + n, open bond -> -1.
    ComplexTensor t = tensors_[0];
    std::vector<int> labels;
    if (n_qubits_ == 1) {
      labels = {0, static_cast<int>(n_qubits_)};
    } else {
      labels = {0, -1, static_cast<int>(n_qubits_)};
    }
    for (std::size_t n = 1; n < n_qubits_; ++n) {
      std::size_t bond_axis = 0;
      while (labels[bond_axis] != -1) ++bond_axis;
      t = contract(t, tensors_[n], {AxisPair{bond_axis, 1}});
      labels.erase(labels.begin() + static_cast<std::ptrdiff_t>(bond_axis));
      labels.push_back(static_cast<int>(n));
      if (n + 1 < n_qubits_) labels.push_back(-1);
      labels.push_back(static_cast<int>(n_qubits_ + n));
    }
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return labels[x] < labels[y]; });
    t = permuted(t, order);

    const std::size_t dim = std::size_t{1} << n_qubits_;
    const std::size_t d_beta = t.size() / dim;
    Eigen::MatrixXcd m(dim, d_beta);
    for (std::size_t r = 0; r < dim; ++r) {
      for (std::size_t c = 0; c < d_beta; ++c) {
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
            t[r * d_beta + c];
      }
    }
    return m * m.adjoint();
  }

  // Normalized dense form as a validated density matrix.
  DensityMatrix to_density_matrix(std::size_t n_qubit_cap = 10) const {
    Eigen::MatrixXcd m = to_dense(n_qubit_cap);
    m /= m.trace().real();
    m = 0.5 * (m + m.adjoint().eval());
    return DensityMatrix(n_qubits_, std::move(m));
  }

  // --- checkpointing --------------------------------------------------------

  nlohmann::json to_json() const {
    nlohmann::json tensors = nlohmann::json::array();
    for (const ComplexTensor& t : tensors_) tensors.push_back(t);
    return nlohmann::json{{"version", 1},
                          {"n_qubits", n_qubits_},
                          {"chi", chi_},
                          {"beta_dims", beta_dims_},
                          {"tensors", std::move(tensors)}};
  }

  static Lps from_json(const nlohmann::json& j) {
    if (j.at("version").get<int>() != 1) {
      throw std::runtime_error("model checkpoint: unsupported version");
    }
    std::vector<ComplexTensor> tensors;
    for (const auto& tj : j.at("tensors")) {
      tensors.push_back(tj.get<ComplexTensor>());
    }
    return Lps(j.at("n_qubits").get<std::size_t>(),
               j.at("chi").get<std::size_t>(),
               j.at("beta_dims").get<std::vector<std::size_t>>(),
               std::move(tensors));
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
      throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    out << to_json().dump() << '\n';
  }

  static Lps load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }

 private:
  static double as_positive_real(Complex z, const char* what) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()) ||
        std::abs(z.imag()) > 1e-9 * std::max(1.0, std::abs(z.real()))) {
      throw std::runtime_error(std::string(what) +
                               ": sweep produced a non-real value");
    }
    return z.real();
  }

  std::size_t n_qubits_;
  std::size_t chi_;
  std::vector<std::size_t> beta_dims_;
  std::vector<ComplexTensor> tensors_;
};

// Gaussian-initialized model, rescaled to unit trace so training starts from
// a normalized operator. Purification bonds of extent 2 go on the first
// n_beta sites.
inline Lps init_random(const LpsHyperparams& h) {
  h.validate();
  std::vector<std::size_t> beta_dims(h.n_qubits, 1);
  for (std::size_t n = 0; n < h.n_beta; ++n) beta_dims[n] = 2;

  Rng rng(derive_seed(h.seed, kSeedInit));
  const double scale = h.effective_init_scale();
  std::vector<ComplexTensor> tensors;
  tensors.reserve(h.n_qubits);
  for (std::size_t n = 0; n < h.n_qubits; ++n) {
    Shape shape;
    if (h.n_qubits == 1) {
      shape = {2, beta_dims[n]};
    } else if (n == 0 || n == h.n_qubits - 1) {
      shape = {2, h.chi, beta_dims[n]};
    } else {
      shape = {2, h.chi, h.chi, beta_dims[n]};
    }
    tensors.push_back(random_gaussian_tensor(shape, scale, rng));
  }
  Lps lps(h.n_qubits, h.chi, std::move(beta_dims), std::move(tensors));

  // The trace is quadratic in every site tensor, so scaling each site by
  // trace^(-1/(2N)) normalizes it to exactly one draw-independently.
  const double t = lps.trace();
  const double factor =
      std::pow(t, -1.0 / (2.0 * static_cast<double>(h.n_qubits)));
  for (std::size_t n = 0; n < h.n_qubits; ++n) {
    lps.set_tensor(n, scaled(lps.tensors()[n], Complex{factor, 0.0}));
  }
  return lps;
}

}  // namespace lpstomo
