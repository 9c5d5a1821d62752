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
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "lpstomo/rng.hpp"
#include "lpstomo/target_states.hpp"

namespace lpstomo {

// One measurement setting: a Pauli axis (X, Y or Z) per qubit. Qubit 0 is
// the first character. The 3^N settings are indexed in base 3 with digits
// X=0, Y=1, Z=2 and qubit 0 as the most significant digit.
struct PovmBasis {
  std::string axes;

  explicit PovmBasis(std::string a) : axes(std::move(a)) {
    for (char c : axes) {
      if (c != 'X' && c != 'Y' && c != 'Z') {
        throw std::invalid_argument("PovmBasis: invalid axis character '" +
                                    std::string(1, c) + "'");
      }
    }
  }

  std::size_t n_qubits() const { return axes.size(); }
  bool operator==(const PovmBasis& other) const { return axes == other.axes; }
};

inline std::size_t basis_count(std::size_t n_qubits) {
  std::size_t c = 1;
  for (std::size_t q = 0; q < n_qubits; ++q) c *= 3;
  return c;
}

inline PovmBasis basis_from_index(std::size_t n_qubits, std::size_t index) {
  if (index >= basis_count(n_qubits)) {
    throw std::invalid_argument("basis_from_index: index out of range");
  }
  std::string axes(n_qubits, 'X');
  for (std::size_t q = n_qubits; q-- > 0;) {
    axes[q] = "XYZ"[index % 3];
    index /= 3;
  }
  return PovmBasis(std::move(axes));
}

inline std::size_t basis_index(const PovmBasis& basis) {
  std::size_t index = 0;
  for (char c : basis.axes) {
    index = index * 3 + static_cast<std::size_t>(c == 'Y' ? 1 : (c == 'Z' ? 2 : 0));
  }
  return index;
}

// A projective result: one eigenvalue sign per qubit, packed with qubit 0 in
// the most significant bit. Sign bit 0 selects the +1 eigenstate.
struct CollapseOutcome {
  PovmBasis basis;
  std::uint32_t signs;
};

inline std::string outcome_bits_to_string(std::uint32_t signs,
                                          std::size_t n_qubits) {
  std::string s(n_qubits, '0');
  for (std::size_t q = 0; q < n_qubits; ++q) {
    if ((signs >> (n_qubits - 1 - q)) & 1u) s[q] = '1';
  }
  return s;
}

inline std::uint32_t outcome_bits_from_string(const std::string& s) {
  std::uint32_t v = 0;
  for (char c : s) {
    if (c != '0' && c != '1') {
      throw std::invalid_argument("outcome string: invalid character");
    }
    v = (v << 1) | static_cast<std::uint32_t>(c == '1');
  }
  return v;
}

// Eigenvector of the given Pauli with eigenvalue +1 (sign 0) or −1 (sign 1),
// with a fixed global phase so serialized states are reproducible.
inline Eigen::Vector2cd pauli_eigenvector(char axis, int sign) {
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  Eigen::Vector2cd v;
  switch (axis) {
    case 'Z':
      v << Complex{sign == 0 ? 1.0 : 0.0, 0.0},
          Complex{sign == 0 ? 0.0 : 1.0, 0.0};
      return v;
    case 'X':
      v << Complex{inv_sqrt2, 0.0},
          Complex{sign == 0 ? inv_sqrt2 : -inv_sqrt2, 0.0};
      return v;
    case 'Y':
      v << Complex{inv_sqrt2, 0.0},
          Complex{0.0, sign == 0 ? inv_sqrt2 : -inv_sqrt2};
      return v;
    default:
      throw std::invalid_argument("pauli_eigenvector: invalid axis");
  }
}

// The product state a measurement collapses to: one local eigenvector per
// qubit.
inline std::vector<Eigen::Vector2cd> outcome_state(const CollapseOutcome& o) {
  const std::size_t n = o.basis.n_qubits();
  std::vector<Eigen::Vector2cd> state;
  state.reserve(n);
  for (std::size_t q = 0; q < n; ++q) {
    const int sign = static_cast<int>((o.signs >> (n - 1 - q)) & 1u);
    state.push_back(pauli_eigenvector(o.basis.axes[q], sign));
  }
  return state;
}

// n_m distinct settings drawn uniformly without replacement, deterministic
// per seed (partial Fisher–Yates over the 3^N index range).
inline std::vector<PovmBasis> sample_bases(std::size_t n_qubits,
                                           std::size_t n_m,
                                           std::uint64_t seed) {
  const std::size_t total = basis_count(n_qubits);
  if (n_m > total) {
    throw std::domain_error("sample_bases: requested " + std::to_string(n_m) +
                            " distinct settings but only " +
                            std::to_string(total) + " exist");
  }
  std::vector<std::size_t> indices(total);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  Rng rng(derive_seed(seed, kSeedBases));
  for (std::size_t i = 0; i < n_m; ++i) {
    const std::size_t j = i + rng.uniform_below(total - i);
    std::swap(indices[i], indices[j]);
  }
  std::vector<PovmBasis> bases;
  bases.reserve(n_m);
  for (std::size_t i = 0; i < n_m; ++i) {
    bases.push_back(basis_from_index(n_qubits, indices[i]));
  }
  return bases;
}

namespace detail {

// Left-multiplies the 2x2 matrix onto one qubit's row index of m.
inline void apply_left_qubit(Eigen::MatrixXcd& m, const Eigen::Matrix2cd& r,
                             std::size_t q, std::size_t n) {
  const std::size_t dim = static_cast<std::size_t>(m.rows());
  const std::size_t stride = std::size_t{1} << (n - 1 - q);
  for (std::size_t base = 0; base < dim; ++base) {
    if (base & stride) continue;
    const Eigen::RowVectorXcd r0 = m.row(static_cast<Eigen::Index>(base));
    const Eigen::RowVectorXcd r1 = m.row(static_cast<Eigen::Index>(base | stride));
    m.row(static_cast<Eigen::Index>(base)) = r(0, 0) * r0 + r(0, 1) * r1;
    m.row(static_cast<Eigen::Index>(base | stride)) = r(1, 0) * r0 + r(1, 1) * r1;
  }
}

// Right-multiplies the adjoint of the 2x2 matrix onto one qubit's column
// index of m, completing m -> (r on q) m (r on q)^dagger when used together
// with apply_left_qubit.
inline void apply_right_qubit_adjoint(Eigen::MatrixXcd& m,
                                      const Eigen::Matrix2cd& r, std::size_t q,
                                      std::size_t n) {
  const std::size_t dim = static_cast<std::size_t>(m.cols());
  const std::size_t stride = std::size_t{1} << (n - 1 - q);
  for (std::size_t base = 0; base < dim; ++base) {
    if (base & stride) continue;
    const Eigen::VectorXcd c0 = m.col(static_cast<Eigen::Index>(base));
    const Eigen::VectorXcd c1 = m.col(static_cast<Eigen::Index>(base | stride));
    m.col(static_cast<Eigen::Index>(base)) =
        std::conj(r(0, 0)) * c0 + std::conj(r(0, 1)) * c1;
    m.col(static_cast<Eigen::Index>(base | stride)) =
        std::conj(r(1, 0)) * c0 + std::conj(r(1, 1)) * c1;
  }
}

}  // namespace detail

// All 2^N outcome probabilities <v|rho|v> for one setting, indexed by the
// packed sign bits. Computed by rotating rho qubit-by-qubit into the
// setting's eigenbasis and reading the diagonal, which costs O(N 4^N)
// instead of 2^N separate quadratic forms.
inline std::vector<double> exact_distribution(const DensityMatrix& target,
                                              const PovmBasis& basis) {
  const std::size_t n = target.n_qubits();
  if (basis.n_qubits() != n) {
    throw std::invalid_argument("exact_distribution: qubit count mismatch");
  }
  Eigen::MatrixXcd m = target.matrix();
  for (std::size_t q = 0; q < n; ++q) {
    // Rows of the rotation are the bras of the sign 0 / sign 1 eigenstates.
    Eigen::Matrix2cd r;
    r.row(0) = pauli_eigenvector(basis.axes[q], 0).adjoint();
    r.row(1) = pauli_eigenvector(basis.axes[q], 1).adjoint();
    detail::apply_left_qubit(m, r, q, n);
    detail::apply_right_qubit_adjoint(m, r, q, n);
  }
  const std::size_t dim = target.dim();
  std::vector<double> probs(dim);
  double sum = 0.0;
  for (std::size_t v = 0; v < dim; ++v) {
    const double p = m(static_cast<Eigen::Index>(v),
                       static_cast<Eigen::Index>(v)).real();
    if (p < -1e-12) {
      throw std::runtime_error("exact_distribution: negative probability " +
                               std::to_string(p));
    }
    probs[v] = p;
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-10) {
    throw std::runtime_error("exact_distribution: probabilities sum to " +
                             std::to_string(sum));
  }
  return probs;
}

// Measurement record for one setting: dense frequency table over all 2^N
// outcomes, plus the raw shot counts when statistics are finite.
struct BasisRecord {
  PovmBasis basis;
  std::vector<double> frequencies;      // length 2^N, sums to 1
  std::vector<std::uint64_t> counts;    // length 2^N, empty in exact mode
};

// Frequency tables for a set of distinct settings measured against one
// target. shots_per_basis == 0 marks the infinite-statistics mode in which
// the stored frequencies are exact outcome probabilities.
class MeasurementDataset {
 public:
  MeasurementDataset(std::size_t n_qubits, std::uint64_t shots_per_basis,
                     std::vector<BasisRecord> records,
                     nlohmann::json metadata = nlohmann::json::object())
      : n_qubits_(n_qubits),
        shots_per_basis_(shots_per_basis),
        records_(std::move(records)),
        metadata_(std::move(metadata)) {
    const std::size_t dim = std::size_t{1} << n_qubits_;
    std::vector<std::string> seen;
    for (const BasisRecord& rec : records_) {
      if (rec.basis.n_qubits() != n_qubits_) {
        throw std::invalid_argument("MeasurementDataset: basis length mismatch");
      }
      if (rec.frequencies.size() != dim) {
        throw std::invalid_argument(
            "MeasurementDataset: frequency table has wrong length");
      }
      const double sum = std::accumulate(rec.frequencies.begin(),
                                         rec.frequencies.end(), 0.0);
      if (std::abs(sum - 1.0) > 1e-12) {
        throw std::invalid_argument(
            "MeasurementDataset: frequencies for setting " + rec.basis.axes +
            " sum to " + std::to_string(sum));
      }
      seen.push_back(rec.basis.axes);
    }
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end()) {
      throw std::invalid_argument("MeasurementDataset: duplicate setting");
    }
  }

  std::size_t n_qubits() const { return n_qubits_; }
  std::size_t n_bases() const { return records_.size(); }
  std::uint64_t shots_per_basis() const { return shots_per_basis_; }
  bool infinite_statistics() const { return shots_per_basis_ == 0; }
  const std::vector<BasisRecord>& records() const { return records_; }
  const nlohmann::json& metadata() const { return metadata_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
      throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    nlohmann::json header{{"version", 1},
                          {"n_qubits", n_qubits_},
                          {"n_bases", records_.size()},
                          {"n_shots", shots_per_basis_},
                          {"metadata", metadata_}};
    out << header.dump() << '\n';
    const std::size_t dim = std::size_t{1} << n_qubits_;
    for (const BasisRecord& rec : records_) {
      nlohmann::json counts = nlohmann::json::object();
      for (std::size_t v = 0; v < dim; ++v) {
        const std::string key = outcome_bits_to_string(
            static_cast<std::uint32_t>(v), n_qubits_);
        if (infinite_statistics()) {
          // Exact mode stores probabilities in place of integer counts.
          if (rec.frequencies[v] != 0.0) counts[key] = rec.frequencies[v];
        } else if (rec.counts[v] != 0) {
          counts[key] = rec.counts[v];
        }
      }
      nlohmann::json line{{"basis", rec.basis.axes}, {"counts", counts}};
      out << line.dump() << '\n';
    }
  }

  static MeasurementDataset load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
      throw std::runtime_error("cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
      throw std::runtime_error("dataset file is empty: " + path.string());
    }
    const nlohmann::json header = nlohmann::json::parse(line);
    if (header.at("version").get<int>() != 1) {
      throw std::runtime_error("dataset file: unsupported version");
    }
    const std::size_t n_qubits = header.at("n_qubits").get<std::size_t>();
    const std::size_t n_bases = header.at("n_bases").get<std::size_t>();
    const std::uint64_t n_shots = header.at("n_shots").get<std::uint64_t>();
    const std::size_t dim = std::size_t{1} << n_qubits;

    std::vector<BasisRecord> records;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const nlohmann::json rec = nlohmann::json::parse(line);
      BasisRecord out{PovmBasis(rec.at("basis").get<std::string>()),
                      std::vector<double>(dim, 0.0),
                      {}};
      if (n_shots != 0) out.counts.assign(dim, 0);
      for (const auto& [key, value] : rec.at("counts").items()) {
        const std::uint32_t v = outcome_bits_from_string(key);
        if (key.size() != n_qubits || v >= dim) {
          throw std::runtime_error("dataset file: bad outcome key " + key);
        }
        if (n_shots == 0) {
          out.frequencies[v] = value.get<double>();
        } else {
          out.counts[v] = value.get<std::uint64_t>();
          out.frequencies[v] = static_cast<double>(out.counts[v]) /
                               static_cast<double>(n_shots);
        }
      }
      records.push_back(std::move(out));
    }
    if (records.size() != n_bases) {
      throw std::runtime_error("dataset file: header claims " +
                               std::to_string(n_bases) + " settings, found " +
                               std::to_string(records.size()));
    }
    return MeasurementDataset(n_qubits, n_shots, std::move(records),
                              header.at("metadata"));
  }

 private:
  std::size_t n_qubits_;
  std::uint64_t shots_per_basis_;
  std::vector<BasisRecord> records_;
  nlohmann::json metadata_;
};

// Simulates n_shots projective measurements per setting by categorical
// sampling from the exact distribution; n_shots == 0 records the exact
// probabilities themselves. Each setting consumes an independent stream
// derived from (seed, setting position), so generation order is free.
inline MeasurementDataset sample_dataset(
    const DensityMatrix& target, const std::vector<PovmBasis>& bases,
    std::uint64_t n_shots, std::uint64_t seed,
    nlohmann::json metadata = nlohmann::json::object()) {
  const std::size_t dim = target.dim();
  std::vector<BasisRecord> records;
  records.reserve(bases.size());
  for (std::size_t m = 0; m < bases.size(); ++m) {
    const std::vector<double> probs = exact_distribution(target, bases[m]);
    BasisRecord rec{bases[m], std::vector<double>(dim, 0.0), {}};
    if (n_shots == 0) {
      rec.frequencies = probs;
    } else {
      std::vector<double> cdf(dim);
      double acc = 0.0;
      for (std::size_t v = 0; v < dim; ++v) {
        acc += probs[v];
        cdf[v] = acc;
      }
      cdf[dim - 1] = std::max(cdf[dim - 1], 1.0);  // guard the last bucket
      rec.counts.assign(dim, 0);
      Rng rng(derive_seed(seed, kSeedShots, m));
      for (std::uint64_t s = 0; s < n_shots; ++s) {
        const double u = rng.uniform01();
        const std::size_t v = static_cast<std::size_t>(
            std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        ++rec.counts[v];
      }
      for (std::size_t v = 0; v < dim; ++v) {
        rec.frequencies[v] = static_cast<double>(rec.counts[v]) /
                             static_cast<double>(n_shots);
      }
    }
    records.push_back(std::move(rec));
  }
  return MeasurementDataset(target.n_qubits(), n_shots, std::move(records),
                            std::move(metadata));
}

}  // namespace lpstomo
