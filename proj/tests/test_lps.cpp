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
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "lpstomo/lps.hpp"
#include "lpstomo/povm.hpp"
#include "lpstomo/rng.hpp"

namespace {

using lpstomo::Complex;
using lpstomo::ComplexTensor;
using lpstomo::Lps;
using lpstomo::LpsHyperparams;
using lpstomo::PovmBasis;
using lpstomo::Rng;
using lpstomo::Shape;

// Materializes the purification matrix M[b, beta-vector] with plain loops
// over every bond and purification index, mirroring the documented site
// layouts, and returns M M^dagger. Fully independent of the library's
// contraction kernels.
Eigen::MatrixXcd dense_by_loops(const Lps& lps) {
  const std::size_t n = lps.n_qubits();
  const std::size_t dim = std::size_t{1} << n;
  const std::size_t chi = lps.chi();
  std::size_t d_beta = 1;
  for (std::size_t b : lps.beta_dims()) d_beta *= b;
  std::size_t n_bond_combos = 1;
  for (std::size_t k = 0; k + 1 < n; ++k) n_bond_combos *= chi;

  Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, d_beta);
  for (std::size_t b = 0; b < dim; ++b) {
    for (std::size_t bv = 0; bv < d_beta; ++bv) {
      // Decode the per-site purification indices, site 0 slowest.
      std::vector<std::size_t> beta(n);
      std::size_t rem = bv;
      for (std::size_t s = n; s-- > 0;) {
        beta[s] = rem % lps.beta_dims()[s];
        rem /= lps.beta_dims()[s];
      }
      Complex acc{0.0, 0.0};
      for (std::size_t ac = 0; ac < n_bond_combos; ++ac) {
        std::vector<std::size_t> alpha(n >= 1 ? n - 1 : 0);
        std::size_t arem = ac;
        for (std::size_t k = alpha.size(); k-- > 0;) {
          alpha[k] = arem % chi;
          arem /= chi;
        }
        Complex prod{1.0, 0.0};
        for (std::size_t s = 0; s < n; ++s) {
          const std::size_t g = (b >> (n - 1 - s)) & 1u;
          if (n == 1) {
            prod *= lps.tensors()[s].at({g, beta[s]});
          } else if (s == 0) {
            prod *= lps.tensors()[s].at({g, alpha[0], beta[s]});
          } else if (s == n - 1) {
            prod *= lps.tensors()[s].at({g, alpha[s - 1], beta[s]});
          } else {
            prod *= lps.tensors()[s].at({g, alpha[s - 1], alpha[s], beta[s]});
          }
        }
        acc += prod;
      }
      m(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(bv)) = acc;
    }
  }
  return m * m.adjoint();
}

Eigen::VectorXcd product_vector(const std::vector<Eigen::Vector2cd>& locals) {
  Eigen::VectorXcd v = Eigen::VectorXcd::Ones(1);
  for (const Eigen::Vector2cd& f : locals) {
    Eigen::VectorXcd next(v.size() * 2);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      next[2 * i] = v[i] * f[0];
      next[2 * i + 1] = v[i] * f[1];
    }
    v = std::move(next);
  }
  return v;
}

}  // namespace

TEST_CASE("single-qubit pure model reproduces basis-state probabilities",
          "[lps]") {
  const ComplexTensor site(Shape{2, 1}, {Complex{1.0, 0.0}, Complex{0.0, 0.0}});
  const Lps lps(1, 1, {1}, {site});

  CHECK(lps.prob(lpstomo::CollapseOutcome{PovmBasis("Z"), 0}) ==
        Catch::Approx(1.0).margin(1e-14));
  CHECK(lps.prob(lpstomo::CollapseOutcome{PovmBasis("Z"), 1}) ==
        Catch::Approx(0.0).margin(1e-14));
  CHECK(lps.prob(lpstomo::CollapseOutcome{PovmBasis("X"), 0}) ==
        Catch::Approx(0.5).margin(1e-14));

  const Eigen::MatrixXcd dense = lps.to_dense();
  CHECK(std::abs(dense(0, 0) - Complex{1.0, 0.0}) < 1e-15);
  CHECK(std::abs(dense(1, 1)) < 1e-15);
  CHECK(std::abs(dense(0, 1)) < 1e-15);
}

TEST_CASE("random initialization is normalized, positive, and reproducible",
          "[lps]") {
  const LpsHyperparams h{3, 2, 3, 0.0, 91};
  const Lps lps = lpstomo::init_random(h);
  CHECK(lps.trace() == Catch::Approx(1.0).margin(1e-12));

  Eigen::MatrixXcd dense = lps.to_dense();
  dense = 0.5 * (dense + dense.adjoint().eval());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(dense,
                                                         Eigen::EigenvaluesOnly);
  CHECK(solver.eigenvalues().minCoeff() >= -1e-12);
  CHECK(dense.trace().real() == Catch::Approx(1.0).margin(1e-12));

  const Lps again = lpstomo::init_random(h);
  for (std::size_t n = 0; n < 3; ++n) {
    CHECK(again.tensors()[n].same_bits(lps.tensors()[n]));
  }

  const LpsHyperparams h1{1, 1, 0, 0.0, 4};
  const Lps one = lpstomo::init_random(h1);
  Eigen::MatrixXcd rho1 = one.to_dense();
  rho1 /= rho1.trace().real();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> s1(rho1);
  CHECK(s1.eigenvalues().maxCoeff() == Catch::Approx(1.0).margin(1e-10));
  CHECK(std::abs(s1.eigenvalues().minCoeff()) < 1e-12);
}

TEST_CASE("probabilities match the loop-built dense operator", "[lps]") {
  const LpsHyperparams h{4, 3, 4, 0.0, 1337};
  const Lps lps = lpstomo::init_random(h);

  const Eigen::MatrixXcd rho_ref = dense_by_loops(lps);
  const double tr_ref = rho_ref.trace().real();
  CHECK(lps.trace() == Catch::Approx(tr_ref).margin(1e-10));

  const Eigen::MatrixXcd rho_lib = lps.to_dense();
  CHECK((rho_lib - rho_ref).cwiseAbs().maxCoeff() < 1e-10);

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const PovmBasis basis = lpstomo::basis_from_index(4, rng.uniform_below(81));
    const std::uint32_t signs = static_cast<std::uint32_t>(rng.uniform_below(16));
    const lpstomo::CollapseOutcome o{basis, signs};
    const Eigen::VectorXcd v = product_vector(lpstomo::outcome_state(o));
    const double oracle = (v.adjoint() * rho_ref * v)(0, 0).real() / tr_ref;
    CHECK(lps.prob(o) == Catch::Approx(oracle).margin(1e-10));
    CHECK(lps.prob(o) >= -1e-12);
  }
}

TEST_CASE("trace is quadratic in every site tensor", "[lps]") {
  const LpsHyperparams h{3, 2, 1, 0.0, 7};
  Lps lps = lpstomo::init_random(h);
  const double before = lps.trace();
  lps.set_tensor(1, lpstomo::scaled(lps.tensors()[1], Complex{2.0, 0.0}));
  CHECK(lps.trace() == Catch::Approx(4.0 * before).epsilon(1e-12));
}

TEST_CASE("trace matches the dense operator for a range of shapes", "[lps]") {
  Rng seed_rng(63);
  for (std::size_t n = 1; n <= 5; ++n) {
    const LpsHyperparams h{n, 1 + seed_rng.uniform_below(3),
                           seed_rng.uniform_below(n + 1), 0.0,
                           seed_rng.uniform_below(10000)};
    const Lps lps = lpstomo::init_random(h);
    CHECK(lps.trace() ==
          Catch::Approx(lps.to_dense().trace().real()).margin(1e-10));
  }
}

TEST_CASE("model without purification bonds is pure", "[lps]") {
  const LpsHyperparams h{3, 3, 0, 0.0, 12};
  const Lps lps = lpstomo::init_random(h);
  CHECK(lps.n_beta() == 0);

  Eigen::MatrixXcd rho = lps.to_dense();
  rho /= rho.trace().real();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(
      Eigen::MatrixXcd(0.5 * (rho + rho.adjoint())), Eigen::EigenvaluesOnly);
  // Rank 1: all but the top eigenvalue vanish.
  const auto& ev = solver.eigenvalues();
  for (Eigen::Index i = 0; i + 1 < ev.size(); ++i) CHECK(std::abs(ev[i]) < 1e-10);
  CHECK(ev[ev.size() - 1] == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("pure model agrees with an explicit amplitude chain", "[lps]") {
  // With no purification bonds the state is a plain tensor train; its
  // amplitudes can be evaluated by a row-vector x matrices x column-vector
  // product, which this test does with Eigen only.
  const std::size_t n = 4, chi = 3;
  const LpsHyperparams h{n, chi, 0, 0.0, 29};
  const Lps lps = lpstomo::init_random(h);

  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const PovmBasis basis = lpstomo::basis_from_index(n, rng.uniform_below(81));
    const std::uint32_t signs = static_cast<std::uint32_t>(rng.uniform_below(16));
    const auto locals = lpstomo::outcome_state({basis, signs});

    Eigen::RowVectorXcd row(chi);
    for (std::size_t a = 0; a < chi; ++a) {
      row[static_cast<Eigen::Index>(a)] =
          std::conj(locals[0][0]) * lps.tensors()[0].at({0, a, 0}) +
          std::conj(locals[0][1]) * lps.tensors()[0].at({1, a, 0});
    }
    for (std::size_t s = 1; s + 1 < n; ++s) {
      Eigen::MatrixXcd mat(chi, chi);
      for (std::size_t a = 0; a < chi; ++a) {
        for (std::size_t b = 0; b < chi; ++b) {
          mat(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
              std::conj(locals[s][0]) * lps.tensors()[s].at({0, a, b, 0}) +
              std::conj(locals[s][1]) * lps.tensors()[s].at({1, a, b, 0});
        }
      }
      row = row * mat;
    }
    Eigen::VectorXcd col(chi);
    for (std::size_t a = 0; a < chi; ++a) {
      col[static_cast<Eigen::Index>(a)] =
          std::conj(locals[n - 1][0]) * lps.tensors()[n - 1].at({0, a, 0}) +
          std::conj(locals[n - 1][1]) * lps.tensors()[n - 1].at({1, a, 0});
    }
    const Complex amp = row * col;
    const double expected = std::norm(amp) / lps.trace();
    CHECK(lps.prob({basis, signs}) == Catch::Approx(expected).margin(1e-12));
  }
}

TEST_CASE("per-setting outcome probabilities are normalized", "[lps]") {
  Lps lps = lpstomo::init_random(LpsHyperparams{3, 2, 2, 0.0, 41});
  // Mixed purification extents exercise both branch shapes.
  REQUIRE(lps.beta_dims() == std::vector<std::size_t>{2, 2, 1});
  for (std::size_t bi = 0; bi < 27; ++bi) {
    const PovmBasis basis = lpstomo::basis_from_index(3, bi);
    double sum = 0.0;
    for (std::uint32_t v = 0; v < 8; ++v) sum += lps.prob({basis, v});
    CHECK(sum == Catch::Approx(1.0).margin(1e-8));
  }
}

TEST_CASE("dense diagonal equals the axis-aligned outcome probabilities",
          "[lps]") {
  const Lps lps = lpstomo::init_random(LpsHyperparams{3, 2, 2, 0.0, 53});
  Eigen::MatrixXcd rho = lps.to_dense();
  rho /= rho.trace().real();
  const PovmBasis zzz("ZZZ");
  for (std::uint32_t v = 0; v < 8; ++v) {
    CHECK(lps.prob({zzz, v}) ==
          Catch::Approx(rho(v, v).real()).margin(1e-10));
  }
}

TEST_CASE("parameter count grows linearly with qubit count", "[lps]") {
  // N=4, chi=3, all sites purified: 2*3*2 + 2*(2*3*3*2) + 2*3*2 = 96.
  CHECK(lpstomo::init_random(LpsHyperparams{4, 3, 4, 0.0, 1}).parameter_count() ==
        96);
  std::vector<std::size_t> counts;
  for (std::size_t n = 3; n <= 6; ++n) {
    counts.push_back(
        lpstomo::init_random(LpsHyperparams{n, 3, 0, 0.0, 1}).parameter_count());
  }
  for (std::size_t i = 0; i + 2 < counts.size(); ++i) {
    CHECK(counts[i + 2] - counts[i + 1] == counts[i + 1] - counts[i]);
  }
}

TEST_CASE("checkpoints reload to bit-identical probabilities", "[lps]") {
  const Lps lps = lpstomo::init_random(LpsHyperparams{3, 2, 1, 0.0, 67});
  const auto path = std::filesystem::temp_directory_path() / "lpstomo_ckpt.json";
  lps.save(path);
  const Lps back = Lps::load(path);
  std::filesystem::remove(path);

  REQUIRE(back.n_qubits() == 3);
  REQUIRE(back.chi() == 2);
  REQUIRE(back.beta_dims() == lps.beta_dims());
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const lpstomo::CollapseOutcome o{
        lpstomo::basis_from_index(3, rng.uniform_below(27)),
        static_cast<std::uint32_t>(rng.uniform_below(8))};
    // Bit-identical, not merely close.
    CHECK(back.prob(o) == lps.prob(o));
  }
}

TEST_CASE("model construction validates shapes", "[lps]") {
  CHECK_THROWS_AS(Lps(2, 2, {1, 1},
                      {ComplexTensor(Shape{2, 2, 1}), ComplexTensor(Shape{2, 3, 1})}),
                  std::invalid_argument);
  CHECK_THROWS_AS(Lps(2, 2, {3, 1},
                      {ComplexTensor(Shape{2, 2, 3}), ComplexTensor(Shape{2, 2, 1})}),
                  std::invalid_argument);
  CHECK_THROWS_AS(lpstomo::init_random(LpsHyperparams{2, 2, 3, 0.0, 0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(
      lpstomo::init_random(LpsHyperparams{12, 2, 0, 0.0, 0}).to_dense(10),
      std::length_error);
}
