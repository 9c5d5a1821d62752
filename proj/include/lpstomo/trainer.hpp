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
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lpstomo/lps.hpp"
#include "lpstomo/povm.hpp"
#include "lpstomo/rng.hpp"
#include "lpstomo/tape.hpp"
#include "lpstomo/tensor.hpp"

namespace lpstomo {

enum class Optimizer { kAdam, kPlainGd };

struct TrainConfig {
  double learning_rate = 5e-3;
  std::size_t max_epochs = 20000;
  Optimizer optimizer = Optimizer::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double convergence_threshold = 1e-7;   // relative loss improvement
  std::size_t convergence_patience = 50; // consecutive stalled epochs
  std::size_t bases_per_step = 0;        // 0 = full batch
  std::uint64_t seed = 0;
  std::size_t checkpoint_interval = 0;   // epochs between checkpoints, 0 = off
  std::filesystem::path checkpoint_path;

  void validate() const {
    if (learning_rate <= 0.0) {
      throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    }
    if (max_epochs < 1) {
      throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
    }
    if (checkpoint_interval > 0 && checkpoint_path.empty()) {
      throw std::invalid_argument(
          "TrainConfig: checkpointing requires a checkpoint_path");
    }
  }
};

inline std::string optimizer_to_string(Optimizer o) {
  return o == Optimizer::kAdam ? "adam" : "plain-gd";
}

inline Optimizer optimizer_from_string(const std::string& s) {
  if (s == "adam") return Optimizer::kAdam;
  if (s == "plain-gd") return Optimizer::kPlainGd;
  throw std::invalid_argument("unknown optimizer '" + s + "'");
}

inline nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  return nlohmann::json{{"optimizer", optimizer_to_string(cfg.optimizer)},
                        {"learning_rate", cfg.learning_rate},
                        {"max_epochs", cfg.max_epochs},
                        {"beta1", cfg.beta1},
                        {"beta2", cfg.beta2},
                        {"adam_epsilon", cfg.adam_epsilon},
                        {"convergence_threshold", cfg.convergence_threshold},
                        {"convergence_patience", cfg.convergence_patience},
                        {"bases_per_step", cfg.bases_per_step},
                        {"seed", cfg.seed},
                        {"checkpoint_interval", cfg.checkpoint_interval},
                        {"checkpoint_path", cfg.checkpoint_path.string()}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  cfg.optimizer = optimizer_from_string(
      j.value("optimizer", optimizer_to_string(cfg.optimizer)));
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.beta1 = j.value("beta1", cfg.beta1);
  cfg.beta2 = j.value("beta2", cfg.beta2);
  cfg.adam_epsilon = j.value("adam_epsilon", cfg.adam_epsilon);
  cfg.convergence_threshold =
      j.value("convergence_threshold", cfg.convergence_threshold);
  cfg.convergence_patience =
      j.value("convergence_patience", cfg.convergence_patience);
  cfg.bases_per_step = j.value("bases_per_step", cfg.bases_per_step);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.checkpoint_interval =
      j.value("checkpoint_interval", cfg.checkpoint_interval);
  cfg.checkpoint_path = j.value("checkpoint_path", std::string{});
  return cfg;
}

struct TrainReport {
  std::vector<double> loss_trajectory;
  std::vector<double> grad_norm_trajectory;
  double final_loss = 0.0;
  std::size_t epochs_run = 0;
  double wall_time_seconds = 0.0;
  bool converged = false;
  std::string stop_reason;

  nlohmann::json to_json() const {
    return nlohmann::json{{"loss_trajectory", loss_trajectory},
                          {"grad_norm_trajectory", grad_norm_trajectory},
                          {"final_loss", final_loss},
                          {"epochs_run", epochs_run},
                          {"wall_time_seconds", wall_time_seconds},
                          {"converged", converged},
                          {"stop_reason", stop_reason}};
  }
};

// Recorded loss expression for one block of dataset settings:
//
//   L = sum_m sum_v ( Re<v|rho|v> / Tr rho − P~[m,v] )^2 / denom
//
// built once on a tape and replayed every epoch. Contractions are shared
// aggressively: each (site, axis letter, sign) bra contraction appears once,
// the left-to-right transfer products are deduplicated by their per-site
// choice prefix (so settings agreeing on leading qubits share work), and the
// trace sweep is recorded a single time for the whole block.
class LossGraph {
 public:
  LossGraph(const Lps& model, const MeasurementDataset& data,
            std::size_t first_basis, std::size_t n_bases, double denom)
      : n_qubits_(model.n_qubits()) {
    if (model.n_qubits() != data.n_qubits()) {
      throw std::invalid_argument("loss: model covers " +
                                  std::to_string(model.n_qubits()) +
                                  " qubits, data covers " +
                                  std::to_string(data.n_qubits()));
    }
    const std::size_t dim = std::size_t{1} << n_qubits_;

    for (const ComplexTensor& t : model.tensors()) {
      leaves_.push_back(tape_.leaf(t));
    }

    // Shared trace sweep.
    ContractionTape::NodeId trace_node;
    if (n_qubits_ == 1) {
      trace_node = tape_.contract(leaves_[0], tape_.conjugate(leaves_[0]),
                                  {{0, 0}, {1, 1}});
    } else {
      auto left = tape_.contract(leaves_[0], tape_.conjugate(leaves_[0]),
                                 {{0, 0}, {2, 2}});
      for (std::size_t n = 1; n + 1 < n_qubits_; ++n) {
        const auto tmp = tape_.contract(left, leaves_[n], {{0, 1}});
        left = tape_.contract(tmp, tape_.conjugate(leaves_[n]),
                              {{0, 1}, {1, 0}, {3, 3}});
      }
      const auto tmp = tape_.contract(left, leaves_[n_qubits_ - 1], {{0, 1}});
      trace_node = tape_.contract(tmp, tape_.conjugate(leaves_[n_qubits_ - 1]),
                                  {{0, 1}, {1, 0}, {2, 2}});
    }
    const auto inv_trace = tape_.reciprocal(tape_.real_part(trace_node));

    // Per-(site, letter, sign) bra-contracted site tensors, built on demand.
    std::unordered_map<std::size_t, ContractionTape::NodeId> av_nodes;
    auto av = [&](std::size_t site, char letter, int sign) {
      const std::size_t letter_idx = letter == 'Y' ? 1 : (letter == 'Z' ? 2 : 0);
      const std::size_t key = (site * 3 + letter_idx) * 2 +
                              static_cast<std::size_t>(sign);
      const auto it = av_nodes.find(key);
      if (it != av_nodes.end()) return it->second;
      const Eigen::Vector2cd vec = pauli_eigenvector(letter, sign);
      const ComplexTensor bra(Shape{2},
                              {std::conj(vec[0]), std::conj(vec[1])});
      const auto node =
          tape_.contract(tape_.constant(bra), leaves_[site], {{0, 0}});
      av_nodes.emplace(key, node);
      return node;
    };

    // Transfer products keyed by the (letter, sign) choices made so far.
    std::unordered_map<std::string, ContractionTape::NodeId> prefix_nodes;
    auto outcome_prob = [&](const PovmBasis& basis, std::uint32_t signs) {
      std::string key;
      key.reserve(2 * n_qubits_);
      if (n_qubits_ == 1) {
        const int s = static_cast<int>(signs & 1u);
        key = {basis.axes[0], static_cast<char>('0' + s)};
        const auto it = prefix_nodes.find(key);
        if (it != prefix_nodes.end()) return it->second;
        const auto a = av(0, basis.axes[0], s);
        const auto p = tape_.contract(a, tape_.conjugate(a), {{0, 0}});
        prefix_nodes.emplace(key, p);
        return p;
      }
      // Site 0 transfer matrix.
      int s0 = static_cast<int>((signs >> (n_qubits_ - 1)) & 1u);
      key = {basis.axes[0], static_cast<char>('0' + s0)};
      auto left_it = prefix_nodes.find(key);
      if (left_it == prefix_nodes.end()) {
        const auto a = av(0, basis.axes[0], s0);
        const auto node = tape_.contract(a, tape_.conjugate(a), {{1, 1}});
        left_it = prefix_nodes.emplace(key, node).first;
      }
      auto left = left_it->second;
      for (std::size_t n = 1; n + 1 < n_qubits_; ++n) {
        const int s = static_cast<int>((signs >> (n_qubits_ - 1 - n)) & 1u);
        key.push_back(basis.axes[n]);
        key.push_back(static_cast<char>('0' + s));
        auto it = prefix_nodes.find(key);
        if (it == prefix_nodes.end()) {
          const auto a = av(n, basis.axes[n], s);
          const auto tmp = tape_.contract(left, a, {{0, 0}});
          const auto node =
              tape_.contract(tmp, tape_.conjugate(a), {{0, 0}, {2, 2}});
          it = prefix_nodes.emplace(key, node).first;
        }
        left = it->second;
      }
      const std::size_t last = n_qubits_ - 1;
      const int s = static_cast<int>(signs & 1u);
      key.push_back(basis.axes[last]);
      key.push_back(static_cast<char>('0' + s));
      auto it = prefix_nodes.find(key);
      if (it == prefix_nodes.end()) {
        const auto a = av(last, basis.axes[last], s);
        const auto tmp = tape_.contract(left, a, {{0, 0}});
        const auto node =
            tape_.contract(tmp, tape_.conjugate(a), {{0, 0}, {1, 1}});
        it = prefix_nodes.emplace(key, node).first;
      }
      return it->second;
    };

    ContractionTape::NodeId acc = -1;
    for (std::size_t m = first_basis; m < first_basis + n_bases; ++m) {
      const BasisRecord& rec = data.records()[m];
      for (std::uint32_t v = 0; v < dim; ++v) {
        const auto p = outcome_prob(rec.basis, v);
        const auto q = tape_.hadamard(tape_.real_part(p), inv_trace);
        const auto d = tape_.shift(q, Complex{-rec.frequencies[v], 0.0});
        const auto sq = tape_.hadamard(d, d);
        acc = (acc < 0) ? sq : tape_.add(acc, sq);
      }
    }
    root_ = tape_.real_part(tape_.scale(acc, Complex{1.0 / denom, 0.0}));
  }

  void set_model(const std::vector<ComplexTensor>& tensors) {
    for (std::size_t n = 0; n < leaves_.size(); ++n) {
      tape_.set_leaf(leaves_[n], tensors[n]);
    }
  }

  // Forward replay; the loss at the currently set leaves.
  double loss() {
    tape_.forward();
    return tape_.scalar_value(root_);
  }

  // Forward + reverse sweep; gradients land in `grads` (resized on demand).
  double loss_and_gradients(std::vector<ComplexTensor>& grads) {
    tape_.forward();
    const double value = tape_.scalar_value(root_);
    if (!std::isfinite(value)) return value;  // caller reports the epoch
    tape_.backward();
    grads.clear();
    for (const auto leaf : leaves_) grads.push_back(tape_.gradient(leaf));
    return value;
  }

  std::size_t node_count() const { return tape_.node_count(); }

 private:
  std::size_t n_qubits_;
  ContractionTape tape_;
  std::vector<ContractionTape::NodeId> leaves_;
  ContractionTape::NodeId root_ = -1;
};

// Mean-squared error between the model's normalized outcome probabilities
// and the recorded frequencies, averaged over all settings and all 2^N
// outcomes (absent outcomes count with frequency zero).
inline double mse_loss(const Lps& lps, const MeasurementDataset& data) {
  if (lps.n_qubits() != data.n_qubits()) {
    throw std::invalid_argument("mse_loss: qubit count mismatch");
  }
  const std::size_t dim = std::size_t{1} << lps.n_qubits();
  const double trace = lps.trace();
  double acc = 0.0;
  for (const BasisRecord& rec : data.records()) {
    for (std::uint32_t v = 0; v < dim; ++v) {
      const double p =
          lps.unnormalized_prob(outcome_state({rec.basis, v})) / trace;
      const double d = p - rec.frequencies[v];
      acc += d * d;
    }
  }
  return acc / (static_cast<double>(data.n_bases()) * static_cast<double>(dim));
}

// Gradient of mse_loss with respect to every site tensor, in the
// d/dRe + i d/dIm convention used by the tape.
inline std::vector<ComplexTensor> loss_gradients(const Lps& lps,
                                                 const MeasurementDataset& data) {
  const std::size_t dim = std::size_t{1} << lps.n_qubits();
  LossGraph graph(lps, data, 0, data.n_bases(),
                  static_cast<double>(data.n_bases()) * static_cast<double>(dim));
  std::vector<ComplexTensor> grads;
  const double value = graph.loss_and_gradients(grads);
  if (!std::isfinite(value)) {
    throw std::runtime_error("loss_gradients: non-finite loss");
  }
  return grads;
}

namespace detail {

struct AdamState {
  std::vector<std::vector<double>> m, v;  // per site, 2 reals per entry
  std::size_t step = 0;

  static AdamState zeros(const std::vector<ComplexTensor>& params) {
    AdamState s;
    for (const ComplexTensor& t : params) {
      s.m.emplace_back(2 * t.size(), 0.0);
      s.v.emplace_back(2 * t.size(), 0.0);
    }
    return s;
  }
};

inline double gradient_norm(const std::vector<ComplexTensor>& grads) {
  double s = 0.0;
  for (const ComplexTensor& g : grads) {
    for (std::size_t i = 0; i < g.size(); ++i) s += std::norm(g[i]);
  }
  return std::sqrt(s);
}

inline void adam_update(std::vector<ComplexTensor>& params,
                        const std::vector<ComplexTensor>& grads,
                        AdamState& state, const TrainConfig& cfg) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t n = 0; n < params.size(); ++n) {
    auto& m = state.m[n];
    auto& v = state.v[n];
    for (std::size_t i = 0; i < params[n].size(); ++i) {
      const double gr = grads[n][i].real();
      const double gi = grads[n][i].imag();
      m[2 * i] = cfg.beta1 * m[2 * i] + (1.0 - cfg.beta1) * gr;
      m[2 * i + 1] = cfg.beta1 * m[2 * i + 1] + (1.0 - cfg.beta1) * gi;
      v[2 * i] = cfg.beta2 * v[2 * i] + (1.0 - cfg.beta2) * gr * gr;
      v[2 * i + 1] = cfg.beta2 * v[2 * i + 1] + (1.0 - cfg.beta2) * gi * gi;
      const double sr =
          (m[2 * i] / bc1) / (std::sqrt(v[2 * i] / bc2) + cfg.adam_epsilon);
      const double si = (m[2 * i + 1] / bc1) /
                        (std::sqrt(v[2 * i + 1] / bc2) + cfg.adam_epsilon);
      params[n][i] -= Complex{cfg.learning_rate * sr, cfg.learning_rate * si};
    }
  }
}

// Serialized optimizer + progress state for exact resumption. The engine
// drives mini-batch block ordering; saving its state makes a resumed run
// reproduce the uninterrupted one bit for bit.
struct TrainState {
  std::vector<ComplexTensor> params;
  AdamState adam;
  std::size_t epoch = 0;
  std::size_t stall_count = 0;
  double prev_loss = std::numeric_limits<double>::infinity();
  std::mt19937_64 engine;
  bool engine_seeded = false;
  TrainReport report;
};

}  // namespace detail

namespace detail {

inline void write_checkpoint(const std::filesystem::path& path, const Lps& model,
                             const TrainState& state) {
  std::ostringstream engine_text;
  engine_text << state.engine;
  nlohmann::json j{{"version", 1},
                   {"model",
                    Lps(model.n_qubits(), model.chi(), model.beta_dims(),
                        state.params)
                        .to_json()},
                   {"epoch", state.epoch},
                   {"stall_count", state.stall_count},
                   {"prev_loss", state.prev_loss},
                   {"adam_step", state.adam.step},
                   {"adam_m", state.adam.m},
                   {"adam_v", state.adam.v},
                   {"rng_state", engine_text.str()},
                   {"loss_trajectory", state.report.loss_trajectory},
                   {"grad_norm_trajectory", state.report.grad_norm_trajectory}};
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << j.dump() << '\n';
}

}  // namespace detail

// Gradient-descent tomography: builds the loss tape(s) for the dataset and
// iterates parameter updates until convergence, divergence, or the epoch
// budget. Returns the trained model and the full training record.
inline std::pair<Lps, TrainReport> fit_from(
    Lps model, const MeasurementDataset& data, const TrainConfig& cfg,
    detail::TrainState state = {}) {
  cfg.validate();
  if (model.n_qubits() != data.n_qubits()) {
    throw std::invalid_argument("fit: qubit count mismatch");
  }
  if (data.n_bases() == 0) {
    throw std::invalid_argument("fit: dataset has no settings");
  }
  const auto t_start = std::chrono::steady_clock::now();
  const std::size_t dim = std::size_t{1} << model.n_qubits();
  const double denom =
      static_cast<double>(data.n_bases()) * static_cast<double>(dim);

  // One tape per gradient step: the whole dataset by default, or fixed
  // contiguous blocks when mini-batching.
  const std::size_t block =
      cfg.bases_per_step == 0 ? data.n_bases()
                              : std::min(cfg.bases_per_step, data.n_bases());
  std::vector<LossGraph> graphs;
  for (std::size_t first = 0; first < data.n_bases(); first += block) {
    graphs.emplace_back(model, data, first,
                        std::min(block, data.n_bases() - first), denom);
  }

  if (state.params.empty()) {
    state.params = model.tensors();
    state.adam = detail::AdamState::zeros(state.params);
  }
  if (!state.engine_seeded) {
    state.engine.seed(derive_seed(cfg.seed, kSeedTrain));
    state.engine_seeded = true;
  }
  TrainReport& report = state.report;

  std::vector<ComplexTensor> grads;
  std::vector<std::size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  while (state.epoch < cfg.max_epochs) {
    double epoch_loss = 0.0;
    double epoch_grad_sq = 0.0;
    // Mini-batch steps visit the blocks in a freshly drawn order each epoch.
    // Shuffling always starts from the identity so the permutation is a
    // function of the engine state alone (checkpoints restore it exactly).
    if (graphs.size() > 1) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), state.engine);
    }
    for (const std::size_t g : order) {
      LossGraph& graph = graphs[g];
      graph.set_model(state.params);
      const double value = graph.loss_and_gradients(grads);
      if (!std::isfinite(value)) {
        throw std::runtime_error("fit: non-finite loss at epoch " +
                                 std::to_string(state.epoch + 1));
      }
      epoch_loss += value;
      const double gn = detail::gradient_norm(grads);
      epoch_grad_sq += gn * gn;

      if (cfg.optimizer == Optimizer::kAdam) {
        detail::adam_update(state.params, grads, state.adam, cfg);
      } else {
        // Plain gradient step with per-step backtracking: halve the step
        // until the loss stops increasing.
        const std::vector<ComplexTensor> saved = state.params;
        double eta = cfg.learning_rate;
        for (int attempt = 0; attempt < 40; ++attempt) {
          for (std::size_t n = 0; n < state.params.size(); ++n) {
            for (std::size_t i = 0; i < state.params[n].size(); ++i) {
              state.params[n][i] = saved[n][i] - eta * grads[n][i];
            }
          }
          graph.set_model(state.params);
          const double trial = graph.loss();
          if (std::isfinite(trial) && trial <= value) break;
          eta *= 0.5;
        }
      }
    }
    ++state.epoch;
    report.loss_trajectory.push_back(epoch_loss);
    report.grad_norm_trajectory.push_back(std::sqrt(epoch_grad_sq));

    // Convergence: relative improvement below threshold for `patience`
    // consecutive epochs.
    const double rel =
        (state.prev_loss - epoch_loss) / std::max(state.prev_loss, 1e-300);
    state.stall_count =
        (std::abs(rel) < cfg.convergence_threshold) ? state.stall_count + 1 : 0;
    state.prev_loss = epoch_loss;

    if (cfg.checkpoint_interval > 0 &&
        state.epoch % cfg.checkpoint_interval == 0) {
      detail::write_checkpoint(cfg.checkpoint_path, model, state);
    }

    if (state.stall_count >= cfg.convergence_patience) {
      report.converged = true;
      report.stop_reason = "converged";
      break;
    }
  }
  if (report.stop_reason.empty()) report.stop_reason = "max_epochs";
  report.epochs_run = state.epoch;

  Lps trained(model.n_qubits(), model.chi(), model.beta_dims(), state.params);
  // Loss at the final parameters (the trajectory logs pre-update values).
  double final_loss = 0.0;
  for (LossGraph& graph : graphs) {
    graph.set_model(state.params);
    final_loss += graph.loss();
  }
  report.final_loss = final_loss;
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return {std::move(trained), std::move(report)};
}

inline std::pair<Lps, TrainReport> fit(const LpsHyperparams& h,
                                       const MeasurementDataset& data,
                                       const TrainConfig& cfg) {
  return fit_from(init_random(h), data, cfg);
}

// Continues a checkpointed run; with the same config and dataset the
// continuation reproduces the uninterrupted trajectory exactly.
inline std::pair<Lps, TrainReport> fit_resume(
    const std::filesystem::path& checkpoint, const MeasurementDataset& data,
    const TrainConfig& cfg) {
  std::ifstream in(checkpoint);
  if (!in) throw std::runtime_error("cannot open " + checkpoint.string());
  nlohmann::json j;
  in >> j;
  if (j.at("version").get<int>() != 1) {
    throw std::runtime_error("train checkpoint: unsupported version");
  }
  Lps model = Lps::from_json(j.at("model"));
  detail::TrainState state;
  state.params = model.tensors();
  state.adam.m = j.at("adam_m").get<std::vector<std::vector<double>>>();
  state.adam.v = j.at("adam_v").get<std::vector<std::vector<double>>>();
  state.adam.step = j.at("adam_step").get<std::size_t>();
  state.epoch = j.at("epoch").get<std::size_t>();
  state.stall_count = j.at("stall_count").get<std::size_t>();
  state.prev_loss = j.at("prev_loss").get<double>();
  std::istringstream engine_text(j.at("rng_state").get<std::string>());
  engine_text >> state.engine;
  state.engine_seeded = true;
  state.report.loss_trajectory =
      j.at("loss_trajectory").get<std::vector<double>>();
  state.report.grad_norm_trajectory =
      j.at("grad_norm_trajectory").get<std::vector<double>>();
  return fit_from(std::move(model), data, cfg, std::move(state));
}

}  // namespace lpstomo
