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
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lpstomo/lps.hpp"
#include "lpstomo/metrics.hpp"
#include "lpstomo/povm.hpp"
#include "lpstomo/rng.hpp"
#include "lpstomo/svg.hpp"
#include "lpstomo/target_states.hpp"
#include "lpstomo/trainer.hpp"

namespace lpstomo {

enum class ExperimentKind {
  kNbetaSweep,
  kNmScaling,
  kNoiseSweep,
  kGhzStudy,
  kSingleFit,
};

inline std::string kind_to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kNbetaSweep: return "nbeta-sweep";
    case ExperimentKind::kNmScaling: return "nm-scaling";
    case ExperimentKind::kNoiseSweep: return "noise-sweep";
    case ExperimentKind::kGhzStudy: return "ghz-study";
    case ExperimentKind::kSingleFit: return "single-fit";
  }
  throw std::logic_error("unreachable");
}

inline ExperimentKind kind_from_string(const std::string& s) {
  if (s == "nbeta-sweep") return ExperimentKind::kNbetaSweep;
  if (s == "nm-scaling") return ExperimentKind::kNmScaling;
  if (s == "noise-sweep") return ExperimentKind::kNoiseSweep;
  if (s == "ghz-study") return ExperimentKind::kGhzStudy;
  if (s == "single-fit") return ExperimentKind::kSingleFit;
  throw std::invalid_argument("unknown experiment kind '" + s + "'");
}

// What to reconstruct: a randomly drawn state (fresh per repeat seed), a
// parametrized cat state, or a density matrix loaded from file.
struct TargetSpec {
  std::string kind;            // "pure-random" | "mixed-random" | "ghz" | "file"
  double purity = 1.0;         // mixed-random only
  double beta = 0.0;           // ghz relative phase
  std::vector<double> gammas;  // ghz per-qubit phases; empty = all zero
  std::filesystem::path path;  // file only

  std::string label() const {
    if (kind == "mixed-random") {
      char buf[48];
      std::snprintf(buf, sizeof buf, "mixed(%.3g)", purity);
      return buf;
    }
    if (kind == "file") return "file:" + path.filename().string();
    return kind;
  }

  DensityMatrix build(std::size_t n_qubits, std::uint64_t seed) const {
    if (kind == "pure-random") {
      Rng rng(derive_seed(seed, kSeedTarget));
      return pure_state(n_qubits, haar_random_state(n_qubits, rng));
    }
    if (kind == "mixed-random") {
      return random_mixed(n_qubits, purity, derive_seed(seed, kSeedTarget));
    }
    if (kind == "ghz") {
      return ghz(n_qubits, beta,
                 gammas.empty() ? std::vector<double>(n_qubits, 0.0) : gammas);
    }
    if (kind == "file") {
      std::ifstream in(path);
      if (!in) throw std::runtime_error("cannot open " + path.string());
      nlohmann::json j;
      in >> j;
      DensityMatrix rho = density_matrix_from_json(j);
      if (rho.n_qubits() != n_qubits) {
        throw std::runtime_error("target file " + path.string() + " holds " +
                                 std::to_string(rho.n_qubits()) +
                                 " qubits, config expects " +
                                 std::to_string(n_qubits));
      }
      return rho;
    }
    throw std::invalid_argument("unknown target kind '" + kind + "'");
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"kind", kind}};
    if (kind == "mixed-random") j["purity"] = purity;
    if (kind == "ghz") {
      j["beta"] = beta;
      j["gammas"] = gammas;
    }
    if (kind == "file") j["path"] = path.string();
    return j;
  }

  static TargetSpec from_json(const nlohmann::json& j) {
    TargetSpec t;
    t.kind = j.at("kind").get<std::string>();
    t.purity = j.value("purity", 1.0);
    t.beta = j.value("beta", 0.0);
    t.gammas = j.value("gammas", std::vector<double>{});
    t.path = j.value("path", std::string{});
    return t;
  }
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kSingleFit;
  std::string tag;  // output-name tag; empty = UTC timestamp at emit time
  std::size_t n_qubits = 4;
  std::size_t chi = 6;
  double init_scale = 0.0;  // 0 = model default
  std::vector<std::size_t> n_beta_list{0};
  std::vector<std::size_t> n_bases_list{81};
  std::uint64_t n_shots = 8192;
  std::vector<double> noise_list{0.0};
  std::vector<TargetSpec> targets;
  TrainConfig trainer;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "results";

  void validate() const {
    if (targets.empty()) {
      throw std::invalid_argument("config: at least one target required");
    }
    if (n_beta_list.empty() || n_bases_list.empty() || noise_list.empty()) {
      throw std::invalid_argument("config: grid lists must be non-empty");
    }
    if (repeats < 1) throw std::invalid_argument("config: repeats must be >= 1");
    if (n_qubits < 1 || n_qubits > 20) {
      throw std::invalid_argument("config: n_qubits out of range");
    }
    for (const std::size_t nb : n_beta_list) {
      if (nb > n_qubits) {
        throw std::invalid_argument("config: n_beta exceeds n_qubits");
      }
    }
    for (const std::size_t nm : n_bases_list) {
      if (nm < 1 || nm > basis_count(n_qubits)) {
        throw std::invalid_argument("config: n_bases outside [1, 3^N]");
      }
    }
    for (const double eps : noise_list) {
      if (eps < 0.0 || eps > 1.0) {
        throw std::invalid_argument("config: noise level outside [0, 1]");
      }
    }
    for (const TargetSpec& t : targets) {
      if (t.kind != "pure-random" && t.kind != "mixed-random" &&
          t.kind != "ghz" && t.kind != "file") {
        throw std::invalid_argument("config: unknown target kind '" + t.kind +
                                    "'");
      }
      if (t.kind == "mixed-random" &&
          (t.purity < std::pow(2.0, -static_cast<double>(n_qubits)) ||
           t.purity > 1.0)) {
        throw std::invalid_argument("config: target purity outside [2^-N, 1]");
      }
      if (t.kind == "ghz" && !t.gammas.empty() &&
          t.gammas.size() != n_qubits) {
        throw std::invalid_argument(
            "config: ghz target needs one per-qubit phase per qubit");
      }
      if (t.kind == "file" && !std::filesystem::exists(t.path)) {
        throw std::invalid_argument("config: target file not found: " +
                                    t.path.string());
      }
    }
    if (kind == ExperimentKind::kGhzStudy) {
      for (const TargetSpec& t : targets) {
        if (t.kind != "ghz") {
          throw std::invalid_argument(
              "config: ghz-study targets must have kind 'ghz'");
        }
      }
      const std::vector<std::size_t> expected{0, n_qubits};
      if (n_beta_list != expected) {
        throw std::invalid_argument(
            "config: ghz-study requires n_beta [0, N] to train the pure and "
            "fully mixed model side by side");
      }
    }
    trainer.validate();
  }

  nlohmann::json to_json() const {
    nlohmann::json target_json = nlohmann::json::array();
    for (const TargetSpec& t : targets) target_json.push_back(t.to_json());
    return nlohmann::json{{"version", 1},
                          {"kind", kind_to_string(kind)},
                          {"tag", tag},
                          {"n_qubits", n_qubits},
                          {"chi", chi},
                          {"init_scale", init_scale},
                          {"n_beta", n_beta_list},
                          {"n_bases", n_bases_list},
                          {"n_shots", n_shots},
                          {"noise", noise_list},
                          {"targets", target_json},
                          {"trainer", train_config_to_json(trainer)},
                          {"repeats", repeats},
                          {"seed", seed},
                          {"out_dir", out_dir.string()}};
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    if (j.value("version", 0) != 1) {
      throw std::invalid_argument("config: unsupported version");
    }
    ExperimentConfig c;
    c.kind = kind_from_string(j.at("kind").get<std::string>());
    c.tag = j.value("tag", std::string{});
    c.n_qubits = j.at("n_qubits").get<std::size_t>();
    c.chi = j.at("chi").get<std::size_t>();
    c.init_scale = j.value("init_scale", 0.0);
    c.n_beta_list = j.at("n_beta").get<std::vector<std::size_t>>();
    c.n_bases_list = j.at("n_bases").get<std::vector<std::size_t>>();
    c.n_shots = j.at("n_shots").get<std::uint64_t>();
    c.noise_list = j.at("noise").get<std::vector<double>>();
    for (const nlohmann::json& t : j.at("targets")) {
      c.targets.push_back(TargetSpec::from_json(t));
    }
    if (j.contains("trainer")) {
      c.trainer = train_config_from_json(j.at("trainer"));
    }
    c.repeats = j.value("repeats", std::size_t{5});
    c.seed = j.value("seed", std::uint64_t{0});
    c.out_dir = j.value("out_dir", std::string{"results"});
    return c;
  }

  static ExperimentConfig load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
      throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    out << to_json().dump(2) << '\n';
  }
};

// One trained cell: the grid coordinates, the derived seed that makes the
// row independently recomputable, and the fit metrics (or the failure).
struct CellRecord {
  std::size_t cell_index = 0;
  std::size_t repeat = 0;
  std::uint64_t cell_seed = 0;
  std::size_t target_index = 0;
  std::string target_label;
  std::size_t n_qubits = 0;
  std::size_t chi = 0;
  std::size_t n_beta = 0;
  std::size_t n_bases = 0;
  std::uint64_t n_shots = 0;
  double noise = 0.0;
  std::string status = "ok";  // or "failed"
  std::string message;
  double target_purity = std::numeric_limits<double>::quiet_NaN();
  double target_entropy = std::numeric_limits<double>::quiet_NaN();
  double f_in = std::numeric_limits<double>::quiet_NaN();
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  std::size_t epochs = 0;
  double wall_time_s = 0.0;
  std::vector<double> loss_trajectory;  // kept for single-fit runs only

  nlohmann::json to_json() const {
    return nlohmann::json{{"cell_index", cell_index},
                          {"repeat", repeat},
                          {"cell_seed", cell_seed},
                          {"target_index", target_index},
                          {"target_label", target_label},
                          {"n_qubits", n_qubits},
                          {"chi", chi},
                          {"n_beta", n_beta},
                          {"n_bases", n_bases},
                          {"n_shots", n_shots},
                          {"noise", noise},
                          {"status", status},
                          {"message", message},
                          {"target_purity", target_purity},
                          {"target_entropy", target_entropy},
                          {"f_in", f_in},
                          {"final_loss", final_loss},
                          {"epochs", epochs},
                          {"wall_time_s", wall_time_s},
                          {"loss_trajectory", loss_trajectory}};
  }

  static CellRecord from_json(const nlohmann::json& j) {
    CellRecord r;
    r.cell_index = j.at("cell_index").get<std::size_t>();
    r.repeat = j.at("repeat").get<std::size_t>();
    r.cell_seed = j.at("cell_seed").get<std::uint64_t>();
    r.target_index = j.at("target_index").get<std::size_t>();
    r.target_label = j.at("target_label").get<std::string>();
    r.n_qubits = j.at("n_qubits").get<std::size_t>();
    r.chi = j.at("chi").get<std::size_t>();
    r.n_beta = j.at("n_beta").get<std::size_t>();
    r.n_bases = j.at("n_bases").get<std::size_t>();
    r.n_shots = j.at("n_shots").get<std::uint64_t>();
    r.noise = j.at("noise").get<double>();
    r.status = j.at("status").get<std::string>();
    r.message = j.at("message").get<std::string>();
    r.target_purity = j.at("target_purity").get<double>();
    r.target_entropy = j.at("target_entropy").get<double>();
    r.f_in = j.at("f_in").get<double>();
    r.final_loss = j.at("final_loss").get<double>();
    r.epochs = j.at("epochs").get<std::size_t>();
    r.wall_time_s = j.at("wall_time_s").get<double>();
    r.loss_trajectory = j.value("loss_trajectory", std::vector<double>{});
    return r;
  }
};

// Aggregated curve: median metric per grid point, optionally with an OLS
// line through (x, y).
struct CurveFit {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
  bool fitted = false;
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double r_squared = std::numeric_limits<double>::quiet_NaN();

  nlohmann::json to_json() const {
    return nlohmann::json{{"label", label},       {"xs", xs},
                          {"ys", ys},             {"fitted", fitted},
                          {"slope", slope},       {"intercept", intercept},
                          {"r_squared", r_squared}};
  }

  static CurveFit from_json(const nlohmann::json& j) {
    CurveFit c;
    c.label = j.at("label").get<std::string>();
    c.xs = j.at("xs").get<std::vector<double>>();
    c.ys = j.at("ys").get<std::vector<double>>();
    c.fitted = j.at("fitted").get<bool>();
    c.slope = j.at("slope").get<double>();
    c.intercept = j.at("intercept").get<double>();
    c.r_squared = j.at("r_squared").get<double>();
    return c;
  }
};

// Outcome distribution over the all-X (|+>/|->) product basis of one
// reconstruction, for the cat-state corner plots.
struct HeatmapRecord {
  std::string label;
  std::size_t n_bases = 0;
  double noise = 0.0;
  std::vector<double> probabilities;  // 2^N, outcome bits big-endian

  nlohmann::json to_json() const {
    return nlohmann::json{{"label", label},
                          {"n_bases", n_bases},
                          {"noise", noise},
                          {"probabilities", probabilities}};
  }

  static HeatmapRecord from_json(const nlohmann::json& j) {
    HeatmapRecord h;
    h.label = j.at("label").get<std::string>();
    h.n_bases = j.at("n_bases").get<std::size_t>();
    h.noise = j.at("noise").get<double>();
    h.probabilities = j.at("probabilities").get<std::vector<double>>();
    return h;
  }
};

struct SweepResult {
  ExperimentConfig config;
  std::vector<CellRecord> rows;
  std::vector<CurveFit> fits;
  std::vector<HeatmapRecord> heatmaps;
  bool any_failed = false;

  nlohmann::json to_json() const {
    nlohmann::json row_json = nlohmann::json::array();
    for (const CellRecord& r : rows) row_json.push_back(r.to_json());
    nlohmann::json fit_json = nlohmann::json::array();
    for (const CurveFit& f : fits) fit_json.push_back(f.to_json());
    nlohmann::json heat_json = nlohmann::json::array();
    for (const HeatmapRecord& h : heatmaps) heat_json.push_back(h.to_json());
    return nlohmann::json{{"version", 1},
                          {"config", config.to_json()},
                          {"rows", row_json},
                          {"fits", fit_json},
                          {"heatmaps", heat_json},
                          {"any_failed", any_failed}};
  }

  static SweepResult from_json(const nlohmann::json& j) {
    if (j.value("version", 0) != 1) {
      throw std::invalid_argument("result: unsupported version");
    }
    SweepResult r;
    r.config = ExperimentConfig::from_json(j.at("config"));
    for (const nlohmann::json& row : j.at("rows")) {
      r.rows.push_back(CellRecord::from_json(row));
    }
    for (const nlohmann::json& f : j.at("fits")) {
      r.fits.push_back(CurveFit::from_json(f));
    }
    for (const nlohmann::json& h : j.at("heatmaps")) {
      r.heatmaps.push_back(HeatmapRecord::from_json(h));
    }
    r.any_failed = j.at("any_failed").get<bool>();
    return r;
  }

  static SweepResult load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }
};

// Probabilities of all 2^N outcomes when every qubit is read in the X
// (|+>/|->) basis.
inline std::vector<double> plus_minus_distribution(const DensityMatrix& rho) {
  return exact_distribution(rho,
                            PovmBasis{std::string(rho.n_qubits(), 'X')});
}

// Random targets are drawn once per (target spec, repeat) and reused across
// the whole (n_beta, n_bases, noise) grid, so every curve in a sweep probes
// the same state instance; repeats supply the independent draws that the
// median aggregates. Cell-level randomness (basis selection, shot sampling,
// model init) still derives from the per-cell seed.
inline std::uint64_t target_seed(const ExperimentConfig& cfg,
                                 std::size_t target_index,
                                 std::size_t repeat) {
  return derive_seed(cfg.seed, kSeedTarget, target_index, repeat);
}

// Rebuilds the dataset and retrains the model for one recorded row. All
// randomness re-derives from the row's recorded indices and cell seed, so
// the outcome matches the original sweep cell exactly.
inline std::pair<Lps, TrainReport> refit_cell(const ExperimentConfig& cfg,
                                              const CellRecord& row) {
  const TargetSpec& spec = cfg.targets.at(row.target_index);
  const DensityMatrix ideal =
      spec.build(cfg.n_qubits, target_seed(cfg, row.target_index, row.repeat));
  const DensityMatrix measured =
      row.noise > 0.0 ? depolarize(ideal, row.noise) : ideal;
  const auto bases = sample_bases(cfg.n_qubits, row.n_bases, row.cell_seed);
  const MeasurementDataset data =
      sample_dataset(measured, bases, cfg.n_shots, row.cell_seed);
  LpsHyperparams h;
  h.n_qubits = cfg.n_qubits;
  h.chi = cfg.chi;
  h.n_beta = row.n_beta;
  h.init_scale = cfg.init_scale;
  h.seed = row.cell_seed;
  TrainConfig tcfg = cfg.trainer;
  tcfg.seed = row.cell_seed;
  tcfg.checkpoint_interval = 0;
  tcfg.checkpoint_path.clear();
  return fit(h, data, tcfg);
}

namespace detail {

inline double median(std::vector<double> v) {
  std::erase_if(v, [](double x) { return std::isnan(x); });
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Runs one grid cell end to end. The target derives from (master seed,
// target index, repeat) and everything else from cell_seed, so a row can be
// reproduced from its recorded fields alone. cell_seed deliberately omits
// n_beta and noise: cells that differ only in model capacity or noise level
// share one basis selection, shot stream, and init stream, so those sweeps
// compare like against like (common random numbers), exactly as a study
// that collects one dataset per state and varies the model or the channel.
inline CellRecord run_cell(const ExperimentConfig& cfg, std::size_t cell_index,
                           std::size_t repeat, std::size_t target_index,
                           std::size_t n_beta, std::size_t n_bases,
                           double noise, bool keep_trajectory) {
  CellRecord row;
  row.cell_index = cell_index;
  row.repeat = repeat;
  row.cell_seed = derive_seed(cfg.seed, target_index, n_bases, repeat);
  row.target_index = target_index;
  row.target_label = cfg.targets[target_index].label();
  row.n_qubits = cfg.n_qubits;
  row.chi = cfg.chi;
  row.n_beta = n_beta;
  row.n_bases = n_bases;
  row.n_shots = cfg.n_shots;
  row.noise = noise;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    const DensityMatrix ideal = cfg.targets[target_index].build(
        cfg.n_qubits, target_seed(cfg, target_index, repeat));
    row.target_purity = purity(ideal);
    row.target_entropy = von_neumann_entropy(ideal);
    const DensityMatrix measured =
        noise > 0.0 ? depolarize(ideal, noise) : ideal;

    const auto bases = sample_bases(cfg.n_qubits, n_bases, row.cell_seed);
    const MeasurementDataset data =
        sample_dataset(measured, bases, cfg.n_shots, row.cell_seed);

    LpsHyperparams h;
    h.n_qubits = cfg.n_qubits;
    h.chi = cfg.chi;
    h.n_beta = n_beta;
    h.init_scale = cfg.init_scale;
    h.seed = row.cell_seed;
    TrainConfig tcfg = cfg.trainer;
    tcfg.seed = row.cell_seed;
    tcfg.checkpoint_interval = 0;
    tcfg.checkpoint_path.clear();

    auto [model, report] = fit(h, data, tcfg);
    row.f_in = infidelity(model.to_density_matrix(), ideal);
    row.final_loss = report.final_loss;
    row.epochs = report.epochs_run;
    if (keep_trajectory) row.loss_trajectory = std::move(report.loss_trajectory);
    row.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
  } catch (const std::exception& e) {
    row.status = "failed";
    row.message = e.what();
  }
  return row;
}

struct CellCoord {
  std::size_t target_index, n_beta, n_bases;
  double noise;
};

inline std::vector<CellCoord> expand_grid(const ExperimentConfig& cfg) {
  std::vector<CellCoord> cells;
  for (std::size_t t = 0; t < cfg.targets.size(); ++t) {
    for (const std::size_t nb : cfg.n_beta_list) {
      for (const std::size_t nm : cfg.n_bases_list) {
        for (const double eps : cfg.noise_list) {
          cells.push_back({t, nb, nm, eps});
        }
      }
    }
  }
  return cells;
}

// Median f_in over repeats for each grid cell, in cell order.
inline std::map<std::size_t, double> median_fin_by_cell(
    const std::vector<CellRecord>& rows) {
  std::map<std::size_t, std::vector<double>> samples;
  for (const CellRecord& r : rows) {
    if (r.status == "ok") samples[r.cell_index].push_back(r.f_in);
  }
  std::map<std::size_t, double> out;
  for (auto& [cell, v] : samples) out[cell] = median(std::move(v));
  return out;
}

inline void try_linear_fit(CurveFit& curve) {
  std::vector<std::pair<double, double>> points;
  for (std::size_t i = 0; i < curve.xs.size(); ++i) {
    if (!std::isnan(curve.xs[i]) && !std::isnan(curve.ys[i])) {
      points.emplace_back(curve.xs[i], curve.ys[i]);
    }
  }
  if (points.size() < 3) return;
  try {
    const FitResult fit = linear_fit(points);
    curve.fitted = true;
    curve.slope = fit.slope;
    curve.intercept = fit.intercept;
    curve.r_squared = fit.r_squared;
  } catch (const std::exception&) {
    // degenerate abscissas: leave the curve unfitted
  }
}

inline void aggregate(SweepResult& result) {
  const ExperimentConfig& cfg = result.config;
  const auto cells = expand_grid(cfg);
  const auto medians = median_fin_by_cell(result.rows);
  auto median_at = [&](std::size_t cell) {
    const auto it = medians.find(cell);
    return it == medians.end() ? std::numeric_limits<double>::quiet_NaN()
                               : it->second;
  };
  auto cell_of = [&](std::size_t t, std::size_t nb, std::size_t nm,
                     double eps) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (cells[c].target_index == t && cells[c].n_beta == nb &&
          cells[c].n_bases == nm && cells[c].noise == eps) {
        return c;
      }
    }
    throw std::logic_error("cell lookup failed");
  };

  switch (cfg.kind) {
    case ExperimentKind::kNbetaSweep: {
      for (std::size_t t = 0; t < cfg.targets.size(); ++t) {
        for (const std::size_t nm : cfg.n_bases_list) {
          for (const double eps : cfg.noise_list) {
            CurveFit curve;
            curve.label = cfg.targets[t].label();
            if (cfg.noise_list.size() > 1) {
              curve.label += " eps=" + detail::fmt_num(eps);
            }
            for (const std::size_t nb : cfg.n_beta_list) {
              curve.xs.push_back(static_cast<double>(nb));
              curve.ys.push_back(median_at(cell_of(t, nb, nm, eps)));
            }
            result.fits.push_back(std::move(curve));
          }
        }
      }
      break;
    }
    case ExperimentKind::kNmScaling:
    case ExperimentKind::kNoiseSweep: {
      // Median infidelity against 1/sqrt(N_m), one curve per
      // (target, n_beta, noise), each with its own least-squares line.
      for (std::size_t t = 0; t < cfg.targets.size(); ++t) {
        for (const std::size_t nb : cfg.n_beta_list) {
          for (const double eps : cfg.noise_list) {
            CurveFit curve;
            curve.label = cfg.targets[t].label() + " nbeta=" +
                          std::to_string(nb) + " eps=" + detail::fmt_num(eps);
            for (const std::size_t nm : cfg.n_bases_list) {
              curve.xs.push_back(1.0 /
                                 std::sqrt(static_cast<double>(nm)));
              curve.ys.push_back(median_at(cell_of(t, nb, nm, eps)));
            }
            try_linear_fit(curve);
            result.fits.push_back(std::move(curve));
          }
        }
      }
      if (cfg.kind == ExperimentKind::kNoiseSweep) {
        // The headline trend: fitted slope and intercept against the noise
        // level (first target / n_beta combination per noise value).
        CurveFit slopes, intercepts;
        slopes.label = "slope-vs-noise";
        intercepts.label = "intercept-vs-noise";
        std::size_t i = 0;
        for (std::size_t t = 0; t < cfg.targets.size(); ++t) {
          for ([[maybe_unused]] const std::size_t nb : cfg.n_beta_list) {
            for (const double eps : cfg.noise_list) {
              const CurveFit& c = result.fits[i++];
              if (c.fitted) {
                slopes.xs.push_back(eps);
                slopes.ys.push_back(c.slope);
                intercepts.xs.push_back(eps);
                intercepts.ys.push_back(c.intercept);
              }
            }
          }
        }
        if (!slopes.xs.empty()) {
          result.fits.push_back(std::move(slopes));
          result.fits.push_back(std::move(intercepts));
        }
      } else {
        // Mixing-dependence of the scaling slope: ln k against ln S_vN over
        // curves with positive slope and entropy.
        std::map<std::size_t, std::vector<double>> entropies;
        for (const CellRecord& r : result.rows) {
          if (r.status == "ok" && !std::isnan(r.target_entropy)) {
            entropies[r.target_index].push_back(r.target_entropy);
          }
        }
        CurveFit scaling;
        scaling.label = "ln-slope-vs-ln-entropy";
        std::size_t i = 0;
        for (std::size_t t = 0; t < cfg.targets.size(); ++t) {
          for ([[maybe_unused]] const std::size_t nb : cfg.n_beta_list) {
            for ([[maybe_unused]] const double eps : cfg.noise_list) {
              const CurveFit& c = result.fits[i++];
              const auto it = entropies.find(t);
              if (c.fitted && c.slope > 0.0 && it != entropies.end()) {
                const double s = median(it->second);
                if (s > 0.0) {
                  scaling.xs.push_back(std::log(s));
                  scaling.ys.push_back(std::log(c.slope));
                }
              }
            }
          }
        }
        if (scaling.xs.size() >= 3) {
          try_linear_fit(scaling);
          result.fits.push_back(std::move(scaling));
        }
      }
      break;
    }
    case ExperimentKind::kGhzStudy: {
      for (std::size_t t = 0; t < cfg.targets.size(); ++t) {
        for (const double eps : cfg.noise_list) {
          for (const std::size_t nb : cfg.n_beta_list) {
            CurveFit curve;
            curve.label = (nb == 0 ? "pure" : "mixed") + std::string(" eps=") +
                          detail::fmt_num(eps);
            if (cfg.targets.size() > 1) {
              curve.label += " target=" + std::to_string(t);
            }
            for (const std::size_t nm : cfg.n_bases_list) {
              curve.xs.push_back(static_cast<double>(nm));
              curve.ys.push_back(median_at(cell_of(t, nb, nm, eps)));
            }
            result.fits.push_back(std::move(curve));
          }
        }
      }
      break;
    }
    case ExperimentKind::kSingleFit: {
      break;
    }
  }
}

inline std::string utc_tag() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += "\"\"";
    out += c;
  }
  out += '"';
  return out;
}

inline std::string csv_num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Trains every grid cell (targets x n_beta x n_bases x noise x repeats).
// Failures are recorded per row and never abort the sweep. Cells are
// independent jobs executed by `workers` threads; results land in fixed
// slots, so the output is identical for any worker count.
inline SweepResult run(const ExperimentConfig& cfg, std::size_t workers = 1) {
  cfg.validate();
  const auto cells = detail::expand_grid(cfg);
  const bool keep_trajectory = cfg.kind == ExperimentKind::kSingleFit;

  SweepResult result;
  result.config = cfg;
  result.rows.resize(cells.size() * cfg.repeats);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t j = next.fetch_add(1);
      if (j >= result.rows.size()) return;
      const std::size_t cell_index = j / cfg.repeats;
      const std::size_t repeat = j % cfg.repeats;
      const detail::CellCoord& c = cells[cell_index];
      result.rows[j] =
          detail::run_cell(cfg, cell_index, repeat, c.target_index, c.n_beta,
                           c.n_bases, c.noise, keep_trajectory);
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const std::size_t n_threads = std::min(workers, result.rows.size());
    pool.reserve(n_threads);
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  for (const CellRecord& r : result.rows) {
    if (r.status != "ok") result.any_failed = true;
  }
  detail::aggregate(result);

  // Cat-state study: record the +/- basis distribution of the ideal target
  // and of the repeat-0 pure reconstruction of every (n_bases, noise) cell.
  if (cfg.kind == ExperimentKind::kGhzStudy) {
    const DensityMatrix ideal = cfg.targets[0].build(cfg.n_qubits, 0);
    HeatmapRecord ideal_map;
    ideal_map.label = "ideal";
    ideal_map.n_bases = 0;
    ideal_map.noise = 0.0;
    ideal_map.probabilities = plus_minus_distribution(ideal);
    result.heatmaps.push_back(std::move(ideal_map));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (cells[c].n_beta != 0) continue;
      const CellRecord& row = result.rows[c * cfg.repeats];
      if (row.status != "ok") continue;
      // Re-derive the trained model for the recorded seed; rows hold only
      // scalars, and cells are cheap to recompute at desk scale.
      try {
        const auto [model, report] = refit_cell(cfg, row);
        HeatmapRecord map;
        map.label = "pure nm=" + std::to_string(cells[c].n_bases) +
                    " eps=" + detail::fmt_num(cells[c].noise);
        map.n_bases = cells[c].n_bases;
        map.noise = cells[c].noise;
        map.probabilities = plus_minus_distribution(model.to_density_matrix());
        result.heatmaps.push_back(std::move(map));
      } catch (const std::exception&) {
        // the row already records the cell as trainable; map omitted
      }
    }
  }
  return result;
}

// CSV rows hold everything needed to recompute a cell (coordinates + seed)
// plus the scalar results. Wall-clock time is reported in the JSON artifact
// only, keeping CSV bytes identical across reruns of the same config.
inline constexpr const char* kCsvHeader =
    "kind,cell_index,repeat,cell_seed,target,target_purity,target_entropy,"
    "n_qubits,chi,n_beta,n_bases,n_shots,noise,status,message,f_in,final_"
    "loss,epochs";

inline void write_csv(const SweepResult& result,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << kCsvHeader << '\n';
  const std::string kind = kind_to_string(result.config.kind);
  for (const CellRecord& r : result.rows) {
    out << kind << ',' << r.cell_index << ',' << r.repeat << ',' << r.cell_seed
        << ',' << detail::csv_escape(r.target_label) << ','
        << detail::csv_num(r.target_purity) << ','
        << detail::csv_num(r.target_entropy) << ',' << r.n_qubits << ','
        << r.chi << ',' << r.n_beta << ',' << r.n_bases << ',' << r.n_shots
        << ',' << detail::csv_num(r.noise) << ',' << r.status << ','
        << detail::csv_escape(r.message) << ',' << detail::csv_num(r.f_in)
        << ',' << detail::csv_num(r.final_loss) << ',' << r.epochs << '\n';
  }
}

inline void write_fits_csv(const SweepResult& result,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << "label,n_points,fitted,slope,intercept,r_squared\n";
  for (const CurveFit& f : result.fits) {
    out << detail::csv_escape(f.label) << ',' << f.xs.size() << ','
        << (f.fitted ? 1 : 0) << ',' << detail::csv_num(f.slope) << ','
        << detail::csv_num(f.intercept) << ',' << detail::csv_num(f.r_squared)
        << '\n';
  }
}

namespace detail {

inline void write_svg_plots(const SweepResult& result,
                            const std::filesystem::path& base,
                            std::vector<std::filesystem::path>& written) {
  const ExperimentConfig& cfg = result.config;
  const auto main_path = std::filesystem::path(base.string() + ".svg");
  switch (cfg.kind) {
    case ExperimentKind::kNbetaSweep: {
      std::vector<PlotSeries> series;
      for (const CurveFit& f : result.fits) {
        series.push_back({f.label, f.xs, f.ys, true, true});
      }
      if (series.empty()) return;
      write_line_plot(main_path, series,
                      {"infidelity vs purification bonds", "n_beta",
                       "median infidelity"});
      written.push_back(main_path);
      break;
    }
    case ExperimentKind::kNmScaling:
    case ExperimentKind::kNoiseSweep: {
      std::vector<PlotSeries> series;
      for (const CurveFit& f : result.fits) {
        if (f.label == "slope-vs-noise" || f.label == "intercept-vs-noise" ||
            f.label == "ln-slope-vs-ln-entropy") {
          continue;
        }
        series.push_back({f.label, f.xs, f.ys, false, true});
        if (f.fitted) {
          PlotSeries line;
          line.label = "";
          line.markers = false;
          for (const double x : f.xs) {
            line.xs.push_back(x);
            line.ys.push_back(f.intercept + f.slope * x);
          }
          series.push_back(std::move(line));
        }
      }
      if (series.empty()) return;
      write_line_plot(main_path, series,
                      {"infidelity scaling with settings budget",
                       "1/sqrt(n_bases)", "median infidelity"});
      written.push_back(main_path);
      if (cfg.kind == ExperimentKind::kNoiseSweep) {
        std::vector<PlotSeries> trend;
        for (const CurveFit& f : result.fits) {
          if (f.label == "slope-vs-noise" || f.label == "intercept-vs-noise") {
            trend.push_back({f.label, f.xs, f.ys, true, true});
          }
        }
        if (!trend.empty()) {
          const auto p = std::filesystem::path(base.string() + "-trend.svg");
          write_line_plot(p, trend,
                          {"fit coefficients vs depolarizing strength",
                           "noise level", "coefficient"});
          written.push_back(p);
        }
      }
      break;
    }
    case ExperimentKind::kGhzStudy: {
      std::vector<PlotSeries> series;
      for (const CurveFit& f : result.fits) {
        series.push_back({f.label, f.xs, f.ys, true, true});
      }
      if (!series.empty()) {
        write_line_plot(main_path, series,
                        {"cat-state reconstruction quality", "n_bases",
                         "median infidelity"});
        written.push_back(main_path);
      }
      for (std::size_t i = 0; i < result.heatmaps.size(); ++i) {
        const HeatmapRecord& h = result.heatmaps[i];
        const std::size_t n = cfg.n_qubits;
        const std::size_t row_bits = n / 2;
        const std::size_t rows = std::size_t{1} << row_bits;
        const std::size_t cols = (std::size_t{1} << n) / rows;
        std::vector<std::vector<double>> grid(rows,
                                              std::vector<double>(cols, 0.0));
        std::vector<std::string> row_labels(rows), col_labels(cols);
        const std::size_t col_bits = n - row_bits;
        for (std::size_t v = 0; v < h.probabilities.size(); ++v) {
          const std::size_t r = v >> col_bits;
          const std::size_t c = v & (cols - 1);
          grid[r][c] = h.probabilities[v];
        }
        auto pm_string = [](std::size_t bits, std::size_t width) {
          std::string s(width, '+');
          for (std::size_t b = 0; b < width; ++b) {
            if ((bits >> (width - 1 - b)) & 1u) s[b] = '-';
          }
          return s;
        };
        for (std::size_t r = 0; r < rows; ++r) {
          row_labels[r] = pm_string(r, row_bits);
        }
        for (std::size_t c = 0; c < cols; ++c) {
          col_labels[c] = pm_string(c, col_bits);
        }
        const auto p = std::filesystem::path(base.string() + "-heatmap-" +
                                             std::to_string(i) + ".svg");
        write_heatmap(p, grid, row_labels, col_labels,
                      "+/- basis probabilities (" + h.label + ")");
        written.push_back(p);
      }
      break;
    }
    case ExperimentKind::kSingleFit: {
      std::vector<PlotSeries> series;
      for (const CellRecord& r : result.rows) {
        if (r.loss_trajectory.empty()) continue;
        PlotSeries s;
        s.label = "seed " + std::to_string(r.repeat);
        s.markers = false;
        for (std::size_t e = 0; e < r.loss_trajectory.size(); ++e) {
          s.xs.push_back(static_cast<double>(e + 1));
          s.ys.push_back(r.loss_trajectory[e]);
        }
        series.push_back(std::move(s));
      }
      if (series.empty()) return;
      PlotOptions opt{"training loss", "epoch", "loss"};
      opt.log_y = true;
      write_line_plot(main_path, series, opt);
      written.push_back(main_path);
      break;
    }
  }
}

}  // namespace detail

// Writes {kind}-{tag}.{csv,json,svg} (plus per-kind extras) into out_dir.
// When the config carries no tag, file names embed a UTC timestamp; file
// contents never do.
inline std::vector<std::filesystem::path> emit(
    const SweepResult& result, const std::vector<std::string>& formats,
    std::filesystem::path out_dir = {}) {
  if (out_dir.empty()) out_dir = result.config.out_dir;
  std::filesystem::create_directories(out_dir);
  const std::string tag =
      result.config.tag.empty() ? detail::utc_tag() : result.config.tag;
  const std::filesystem::path base =
      out_dir / (kind_to_string(result.config.kind) + "-" + tag);

  std::vector<std::filesystem::path> written;
  for (const std::string& fmt : formats) {
    if (fmt == "csv") {
      const auto p = std::filesystem::path(base.string() + ".csv");
      write_csv(result, p);
      written.push_back(p);
      if (!result.fits.empty()) {
        const auto pf = std::filesystem::path(base.string() + "-fits.csv");
        write_fits_csv(result, pf);
        written.push_back(pf);
      }
    } else if (fmt == "json") {
      const auto p = std::filesystem::path(base.string() + ".json");
      std::ofstream out(p);
      if (!out) {
        throw std::runtime_error("cannot open " + p.string() + " for writing");
      }
      out << result.to_json().dump(2) << '\n';
      written.push_back(p);
    } else if (fmt == "svg") {
      detail::write_svg_plots(result, base, written);
    } else {
      throw std::invalid_argument("unknown output format '" + fmt + "'");
    }
  }
  return written;
}

}  // namespace lpstomo
