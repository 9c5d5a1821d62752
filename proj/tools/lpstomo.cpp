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

// Command-line front end for the tomography experiment harness.
//
// Exit codes: 0 success, 1 at least one sweep cell failed, 2 bad usage or
// invalid configuration.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lpstomo/experiment.hpp"

namespace {

std::vector<std::string> split_formats(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw std::invalid_argument("no output formats given");
  return out;
}

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string formats = "csv,json,svg";
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::size_t workers = 1;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config file")
      ->required();
  cmd->add_option("--out-dir", args.out_dir,
                  "output directory (overrides the config)");
  cmd->add_option("--formats", args.formats,
                  "comma-separated output formats: csv,json,svg");
  cmd->add_option("--seed", args.seed, "master seed (overrides the config)")
      ->each([&](const std::string&) { args.seed_set = true; });
  cmd->add_option("--workers", args.workers, "worker threads for grid cells")
      ->check(CLI::Range(std::size_t{1}, std::size_t{64}));
}

int run_sweep(const CommonArgs& args,
              std::optional<lpstomo::ExperimentKind> required_kind) {
  lpstomo::ExperimentConfig cfg;
  try {
    cfg = lpstomo::ExperimentConfig::load(args.config_path);
    if (args.seed_set) cfg.seed = args.seed;
    if (required_kind && cfg.kind != *required_kind) {
      std::cerr << "error: config kind is '"
                << lpstomo::kind_to_string(cfg.kind) << "', expected '"
                << lpstomo::kind_to_string(*required_kind) << "'\n";
      return 2;
    }
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }

  const lpstomo::SweepResult result = lpstomo::run(cfg, args.workers);
  const auto files =
      lpstomo::emit(result, split_formats(args.formats),
                    args.out_dir.empty() ? std::filesystem::path{}
                                         : std::filesystem::path(args.out_dir));
  for (const auto& f : files) std::cout << f.string() << '\n';

  if (required_kind == lpstomo::ExperimentKind::kSingleFit &&
      !result.rows.empty() && result.rows.front().status == "ok") {
    // Retrain the first cell from its recorded seed and keep the model.
    const auto [model, report] = refit_cell(cfg, result.rows.front());
    const std::filesystem::path dir =
        args.out_dir.empty() ? cfg.out_dir : std::filesystem::path(args.out_dir);
    const std::string tag =
        cfg.tag.empty() ? "model" : cfg.tag;
    const auto model_path = dir / ("single-fit-" + tag + "-model.json");
    model.save(model_path);
    std::cout << model_path.string() << '\n';
  }

  std::size_t failed = 0;
  for (const auto& row : result.rows) {
    if (row.status != "ok") {
      ++failed;
      std::cerr << "cell " << row.cell_index << " repeat " << row.repeat
                << " failed: " << row.message << '\n';
    }
  }
  std::cerr << result.rows.size() - failed << "/" << result.rows.size()
            << " cells succeeded\n";
  return result.any_failed ? 1 : 0;
}

int re_emit(const std::string& result_path, const std::string& formats,
            const std::string& out_dir) {
  lpstomo::SweepResult result;
  try {
    result = lpstomo::SweepResult::load(result_path);
  } catch (const std::exception& e) {
    std::cerr << "result error: " << e.what() << '\n';
    return 2;
  }
  const auto files =
      lpstomo::emit(result, split_formats(formats),
                    out_dir.empty() ? std::filesystem::path{}
                                    : std::filesystem::path(out_dir));
  for (const auto& f : files) std::cout << f.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "lpstomo: mixed-state tomography with locally purified tensor "
      "networks trained on Pauli-basis measurement records"};
  app.require_subcommand(1);

  CommonArgs run_args, ghz_args, fit_args;
  std::string result_path, emit_formats = "csv,json,svg", emit_out_dir;

  CLI::App* run_cmd =
      app.add_subcommand("run", "execute the sweep described by a config");
  add_common(run_cmd, run_args);

  CLI::App* ghz_cmd = app.add_subcommand(
      "ghz", "cat-state study: pure vs fully mixed model on noisy data");
  add_common(ghz_cmd, ghz_args);

  CLI::App* fit_cmd = app.add_subcommand(
      "fit-one", "train a single cell and save the model checkpoint");
  add_common(fit_cmd, fit_args);

  CLI::App* emit_cmd = app.add_subcommand(
      "emit", "regenerate artifacts from a stored result JSON");
  emit_cmd->add_option("--result", result_path, "sweep result JSON file")
      ->required();
  emit_cmd->add_option("--formats", emit_formats,
                       "comma-separated output formats: csv,json,svg");
  emit_cmd->add_option("--out-dir", emit_out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run_cmd->parsed()) return run_sweep(run_args, std::nullopt);
    if (ghz_cmd->parsed()) {
      return run_sweep(ghz_args, lpstomo::ExperimentKind::kGhzStudy);
    }
    if (fit_cmd->parsed()) {
      return run_sweep(fit_args, lpstomo::ExperimentKind::kSingleFit);
    }
    if (emit_cmd->parsed()) {
      return re_emit(result_path, emit_formats, emit_out_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
