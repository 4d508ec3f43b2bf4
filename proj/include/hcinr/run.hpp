#pragma once

// Run configuration shared by the command-line tool and the acceptance
// driver: resolution of presets, config files and overrides, plus the
// artifact-writing entry points behind each subcommand.

#include "hcinr/model.hpp"
#include "hcinr/training.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace hcinr {

struct RunConfig {
  std::string command = "fit";
  std::string task = "bundled:texture64";
  std::string model_preset = "hcinr";
  ModelConfig model;  // after ablations
  TrainConfig train;
  std::string out = "run";
  bool dump_features = false;
  std::vector<std::uint64_t> seeds = {0, 1, 2};  // ablate
  std::string checkpoint;                        // eval / verify / export-warp / spectra
  std::optional<std::vector<double>> matrix;     // fixture warp, row-major d x d
};

nlohmann::json to_json(const RunConfig& config);

// Flag-level overrides; unset fields leave the config file or preset alone.
struct RunOverrides {
  std::optional<std::string> task;
  std::optional<std::string> model_preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::optional<double> lambda_jac;
  std::optional<std::string> penalty_mode;
  std::vector<std::string> ablate;
  std::optional<std::string> out;
  bool dump_features = false;
  bool linear_warp = false;
  std::optional<std::size_t> seed_count;
  std::optional<std::string> checkpoint;
  std::optional<std::vector<double>> matrix;
  std::optional<double> learning_rate;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> eval_every;
};

// Preset defaults, then the JSON document (if any), then the overrides.
RunConfig resolve_run_config(const std::string& command, const nlohmann::json& file, const RunOverrides& flags);

// Applies one of no-warp | no-film | no-jac-reg to a training config.
void apply_ablation_flag(TrainConfig& train, const std::string& flag);

struct FitOutcome {
  FitTarget target;
  FitResult result;
  nlohmann::json summary;
};

// Trains and writes config.json, metrics.csv, checkpoint.bin, the
// reconstruction and summary.json into config.out.
FitOutcome run_fit(const RunConfig& config, bool verbose);
int run_eval(const RunConfig& config);
int run_verify(const RunConfig& config);
int run_ablate(const RunConfig& config, bool verbose);
int run_export_warp(const RunConfig& config);
int run_spectra(const RunConfig& config);

// Deformed lattice: `lines` input grid lines per axis over [-1,1]^2 traced
// through `map` and drawn into a size x size raster covering [-W, W]^2 with
// W = max(1, max |T(x)|).
Image render_warp_grid(const CoordinateMap& map, std::size_t size = 256, std::size_t lines = 17);

// Linear-mode single-level warp x -> A x for fixtures.
HcInrModel fixture_model(const std::vector<double>& matrix);

}  // namespace hcinr
