#pragma once

#include "hcinr/model.hpp"
#include "hcinr/tasks.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace hcinr {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 4096;
  std::size_t total_steps = 2000;
  double lambda_jac = 1e-3;
  std::vector<double> level_lambdas;  // empty: lambda_jac at every level
  PenaltyMode penalty_mode = PenaltyMode::kDeviation;
  std::uint64_t seed = 0;
  bool disable_warp = false;
  bool disable_film = false;
  bool disable_jacobian_reg = false;
  std::size_t eval_every = 100;

  void validate() const;
  std::vector<double> resolved_lambdas(std::size_t levels) const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Model configuration after the ablation switches: no warp removes every
// level (and with it the FiLM path), no FiLM keeps the warp but drops the
// modulation outputs.
ModelConfig apply_ablations(ModelConfig model, const TrainConfig& train);

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t t = 0;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Updates each parameter in place. State buffers are created on first use.
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state, double lr,
               const AdamHyper& hyper = {});

struct LossTerms {
  Tensor total;
  Tensor mse;
  Tensor penalty;
};

LossTerms total_loss(const Tensor& pred, const Tensor& target, const WarpStack& warp, const StackForward& forward,
                     const TrainConfig& config);

struct MetricsRecord {
  std::size_t step = 0;
  double loss = 0.0;     // batch loss = mse + penalty
  double mse = 0.0;
  double penalty = 0.0;
  double psnr = 0.0;     // full grid
  double ssim = 0.0;     // full grid, images only (NaN for SDF tasks)
  double jacobian = 0.0;  // unweighted sum over levels of the mean per-level penalty term, full grid
  double folding = 0.0;   // fraction of grid points with det J <= 0
  double lr = 0.0;
};

struct MetricsHistory {
  std::vector<MetricsRecord> records;

  std::string to_csv() const;
  void write_csv(const std::string& path) const;
};

class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(std::size_t step, double loss, double max_grad);
  std::size_t step;
  double loss;
  double max_grad;
};

struct FitResult {
  HcInrModel model;
  MetricsHistory history;
};

// Per-record hook, e.g. for progress output.
using FitObserver = std::function<void(const MetricsRecord&)>;

// `model` must already reflect apply_ablations(model config, config).
FitResult fit(const FitTarget& target, HcInrModel model, const TrainConfig& config,
              const FitObserver& observer = {});

// Full-grid evaluation, chunked with a fixed chunk size and run on up to
// HCINR_THREADS threads; results do not depend on the thread count.
Tensor predict_samples(const HcInrModel& model, const Tensor& coords, const Tensor& features);
Tensor predict_grid(const HcInrModel& model, const FitTarget& target);
std::size_t evaluation_threads();

struct GridMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
  double jacobian = 0.0;
  double folding = 0.0;
};
GridMetrics evaluate(const HcInrModel& model, const FitTarget& target, PenaltyMode mode);

// The model's warp as a coordinate map, with conditioning looked up from the
// target's feature pyramid at the original coordinates.
CoordinateMap model_warp_map(const HcInrModel& model, const FeaturePyramid& pyramid);

}  // namespace hcinr
