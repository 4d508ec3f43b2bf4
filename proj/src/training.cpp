#include "hcinr/training.hpp"

#include "hcinr/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

namespace hcinr {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
  if (total_steps < 1) throw std::invalid_argument("train: total steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
  if (eval_every < 1) throw std::invalid_argument("train: eval-every must be >= 1");
  if (!(lambda_jac >= 0.0)) throw std::invalid_argument("train: lambda_jac must be >= 0");
  for (double l : level_lambdas)
    if (!(l >= 0.0)) throw std::invalid_argument("train: per-level lambdas must be >= 0");
}

std::vector<double> TrainConfig::resolved_lambdas(std::size_t levels) const {
  if (level_lambdas.empty()) return std::vector<double>(levels, lambda_jac);
  if (level_lambdas.size() != levels)
    throw std::invalid_argument("train: " + std::to_string(level_lambdas.size()) + " per-level lambdas for " +
                                std::to_string(levels) + " warp levels");
  return level_lambdas;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"total_steps", c.total_steps},
          {"lambda_jac", c.lambda_jac},
          {"level_lambdas", c.level_lambdas},
          {"penalty_mode", to_string(c.penalty_mode)},
          {"seed", c.seed},
          {"disable_warp", c.disable_warp},
          {"disable_film", c.disable_film},
          {"disable_jacobian_reg", c.disable_jacobian_reg},
          {"eval_every", c.eval_every}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.total_steps = j.value("total_steps", c.total_steps);
  c.lambda_jac = j.value("lambda_jac", c.lambda_jac);
  c.level_lambdas = j.value("level_lambdas", c.level_lambdas);
  c.penalty_mode = penalty_mode_from_string(j.value("penalty_mode", to_string(c.penalty_mode)));
  c.seed = j.value("seed", c.seed);
  c.disable_warp = j.value("disable_warp", c.disable_warp);
  c.disable_film = j.value("disable_film", c.disable_film);
  c.disable_jacobian_reg = j.value("disable_jacobian_reg", c.disable_jacobian_reg);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.validate();
  return c;
}

ModelConfig apply_ablations(ModelConfig model, const TrainConfig& train) {
  if (train.disable_warp) {
    model.warp_levels = 0;
    model.amplitudes.clear();
    model.film = false;
  }
  if (train.disable_film) model.film = false;
  return model;
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
  if (total_steps == 0 || step > total_steps)
    throw std::invalid_argument("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                                std::to_string(total_steps) + "]");
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return std::max(0.0, base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t)));
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state, double lr,
               const AdamHyper& hyper) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->numel(), 0.0);
      state.v.emplace_back(p->numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state does not match parameters");
  ++state.t;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    if (grads[i].shape() != p.shape())
      throw ShapeError("adam_step: gradient " + shape_string(grads[i].shape()) + " for parameter " +
                       shape_string(p.shape()));
    const auto g = grads[i].values();
    const auto w = p.values();
    std::vector<double> next(w.begin(), w.end());
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < next.size(); ++k) {
      m[k] = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * g[k];
      v[k] = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * g[k] * g[k];
      next[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + hyper.eps);
    }
    p = Tensor(p.shape(), std::move(next));
  }
}

LossTerms total_loss(const Tensor& pred, const Tensor& target, const WarpStack& warp, const StackForward& forward,
                     const TrainConfig& config) {
  if (pred.shape() != target.shape())
    throw ShapeError("total_loss: prediction " + shape_string(pred.shape()) + " vs target " +
                     shape_string(target.shape()));
  LossTerms t;
  t.mse = ad::mse(pred, target);
  if (config.disable_jacobian_reg || config.disable_warp || warp.levels.empty())
    t.penalty = Tensor::scalar(0.0);
  else
    t.penalty = jacobian_penalty(warp, forward, config.penalty_mode);
  t.total = ad::add(t.mse, t.penalty);
  return t;
}

std::string MetricsHistory::to_csv() const {
  std::ostringstream out;
  out << "step,loss,mse,penalty,psnr,ssim,l_jac,folding_fraction,lr\n";
  for (const auto& r : records) {
    out << r.step << ',' << format_metric(r.loss) << ',' << format_metric(r.mse) << ',' << format_metric(r.penalty)
        << ',' << format_metric(r.psnr) << ',' << format_metric(r.ssim) << ',' << format_metric(r.jacobian) << ','
        << format_metric(r.folding) << ',' << format_metric(r.lr) << '\n';
  }
  return out.str();
}

void MetricsHistory::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_csv();
}

NonFiniteLossError::NonFiniteLossError(std::size_t s, double l, double g)
    : std::runtime_error("non-finite loss at step " + std::to_string(s) + ": loss = " + format_metric(l) +
                         ", max |grad| = " + format_metric(g)),
      step(s),
      loss(l),
      max_grad(g) {}

namespace {

constexpr std::size_t kEvalChunk = 1024;

Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
  const std::size_t c = t.cols();
  const auto v = t.values();
  std::vector<double> out(rows.size() * c);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(rows[i] * c), c, out.begin() + static_cast<std::ptrdiff_t>(i * c));
  return Tensor({rows.size(), c}, std::move(out));
}

Tensor row_range(const Tensor& t, std::size_t begin, std::size_t count) {
  const std::size_t c = t.cols();
  const auto v = t.values();
  return Tensor({count, c}, std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                                v.begin() + static_cast<std::ptrdiff_t>((begin + count) * c)));
}

// Runs fn(chunk index) for every chunk on up to evaluation_threads() threads.
template <typename Fn>
void for_each_chunk(std::size_t chunks, Fn fn) {
  const std::size_t workers = std::min(evaluation_threads(), chunks);
  if (workers <= 1) {
    for (std::size_t c = 0; c < chunks; ++c) fn(c);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t c = w; c < chunks; c += workers) fn(c);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct WarpChunkStats {
  double jacobian = 0.0;  // sum over samples of the per-level terms
  std::size_t folded = 0;
};

WarpChunkStats warp_chunk_stats(const WarpStack& stack, const Tensor& coords, const Tensor& features,
                                PenaltyMode mode) {
  WarpChunkStats s;
  const StackForward fw = warp_stack_forward(stack, coords, features);
  const std::size_t n = coords.rows();
  const auto d = static_cast<Eigen::Index>(stack.dim);
  std::vector<Eigen::MatrixXd> composite(n, Eigen::MatrixXd::Identity(d, d));
  for (std::size_t l = 0; l < stack.levels.size(); ++l) {
    const std::vector<Tensor> rows = level_jacobian_deviation(stack.levels[l], fw.params[l], fw.evals[l]);
    for (std::size_t b = 0; b < n; ++b) {
      Eigen::MatrixXd j = Eigen::MatrixXd::Identity(d, d);
      for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index k = 0; k < d; ++k) j(i, k) += rows[static_cast<std::size_t>(i)].at(b, static_cast<std::size_t>(k));
      const Eigen::MatrixXd term = mode == PenaltyMode::kDeviation ? Eigen::MatrixXd(j - Eigen::MatrixXd::Identity(d, d)) : j;
      s.jacobian += term.squaredNorm();
      composite[b] = j * composite[b];
    }
  }
  for (const auto& j : composite)
    if (j.determinant() <= 0.0) ++s.folded;
  return s;
}

}  // namespace

std::size_t evaluation_threads() {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("HCINR_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) n = std::min(n, static_cast<std::size_t>(v));
  }
  return n;
}

Tensor predict_samples(const HcInrModel& model, const Tensor& coords, const Tensor& features) {
  const std::size_t n = coords.rows();
  const std::size_t out_dim = model.decoder.config.output_dim;
  std::vector<double> out(n * out_dim);
  const std::size_t chunks = (n + kEvalChunk - 1) / kEvalChunk;
  for_each_chunk(chunks, [&](std::size_t c) {
    const std::size_t begin = c * kEvalChunk;
    const std::size_t count = std::min(kEvalChunk, n - begin);
    const Tensor pred = model_predict(model, row_range(coords, begin, count).detach(),
                                      row_range(features, begin, count).detach());
    const auto v = pred.values();
    std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(begin * out_dim));
  });
  return Tensor({n, out_dim}, std::move(out));
}

Tensor predict_grid(const HcInrModel& model, const FitTarget& target) {
  return predict_samples(model, row_range(target.coords, 0, target.grid_size()),
                         row_range(target.features, 0, target.grid_size()));
}

GridMetrics evaluate(const HcInrModel& model, const FitTarget& target, PenaltyMode mode) {
  GridMetrics m;
  const Tensor pred = predict_grid(model, target);
  const Tensor truth = row_range(target.values, 0, target.grid_size());
  m.psnr = psnr(pred.values(), truth.values());
  if (target.is_sdf) {
    m.ssim = std::numeric_limits<double>::quiet_NaN();
  } else {
    m.ssim = ssim(target.grid_image(pred), target.grid_image(truth));
  }
  const std::size_t n = target.grid_size();
  if (!model.warp.levels.empty()) {
    const std::size_t chunks = (n + kEvalChunk - 1) / kEvalChunk;
    std::vector<WarpChunkStats> stats(chunks);
    for_each_chunk(chunks, [&](std::size_t c) {
      const std::size_t begin = c * kEvalChunk;
      const std::size_t count = std::min(kEvalChunk, n - begin);
      stats[c] = warp_chunk_stats(model.warp, row_range(target.coords, begin, count),
                                  row_range(target.features, begin, count), mode);
    });
    double jac = 0.0;
    std::size_t folded = 0;
    for (const auto& s : stats) {
      jac += s.jacobian;
      folded += s.folded;
    }
    m.jacobian = jac / static_cast<double>(n);
    m.folding = static_cast<double>(folded) / static_cast<double>(n);
  }
  return m;
}

CoordinateMap model_warp_map(const HcInrModel& model, const FeaturePyramid& pyramid) {
  const WarpStack* stack = &model.warp;
  const FeaturePyramid* pyr = &pyramid;
  return [stack, pyr](const Tensor& x) {
    if (stack->levels.empty()) return ad::add(x, Tensor::zeros(x.shape()));
    return warp_stack_apply(*stack, x, local_features(*pyr, x.detach()));
  };
}

FitResult fit(const FitTarget& target, HcInrModel model, const TrainConfig& config, const FitObserver& observer) {
  config.validate();
  if (model.decoder.config.input_dim != 2 || model.decoder.config.output_dim != target.channels)
    throw std::invalid_argument("fit: model maps 2D coordinates to " +
                                std::to_string(model.decoder.config.output_dim) + " channels but the task has " +
                                std::to_string(target.channels));
  if (!model.warp.levels.empty() && model.config.feature_dim != target.features.cols())
    throw std::invalid_argument("fit: model expects " + std::to_string(model.config.feature_dim) +
                                " features, task provides " + std::to_string(target.features.cols()));
  if (config.disable_warp && !model.warp.levels.empty())
    throw std::invalid_argument("fit: warp disabled but the model has warp levels; apply the ablations first");
  model.warp.penalty_weights = config.resolved_lambdas(model.warp.levels.size());

  const std::size_t n = target.sample_count();
  const std::size_t batch = std::min(config.batch_size, n);
  std::mt19937_64 rng(derive_seed(config.seed, 2));
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> rows(batch);

  FitResult result;
  AdamState adam;
  for (std::size_t step = 0; step <= config.total_steps; ++step) {
    for (auto& r : rows) r = pick(rng);
    const Tensor coords = gather_rows(target.coords, rows);
    const Tensor values = gather_rows(target.values, rows);
    const Tensor features = gather_rows(target.features, rows);

    Tape tape;
    HcInrModel bound = model;
    for (Tensor* p : bound.parameters()) *p = tape.watch(*p);
    const ModelForward fw = model_forward(bound, coords, features);
    const LossTerms loss = total_loss(fw.prediction, values, bound.warp, fw.warp, config);
    const Gradients grads = tape.backward(loss.total);

    std::vector<Tensor> g;
    double max_grad = 0.0;
    for (Tensor* p : bound.parameters()) {
      g.push_back(grads.of(*p));
      for (double v : g.back().values()) max_grad = std::max(max_grad, std::abs(v));
    }
    const double loss_value = loss.total.item();
    if (!std::isfinite(loss_value) || !std::isfinite(max_grad)) throw NonFiniteLossError(step, loss_value, max_grad);

    const double lr = cosine_lr(step, config.total_steps, config.learning_rate);
    if (step % config.eval_every == 0 || step == config.total_steps) {
      const GridMetrics gm = evaluate(model, target, config.penalty_mode);
      MetricsRecord rec;
      rec.step = step;
      rec.loss = loss_value;
      rec.mse = loss.mse.item();
      rec.penalty = loss.penalty.item();
      rec.psnr = gm.psnr;
      rec.ssim = gm.ssim;
      rec.jacobian = gm.jacobian;
      rec.folding = gm.folding;
      rec.lr = lr;
      result.history.records.push_back(rec);
      if (observer) observer(rec);
    }
    if (step == config.total_steps) break;
    adam_step(model.parameters(), g, adam, lr);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace hcinr
