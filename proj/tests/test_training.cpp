#include "doctest.h"
#include "helpers.hpp"

#include "hcinr/metrics.hpp"
#include "hcinr/model.hpp"
#include "hcinr/tasks.hpp"
#include "hcinr/training.hpp"
#include "hcinr/verify.hpp"

#include <cmath>
#include <random>

using namespace hcinr;

namespace {

FitTarget bumps16() { return resolve_task("bumps:16:3:0.3:1"); }

TrainConfig short_config(std::size_t steps, std::uint64_t seed) {
  TrainConfig c;
  c.total_steps = steps;
  c.eval_every = 10;
  c.seed = seed;
  return c;
}

void randomize_hypernets(HcInrModel& model, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  for (auto& level : model.warp.levels) {
    level.hyper_out.weight = testing::random_tensor(rng, level.hyper_out.weight.shape(), -scale, scale);
    level.hyper_out.bias = testing::random_tensor(rng, level.hyper_out.bias.shape(), -scale, scale);
  }
}

double loss_on(const HcInrModel& model, const FitTarget& t, const TrainConfig& c) {
  const ModelForward fw = model_forward(model, t.coords, t.features);
  return total_loss(fw.prediction, t.values, model.warp, fw.warp, c).total.item();
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("cosine schedule examples") {
  CHECK(cosine_lr(0, 100, 1e-3) == 1e-3);
  CHECK(cosine_lr(100, 100, 1e-3) == 0.0);
  CHECK(cosine_lr(50, 100, 1e-3) == doctest::Approx(5e-4).epsilon(1e-12));
  double previous = 1.0;
  for (std::size_t s = 0; s <= 100; ++s) {
    const double lr = cosine_lr(s, 100, 1.0);
    CHECK(lr <= previous);
    CHECK(lr >= 0.0);
    previous = lr;
  }
  CHECK_THROWS(cosine_lr(101, 100, 1.0));
}

TEST_CASE("first Adam step moves by the learning rate") {
  for (double g : {3.0, -0.02, 1e3}) {
    Tensor w = Tensor::scalar(1.0);
    AdamState state;
    adam_step({&w}, {Tensor::scalar(g)}, state, 0.01);
    CHECK(std::abs(std::abs(w.item() - 1.0) - 0.01) < 1e-7);
    CHECK((w.item() < 1.0) == (g > 0.0));
  }
}

TEST_CASE("zero gradients leave parameters unchanged") {
  Tensor w = Tensor::vector({0.5, -2.0, 7.0});
  AdamState state;
  for (int k = 0; k < 10; ++k) adam_step({&w}, {Tensor::zeros({3})}, state, 0.1);
  CHECK(w.to_vector() == std::vector<double>{0.5, -2.0, 7.0});
}

TEST_CASE("Adam minimizes a quadratic") {
  Tensor w = Tensor::scalar(0.0);
  AdamState state;
  for (int k = 0; k < 100; ++k) adam_step({&w}, {Tensor::scalar(2.0 * (w.item() - 3.0))}, state, 0.1);
  // Independent recurrence.
  double x = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * (x - 3.0);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.1 * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
  }
  CHECK(w.item() == doctest::Approx(x).epsilon(1e-12));
  CHECK(std::abs(w.item() - 3.0) < 0.05);
  CHECK_THROWS_AS(adam_step({&w}, {Tensor::zeros({2})}, state, 0.1), ShapeError);
}

TEST_CASE("total loss examples at the identity warp") {
  const HcInrModel model = init_model(model_preset("hcinr"), 0);
  std::mt19937_64 rng(1);
  const Tensor x = testing::random_tensor(rng, {8, 2});
  const Tensor f = testing::random_tensor(rng, {8, 3}, 0.0, 1.0);
  const StackForward fw = warp_stack_forward(model.warp, x, f);
  const Tensor y = testing::random_tensor(rng, {8, 1});
  TrainConfig c;
  CHECK(total_loss(y, y, model.warp, fw, c).total.item() == 0.0);
  c.penalty_mode = PenaltyMode::kLiteral;
  WarpStack weighted = model.warp;
  weighted.penalty_weights = c.resolved_lambdas(3);
  CHECK(total_loss(y, y, weighted, fw, c).total.item() == doctest::Approx(6e-3).epsilon(1e-12));
  c.disable_jacobian_reg = true;
  CHECK(total_loss(y, y, weighted, fw, c).total.item() == 0.0);
}

TEST_CASE("total loss equals independently computed mse plus penalty") {
  HcInrModel model = init_model(model_preset("hcinr"), 3);
  randomize_hypernets(model, 3, 0.2);
  model.warp.penalty_weights = {1e-3, 2e-3, 5e-4};
  const FitTarget t = bumps16();
  const ModelForward fw = model_forward(model, t.coords, t.features);
  TrainConfig c;
  const LossTerms terms = total_loss(fw.prediction, t.values, model.warp, fw.warp, c);

  double sse = 0.0;
  for (std::size_t i = 0; i < t.sample_count(); ++i) {
    const double e = fw.prediction.at(i, 0) - t.values.at(i, 0);
    sse += e * e;
  }
  const double mse_ref = sse / static_cast<double>(t.sample_count());

  // Per-level Jacobians from central differences of each level map at its own input.
  const std::size_t n = t.sample_count();
  double penalty_ref = 0.0;
  for (std::size_t l = 0; l < model.warp.levels.size(); ++l) {
    const CoordinateMap level = level_map(model.warp, l, t.features);
    const std::vector<double> in = fw.warp.intermediates[l].to_vector();
    const double h = 1e-6;
    std::vector<Eigen::Matrix2d> jac(n);
    for (std::size_t k = 0; k < 2; ++k) {
      std::vector<double> plus = in, minus = in;
      for (std::size_t b = 0; b < n; ++b) {
        plus[b * 2 + k] += h;
        minus[b * 2 + k] -= h;
      }
      const Tensor tp = level(Tensor::matrix(n, 2, plus));
      const Tensor tm = level(Tensor::matrix(n, 2, minus));
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < 2; ++i) jac[b](i, k) = (tp.at(b, i) - tm.at(b, i)) / (2 * h);
    }
    double acc = 0.0;
    for (const auto& j : jac) acc += (j - Eigen::Matrix2d::Identity()).squaredNorm();
    penalty_ref += model.warp.penalty_weights[l] * acc / static_cast<double>(n);
  }
  CHECK(terms.mse.item() == doctest::Approx(mse_ref).epsilon(1e-12));
  CHECK(std::abs(terms.penalty.item() - penalty_ref) < 1e-9);
  CHECK(terms.total.item() == terms.mse.item() + terms.penalty.item());
  CHECK(terms.penalty.item() > 0.0);
}

TEST_CASE("the fresh model is the decoder alone") {
  const FitTarget t = resolve_task("bundled:texture64");
  const HcInrModel model = init_model(model_preset("hcinr"), 7);
  const Tensor z = warp_stack_apply(model.warp, t.coords, t.features);
  double displacement = 0.0;
  for (std::size_t i = 0; i < z.numel(); ++i) displacement = std::max(displacement, std::abs(z[i] - t.coords[i]));
  CHECK(displacement == 0.0);
  CHECK(model_predict(model, t.coords, t.features).to_vector() == decode(model.decoder, t.coords).to_vector());
}

TEST_CASE("fit is bitwise deterministic and logs consistent records") {
  const FitTarget t = bumps16();
  const TrainConfig c = short_config(30, 5);
  const HcInrModel init = init_model(model_preset("hcinr"), c.seed);
  const FitResult a = fit(t, init, c);
  const FitResult b = fit(t, init, c);
  CHECK(a.history.to_csv() == b.history.to_csv());
  REQUIRE(a.history.records.size() == 4);
  std::size_t previous = 0;
  for (std::size_t i = 0; i < a.history.records.size(); ++i) {
    const MetricsRecord& r = a.history.records[i];
    if (i) CHECK(r.step > previous);
    previous = r.step;
    CHECK(r.loss == r.mse + r.penalty);
    CHECK(r.lr == cosine_lr(r.step, 30, c.learning_rate));
  }
  CHECK(a.history.records.back().step == 30);
  const auto pa = a.model.parameters();
  const auto pb = b.model.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->to_vector() == pb[i]->to_vector());
}

TEST_CASE("without warp and FiLM the trace matches a decoder-only loop") {
  const FitTarget t = bumps16();
  TrainConfig c = short_config(20, 9);
  c.disable_warp = true;
  c.disable_film = true;
  c.learning_rate = 1e-3;
  const HcInrModel model = init_model(apply_ablations(model_preset("hcinr"), c), c.seed);
  const FitResult r = fit(t, model, c);

  Decoder dec = init_decoder(model_preset("hcinr").decoder, derive_seed(c.seed, 0));
  std::mt19937_64 rng(derive_seed(c.seed, 2));
  std::uniform_int_distribution<std::size_t> pick(0, t.sample_count() - 1);
  AdamState adam;
  std::vector<double> losses;
  for (std::size_t step = 0; step <= c.total_steps; ++step) {
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < t.sample_count(); ++k) {
      const std::size_t row = pick(rng);
      xs.push_back(t.coords.at(row, 0));
      xs.push_back(t.coords.at(row, 1));
      ys.push_back(t.values.at(row, 0));
    }
    Tape tape;
    Decoder bound = dec;
    std::vector<Tensor*> params;
    for (auto& layer : bound.layers) {
      layer.weight = tape.watch(layer.weight);
      layer.bias = tape.watch(layer.bias);
    }
    const Tensor loss = ad::mse(decode(bound, Tensor::matrix(xs.size() / 2, 2, xs)), Tensor::matrix(ys.size(), 1, ys));
    const Gradients g = tape.backward(loss);
    std::vector<Tensor> grads;
    for (auto& layer : bound.layers) {
      grads.push_back(g.of(layer.weight));
      grads.push_back(g.of(layer.bias));
    }
    for (auto& layer : dec.layers) {
      params.push_back(&layer.weight);
      params.push_back(&layer.bias);
    }
    if (step % c.eval_every == 0 || step == c.total_steps) losses.push_back(loss.item());
    if (step == c.total_steps) break;
    adam_step(params, grads, adam, cosine_lr(step, c.total_steps, c.learning_rate));
  }
  REQUIRE(losses.size() == r.history.records.size());
  for (std::size_t i = 0; i < losses.size(); ++i) CHECK(r.history.records[i].loss == losses[i]);
  for (std::size_t l = 0; l < dec.layers.size(); ++l)
    CHECK(dec.layers[l].weight.to_vector() == r.model.decoder.layers[l].weight.to_vector());
}

TEST_CASE("smoke run on a small bump image reduces the loss fourfold") {
  const FitTarget t = bumps16();
  TrainConfig c = short_config(200, 0);
  c.eval_every = 200;
  const FitResult r = fit(t, init_model(model_preset("hcinr"), 0), c);
  REQUIRE(r.history.records.size() == 2);
  CHECK(r.history.records.back().loss < 0.25 * r.history.records.front().loss);
}

TEST_CASE("hypernetwork parameters receive gradient") {
  const FitTarget t = bumps16();
  HcInrModel model = init_model(model_preset("hcinr"), 2);
  Tape tape;
  for (Tensor* p : model.parameters()) *p = tape.watch(*p);
  TrainConfig c;
  model.warp.penalty_weights = c.resolved_lambdas(3);
  const ModelForward fw = model_forward(model, t.coords, t.features);
  const Gradients g = tape.backward(total_loss(fw.prediction, t.values, model.warp, fw.warp, c).total);
  for (const auto& level : model.warp.levels) {
    CHECK(g.reached(level.hyper_out.weight));
    double norm = 0.0;
    const Tensor grad = g.of(level.hyper_out.weight);
    for (double v : grad.values()) norm += v * v;
    CHECK(norm > 0.0);
  }
}

TEST_CASE("end-to-end loss gradient matches central differences") {
  const FitTarget t = bumps16();
  TrainConfig c;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    HcInrModel model = init_model(model_preset("hcinr"), seed);
    randomize_hypernets(model, seed + 100, 0.1);
    model.warp.penalty_weights = c.resolved_lambdas(3);

    HcInrModel bound = model;
    Tape tape;
    for (Tensor* p : bound.parameters()) *p = tape.watch(*p);
    const ModelForward fw = model_forward(bound, t.coords, t.features);
    const Gradients g = tape.backward(total_loss(fw.prediction, t.values, bound.warp, fw.warp, c).total);

    const auto params = model.parameters();
    const auto watched = bound.parameters();
    std::mt19937_64 rng(seed);
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
      const std::size_t which = std::uniform_int_distribution<std::size_t>(0, params.size() - 1)(rng);
      const std::size_t entry = std::uniform_int_distribution<std::size_t>(0, params[which]->numel() - 1)(rng);
      const double analytic = g.of(*watched[which])[entry];
      const double h = 1e-5;
      auto shifted = [&](double delta) {
        HcInrModel m = model;
        std::vector<double> v = m.parameters()[which]->to_vector();
        v[entry] += delta;
        *m.parameters()[which] = Tensor(params[which]->shape(), v);
        return loss_on(m, t, c);
      };
      const double numeric = (shifted(h) - shifted(-h)) / (2 * h);
      const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      worst = std::max(worst, err);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  FitTarget t = bumps16();
  std::vector<double> v = t.values.to_vector();
  v[3] = std::numeric_limits<double>::quiet_NaN();
  t.values = Tensor(t.values.shape(), v);
  try {
    fit(t, init_model(model_preset("hcinr"), 0), short_config(5, 0));
    FAIL("expected NonFiniteLossError");
  } catch (const NonFiniteLossError& e) {
    CHECK(e.step == 0);
    CHECK(std::string(e.what()).find("step 0") != std::string::npos);
  }
}

TEST_CASE("configuration validation") {
  TrainConfig c;
  c.learning_rate = 0.0;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.total_steps = 0;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.level_lambdas = {1e-3, 1e-3};
  CHECK_THROWS(c.resolved_lambdas(3));
  CHECK(train_config_from_json(to_json(TrainConfig{})).total_steps == TrainConfig{}.total_steps);
  CHECK_THROWS(fit(resolve_task("bundled:texture64"), init_model(model_preset("hcinr"), 0), [] {
    TrainConfig d;
    d.disable_warp = true;
    return d;
  }()));
}

TEST_CASE("checkpoints round trip bitwise") {
  const auto dir = testing::scratch_dir("checkpoint");
  HcInrModel model = init_model(model_preset("hcinr"), 4);
  randomize_hypernets(model, 4, 0.3);
  save_checkpoint(model, 4, {{"note", "x"}}, (dir / "c.bin").string());
  const Checkpoint back = load_checkpoint((dir / "c.bin").string());
  CHECK(back.seed == 4);
  CHECK(back.model.parameter_names() == model.parameter_names());
  const auto a = model.parameters();
  const auto b = back.model.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->to_vector() == b[i]->to_vector());
  const FitTarget t = bumps16();
  CHECK(model_predict(model, t.coords, t.features).to_vector() ==
        model_predict(back.model, t.coords, t.features).to_vector());
  CHECK_THROWS(load_checkpoint((dir / "missing.bin").string()));
}

TEST_CASE("preset parameter budgets") {
  const std::size_t hc = init_model(model_preset("hcinr"), 0).parameter_count();
  const std::size_t siren = init_model(model_preset("siren"), 0).parameter_count();
  CHECK(static_cast<double>(hc) <= 0.6 * static_cast<double>(siren));
  CHECK_THROWS(model_preset("transformer"));
}

}  // TEST_SUITE
