#include "hcinr/run.hpp"

#include "hcinr/metrics.hpp"
#include "hcinr/spectral.hpp"
#include "hcinr/verify.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace hcinr {

namespace fs = std::filesystem;

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = {{"command", c.command},
                      {"task", c.task},
                      {"model_preset", c.model_preset},
                      {"model", to_json(c.model)},
                      {"train", to_json(c.train)},
                      {"out", c.out},
                      {"exports", {{"dump_features", c.dump_features}}},
                      {"seeds", c.seeds},
                      {"checkpoint", c.checkpoint}};
  if (c.matrix) j["matrix"] = *c.matrix;
  return j;
}

void apply_ablation_flag(TrainConfig& train, const std::string& flag) {
  if (flag == "no-warp")
    train.disable_warp = true;
  else if (flag == "no-film")
    train.disable_film = true;
  else if (flag == "no-jac-reg")
    train.disable_jacobian_reg = true;
  else
    throw std::invalid_argument("unknown ablation '" + flag + "' (expected no-warp|no-film|no-jac-reg)");
}

RunConfig resolve_run_config(const std::string& command, const nlohmann::json& file, const RunOverrides& flags) {
  RunConfig c;
  c.command = command;
  c.task = file.value("task", c.task);
  c.model_preset = file.value("model_preset", c.model_preset);
  if (flags.task) c.task = *flags.task;
  if (flags.model_preset) c.model_preset = *flags.model_preset;

  nlohmann::json model = to_json(model_preset(c.model_preset));
  if (file.contains("model")) model.merge_patch(file.at("model"));
  nlohmann::json train = to_json(TrainConfig{});
  if (file.contains("train")) train.merge_patch(file.at("train"));
  if (flags.seed) train["seed"] = *flags.seed;
  if (flags.steps) train["total_steps"] = *flags.steps;
  if (flags.lambda_jac) train["lambda_jac"] = *flags.lambda_jac;
  if (flags.penalty_mode) train["penalty_mode"] = *flags.penalty_mode;
  if (flags.learning_rate) train["learning_rate"] = *flags.learning_rate;
  if (flags.batch_size) train["batch_size"] = *flags.batch_size;
  if (flags.eval_every) train["eval_every"] = *flags.eval_every;
  if (flags.linear_warp) model["displacement"] = "linear";

  c.train = train_config_from_json(train);
  for (const auto& a : flags.ablate) apply_ablation_flag(c.train, a);
  c.model = apply_ablations(model_config_from_json(model), c.train);

  c.out = file.value("out", c.out);
  if (flags.out) c.out = *flags.out;
  if (file.contains("exports")) c.dump_features = file.at("exports").value("dump_features", false);
  if (flags.dump_features) c.dump_features = true;
  if (file.contains("seeds")) c.seeds = file.at("seeds").get<std::vector<std::uint64_t>>();
  if (flags.seed_count) {
    c.seeds.clear();
    const std::uint64_t base = flags.seed.value_or(0);
    for (std::size_t i = 0; i < *flags.seed_count; ++i) c.seeds.push_back(base + i);
  } else if (flags.seed) {
    c.seeds = {*flags.seed};
  }
  c.checkpoint = file.value("checkpoint", c.checkpoint);
  if (flags.checkpoint) c.checkpoint = *flags.checkpoint;
  if (file.contains("matrix") && !file.at("matrix").is_null()) c.matrix = file.at("matrix").get<std::vector<double>>();
  if (flags.matrix) c.matrix = flags.matrix;
  if (c.matrix && c.matrix->size() != 4)
    throw std::invalid_argument("--matrix expects 4 comma-separated values (row-major 2x2)");
  return c;
}

namespace {

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

nlohmann::json metric_json(double v) {
  if (std::isfinite(v)) return v;
  return format_metric(v);
}

fs::path prepare_out(const RunConfig& config) {
  const fs::path out(config.out);
  fs::create_directories(out);
  write_json(to_json(config), out / "config.json");
  return out;
}

HcInrModel model_for(const RunConfig& config, const FitTarget& target, std::uint64_t seed) {
  ModelConfig mc = config.model;
  mc.decoder.output_dim = target.channels;
  mc.feature_dim = target.features.cols();
  return init_model(mc, seed);
}

nlohmann::json sdf_metrics(const HcInrModel& model, const FitTarget& target, const fs::path* out) {
  const ScalarField field = [&](const Tensor& x) {
    return model_predict(model, x, local_features(target.pyramid, x.detach()));
  };
  nlohmann::json j;
  j["chamfer_convention"] = "0.5 * (mean squared nearest distance a->b + b->a)";
  try {
    j["chamfer"] = chamfer_2d(
        [&](const Tensor& x) { return predict_samples(model, x, local_features(target.pyramid, x)); },
        target.shape, 128);
  } catch (const std::invalid_argument& e) {
    j["chamfer"] = "inf";
    j["chamfer_error"] = e.what();
  }
  j["eikonal_residual"] = eikonal_residual(field, pixel_grid(64, 64));
  if (out) {
    const Tensor lattice = lattice_points(2, 128);
    std::vector<double> swapped(lattice.numel());
    for (std::size_t p = 0; p < lattice.rows(); ++p) {
      swapped[2 * p] = lattice[2 * p + 1];
      swapped[2 * p + 1] = lattice[2 * p];
    }
    const Tensor pts = Tensor::matrix(lattice.rows(), 2, swapped);
    const Tensor pred = predict_samples(model, pts, local_features(target.pyramid, pts));
    write_points_csv(zero_level_set(pred.to_vector(), 128), (*out / "zero_set_pred.csv").string());
    std::vector<double> exact(pts.rows());
    for (std::size_t p = 0; p < pts.rows(); ++p) exact[p] = analytic_sdf(target.shape, swapped[2 * p], swapped[2 * p + 1]);
    write_points_csv(zero_level_set(exact, 128), (*out / "zero_set_reference.csv").string());
  }
  return j;
}

void write_reconstruction(const HcInrModel& model, const FitTarget& target, const fs::path& out) {
  const Tensor pred = predict_grid(model, target);
  if (target.is_sdf) {
    write_field_dump((out / "field.bin").string(), target.grid_rows, target.grid_cols, pred.to_vector(),
                     "predicted signed distance on the pixel-centre grid");
  } else {
    write_image(target.grid_image(pred), (out / "reconstruction.pgm").string());
    write_image(target.grid_image(pred), (out / "reconstruction.png").string());
  }
}

void dump_features(const FitTarget& target, const fs::path& out) {
  for (std::size_t s = 0; s < target.pyramid.scale_count(); ++s)
    write_image(Image::from_grid(target.pyramid.maps[s]), (out / ("features_" + std::to_string(s) + ".pgm")).string());
}

nlohmann::json final_summary(const FitTarget& target, const HcInrModel& model, const MetricsHistory& history) {
  const MetricsRecord& last = history.records.back();
  nlohmann::json s = {{"task", target.name},
                      {"task_hash", target.hash()},
                      {"parameters", model.parameter_count()},
                      {"final_step", last.step},
                      {"final_loss", metric_json(last.loss)},
                      {"initial_loss", metric_json(history.records.front().loss)},
                      {"psnr", metric_json(last.psnr)},
                      {"ssim", metric_json(last.ssim)},
                      {"l_jac", metric_json(last.jacobian)},
                      {"folding_fraction", metric_json(last.folding)}};
  return s;
}

}  // namespace

FitOutcome run_fit(const RunConfig& requested, bool verbose) {
  FitOutcome o;
  o.target = resolve_task(requested.task);
  RunConfig config = requested;
  config.model.decoder.output_dim = o.target.channels;
  config.model.feature_dim = o.target.features.cols();
  const fs::path out = prepare_out(config);
  if (config.dump_features) dump_features(o.target, out);
  HcInrModel model = init_model(config.model, config.train.seed);
  const FitObserver observer = [&](const MetricsRecord& r) {
    if (verbose)
      std::cerr << "step " << r.step << "  loss " << format_metric(r.loss) << "  psnr " << format_metric(r.psnr)
                << "  folding " << format_metric(r.folding) << '\n';
  };
  o.result = fit(o.target, std::move(model), config.train, observer);
  o.result.history.write_csv((out / "metrics.csv").string());
  save_checkpoint(o.result.model, config.train.seed, {{"task", config.task}, {"train", to_json(config.train)}},
                  (out / "checkpoint.bin").string());
  write_reconstruction(o.result.model, o.target, out);
  o.summary = final_summary(o.target, o.result.model, o.result.history);
  if (o.target.is_sdf) o.summary["sdf"] = sdf_metrics(o.result.model, o.target, &out);
  write_json(o.summary, out / "summary.json");
  return o;
}

int run_eval(const RunConfig& config) {
  if (config.checkpoint.empty()) throw std::invalid_argument("eval: --checkpoint is required");
  const fs::path out = prepare_out(config);
  const Checkpoint ck = load_checkpoint(config.checkpoint);
  const std::string task = ck.header.at("extra").value("task", config.task);
  const FitTarget target = resolve_task(task);
  const GridMetrics gm = evaluate(ck.model, target, config.train.penalty_mode);
  nlohmann::json j = {{"checkpoint", config.checkpoint},
                      {"task", task},
                      {"task_hash", target.hash()},
                      {"parameters", ck.model.parameter_count()},
                      {"psnr", metric_json(gm.psnr)},
                      {"ssim", metric_json(gm.ssim)},
                      {"l_jac", metric_json(gm.jacobian)},
                      {"folding_fraction", metric_json(gm.folding)}};
  if (target.is_sdf) j["sdf"] = sdf_metrics(ck.model, target, &out);
  write_reconstruction(ck.model, target, out);
  write_json(j, out / "eval.json");
  std::cout << j.dump(2) << '\n';
  return 0;
}

HcInrModel fixture_model(const std::vector<double>& matrix) {
  if (matrix.size() != 4) throw std::invalid_argument("fixture warp needs a 2x2 matrix");
  ModelConfig mc = model_preset("hcinr");
  mc.warp_levels = 1;
  mc.film = false;
  mc.displacement = DisplacementMode::kLinear;
  HcInrModel m = init_model(mc, 0);
  // Linear mode is x + u(x), so A - I goes into the affine block.
  std::vector<double> phi(m.warp.levels[0].warp_param_count(), 0.0);
  phi[0] = matrix[0] - 1.0;
  phi[1] = matrix[1];
  phi[2] = matrix[2];
  phi[3] = matrix[3] - 1.0;
  m.warp.levels[0] = make_fixed_level(1, 2, phi, DisplacementMode::kLinear, 0.0, mc.feature_dim);
  return m;
}

namespace {

// The warp to analyse for verify / export-warp: a fixture, a checkpoint, or
// a freshly initialised model.
struct WarpSubject {
  HcInrModel model;
  FitTarget target;
  bool fresh = false;
  std::string description;
};

WarpSubject warp_subject(const RunConfig& config) {
  WarpSubject s;
  if (config.matrix) {
    s.target = resolve_task(config.task);
    s.model = fixture_model(*config.matrix);
    s.description = "fixture linear warp";
  } else if (!config.checkpoint.empty()) {
    Checkpoint ck = load_checkpoint(config.checkpoint);
    s.target = resolve_task(ck.header.at("extra").value("task", config.task));
    s.model = std::move(ck.model);
    s.description = "checkpoint " + config.checkpoint;
  } else {
    s.target = resolve_task(config.task);
    s.model = model_for(config, s.target, config.train.seed);
    s.fresh = true;
    s.description = "freshly initialised model";
  }
  return s;
}

}  // namespace

int run_verify(const RunConfig& config) {
  const fs::path out = prepare_out(config);
  std::vector<CheckVerdict> verdicts = analytic_suite(config.train.seed);
  const WarpSubject subject = warp_subject(config);
  const std::vector<CheckVerdict> model_checks = model_suite(subject.model, subject.target.pyramid, subject.fresh);
  verdicts.insert(verdicts.end(), model_checks.begin(), model_checks.end());

  const fs::path dir = out / "verdicts";
  fs::create_directories(dir);
  for (const auto& v : verdicts) {
    std::string file = v.name;
    std::replace_if(file.begin(), file.end(), [](char ch) { return ch == '/' || ch == ',' || ch == '(' || ch == ')'; }, '_');
    write_json(to_json(v), dir / (file + ".json"));
  }
  nlohmann::json all = verdicts_to_json(verdicts);
  all["subject"] = subject.description;
  write_json(all, out / "verify.json");
  bool ok = true;
  for (const auto& v : verdicts) {
    std::cout << (v.passed ? "PASS " : "FAIL ") << v.name << "  measured " << format_metric(v.measured) << '\n';
    ok = ok && v.passed;
  }
  return ok ? 0 : 3;
}

int run_ablate(const RunConfig& config, bool verbose) {
  const fs::path out = prepare_out(config);
  const std::vector<std::string> variants = {"full", "no-warp", "no-film", "no-jac-reg"};
  std::ofstream csv(out / "ablation.csv", std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write " + (out / "ablation.csv").string());
  csv << "variant,seed,task_hash,parameters,psnr,ssim,final_loss,folding_fraction\n";
  nlohmann::json means = nlohmann::json::object();
  const ModelConfig base = config.model;
  for (const auto& variant : variants) {
    double psnr_sum = 0.0;
    for (std::uint64_t seed : config.seeds) {
      RunConfig rc = config;
      rc.command = "fit";
      rc.train.seed = seed;
      rc.train.disable_warp = rc.train.disable_film = rc.train.disable_jacobian_reg = false;
      if (variant != "full") apply_ablation_flag(rc.train, variant);
      rc.model = apply_ablations(base, rc.train);
      rc.out = (out / (variant + "-seed" + std::to_string(seed))).string();
      if (verbose) std::cerr << "== " << variant << " seed " << seed << '\n';
      const FitOutcome o = run_fit(rc, false);
      const MetricsRecord& last = o.result.history.records.back();
      csv << variant << ',' << seed << ',' << o.target.hash() << ',' << o.result.model.parameter_count() << ','
          << format_metric(last.psnr) << ',' << format_metric(last.ssim) << ',' << format_metric(last.loss) << ','
          << format_metric(last.folding) << '\n';
      psnr_sum += last.psnr;
    }
    means[variant] = psnr_sum / static_cast<double>(config.seeds.size());
  }
  write_json({{"mean_psnr", means}, {"seeds", config.seeds}}, out / "ablation_summary.json");
  std::cout << means.dump(2) << '\n';
  return 0;
}

Image render_warp_grid(const CoordinateMap& map, std::size_t size, std::size_t lines) {
  if (size < 8 || lines < 2) throw std::invalid_argument("render_warp_grid: need size >= 8 and >= 2 lines");
  const std::size_t samples = 4 * size;
  std::vector<double> pts;
  for (std::size_t k = 0; k < lines; ++k) {
    const double c = -1.0 + 2.0 * static_cast<double>(k) / static_cast<double>(lines - 1);
    for (std::size_t s = 0; s < samples; ++s) {
      const double t = -1.0 + 2.0 * static_cast<double>(s) / static_cast<double>(samples - 1);
      pts.insert(pts.end(), {c, t});  // line of constant x1
      pts.insert(pts.end(), {t, c});  // line of constant x2
    }
  }
  const std::size_t n = pts.size() / 2;
  const Tensor mapped = map(Tensor::matrix(n, 2, std::move(pts)));
  double extent = 1.0;
  for (double v : mapped.values()) extent = std::max(extent, std::abs(v));
  Image img{size, size, 1, std::vector<double>(size * size, 0.0)};
  for (std::size_t p = 0; p < n; ++p) {
    const double u = (mapped[2 * p] + extent) / (2.0 * extent) * static_cast<double>(size);
    const double v = (mapped[2 * p + 1] + extent) / (2.0 * extent) * static_cast<double>(size);
    const auto j = std::min(size - 1, static_cast<std::size_t>(std::max(0.0, std::floor(u))));
    const auto i = std::min(size - 1, static_cast<std::size_t>(std::max(0.0, std::floor(v))));
    img.values[i * size + j] = 1.0;
  }
  return img;
}

int run_export_warp(const RunConfig& config) {
  const fs::path out = prepare_out(config);
  const WarpSubject subject = warp_subject(config);
  const CoordinateMap map = model_warp_map(subject.model, subject.target.pyramid);
  const Image grid = render_warp_grid(map);
  write_image(grid, (out / "warp_grid.pgm").string());
  write_image(grid, (out / "warp_grid.png").string());
  write_jacobian_csv(jacobian_report(map, pixel_grid(64, 64)), (out / "jacobian.csv").string());
  return 0;
}

int run_spectra(const RunConfig& config) {
  const fs::path out = prepare_out(config);
  nlohmann::json report;
  Grid2D signal;
  if (config.task == "bundled:two-tone") {
    signal = bundled_two_tone().rasterize(64);
  } else {
    const FitTarget target = resolve_task(config.task);
    if (target.channels != 1) throw std::invalid_argument("spectra: single-channel tasks only");
    signal = Grid2D(target.grid_rows, target.grid_cols);
    for (std::size_t i = 0; i < target.grid_size(); ++i) signal.values[i] = target.values[i];
    if (!config.checkpoint.empty()) {
      const Checkpoint ck = load_checkpoint(config.checkpoint);
      const Tensor pred = predict_grid(ck.model, target);
      Grid2D recon(target.grid_rows, target.grid_cols);
      for (std::size_t i = 0; i < target.grid_size(); ++i) recon.values[i] = pred[i];
      const Spectrum rs = dft2(recon);
      write_spectrum_csv(rs, (out / "spectrum_reconstruction.csv").string());
      report["reconstruction_bandwidth"] = radial_bandwidth(rs);
      const JacobianReport jr = jacobian_report(model_warp_map(ck.model, target.pyramid), pixel_grid(64, 64));
      const std::vector<double> factors = effective_bandwidth_field(jr.matrices, 1.0);
      report["inverse_jacobian_factor_max"] = *std::max_element(factors.begin(), factors.end());
      report["inverse_jacobian_factor_min"] = *std::min_element(factors.begin(), factors.end());
    }
  }
  const Spectrum s = dft2(signal);
  write_spectrum_csv(s, (out / "spectrum.csv").string());
  report["task"] = config.task;
  report["energy"] = s.energy();
  report["bandwidth_fraction"] = 0.99;
  report["radial_bandwidth"] = radial_bandwidth(s);
  write_json(report, out / "bandwidth.json");
  std::cout << report.dump(2) << '\n';
  return 0;
}

}  // namespace hcinr
