// Command-line entry point: hcinr <fit|eval|verify|ablate|export-warp|spectra> [flags]

#include "hcinr/run.hpp"

#include "CLI11.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

std::vector<double> parse_matrix(const std::string& text) {
  std::vector<double> v;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) v.push_back(std::stod(item));
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical coordinate-warp implicit neural representations"};
  app.require_subcommand(1);

  std::string config_path;
  std::string task, preset, penalty, out, checkpoint, matrix;
  std::uint64_t seed = 0;
  std::size_t steps = 0, seeds = 0, batch = 0, eval_every = 0;
  double lambda = 0.0, lr = 0.0;
  std::vector<std::string> ablate;
  bool dump_features = false, linear_warp = false, quiet = false;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"fit", "train a model on a task and write metrics, checkpoint and reconstruction"},
      {"eval", "evaluate a checkpoint on its task"},
      {"verify", "run the warp stability and spectral checks"},
      {"ablate", "train every ablation variant over several seeds"},
      {"export-warp", "render the deformed grid and per-point Jacobians of a warp"},
      {"spectra", "write the spectrum and measured bandwidth of a task's signal"}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON run config; flags override it")->check(CLI::ExistingFile);
    sub->add_option("--task", task, "task spec, e.g. bundled:texture64, chirp:64:2:24, sdf:circle");
    sub->add_option("--model", preset, "architecture preset: hcinr | siren | mlp-pe");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--steps", steps, "training steps");
    sub->add_option("--lambda-jac", lambda, "Jacobian penalty weight per level");
    sub->add_option("--penalty-mode", penalty, "deviation | literal")
        ->check(CLI::IsMember({"deviation", "literal"}));
    sub->add_option("--ablate", ablate, "no-warp | no-film | no-jac-reg")
        ->check(CLI::IsMember({"no-warp", "no-film", "no-jac-reg"}));
    sub->add_option("--out", out, "output directory (overwritten)");
    sub->add_flag("--dump-features", dump_features, "write the feature pyramid as images");
    sub->add_flag("--linear-warp", linear_warp, "untamed displacement x + u(x) (test mode)");
    sub->add_option("--checkpoint", checkpoint, "checkpoint to evaluate or inspect");
    sub->add_option("--matrix", matrix, "fixture warp x -> A x, row-major 'a,b,c,d'");
    sub->add_option("--seeds", seeds, "number of consecutive seeds (ablate)");
    sub->add_option("--lr", lr, "base learning rate");
    sub->add_option("--batch", batch, "batch size");
    sub->add_option("--eval-every", eval_every, "steps between evaluations");
    sub->add_flag("--quiet", quiet, "no progress output");
    subs.push_back(sub);
  }
  CLI11_PARSE(app, argc, argv);

  std::string command;
  CLI::App* sub = nullptr;
  for (std::size_t i = 0; i < subs.size(); ++i)
    if (subs[i]->parsed()) {
      command = commands[i].first;
      sub = subs[i];
    }
  auto given = [sub](const char* flag) { return sub->count(flag) > 0; };

  try {
    nlohmann::json file = nlohmann::json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      file = nlohmann::json::parse(in);
    }
    hcinr::RunOverrides o;
    if (given("--task")) o.task = task;
    if (given("--model")) o.model_preset = preset;
    if (given("--seed")) o.seed = seed;
    if (given("--steps")) o.steps = steps;
    if (given("--lambda-jac")) o.lambda_jac = lambda;
    if (given("--penalty-mode")) o.penalty_mode = penalty;
    o.ablate = ablate;
    if (given("--out")) o.out = out;
    o.dump_features = dump_features;
    o.linear_warp = linear_warp;
    if (given("--checkpoint")) o.checkpoint = checkpoint;
    if (given("--matrix")) o.matrix = parse_matrix(matrix);
    if (given("--seeds")) o.seed_count = seeds;
    if (given("--lr")) o.learning_rate = lr;
    if (given("--batch")) o.batch_size = batch;
    if (given("--eval-every")) o.eval_every = eval_every;

    const hcinr::RunConfig rc = hcinr::resolve_run_config(command, file, o);
    if (command == "fit") {
      const auto outcome = hcinr::run_fit(rc, !quiet);
      std::cout << outcome.summary.dump(2) << '\n';
      return 0;
    }
    if (command == "eval") return hcinr::run_eval(rc);
    if (command == "verify") return hcinr::run_verify(rc);
    if (command == "ablate") return hcinr::run_ablate(rc, !quiet);
    if (command == "export-warp") return hcinr::run_export_warp(rc);
    return hcinr::run_spectra(rc);
  } catch (const std::exception& e) {
    std::cerr << "hcinr " << command << ": " << e.what() << '\n';
    return 1;
  }
}
