#include "hcinr/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace hcinr {

void ModelConfig::validate() const {
  decoder.validate();
  if (warp_levels > 0 && (hyper_hidden < 1 || feature_dim < 1))
    throw std::invalid_argument("model: hypernetwork widths must be >= 1");
  if (!amplitudes.empty() && amplitudes.size() != warp_levels)
    throw std::invalid_argument("model: one amplitude per warp level required");
  if (film && warp_levels > decoder.depth - 1)
    throw std::invalid_argument("model: FiLM needs a decoder hidden layer for every warp level");
}

std::size_t ModelConfig::film_width() const {
  return film && warp_levels > 0 ? decoder.hidden_width : 0;
}

ModelConfig model_preset(const std::string& name) {
  ModelConfig c;
  if (name == "hcinr") {
    c.decoder.hidden_width = 64;
    return c;
  }
  if (name == "siren") {
    c.warp_levels = 0;
    c.film = false;
    return c;
  }
  if (name == "mlp-pe") {
    c.warp_levels = 0;
    c.film = false;
    c.decoder.variant = DecoderVariant::kReluPositionalEncoding;
    return c;
  }
  throw std::invalid_argument("unknown model preset '" + name + "' (expected hcinr|siren|mlp-pe)");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"decoder",
           {{"input_dim", c.decoder.input_dim},
            {"hidden_width", c.decoder.hidden_width},
            {"depth", c.decoder.depth},
            {"output_dim", c.decoder.output_dim},
            {"omega0", c.decoder.omega0},
            {"variant", to_string(c.decoder.variant)},
            {"pe_frequencies", c.decoder.pe_frequencies},
            {"nominal_bandwidth", c.decoder.nominal_bandwidth}}},
          {"warp_levels", c.warp_levels},
          {"hyper_hidden", c.hyper_hidden},
          {"amplitudes", c.amplitudes},
          {"displacement", to_string(c.displacement)},
          {"film", c.film},
          {"feature_dim", c.feature_dim}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (j.contains("decoder")) {
    const auto& d = j.at("decoder");
    c.decoder.input_dim = d.value("input_dim", c.decoder.input_dim);
    c.decoder.hidden_width = d.value("hidden_width", c.decoder.hidden_width);
    c.decoder.depth = d.value("depth", c.decoder.depth);
    c.decoder.output_dim = d.value("output_dim", c.decoder.output_dim);
    c.decoder.omega0 = d.value("omega0", c.decoder.omega0);
    c.decoder.variant = decoder_variant_from_string(d.value("variant", to_string(c.decoder.variant)));
    c.decoder.pe_frequencies = d.value("pe_frequencies", c.decoder.pe_frequencies);
    c.decoder.nominal_bandwidth = d.value("nominal_bandwidth", c.decoder.nominal_bandwidth);
  }
  c.warp_levels = j.value("warp_levels", c.warp_levels);
  c.hyper_hidden = j.value("hyper_hidden", c.hyper_hidden);
  c.amplitudes = j.value("amplitudes", c.amplitudes);
  const std::string disp = j.value("displacement", to_string(c.displacement));
  if (disp == "bounded")
    c.displacement = DisplacementMode::kBounded;
  else if (disp == "linear")
    c.displacement = DisplacementMode::kLinear;
  else
    throw std::invalid_argument("unknown displacement mode '" + disp + "' (expected bounded|linear)");
  c.film = j.value("film", c.film);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.validate();
  return c;
}

std::size_t HcInrModel::parameter_count() const { return decoder.parameter_count() + warp.parameter_count(); }

std::vector<Tensor*> HcInrModel::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : decoder.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  for (auto& level : warp.levels) {
    out.push_back(&level.hyper_hidden.weight);
    out.push_back(&level.hyper_hidden.bias);
    out.push_back(&level.hyper_out.weight);
    out.push_back(&level.hyper_out.bias);
  }
  return out;
}

std::vector<const Tensor*> HcInrModel::parameters() const {
  std::vector<const Tensor*> out;
  for (Tensor* t : const_cast<HcInrModel*>(this)->parameters()) out.push_back(t);
  return out;
}

std::vector<std::string> HcInrModel::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t l = 0; l < decoder.layers.size(); ++l) {
    names.push_back("decoder." + std::to_string(l) + ".weight");
    names.push_back("decoder." + std::to_string(l) + ".bias");
  }
  for (const auto& level : warp.levels) {
    const std::string p = "warp." + std::to_string(level.index) + ".";
    names.push_back(p + "hyper_hidden.weight");
    names.push_back(p + "hyper_hidden.bias");
    names.push_back(p + "hyper_out.weight");
    names.push_back(p + "hyper_out.bias");
  }
  return names;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // SplitMix64 finalizer over the combined value.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

HcInrModel init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  HcInrModel m;
  m.config = config;
  m.decoder = init_decoder(config.decoder, derive_seed(seed, 0));
  WarpStackConfig wc;
  wc.levels = config.warp_levels;
  wc.dim = config.decoder.input_dim;
  wc.feature_dim = config.feature_dim;
  wc.hyper_hidden = config.hyper_hidden;
  wc.amplitudes = config.amplitudes;
  wc.mode = config.displacement;
  wc.film_width = config.film_width();
  m.warp = init_warp_stack(wc, derive_seed(seed, 1));
  return m;
}

ModelForward model_forward(const HcInrModel& model, const Tensor& coords, const Tensor& features) {
  ModelForward out;
  if (model.warp.levels.empty()) {
    out.warp.intermediates.push_back(coords);
    out.prediction = decode(model.decoder, coords);
    return out;
  }
  out.warp = warp_stack_forward(model.warp, coords, features);
  if (model.config.film_width() == 0) {
    out.prediction = decode(model.decoder, out.warp.output());
    return out;
  }
  FilmParams film;
  const std::size_t hidden_layers = model.decoder.layers.size() - 1;
  film.gamma.resize(hidden_layers);
  film.beta.resize(hidden_layers);
  for (std::size_t l = 0; l < out.warp.params.size(); ++l) {
    film.gamma[l] = out.warp.params[l].film_gamma;
    film.beta[l] = out.warp.params[l].film_beta;
  }
  out.prediction = decode(model.decoder, out.warp.output(), &film);
  return out;
}

Tensor model_predict(const HcInrModel& model, const Tensor& coords, const Tensor& features) {
  return model_forward(model, coords, features).prediction;
}

void save_checkpoint(const HcInrModel& model, std::uint64_t seed, const nlohmann::json& extra,
                     const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");
  nlohmann::json header;
  header["format"] = "hcinr-checkpoint";
  header["version"] = 1;
  header["model"] = to_json(model.config);
  header["seed"] = seed;
  header["penalty_weights"] = model.warp.penalty_weights;
  header["extra"] = extra;
  const auto params = model.parameters();
  const auto names = model.parameter_names();
  std::size_t offset = 0;
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    tensors.push_back({{"name", names[i]}, {"shape", params[i]->shape()}, {"offset", offset}});
    offset += params[i]->numel();
  }
  header["tensors"] = tensors;
  header["payload_values"] = offset;
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Tensor* t : params) {
    const auto v = t->values();
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len == 0 || len > (1u << 26)) throw std::runtime_error("checkpoint " + path + ": bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("checkpoint " + path + ": truncated header");
  Checkpoint ck;
  ck.header = nlohmann::json::parse(text);
  if (ck.header.value("format", "") != "hcinr-checkpoint")
    throw std::runtime_error("checkpoint " + path + ": not an hcinr checkpoint");
  ck.seed = ck.header.at("seed").get<std::uint64_t>();
  ck.model = init_model(model_config_from_json(ck.header.at("model")), ck.seed);
  ck.model.warp.penalty_weights = ck.header.at("penalty_weights").get<std::vector<double>>();
  auto params = ck.model.parameters();
  const auto& tensors = ck.header.at("tensors");
  if (tensors.size() != params.size()) throw std::runtime_error("checkpoint " + path + ": tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Shape shape = tensors[i].at("shape").get<Shape>();
    if (shape != params[i]->shape())
      throw std::runtime_error("checkpoint " + path + ": tensor " + tensors[i].at("name").get<std::string>() +
                               " has shape " + shape_string(shape) + ", expected " +
                               shape_string(params[i]->shape()));
    std::vector<double> v(shape_numel(shape));
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != v.size() * sizeof(double))
      throw std::runtime_error("checkpoint " + path + ": truncated payload");
    *params[i] = Tensor(shape, std::move(v));
  }
  return ck;
}

}  // namespace hcinr
