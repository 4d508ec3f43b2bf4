#pragma once

// The composite field y = decoder(warp(x)), with the warp hypernetworks also
// emitting FiLM modulation for the decoder's hidden layers.

#include "hcinr/decoder.hpp"
#include "hcinr/warp.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace hcinr {

struct ModelConfig {
  DecoderConfig decoder;
  std::size_t warp_levels = 3;
  std::size_t hyper_hidden = 16;
  std::vector<double> amplitudes;  // empty: 0.3 / 2^(l-1)
  DisplacementMode displacement = DisplacementMode::kBounded;
  bool film = true;
  std::size_t feature_dim = 3;

  void validate() const;
  // Level l modulates hidden layer l - 1.
  std::size_t film_width() const;
};

// Named architectures.
//   hcinr   warp stack + FiLM + sinusoidal decoder (64 wide, 4 layers)
//   siren   sinusoidal decoder only (128 wide, 4 layers)
//   mlp-pe  ReLU decoder on a positional encoding (128 wide, 4 layers)
ModelConfig model_preset(const std::string& name);

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct HcInrModel {
  ModelConfig config;
  Decoder decoder;
  WarpStack warp;

  std::size_t parameter_count() const;
  // Every trainable tensor in checkpoint order: decoder layers (weight, bias)
  // first, then per level the hypernetwork hidden and output layers.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;
};

// Independent streams for the decoder and the warp, so switching the warp
// off leaves the decoder initialisation untouched.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

HcInrModel init_model(const ModelConfig& config, std::uint64_t seed);

struct ModelForward {
  Tensor prediction;  // [B, output_dim]
  StackForward warp;
};

// coords [B, 2], features [B, feature_dim] looked up at the original coords.
ModelForward model_forward(const HcInrModel& model, const Tensor& coords, const Tensor& features);
Tensor model_predict(const HcInrModel& model, const Tensor& coords, const Tensor& features);

// Checkpoint: uint64 LE header length, JSON header (model config, seed,
// `extra`, tensor names, shapes and offsets), then every parameter as
// little-endian float64 in parameters() order.
void save_checkpoint(const HcInrModel& model, std::uint64_t seed, const nlohmann::json& extra,
                     const std::string& path);
struct Checkpoint {
  HcInrModel model;
  std::uint64_t seed = 0;
  nlohmann::json header;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace hcinr
