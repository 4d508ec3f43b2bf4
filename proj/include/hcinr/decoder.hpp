#pragma once

#include "hcinr/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hcinr {

enum class DecoderVariant { kSinusoidal, kReluPositionalEncoding };

std::string to_string(DecoderVariant v);
DecoderVariant decoder_variant_from_string(const std::string& s);

struct DecoderConfig {
  std::size_t input_dim = 2;
  std::size_t hidden_width = 128;
  // Number of affine layers; depth - 1 hidden activations.
  std::size_t depth = 4;
  std::size_t output_dim = 1;
  double omega0 = 30.0;
  DecoderVariant variant = DecoderVariant::kSinusoidal;
  // Positional-encoding frequencies (ReLU baseline only).
  std::size_t pe_frequencies = 8;
  // Metadata proxy for the decoder's representable bandwidth. Never used in
  // computation: a sine layer with first-layer scale omega0 on a domain of
  // width 2 nominally reaches omega0 / pi cycles per unit.
  double nominal_bandwidth = 30.0 / 3.141592653589793;

  void validate() const;
  std::size_t encoded_dim() const;
};

struct DenseLayer {
  Tensor weight;  // [fan_in, fan_out]
  Tensor bias;    // [fan_out]
};

// Per-hidden-layer modulation. Entries are [batch, hidden_width] tensors, one
// row per sample. A missing entry leaves that layer unmodulated.
struct FilmParams {
  std::vector<std::optional<Tensor>> gamma;
  std::vector<std::optional<Tensor>> beta;

  static FilmParams identity(std::size_t layers, std::size_t batch, std::size_t width);
};

struct Decoder {
  DecoderConfig config;
  std::vector<DenseLayer> layers;

  std::size_t parameter_count() const;
};

Decoder init_decoder(const DecoderConfig& config, std::uint64_t seed);

// sin(2^k pi x_i), cos(2^k pi x_i) for k = 0..K-1, grouped per coordinate i
// as [sin k=0, cos k=0, sin k=1, cos k=1, ...]. Works on [batch, d] tensors.
Tensor positional_encode(const Tensor& x, std::size_t num_freqs);

// Forward pass on [batch, input_dim] coordinates. FiLM is applied to each
// hidden pre-activation: sin(omega0 * (gamma * (W h + b) + beta)).
Tensor decode(const Decoder& decoder, const Tensor& z, const FilmParams* film = nullptr);

}  // namespace hcinr
