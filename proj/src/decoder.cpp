#include "hcinr/decoder.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace hcinr {

std::string to_string(DecoderVariant v) {
  return v == DecoderVariant::kSinusoidal ? "sinusoidal" : "relu-pe";
}

DecoderVariant decoder_variant_from_string(const std::string& s) {
  if (s == "sinusoidal") return DecoderVariant::kSinusoidal;
  if (s == "relu-pe") return DecoderVariant::kReluPositionalEncoding;
  throw std::invalid_argument("unknown decoder variant '" + s + "'");
}

void DecoderConfig::validate() const {
  if (depth < 2) throw std::invalid_argument("decoder: depth must be >= 2");
  if (hidden_width < 1) throw std::invalid_argument("decoder: hidden width must be >= 1");
  if (input_dim < 1 || output_dim < 1) throw std::invalid_argument("decoder: dimensions must be >= 1");
  if (!(omega0 > 0.0)) throw std::invalid_argument("decoder: omega0 must be positive");
  if (variant == DecoderVariant::kReluPositionalEncoding && pe_frequencies < 1)
    throw std::invalid_argument("decoder: positional encoding needs at least one frequency");
}

std::size_t DecoderConfig::encoded_dim() const {
  return variant == DecoderVariant::kSinusoidal ? input_dim : 2 * input_dim * pe_frequencies;
}

FilmParams FilmParams::identity(std::size_t layers, std::size_t batch, std::size_t width) {
  FilmParams f;
  for (std::size_t l = 0; l < layers; ++l) {
    f.gamma.emplace_back(Tensor::full({batch, width}, 1.0));
    f.beta.emplace_back(Tensor::zeros({batch, width}));
  }
  return f;
}

std::size_t Decoder::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weight.numel() + layer.bias.numel();
  return n;
}

namespace {

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v));
}

}  // namespace

Decoder init_decoder(const DecoderConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  Decoder dec{config, {}};
  const bool sine = config.variant == DecoderVariant::kSinusoidal;

  std::size_t fan_in = config.encoded_dim();
  for (std::size_t l = 0; l < config.depth; ++l) {
    const bool last = l + 1 == config.depth;
    const std::size_t fan_out = last ? config.output_dim : config.hidden_width;
    const double in = static_cast<double>(fan_in);
    double bound;
    if (sine)
      bound = l == 0 ? 1.0 / in : std::sqrt(6.0 / in) / config.omega0;
    else
      bound = std::sqrt(6.0 / in);
    DenseLayer layer;
    layer.weight = uniform({fan_in, fan_out}, bound, rng);
    layer.bias = sine ? uniform({fan_out}, bound, rng) : Tensor::zeros({fan_out});
    dec.layers.push_back(std::move(layer));
    fan_in = fan_out;
  }
  return dec;
}

Tensor positional_encode(const Tensor& x, std::size_t num_freqs) {
  if (x.rank() != 2) throw ShapeError("positional_encode: expected [batch, d], got " + shape_string(x.shape()));
  if (num_freqs < 1) throw std::invalid_argument("positional_encode: need at least one frequency");
  std::vector<Tensor> parts;
  parts.reserve(2 * x.cols() * num_freqs);
  for (std::size_t i = 0; i < x.cols(); ++i) {
    const Tensor col = ad::slice_cols(x, i, 1);
    for (std::size_t k = 0; k < num_freqs; ++k) {
      const Tensor arg = ad::scale(col, std::ldexp(std::numbers::pi, static_cast<int>(k)));
      parts.push_back(ad::sin(arg));
      parts.push_back(ad::cos(arg));
    }
  }
  return ad::concat_cols(parts);
}

Tensor decode(const Decoder& decoder, const Tensor& z, const FilmParams* film) {
  const DecoderConfig& cfg = decoder.config;
  if (z.rank() != 2 || z.cols() != cfg.input_dim) {
    throw ShapeError("decode: expected [batch, " + std::to_string(cfg.input_dim) + "] input, got " +
                     shape_string(z.shape()));
  }
  const std::size_t hidden_layers = cfg.depth - 1;
  if (film && (film->gamma.size() != hidden_layers || film->beta.size() != hidden_layers)) {
    throw ShapeError("decode: FiLM layer count " + std::to_string(film->gamma.size()) +
                     " does not match " + std::to_string(hidden_layers) + " hidden layers");
  }
  const bool sine = cfg.variant == DecoderVariant::kSinusoidal;

  Tensor h = sine ? z : positional_encode(z, cfg.pe_frequencies);
  for (std::size_t l = 0; l < hidden_layers; ++l) {
    Tensor pre = ad::linear(h, decoder.layers[l].weight, decoder.layers[l].bias);
    if (film && film->gamma[l] && film->beta[l]) {
      pre = ad::modulate(pre, *film->gamma[l], *film->beta[l]);
    } else if (film) {
      if (film->gamma[l]) pre = ad::mul(*film->gamma[l], pre);
      if (film->beta[l]) pre = ad::add(pre, *film->beta[l]);
    }
    h = sine ? ad::sin(pre, cfg.omega0) : ad::relu(pre);
  }
  const DenseLayer& out = decoder.layers.back();
  return ad::linear(h, out.weight, out.bias);
}

}  // namespace hcinr
