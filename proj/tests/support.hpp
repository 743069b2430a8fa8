#pragma once

// Small fixtures shared by the unit tests and the acceptance runner.

#include <cmath>
#include <vector>

#include "geovec/contrastive.hpp"
#include "geovec/encoder.hpp"
#include "geovec/rng.hpp"

namespace geovec::testing {

inline EncoderConfig small_config(std::uint64_t seed = 5) {
  EncoderConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.vocab_size = 97;
  cfg.d_patch = 6;
  cfg.max_len = 64;
  cfg.lora_rank = 3;
  cfg.lora_alpha = 3;
  cfg.seed = seed;
  return cfg;
}

inline TokenStream random_stream(Rng& rng, const EncoderConfig& cfg, std::size_t len) {
  TokenStream s;
  s.patches.d_patch = cfg.d_patch;
  for (std::size_t i = 0; i < len; ++i) {
    if (rng.below(3) == 0) {
      s.tokens.push_back({Token::Kind::patch, static_cast<std::uint32_t>(s.patches.size())});
      for (std::size_t j = 0; j < cfg.d_patch; ++j) s.patches.values.push_back(rng.normal());
    } else {
      s.tokens.push_back({Token::Kind::vocab, static_cast<std::uint32_t>(rng.below(cfg.vocab_size))});
    }
  }
  return s;
}

inline std::vector<ContrastivePair> random_pairs(Rng& rng, const EncoderConfig& cfg, std::size_t n) {
  std::vector<ContrastivePair> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({random_stream(rng, cfg, 1 + rng.below(12)), random_stream(rng, cfg, 1 + rng.below(12)), "t"});
  }
  return out;
}

inline void randomize_b(LoraAdapter& a, Rng& rng, double sd) {
  for (auto& f : a.factors) {
    for (auto& x : f.b.data) x = rng.normal(0, sd);
  }
}

inline Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  Matrix m(r, c);
  for (auto& x : m.data) x = rng.normal();
  return m;
}

inline double norm(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace geovec::testing
