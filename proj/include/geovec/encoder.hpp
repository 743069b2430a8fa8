#pragma once

// Small causal transformer with frozen base weights and LoRA adapters on
// every attention projection and MLP matrix. One embedding per stream,
// taken from the final position and L2-normalized.

#include <cstdint>
#include <string>
#include <vector>

#include "geovec/common.hpp"
#include "geovec/tokens.hpp"

namespace geovec {

struct EncoderConfig {
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t vocab_size = kDefaultVocabSize;
  std::size_t d_patch = 32;
  std::size_t max_len = kDefaultMaxLen;
  std::size_t lora_rank = 8;
  double lora_alpha = 8.0;  // scale alpha / rank = 1
  std::uint64_t seed = 42;

  void validate() const;
  std::size_t d_head() const { return d_model / n_heads; }
  std::size_t d_ff() const { return 4 * d_model; }
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Adapted projections of one layer, in slot order.
enum class Projection : std::size_t { q = 0, k, v, o, mlp_up, mlp_down };
inline constexpr std::size_t kProjectionsPerLayer = 6;

std::string adapted_name(std::size_t layer, Projection p);

struct LayerWeights {
  Matrix wq, wk, wv, wo;  // d x d
  Matrix w1;              // 4d x d
  Matrix w2;              // d x 4d

  Matrix& at(Projection p);
  const Matrix& at(Projection p) const;
  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

struct BaseWeights {
  EncoderConfig config;
  Matrix token_embedding;   // V x d
  Matrix patch_projection;  // d x d_patch
  Matrix positional;        // max_len x d
  std::vector<LayerWeights> layers;

  std::size_t adapted_count() const { return layers.size() * kProjectionsPerLayer; }
  Matrix& adapted(std::size_t slot);
  const Matrix& adapted(std::size_t slot) const;
  friend bool operator==(const BaseWeights&, const BaseWeights&) = default;
};

// Low-rank delta (alpha / rank) * B * A for one adapted matrix.
struct LoraFactor {
  std::string name;
  Matrix a;  // rank x fan_in
  Matrix b;  // fan_out x rank
  friend bool operator==(const LoraFactor&, const LoraFactor&) = default;
};

struct LoraAdapter {
  std::size_t rank = 8;
  double alpha = 8.0;
  std::vector<LoraFactor> factors;  // one per adapted slot, slot order

  double scale() const { return alpha / static_cast<double>(rank); }
  std::size_t parameter_count() const;
  friend bool operator==(const LoraAdapter&, const LoraAdapter&) = default;
};

// Same layout as LoraAdapter; used for gradients and optimizer moments.
using LoraGrads = LoraAdapter;
LoraAdapter zeros_like(const LoraAdapter& a);

struct EmbeddingVector {
  std::vector<double> values;
  bool unit_norm = false;
};

struct EncoderState {
  BaseWeights base;
  LoraAdapter adapter;
};

// Base weights N(0, 0.02^2); A ~ N(0, 1/fan_in); B = 0.
EncoderState init_encoder(const EncoderConfig& cfg);

// Adapter with B = 0 and empty A (all zeros) matching cfg.
LoraAdapter zero_adapter(const EncoderConfig& cfg);

// W + (alpha / rank) * B * A for every adapted matrix.
BaseWeights merge_adapter(const BaseWeights& base, const LoraAdapter& adapter);

// Activations of one layer for one stream. Rows before `first_row` of
// the post-attention tensors are not computed: the last layer only
// evaluates the final position, which is all the pooled embedding needs.
struct LayerTrace {
  std::size_t first_row = 0;
  Matrix x_in;               // T x d residual input
  Matrix ln1;                // T x d
  std::vector<double> rstd1;
  Matrix q, k, v;            // T x d
  std::vector<double> probs;  // heads x T x T, causal rows
  Matrix attn;               // T x d concatenated head outputs
  Matrix x_mid;              // T x d after the attention residual
  Matrix ln2;
  std::vector<double> rstd2;
  Matrix pre_act;            // T x 4d
  Matrix act;                // gelu(pre_act)
};

// Per-stream activations needed to back-propagate into the adapter.
struct ForwardTrace {
  std::size_t length = 0;
  std::vector<LayerTrace> layers;
  std::vector<double> final_ln;  // normalized final hidden state
  double final_rstd = 0;
  double final_norm = 0;         // ||final_ln||
  std::vector<double> embedding;
};

// Accumulated dL/dW for every adapted matrix, in slot order.
struct WeightGrads {
  std::vector<Matrix> slots;

  static WeightGrads zeros(const BaseWeights& base);
  void add(const WeightGrads& other);
};

// Holds the adapted (effective) weights for repeated forward and backward
// passes. Immutable after construction; safe to share across threads.
class Encoder {
 public:
  // Frozen-base forward with no adapter applied.
  explicit Encoder(const BaseWeights& base);
  // Both references must outlive the encoder.
  Encoder(const BaseWeights& base, const LoraAdapter& adapter);

  const EncoderConfig& config() const { return base_->config; }

  EmbeddingVector encode(const TokenStream& s) const;
  EmbeddingVector encode(const TokenStream& s, ForwardTrace& trace) const;

  // Given dL/d(embedding), accumulates dL/dW_eff for each adapted matrix.
  void backward(const ForwardTrace& trace, const std::vector<double>& grad_embedding,
                WeightGrads& grads) const;

  // dL/dA and dL/dB from dL/dW_eff.
  LoraGrads adapter_grads(const WeightGrads& grads) const;

 private:
  const BaseWeights* base_;
  const LoraAdapter* adapter_ = nullptr;
  std::vector<LayerWeights> layers_;  // effective weights W + scale * B * A
};

EmbeddingVector encode(const BaseWeights& base, const LoraAdapter& adapter, const TokenStream& s);

// Per-stream results in input order; errors name the failing index.
std::vector<EmbeddingVector> encode_batch(const BaseWeights& base, const LoraAdapter& adapter,
                                          const std::vector<TokenStream>& streams,
                                          std::size_t threads = 1);
std::vector<EmbeddingVector> encode_batch(const Encoder& enc,
                                          const std::vector<TokenStream>& streams,
                                          std::size_t threads = 1);

// "GLOR" adapter file: magic, u32 version, u32 rank, then per matrix
// u32 name length, name bytes, u32 rows and cols of A, A payload, u32 rows
// and cols of B, B payload; float32 little-endian row-major.
void save_adapter(const LoraAdapter& a, const std::string& path);
std::string serialize_adapter(const LoraAdapter& a);
// alpha is not stored; it is set equal to the rank on load.
LoraAdapter load_adapter(const std::string& path);
LoraAdapter parse_adapter(const std::string& bytes);

// Checks that every factor matches the corresponding base matrix shape.
void check_adapter_shapes(const BaseWeights& base, const LoraAdapter& adapter);

}  // namespace geovec
