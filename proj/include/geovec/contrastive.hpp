#pragma once

// InfoNCE over in-batch negatives, its analytic gradient, GradCache
// sub-batch accumulation, AdamW and the warmup + cosine schedule.

#include <cstdint>
#include <string>
#include <vector>

#include "geovec/common.hpp"
#include "geovec/encoder.hpp"
#include "geovec/tokens.hpp"

namespace geovec {

struct LossConfig {
  double temperature = 0.02;
  void validate() const;
};

struct TrainConfig {
  std::size_t total_steps = 2000;
  std::size_t warmup_steps = 200;
  double peak_lr = 2e-5;
  std::size_t global_batch = 1024;
  std::size_t sub_batch = 6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::uint64_t seed = 42;
  std::size_t threads = 1;

  void validate() const;

  // Plain-text key=value lines; '#' starts a comment. Unknown keys are an
  // error so typos do not silently fall back to defaults.
  static TrainConfig parse(std::string_view text, TrainConfig base);
  static TrainConfig load(const std::string& path, TrainConfig base);
  static TrainConfig parse(std::string_view text);
  static TrainConfig load(const std::string& path);
};

// Row i of `targets` is the positive for row i of `queries`.
struct BatchEmbeddings {
  Matrix queries;
  Matrix targets;

  static BatchEmbeddings from(const std::vector<EmbeddingVector>& q,
                              const std::vector<EmbeddingVector>& t);
};

double cosine_sim(std::span<const double> u, std::span<const double> v);

struct InfoNceResult {
  double loss = 0;
  Matrix similarity;  // N x N cosine similarities
};

InfoNceResult info_nce(const BatchEmbeddings& batch, const LossConfig& cfg);

struct InfoNceGrad {
  Matrix d_queries;
  Matrix d_targets;
};

InfoNceGrad info_nce_grad(const BatchEmbeddings& batch, const LossConfig& cfg);

struct ContrastivePair {
  TokenStream query;
  TokenStream target;
  std::string task;
};

struct StepResult {
  double loss = 0;
  LoraGrads grads;
};

// Encodes every pair without traces, takes the loss gradient over the whole
// batch, then re-encodes sub-batches with traces and back-propagates the
// cached embedding gradients. Gradients are summed in pair order, so the
// result does not depend on sub_batch or threads.
StepResult gradcache_step(const BaseWeights& base, const LoraAdapter& adapter,
                          const std::vector<ContrastivePair>& pairs, std::size_t sub_batch,
                          const LossConfig& cfg, std::size_t threads = 1);

// Learning rate at `step` in [0, total_steps].
double lr_at(std::size_t step, const TrainConfig& cfg);

struct AdamState {
  LoraAdapter m;
  LoraAdapter v;
  std::uint64_t step = 0;

  static AdamState zeros_like(const LoraAdapter& params);
};

// Decoupled weight decay Adam step over every adapter parameter.
void adamw_update(LoraAdapter& params, const LoraGrads& grads, AdamState& state, double lr,
                  const TrainConfig& cfg);

}  // namespace geovec
