#pragma once

// The training loop: epoch-shuffled batches, per-example template sampling,
// GradCache steps, the learning-rate schedule and AdamW.

#include <functional>
#include <string>
#include <vector>

#include "geovec/contrastive.hpp"
#include "geovec/data.hpp"

namespace geovec {

struct TracePoint {
  std::size_t step = 0;
  double lr = 0;
  double loss = 0;
};

struct TrainResult {
  LoraAdapter adapter;
  std::vector<TracePoint> trace;
};

// Indices of the pairs used at `step` (0-based). Each epoch is a fresh
// permutation seeded by (seed, epoch); a batch may straddle two epochs.
std::vector<std::size_t> batch_indices(std::size_t dataset_size, std::size_t batch,
                                       std::size_t step, std::uint64_t seed);

// Token streams for one pair, with query and target templates drawn from
// the registry as a function of (seed, counter).
ContrastivePair build_training_pair(const StreamBuilder& builder, const PairRecord& rec,
                                    std::uint64_t seed, std::uint64_t counter);

using StepCallback = std::function<void(const TracePoint&)>;

TrainResult train(const BaseWeights& base, LoraAdapter adapter,
                  const std::vector<PairRecord>& dataset, const StreamBuilder& builder,
                  const TrainConfig& cfg, const LossConfig& loss_cfg,
                  const StepCallback& on_step = {});

// "step,lr,loss" rows with full precision.
std::string trace_csv(const std::vector<TracePoint>& trace);

}  // namespace geovec
