#include "geovec/train.hpp"

#include <cstdio>
#include <numeric>

#include "geovec/parallel.hpp"
#include "geovec/rng.hpp"

namespace geovec {

std::vector<std::size_t> batch_indices(std::size_t dataset_size, std::size_t batch,
                                       std::size_t step, std::uint64_t seed) {
  if (dataset_size == 0) throw ValidationError("empty dataset");
  if (batch > dataset_size) {
    throw ConfigError("batch of " + std::to_string(batch) + " exceeds the " +
                      std::to_string(dataset_size) + " available pairs");
  }
  const std::uint64_t epoch_seed = derive_seed(seed, "train.epoch");
  auto permutation = [&](std::uint64_t epoch) {
    std::vector<std::size_t> p(dataset_size);
    std::iota(p.begin(), p.end(), 0);
    Rng rng(derive_seed(epoch_seed, epoch));
    rng.shuffle(p.begin(), p.end());
    return p;
  };
  const std::uint64_t start = static_cast<std::uint64_t>(step) * batch;
  std::uint64_t epoch = start / dataset_size;
  std::size_t pos = static_cast<std::size_t>(start % dataset_size);
  auto perm = permutation(epoch);
  std::vector<std::size_t> out;
  out.reserve(batch);
  while (out.size() < batch) {
    if (pos == dataset_size) {
      perm = permutation(++epoch);
      pos = 0;
    }
    out.push_back(perm[pos++]);
  }
  return out;
}

ContrastivePair build_training_pair(const StreamBuilder& builder, const PairRecord& rec,
                                    std::uint64_t seed, std::uint64_t counter) {
  const std::uint64_t tseed = derive_seed(seed, "train.templates");
  const auto& qt = builder.templates.sample(rec.query.instruction, tseed, 2 * counter);
  const auto& tt = builder.templates.sample(rec.target.instruction, tseed, 2 * counter + 1);
  return {builder.build(rec.query, qt, rec.task), builder.build(rec.target, tt, rec.task), rec.task};
}

TrainResult train(const BaseWeights& base, LoraAdapter adapter,
                  const std::vector<PairRecord>& dataset, const StreamBuilder& builder,
                  const TrainConfig& cfg, const LossConfig& loss_cfg, const StepCallback& on_step) {
  cfg.validate();
  loss_cfg.validate();
  if (dataset.empty()) throw ValidationError("training dataset is empty");
  check_adapter_shapes(base, adapter);
  const std::size_t threads = resolve_threads(cfg.threads);

  TrainResult out;
  AdamState state = AdamState::zeros_like(adapter);
  for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
    const auto idx = batch_indices(dataset.size(), cfg.global_batch, step - 1, cfg.seed);
    std::vector<ContrastivePair> pairs(idx.size());
    parallel_for(idx.size(), threads, [&](std::size_t i) {
      const std::uint64_t counter = static_cast<std::uint64_t>(step - 1) * cfg.global_batch + i;
      pairs[i] = build_training_pair(builder, dataset[idx[i]], cfg.seed, counter);
    });
    auto result = gradcache_step(base, adapter, pairs, cfg.sub_batch, loss_cfg, threads);
    const double lr = lr_at(step, cfg);
    adamw_update(adapter, result.grads, state, lr, cfg);
    out.trace.push_back({step, lr, result.loss});
    if (on_step) on_step(out.trace.back());
  }
  out.adapter = std::move(adapter);
  return out;
}

std::string trace_csv(const std::vector<TracePoint>& trace) {
  std::string out = "step,lr,loss\n";
  char buf[96];
  for (const auto& t : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", t.step, t.lr, t.loss);
    out += buf;
  }
  return out;
}

}  // namespace geovec
