// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "binary_io.hpp"
#include "geovec/cli.hpp"
#include "geovec/contrastive.hpp"
#include "geovec/data.hpp"
#include "geovec/eval.hpp"
#include "geovec/index.hpp"
#include "geovec/simd/kernels.hpp"
#include "geovec/train.hpp"
#include "support.hpp"

using namespace geovec;
using namespace geovec::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---- 1 ---------------------------------------------------------------------

Outcome friedman_leaderboard() {
  const std::vector<std::string> methods{"CLIP", "VLM2Vec", "RemoteCLIP", "SkyCLIP", "GeoRSCLIP", "GeoChat", "VLM2GeoVec"};
  const double acc[7][6] = {{70.10, 62.24, 40.25, 29.30, 75.76, 70.76}, {64.25, 58.92, 32.23, 21.26, 69.67, 62.96},
                            {75.35, 49.48, 51.44, 26.67, 91.38, 60.07}, {71.75, 67.55, 52.62, 55.63, 77.71, 78.15},
                            {72.85, 65.54, 51.26, 51.15, 78.10, 76.35}, {73.55, 57.78, 44.35, 36.56, 84.43, 64.09},
                            {77.25, 64.82, 44.54, 39.89, 90.24, 79.76}};
  const double published_score[7] = {4.8, 6.5, 4.2, 2.5, 3.0, 4.3, 2.3};
  const std::size_t published_rank[7] = {6, 7, 4, 2, 3, 5, 1};

  ScoreMatrix m{methods, {"AID", "Million-AID", "RSI-CB", "EuroSAT", "UCM", "PatternNet"}, Matrix(7, 6)};
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 6; ++j) m.scores(i, j) = acc[i][j] / 100.0;
  }
  const auto f = friedman(m);
  Outcome o{true, ""};
  std::string mismatches;
  for (int i = 0; i < 7; ++i) {
    const bool score_ok = std::abs(f.scores[i] - published_score[i]) <= 0.05 + 1e-12;
    const bool rank_ok = f.rank[i] == published_rank[i];
    if (!score_ok || !rank_ok) {
      o.pass = false;
      mismatches += " " + methods[i] + " score " + fmt("%.2f", f.scores[i]) + " vs published " +
                    fmt("%.1f", published_score[i]) + (rank_ok ? "" : " rank differs");
    }
  }
  std::string row;
  for (int i = 0; i < 7; ++i) row += (i ? " " : "") + fmt("%.2f", f.scores[i]) + "/" + std::to_string(f.rank[i]);
  o.detail = "score/rank " + row;
  if (!mismatches.empty()) o.detail += "; mismatch:" + mismatches;
  return o;
}

// ---- 2 ---------------------------------------------------------------------

// Embedding rows as the encoder produces them: L2-normalized.
Matrix unit_rows(Matrix m) {
  for (std::size_t i = 0; i < m.rows; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < m.cols; ++j) s += m(i, j) * m(i, j);
    for (std::size_t j = 0; j < m.cols; ++j) m(i, j) /= std::sqrt(s);
  }
  return m;
}

Outcome gradient_fd() {
  std::size_t batches = 0;
  double worst = 0;
  std::string worst_case;
  bool zero_ok = true;
  const double h = 1e-6;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (std::size_t n : {1u, 2u, 4u, 8u}) {
      for (std::size_t d : {4u, 8u, 16u}) {
        for (double tau : {0.02, 1.0}) {
          Rng rng(derive_seed(seed, n * 1000 + d * 10 + (tau < 0.5)));
          BatchEmbeddings b{unit_rows(random_matrix(rng, n, d)), unit_rows(random_matrix(rng, n, d))};
          const LossConfig cfg{tau};
          const auto g = info_nce_grad(b, cfg);
          ++batches;
          double max_abs_diff = 0, max_abs = 0;
          for (int side = 0; side < 2; ++side) {
            Matrix& x = side == 0 ? b.queries : b.targets;
            const Matrix& an = side == 0 ? g.d_queries : g.d_targets;
            for (std::size_t k = 0; k < x.data.size(); ++k) {
              const double keep = x.data[k];
              x.data[k] = keep + h;
              const double lp = info_nce(b, cfg).loss;
              x.data[k] = keep - h;
              const double lm = info_nce(b, cfg).loss;
              x.data[k] = keep;
              const double fd = (lp - lm) / (2 * h);
              max_abs_diff = std::max(max_abs_diff, std::abs(fd - an.data[k]));
              max_abs = std::max({max_abs, std::abs(fd), std::abs(an.data[k])});
            }
          }
          if (n == 1) {
            for (double v : g.d_queries.data) zero_ok = zero_ok && v == 0.0;
            for (double v : g.d_targets.data) zero_ok = zero_ok && v == 0.0;
            continue;
          }
          const double rel = max_abs_diff / max_abs;
          if (rel > worst) {
            worst = rel;
            worst_case = "N=" + std::to_string(n) + " d=" + std::to_string(d) + " tau=" + fmt("%g", tau);
          }
        }
      }
    }
  }
  return {worst < 1e-5 && zero_ok && batches >= 100,
          std::to_string(batches) + " unit-norm batches, max relative error " + fmt("%.2e", worst) + " (" + worst_case +
              "), N=1 gradients exactly zero: " + (zero_ok ? "yes" : "no")};
}

// ---- 3 ---------------------------------------------------------------------

// Full-batch backward written independently of gradcache_step: every stream
// is traced once, targets are accumulated before queries.
LoraGrads full_batch_oracle(const BaseWeights& base, const LoraAdapter& adapter,
                            const std::vector<ContrastivePair>& pairs, const LossConfig& cfg) {
  const Encoder enc(base, adapter);
  const std::size_t n = pairs.size();
  std::vector<ForwardTrace> tq(n), tt(n);
  std::vector<EmbeddingVector> eq(n), et(n);
  for (std::size_t i = 0; i < n; ++i) {
    eq[i] = enc.encode(pairs[i].query, tq[i]);
    et[i] = enc.encode(pairs[i].target, tt[i]);
  }
  const auto g = info_nce_grad(BatchEmbeddings::from(eq, et), cfg);
  auto wg = WeightGrads::zeros(base);
  for (std::size_t i = n; i-- > 0;) {
    const auto r = g.d_targets.row(i);
    enc.backward(tt[i], {r.begin(), r.end()}, wg);
  }
  for (std::size_t i = n; i-- > 0;) {
    const auto r = g.d_queries.row(i);
    enc.backward(tq[i], {r.begin(), r.end()}, wg);
  }
  return enc.adapter_grads(wg);
}

double max_rel_diff(const LoraGrads& a, const LoraGrads& ref) {
  double diff = 0, scale = 0;
  for (std::size_t f = 0; f < ref.factors.size(); ++f) {
    for (int which = 0; which < 2; ++which) {
      const auto& x = which ? a.factors[f].b.data : a.factors[f].a.data;
      const auto& y = which ? ref.factors[f].b.data : ref.factors[f].a.data;
      for (std::size_t i = 0; i < y.size(); ++i) {
        diff = std::max(diff, std::abs(x[i] - y[i]));
        scale = std::max(scale, std::abs(y[i]));
      }
    }
  }
  return scale > 0 ? diff / scale : diff;
}

Outcome gradcache_equivalence() {
  double worst = 0;
  bool loss_equal = true;
  int seeds = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed, ++seeds) {
    const auto cfg = small_config(seed);
    auto st = init_encoder(cfg);
    Rng rng(derive_seed(seed, "acceptance.gradcache"));
    randomize_b(st.adapter, rng, 0.1);
    const auto pairs = random_pairs(rng, cfg, 12);
    const LossConfig loss{0.02};
    const auto oracle = full_batch_oracle(st.base, st.adapter, pairs, loss);
    double first_loss = 0;
    for (std::size_t sub : {12u, 6u, 3u, 1u}) {
      const auto r = gradcache_step(st.base, st.adapter, pairs, sub, loss);
      if (sub == 12) first_loss = r.loss;
      loss_equal = loss_equal && r.loss == first_loss;
      worst = std::max(worst, max_rel_diff(r.grads, oracle));
    }
  }
  return {worst <= 1e-9 && loss_equal,
          std::to_string(seeds) + " seeds x sub-batch {12,6,3,1}, max relative deviation from full-batch backward " +
              fmt("%.2e", worst) + ", loss identical: " + (loss_equal ? "yes" : "no")};
}

// ---- 4 ---------------------------------------------------------------------

Outcome metric_oracle() {
  Rng rng(2024);
  int instances = 0, mismatches = 0;
  for (; instances < 1000; ++instances) {
    const std::size_t nq = 1 + rng.below(20), pool = 1 + rng.below(40);
    std::vector<QueryRanking> rankings;
    Qrels qrels;
    for (std::size_t q = 0; q < nq; ++q) {
      const std::string qid = "q" + std::to_string(q);
      std::vector<std::string> ids;
      for (std::size_t c = 0; c < pool; ++c) ids.push_back("c" + std::to_string(c));
      rng.shuffle(ids.begin(), ids.end());
      ids.resize(std::min<std::size_t>(pool, 1 + rng.below(12)));
      rankings.push_back({qid, ids});
      std::vector<std::string> rel;
      for (std::size_t k = 0, nr = 1 + rng.below(5); k < nr; ++k) rel.push_back("c" + std::to_string(rng.below(pool)));
      qrels[qid] = rel;
    }
    auto oracle_recall = [&](std::size_t k) {
      std::size_t hits = 0;
      for (const auto& r : rankings) {
        const std::set<std::string> top(r.ranked.begin(), r.ranked.begin() + static_cast<long>(std::min(k, r.ranked.size())));
        const std::set<std::string> rel(qrels[r.query_id].begin(), qrels[r.query_id].end());
        std::vector<std::string> inter;
        std::set_intersection(top.begin(), top.end(), rel.begin(), rel.end(), std::back_inserter(inter));
        hits += !inter.empty();
      }
      return static_cast<double>(hits) / static_cast<double>(rankings.size());
    };
    std::map<std::string, std::string> top1;
    for (const auto& r : rankings) top1[r.query_id] = r.ranked.front();
    const double r1 = oracle_recall(1), r5 = oracle_recall(5), r10 = oracle_recall(10);
    bool ok = accuracy(top1, qrels) == r1 && precision_at_1(rankings, qrels) == r1 &&
              recall_at_k(rankings, qrels, 1) == r1 && recall_at_k(rankings, qrels, 5) == r5 &&
              recall_at_k(rankings, qrels, 10) == r10 && mean_recall(rankings, qrels) == (r1 + r5 + r10) / 3.0 &&
              metric_value(Metric::accuracy, rankings, qrels) == r1;
    mismatches += !ok;
  }
  return {mismatches == 0, std::to_string(instances) + " instances, " + std::to_string(mismatches) + " mismatches"};
}

// ---- 5 ---------------------------------------------------------------------

Outcome index_exactness() {
  const auto& ref = simd::scalar_kernels();
  int stores = 0, queries = 0, mismatches = 0, roundtrip_mismatches = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed, ++stores) {
    Rng rng(derive_seed(seed, "acceptance.index"));
    const std::size_t n = 1 + rng.below(2000), d = 1 + rng.below(64);
    EmbeddingStore store(d);
    std::vector<std::vector<float>> rows;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<float> v;
      if (!rows.empty() && rng.below(10) == 0) {
        v = rows[rng.below(rows.size())];  // exact duplicate row to force ties
      } else {
        std::vector<double> x(d);
        double s = 0;
        for (auto& e : x) s += (e = rng.normal()) * e;
        for (auto e : x) v.push_back(static_cast<float>(e / std::sqrt(s)));
      }
      rows.push_back(v);
      store.add("r" + std::to_string(i), v);
    }
    const auto back = parse_store(serialize_store(store));
    for (int qn = 0; qn < 5; ++qn, ++queries) {
      const auto& q = rows[rng.below(n)];
      const std::size_t k = 1 + rng.below(std::min<std::size_t>(n + 5, 50));
      // naive oracle: full scan with the reference kernel, full sort
      std::vector<std::pair<float, std::size_t>> all;
      for (std::size_t i = 0; i < n; ++i) all.emplace_back(ref.dot_f32(rows[i].data(), q.data(), d), i);
      std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
      });
      const auto got = store.search_topk(q, k);
      bool ok = got.size() == std::min(k, n);
      for (std::size_t i = 0; ok && i < got.size(); ++i) {
        ok = got[i].index == all[i].second && got[i].score == all[i].first &&
             got[i].id == "r" + std::to_string(all[i].second);
      }
      mismatches += !ok;
      roundtrip_mismatches += !(back.search_topk(q, k) == got);
    }
  }
  return {mismatches == 0 && roundtrip_mismatches == 0,
          std::to_string(stores) + " stores, " + std::to_string(queries) + " queries, " + std::to_string(mismatches) +
              " oracle mismatches, " + std::to_string(roundtrip_mismatches) + " after round trip"};
}

// ---- 6 ---------------------------------------------------------------------

Outcome desk_learning() {
  const std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  const auto corpus = synth_corpus({});
  EncoderConfig ecfg;
  ecfg.seed = 42;
  const auto st = init_encoder(ecfg);
  const Tokenizer tok(static_cast<std::uint32_t>(ecfg.vocab_size));
  const auto reg = TemplateRegistry::defaults();
  const PatchProvider prov({ecfg.d_patch, 4, "."});
  const StreamBuilder sb{tok, reg, prov, ecfg.max_len};

  const TaskSpec* retrieval = nullptr;
  const TaskSpec* classification = nullptr;
  for (const auto& t : corpus.tasks) {
    if (t.meta_task == MetaTask::retrieval) retrieval = &t;
    if (t.meta_task == MetaTask::classification) classification = &t;
  }
  if (!retrieval || !classification) return {false, "synthetic suite lacks retrieval or classification"};

  const Encoder untrained(st.base, st.adapter);
  const auto base_r = run_task(untrained, sb, *retrieval, threads);
  const double base_r1 = recall_at_k(base_r.rankings, retrieval->qrels, 1);

  TrainConfig cfg;
  cfg.total_steps = 200;
  cfg.warmup_steps = 20;
  cfg.peak_lr = 5e-3;
  cfg.global_batch = 64;
  cfg.seed = 42;
  cfg.threads = threads;
  const auto result = train(st.base, st.adapter, corpus.pairs, sb, cfg, {0.02});

  const Encoder trained(st.base, result.adapter);
  const auto r = run_task(trained, sb, *retrieval, threads);
  const double r1 = recall_at_k(r.rankings, retrieval->qrels, 1);
  const double acc = run_task(trained, sb, *classification, threads).value;
  const double first = result.trace.front().loss, last = result.trace.back().loss;
  const double chance = 1.0 / static_cast<double>(corpus.class_names.size());
  const bool ok = r1 >= 0.9 && acc >= 0.9 && std::abs(base_r1 - chance) <= 0.1 && last < first;
  return {ok, "held-out R@1 " + fmt("%.4f", r1) + " (untrained " + fmt("%.4f", base_r1) + ", chance " +
                  fmt("%.4f", chance) + "), ensemble accuracy " + fmt("%.4f", acc) + ", loss " + fmt("%.2f", first) +
                  " -> " + fmt("%.2f", last)};
}

// ---- 7 ---------------------------------------------------------------------

Outcome capping_arithmetic() {
  const std::uint64_t raw[] = {31500, 108641, 45101, 379722, 88773, 86956, 379722, 72026, 68943, 78053, 389675,
                               64680, 69270, 75362, 17758, 49814, 17758, 49814, 379722, 379722, 38311};
  CorpusManifest m;
  int i = 0;
  for (auto r : raw) m.add("subset" + std::to_string(++i), "", r, kDefaultSubsetCap);
  bool reconcile = true;
  std::uint64_t sum = 0;
  for (const auto& s : m.subsets) {
    reconcile = reconcile && s.capped_count == std::min<std::uint64_t>(s.raw_count, 100000);
    sum += s.capped_count;
  }
  return {m.total_capped() == 1454119 && sum == m.total_capped() && reconcile,
          std::to_string(m.subsets.size()) + " subsets, capped total " + std::to_string(m.total_capped()) +
              " (raw " + std::to_string(m.total_raw()) + ")"};
}

// ---- 8 ---------------------------------------------------------------------

int cli(std::vector<std::string> args, std::string& err_out) {
  args.insert(args.begin(), "geovec");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  err_out = err.str();
  return code;
}

Outcome end_to_end_determinism() {
  const fs::path root = fs::temp_directory_path() / "geovec_acceptance_e2e";
  fs::remove_all(root);
  std::string err;
  if (cli({"synth", "--out", (root / "data").string(), "--classes", "8", "--pairs-per-class", "12",
           "--held-out", "2"}, err) != 0) {
    return {false, "synth failed: " + err};
  }
  const std::vector<std::size_t> thread_counts{1, 2, 4};
  for (std::size_t t : thread_counts) {
    const fs::path dir = root / ("run" + std::to_string(t));
    fs::create_directories(dir);
    const std::string th = std::to_string(t);
    const std::string data = (root / "data").string();
    if (cli({"train", "--pairs", data + "/pairs.jsonl", "--out", (dir / "adapter.glor").string(), "--steps", "6",
             "--batch", "24", "--sub-batch", "5", "--lr", "5e-3", "--seed", "42", "--threads", th}, err) != 0 ||
        cli({"synth", "--out", (dir / "items").string(), "--classes", "8", "--pairs-per-class", "12", "--held-out",
             "2"}, err) != 0) {
      return {false, "train failed: " + err};
    }
    // Items: candidates of every synthetic task.
    std::string items;
    for (const auto& spec : load_task_specs(data + "/tasks.json")) {
      for (const auto& c : spec.candidates) {
        items += nlohmann::json{{"id", spec.name + "/" + c.id}, {"side", to_json(c.side)}}.dump() + "\n";
      }
    }
    binio::write_file((dir / "items.jsonl").string(), items);
    if (cli({"embed", "--items", (dir / "items.jsonl").string(), "--adapter", (dir / "adapter.glor").string(),
             "--out", (dir / "items.gvec").string(), "--seed", "42", "--threads", th}, err) != 0 ||
        cli({"eval", "--tasks", data + "/tasks.json", "--adapter", (dir / "adapter.glor").string(), "--out",
             (dir / "metrics.csv").string(), "--seed", "42", "--threads", th}, err) != 0 ||
        cli({"eval", "--tasks", data + "/tasks.json", "--out", (dir / "baseline.csv").string(), "--method",
             "untrained", "--seed", "42", "--threads", th}, err) != 0 ||
        cli({"report", (dir / "metrics.csv").string(), (dir / "baseline.csv").string(), "--out",
             (dir / "report").string()}, err) != 0) {
      return {false, "pipeline failed with --threads " + th + ": " + err};
    }
  }
  const std::vector<std::string> files{"adapter.glor", "adapter.glor.trace.csv", "items.gvec", "metrics.csv",
                                       "report/report.csv", "report/summary.txt", "report/summary.csv"};
  std::string differing;
  for (const auto& f : files) {
    const auto first = binio::read_file((root / "run1" / f).string());
    for (std::size_t t : thread_counts) {
      if (binio::read_file((root / ("run" + std::to_string(t)) / f).string()) != first) {
        differing += " " + f + "@" + std::to_string(t);
      }
    }
  }
  fs::remove_all(root);
  return {differing.empty(), std::to_string(files.size()) + " files compared across --threads 1, 2, 4" +
                                 (differing.empty() ? ", all byte-identical" : "; differ:" + differing)};
}

// ---- 9 ---------------------------------------------------------------------

Outcome lora_init_invariance() {
  EncoderConfig cfg;
  cfg.max_len = 256;
  const auto st = init_encoder(cfg);
  const Encoder with_adapter(st.base, st.adapter);
  const Encoder frozen(st.base);
  const auto merged = merge_adapter(st.base, st.adapter);
  const Encoder merged_enc(merged, zero_adapter(cfg));
  bool b_zero = true;
  for (const auto& f : st.adapter.factors) {
    for (double x : f.b.data) b_zero = b_zero && x == 0.0;
  }
  const bool merged_same = merged.layers == st.base.layers && merged.token_embedding == st.base.token_embedding &&
                           merged.patch_projection == st.base.patch_projection &&
                           merged.positional == st.base.positional;
  Rng rng(99);
  int streams = 0, diffs = 0;
  for (; streams < 50; ++streams) {
    const auto s = random_stream(rng, cfg, 1 + rng.below(200));
    const auto f = frozen.encode(s).values;
    diffs += with_adapter.encode(s).values != f;
    diffs += merged_enc.encode(s).values != f;
  }
  return {b_zero && diffs == 0 && merged_same,
          std::to_string(streams) + " streams, " + std::to_string(diffs) +
              " bitwise differences (adapter vs frozen, merged vs frozen); merged weights identical: " +
              (merged_same ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "Friedman reproduction of the zero-shot leaderboard", 1, friedman_leaderboard},
      {2, "InfoNCE gradient vs central differences", 10, gradient_fd},
      {3, "GradCache equivalence", 30, gradcache_equivalence},
      {4, "retrieval metric oracle", 5, metric_oracle},
      {5, "index exactness and persistence", 30, index_exactness},
      {6, "desk-scale learning", 600, desk_learning},
      {7, "capping arithmetic", 1, capping_arithmetic},
      {8, "end-to-end determinism", 300, end_to_end_determinism},
      {9, "LoRA init invariance", 10, lora_init_invariance},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs <= c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("[%s] %d %s: %s; %.2f s (budget %.0f s)%s\n", pass ? "PASS" : "FAIL", c.id, c.title.c_str(),
                o.detail.c_str(), secs, c.budget_s, in_time ? "" : " OVER BUDGET");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
