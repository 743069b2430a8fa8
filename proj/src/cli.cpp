#include "geovec/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <sstream>

#include "binary_io.hpp"
#include "geovec/data.hpp"
#include "geovec/eval.hpp"
#include "geovec/index.hpp"
#include "geovec/parallel.hpp"
#include "geovec/rng.hpp"
#include "geovec/train.hpp"

namespace geovec {

namespace {

struct Options {
  // shared
  std::uint64_t seed = 42;
  std::size_t threads = 0;
  std::size_t rank = 8;
  std::string adapter;
  std::string out;
  // train
  std::string pairs;
  std::string config;
  std::string trace;
  std::size_t steps = 0;
  std::size_t warmup = 0;
  std::size_t batch = 0;
  std::size_t sub_batch = 0;
  double temp = 0;
  double lr = 0;
  std::size_t cap = kDefaultSubsetCap;
  // embed / search / eval / report
  std::string items;
  std::string store;
  std::string tasks;
  std::string method = "geovec";
  std::size_t k = 10;
  std::vector<std::string> scores;
  // synth
  std::size_t classes = 26;
  std::size_t pairs_per_class = 40;
  std::size_t held_out = 4;
};

std::string parent_dir(const std::string& path) {
  auto p = std::filesystem::path(path).parent_path();
  return p.empty() ? std::string(".") : p.string();
}

EncoderConfig encoder_config(const Options& o) {
  EncoderConfig cfg;
  cfg.seed = o.seed;
  cfg.lora_rank = o.rank;
  cfg.lora_alpha = static_cast<double>(o.rank);
  cfg.validate();
  return cfg;
}

struct Model {
  EncoderState state;
};

// Base weights come from the seed; the adapter from --adapter when given,
// otherwise the untrained initialization.
Model load_model(const Options& o) {
  Model m{init_encoder(encoder_config(o))};
  if (!o.adapter.empty()) {
    m.state.adapter = load_adapter(o.adapter);
    check_adapter_shapes(m.state.base, m.state.adapter);
  }
  return m;
}

std::vector<TaskItem> load_items(const std::string& path) {
  const std::string text = binio::read_file(path);
  std::vector<TaskItem> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      out.push_back({j.at("id").get<std::string>(), side_from_json(j.at("side"))});
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(ParseError::Kind::malformed, path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ParseError(ParseError::Kind::malformed, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (out.empty()) throw ValidationError(path + ": no items");
  return out;
}

std::vector<EmbeddingVector> embed_items(const Encoder& enc, const StreamBuilder& builder,
                                         const std::vector<TaskItem>& items, std::size_t threads) {
  std::vector<TokenStream> streams(items.size());
  parallel_for(items.size(), threads, [&](std::size_t i) {
    try {
      streams[i] = builder.build(items[i].side);
    } catch (const ValidationError& e) {
      throw ValidationError("item '" + items[i].id + "': " + e.what());
    }
  });
  return encode_batch(enc, streams, threads);
}

int cmd_synth(const Options& o, std::ostream& out) {
  SynthOptions so;
  so.n_classes = o.classes;
  so.pairs_per_class = o.pairs_per_class;
  so.held_out_per_class = o.held_out;
  so.seed = o.seed;
  const auto corpus = synth_corpus(so);
  std::error_code ec;
  std::filesystem::create_directories(o.out, ec);
  if (ec) throw IoError("cannot create " + o.out + ": " + ec.message());
  const std::filesystem::path dir(o.out);
  save_pairs(corpus.pairs, (dir / "pairs.jsonl").string());
  save_task_specs(corpus.tasks, (dir / "tasks.json").string());
  out << "wrote " << corpus.pairs.size() << " pairs and " << corpus.tasks.size() << " tasks to "
      << o.out << "\n";
  return 0;
}

int cmd_train(const Options& o, const CLI::App& app, std::ostream& out, std::ostream& err) {
  TrainConfig cfg;
  if (!o.config.empty()) cfg = TrainConfig::load(o.config);
  cfg.seed = o.seed;
  cfg.threads = resolve_threads(o.threads);
  const bool warmup_given = app.count("--warmup") > 0 || !o.config.empty();
  if (app.count("--steps")) cfg.total_steps = o.steps;
  if (app.count("--warmup")) cfg.warmup_steps = o.warmup;
  if (app.count("--batch")) cfg.global_batch = o.batch;
  if (app.count("--sub-batch")) cfg.sub_batch = o.sub_batch;
  if (app.count("--lr")) cfg.peak_lr = o.lr;
  // Shorter runs keep the default warmup fraction of the schedule.
  if (!warmup_given && cfg.warmup_steps >= cfg.total_steps) cfg.warmup_steps = cfg.total_steps / 10;
  LossConfig loss;
  if (app.count("--temp")) loss.temperature = o.temp;

  auto loaded = load_pairs(o.pairs, o.cap, derive_seed(o.seed, "data.sample"));
  if (loaded.records.empty()) throw ValidationError(o.pairs + ": no pairs");
  if (cfg.global_batch > loaded.records.size()) {
    err << "note: batch " << cfg.global_batch << " reduced to the " << loaded.records.size()
        << " available pairs\n";
    cfg.global_batch = loaded.records.size();
  }
  cfg.validate();
  loss.validate();

  const auto model = load_model(o);
  const Tokenizer tok(static_cast<std::uint32_t>(model.state.base.config.vocab_size));
  const auto templates = TemplateRegistry::defaults();
  PatchProvider::Config pc;
  pc.d_patch = model.state.base.config.d_patch;
  pc.base_dir = parent_dir(o.pairs);
  const PatchProvider patches(pc);
  const StreamBuilder builder{tok, templates, patches, model.state.base.config.max_len};

  const auto result = train(model.state.base, model.state.adapter, loaded.records, builder, cfg, loss);
  save_adapter(result.adapter, o.out);
  const std::string trace_path = o.trace.empty() ? o.out + ".trace.csv" : o.trace;
  binio::write_file(trace_path, trace_csv(result.trace));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", result.trace.back().loss);
  out << "pairs " << loaded.subset.capped_count << " of " << loaded.subset.raw_count << ", steps "
      << cfg.total_steps << ", final loss " << buf << "\n";
  out << "adapter written to " << o.out << "\n";
  return 0;
}

int cmd_embed(const Options& o, std::ostream& out) {
  const auto items = load_items(o.items);
  const auto model = load_model(o);
  const Encoder enc(model.state.base, model.state.adapter);
  const Tokenizer tok(static_cast<std::uint32_t>(model.state.base.config.vocab_size));
  const auto templates = TemplateRegistry::defaults();
  PatchProvider::Config pc;
  pc.d_patch = model.state.base.config.d_patch;
  pc.base_dir = parent_dir(o.items);
  const PatchProvider patches(pc);
  const StreamBuilder builder{tok, templates, patches, model.state.base.config.max_len};

  const auto emb = embed_items(enc, builder, items, resolve_threads(o.threads));
  EmbeddingStore store(model.state.base.config.d_model);
  for (std::size_t i = 0; i < items.size(); ++i) store.add(items[i].id, emb[i]);
  save_store(store, o.out);
  out << "embedded " << store.size() << " items into " << o.out << "\n";
  return 0;
}

int cmd_search(const Options& o, std::ostream& out) {
  const auto store = load_store(o.store);
  const auto items = load_items(o.items);
  const auto model = load_model(o);
  if (store.dim() != model.state.base.config.d_model) {
    throw ValidationError("store dim " + std::to_string(store.dim()) + " does not match the encoder");
  }
  const Encoder enc(model.state.base, model.state.adapter);
  const Tokenizer tok(static_cast<std::uint32_t>(model.state.base.config.vocab_size));
  const auto templates = TemplateRegistry::defaults();
  PatchProvider::Config pc;
  pc.d_patch = model.state.base.config.d_patch;
  pc.base_dir = parent_dir(o.items);
  const PatchProvider patches(pc);
  const StreamBuilder builder{tok, templates, patches, model.state.base.config.max_len};
  const auto emb = embed_items(enc, builder, items, resolve_threads(o.threads));

  std::string csv = "query,rank,id,score\n";
  char buf[64];
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto hits = store.search_topk(emb[i], o.k);
    for (std::size_t r = 0; r < hits.size(); ++r) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(hits[r].score));
      csv += items[i].id + "," + std::to_string(r + 1) + "," + hits[r].id + "," + buf + "\n";
    }
  }
  if (o.out.empty()) {
    out << csv;
  } else {
    binio::write_file(o.out, csv);
  }
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const auto specs = load_task_specs(o.tasks);
  const auto model = load_model(o);
  const Encoder enc(model.state.base, model.state.adapter);
  const Tokenizer tok(static_cast<std::uint32_t>(model.state.base.config.vocab_size));
  const auto templates = TemplateRegistry::defaults();
  PatchProvider::Config pc;
  pc.d_patch = model.state.base.config.d_patch;
  pc.base_dir = parent_dir(o.tasks);
  const PatchProvider patches(pc);
  const StreamBuilder builder{tok, templates, patches, model.state.base.config.max_len};
  const std::size_t threads = resolve_threads(o.threads);

  ScoreMatrix m;
  m.methods = {o.method};
  std::vector<double> values;
  for (const auto& spec : specs) {
    const auto r = run_task(enc, builder, spec, threads);
    m.tasks.push_back(spec.name);
    values.push_back(r.value);
    out << spec.name << " " << to_string(spec.metric) << " " << format_fixed(100.0 * r.value, 2) << "\n";
  }
  m.scores = Matrix(1, values.size());
  m.scores.data = values;
  binio::write_file(o.out, report_csv(m));
  return 0;
}

int cmd_report(const Options& o, std::ostream& out) {
  const auto m = load_score_csv(o.scores);
  write_report(m, o.out);
  out << summary_text(m);
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive multimodal embedding engine and ranking evaluation", "geovec"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Root seed for every random stream")->capture_default_str();
    sub->add_option("--threads", o.threads, "Worker threads (default: GEOVEC_THREADS or 1)");
  };
  auto model_opts = [&](CLI::App* sub, bool adapter_required) {
    sub->add_option("--rank", o.rank, "LoRA rank of a fresh adapter")->capture_default_str();
    auto* a = sub->add_option("--adapter", o.adapter, "GLOR adapter file");
    if (adapter_required) a->required();
  };

  auto* synth = app.add_subcommand("synth", "Write a synthetic pair corpus and task suite");
  common(synth);
  synth->add_option("--out", o.out, "Output directory")->required();
  synth->add_option("--classes", o.classes)->capture_default_str();
  synth->add_option("--pairs-per-class", o.pairs_per_class)->capture_default_str();
  synth->add_option("--held-out", o.held_out, "Held-out items per class")->capture_default_str();

  auto* tr = app.add_subcommand("train", "Train a LoRA adapter on contrastive pairs");
  common(tr);
  model_opts(tr, false);
  tr->add_option("--pairs", o.pairs, "Pairs JSONL")->required();
  tr->add_option("--out", o.out, "Adapter output path")->required();
  tr->add_option("--trace", o.trace, "Loss trace CSV (default: <out>.trace.csv)");
  tr->add_option("--config", o.config, "key=value training config");
  tr->add_option("--steps", o.steps, "Total steps (2000)");
  tr->add_option("--warmup", o.warmup, "Warmup steps (200)");
  tr->add_option("--batch", o.batch, "Global batch (1024)");
  tr->add_option("--sub-batch", o.sub_batch, "GradCache sub-batch (6)");
  tr->add_option("--temp", o.temp, "InfoNCE temperature (0.02)");
  tr->add_option("--lr", o.lr, "Peak learning rate (2e-5)");
  tr->add_option("--cap", o.cap, "Per-file pair cap")->capture_default_str();

  auto* em = app.add_subcommand("embed", "Embed items into a GVEC store");
  common(em);
  model_opts(em, false);
  em->add_option("--items", o.items, "Items JSONL: {\"id\": str, \"side\": {...}}")->required();
  em->add_option("--out", o.out, "GVEC output path")->required();

  auto* se = app.add_subcommand("index-search", "Rank a store against query items");
  common(se);
  model_opts(se, false);
  se->add_option("--store", o.store, "GVEC store")->required();
  se->add_option("--items", o.items, "Query items JSONL")->required();
  se->add_option("--k", o.k, "Results per query")->capture_default_str()->check(CLI::PositiveNumber);
  se->add_option("--out", o.out, "CSV output (default: stdout)");

  auto* ev = app.add_subcommand("eval", "Run task specs and write method,task,value rows");
  common(ev);
  model_opts(ev, false);
  ev->add_option("--tasks", o.tasks, "Task spec JSON")->required();
  ev->add_option("--out", o.out, "Metric CSV output")->required();
  ev->add_option("--method", o.method, "Method name in the CSV")->capture_default_str();

  auto* rp = app.add_subcommand("report", "Friedman scores and ranks from metric CSVs");
  rp->add_option("scores", o.scores, "method,task,value CSV files")->required();
  rp->add_option("--out", o.out, "Report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) return cmd_synth(o, out);
    if (tr->parsed()) return cmd_train(o, *tr, out, err);
    if (em->parsed()) return cmd_embed(o, out);
    if (se->parsed()) return cmd_search(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (rp->parsed()) return cmd_report(o, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace geovec
