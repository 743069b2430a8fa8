#include "geovec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "geovec/parallel.hpp"
#include "geovec/prompts.hpp"

namespace geovec {

namespace {

const std::vector<std::string>& relevant_for(const Qrels& qrels, const std::string& qid) {
  const auto it = qrels.find(qid);
  if (it == qrels.end()) throw ValidationError("no qrels for query '" + qid + "'");
  return it->second;
}

bool contains(const std::vector<std::string>& v, const std::string& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

double accuracy(const std::map<std::string, std::string>& top1, const Qrels& qrels) {
  if (qrels.empty()) throw ValidationError("accuracy over zero queries");
  std::size_t hits = 0;
  for (const auto& [qid, rel] : qrels) {
    const auto it = top1.find(qid);
    if (it == top1.end()) throw ValidationError("missing prediction for query '" + qid + "'");
    if (contains(rel, it->second)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(qrels.size());
}

double recall_at_k(const std::vector<QueryRanking>& rankings, const Qrels& qrels, std::size_t k) {
  if (k == 0) throw ValidationError("k must be >= 1");
  if (rankings.empty()) throw ValidationError("recall over zero queries");
  std::size_t hits = 0;
  for (const auto& r : rankings) {
    if (r.ranked.empty()) throw ValidationError("empty ranking for query '" + r.query_id + "'");
    const auto& rel = relevant_for(qrels, r.query_id);
    const std::size_t depth = std::min(k, r.ranked.size());
    for (std::size_t i = 0; i < depth; ++i) {
      if (contains(rel, r.ranked[i])) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(rankings.size());
}

double mean_recall(const std::vector<QueryRanking>& rankings, const Qrels& qrels) {
  return (recall_at_k(rankings, qrels, 1) + recall_at_k(rankings, qrels, 5) +
          recall_at_k(rankings, qrels, 10)) /
         3.0;
}

double precision_at_1(const std::vector<QueryRanking>& rankings, const Qrels& qrels) {
  return recall_at_k(rankings, qrels, 1);
}

double metric_value(Metric m, const std::vector<QueryRanking>& rankings, const Qrels& qrels) {
  switch (m) {
    case Metric::accuracy: {
      std::map<std::string, std::string> top1;
      Qrels used;
      for (const auto& r : rankings) {
        if (r.ranked.empty()) throw ValidationError("empty ranking for query '" + r.query_id + "'");
        top1[r.query_id] = r.ranked.front();
        used[r.query_id] = relevant_for(qrels, r.query_id);
      }
      return accuracy(top1, used);
    }
    case Metric::mean_recall_1_5_10: return mean_recall(rankings, qrels);
    case Metric::precision_at_1: return precision_at_1(rankings, qrels);
  }
  throw ValidationError("unknown metric");
}

std::string render_label_prompt(std::string_view prefix, std::string_view label) {
  std::string s(prefix);
  s += ' ';
  s += label;
  return s;
}

std::vector<std::string> default_ensemble_prefixes() {
  return {prompts::kEnsemblePrefixes.begin(), prompts::kEnsemblePrefixes.end()};
}

std::vector<EmbeddingVector> class_prototypes(const Encoder& enc, const StreamBuilder& builder,
                                              const std::vector<std::string>& class_names,
                                              const std::vector<std::string>& prefixes,
                                              std::size_t threads) {
  if (class_names.empty()) throw ValidationError("ensemble needs at least one class");
  if (prefixes.empty()) throw ValidationError("ensemble needs at least one prompt prefix");
  std::vector<TokenStream> streams;
  streams.reserve(class_names.size() * prefixes.size());
  for (const auto& name : class_names) {
    for (const auto& prefix : prefixes) {
      ItemSide side;
      side.instruction = std::string(prompts::kTextTarget);
      side.text = render_label_prompt(prefix, name);
      streams.push_back(builder.build(side));
    }
  }
  const auto emb = encode_batch(enc, streams, threads);
  const std::size_t d = enc.config().d_model;
  std::vector<EmbeddingVector> out(class_names.size());
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    std::vector<double> mean(d, 0.0);
    for (std::size_t p = 0; p < prefixes.size(); ++p) {
      const auto& v = emb[c * prefixes.size() + p].values;
      for (std::size_t i = 0; i < d; ++i) mean[i] += v[i];
    }
    double sq = 0;
    for (double x : mean) sq += x * x;
    const double norm = std::sqrt(sq);
    if (!(norm > 0)) throw ValidationError("prompt embeddings of '" + class_names[c] + "' cancel out");
    for (double& x : mean) x /= norm;
    out[c] = {std::move(mean), true};
  }
  return out;
}

std::size_t ensemble_classify(const Encoder& enc, const StreamBuilder& builder,
                              const std::vector<std::string>& class_names,
                              const std::vector<std::string>& prefixes,
                              const EmbeddingVector& image_query) {
  const auto protos = class_prototypes(enc, builder, class_names, prefixes);
  EmbeddingStore store(enc.config().d_model);
  for (std::size_t c = 0; c < protos.size(); ++c) store.add(std::to_string(c), protos[c]);
  return store.search_topk(image_query, 1).front().index;
}

TaskResult run_task(const Encoder& enc, const StreamBuilder& builder, const TaskSpec& spec,
                    std::size_t threads) {
  spec.validate();
  const std::size_t d = enc.config().d_model;
  EmbeddingStore store(d);

  if (spec.meta_task == MetaTask::classification) {
    std::vector<std::string> labels;
    for (const auto& c : spec.candidates) {
      if (!c.side.text) {
        throw ValidationError("task '" + spec.name + "': classification candidate '" + c.id +
                              "' has no label text");
      }
      labels.push_back(*c.side.text);
    }
    const auto protos = class_prototypes(enc, builder, labels, default_ensemble_prefixes(), threads);
    for (std::size_t c = 0; c < protos.size(); ++c) store.add(spec.candidates[c].id, protos[c]);
  } else {
    std::vector<TokenStream> streams(spec.candidates.size());
    parallel_for(spec.candidates.size(), threads, [&](std::size_t i) {
      streams[i] = builder.build(spec.candidates[i].side, spec.name);
    });
    const auto emb = encode_batch(enc, streams, threads);
    for (std::size_t i = 0; i < emb.size(); ++i) store.add(spec.candidates[i].id, emb[i]);
  }

  TaskResult out;
  out.task = spec.name;
  out.metric = spec.metric;
  out.rankings.resize(spec.queries.size());
  parallel_for(spec.queries.size(), threads, [&](std::size_t qi) {
    const auto& q = spec.queries[qi];
    try {
      const auto e = enc.encode(builder.build(q.side, spec.name));
      const bool self_in_pool = spec.exclude_self && store.contains(q.id);
      const std::size_t k = std::min(kRankDepth + (self_in_pool ? 1 : 0), store.size());
      auto& r = out.rankings[qi];
      r.query_id = q.id;
      for (auto& hit : store.search_topk(e, k)) {
        if (self_in_pool && hit.id == q.id) continue;
        if (r.ranked.size() == kRankDepth) break;
        r.ranked.push_back(std::move(hit.id));
      }
      if (r.ranked.empty()) throw ValidationError("no candidates left after excluding the query");
    } catch (const Error& e) {
      throw ValidationError("task '" + spec.name + "', query '" + q.id + "': " + e.what());
    }
  });
  out.value = metric_value(spec.metric, out.rankings, spec.qrels);
  return out;
}

// ---- Friedman ----------------------------------------------------------------

void ScoreMatrix::validate() const {
  if (methods.empty()) throw ValidationError("score matrix has no methods");
  if (tasks.empty()) throw ValidationError("score matrix has no tasks");
  if (scores.rows != methods.size() || scores.cols != tasks.size() ||
      scores.data.size() != methods.size() * tasks.size()) {
    throw ValidationError("score matrix is not methods x tasks");
  }
  for (std::size_t i = 0; i < methods.size(); ++i) {
    for (std::size_t j = 0; j < tasks.size(); ++j) {
      if (!std::isfinite(scores(i, j))) {
        throw ValidationError("non-finite score for " + methods[i] + " on " + tasks[j]);
      }
    }
  }
}

FriedmanResult friedman(const ScoreMatrix& m) {
  m.validate();
  const std::size_t n = m.methods.size();
  const std::size_t t = m.tasks.size();
  std::vector<double> rank_sum(n, 0.0);
  std::vector<std::size_t> order(n);
  for (std::size_t j = 0; j < t; ++j) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return m.scores(a, j) > m.scores(b, j); });
    for (std::size_t i = 0; i < n;) {
      std::size_t e = i + 1;
      while (e < n && m.scores(order[e], j) == m.scores(order[i], j)) ++e;
      // Positions i+1 .. e share their mean.
      const double avg = (static_cast<double>(i + 1) + static_cast<double>(e)) / 2.0;
      for (std::size_t p = i; p < e; ++p) rank_sum[order[p]] += avg;
      i = e;
    }
  }
  FriedmanResult r;
  r.scores.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.scores[i] = rank_sum[i] / static_cast<double>(t);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return r.scores[a] < r.scores[b]; });
  r.rank.resize(n);
  for (std::size_t p = 0; p < n; ++p) r.rank[order[p]] = p + 1;
  return r;
}

// ---- reports -----------------------------------------------------------------

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

namespace {

std::string format_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace

std::string report_csv(const ScoreMatrix& m) {
  m.validate();
  std::string out = "method,task,value\n";
  for (std::size_t i = 0; i < m.methods.size(); ++i) {
    for (std::size_t j = 0; j < m.tasks.size(); ++j) {
      out += csv_field(m.methods[i]) + "," + csv_field(m.tasks[j]) + "," + format_exact(m.scores(i, j)) + "\n";
    }
  }
  return out;
}

std::string summary_csv(const ScoreMatrix& m) {
  const auto f = friedman(m);
  std::string out = "method";
  for (const auto& t : m.tasks) out += "," + csv_field(t);
  out += ",Score,Rank\n";
  for (std::size_t i = 0; i < m.methods.size(); ++i) {
    out += csv_field(m.methods[i]);
    for (std::size_t j = 0; j < m.tasks.size(); ++j) out += "," + format_fixed(100.0 * m.scores(i, j), 2);
    out += "," + format_fixed(f.scores[i], 2) + "," + std::to_string(f.rank[i]) + "\n";
  }
  return out;
}

std::string summary_text(const ScoreMatrix& m) {
  const auto f = friedman(m);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Method"};
  header.insert(header.end(), m.tasks.begin(), m.tasks.end());
  header.push_back("Score");
  header.push_back("Rank");
  rows.push_back(header);
  for (std::size_t i = 0; i < m.methods.size(); ++i) {
    std::vector<std::string> row{m.methods[i]};
    for (std::size_t j = 0; j < m.tasks.size(); ++j) row.push_back(format_fixed(100.0 * m.scores(i, j), 2));
    row.push_back(format_fixed(f.scores[i], 2));
    row.push_back(std::to_string(f.rank[i]));
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  }
  std::string out;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      const std::string pad(width[c] - r[c].size(), ' ');
      if (c == 0) {
        out += r[c] + pad;
      } else {
        out += "  " + pad + r[c];
      }
    }
    out += "\n";
  }
  return out;
}

void write_report(const ScoreMatrix& m, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create report directory " + out_dir + ": " + ec.message());
  const std::filesystem::path dir(out_dir);
  binio::write_file((dir / "report.csv").string(), report_csv(m));
  binio::write_file((dir / "summary.txt").string(), summary_text(m));
  binio::write_file((dir / "summary.csv").string(), summary_csv(m));
}

ScoreMatrix parse_score_csv(std::string_view text, const std::string& source) {
  ScoreMatrix m;
  std::map<std::pair<std::size_t, std::size_t>, double> cells;
  auto index_of = [](std::vector<std::string>& v, const std::string& s) {
    const auto it = std::find(v.begin(), v.end(), s);
    if (it != v.end()) return static_cast<std::size_t>(it - v.begin());
    v.push_back(s);
    return v.size() - 1;
  };
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 3) {
      throw ParseError(ParseError::Kind::malformed,
                       source + ":" + std::to_string(line_no) + ": expected method,task,value");
    }
    if (f[0] == "method" && f[1] == "task" && f[2] == "value") continue;
    double v = 0;
    try {
      std::size_t used = 0;
      v = std::stod(f[2], &used);
      if (used != f[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::logic_error&) {
      throw ParseError(ParseError::Kind::malformed,
                       source + ":" + std::to_string(line_no) + ": bad value '" + f[2] + "'");
    }
    const std::size_t mi = index_of(m.methods, f[0]);
    const std::size_t ti = index_of(m.tasks, f[1]);
    if (!cells.emplace(std::pair{mi, ti}, v).second) {
      throw ParseError(ParseError::Kind::malformed, source + ":" + std::to_string(line_no) +
                                                        ": duplicate cell " + f[0] + "/" + f[1]);
    }
  }
  m.scores = Matrix(m.methods.size(), m.tasks.size());
  for (std::size_t i = 0; i < m.methods.size(); ++i) {
    for (std::size_t j = 0; j < m.tasks.size(); ++j) {
      const auto it = cells.find({i, j});
      if (it == cells.end()) {
        throw ValidationError(source + ": missing score for " + m.methods[i] + " on " + m.tasks[j]);
      }
      m.scores(i, j) = it->second;
    }
  }
  m.validate();
  return m;
}

ScoreMatrix load_score_csv(const std::vector<std::string>& paths) {
  if (paths.empty()) throw ValidationError("no score files given");
  std::string all;
  for (const auto& p : paths) {
    auto text = binio::read_file(p);
    if (!text.empty() && text.back() != '\n') text += '\n';
    all += text;
  }
  return parse_score_csv(all, paths.size() == 1 ? paths.front() : "score files");
}

}  // namespace geovec
