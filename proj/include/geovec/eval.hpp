#pragma once

// Ranking metrics, task execution over an EmbeddingStore, Friedman rank
// aggregation and report files.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "geovec/data.hpp"
#include "geovec/encoder.hpp"
#include "geovec/index.hpp"
#include "geovec/records.hpp"

namespace geovec {

using Qrels = std::map<std::string, std::vector<std::string>>;

struct QueryRanking {
  std::string query_id;
  std::vector<std::string> ranked;  // candidate ids, best first
};

// Fraction of queries in `qrels` whose top-1 prediction is relevant.
// Every query needs a prediction.
double accuracy(const std::map<std::string, std::string>& top1, const Qrels& qrels);

// Per query 1 if any relevant id is in the first k, averaged.
double recall_at_k(const std::vector<QueryRanking>& rankings, const Qrels& qrels, std::size_t k);

// (R@1 + R@5 + R@10) / 3
double mean_recall(const std::vector<QueryRanking>& rankings, const Qrels& qrels);

double precision_at_1(const std::vector<QueryRanking>& rankings, const Qrels& qrels);

double metric_value(Metric m, const std::vector<QueryRanking>& rankings, const Qrels& qrels);

// "<prefix> <label>"
std::string render_label_prompt(std::string_view prefix, std::string_view label);

// Mean of the embeddings of every prefix rendered with each class name,
// renormalized; one row per class.
std::vector<EmbeddingVector> class_prototypes(const Encoder& enc, const StreamBuilder& builder,
                                              const std::vector<std::string>& class_names,
                                              const std::vector<std::string>& prefixes,
                                              std::size_t threads = 1);

// Index of the class whose prototype has the highest cosine with the
// query; ties go to the lower index.
std::size_t ensemble_classify(const Encoder& enc, const StreamBuilder& builder,
                              const std::vector<std::string>& class_names,
                              const std::vector<std::string>& prefixes,
                              const EmbeddingVector& image_query);

std::vector<std::string> default_ensemble_prefixes();

struct TaskResult {
  std::string task;
  Metric metric = Metric::precision_at_1;
  double value = 0;
  std::vector<QueryRanking> rankings;
};

inline constexpr std::size_t kRankDepth = 10;

// Embeds the candidate pool once, ranks every query against it and applies
// the task metric. Classification tasks score queries against 20-prompt
// ensemble prototypes of the candidate labels.
TaskResult run_task(const Encoder& enc, const StreamBuilder& builder, const TaskSpec& spec,
                    std::size_t threads = 1);

// Methods x tasks, higher is better.
struct ScoreMatrix {
  std::vector<std::string> methods;
  std::vector<std::string> tasks;
  Matrix scores;

  void validate() const;
  friend bool operator==(const ScoreMatrix&, const ScoreMatrix&) = default;
};

struct FriedmanResult {
  std::vector<double> scores;     // mean rank per method
  std::vector<std::size_t> rank;  // 1-based final rank per method
};

// Per task, methods are ranked by descending value with tied methods
// sharing the average of their positions. Final rank orders the mean
// ranks ascending, ties kept in method order.
FriedmanResult friedman(const ScoreMatrix& m);

// Writes report.csv (method,task,value), summary.txt and summary.csv into
// `out_dir`. Summary values are percentages with two decimals.
void write_report(const ScoreMatrix& m, const std::string& out_dir);
std::string report_csv(const ScoreMatrix& m);
std::string summary_text(const ScoreMatrix& m);
std::string summary_csv(const ScoreMatrix& m);

// Long-format "method,task,value" CSV. Rows from several files may be
// concatenated; methods and tasks keep first-appearance order.
ScoreMatrix parse_score_csv(std::string_view text, const std::string& source = "csv");
ScoreMatrix load_score_csv(const std::vector<std::string>& paths);

std::string format_fixed(double v, int decimals);

}  // namespace geovec
