#pragma once

// Record types shared by the data loaders and the evaluation harness, with
// their JSON forms.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "geovec/tokens.hpp"

namespace geovec {

// One side (query or target) of a pair or task item. `instruction` is a
// template registry key; the concrete prompt is chosen when the stream is
// built. With `crop`, the image is restricted to the patches whose centers
// fall inside `bbox` and the box itself is not serialized.
struct ItemSide {
  std::string instruction;
  std::optional<std::string> text;
  std::optional<std::string> image_ref;
  std::optional<BoundingBox> bbox;
  std::optional<GeoCoordinate> geo;
  bool crop = false;

  friend bool operator==(const ItemSide&, const ItemSide&) = default;
};

struct PairRecord {
  std::string task;
  ItemSide query;
  ItemSide target;

  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

enum class MetaTask { classification, retrieval, vqa, grounding, spatial, geo };
enum class Metric { accuracy, mean_recall_1_5_10, precision_at_1 };

std::string to_string(MetaTask m);
std::string to_string(Metric m);
MetaTask parse_meta_task(std::string_view s);
Metric parse_metric(std::string_view s);

struct TaskItem {
  std::string id;
  ItemSide side;
  friend bool operator==(const TaskItem&, const TaskItem&) = default;
};

struct TaskSpec {
  std::string name;
  MetaTask meta_task = MetaTask::retrieval;
  Metric metric = Metric::precision_at_1;
  std::vector<TaskItem> queries;
  std::vector<TaskItem> candidates;
  std::map<std::string, std::vector<std::string>> qrels;  // query id -> relevant candidate ids
  // Drop a candidate whose id equals the query id from that query's ranking.
  bool exclude_self = false;

  void validate() const;
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

nlohmann::json to_json(const ItemSide& s);
ItemSide side_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PairRecord& p);
PairRecord pair_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TaskSpec& t);
TaskSpec task_from_json(const nlohmann::json& j);

// A file holding either one TaskSpec object or an array of them.
std::vector<TaskSpec> load_task_specs(const std::string& path);
void save_task_specs(const std::vector<TaskSpec>& specs, const std::string& path);

}  // namespace geovec
