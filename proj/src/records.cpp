#include "geovec/records.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace geovec {

using nlohmann::json;

std::string to_string(MetaTask m) {
  switch (m) {
    case MetaTask::classification: return "classification";
    case MetaTask::retrieval: return "retrieval";
    case MetaTask::vqa: return "vqa";
    case MetaTask::grounding: return "grounding";
    case MetaTask::spatial: return "spatial";
    case MetaTask::geo: return "geo";
  }
  return "?";
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::accuracy: return "accuracy";
    case Metric::mean_recall_1_5_10: return "mean_recall_1_5_10";
    case Metric::precision_at_1: return "precision_at_1";
  }
  return "?";
}

MetaTask parse_meta_task(std::string_view s) {
  for (auto m : {MetaTask::classification, MetaTask::retrieval, MetaTask::vqa, MetaTask::grounding,
                 MetaTask::spatial, MetaTask::geo}) {
    if (to_string(m) == s) return m;
  }
  throw ValidationError("unknown meta_task '" + std::string(s) + "'");
}

Metric parse_metric(std::string_view s) {
  for (auto m : {Metric::accuracy, Metric::mean_recall_1_5_10, Metric::precision_at_1}) {
    if (to_string(m) == s) return m;
  }
  throw ValidationError("unknown metric '" + std::string(s) + "'");
}

void TaskSpec::validate() const {
  if (name.empty()) throw ValidationError("task spec without a name");
  if (queries.empty()) throw ValidationError("task '" + name + "' has no queries");
  if (candidates.empty()) throw ValidationError("task '" + name + "' has no candidates");
  std::set<std::string> cand_ids;
  for (const auto& c : candidates) {
    if (!cand_ids.insert(c.id).second) {
      throw ValidationError("task '" + name + "': duplicate candidate id '" + c.id + "'");
    }
  }
  std::set<std::string> query_ids;
  for (const auto& q : queries) {
    if (!query_ids.insert(q.id).second) {
      throw ValidationError("task '" + name + "': duplicate query id '" + q.id + "'");
    }
    const auto it = qrels.find(q.id);
    if (it == qrels.end() || it->second.empty()) {
      throw ValidationError("task '" + name + "': query '" + q.id + "' has no relevant candidate");
    }
    for (const auto& rel : it->second) {
      if (!cand_ids.count(rel)) {
        throw ValidationError("task '" + name + "': qrel '" + rel + "' is not a candidate");
      }
    }
  }
}

json to_json(const ItemSide& s) {
  json j;
  j["instruction"] = s.instruction;
  if (s.text) j["text"] = *s.text;
  if (s.image_ref) j["image_ref"] = *s.image_ref;
  if (s.bbox) j["bbox"] = {s.bbox->x_min, s.bbox->y_min, s.bbox->x_max, s.bbox->y_max};
  if (s.geo) j["geo"] = {s.geo->latitude, s.geo->longitude};
  if (s.crop) j["crop"] = true;
  return j;
}

ItemSide side_from_json(const json& j) {
  ItemSide s;
  s.instruction = j.value("instruction", std::string());
  if (j.contains("text")) s.text = j.at("text").get<std::string>();
  if (j.contains("image_ref")) s.image_ref = j.at("image_ref").get<std::string>();
  if (j.contains("bbox")) {
    const auto& b = j.at("bbox");
    if (!b.is_array() || b.size() != 4) throw ValidationError("bbox must be an array of 4 integers");
    s.bbox = BoundingBox{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
    s.bbox->validate();
  }
  if (j.contains("geo")) {
    const auto& g = j.at("geo");
    if (!g.is_array() || g.size() != 2) throw ValidationError("geo must be [latitude, longitude]");
    s.geo = GeoCoordinate{g[0].get<double>(), g[1].get<double>()};
    s.geo->validate();
  }
  s.crop = j.value("crop", false);
  return s;
}

json to_json(const PairRecord& p) {
  return json{{"task", p.task}, {"query", to_json(p.query)}, {"target", to_json(p.target)}};
}

PairRecord pair_from_json(const json& j) {
  return {j.at("task").get<std::string>(), side_from_json(j.at("query")),
          side_from_json(j.at("target"))};
}

json to_json(const TaskSpec& t) {
  json j;
  j["name"] = t.name;
  j["meta_task"] = to_string(t.meta_task);
  j["metric"] = to_string(t.metric);
  j["exclude_self"] = t.exclude_self;
  auto items = [](const std::vector<TaskItem>& v) {
    json a = json::array();
    for (const auto& it : v) a.push_back({{"id", it.id}, {"side", to_json(it.side)}});
    return a;
  };
  j["queries"] = items(t.queries);
  j["candidates"] = items(t.candidates);
  j["qrels"] = t.qrels;
  return j;
}

TaskSpec task_from_json(const json& j) {
  TaskSpec t;
  t.name = j.at("name").get<std::string>();
  t.meta_task = parse_meta_task(j.at("meta_task").get<std::string>());
  t.metric = parse_metric(j.at("metric").get<std::string>());
  t.exclude_self = j.value("exclude_self", false);
  for (const auto& q : j.at("queries")) {
    t.queries.push_back({q.at("id").get<std::string>(), side_from_json(q.at("side"))});
  }
  for (const auto& c : j.at("candidates")) {
    t.candidates.push_back({c.at("id").get<std::string>(), side_from_json(c.at("side"))});
  }
  t.qrels = j.at("qrels").get<std::map<std::string, std::vector<std::string>>>();
  return t;
}

std::vector<TaskSpec> load_task_specs(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open task spec file " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ParseError(ParseError::Kind::malformed, path + ": " + e.what());
  }
  std::vector<TaskSpec> out;
  auto one = [&](const json& obj) {
    std::string name = obj.is_object() ? obj.value("name", std::string("?")) : std::string("?");
    try {
      out.push_back(task_from_json(obj));
      out.back().validate();
    } catch (const json::exception& e) {
      throw ValidationError("task '" + name + "': " + e.what());
    }
  };
  if (j.is_array()) {
    for (const auto& obj : j) one(obj);
  } else {
    one(j);
  }
  return out;
}

void save_task_specs(const std::vector<TaskSpec>& specs, const std::string& path) {
  json a = json::array();
  for (const auto& s : specs) a.push_back(to_json(s));
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path);
  f << a.dump(1) << "\n";
}

}  // namespace geovec
