#include "geovec/tokens.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "geovec/rng.hpp"

namespace geovec {

namespace {

void check_percent(int v, const char* field) {
  if (v < 0 || v > 100) {
    throw ValidationError(std::string("bbox ") + field + " = " + std::to_string(v) +
                          " outside [0,100]");
  }
}

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

}  // namespace

void BoundingBox::validate() const {
  check_percent(x_min, "x_min");
  check_percent(y_min, "y_min");
  check_percent(x_max, "x_max");
  check_percent(y_max, "y_max");
  if (x_min > x_max) throw ValidationError("bbox x_min > x_max");
  if (y_min > y_max) throw ValidationError("bbox y_min > y_max");
}

void GeoCoordinate::validate() const {
  if (!(latitude >= -90.0 && latitude <= 90.0)) {
    throw ValidationError("latitude " + std::to_string(latitude) + " outside [-90,90]");
  }
  if (!(longitude >= -180.0 && longitude <= 180.0)) {
    throw ValidationError("longitude " + std::to_string(longitude) + " outside [-180,180]");
  }
}

BoundingBox normalize_bbox(const PixelBox& px, double image_w, double image_h) {
  if (!(image_w > 0)) throw ValidationError("image_w must be positive");
  if (!(image_h > 0)) throw ValidationError("image_h must be positive");
  auto check = [](double v, double dim, const char* field) {
    if (!(v >= 0.0 && v <= dim)) {
      throw ValidationError(std::string("pixel ") + field + " = " + std::to_string(v) +
                            " outside [0," + std::to_string(dim) + "]");
    }
  };
  check(px.x_min, image_w, "x_min");
  check(px.y_min, image_h, "y_min");
  check(px.x_max, image_w, "x_max");
  check(px.y_max, image_h, "y_max");
  if (px.x_min > px.x_max) throw ValidationError("pixel x_min > x_max");
  if (px.y_min > px.y_max) throw ValidationError("pixel y_min > y_max");

  BoundingBox b{round_half_up(100.0 * px.x_min / image_w), round_half_up(100.0 * px.y_min / image_h),
                round_half_up(100.0 * px.x_max / image_w), round_half_up(100.0 * px.y_max / image_h)};
  b.validate();
  return b;
}

std::string serialize_bbox(const BoundingBox& b) {
  return "[" + std::to_string(b.x_min) + "," + std::to_string(b.y_min) + "," +
         std::to_string(b.x_max) + "," + std::to_string(b.y_max) + "]";
}

BoundingBox parse_bbox(std::string_view s) {
  auto fail = [&] { return ParseError(ParseError::Kind::malformed, "bad bbox: '" + std::string(s) + "'"); };
  if (s.size() < 9 || s.front() != '[' || s.back() != ']') throw fail();
  int v[4];
  std::size_t pos = 1;
  for (int k = 0; k < 4; ++k) {
    const std::size_t start = pos;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
    const std::size_t len = pos - start;
    // Canonical form only: no sign, no leading zeros, at most 3 digits.
    if (len == 0 || len > 3 || (len > 1 && s[start] == '0')) throw fail();
    v[k] = std::stoi(std::string(s.substr(start, len)));
    const char expect = k < 3 ? ',' : ']';
    if (pos >= s.size() || s[pos] != expect) throw fail();
    ++pos;
  }
  if (pos != s.size()) throw fail();
  BoundingBox b{v[0], v[1], v[2], v[3]};
  b.validate();
  return b;
}

std::string serialize_geo(const GeoCoordinate& g) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "(%.6f, %.6f)", g.latitude, g.longitude);
  return buf;
}

Tokenizer::Tokenizer(std::uint32_t vocab_size) : vocab_size_(vocab_size) {
  if (vocab_size == 0) throw ConfigError("vocab_size must be >= 1");
}

std::vector<std::string> Tokenizer::split(std::string_view text) const {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.push_back(std::move(word));
    word.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      word.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return out;
}

std::uint32_t Tokenizer::id_of(std::string_view piece) const {
  return static_cast<std::uint32_t>(fnv1a64(piece) % vocab_size_);
}

std::vector<std::uint32_t> Tokenizer::encode(std::string_view text) const {
  std::vector<std::uint32_t> ids;
  for (const auto& piece : split(text)) ids.push_back(id_of(piece));
  return ids;
}

std::vector<std::string> InstructionTemplate::placeholders() const {
  std::vector<std::string> names;
  std::size_t pos = 0;
  while ((pos = text.find('{', pos)) != std::string::npos) {
    const std::size_t end = text.find('}', pos);
    if (end == std::string::npos) break;
    std::string name = text.substr(pos + 1, end - pos - 1);
    if (std::find(names.begin(), names.end(), name) == names.end()) names.push_back(name);
    pos = end + 1;
  }
  return names;
}

std::string render_template(const InstructionTemplate& t, const PlaceholderMap& fields) {
  std::string out;
  out.reserve(t.text.size());
  std::size_t pos = 0;
  for (;;) {
    const std::size_t open = t.text.find('{', pos);
    if (open == std::string::npos) break;
    const std::size_t close = t.text.find('}', open);
    if (close == std::string::npos) break;
    const std::string_view name(t.text.data() + open + 1, close - open - 1);
    const auto it = fields.find(name);
    if (it == fields.end()) {
      throw ValidationError("template for task '" + t.task + "' needs placeholder {" +
                            std::string(name) + "}");
    }
    out.append(t.text, pos, open - pos);
    out += it->second;
    pos = close + 1;
  }
  out.append(t.text, pos, std::string::npos);
  return out;
}

void TemplateRegistry::add(std::string task, std::vector<std::string> templates) {
  if (templates.empty()) throw ValidationError("task '" + task + "' has no templates");
  auto& slot = by_task_[task];
  for (auto& text : templates) slot.push_back({task, std::move(text)});
}

bool TemplateRegistry::contains(std::string_view task) const {
  return by_task_.find(task) != by_task_.end();
}

std::vector<std::string> TemplateRegistry::tasks() const {
  std::vector<std::string> names;
  for (const auto& [name, _] : by_task_) names.push_back(name);
  return names;
}

const std::vector<InstructionTemplate>& TemplateRegistry::templates(std::string_view task) const {
  const auto it = by_task_.find(task);
  if (it == by_task_.end()) {
    std::string known;
    for (const auto& name : tasks()) known += (known.empty() ? "" : ", ") + name;
    throw ValidationError("unknown template task '" + std::string(task) + "'; registered: " + known);
  }
  return it->second;
}

const InstructionTemplate& TemplateRegistry::primary(std::string_view task) const {
  return templates(task).front();
}

const InstructionTemplate& TemplateRegistry::sample(std::string_view task, std::uint64_t seed,
                                                    std::uint64_t index) const {
  const auto& list = templates(task);
  const std::uint64_t word = derive_seed(derive_seed(seed, task), index);
  return list[bounded(word, list.size())];
}

InstructionTemplate sample_template(const TemplateRegistry& registry, std::string_view task,
                                    std::uint64_t seed, std::uint64_t index) {
  return registry.sample(task, seed, index);
}

TemplateRegistry TemplateRegistry::parse_jsonl(std::string_view text) {
  TemplateRegistry reg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      reg.add(j.at("task").get<std::string>(), j.at("templates").get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(ParseError::Kind::malformed,
                       "template registry line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return reg;
}

TemplateRegistry TemplateRegistry::load_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open template registry " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_jsonl(ss.str());
}

std::string TemplateRegistry::to_jsonl() const {
  std::string out;
  for (const auto& [task, list] : by_task_) {
    nlohmann::json j;
    j["task"] = task;
    j["templates"] = nlohmann::json::array();
    for (const auto& t : list) j["templates"].push_back(t.text);
    out += j.dump() + "\n";
  }
  return out;
}

TokenStream build_stream(const Tokenizer& tok, const StreamInputs& in, std::size_t max_len,
                         std::string task) {
  if (max_len == 0) throw ConfigError("max_len must be >= 1");
  TokenStream s;
  s.task = std::move(task);

  auto push_text = [&](std::string_view text) {
    for (auto id : tok.encode(text)) s.tokens.push_back({Token::Kind::vocab, id});
  };

  push_text(in.instruction);
  if (in.patches != nullptr && !in.patches->empty()) {
    s.patches = *in.patches;
    for (std::size_t i = 0; i < s.patches.size(); ++i) {
      s.tokens.push_back({Token::Kind::patch, static_cast<std::uint32_t>(i)});
    }
  }
  if (in.text) push_text(*in.text);
  if (in.bbox) {
    in.bbox->validate();
    push_text(serialize_bbox(*in.bbox));
  }
  if (in.geo) {
    in.geo->validate();
    push_text(serialize_geo(*in.geo));
  }

  if (s.tokens.empty()) throw ValidationError("token stream is empty after tokenization");
  if (s.tokens.size() > max_len) {
    s.tokens.resize(max_len);
    s.truncated = true;
  }
  return s;
}

}  // namespace geovec
