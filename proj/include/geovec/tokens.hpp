#pragma once

// Interleaved token streams: vocabulary tokens for instruction and text,
// inline patch tokens for images, and textual serializations of bounding
// boxes and geo-coordinates.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "geovec/common.hpp"

namespace geovec {

inline constexpr std::size_t kDefaultMaxLen = 4096;
inline constexpr std::uint32_t kDefaultVocabSize = 32768;

// Number of patch tokens for a square image split into square patches,
// e.g. 336 px at 14 px per patch gives a 24 x 24 grid of 576 tokens.
constexpr std::size_t patch_count(std::size_t image_px, std::size_t patch_px) {
  return (image_px / patch_px) * (image_px / patch_px);
}

struct Token {
  enum class Kind : std::uint8_t { vocab, patch };
  Kind kind = Kind::vocab;
  // Vocabulary id, or row index into TokenStream::patches for patch tokens.
  std::uint32_t id = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

// Row-major [n_patches][d_patch] patch embeddings for one image.
struct PatchSequence {
  std::size_t d_patch = 0;
  std::vector<double> values;

  std::size_t size() const { return d_patch == 0 ? 0 : values.size() / d_patch; }
  bool empty() const { return size() == 0; }
  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * d_patch, d_patch};
  }
  friend bool operator==(const PatchSequence&, const PatchSequence&) = default;
};

struct TokenStream {
  std::vector<Token> tokens;
  PatchSequence patches;  // referenced by patch tokens
  std::string task;
  bool truncated = false;

  std::size_t size() const { return tokens.size(); }
  std::span<const double> patch(const Token& t) const { return patches.row(t.id); }
  friend bool operator==(const TokenStream&, const TokenStream&) = default;
};

struct PixelBox {
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
};

// Axis-aligned box in integer percent coordinates.
struct BoundingBox {
  int x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  void validate() const;
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct GeoCoordinate {
  double latitude = 0;
  double longitude = 0;

  void validate() const;
  friend bool operator==(const GeoCoordinate&, const GeoCoordinate&) = default;
};

// Pixel rectangle to percent box: round(100 * px / dim), halves rounded up.
BoundingBox normalize_bbox(const PixelBox& px, double image_w, double image_h);

// "[x_min,y_min,x_max,y_max]"
std::string serialize_bbox(const BoundingBox& b);
BoundingBox parse_bbox(std::string_view s);

// "(lat, lon)" with six decimals each.
std::string serialize_geo(const GeoCoordinate& g);

// Lower-cased words and single punctuation characters hashed into
// [0, vocab_size). Whitespace separates words and is dropped.
class Tokenizer {
 public:
  explicit Tokenizer(std::uint32_t vocab_size = kDefaultVocabSize);

  std::vector<std::uint32_t> encode(std::string_view text) const;
  std::vector<std::string> split(std::string_view text) const;
  std::uint32_t id_of(std::string_view piece) const;
  std::uint32_t vocab_size() const { return vocab_size_; }

 private:
  std::uint32_t vocab_size_;
};

struct InstructionTemplate {
  std::string task;
  std::string text;

  // Placeholder names in order of first appearance, e.g. {"bbox"}.
  std::vector<std::string> placeholders() const;
};

using PlaceholderMap = std::map<std::string, std::string, std::less<>>;

// Substitutes every {name} in the template. A placeholder without a value
// raises ValidationError naming it. Extra map entries are ignored.
std::string render_template(const InstructionTemplate& t, const PlaceholderMap& fields);

class TemplateRegistry {
 public:
  TemplateRegistry() = default;

  // Built-in set: the inference prompts for every query and target role,
  // each followed by paraphrases used for training-time sampling.
  static TemplateRegistry defaults();

  // One JSON object per line: {"task": str, "templates": [str, ...]}.
  static TemplateRegistry load_jsonl(const std::string& path);
  static TemplateRegistry parse_jsonl(std::string_view text);
  std::string to_jsonl() const;

  void add(std::string task, std::vector<std::string> templates);
  bool contains(std::string_view task) const;
  const std::vector<InstructionTemplate>& templates(std::string_view task) const;
  // First registered template: the fixed inference prompt for the task.
  const InstructionTemplate& primary(std::string_view task) const;
  std::vector<std::string> tasks() const;

  // Uniform draw, a pure function of (task, seed, index).
  const InstructionTemplate& sample(std::string_view task, std::uint64_t seed,
                                    std::uint64_t index) const;

 private:
  std::map<std::string, std::vector<InstructionTemplate>, std::less<>> by_task_;
};

InstructionTemplate sample_template(const TemplateRegistry& registry, std::string_view task,
                                    std::uint64_t seed, std::uint64_t index);

struct StreamInputs {
  std::string instruction;
  std::optional<std::string> text;
  const PatchSequence* patches = nullptr;
  std::optional<BoundingBox> bbox;
  std::optional<GeoCoordinate> geo;
};

// Concatenates instruction, patches, text, bbox and geo tokens in that
// order and truncates to the first max_len tokens.
TokenStream build_stream(const Tokenizer& tok, const StreamInputs& in,
                         std::size_t max_len = kDefaultMaxLen, std::string task = {});

}  // namespace geovec
