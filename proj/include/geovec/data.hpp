#pragma once

// Contrastive pair ingestion, per-subset capping, patch providers and the
// synthetic desk-scale corpus.

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "geovec/records.hpp"
#include "geovec/tokens.hpp"

namespace geovec {

inline constexpr std::size_t kDefaultSubsetCap = 100000;

struct CorpusManifest {
  struct Subset {
    std::string name;
    std::string path;
    std::uint64_t raw_count = 0;
    std::uint64_t capped_count = 0;
  };
  std::vector<Subset> subsets;

  // Records a subset, capping it at `cap`.
  const Subset& add(std::string name, std::string path, std::uint64_t raw_count, std::uint64_t cap);
  std::uint64_t total_capped() const;
  std::uint64_t total_raw() const;
};

// Sorted indices of a uniform seeded sample of min(raw, cap) of [0, raw).
std::vector<std::size_t> capped_sample(std::size_t raw, std::size_t cap, std::uint64_t seed);

struct LoadedPairs {
  std::vector<PairRecord> records;
  CorpusManifest::Subset subset;
};

// Line-delimited JSON PairRecords. Above `cap`, keeps a seeded uniform
// sample of exactly `cap` records in file order.
LoadedPairs load_pairs(const std::string& path, std::size_t cap = kDefaultSubsetCap,
                       std::uint64_t seed = 42);
std::vector<PairRecord> parse_pairs(std::string_view jsonl, const std::string& source);
void save_pairs(const std::vector<PairRecord>& pairs, const std::string& path);

// Construction rules from annotated samples to query/target pairs.
enum class PairKind {
  classification,           // image -> class label
  image_to_text,            // image -> caption
  text_to_image,            // caption -> image
  composed_retrieval,       // image region + modifier text -> full image
  vqa,                      // image + question -> answer
  referring_expression,     // image + region description -> region crop
  region_caption,           // image + bbox -> region caption
  grounded_text_to_image,   // caption with boxes -> image
  geo_text_to_image,        // caption + (lat, lon) -> image
};

std::string to_string(PairKind k);
PairKind parse_pair_kind(std::string_view s);

struct PairFields {
  std::optional<std::string> image_ref;
  std::optional<std::string> text;    // label, caption, modifier, question or description
  std::optional<std::string> answer;  // vqa only
  std::optional<BoundingBox> bbox;
  std::optional<GeoCoordinate> geo;
};

PairRecord make_pair(PairKind kind, const PairFields& fields);

// Resolves image references to patch tokens. "synth:<seed>:<class>:<item>"
// refs draw patches clustered around a per-class center; refs ending in
// ".gpat" load a sidecar file relative to `base_dir`; anything else draws
// unclustered patches seeded by the ref string.
class PatchProvider {
 public:
  struct Config {
    std::size_t d_patch = 32;
    std::size_t grid = 4;  // synthetic images are grid x grid patches
    std::string base_dir = ".";
  };

  explicit PatchProvider(Config cfg);
  PatchProvider(const PatchProvider& other) : cfg_(other.cfg_) {}

  const Config& config() const { return cfg_; }
  PatchSequence patches(const std::string& ref) const;

  // Patches whose centers fall inside the box. Never empty: a box too small
  // to contain a center keeps the patch nearest to the box center.
  static PatchSequence crop(const PatchSequence& full, const BoundingBox& box);

 private:
  Config cfg_;
  mutable std::mutex mu_;
  mutable std::map<std::string, PatchSequence> sidecar_cache_;
};

// "GPAT" sidecar: magic, u32 version=1, u32 n_patches, u32 d_patch, then
// float32 little-endian payload.
void save_patches(const PatchSequence& p, const std::string& path);
PatchSequence load_patches(const std::string& path);

// Everything needed to turn an ItemSide into a TokenStream.
struct StreamBuilder {
  const Tokenizer& tokenizer;
  const TemplateRegistry& templates;
  const PatchProvider& patches;
  std::size_t max_len = kDefaultMaxLen;

  // Renders `tmpl` with the side's fields. Fields consumed by a template
  // placeholder are not appended again as separate segments.
  TokenStream build(const ItemSide& side, const InstructionTemplate& tmpl,
                    const std::string& task = {}) const;
  // Uses the primary (inference) template of the side's instruction key.
  TokenStream build(const ItemSide& side, const std::string& task = {}) const;
};

struct SynthCorpus {
  std::vector<std::string> class_names;
  std::vector<PairRecord> pairs;
  std::vector<TaskSpec> tasks;  // one per meta-task, over held-out items
};

struct SynthOptions {
  std::size_t n_classes = 26;
  std::size_t pairs_per_class = 40;
  std::size_t held_out_per_class = 4;
  std::uint64_t seed = 42;
};

SynthCorpus synth_corpus(const SynthOptions& opt);

}  // namespace geovec
