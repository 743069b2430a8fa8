#include "geovec/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "geovec/prompts.hpp"
#include "geovec/rng.hpp"

namespace geovec {

using nlohmann::json;

const CorpusManifest::Subset& CorpusManifest::add(std::string name, std::string path,
                                                  std::uint64_t raw_count, std::uint64_t cap) {
  subsets.push_back({std::move(name), std::move(path), raw_count, std::min(raw_count, cap)});
  return subsets.back();
}

std::uint64_t CorpusManifest::total_capped() const {
  std::uint64_t n = 0;
  for (const auto& s : subsets) n += s.capped_count;
  return n;
}

std::uint64_t CorpusManifest::total_raw() const {
  std::uint64_t n = 0;
  for (const auto& s : subsets) n += s.raw_count;
  return n;
}

std::vector<std::size_t> capped_sample(std::size_t raw, std::size_t cap, std::uint64_t seed) {
  std::vector<std::size_t> idx(raw);
  for (std::size_t i = 0; i < raw; ++i) idx[i] = i;
  if (raw <= cap) return idx;
  // Partial Fisher-Yates: the first `cap` slots become a uniform sample.
  Rng rng(derive_seed(seed, "data.cap"));
  for (std::size_t i = 0; i < cap; ++i) {
    const std::size_t j = i + rng.below(raw - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<PairRecord> parse_pairs(std::string_view jsonl, const std::string& source) {
  std::vector<PairRecord> out;
  std::istringstream in{std::string(jsonl)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(pair_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(ParseError::Kind::malformed,
                       source + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ParseError(ParseError::Kind::malformed,
                       source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

LoadedPairs load_pairs(const std::string& path, std::size_t cap, std::uint64_t seed) {
  auto all = parse_pairs(binio::read_file(path), path);
  LoadedPairs out;
  out.subset = {std::filesystem::path(path).stem().string(), path, all.size(),
                std::min<std::uint64_t>(all.size(), cap)};
  for (std::size_t i : capped_sample(all.size(), cap, seed)) out.records.push_back(std::move(all[i]));
  return out;
}

void save_pairs(const std::vector<PairRecord>& pairs, const std::string& path) {
  std::string text;
  for (const auto& p : pairs) text += to_json(p).dump() + "\n";
  binio::write_file(path, text);
}

namespace {

constexpr std::string_view kPairKindNames[] = {
    "classification", "image_to_text", "text_to_image", "composed_retrieval", "vqa",
    "referring_expression", "region_caption", "grounded_text_to_image", "geo_text_to_image"};

}  // namespace

std::string to_string(PairKind k) { return std::string(kPairKindNames[static_cast<int>(k)]); }

PairKind parse_pair_kind(std::string_view s) {
  for (int i = 0; i < 9; ++i) {
    if (kPairKindNames[i] == s) return static_cast<PairKind>(i);
  }
  throw ValidationError("unknown pair kind '" + std::string(s) + "'");
}

PairRecord make_pair(PairKind kind, const PairFields& f) {
  const std::string name = to_string(kind);
  auto need = [&](bool present, const char* field) {
    if (!present) throw ValidationError(name + " pair requires field '" + field + "'");
  };
  auto side = [](std::string_view instruction) {
    ItemSide s;
    s.instruction = std::string(instruction);
    return s;
  };
  using namespace prompts;
  PairRecord p;
  p.task = name;
  switch (kind) {
    case PairKind::classification:
      need(f.image_ref.has_value(), "image_ref");
      need(f.text.has_value(), "text");
      p.query = side(kClassificationQuery);
      p.query.image_ref = f.image_ref;
      p.target = side(kClassificationTarget);
      p.target.text = f.text;
      break;
    case PairKind::image_to_text:
      need(f.image_ref.has_value(), "image_ref");
      need(f.text.has_value(), "text");
      p.query = side(kImageToTextQuery);
      p.query.image_ref = f.image_ref;
      p.target = side(kTextTarget);
      p.target.text = f.text;
      break;
    case PairKind::text_to_image:
      need(f.text.has_value(), "text");
      need(f.image_ref.has_value(), "image_ref");
      p.query = side(kTextToImageQuery);
      p.query.text = f.text;
      p.target = side(kTextToImageTarget);
      p.target.image_ref = f.image_ref;
      break;
    case PairKind::composed_retrieval:
      need(f.image_ref.has_value(), "image_ref");
      need(f.bbox.has_value(), "bbox");
      need(f.text.has_value(), "text");
      p.query = side(kComposedQuery);
      p.query.image_ref = f.image_ref;
      p.query.bbox = f.bbox;
      p.query.crop = true;
      p.query.text = f.text;
      p.target = side(kImageTarget);
      p.target.image_ref = f.image_ref;
      break;
    case PairKind::vqa:
      need(f.image_ref.has_value(), "image_ref");
      need(f.text.has_value(), "text");
      need(f.answer.has_value(), "answer");
      p.query = side(kVqaQuery);
      p.query.image_ref = f.image_ref;
      p.query.text = f.text;
      p.target = side(kTextTarget);
      p.target.text = f.answer;
      break;
    case PairKind::referring_expression:
      need(f.image_ref.has_value(), "image_ref");
      need(f.text.has_value(), "text");
      need(f.bbox.has_value(), "bbox");
      p.query = side(kRefExpQuery);
      p.query.image_ref = f.image_ref;
      p.query.text = f.text;
      p.target = side(kRefExpTarget);
      p.target.image_ref = f.image_ref;
      p.target.bbox = f.bbox;
      p.target.crop = true;
      break;
    case PairKind::region_caption:
      need(f.image_ref.has_value(), "image_ref");
      need(f.bbox.has_value(), "bbox");
      need(f.text.has_value(), "text");
      p.query = side(kRegionCaptionQuery);
      p.query.image_ref = f.image_ref;
      p.query.bbox = f.bbox;
      p.target = side(kTextTarget);
      p.target.text = f.text;
      break;
    case PairKind::grounded_text_to_image:
      need(f.text.has_value(), "text");
      need(f.image_ref.has_value(), "image_ref");
      p.query = side(kGroundedT2IQuery);
      p.query.text = f.text;
      p.query.bbox = f.bbox;
      p.target = side(kImageTarget);
      p.target.image_ref = f.image_ref;
      break;
    case PairKind::geo_text_to_image:
      need(f.text.has_value(), "text");
      need(f.geo.has_value(), "geo");
      need(f.image_ref.has_value(), "image_ref");
      p.query = side(kGeoT2IQuery);
      p.query.text = f.text;
      p.query.geo = f.geo;
      p.target = side(kImageTarget);
      p.target.image_ref = f.image_ref;
      break;
  }
  return p;
}

// ---- patches ---------------------------------------------------------------

namespace {

constexpr std::string_view kPatchMagic = "GPAT";
constexpr double kClassSpread = 0.5;

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

void save_patches(const PatchSequence& p, const std::string& path) {
  binio::Writer w;
  w.bytes(kPatchMagic);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(p.size()));
  w.u32(static_cast<std::uint32_t>(p.d_patch));
  for (double v : p.values) w.f32(static_cast<float>(v));
  binio::write_file(path, w.data());
}

PatchSequence load_patches(const std::string& path) {
  const std::string bytes = binio::read_file(path);
  binio::Reader r(bytes, path);
  if (bytes.size() < 4 || r.bytes(4) != kPatchMagic) {
    throw ParseError(ParseError::Kind::bad_magic, path + ": bad magic");
  }
  const auto version = r.u32();
  if (version != 1) throw ParseError(ParseError::Kind::bad_version, path + ": unsupported version");
  const auto n = r.u32();
  const auto d = r.u32();
  r.need(static_cast<std::size_t>(n) * d * 4);
  PatchSequence p;
  p.d_patch = d;
  p.values.resize(static_cast<std::size_t>(n) * d);
  for (auto& v : p.values) v = r.f32();
  return p;
}

PatchProvider::PatchProvider(Config cfg) : cfg_(std::move(cfg)) {
  if (cfg_.d_patch == 0 || cfg_.grid == 0) throw ConfigError("patch provider sizes must be >= 1");
}

PatchSequence PatchProvider::patches(const std::string& ref) const {
  const std::size_t n = cfg_.grid * cfg_.grid;
  const std::size_t d = cfg_.d_patch;
  PatchSequence p;
  p.d_patch = d;

  if (ends_with(ref, ".gpat")) {
    std::lock_guard lock(mu_);
    auto it = sidecar_cache_.find(ref);
    if (it == sidecar_cache_.end()) {
      auto loaded = load_patches((std::filesystem::path(cfg_.base_dir) / ref).string());
      if (loaded.d_patch != d) {
        throw ValidationError("sidecar " + ref + " has d_patch " + std::to_string(loaded.d_patch) +
                              ", expected " + std::to_string(d));
      }
      it = sidecar_cache_.emplace(ref, std::move(loaded)).first;
    }
    return it->second;
  }

  p.values.resize(n * d);
  if (ref.rfind("synth:", 0) == 0) {
    // synth:<seed>:<class>:<item>
    std::uint64_t seed = 0, cls = 0, item = 0;
    if (std::sscanf(ref.c_str(), "synth:%lu:%lu:%lu", &seed, &cls, &item) != 3) {
      throw ValidationError("malformed synthetic image ref '" + ref + "'");
    }
    Rng center_rng(derive_seed(derive_seed(seed, "synth.class"), cls));
    std::vector<double> center(d);
    for (auto& c : center) c = center_rng.normal();
    Rng noise(derive_seed(derive_seed(derive_seed(seed, "synth.image"), cls), item));
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < d; ++i) p.values[k * d + i] = center[i] + kClassSpread * noise.normal();
    }
    return p;
  }

  Rng rng(fnv1a64(ref));
  for (auto& v : p.values) v = rng.normal();
  return p;
}

PatchSequence PatchProvider::crop(const PatchSequence& full, const BoundingBox& box) {
  const std::size_t n = full.size();
  const auto grid = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (grid * grid != n) throw ValidationError("crop needs a square patch grid");
  PatchSequence out;
  out.d_patch = full.d_patch;
  std::size_t nearest = 0;
  double best = INFINITY;
  const double cx = 0.5 * (box.x_min + box.x_max);
  const double cy = 0.5 * (box.y_min + box.y_max);
  for (std::size_t r = 0; r < grid; ++r) {
    for (std::size_t c = 0; c < grid; ++c) {
      const double px = (static_cast<double>(c) + 0.5) * 100.0 / static_cast<double>(grid);
      const double py = (static_cast<double>(r) + 0.5) * 100.0 / static_cast<double>(grid);
      const std::size_t k = r * grid + c;
      if (px >= box.x_min && px <= box.x_max && py >= box.y_min && py <= box.y_max) {
        const auto row = full.row(k);
        out.values.insert(out.values.end(), row.begin(), row.end());
      }
      const double dist = (px - cx) * (px - cx) + (py - cy) * (py - cy);
      if (dist < best) {
        best = dist;
        nearest = k;
      }
    }
  }
  if (out.values.empty()) {
    const auto row = full.row(nearest);
    out.values.assign(row.begin(), row.end());
  }
  return out;
}

// ---- streams ---------------------------------------------------------------

TokenStream StreamBuilder::build(const ItemSide& side, const InstructionTemplate& tmpl,
                                 const std::string& task) const {
  PlaceholderMap fields;
  if (side.text) fields["text"] = *side.text;
  if (side.bbox) fields["bbox"] = serialize_bbox(*side.bbox);
  if (side.geo) fields["geo"] = serialize_geo(*side.geo);
  const auto used = tmpl.placeholders();
  auto consumed = [&](std::string_view name) {
    return std::find(used.begin(), used.end(), name) != used.end();
  };

  StreamInputs in;
  in.instruction = render_template(tmpl, fields);
  PatchSequence patch_storage;
  if (side.image_ref) {
    patch_storage = patches.patches(*side.image_ref);
    if (side.crop) {
      if (!side.bbox) throw ValidationError("crop requested without a bbox");
      patch_storage = PatchProvider::crop(patch_storage, *side.bbox);
    }
    in.patches = &patch_storage;
  }
  if (side.text && !consumed("text")) in.text = side.text;
  if (side.bbox && !side.crop && !consumed("bbox")) in.bbox = side.bbox;
  if (side.geo && !consumed("geo")) in.geo = side.geo;
  return build_stream(tokenizer, in, max_len, task);
}

TokenStream StreamBuilder::build(const ItemSide& side, const std::string& task) const {
  return build(side, templates.primary(side.instruction), task);
}

// ---- synthetic corpus ------------------------------------------------------

namespace {

constexpr std::string_view kClassNames[] = {
    "airport", "bareland", "stadium", "beach", "bridge", "center", "church", "commercial",
    "residential", "desert", "farmland", "forest", "industrial", "meadow", "harbor", "mountain",
    "park", "parking", "playground", "pond", "port", "station", "resort", "river", "school",
    "viaduct"};

constexpr std::string_view kCaptions[] = {
    "an overhead scene with a {}", "a satellite view of the {}", "remote sensing image showing a {}",
    "a large {}", "an aerial photo centered on a {}"};

std::string fill(std::string_view pattern, const std::string& name) {
  std::string s(pattern);
  s.replace(s.find("{}"), 2, name);
  return s;
}

std::string synth_ref(std::uint64_t seed, std::size_t cls, std::size_t item) {
  return "synth:" + std::to_string(seed) + ":" + std::to_string(cls) + ":" + std::to_string(item);
}

BoundingBox synth_box(std::uint64_t seed, std::size_t cls, std::size_t item) {
  Rng rng(derive_seed(derive_seed(derive_seed(seed, "synth.bbox"), cls), item));
  const int x0 = static_cast<int>(rng.below(51));
  const int y0 = static_cast<int>(rng.below(51));
  const int w = 25 + static_cast<int>(rng.below(26));
  const int h = 25 + static_cast<int>(rng.below(26));
  return {x0, y0, x0 + w, y0 + h};
}

GeoCoordinate synth_geo(std::uint64_t seed, std::size_t cls, std::size_t item) {
  Rng site(derive_seed(derive_seed(seed, "synth.site"), cls));
  const double lat = -60.0 + 120.0 * site.uniform();
  const double lon = -170.0 + 340.0 * site.uniform();
  Rng jitter(derive_seed(derive_seed(derive_seed(seed, "synth.geo"), cls), item));
  const double jlat = 0.1 * (jitter.uniform() - 0.5);
  const double jlon = 0.1 * (jitter.uniform() - 0.5);
  // Quantize to the serialized precision so JSON round trips are exact.
  auto q = [](double v) { return std::round(v * 1e6) / 1e6; };
  return {q(lat + jlat), q(lon + jlon)};
}

}  // namespace

SynthCorpus synth_corpus(const SynthOptions& opt) {
  if (opt.n_classes < 2) throw ValidationError("synth_corpus needs at least 2 classes");
  if (opt.pairs_per_class == 0) throw ValidationError("synth_corpus needs pairs_per_class >= 1");
  SynthCorpus c;
  for (std::size_t k = 0; k < opt.n_classes; ++k) {
    c.class_names.push_back(k < std::size(kClassNames) ? std::string(kClassNames[k])
                                                       : "class" + std::to_string(k + 1));
  }
  const std::uint64_t seed = opt.seed;
  const std::string question = "what is the main land use in this image?";

  // Training pairs: item i of class k uses meta-task (i + k) mod 6.
  for (std::size_t k = 0; k < opt.n_classes; ++k) {
    const std::string& name = c.class_names[k];
    for (std::size_t i = 0; i < opt.pairs_per_class; ++i) {
      PairFields f;
      f.image_ref = synth_ref(seed, k, i);
      const std::string caption = fill(kCaptions[(i / 6) % std::size(kCaptions)], name);
      PairRecord p;
      switch ((i + k) % 6) {
        case 0:
          f.text = name;
          p = make_pair(PairKind::classification, f);
          break;
        case 1:
          f.text = caption;
          p = make_pair((i / 6) % 2 == 0 ? PairKind::image_to_text : PairKind::text_to_image, f);
          break;
        case 2:
          f.text = question;
          f.answer = name;
          p = make_pair(PairKind::vqa, f);
          break;
        case 3:
          f.text = "the " + name;
          f.bbox = synth_box(seed, k, i);
          p = make_pair(PairKind::referring_expression, f);
          break;
        case 4:
          f.text = "region with a " + name;
          f.bbox = synth_box(seed, k, i);
          p = make_pair(PairKind::region_caption, f);
          break;
        default:
          f.text = name;
          f.geo = synth_geo(seed, k, i);
          p = make_pair(PairKind::geo_text_to_image, f);
          break;
      }
      c.pairs.push_back(std::move(p));
    }
  }

  // Held-out evaluation items.
  using namespace prompts;
  auto item = [&](std::string id, std::string_view instruction) {
    TaskItem t;
    t.id = std::move(id);
    t.side.instruction = std::string(instruction);
    return t;
  };
  TaskSpec cls{"synth-classification", MetaTask::classification, Metric::accuracy, {}, {}, {}, false};
  TaskSpec ret{"synth-retrieval-i2t", MetaTask::retrieval, Metric::mean_recall_1_5_10, {}, {}, {}, false};
  TaskSpec vqa{"synth-vqa", MetaTask::vqa, Metric::precision_at_1, {}, {}, {}, false};
  TaskSpec ref{"synth-refexp", MetaTask::grounding, Metric::precision_at_1, {}, {}, {}, false};
  TaskSpec reg{"synth-regcap", MetaTask::spatial, Metric::precision_at_1, {}, {}, {}, false};
  TaskSpec geo{"synth-geot2i", MetaTask::geo, Metric::precision_at_1, {}, {}, {}, false};

  for (std::size_t k = 0; k < opt.n_classes; ++k) {
    const std::string& name = c.class_names[k];
    auto cand = item("class:" + name, kTextTarget);
    cand.side.text = name;
    cls.candidates.push_back(cand);
    vqa.candidates.push_back(cand);
    auto cap = item("caption:" + name, kTextTarget);
    cap.side.text = fill(kCaptions[0], name);
    ret.candidates.push_back(cap);
    auto region = item("region:" + name, kTextTarget);
    region.side.text = "region with a " + name;
    reg.candidates.push_back(region);
  }

  for (std::size_t k = 0; k < opt.n_classes; ++k) {
    const std::string& name = c.class_names[k];
    std::vector<std::string> same_class_crops, same_class_images;
    for (std::size_t h = 0; h < opt.held_out_per_class; ++h) {
      const std::string suffix = std::to_string(k) + ":" + std::to_string(h);
      same_class_crops.push_back("crop:" + suffix);
      same_class_images.push_back("image:" + suffix);
    }
    for (std::size_t h = 0; h < opt.held_out_per_class; ++h) {
      const std::size_t idx = opt.pairs_per_class + h;
      const std::string ref_id = synth_ref(seed, k, idx);
      const std::string suffix = std::to_string(k) + ":" + std::to_string(h);
      const BoundingBox box = synth_box(seed, k, idx);

      auto q = item("q:" + suffix, kClassificationQuery);
      q.side.image_ref = ref_id;
      cls.queries.push_back(q);
      cls.qrels[q.id] = {"class:" + name};

      q = item("q:" + suffix, kImageToTextQuery);
      q.side.image_ref = ref_id;
      ret.queries.push_back(q);
      ret.qrels[q.id] = {"caption:" + name};

      q = item("q:" + suffix, kVqaQuery);
      q.side.image_ref = ref_id;
      q.side.text = question;
      vqa.queries.push_back(q);
      vqa.qrels[q.id] = {"class:" + name};

      q = item("q:" + suffix, kRefExpQuery);
      q.side.image_ref = ref_id;
      q.side.text = "the " + name;
      ref.queries.push_back(q);
      ref.qrels[q.id] = same_class_crops;
      auto crop = item("crop:" + suffix, kRefExpTarget);
      crop.side.image_ref = ref_id;
      crop.side.bbox = box;
      crop.side.crop = true;
      ref.candidates.push_back(crop);

      q = item("q:" + suffix, kRegionCaptionQuery);
      q.side.image_ref = ref_id;
      q.side.bbox = box;
      reg.queries.push_back(q);
      reg.qrels[q.id] = {"region:" + name};

      q = item("q:" + suffix, kGeoT2IQuery);
      q.side.text = name;
      q.side.geo = synth_geo(seed, k, idx);
      geo.queries.push_back(q);
      geo.qrels[q.id] = same_class_images;
      auto image = item("image:" + suffix, kImageTarget);
      image.side.image_ref = ref_id;
      geo.candidates.push_back(image);
    }
  }
  c.tasks = {cls, ret, vqa, ref, reg, geo};
  for (const auto& t : c.tasks) t.validate();
  return c;
}

}  // namespace geovec
