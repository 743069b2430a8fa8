#include <doctest.h>

#include <filesystem>
#include <set>

#include "binary_io.hpp"
#include "geovec/data.hpp"
#include "geovec/prompts.hpp"

using namespace geovec;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

PairRecord simple_pair(int i) {
  PairFields f;
  f.image_ref = "img" + std::to_string(i);
  f.text = "label " + std::to_string(i);
  return make_pair(PairKind::classification, f);
}

}  // namespace

TEST_CASE("capping") {
  CorpusManifest m;
  CHECK(m.add("skyscript", "a", 379722, 100000).capped_count == 100000);
  CHECK(m.add("teochat-cls", "b", 45101, 100000).capped_count == 45101);
  CHECK(m.total_capped() == 145101);

  const auto s = capped_sample(1000, 100, 7);
  CHECK(s.size() == 100);
  CHECK(std::is_sorted(s.begin(), s.end()));
  CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 100);
  CHECK(s == capped_sample(1000, 100, 7));
  CHECK(s != capped_sample(1000, 100, 8));
  CHECK(capped_sample(50, 100, 7).size() == 50);
}

TEST_CASE("capped sample is roughly uniform") {
  std::vector<int> hits(100, 0);
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    for (auto i : capped_sample(100, 10, seed)) hits[i]++;
  }
  for (int h : hits) {
    CHECK(h > 120);
    CHECK(h < 280);
  }
}

TEST_CASE("load_pairs caps and is idempotent") {
  std::vector<PairRecord> pairs;
  for (int i = 0; i < 300; ++i) pairs.push_back(simple_pair(i));
  const auto path = temp_path("geovec_pairs.jsonl");
  save_pairs(pairs, path);
  const auto loaded = load_pairs(path, 120, 5);
  CHECK(loaded.records.size() == 120);
  CHECK(loaded.subset.raw_count == 300);
  CHECK(loaded.subset.capped_count == 120);
  CHECK(load_pairs(path, 120, 5).records == loaded.records);

  const auto path2 = temp_path("geovec_pairs2.jsonl");
  save_pairs(loaded.records, path2);
  CHECK(load_pairs(path2, 120, 5).records == loaded.records);
  CHECK(load_pairs(path, 1000, 5).records == pairs);
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("malformed pair lines report the line number") {
  const std::string good = to_json(simple_pair(1)).dump();
  try {
    parse_pairs(good + "\n" + good + "\n{not json\n", "p.jsonl");
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("p.jsonl:3") != std::string::npos);
  }
  auto j = to_json(simple_pair(1));
  j["extra"] = 5;
  CHECK(parse_pairs(j.dump(), "x").size() == 1);
  CHECK_THROWS_AS(load_pairs("/nonexistent/pairs.jsonl"), IoError);
}

TEST_CASE("make_pair construction rules") {
  PairFields f;
  f.image_ref = "X";
  f.text = "airport";
  auto p = make_pair(PairKind::classification, f);
  CHECK(p.query.image_ref == "X");
  CHECK(!p.query.text);
  CHECK(p.target.text == "airport");
  CHECK(!p.target.image_ref);

  PairFields r;
  r.image_ref = "X";
  r.bbox = BoundingBox{10, 25, 38, 52};
  r.text = "C";
  p = make_pair(PairKind::region_caption, r);
  CHECK(p.query.image_ref == "X");
  CHECK(p.query.bbox == BoundingBox{10, 25, 38, 52});
  CHECK(p.target.text == "C");

  PairFields g;
  g.text = "T";
  g.geo = GeoCoordinate{34.052275, 118.243739};
  g.image_ref = "X";
  p = make_pair(PairKind::geo_text_to_image, g);
  CHECK(p.query.text == "T");
  CHECK(p.query.geo == GeoCoordinate{34.052275, 118.243739});
  CHECK(p.target.image_ref == "X");

  PairFields missing;
  missing.image_ref = "X";
  try {
    make_pair(PairKind::region_caption, missing);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("region_caption") != std::string::npos);
    CHECK(msg.find("bbox") != std::string::npos);
  }
  CHECK(parse_pair_kind(to_string(PairKind::vqa)) == PairKind::vqa);
}

TEST_CASE("patch provider") {
  const PatchProvider prov({8, 4, "."});
  const auto a = prov.patches("synth:1:2:3");
  CHECK(a.size() == 16);
  CHECK(a.d_patch == 8);
  CHECK(a == prov.patches("synth:1:2:3"));
  CHECK(!(a == prov.patches("synth:1:2:4")));
  CHECK(prov.patches("anything.png").size() == 16);
  CHECK_THROWS_AS(prov.patches("synth:x"), ValidationError);
}

TEST_CASE("crop keeps patches whose centers fall in the box") {
  PatchSequence full;
  full.d_patch = 1;
  for (int i = 0; i < 16; ++i) full.values.push_back(i);
  // 4x4 grid, centers at 12.5, 37.5, 62.5, 87.5
  const auto c = PatchProvider::crop(full, {0, 0, 50, 50});
  CHECK(c.values == std::vector<double>{0, 1, 4, 5});
  CHECK(PatchProvider::crop(full, {0, 0, 100, 100}) == full);
  // No center inside: nearest to the box center (60, 60) is patch (2, 2).
  CHECK(PatchProvider::crop(full, {58, 58, 61, 61}).values == std::vector<double>{10});
}

TEST_CASE("GPAT sidecars") {
  PatchSequence p;
  p.d_patch = 3;
  p.values = {0.5, -1, 2, 3.25, 0, 1};
  const auto dir = std::filesystem::temp_directory_path();
  save_patches(p, (dir / "geovec_test.gpat").string());
  CHECK(load_patches((dir / "geovec_test.gpat").string()) == p);
  const PatchProvider prov({3, 4, dir.string()});
  CHECK(prov.patches("geovec_test.gpat") == p);
  const PatchProvider wrong({4, 4, dir.string()});
  CHECK_THROWS_AS(wrong.patches("geovec_test.gpat"), ValidationError);

  auto bytes = binio::read_file((dir / "geovec_test.gpat").string());
  binio::write_file((dir / "geovec_bad.gpat").string(), "GPAX" + bytes.substr(4));
  try {
    load_patches((dir / "geovec_bad.gpat").string());
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(e.kind() == ParseError::Kind::bad_magic);
  }
  std::filesystem::remove(dir / "geovec_test.gpat");
  std::filesystem::remove(dir / "geovec_bad.gpat");
}

TEST_CASE("stream builder consumes template fields once") {
  const Tokenizer tok;
  const auto reg = TemplateRegistry::defaults();
  const PatchProvider prov({8, 4, "."});
  const StreamBuilder sb{tok, reg, prov};
  ItemSide side;
  side.instruction = std::string(prompts::kGeoT2IQuery);
  side.text = "a stadium";
  side.geo = GeoCoordinate{1, 2};
  InstructionTemplate t{"geot2i", "near {geo}"};
  const auto s = sb.build(side, t);
  // "near ( 1 . 000000 , 2 . 000000 )" then "a stadium"
  CHECK(s.size() == tok.encode("near (1.000000, 2.000000)").size() + 2);

  ItemSide crop;
  crop.instruction = std::string(prompts::kRefExpTarget);
  crop.image_ref = "synth:1:1:1";
  crop.bbox = BoundingBox{0, 0, 50, 50};
  crop.crop = true;
  std::size_t patches = 0;
  for (const auto& tk : sb.build(crop).tokens) patches += tk.kind == Token::Kind::patch;
  CHECK(patches == 4);
}

TEST_CASE("synthetic corpus") {
  const auto c = synth_corpus({});
  CHECK(c.pairs.size() == 1040);
  CHECK(c.tasks.size() == 6);
  CHECK(c.class_names.size() == 26);
  std::set<MetaTask> metas;
  for (const auto& t : c.tasks) metas.insert(t.meta_task);
  CHECK(metas.size() == 6);

  const auto d = synth_corpus({});
  CHECK(c.pairs == d.pairs);
  CHECK(c.tasks == d.tasks);
  SynthOptions other;
  other.seed = 43;
  CHECK(!(synth_corpus(other).pairs == c.pairs));

  SynthOptions bad;
  bad.n_classes = 1;
  CHECK_THROWS_AS(synth_corpus(bad), ValidationError);

  const Tokenizer tok;
  const auto reg = TemplateRegistry::defaults();
  const PatchProvider prov({32, 4, "."});
  const StreamBuilder sb{tok, reg, prov};
  for (const auto& p : c.pairs) {
    for (const auto* side : {&p.query, &p.target}) {
      for (const auto& t : reg.templates(side->instruction)) {
        CHECK_NOTHROW(sb.build(*side, t));
      }
    }
    CHECK(pair_from_json(to_json(p)) == p);
  }
  for (const auto& t : c.tasks) CHECK(task_from_json(to_json(t)) == t);
}
