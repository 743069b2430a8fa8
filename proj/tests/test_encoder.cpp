#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "geovec/encoder.hpp"
#include "geovec/rng.hpp"
#include "support.hpp"

using namespace geovec;

using namespace geovec::testing;

TEST_CASE("config validation") {
  auto cfg = small_config();
  cfg.n_heads = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.d_model = 0;
  CHECK_THROWS_AS(init_encoder(cfg), ConfigError);
  CHECK(EncoderConfig{}.lora_rank == 8);
}

TEST_CASE("init is deterministic and starts with B = 0") {
  const auto a = init_encoder(small_config(9));
  const auto b = init_encoder(small_config(9));
  CHECK(a.base == b.base);
  CHECK(a.adapter == b.adapter);
  CHECK(serialize_adapter(a.adapter) == serialize_adapter(b.adapter));
  CHECK(a.adapter.factors.size() == a.base.adapted_count());
  for (const auto& f : a.adapter.factors) {
    for (double x : f.b.data) CHECK(x == 0.0);
  }
  const auto c = init_encoder(small_config(10));
  CHECK(!(a.base == c.base));
  CHECK(a.adapter.factors[0].name == "layers.0.attn.q");
}

TEST_CASE("output is unit norm with d_model entries") {
  const auto cfg = small_config();
  auto st = init_encoder(cfg);
  Rng rng(2);
  randomize_b(st.adapter, rng, 0.1);
  const Encoder enc(st.base, st.adapter);
  for (std::size_t len : {1u, 2u, 5u, 17u, 64u}) {
    const auto e = enc.encode(random_stream(rng, cfg, len));
    CHECK(e.values.size() == cfg.d_model);
    CHECK(e.unit_norm);
    CHECK(std::abs(norm(e.values) - 1.0) < 1e-12);
  }
  CHECK_THROWS_AS(enc.encode(TokenStream{}), ValidationError);
  CHECK_THROWS_AS(enc.encode(random_stream(rng, cfg, 65)), ValidationError);
}

TEST_CASE("zero-B adapter equals the frozen base exactly") {
  const auto cfg = small_config();
  const auto st = init_encoder(cfg);
  const Encoder adapted(st.base, st.adapter);
  const Encoder frozen(st.base);
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    const auto s = random_stream(rng, cfg, 1 + rng.below(40));
    CHECK(adapted.encode(s).values == frozen.encode(s).values);
  }
  CHECK(merge_adapter(st.base, st.adapter) == st.base);
}

TEST_CASE("merge then encode equals encode with the adapter") {
  const auto cfg = small_config();
  auto st = init_encoder(cfg);
  Rng rng(8);
  randomize_b(st.adapter, rng, 0.05);
  const auto merged = merge_adapter(st.base, st.adapter);
  const Encoder a(st.base, st.adapter);
  const Encoder m(merged, zero_adapter(cfg));
  for (int i = 0; i < 10; ++i) {
    const auto s = random_stream(rng, cfg, 1 + rng.below(30));
    const auto ea = a.encode(s).values, em = m.encode(s).values;
    for (std::size_t j = 0; j < ea.size(); ++j) CHECK(std::abs(ea[j] - em[j]) < 1e-12);
  }
  const auto twice = merge_adapter(merged, st.adapter);
  CHECK(!(twice == merged));
}

TEST_CASE("scaling B scales the merged delta") {
  const auto cfg = small_config();
  auto st = init_encoder(cfg);
  Rng rng(12);
  randomize_b(st.adapter, rng, 0.05);
  auto scaled = st.adapter;
  for (auto& f : scaled.factors) {
    for (auto& x : f.b.data) x *= 4.0;  // power of two keeps the check exact
  }
  const auto m1 = merge_adapter(st.base, st.adapter);
  const auto m4 = merge_adapter(st.base, scaled);
  for (std::size_t slot = 0; slot < st.base.adapted_count(); ++slot) {
    const auto& w = st.base.adapted(slot);
    for (std::size_t i = 0; i < w.data.size(); ++i) {
      const double d1 = m1.adapted(slot).data[i] - w.data[i];
      const double d4 = m4.adapted(slot).data[i] - w.data[i];
      CHECK(d4 == doctest::Approx(4.0 * d1).epsilon(1e-12));
    }
  }
}

TEST_CASE("shape mismatch names the matrix") {
  const auto st = init_encoder(small_config());
  auto bad = st.adapter;
  bad.factors[3].a = Matrix(3, 5);
  try {
    merge_adapter(st.base, bad);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(st.adapter.factors[3].name) != std::string::npos);
  }
}

TEST_CASE("appending a token changes the embedding") {
  const auto cfg = small_config();
  const auto st = init_encoder(cfg);
  const Encoder enc(st.base, st.adapter);
  Rng rng(1);
  auto s = random_stream(rng, cfg, 10);
  const auto before = enc.encode(s).values;
  s.tokens.push_back({Token::Kind::vocab, 3});
  CHECK(enc.encode(s).values != before);
}

TEST_CASE("batch encode equals single encodes for any batch and thread count") {
  const auto cfg = small_config();
  auto st = init_encoder(cfg);
  Rng rng(3);
  randomize_b(st.adapter, rng, 0.05);
  std::vector<TokenStream> streams;
  for (int i = 0; i < 40; ++i) streams.push_back(random_stream(rng, cfg, 1 + rng.below(30)));
  const Encoder enc(st.base, st.adapter);
  for (std::size_t threads : {1u, 3u}) {
    const auto batch = encode_batch(enc, streams, threads);
    for (std::size_t i = 0; i < streams.size(); ++i) CHECK(batch[i].values == enc.encode(streams[i]).values);
  }
  auto reversed = streams;
  std::reverse(reversed.begin(), reversed.end());
  const auto fwd = encode_batch(enc, streams);
  const auto rev = encode_batch(enc, reversed);
  for (std::size_t i = 0; i < streams.size(); ++i) CHECK(fwd[i].values == rev[streams.size() - 1 - i].values);

  streams[7] = TokenStream{};
  try {
    encode_batch(enc, streams, 2);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("7") != std::string::npos);
  }
}

TEST_CASE("backward matches central differences on adapter parameters") {
  const auto cfg = small_config(21);
  auto st = init_encoder(cfg);
  Rng rng(5);
  randomize_b(st.adapter, rng, 0.2);
  const auto stream = random_stream(rng, cfg, 9);
  std::vector<double> g(cfg.d_model);
  for (auto& x : g) x = rng.normal();

  auto objective = [&](const LoraAdapter& a) {
    const Encoder enc(st.base, a);
    const auto e = enc.encode(stream).values;
    double s = 0;
    for (std::size_t i = 0; i < e.size(); ++i) s += g[i] * e[i];
    return s;
  };

  const Encoder enc(st.base, st.adapter);
  ForwardTrace trace;
  enc.encode(stream, trace);
  auto wg = WeightGrads::zeros(st.base);
  enc.backward(trace, g, wg);
  const auto grads = enc.adapter_grads(wg);

  const double h = 1e-6;
  double worst = 0;
  for (std::size_t f = 0; f < st.adapter.factors.size(); ++f) {
    for (int which = 0; which < 2; ++which) {
      const std::size_t n = which == 0 ? st.adapter.factors[f].a.data.size() : st.adapter.factors[f].b.data.size();
      for (std::size_t probe = 0; probe < 4; ++probe) {
        const std::size_t i = rng.below(n);
        auto plus = st.adapter, minus = st.adapter;
        auto& p = which == 0 ? plus.factors[f].a.data[i] : plus.factors[f].b.data[i];
        auto& m = which == 0 ? minus.factors[f].a.data[i] : minus.factors[f].b.data[i];
        p += h;
        m -= h;
        const double fd = (objective(plus) - objective(minus)) / (2 * h);
        const double an = which == 0 ? grads.factors[f].a.data[i] : grads.factors[f].b.data[i];
        const double err = std::abs(fd - an) / std::max(1e-6, std::max(std::abs(fd), std::abs(an)));
        worst = std::max(worst, err);
      }
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("adapter file round trip is bit exact") {
  auto st = init_encoder(small_config());
  Rng rng(6);
  randomize_b(st.adapter, rng, 0.1);
  // Values representable in float32 survive exactly.
  for (auto& f : st.adapter.factors) {
    for (auto& x : f.a.data) x = static_cast<float>(x);
    for (auto& x : f.b.data) x = static_cast<float>(x);
  }
  const auto path = (std::filesystem::temp_directory_path() / "geovec_test_adapter.glor").string();
  save_adapter(st.adapter, path);
  const auto back = load_adapter(path);
  CHECK(back == st.adapter);
  CHECK(serialize_adapter(back) == serialize_adapter(st.adapter));
  std::filesystem::remove(path);

  auto bytes = serialize_adapter(st.adapter);
  auto bad = bytes;
  bad[0] = 'X';
  try {
    parse_adapter(bad);
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(e.kind() == ParseError::Kind::bad_magic);
  }
  bad = bytes;
  bad[4] = 9;
  try {
    parse_adapter(bad);
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(e.kind() == ParseError::Kind::bad_version);
  }
  try {
    parse_adapter(bytes.substr(0, bytes.size() - 3));
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(e.kind() == ParseError::Kind::truncated);
  }
}
