#include "binary_io.hpp"
#include "geovec/encoder.hpp"

namespace geovec {

namespace {

constexpr std::string_view kMagic = "GLOR";
constexpr std::uint32_t kVersion = 1;

void write_matrix(binio::Writer& w, const Matrix& m) {
  w.u32(static_cast<std::uint32_t>(m.rows));
  w.u32(static_cast<std::uint32_t>(m.cols));
  for (double v : m.data) w.f32(static_cast<float>(v));
}

Matrix read_matrix(binio::Reader& r) {
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  r.need(static_cast<std::size_t>(rows) * cols * 4);
  Matrix m(rows, cols);
  for (auto& v : m.data) v = r.f32();
  return m;
}

}  // namespace

std::string serialize_adapter(const LoraAdapter& a) {
  binio::Writer w;
  w.bytes(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(a.rank));
  for (const auto& f : a.factors) {
    w.str(f.name);
    write_matrix(w, f.a);
    write_matrix(w, f.b);
  }
  return w.take();
}

void save_adapter(const LoraAdapter& a, const std::string& path) {
  binio::write_file(path, serialize_adapter(a));
}

LoraAdapter parse_adapter(const std::string& bytes) {
  binio::Reader r(bytes, "adapter");
  if (bytes.size() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) {
    throw ParseError(ParseError::Kind::bad_magic, "adapter: bad magic");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw ParseError(ParseError::Kind::bad_version,
                     "adapter: unsupported version " + std::to_string(version));
  }
  LoraAdapter a;
  a.rank = r.u32();
  if (a.rank == 0) throw ParseError(ParseError::Kind::malformed, "adapter: rank 0");
  a.alpha = static_cast<double>(a.rank);
  while (!r.at_end()) {
    LoraFactor f;
    f.name = r.str();
    f.a = read_matrix(r);
    f.b = read_matrix(r);
    if (f.a.rows != a.rank || f.b.cols != a.rank) {
      throw ParseError(ParseError::Kind::malformed,
                       "adapter: matrix '" + f.name + "' does not have rank " + std::to_string(a.rank));
    }
    a.factors.push_back(std::move(f));
  }
  return a;
}

LoraAdapter load_adapter(const std::string& path) { return parse_adapter(binio::read_file(path)); }

}  // namespace geovec
