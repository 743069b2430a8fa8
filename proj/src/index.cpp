#include "geovec/index.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

#include "binary_io.hpp"
#include "geovec/simd/kernels.hpp"

namespace geovec {

namespace {

constexpr std::string_view kMagic = "GVEC";
constexpr std::uint32_t kVersion = 1;

}  // namespace

EmbeddingStore::EmbeddingStore(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw ValidationError("embedding store dim must be >= 1");
}

EmbeddingStore::EmbeddingStore(const EmbeddingStore& other) {
  std::shared_lock lock(other.mu_);
  dim_ = other.dim_;
  ids_ = other.ids_;
  vectors_ = other.vectors_;
  by_id_ = other.by_id_;
}

EmbeddingStore& EmbeddingStore::operator=(const EmbeddingStore& other) {
  if (this == &other) return *this;
  EmbeddingStore copy(other);
  std::unique_lock lock(mu_);
  dim_ = copy.dim_;
  ids_ = std::move(copy.ids_);
  vectors_ = std::move(copy.vectors_);
  by_id_ = std::move(copy.by_id_);
  return *this;
}

std::size_t EmbeddingStore::size() const {
  std::shared_lock lock(mu_);
  return ids_.size();
}

bool EmbeddingStore::contains(const std::string& id) const {
  std::shared_lock lock(mu_);
  return by_id_.count(id) != 0;
}

std::vector<float> to_f32(const EmbeddingVector& v) {
  return std::vector<float>(v.values.begin(), v.values.end());
}

void EmbeddingStore::add(const std::string& id, const EmbeddingVector& v) {
  if (v.values.size() != dim_) {
    throw ValidationError("embedding for '" + id + "' has dim " + std::to_string(v.values.size()) +
                          ", store dim is " + std::to_string(dim_));
  }
  double sq = 0;
  for (double x : v.values) sq += x * x;
  if (std::abs(std::sqrt(sq) - 1.0) > kUnitNormTolerance) {
    throw ValidationError("embedding for '" + id + "' is not unit-norm");
  }
  add(id, to_f32(v));
}

void EmbeddingStore::add(const std::string& id, const std::vector<float>& v) {
  if (v.size() != dim_) {
    throw ValidationError("embedding for '" + id + "' has dim " + std::to_string(v.size()) +
                          ", store dim is " + std::to_string(dim_));
  }
  double sq = 0;
  for (float x : v) sq += static_cast<double>(x) * x;
  // float32 rounding of a unit double vector moves the norm by ~sqrt(dim) ulps.
  const double tol = kUnitNormTolerance + 1e-7 * std::sqrt(static_cast<double>(dim_));
  if (std::abs(std::sqrt(sq) - 1.0) > tol) {
    throw ValidationError("embedding for '" + id + "' is not unit-norm");
  }
  std::unique_lock lock(mu_);
  if (by_id_.count(id)) throw ValidationError("duplicate id '" + id + "'");
  by_id_.emplace(id, ids_.size());
  ids_.push_back(id);
  vectors_.insert(vectors_.end(), v.begin(), v.end());
}

std::vector<float> EmbeddingStore::scores(const std::vector<float>& q) const {
  if (q.size() != dim_) {
    throw ValidationError("query has dim " + std::to_string(q.size()) + ", store dim is " +
                          std::to_string(dim_));
  }
  std::shared_lock lock(mu_);
  std::vector<float> out(ids_.size());
  simd::active_kernels().dot_rows_f32(vectors_.data(), ids_.size(), dim_, q.data(), out.data());
  return out;
}

SearchResult EmbeddingStore::search_topk(const std::vector<float>& q, std::size_t k) const {
  if (k == 0) throw ValidationError("k must be >= 1");
  if (empty()) throw ValidationError("search on an empty store");
  const auto s = scores(q);
  std::shared_lock lock(mu_);
  const std::size_t n = s.size();
  k = std::min(k, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto cmp = [&](std::size_t a, std::size_t b) { return ranks_before(s[a], a, s[b], b); };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), cmp);
  SearchResult out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back({ids_[order[i]], s[order[i]], order[i]});
  return out;
}

SearchResult EmbeddingStore::search_topk(const EmbeddingVector& q, std::size_t k) const {
  return search_topk(to_f32(q), k);
}

std::string serialize_store(const EmbeddingStore& s) {
  binio::Writer w;
  w.bytes(kMagic);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(s.dim()));
  w.u64(s.ids().size());
  for (float x : s.vectors()) w.f32(x);
  for (const auto& id : s.ids()) w.str(id);
  return w.take();
}

EmbeddingStore parse_store(std::string_view bytes, const std::string& source) {
  binio::Reader r(bytes, source);
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
    throw ParseError(ParseError::Kind::bad_magic, source + ": bad magic");
  }
  r.bytes(kMagic.size());
  const auto version = r.u32();
  if (version != kVersion) {
    throw ParseError(ParseError::Kind::bad_version,
                     source + ": unsupported version " + std::to_string(version));
  }
  const auto dim = r.u32();
  const auto count = r.u64();
  if (dim == 0) throw ParseError(ParseError::Kind::malformed, source + ": dim is zero");
  if (count > r.remaining() / 4 / dim) {
    throw ParseError(ParseError::Kind::truncated, source + ": truncated file");
  }
  std::vector<float> vectors(count * dim);
  for (auto& x : vectors) x = r.f32();
  EmbeddingStore out(dim);
  std::vector<float> row(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string id = r.str();
    std::copy_n(vectors.begin() + static_cast<std::ptrdiff_t>(i * dim), dim, row.begin());
    try {
      out.add(id, row);
    } catch (const ValidationError& e) {
      throw ParseError(ParseError::Kind::malformed, source + ": row " + std::to_string(i) + ": " + e.what());
    }
  }
  if (!r.at_end()) throw ParseError(ParseError::Kind::malformed, source + ": trailing bytes");
  return out;
}

void save_store(const EmbeddingStore& s, const std::string& path) {
  binio::write_file(path, serialize_store(s));
}

EmbeddingStore load_store(const std::string& path) {
  return parse_store(binio::read_file(path), path);
}

}  // namespace geovec
