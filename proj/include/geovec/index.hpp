#pragma once

// Exact top-k search over unit-norm embeddings stored as float32 rows.

#include <cstdint>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "geovec/encoder.hpp"

namespace geovec {

inline constexpr double kUnitNormTolerance = 1e-6;

struct SearchHit {
  std::string id;
  float score = 0;
  std::size_t index = 0;  // insertion index
  friend bool operator==(const SearchHit&, const SearchHit&) = default;
};

using SearchResult = std::vector<SearchHit>;

class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::size_t dim);
  EmbeddingStore(const EmbeddingStore& other);
  EmbeddingStore& operator=(const EmbeddingStore& other);

  std::size_t dim() const { return dim_; }
  std::size_t size() const;
  bool empty() const { return size() == 0; }
  bool contains(const std::string& id) const;

  // Rejects duplicate ids, wrong dimensions and rows that are not unit-norm
  // within kUnitNormTolerance. A rejected add leaves the store unchanged.
  void add(const std::string& id, const EmbeddingVector& v);
  void add(const std::string& id, const std::vector<float>& v);

  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<float>& vectors() const { return vectors_; }
  const float* row(std::size_t i) const { return vectors_.data() + i * dim_; }

  // Top min(k, size) rows by dot product, score descending, ties by
  // insertion index ascending.
  SearchResult search_topk(const std::vector<float>& q, std::size_t k) const;
  SearchResult search_topk(const EmbeddingVector& q, std::size_t k) const;

  // Scores of every row against q, in insertion order.
  std::vector<float> scores(const std::vector<float>& q) const;

  friend bool operator==(const EmbeddingStore& a, const EmbeddingStore& b) {
    return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.vectors_ == b.vectors_;
  }

 private:
  std::size_t dim_;
  std::vector<std::string> ids_;
  std::vector<float> vectors_;
  std::unordered_map<std::string, std::size_t> by_id_;
  mutable std::shared_mutex mu_;
};

std::vector<float> to_f32(const EmbeddingVector& v);

// Orders (score, index) pairs by score descending, then index ascending.
inline bool ranks_before(float sa, std::size_t ia, float sb, std::size_t ib) {
  return sa > sb || (sa == sb && ia < ib);
}

// "GVEC": magic, u32 version=1, u32 dim, u64 count, count x dim float32
// little-endian row-major, then per id u32 byte length and UTF-8 bytes.
std::string serialize_store(const EmbeddingStore& s);
EmbeddingStore parse_store(std::string_view bytes, const std::string& source = "store");
void save_store(const EmbeddingStore& s, const std::string& path);
EmbeddingStore load_store(const std::string& path);

}  // namespace geovec
