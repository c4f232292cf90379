#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace verbatim {

// Fixed-length embedding. Values are kept as produced (never renormalized).
struct EmbeddingVector {
  std::vector<float> values;

  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<float> v) : values(std::move(v)) {}
  EmbeddingVector(std::initializer_list<float> v) : values(v) {}

  [[nodiscard]] std::size_t dim() const noexcept { return values.size(); }
  [[nodiscard]] double norm() const noexcept;
  [[nodiscard]] bool is_zero() const noexcept;
  [[nodiscard]] bool all_finite() const noexcept;
};

// Cosine similarity in [-1, 1]. Throws DimensionMismatch or ZeroVector.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

struct IndexPayload {
  std::string text;
  std::string label;
  std::vector<std::string> topics;
  double quality = 0.0;
};

struct IndexEntry {
  std::string id;
  EmbeddingVector vector;
  IndexPayload payload;
};

struct ScoredId {
  std::string id;
  double score = 0.0;

  friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

// Immutable, finalized index. Safe to share across threads.
class IndexSnapshot {
 public:
  using EntryFilter = std::function<bool(const IndexEntry&)>;

  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] const IndexEntry* find(const std::string& id) const;
  [[nodiscard]] std::span<const IndexEntry> entries() const { return entries_; }

  // Exhaustive cosine scan. Descending score, ties by ascending id;
  // length min(k, number of admitted entries).
  [[nodiscard]] std::vector<ScoredId> top_k(const EmbeddingVector& query,
                                            std::size_t k,
                                            const EntryFilter& admit = {}) const;

  // Binary snapshot: "VIDX" magic, u32 version, u32 dim, u64 count, count*dim
  // little-endian float32 values, then count length-prefixed ids.
  void save(const std::filesystem::path& path) const;
  static std::shared_ptr<const IndexSnapshot> load(
      const std::filesystem::path& path);

 private:
  friend class EmbeddingIndex;
  IndexSnapshot() = default;

  std::size_t dim_ = 0;
  std::vector<IndexEntry> entries_;
  std::vector<double> norms_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// Build-phase index. Not thread-safe; finalize() produces a shareable
// snapshot.
class EmbeddingIndex {
 public:
  EmbeddingIndex() = default;
  explicit EmbeddingIndex(std::size_t dim) : dim_(dim) {}

  // First insertion fixes the dimension when none was given.
  void add(std::string id, EmbeddingVector vector, IndexPayload payload = {});

  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }

  [[nodiscard]] std::shared_ptr<const IndexSnapshot> finalize() const;

 private:
  std::size_t dim_ = 0;
  std::vector<IndexEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

}  // namespace verbatim
