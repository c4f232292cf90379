#include "verbatim/embedding_index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "verbatim/error.hpp"

namespace verbatim {

namespace {

constexpr char kMagic[4] = {'V', 'I', 'D', 'X'};
constexpr std::uint32_t kVersion = 1;

double dot(std::span<const float> a, std::span<const float> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  }
  return sum;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(std::begin(bytes), std::end(bytes));
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(T));
  if (!in) throw Error(Errc::Io, "truncated index snapshot");
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(std::begin(bytes), std::end(bytes));
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

bool ranks_before(const ScoredId& a, const ScoredId& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

double EmbeddingVector::norm() const noexcept {
  return std::sqrt(dot(values, values));
}

bool EmbeddingVector::is_zero() const noexcept {
  return std::all_of(values.begin(), values.end(),
                     [](float v) { return v == 0.0F; });
}

bool EmbeddingVector::all_finite() const noexcept {
  return std::all_of(values.begin(), values.end(),
                     [](float v) { return std::isfinite(v); });
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(Errc::DimensionMismatch, std::to_string(a.dim()) + " vs " +
                                             std::to_string(b.dim()));
  }
  if (a.dim() == 0 || a.is_zero() || b.is_zero()) {
    throw Error(Errc::ZeroVector, "cosine of a zero vector is undefined");
  }
  return clamp_unit(dot(a.values, b.values) / (a.norm() * b.norm()));
}

void EmbeddingIndex::add(std::string id, EmbeddingVector vector,
                         IndexPayload payload) {
  if (dim_ == 0) {
    if (vector.dim() == 0) throw Error(Errc::DimensionMismatch, "empty vector");
  } else if (vector.dim() != dim_) {
    throw Error(Errc::DimensionMismatch,
                "index dim " + std::to_string(dim_) + ", vector dim " +
                    std::to_string(vector.dim()));
  }
  if (!vector.all_finite()) {
    throw Error(Errc::InvalidArgument, "vector for '" + id + "' is not finite");
  }
  if (vector.is_zero()) throw Error(Errc::ZeroVector, id);
  if (by_id_.count(id) > 0) throw Error(Errc::DuplicateId, id);
  if (dim_ == 0) dim_ = vector.dim();
  by_id_.emplace(id, entries_.size());
  entries_.push_back({std::move(id), std::move(vector), std::move(payload)});
}

std::shared_ptr<const IndexSnapshot> EmbeddingIndex::finalize() const {
  auto snap = std::shared_ptr<IndexSnapshot>(new IndexSnapshot());
  snap->dim_ = dim_;
  snap->entries_ = entries_;
  snap->by_id_ = by_id_;
  snap->norms_.reserve(entries_.size());
  for (const auto& e : entries_) snap->norms_.push_back(e.vector.norm());
  return snap;
}

const IndexEntry* IndexSnapshot::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &entries_[it->second];
}

std::vector<ScoredId> IndexSnapshot::top_k(const EmbeddingVector& query,
                                           std::size_t k,
                                           const EntryFilter& admit) const {
  if (k == 0 || entries_.empty()) return {};
  if (query.dim() != dim_) {
    throw Error(Errc::DimensionMismatch, "index dim " + std::to_string(dim_) +
                                             ", query dim " +
                                             std::to_string(query.dim()));
  }
  if (query.is_zero()) throw Error(Errc::ZeroVector, "query");
  const double qnorm = query.norm();
  std::vector<ScoredId> scored;
  scored.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (admit && !admit(entries_[i])) continue;
    const double s =
        clamp_unit(dot(query.values, entries_[i].vector.values) / (qnorm * norms_[i]));
    scored.push_back({entries_[i].id, s});
  }
  const std::size_t n = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n),
                    scored.end(), ranks_before);
  scored.resize(n);
  return scored;
}

void IndexSnapshot::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
  write_le<std::uint64_t>(out, entries_.size());
  for (const auto& e : entries_) {
    for (float v : e.vector.values) write_le<float>(out, v);
  }
  for (const auto& e : entries_) {
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.id.size()));
    out.write(e.id.data(), static_cast<std::streamsize>(e.id.size()));
  }
  if (!out) throw Error(Errc::Io, "short write to " + path.string());
}

std::shared_ptr<const IndexSnapshot> IndexSnapshot::load(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read " + path.string());
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(Errc::Io, path.string() + " is not an index snapshot");
  }
  if (read_le<std::uint32_t>(in) != kVersion) {
    throw Error(Errc::Io, "unsupported snapshot version");
  }
  const auto dim = read_le<std::uint32_t>(in);
  const auto count = read_le<std::uint64_t>(in);
  std::vector<std::vector<float>> vectors(count, std::vector<float>(dim));
  for (auto& v : vectors) {
    for (auto& x : v) x = read_le<float>(in);
  }
  EmbeddingIndex builder(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = read_le<std::uint32_t>(in);
    std::string id(len, '\0');
    in.read(id.data(), len);
    if (!in) throw Error(Errc::Io, "truncated id table");
    builder.add(std::move(id), EmbeddingVector(std::move(vectors[i])));
  }
  return builder.finalize();
}

}  // namespace verbatim
