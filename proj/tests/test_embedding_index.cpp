#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <thread>

#include "support.hpp"
#include "verbatim/embedding_index.hpp"
#include "verbatim/error.hpp"

using namespace verbatim;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::Io;
}

EmbeddingVector random_vector(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<float> n(0.0F, 1.0F);
  std::vector<float> v(dim);
  for (auto& x : v) x = n(rng);
  return EmbeddingVector(std::move(v));
}

// Independent brute-force oracle: double-precision scan, full sort.
std::vector<ScoredId> scan(const std::vector<std::pair<std::string, EmbeddingVector>>& store,
                           const EmbeddingVector& q, std::size_t k) {
  std::vector<ScoredId> all;
  for (const auto& [id, v] : store) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < v.dim(); ++i) {
      dot += double(v.values[i]) * q.values[i];
      na += double(v.values[i]) * v.values[i];
      nb += double(q.values[i]) * q.values[i];
    }
    all.push_back({id, dot / (std::sqrt(na) * std::sqrt(nb))});
  }
  std::sort(all.begin(), all.end(), [](const ScoredId& a, const ScoredId& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

std::vector<std::string> ids_of(const std::vector<ScoredId>& hits) {
  std::vector<std::string> out;
  for (const auto& h : hits) out.push_back(h.id);
  return out;
}

}  // namespace

TEST(Cosine, Examples) {
  EXPECT_DOUBLE_EQ(cosine({1, 0}, {0, 1}), 0.0);
  EXPECT_NEAR(cosine({2, 2}, {1, 1}), 1.0, 1e-12);
  // dot 32 over sqrt(14) * sqrt(77)
  EXPECT_NEAR(cosine({1, 2, 3}, {4, 5, 6}), 0.9746318461970762, 1e-12);
}

TEST(Cosine, Errors) {
  EXPECT_EQ(code_of([] { (void)cosine({1, 0}, {1, 0, 0}); }), Errc::DimensionMismatch);
  EXPECT_EQ(code_of([] { (void)cosine({0, 0}, {1, 0}); }), Errc::ZeroVector);
}

TEST(CosineProperty, SymmetricScaleInvariantBounded) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_vector(rng, 8);
    const auto b = random_vector(rng, 8);
    const double c = cosine(a, b);
    EXPECT_DOUBLE_EQ(c, cosine(b, a));
    EXPECT_LE(c, 1.0);
    EXPECT_GE(c, -1.0);
    EmbeddingVector scaled = a;
    for (auto& x : scaled.values) x *= 3.5F;
    EXPECT_NEAR(cosine(scaled, b), c, 1e-6);
  }
}

TEST(EmbeddingIndex, AddErrors) {
  EmbeddingIndex index;
  index.add("a", {1, 0, 0});
  EXPECT_EQ(index.dim(), 3u);
  EXPECT_EQ(code_of([&] { index.add("b", {1, 0}); }), Errc::DimensionMismatch);
  EXPECT_EQ(code_of([&] { index.add("c", {0, 0, 0}); }), Errc::ZeroVector);
  EXPECT_EQ(code_of([&] { index.add("a", {0, 1, 0}); }), Errc::DuplicateId);
  EXPECT_EQ(code_of([&] { index.add("d", {NAN, 1, 0}); }), Errc::InvalidArgument);
}

TEST(EmbeddingIndex, SelfSimilarity) {
  EmbeddingIndex index;
  index.add("only", {0.3F, -1.2F, 4.0F}, {"hello", "bug", {}, 0});
  const auto snap = index.finalize();
  const auto hits = snap->top_k({0.3F, -1.2F, 4.0F}, 3);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].id, "only");
  EXPECT_NEAR(hits[0].score, 1.0, 1e-9);
  EXPECT_EQ(snap->find("only")->payload.label, "bug");
}

TEST(EmbeddingIndex, KZeroIsEmpty) {
  EmbeddingIndex index;
  index.add("a", {1, 0});
  EXPECT_TRUE(index.finalize()->top_k({1, 0}, 0).empty());
}

TEST(EmbeddingIndex, QueryDimensionMismatch) {
  EmbeddingIndex index;
  index.add("a", {1, 0});
  const auto snap = index.finalize();
  EXPECT_EQ(code_of([&] { (void)snap->top_k({1, 0, 0}, 1); }), Errc::DimensionMismatch);
}

TEST(EmbeddingIndex, TiesByAscendingId) {
  EmbeddingIndex index;
  index.add("b", {1, 0});
  index.add("c", {2, 0});
  index.add("a", {5, 0});
  index.add("z", {0, 1});
  EXPECT_EQ(ids_of(index.finalize()->top_k({1, 0}, 4)),
            (std::vector<std::string>{"a", "b", "c", "z"}));
}

TEST(EmbeddingIndex, FilterRestrictsCandidates) {
  EmbeddingIndex index;
  index.add("a", {1, 0}, {"", "x", {}, 0});
  index.add("b", {0.9F, 0.1F}, {"", "y", {}, 0});
  const auto hits = index.finalize()->top_k(
      {1, 0}, 5, [](const IndexEntry& e) { return e.payload.label == "y"; });
  EXPECT_EQ(ids_of(hits), std::vector<std::string>{"b"});
}

TEST(EmbeddingIndex, FiftyEntriesMatchScan) {
  std::mt19937_64 rng(50);
  EmbeddingIndex index;
  std::vector<std::pair<std::string, EmbeddingVector>> store;
  for (int i = 0; i < 50; ++i) {
    auto v = random_vector(rng, 32);
    store.emplace_back("e" + std::to_string(i), v);
    index.add("e" + std::to_string(i), v);
  }
  const auto snap = index.finalize();
  const auto q = random_vector(rng, 32);
  const auto got = snap->top_k(q, 5);
  const auto want = scan(store, q, 5);
  ASSERT_EQ(got.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(got[i].id, want[i].id);
    EXPECT_NEAR(got[i].score, want[i].score, 1e-9);
  }
}

// Oracle equivalence over 200 random stores, plus scale invariance and
// prefix monotonicity on every query.
TEST(EmbeddingIndexProperty, RandomStoresMatchScan) {
  std::mt19937_64 rng(2024);
  const auto start = std::chrono::steady_clock::now();
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dim = 16 + rng() % 497;
    const std::size_t n = 1 + rng() % std::max<std::size_t>(1, 2000 * 16 / dim);
    EmbeddingIndex index;
    std::vector<std::pair<std::string, EmbeddingVector>> store;
    for (std::size_t i = 0; i < n; ++i) {
      auto v = random_vector(rng, dim);
      const std::string id = "r" + std::to_string(rng() % 100000) + "-" + std::to_string(i);
      store.emplace_back(id, v);
      index.add(id, std::move(v));
    }
    const auto snap = index.finalize();
    const auto q = random_vector(rng, dim);
    const std::size_t k = rng() % (n + 3);
    const auto got = snap->top_k(q, k);
    const auto want = scan(store, q, k);
    ASSERT_EQ(got.size(), std::min(k, n));
    ASSERT_EQ(ids_of(got), ids_of(want)) << "trial " << trial;

    EmbeddingVector scaled = q;
    const float s = 0.01F + static_cast<float>(rng() % 1000);
    for (auto& x : scaled.values) x *= s;
    EXPECT_EQ(ids_of(snap->top_k(scaled, k)), ids_of(got));

    const auto longer = snap->top_k(q, k + 1);
    ASSERT_GE(longer.size(), got.size());
    EXPECT_TRUE(std::equal(got.begin(), got.end(), longer.begin()));
  }
  EXPECT_LT(std::chrono::steady_clock::now() - start, std::chrono::seconds(5));
}

TEST(EmbeddingIndex, SnapshotSaveLoad) {
  vt::TempDir dir;
  std::mt19937_64 rng(8);
  EmbeddingIndex index;
  for (int i = 0; i < 20; ++i) index.add("v" + std::to_string(i), random_vector(rng, 12));
  const auto snap = index.finalize();
  snap->save(dir / "idx.bin");
  const auto loaded = IndexSnapshot::load(dir / "idx.bin");
  ASSERT_EQ(loaded->size(), 20u);
  EXPECT_EQ(loaded->dim(), 12u);
  const auto q = random_vector(rng, 12);
  EXPECT_EQ(loaded->top_k(q, 20), snap->top_k(q, 20));
  EXPECT_EQ(vt::read_file(dir / "idx.bin").substr(0, 4), "VIDX");
}

TEST(EmbeddingIndex, SnapshotSharedAcrossThreads) {
  std::mt19937_64 rng(9);
  EmbeddingIndex index;
  for (int i = 0; i < 300; ++i) index.add("t" + std::to_string(i), random_vector(rng, 24));
  const auto snap = index.finalize();
  const auto q = random_vector(rng, 24);
  const auto expected = snap->top_k(q, 10);
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 50; ++i) {
        if (snap->top_k(q, 10) != expected) ++mismatches;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(mismatches.load(), 0);
}
