#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "json.hpp"

#include "support.hpp"
#include "verbatim/csv.hpp"
#include "verbatim/error.hpp"
#include "verbatim/record_store.hpp"
#include "verbatim/text.hpp"
#include "verbatim/time.hpp"

using namespace verbatim;

namespace {

RecordStore& with_sentiment(RecordStore& store) {
  store.declare_dimension({"sentiment", {"positive", "negative", "neutral"}, {}});
  return store;
}

std::string three_rows() {
  return vt::jsonl_record("a1", "login fails", "2024-04-03T10:00:00Z") +
         vt::jsonl_record("a2", "love the app", "2024-04-01T10:00:00Z") +
         vt::jsonl_record("a3", "crashes on start", "2024-04-02T10:00:00Z");
}

}  // namespace

TEST(Text, NormalizeLabel) {
  EXPECT_EQ(text::normalize_label("  Label:  Non-Informative. "), "label: non-informative");
  EXPECT_EQ(text::normalize_label("Positive!"), "positive");
}

TEST(Text, NormalizePhraseStripsListMarkers) {
  EXPECT_EQ(text::normalize_phrase("- \"Feature Request\""), "feature request");
  EXPECT_EQ(text::normalize_phrase("1. reliability"), "reliability");
}

TEST(Text, WholePhraseTreatsHyphenAsWord) {
  EXPECT_EQ(text::find_whole_phrase("non-informative", "informative"), std::string::npos);
  EXPECT_EQ(text::find_whole_phrase("it is informative.", "informative"), 6u);
}

TEST(Text, FencedBlocks) {
  const auto blocks = text::fenced_blocks("x\n```python\na = 1\n```\ny\n```\nb\n```");
  ASSERT_EQ(blocks.size(), 2u);
  EXPECT_EQ(blocks[0], "a = 1");
  EXPECT_EQ(blocks[1], "b");
  EXPECT_TRUE(text::fenced_blocks("no code").empty());
}

TEST(Text, Sha256KnownVector) {
  EXPECT_EQ(text::sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Text, RandomTokensDiffer) {
  EXPECT_EQ(text::random_token(16).size(), 32u);
  EXPECT_NE(text::random_token(), text::random_token());
}

TEST(Time, Rfc3339) {
  const auto t = parse_rfc3339("2024-04-01T14:30:00.250+02:00");
  ASSERT_TRUE(t);
  EXPECT_EQ(format_rfc3339(*t), "2024-04-01T12:30:00.250Z");
  EXPECT_EQ(format_rfc3339(*parse_rfc3339("2024-04-01")), "2024-04-01T00:00:00Z");
  EXPECT_FALSE(parse_rfc3339("April 1st"));
  EXPECT_FALSE(parse_rfc3339("2024-02-30T00:00:00Z"));
}

TEST(Csv, QuotedFieldsRoundTrip) {
  const std::vector<std::string> fields = {"a,b", "say \"hi\"", "two\nlines", ""};
  const std::string line = csv::format_row(fields);
  csv::Reader reader(line);
  const auto row = reader.next();
  ASSERT_TRUE(row);
  EXPECT_EQ(row->fields, fields);
  EXPECT_FALSE(reader.next());
}

TEST(RecordStore, IngestsWellFormedRows) {
  RecordStore store;
  const auto report = store.ingest(three_rows(), RecordFormat::Jsonl);
  EXPECT_EQ(report.accepted, 3u);
  EXPECT_EQ(report.rejected, 0u);
  EXPECT_EQ(store.size(), 3u);
}

TEST(RecordStore, RejectsMissingText) {
  RecordStore store;
  const auto report = store.ingest(three_rows() + "{\"id\":\"a4\",\"timestamp\":\"2024-04-01\"}\n",
                                   RecordFormat::Jsonl);
  EXPECT_EQ(report.accepted, 3u);
  ASSERT_EQ(report.rejected, 1u);
  EXPECT_EQ(report.rejection_reasons[0].reason, "MissingField(text)");
  EXPECT_EQ(report.rejection_reasons[0].line, 4u);
}

TEST(RecordStore, RejectsDuplicateId) {
  RecordStore store;
  const auto report = store.ingest(
      vt::jsonl_record("a1", "one", "2024-04-01") + vt::jsonl_record("a1", "two", "2024-04-02"),
      RecordFormat::Jsonl);
  EXPECT_EQ(report.accepted, 1u);
  ASSERT_EQ(report.rejected, 1u);
  EXPECT_EQ(report.rejection_reasons[0].reason, "DuplicateId(a1)");
  EXPECT_EQ(store.get("a1")->text, "one");
}

TEST(RecordStore, UndecodableStream) {
  RecordStore store;
  const std::string bad = "{\"id\":\"x\",\"text\":\"\xff\xfe\"}\n";
  try {
    store.ingest(bad, RecordFormat::Jsonl);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UndecodableStream);
  }
}

TEST(RecordStore, MissingTimestampIsImputedAndFlagged) {
  RecordStore store;
  store.ingest("{\"id\":\"a\",\"text\":\"t\"}\n", RecordFormat::Jsonl);
  EXPECT_EQ(store.get("a")->meta.at(std::string(kImputedTimestampKey)), "true");
}

TEST(RecordStore, CsvIngest) {
  RecordStore store;
  const auto report = store.ingest(
      "id,text,timestamp,meta.app\nc1,\"slow, very slow\",2024-04-01,notes\nc2,ok,2024-04-02,notes\n",
      RecordFormat::Csv);
  EXPECT_EQ(report.accepted, 2u);
  EXPECT_EQ(store.get("c1")->text, "slow, very slow");
  EXPECT_EQ(store.get("c1")->meta.at("app"), "notes");
}

TEST(RecordStore, TopicFilter) {
  RecordStore store;
  store.ingest(three_rows() + vt::jsonl_record("a4", "x", "2024-04-04") +
                   vt::jsonl_record("a5", "y", "2024-04-05"),
               RecordFormat::Jsonl);
  store.set_topics("a1", {"bug"}, 1);
  store.set_topics("a3", {"bug", "crash"}, 1);
  store.set_topics("a4", {"pricing"}, 1);
  EXPECT_EQ(store.query(Filter::parse("topic=bug")).size(), 2u);
}

TEST(RecordStore, OrderByTimestamp) {
  RecordStore store;
  store.ingest(three_rows(), RecordFormat::Jsonl);
  const auto rows = store.query({}, Order{"timestamp", true});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].id, "a2");
  EXPECT_EQ(rows[1].id, "a3");
  EXPECT_EQ(rows[2].id, "a1");
  const auto desc = store.query({}, Order{"timestamp", false}, 1);
  ASSERT_EQ(desc.size(), 1u);
  EXPECT_EQ(desc[0].id, "a1");
}

TEST(RecordStore, UnknownDimensionFilter) {
  RecordStore store;
  store.ingest(three_rows(), RecordFormat::Jsonl);
  try {
    (void)store.query(Filter::parse("foo=bar"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownDimension);
  }
}

TEST(RecordStore, AnnotateWriteRead) {
  RecordStore store;
  with_sentiment(store).ingest(three_rows(), RecordFormat::Jsonl);
  store.annotate("a1", "sentiment", "negative");
  EXPECT_EQ(store.get("a1")->annotations.labels.at("sentiment"), "negative");
  EXPECT_EQ(store.query(Filter::parse("sentiment=negative")).size(), 1u);
  EXPECT_EQ(store.query(Filter::parse("label.sentiment=negative")).size(), 1u);
}

TEST(RecordStore, AnnotateErrors) {
  RecordStore store;
  with_sentiment(store).ingest(three_rows(), RecordFormat::Jsonl);
  auto code_of = [&](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::Io;
  };
  EXPECT_EQ(code_of([&] { store.annotate("zz", "sentiment", "negative"); }), Errc::UnknownId);
  EXPECT_EQ(code_of([&] { store.annotate("a1", "mood", "negative"); }), Errc::UnknownDimension);
  EXPECT_EQ(code_of([&] { store.annotate("a1", "sentiment", "angry"); }), Errc::LabelNotInSet);
}

TEST(RecordStore, SetTopics) {
  RecordStore store;
  store.ingest(three_rows(), RecordFormat::Jsonl);
  const auto r = store.set_topics("a1", {"feature request", "reliability"}, 1);
  EXPECT_EQ(r.annotations.topics, (std::vector<std::string>{"feature request", "reliability"}));
  EXPECT_EQ(r.annotations.topic_round, 1);
}

TEST(RecordStore, AnnotationMonotonicityAndAudit) {
  RecordStore store;
  with_sentiment(store);
  store.declare_dimension({"kind", {"bug", "praise"}, {}});
  store.ingest(three_rows(), RecordFormat::Jsonl);
  store.annotate("a1", "sentiment", "negative");
  store.annotate("a1", "kind", "bug");
  store.set_topics("a1", {"login"}, 1);
  store.annotate("a1", "sentiment", "neutral");
  const auto r = *store.get("a1");
  EXPECT_EQ(r.annotations.labels.at("kind"), "bug");
  EXPECT_EQ(r.annotations.labels.at("sentiment"), "neutral");
  EXPECT_EQ(r.annotations.topics, std::vector<std::string>{"login"});
  const auto audit = store.audit_log();
  ASSERT_EQ(audit.size(), 4u);
  EXPECT_EQ(audit.back().field, "label.sentiment");
  EXPECT_EQ(audit.back().previous, "negative");
  EXPECT_EQ(audit.back().current, "neutral");
}

TEST(RecordStore, ExportReingestRoundTrip) {
  RecordStore store;
  std::string rows;
  for (int i = 0; i < 10; ++i) {
    rows += vt::jsonl_record("r" + std::to_string(i), "text, \\\"quoted\\\" " + std::to_string(i),
                             "2024-04-0" + std::to_string(1 + i % 9));
  }
  store.ingest(rows, RecordFormat::Jsonl);
  for (auto format : {RecordFormat::Jsonl, RecordFormat::Csv}) {
    RecordStore copy;
    const auto report = copy.ingest(store.export_records({}, format), format);
    EXPECT_EQ(report.accepted, 10u);
    for (const auto& r : store.query()) {
      const auto c = copy.get(r.id);
      ASSERT_TRUE(c);
      EXPECT_EQ(c->text, r.text);
      EXPECT_EQ(c->timestamp, r.timestamp);
    }
  }
}

TEST(RecordStore, ExportWithTopicFilter) {
  RecordStore store;
  store.ingest(three_rows(), RecordFormat::Jsonl);
  store.set_topics("a2", {"praise"}, 1);
  const std::string out = store.export_records(Filter::parse("topic=praise"), RecordFormat::Jsonl);
  EXPECT_EQ(std::count(out.begin(), out.end(), '\n'), 1);
  EXPECT_NE(out.find("\"a2\""), std::string::npos);
}

TEST(RecordStore, EmptyCsvExportHasHeaderOnly) {
  RecordStore store;
  store.ingest(three_rows(), RecordFormat::Jsonl);
  const std::string out = store.export_records(Filter::parse("id=none"), RecordFormat::Csv);
  EXPECT_EQ(std::count(out.begin(), out.end(), '\n'), 1);
  EXPECT_TRUE(text::starts_with(out, "id,text,timestamp"));
}

TEST(RecordStore, SaveAndLoad) {
  vt::TempDir dir;
  {
    RecordStore store(dir / "records.jsonl");
    with_sentiment(store).ingest(three_rows(), RecordFormat::Jsonl);
    store.annotate("a2", "sentiment", "positive");
    store.save();
  }
  RecordStore again(dir / "records.jsonl");
  with_sentiment(again).load();
  EXPECT_EQ(again.size(), 3u);
  EXPECT_EQ(again.get("a2")->annotations.labels.at("sentiment"), "positive");
}

// Property: scalar fields survive export and re-ingest for generated records.
TEST(RecordStoreProperty, RoundTripGeneratedRecords) {
  std::mt19937 rng(99);
  const std::string alphabet = "abc xyz,;\"'\t-_.!?0123456789\xc3\xa9";
  for (int trial = 0; trial < 20; ++trial) {
    RecordStore store;
    store.declare_dimension({"kind", {"bug", "praise"}, {}});
    nlohmann::json rows = nlohmann::json::array();
    std::string jsonl;
    const int n = 1 + static_cast<int>(rng() % 15);
    for (int i = 0; i < n; ++i) {
      std::string text;
      const int len = 1 + static_cast<int>(rng() % 30);
      for (int c = 0; c < len; ++c) {
        const std::size_t at = rng() % (alphabet.size() - 1);
        if (static_cast<unsigned char>(alphabet[at]) >= 0x80) {
          text += "\xc3\xa9";
        } else {
          text += alphabet[at];
        }
      }
      if (text::trim(text).empty()) text = "x" + text;
      nlohmann::json row = {{"id", "g" + std::to_string(i)},
                            {"text", text},
                            {"timestamp", format_rfc3339(Timestamp(std::chrono::milliseconds(
                                              1700000000000LL + static_cast<long long>(rng() % 100000000) * 1000)))},
                            {"language", i % 2 ? "en" : "de"},
                            {"source", "store"},
                            {"meta", {{"app", "v" + std::to_string(rng() % 5)}}},
                            {"labels", {{"kind", rng() % 2 ? "bug" : "praise"}}}};
      jsonl += row.dump() + "\n";
    }
    ASSERT_EQ(store.ingest(jsonl, RecordFormat::Jsonl).accepted, static_cast<std::size_t>(n));
    for (auto format : {RecordFormat::Jsonl, RecordFormat::Csv}) {
      RecordStore copy;
      copy.declare_dimension({"kind", {"bug", "praise"}, {}});
      ASSERT_EQ(copy.ingest(store.export_records({}, format), format).accepted, static_cast<std::size_t>(n));
      for (const auto& r : store.query()) {
        const auto c = copy.get(r.id);
        ASSERT_TRUE(c);
        EXPECT_EQ(c->text, r.text);
        EXPECT_EQ(c->timestamp, r.timestamp);
        EXPECT_EQ(c->language, r.language);
        EXPECT_EQ(c->source, r.source);
        EXPECT_EQ(c->meta, r.meta);
        EXPECT_EQ(c->annotations.labels, r.annotations.labels);
      }
    }
  }
}

TEST(RecordStoreProperty, QueryDeterminism) {
  RecordStore store;
  with_sentiment(store).ingest(vt::feedback_corpus_jsonl(), RecordFormat::Jsonl);
  const auto f = Filter::parse("sentiment=negative&timestamp>=2024-04-05");
  const Order o{"timestamp", false};
  const auto a = store.query(f, o, 7);
  const auto b = store.query(f, o, 7);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].id, b[i].id);
}
