#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <regex>
#include <set>

#include "scenarios.hpp"
#include "support.hpp"
#include "verbatim/error.hpp"
#include "verbatim/icl_classifier.hpp"

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

FeedbackRecord rec(const std::string& id, const std::string& text, const std::string& label = {},
                   const std::string& dim = "informativeness") {
  FeedbackRecord r;
  r.id = id;
  r.text = text;
  if (!label.empty()) r.annotations.labels[dim] = label;
  return r;
}

Dimension informativeness() {
  return Dimension::make("informativeness", {"informative", "non-informative"}, "");
}

using vt::golden_path;
using vt::review_pool;

Dimension kind() { return vt::kind_dimension(); }

}  // namespace

TEST(ParseLabel, Examples) {
  const auto labels = informativeness().label_set;
  EXPECT_EQ(parse_label("informative", labels), "informative");
  EXPECT_EQ(parse_label("Label: Non-informative.", labels), "non-informative");
  EXPECT_EQ(parse_label("informative, not non-informative", labels), "informative");
  EXPECT_EQ(parse_label("non-informative rather than informative", labels), "non-informative");
  EXPECT_EQ(code_of([&] { (void)parse_label("banana", labels); }), Errc::UnparseableLabel);
}

TEST(ParseLabel, LongerLabelWinsAtSamePosition) {
  EXPECT_EQ(parse_label("bug report please", {"bug", "bug report"}), "bug report");
}

TEST(Dimension, MakeValidates) {
  EXPECT_THROW(Dimension::make("d", {}, ""), Error);
  EXPECT_THROW(Dimension::make("d", {"A", "a "}, ""), Error);
  EXPECT_THROW(Dimension::make("d", {"a"}, "{target} then {demos}"), Error);
  const auto d = Dimension::make("d", {" Bug Report. "}, "");
  EXPECT_EQ(d.label_set, std::vector<std::string>{"bug report"});
}

TEST(Classify, ParsesExactLabel) {
  vt::Scripted s;
  s.backend->otherwise("informative");
  const auto r = classify(rec("t", "some text"), informativeness(), 0, {}, *s.gateway);
  EXPECT_EQ(r.label, "informative");
  EXPECT_EQ(r.gateway_calls, 1);
}

TEST(Classify, NormalizesCompletion) {
  vt::Scripted s;
  s.backend->otherwise("Label: Non-informative.");
  EXPECT_EQ(classify(rec("t", "x"), informativeness(), 0, {}, *s.gateway).label, "non-informative");
}

TEST(Classify, ReaskOnceThenFail) {
  vt::Scripted s;
  s.backend->otherwise("banana");
  EXPECT_EQ(code_of([&] { classify(rec("t", "x"), informativeness(), 0, {}, *s.gateway); }),
            Errc::UnparseableLabel);
  EXPECT_EQ(s.backend->chat_calls(), 2u);
  const auto reqs = s.backend->requests();
  EXPECT_EQ(reqs[1].messages.back().content,
            reqs[0].messages.back().content + reask_suffix(informativeness()));
}

TEST(Classify, ReaskRecovers) {
  vt::Scripted s;
  s.backend->on("Answer with exactly one label", {"informative"}).otherwise("banana");
  const auto r = classify(rec("t", "x"), informativeness(), 0, {}, *s.gateway);
  EXPECT_EQ(r.label, "informative");
  EXPECT_EQ(r.gateway_calls, 2);
}

TEST(BuildPrompt, ZeroShotHasNoDemoBlock) {
  vt::Scripted s;
  const auto b = build_prompt(rec("t", "the target text"), informativeness(), 0, {}, *s.gateway);
  EXPECT_TRUE(b.demonstrations.empty());
  EXPECT_EQ(b.rendered.find("Examples:"), std::string::npos);
  EXPECT_EQ(b.rendered, b.instruction + "\n\nFeedback: the target text\nLabel:");
  EXPECT_EQ(s.gateway->embed_calls(), 0u);
}

TEST(BuildPrompt, EmptyPoolWithShots) {
  vt::Scripted s;
  EXPECT_EQ(code_of([&] { build_prompt(rec("t", "x"), informativeness(), 3, {}, *s.gateway); }),
            Errc::EmptyPool);
}

TEST(BuildPrompt, SlotsPlaceBlocks) {
  vt::Scripted s;
  const auto pool = DemoPool::build(*s.gateway, review_pool(), "kind");
  const auto d = Dimension::make("kind", {"bug report", "praise"},
                                 "Head {labels}\n{demos}\nMiddle\n{target}\nTail");
  const auto b = build_prompt(rec("t", "app crashes"), d, 2, pool, *s.gateway);
  const auto head = b.rendered.find("Head bug report, praise");
  const auto demos = b.rendered.find("Examples:");
  const auto middle = b.rendered.find("Middle");
  const auto target = b.rendered.find("Feedback: app crashes\nLabel:");
  const auto tail = b.rendered.find("Tail");
  EXPECT_LT(head, demos);
  EXPECT_LT(demos, middle);
  EXPECT_LT(middle, target);
  EXPECT_LT(target, tail);
}

// Frozen rendered prompts for the three shot counts used in practice.
// VERBATIM_UPDATE_GOLDEN=1 rewrites them.
TEST(BuildPrompt, GoldenPrompts) {
  vt::Scripted s;
  const auto pool = DemoPool::build(*s.gateway, review_pool(), "kind");
  const auto target = vt::golden_target();
  for (std::size_t k : {0u, 10u, 30u}) {
    const auto b = build_prompt(target, kind(), k, pool, *s.gateway);
    EXPECT_EQ(b.demonstrations.size(), k);
    if (std::getenv("VERBATIM_UPDATE_GOLDEN") != nullptr) vt::write_file(golden_path(k), b.rendered);
    const std::string expected = vt::read_file(golden_path(k));
    ASSERT_FALSE(expected.empty()) << golden_path(k);
    EXPECT_EQ(b.rendered, expected) << "k=" << k;
  }
}

// Demonstrations equal a brute-force nearest-neighbour scan, reversed.
TEST(IclProperty, DemoRetrievalFaithfulness) {
  vt::Scripted s;
  const auto records = review_pool();
  const auto pool = DemoPool::build(*s.gateway, records, "kind");
  MockEmbedder embedder;
  for (const std::string target : {"crash on start", "please add export", "wonderful app", "meh"}) {
    for (std::size_t k : {1u, 5u, 17u, 40u, 60u}) {
      const auto b = build_prompt(rec("t", target), kind(), k, pool, *s.gateway);
      const auto q = embedder.embed(target);
      std::vector<std::pair<double, std::string>> scored;
      for (const auto& r : records) scored.emplace_back(cosine(q, embedder.embed(r.text)), r.id);
      std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
      });
      scored.resize(std::min(k, scored.size()));
      ASSERT_EQ(b.demonstrations.size(), scored.size());
      for (std::size_t i = 0; i < scored.size(); ++i) {
        const auto& demo = b.demonstrations[scored.size() - 1 - i];
        EXPECT_EQ(demo.id, scored[i].second);
        const auto& src = *std::find_if(records.begin(), records.end(),
                                        [&](const auto& r) { return r.id == demo.id; });
        EXPECT_EQ(demo.text, src.text);
        EXPECT_EQ(demo.label, src.annotations.labels.at("kind"));
      }
      for (std::size_t i = 1; i < b.demonstrations.size(); ++i) {
        EXPECT_LE(b.demonstrations[i - 1].similarity, b.demonstrations[i].similarity);
      }
    }
  }
}

TEST(IclProperty, TargetNeverItsOwnDemo) {
  vt::Scripted s;
  const auto records = review_pool();
  const auto pool = DemoPool::build(*s.gateway, records, "kind");
  const auto b = build_prompt(records[3], kind(), 40, pool, *s.gateway);
  EXPECT_EQ(b.demonstrations.size(), 39u);
  for (const auto& d : b.demonstrations) EXPECT_NE(d.id, records[3].id);
}

TEST(IclProperty, PromptOrdering) {
  vt::Scripted s;
  const auto pool = DemoPool::build(*s.gateway, review_pool(), "kind");
  for (std::size_t k = 0; k <= 40; k += 3) {
    const auto b = build_prompt(rec("t", "unique target sentence"), kind(), k, pool, *s.gateway);
    const auto instr = b.rendered.find(b.instruction);
    const auto target = b.rendered.rfind("Feedback: unique target sentence");
    ASSERT_EQ(instr, 0u);
    ASSERT_NE(target, std::string::npos);
    std::size_t last = instr + b.instruction.size();
    for (const auto& d : b.demonstrations) {
      const auto at = b.rendered.find("Feedback: " + d.text + "\nLabel: " + d.label, last);
      ASSERT_NE(at, std::string::npos);
      EXPECT_GE(at, last);
      last = at;
    }
    EXPECT_GT(target, last);
  }
}

TEST(IclProperty, ClosedSet) {
  std::mt19937 rng(17);
  const std::vector<std::string> words = {"bug",    "report", "praise", "feature", "request",
                                          "banana", "Bug Report!", "PRAISE.", "the", "-", "non"};
  vt::Scripted s;
  s.backend->handler([&](const ChatRequest&) -> std::optional<std::string> {
    std::string out;
    for (int i = 0; i < 5; ++i) out += words[rng() % words.size()] + " ";
    return out;
  });
  const auto d = kind();
  for (int i = 0; i < 300; ++i) {
    try {
      const auto r = classify(rec("t", "x"), d, 0, {}, *s.gateway);
      EXPECT_TRUE(d.has_label(r.label)) << r.label;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::UnparseableLabel);
    }
  }
}

TEST(Folding, TopTenPlusOthers) {
  std::vector<std::string> labels;
  for (int l = 0; l < 18; ++l) {
    for (int i = 0; i <= 18 - l; ++i) labels.push_back("label" + std::string(1, char('a' + l)));
  }
  const auto f = fold_labels(labels, 10);
  EXPECT_EQ(f.kept.size(), 10u);
  EXPECT_TRUE(f.folds_anything());
  EXPECT_EQ(f.apply("labela"), "labela");
  EXPECT_EQ(f.apply("labelr"), "others");
  EXPECT_EQ(f.label_set().size(), 11u);
  EXPECT_EQ(f.label_set().back(), "others");
  EXPECT_FALSE(fold_labels({"a", "b"}, 10).folds_anything());
}

TEST(Split, SizesAndDeterminism) {
  const auto a = split_70_30(300, 7);
  EXPECT_EQ(a.train.size(), 210u);
  EXPECT_EQ(a.test.size(), 90u);
  const auto b = split_70_30(300, 7);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  std::vector<std::size_t> all = a.train;
  all.insert(all.end(), a.test.begin(), a.test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 300; ++i) EXPECT_EQ(all[i], i);
  EXPECT_NE(split_70_30(300, 8).test, a.test);
  EXPECT_EQ(split_70_30(10, 1).test.size(), 3u);
  EXPECT_EQ(split_70_30(0, 1).test.size(), 0u);
}

const auto& kNames = vt::kForumNames;
using vt::forum_corpus;
using vt::script_forum_model;

TEST(Evaluate, AccuracyRatio) {
  vt::Scripted s;
  std::vector<FeedbackRecord> data;
  for (int i = 0; i < 33; ++i) data.push_back(rec("x" + std::to_string(i), "item " + std::to_string(i), "informative"));
  // test side has floor(33*3/10)... 33 - 23 = 10 records; one answer wrong
  const auto split = split_70_30(33, 5);
  ASSERT_EQ(split.test.size(), 10u);
  const std::string wrong_text = "item " + std::to_string(split.test[4]);
  s.backend->handler([&](const ChatRequest& req) -> std::optional<std::string> {
    const auto& p = req.messages.back().content;
    return p.find("Feedback: " + wrong_text + "\n") != std::string::npos ? "non-informative" : "informative";
  });
  const auto report = evaluate(data, informativeness(), 0, 5, *s.gateway);
  EXPECT_EQ(report.correct, 9u);
  EXPECT_DOUBLE_EQ(report.accuracy, 0.9);
}

// Values frozen from tests/oracles/classification_oracle.py.
TEST(Evaluate, MatchesOracleSeed7) {
  const auto corpus = forum_corpus();
  vt::Scripted s;
  script_forum_model(*s.backend, corpus);
  const auto d = Dimension::make("topic", kNames, "");
  const auto report = evaluate(corpus, d, 10, 7, *s.gateway);
  EXPECT_EQ(report.train_size, 210u);
  EXPECT_EQ(report.test_size, 90u);
  EXPECT_EQ(report.correct, 62u);
  EXPECT_EQ(report.unparseable, 7u);
  EXPECT_DOUBLE_EQ(report.accuracy, 0.6888888888888889);
  const std::vector<std::string> first = {"r36", "r13", "r111", "r287", "r114",
                                          "r35", "r281", "r227", "r79", "r190"};
  EXPECT_EQ(std::vector<std::string>(report.test_ids.begin(), report.test_ids.begin() + 10), first);
  std::vector<std::string> kept(kNames.begin(), kNames.begin() + 10);
  kept.push_back("others");
  EXPECT_EQ(report.labels, kept);
}

TEST(Evaluate, MatchesOracleSeed42) {
  const auto corpus = forum_corpus();
  vt::Scripted s;
  script_forum_model(*s.backend, corpus);
  const auto d = Dimension::make("topic", kNames, "");
  const auto report = evaluate(corpus, d, 0, 42, *s.gateway);
  EXPECT_EQ(report.correct, 65u);
  EXPECT_EQ(report.unparseable, 8u);
  EXPECT_DOUBLE_EQ(report.accuracy, 0.7222222222222222);
  const std::vector<std::string> first = {"r144", "r11", "r217", "r177", "r94",
                                          "r111", "r19", "r222", "r80",  "r272"};
  EXPECT_EQ(std::vector<std::string>(report.test_ids.begin(), report.test_ids.begin() + 10), first);
}

TEST(Evaluate, OthersCountInFoldedTruth) {
  const auto corpus = forum_corpus();
  std::vector<std::string> labels;
  for (const auto& r : corpus) labels.push_back(r.annotations.labels.at("topic"));
  const auto f = fold_labels(labels, 10);
  EXPECT_EQ(std::count_if(labels.begin(), labels.end(), [&](const auto& l) { return f.apply(l) == "others"; }), 52);
}

// Equal seeds give identical reports, including through a replayed cassette.
TEST(Evaluate, SplitDeterminismUnderReplay) {
  const auto corpus = forum_corpus();
  const auto d = Dimension::make("topic", kNames, "");
  auto cassette = std::make_shared<Cassette>();
  auto scripted = std::make_shared<ScriptedBackend>();
  script_forum_model(*scripted, corpus);
  LlmGateway recorder(std::make_shared<RecordingBackend>(scripted, cassette));
  const auto first = evaluate(corpus, d, 5, 11, recorder);
  LlmGateway replay(std::make_shared<ReplayBackend>(cassette));
  const auto second = evaluate(corpus, d, 5, 11, replay);
  EXPECT_EQ(first.to_json(), second.to_json());
}

TEST(LoadDimensions, ReadsConfig) {
  vt::TempDir dir;
  vt::write_file(dir / "dims.json", R"({"dimensions":[
    {"name":"sentiment","labels":["Positive","Negative","Neutral"],"scores":{"positive":1,"negative":-1,"neutral":0}},
    {"name":"kind","labels":["bug"],"instruction":"Classify. {labels}"}]})");
  const auto dims = load_dimensions(dir / "dims.json");
  ASSERT_EQ(dims.size(), 2u);
  EXPECT_EQ(dims[0].label_set, (std::vector<std::string>{"positive", "negative", "neutral"}));
  EXPECT_EQ(dims[0].scores.at("negative"), -1.0);
  EXPECT_EQ(dims[1].instruction, "Classify. {labels}");
  EXPECT_THROW(load_dimensions(dir / "missing.json"), Error);
}
