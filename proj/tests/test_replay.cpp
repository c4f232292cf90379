#include <gtest/gtest.h>

#include "replay_scenario.hpp"
#include "support.hpp"
#include "verbatim/error.hpp"

using namespace verbatim;
using nlohmann::json;

namespace {

std::filesystem::path fixtures() { return vt::data_dir() / "replay"; }

json golden() { return json::parse(vt::read_file(fixtures() / "golden.json")); }

}  // namespace

TEST(Replay, ThreeSessionsMatchGolden) {
  vt::TempDir data;
  Service service(vt::replay_config(fixtures(), data.path()));
  const json listing = vt::run_replay_scenario(service, fixtures());
  const json expected = golden();
  ASSERT_EQ(listing["sessions"].size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& got = listing["sessions"][i];
    const auto& want = expected["sessions"][i];
    EXPECT_EQ(got["status"], "answered") << got["question"];
    EXPECT_EQ(got["text"].get<std::string>(), want["text"].get<std::string>());
    EXPECT_EQ(got["artifacts"].dump(), want["artifacts"].dump());
    EXPECT_EQ(got["code_shown"], want["code_shown"]);
  }
  EXPECT_EQ(listing["eval_classify"].dump(), expected["eval_classify"].dump());
  EXPECT_EQ(listing.dump(2) + "\n", vt::read_file(fixtures() / "golden.json"));
}

TEST(Replay, RepeatedRunsByteIdentical) {
  std::string first;
  for (int run = 0; run < 2; ++run) {
    vt::TempDir data;
    Service service(vt::replay_config(fixtures(), data.path()));
    const std::string dump = vt::run_replay_scenario(service, fixtures()).dump();
    if (run == 0) {
      first = dump;
    } else {
      EXPECT_EQ(dump, first);
    }
  }
}

TEST(Replay, TaxonomyCoversTableImageAndSuggestion) {
  const json g = golden();
  EXPECT_EQ(g["sessions"][0]["artifacts"][0]["kind"], "table");
  EXPECT_EQ(g["sessions"][1]["artifacts"][0]["kind"], "image");
  EXPECT_GE(g["sessions"][2]["artifacts"].size(), 1u);
  EXPECT_NE(g["sessions"][0]["text"].get<std::string>().find("login issue"), std::string::npos);
}

TEST(Replay, ArtifactsRetrievableByUrl) {
  vt::TempDir data;
  Service service(vt::replay_config(fixtures(), data.path()));
  service.ingest(vt::read_file(fixtures() / "feedback.jsonl"), RecordFormat::Jsonl);
  const auto h = service.create_session();
  const auto r = service.ask(h.id, vt::kFigureQuestion);
  ASSERT_EQ(r.status, ResponseStatus::Answered) << r.text;
  ASSERT_EQ(r.artifacts.size(), 1u);
  const auto& a = r.artifacts[0];
  ASSERT_EQ(a.url.rfind("/artifacts/", 0), 0u);
  const auto file = service.artifact(a.url.substr(std::string("/artifacts/").size()));
  EXPECT_EQ(file.content_type, "image/svg+xml");
  EXPECT_NE(vt::read_file(file.path).find("<svg"), std::string::npos);
  service.close_session(h.id);
  EXPECT_THROW((void)service.artifact(a.url.substr(11)), Error);
}

TEST(Replay, UnrecordedQuestionMissesWithoutNetwork) {
  vt::TempDir data;
  Service service(vt::replay_config(fixtures(), data.path()));
  service.ingest(vt::read_file(fixtures() / "feedback.jsonl"), RecordFormat::Jsonl);
  const auto h = service.create_session();
  const auto r = service.ask(h.id, "How many records mention pricing?");
  EXPECT_EQ(r.status, ResponseStatus::Failed);
  EXPECT_NE(r.text.find("CassetteMiss"), std::string::npos);
}

TEST(Replay, FollowUpHistoryIsPartOfTheRequest) {
  // the same question after a different first turn is a different request
  vt::TempDir data;
  Service service(vt::replay_config(fixtures(), data.path()));
  service.ingest(vt::read_file(fixtures() / "feedback.jsonl"), RecordFormat::Jsonl);
  const auto h = service.create_session();
  ASSERT_EQ(service.ask(h.id, vt::kAnalysisQuestion).status, ResponseStatus::Answered);
  const auto second = service.ask(h.id, vt::kFigureQuestion);
  EXPECT_EQ(second.status, ResponseStatus::Failed);
  EXPECT_EQ(service.history(h.id).size(), 2u);
}
