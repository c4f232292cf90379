#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "verbatim/embedding_index.hpp"
#include "verbatim/llm_gateway.hpp"
#include "verbatim/record_store.hpp"

namespace verbatim {

inline constexpr std::string_view kOthersLabel = "others";

// A classification axis. The instruction is a template; {labels} expands to
// the comma-separated label set, {demos} and {target} mark where the
// demonstration block and the target block go (appended in that order when
// absent).
struct Dimension {
  std::string name;
  std::vector<std::string> label_set;  // normalized, unique
  std::string instruction;
  std::map<std::string, double> scores;

  // Normalizes and validates the label set and slot order.
  static Dimension make(std::string name, const std::vector<std::string>& labels,
                        std::string instruction,
                        std::map<std::string, double> scores = {});

  [[nodiscard]] bool has_label(std::string_view label) const;
  [[nodiscard]] DimensionSchema schema() const;
  // Same dimension with a different label set.
  [[nodiscard]] Dimension with_labels(const std::vector<std::string>& labels) const;
};

// Default instruction used when a dimension config omits one.
std::string default_instruction(std::string_view dimension_name);

// {"dimensions": [{"name", "labels", "instruction"?, "scores"?}, ...]}
std::vector<Dimension> load_dimensions(const std::filesystem::path& path);

struct Demonstration {
  std::string id;
  std::string text;
  std::string label;
  double similarity = 0.0;
};

struct PromptBundle {
  std::string instruction;
  std::vector<Demonstration> demonstrations;  // ascending similarity
  std::string target;
  std::string rendered;
};

// Labeled demonstration pool: embeddings of labeled records with their
// labels as payload.
struct DemoPool {
  std::string dimension;
  std::shared_ptr<const IndexSnapshot> snapshot;

  [[nodiscard]] bool empty() const { return !snapshot || snapshot->size() == 0; }

  // Embeds the records that carry a label for `dimension`.
  static DemoPool build(LlmGateway& gateway,
                        const std::vector<FeedbackRecord>& records,
                        const std::string& dimension);
};

PromptBundle build_prompt(const FeedbackRecord& target, const Dimension& dimension,
                          std::size_t k, const DemoPool& pool,
                          LlmGateway& gateway);

// First label, in completion order, that occurs as a whole phrase in the
// normalized completion; longer labels win at equal positions.
std::string parse_label(std::string_view completion,
                        const std::vector<std::string>& label_set);

struct ClassificationResult {
  std::string label;
  std::string raw_completion;
  std::vector<Demonstration> demos_used;
  int gateway_calls = 0;
};

// One re-ask with an explicit label-list suffix, then UnparseableLabel.
ClassificationResult classify(const FeedbackRecord& record,
                              const Dimension& dimension, std::size_t k,
                              const DemoPool& pool, LlmGateway& gateway);

std::string reask_suffix(const Dimension& dimension);

// Long-tail label folding: the `top_n` most frequent labels are kept
// (ties broken by label), everything else maps to "others".
struct LabelFolding {
  std::vector<std::string> kept;  // frequency order
  std::map<std::string, std::string> mapping;
  [[nodiscard]] std::string apply(const std::string& label) const;
  [[nodiscard]] std::vector<std::string> label_set() const;
  [[nodiscard]] bool folds_anything() const;
};

LabelFolding fold_labels(const std::vector<std::string>& labels, std::size_t top_n);

struct DatasetSplit {
  std::vector<std::size_t> train;  // indices into the input
  std::vector<std::size_t> test;
};

// Seeded Fisher-Yates permutation; the first 70% (integer floor) trains,
// the remainder tests. Independent of the standard library's
// distribution implementations.
DatasetSplit split_70_30(std::size_t n, std::uint64_t seed);

struct EvaluationOptions {
  std::size_t fold_top_n = 10;
};

struct AccuracyReport {
  std::string dimension;
  std::uint64_t seed = 0;
  std::size_t k = 0;
  std::vector<std::string> labels;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  std::size_t correct = 0;
  std::size_t unparseable = 0;
  double accuracy = 0.0;
  std::vector<std::string> test_ids;
  std::map<std::string, std::map<std::string, std::size_t>> confusion;  // truth -> predicted -> n

  [[nodiscard]] std::string to_json() const;
};

// Folds, splits, builds the demo pool from the train side and classifies
// the test side. Unparseable completions count as wrong predictions.
AccuracyReport evaluate(const std::vector<FeedbackRecord>& dataset,
                        const Dimension& dimension, std::size_t k,
                        std::uint64_t seed, LlmGateway& gateway,
                        const EvaluationOptions& options = {});

}  // namespace verbatim
