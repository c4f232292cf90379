#include "verbatim/icl_classifier.hpp"

#include <algorithm>
#include <fstream>
#include <random>

#include "json.hpp"
#include "verbatim/error.hpp"
#include "verbatim/text.hpp"

namespace verbatim {

using nlohmann::json;

namespace {

constexpr std::string_view kLabelsSlot = "{labels}";
constexpr std::string_view kDemosSlot = "{demos}";
constexpr std::string_view kTargetSlot = "{target}";
constexpr std::size_t kEmbedBatch = 256;

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
}

std::string demos_block(const std::vector<Demonstration>& demos) {
  if (demos.empty()) return {};
  std::string out = "Examples:";
  for (const auto& d : demos) {
    out += "\n\nFeedback: " + d.text + "\nLabel: " + d.label;
  }
  return out;
}

std::string target_block(std::string_view text) {
  return "Feedback: " + std::string(text) + "\nLabel:";
}

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  // rejection sampling keeps the draw unbiased and platform independent
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % bound;
  while (true) {
    const std::uint64_t x = rng();
    if (x < limit) return x % bound;
  }
}

}  // namespace

Dimension Dimension::make(std::string name, const std::vector<std::string>& labels,
                          std::string instruction,
                          std::map<std::string, double> scores) {
  if (text::trim(name).empty()) {
    throw Error(Errc::InvalidArgument, "dimension needs a name");
  }
  Dimension d;
  d.name = std::move(name);
  for (const auto& l : labels) {
    std::string n = text::normalize_label(l);
    if (n.empty()) throw Error(Errc::InvalidArgument, "empty label in " + d.name);
    if (std::find(d.label_set.begin(), d.label_set.end(), n) != d.label_set.end()) {
      throw Error(Errc::InvalidArgument,
                  "duplicate label '" + n + "' in " + d.name);
    }
    d.label_set.push_back(std::move(n));
  }
  if (d.label_set.empty()) {
    throw Error(Errc::InvalidArgument, "dimension " + d.name + " has no labels");
  }
  d.instruction = instruction.empty() ? default_instruction(d.name)
                                      : std::move(instruction);
  const auto demos_at = d.instruction.find(kDemosSlot);
  const auto target_at = d.instruction.find(kTargetSlot);
  if (demos_at != std::string::npos && target_at != std::string::npos &&
      demos_at > target_at) {
    throw Error(Errc::InvalidArgument,
                "instruction for " + d.name + " places {target} before {demos}");
  }
  for (auto& [label, score] : scores) {
    d.scores[text::normalize_label(label)] = score;
  }
  return d;
}

bool Dimension::has_label(std::string_view label) const {
  return std::find(label_set.begin(), label_set.end(), label) != label_set.end();
}

DimensionSchema Dimension::schema() const { return {name, label_set, scores}; }

Dimension Dimension::with_labels(const std::vector<std::string>& labels) const {
  return make(name, labels, instruction, scores);
}

std::string default_instruction(std::string_view dimension_name) {
  return "You are assisting a product team that analyzes verbatim user "
         "feedback. Each item is raw text written by a user of the product.\n"
         "Task: assign the feedback to exactly one category of the \"" +
         std::string(dimension_name) +
         "\" dimension.\n"
         "Guidelines: read the whole feedback, judge it by what the user "
         "actually says, and prefer the most specific matching category.\n"
         "Allowed labels: {labels}.\n"
         "Reply with the label only.";
}

std::vector<Dimension> load_dimensions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot read " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::InvalidArgument, path.string() + ": " + e.what());
  }
  std::vector<Dimension> out;
  try {
    for (const auto& d : doc.at("dimensions")) {
      std::map<std::string, double> scores;
      if (d.contains("scores")) scores = d.at("scores").get<std::map<std::string, double>>();
      out.push_back(Dimension::make(d.at("name").get<std::string>(),
                                    d.at("labels").get<std::vector<std::string>>(),
                                    d.value("instruction", std::string()),
                                    std::move(scores)));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, path.string() + ": " + e.what());
  }
  return out;
}

DemoPool DemoPool::build(LlmGateway& gateway,
                         const std::vector<FeedbackRecord>& records,
                         const std::string& dimension) {
  std::vector<const FeedbackRecord*> labeled;
  for (const auto& r : records) {
    if (r.annotations.labels.count(dimension) > 0) labeled.push_back(&r);
  }
  EmbeddingIndex index;
  for (std::size_t start = 0; start < labeled.size(); start += kEmbedBatch) {
    const std::size_t end = std::min(labeled.size(), start + kEmbedBatch);
    std::vector<std::string> texts;
    for (std::size_t i = start; i < end; ++i) texts.push_back(labeled[i]->text);
    auto vectors = gateway.embed(texts);
    for (std::size_t i = start; i < end; ++i) {
      const auto* r = labeled[i];
      index.add(r->id, std::move(vectors[i - start]),
                {r->text, r->annotations.labels.at(dimension), {}, 0.0});
    }
  }
  return {dimension, index.finalize()};
}

PromptBundle build_prompt(const FeedbackRecord& target, const Dimension& dimension,
                          std::size_t k, const DemoPool& pool,
                          LlmGateway& gateway) {
  PromptBundle bundle;
  if (k > 0) {
    if (pool.empty()) {
      throw Error(Errc::EmptyPool, "no labeled data for " + dimension.name);
    }
    const EmbeddingVector query = gateway.embed_one(target.text);
    auto hits = pool.snapshot->top_k(query, k, [&](const IndexEntry& e) {
      return e.id != target.id;
    });
    // most similar demonstration sits next to the target
    std::reverse(hits.begin(), hits.end());
    for (const auto& hit : hits) {
      const IndexEntry* e = pool.snapshot->find(hit.id);
      bundle.demonstrations.push_back(
          {e->id, e->payload.text, e->payload.label, hit.score});
    }
  }
  std::string labels = text::join(dimension.label_set, ", ");
  std::string instruction = dimension.instruction;
  replace_all(instruction, kLabelsSlot, labels);
  const std::string demos = demos_block(bundle.demonstrations);
  const std::string tgt = target_block(target.text);

  std::string rendered = instruction;
  const bool has_demos_slot = rendered.find(kDemosSlot) != std::string::npos;
  const bool has_target_slot = rendered.find(kTargetSlot) != std::string::npos;
  if (has_demos_slot) {
    replace_all(rendered, kDemosSlot, demos);
  } else if (!demos.empty()) {
    if (has_target_slot) {
      const auto at = rendered.find(kTargetSlot);
      rendered.insert(at, demos + "\n\n");
    } else {
      rendered += "\n\n" + demos;
    }
  }
  if (has_target_slot) {
    replace_all(rendered, kTargetSlot, tgt);
  } else {
    rendered += "\n\n" + tgt;
  }

  std::string bare = instruction;
  replace_all(bare, kDemosSlot, "");
  replace_all(bare, kTargetSlot, "");
  bundle.instruction = text::trim(bare);
  bundle.target = target.text;
  bundle.rendered = std::move(rendered);
  return bundle;
}

std::string parse_label(std::string_view completion,
                        const std::vector<std::string>& label_set) {
  const std::string haystack = text::normalize_label(completion);
  std::size_t best_pos = std::string::npos;
  const std::string* best = nullptr;
  for (const auto& label : label_set) {
    const std::string needle = text::normalize_label(label);
    const std::size_t pos = text::find_whole_phrase(haystack, needle);
    if (pos == std::string::npos) continue;
    if (best == nullptr || pos < best_pos ||
        (pos == best_pos && needle.size() > best->size())) {
      best_pos = pos;
      best = &label;
    }
  }
  if (best == nullptr) {
    throw Error(Errc::UnparseableLabel, std::string(completion.substr(0, 200)));
  }
  return *best;
}

std::string reask_suffix(const Dimension& dimension) {
  return "\n\nAnswer with exactly one label from: " +
         text::join(dimension.label_set, ", ") + ".";
}

ClassificationResult classify(const FeedbackRecord& record,
                              const Dimension& dimension, std::size_t k,
                              const DemoPool& pool, LlmGateway& gateway) {
  const PromptBundle bundle = build_prompt(record, dimension, k, pool, gateway);
  ClassificationResult result;
  result.demos_used = bundle.demonstrations;
  result.raw_completion = gateway.complete(bundle.rendered);
  result.gateway_calls = 1;
  try {
    result.label = parse_label(result.raw_completion, dimension.label_set);
    return result;
  } catch (const Error& e) {
    if (e.code() != Errc::UnparseableLabel) throw;
  }
  result.raw_completion = gateway.complete(bundle.rendered + reask_suffix(dimension));
  result.gateway_calls = 2;
  result.label = parse_label(result.raw_completion, dimension.label_set);
  return result;
}

std::string LabelFolding::apply(const std::string& label) const {
  auto it = mapping.find(label);
  return it == mapping.end() ? std::string(kOthersLabel) : it->second;
}

std::vector<std::string> LabelFolding::label_set() const {
  std::vector<std::string> out = kept;
  if (folds_anything() &&
      std::find(out.begin(), out.end(), kOthersLabel) == out.end()) {
    out.emplace_back(kOthersLabel);
  }
  return out;
}

bool LabelFolding::folds_anything() const {
  return std::any_of(mapping.begin(), mapping.end(),
                     [](const auto& kv) { return kv.first != kv.second; });
}

LabelFolding fold_labels(const std::vector<std::string>& labels, std::size_t top_n) {
  std::map<std::string, std::size_t> freq;
  for (const auto& l : labels) ++freq[l];
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;  // map order already sorts ties by label
  });
  LabelFolding folding;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const auto& label = ranked[i].first;
    if (i < top_n || ranked.size() <= top_n) {
      folding.kept.push_back(label);
      folding.mapping[label] = label;
    } else {
      folding.mapping[label] = std::string(kOthersLabel);
    }
  }
  return folding;
}

DatasetSplit split_70_30(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(order[i - 1], order[j]);
  }
  const std::size_t train_size = (7 * n) / 10;
  DatasetSplit split;
  split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_size));
  split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(train_size), order.end());
  return split;
}

std::string AccuracyReport::to_json() const {
  json j = {{"dimension", dimension},
            {"seed", seed},
            {"k", k},
            {"labels", labels},
            {"train_size", train_size},
            {"test_size", test_size},
            {"correct", correct},
            {"unparseable", unparseable},
            {"accuracy", accuracy},
            {"test_ids", test_ids},
            {"confusion", confusion}};
  return j.dump(2);
}

AccuracyReport evaluate(const std::vector<FeedbackRecord>& dataset,
                        const Dimension& dimension, std::size_t k,
                        std::uint64_t seed, LlmGateway& gateway,
                        const EvaluationOptions& options) {
  std::vector<std::string> truth;
  truth.reserve(dataset.size());
  for (const auto& r : dataset) {
    auto it = r.annotations.labels.find(dimension.name);
    if (it == r.annotations.labels.end()) {
      throw Error(Errc::InvalidArgument,
                  "record " + r.id + " has no ground truth for " + dimension.name);
    }
    truth.push_back(it->second);
  }

  Dimension effective = dimension;
  if (options.fold_top_n > 0) {
    const LabelFolding folding = fold_labels(truth, options.fold_top_n);
    if (folding.folds_anything()) {
      for (auto& t : truth) t = folding.apply(t);
      std::vector<std::string> labels = folding.label_set();
      effective = dimension.with_labels(labels);
    }
  }

  // Working copies carry the folded ground truth so demonstrations show it.
  std::vector<FeedbackRecord> records = dataset;
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].annotations.labels[dimension.name] = truth[i];
  }

  const DatasetSplit split = split_70_30(records.size(), seed);
  std::vector<FeedbackRecord> train;
  train.reserve(split.train.size());
  for (std::size_t i : split.train) train.push_back(records[i]);
  const DemoPool pool = k > 0 ? DemoPool::build(gateway, train, dimension.name)
                              : DemoPool{dimension.name, nullptr};

  AccuracyReport report;
  report.dimension = dimension.name;
  report.seed = seed;
  report.k = k;
  report.labels = effective.label_set;
  report.train_size = split.train.size();
  report.test_size = split.test.size();
  for (std::size_t i : split.test) {
    const FeedbackRecord& r = records[i];
    report.test_ids.push_back(r.id);
    std::string predicted;
    try {
      predicted = classify(r, effective, k, pool, gateway).label;
    } catch (const Error& e) {
      if (e.code() != Errc::UnparseableLabel) throw;
      ++report.unparseable;
      predicted = "<unparseable>";
    }
    if (predicted == truth[i]) ++report.correct;
    ++report.confusion[truth[i]][predicted];
  }
  report.accuracy = report.test_size == 0
                        ? 0.0
                        : static_cast<double>(report.correct) /
                              static_cast<double>(report.test_size);
  return report;
}

}  // namespace verbatim
