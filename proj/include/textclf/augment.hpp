#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "textclf/bm25.hpp"
#include "textclf/common.hpp"
#include "textclf/corpus.hpp"
#include "textclf/paraphrase.hpp"

namespace textclf {

enum class AugmentStep {
  AddValidation,
  AddFalseInferred,
  AddParaphrasedValidation,
  AddParaphrasedBm25Selected,
};

inline std::string to_string(AugmentStep step) {
  switch (step) {
    case AugmentStep::AddValidation: return "validation";
    case AugmentStep::AddFalseInferred: return "false_inferred";
    case AugmentStep::AddParaphrasedValidation: return "paraphrase_validation";
    case AugmentStep::AddParaphrasedBm25Selected: return "paraphrase_bm25";
  }
  fail("unknown augment step");
}

inline AugmentStep parse_augment_step(const std::string& name) {
  if (name == "validation") return AugmentStep::AddValidation;
  if (name == "false_inferred") return AugmentStep::AddFalseInferred;
  if (name == "paraphrase_validation") return AugmentStep::AddParaphrasedValidation;
  if (name == "paraphrase_bm25") return AugmentStep::AddParaphrasedBm25Selected;
  fail("unknown augment step '", name,
       "', expected one of: validation, false_inferred, paraphrase_validation, "
       "paraphrase_bm25");
}

// Display name in the style of the comparison tables.
inline std::string plan_label(const std::vector<AugmentStep>& steps) {
  std::string label = "Training";
  for (AugmentStep s : steps) {
    switch (s) {
      case AugmentStep::AddValidation: label += " + Validation"; break;
      case AugmentStep::AddFalseInferred: label += " + False inferred"; break;
      case AugmentStep::AddParaphrasedValidation:
      case AugmentStep::AddParaphrasedBm25Selected: label += " + Paraphrased"; break;
    }
  }
  return label;
}

// ---------------------------------------------------------------------------
// False-inferred examples
// ---------------------------------------------------------------------------

// The validation examples a trained model got wrong, carrying their gold
// labels, in validation order. Predictions must cover every validation id
// exactly once.
inline std::vector<Example> false_inferred(
    const std::vector<std::pair<std::string, Label>>& predictions,
    const Dataset& validation) {
  std::unordered_map<std::string, Label> pred_by_id;
  for (const auto& [id, label] : predictions)
    if (!pred_by_id.emplace(id, label).second)
      fail("false_inferred: duplicate prediction id '", id, "'");

  std::vector<Example> out;
  for (const Example& ex : validation.examples) {
    if (!ex.label)
      fail("false_inferred: validation id '", ex.id, "' has no gold label");
    auto it = pred_by_id.find(ex.id);
    if (it == pred_by_id.end())
      fail("false_inferred: no prediction for validation id '", ex.id, "'");
    if (!(it->second == *ex.label)) out.push_back(ex);
  }
  if (pred_by_id.size() != validation.size())
    fail("false_inferred: ", pred_by_id.size(), " predictions for ",
         validation.size(), " validation examples");
  return out;
}

// ---------------------------------------------------------------------------
// BM25 selection
// ---------------------------------------------------------------------------

// For each validation example in order, takes the top-ranked training
// example not selected yet. A query whose candidates all score zero still
// takes the lowest-id unselected document (the ranking covers every doc), so
// the result size is deterministically min(|validation|, |train|).
inline std::vector<Example> bm25_select(const Dataset& train, const Dataset& validation,
                                        const Bm25Params& params = {}) {
  if (train.examples.empty()) fail("bm25_select: training set is empty");

  std::vector<std::pair<std::string, std::string>> docs;
  docs.reserve(train.size());
  std::unordered_map<std::string, const Example*> by_id;
  for (const Example& ex : train.examples) {
    docs.emplace_back(ex.id, ex.text);
    by_id[ex.id] = &ex;
  }
  const Bm25Index index = build_index(docs, params);

  std::vector<Example> out;
  std::unordered_set<std::string> taken;
  for (const Example& query_ex : validation.examples) {
    if (taken.size() == train.size()) break;  // every candidate is exhausted
    const auto ranking = index.top_k(bm25_analyze(query_ex.text), train.size());
    for (const auto& [id, score] : ranking) {
      if (taken.insert(id).second) {
        out.push_back(*by_id.at(id));
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Paraphrase augmentation
// ---------------------------------------------------------------------------

struct ParaphrasedExamples {
  std::vector<Example> examples;         // one per successful source
  std::vector<std::string> omitted_ids;  // sources that failed after retries
  std::vector<ParaphraseRecord> records;
};

// One new example per source: paraphrased text, the source's own label, and
// the source id plus a "#para" suffix. Client failures become omissions, not
// aborts.
inline ParaphrasedExamples paraphrase_examples(const std::vector<Example>& source,
                                               ParaphraseProvider& provider,
                                               ParaphraseCache& cache,
                                               const ClientPolicy& policy,
                                               const Clock& clock = Clock::real()) {
  std::vector<ParaphraseRequest> requests;
  requests.reserve(source.size());
  for (const Example& ex : source) {
    if (!ex.label) fail("paraphrase_examples: source id '", ex.id, "' has no label");
    requests.push_back({ex.id, ex.text});
  }

  ParaphrasedExamples result;
  result.records = paraphrase(requests, provider, cache, policy, clock);
  for (std::size_t i = 0; i < source.size(); ++i) {
    const ParaphraseRecord& rec = result.records[i];
    if (!rec.ok) {
      result.omitted_ids.push_back(source[i].id);
      continue;
    }
    Example ex;
    ex.id = source[i].id + "#para";
    ex.keyword = source[i].keyword;
    ex.text = rec.paraphrase_text;
    ex.label = source[i].label;
    result.examples.push_back(std::move(ex));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Composition with provenance
// ---------------------------------------------------------------------------

struct AugmentComponent {
  AugmentStep step;
  std::vector<Example> examples;
  std::vector<std::string> omitted_source_ids;
};

struct ProvenanceEntry {
  std::string id;         // final id in the composed set ("-" for omissions)
  std::string origin;     // training / validation / false_inferred / ...
  std::string source_id;  // id before dedup suffixing
};

struct ComposedDataset {
  Dataset dataset;
  std::vector<ProvenanceEntry> provenance;  // one entry per composed example,
                                            // plus omission markers

  std::map<std::string, std::size_t> origin_counts() const {
    std::map<std::string, std::size_t> counts;
    for (const auto& entry : provenance)
      if (entry.id != "-") ++counts[entry.origin];
    return counts;
  }
};

inline std::string origin_of(AugmentStep step) {
  switch (step) {
    case AugmentStep::AddValidation: return "validation";
    case AugmentStep::AddFalseInferred: return "false_inferred";
    case AugmentStep::AddParaphrasedValidation: return "paraphrased_validation";
    case AugmentStep::AddParaphrasedBm25Selected: return "paraphrased_bm25";
  }
  fail("unknown augment step");
}

// Base examples first, then each component's examples in plan order. Every
// composed example gets exactly one origin tag; ids colliding with earlier
// ones are suffixed the same way concat does it.
inline ComposedDataset compose(const Dataset& base,
                               const std::vector<AugmentComponent>& components) {
  ComposedDataset out;
  out.dataset.label_space = base.label_space;
  out.dataset.split_name = base.split_name + "+augmented";

  std::unordered_set<std::string> ids;
  auto append = [&](Example ex, const std::string& origin) {
    const std::string source_id = ex.id;
    if (!ids.insert(ex.id).second) {
      std::string stem = ex.id + "#dup";
      std::string candidate = stem;
      for (int n = 2; !ids.insert(candidate).second; ++n)
        candidate = stem + std::to_string(n);
      ex.id = candidate;
    }
    if (ex.label && !out.dataset.label_space.contains(*ex.label))
      fail("compose: example '", source_id, "' from ", origin, " has label '",
           ex.label->value, "' outside the base label space");
    out.provenance.push_back({ex.id, origin, source_id});
    out.dataset.examples.push_back(std::move(ex));
  };

  for (const Example& ex : base.examples) append(ex, "training");
  for (const AugmentComponent& comp : components) {
    const std::string origin = origin_of(comp.step);
    for (const Example& ex : comp.examples) append(ex, origin);
    for (const std::string& omitted : comp.omitted_source_ids)
      out.provenance.push_back({"-", "omitted:" + origin, omitted});
  }
  return out;
}

// Line-delimited audit file emitted alongside the composed training CSV.
inline void write_provenance(std::ostream& out, const ComposedDataset& composed) {
  out << "id\torigin\tsource_id\n";
  for (const auto& entry : composed.provenance)
    out << detail::escape_tsv(entry.id) << '\t' << entry.origin << '\t'
        << detail::escape_tsv(entry.source_id) << '\n';
}

inline void write_provenance(const std::filesystem::path& path,
                             const ComposedDataset& composed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write provenance log: ", path.string());
  write_provenance(out, composed);
}

}  // namespace textclf
