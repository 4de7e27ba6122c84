#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "textclf/common.hpp"
#include "textclf/corpus.hpp"
#include "textclf/metrics.hpp"

namespace textclf {

// One prepared training item: windowed source tokens plus the target string
// the model should emit.
struct Seq2SeqPair {
  std::vector<std::string> source_tokens;
  std::string target_text;
};

// Behavioral contract for a generative classification backend. The trainer
// owns shuffling, batching and windowing; a backend only ever sees source
// sequences that already fit its length limit. generate must be greedy and
// deterministic for a fixed state.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::string name() const = 0;
  virtual std::vector<std::string> tokenize(const std::string& text) const = 0;

  // One pass over the prepared batches; returns the mean training loss.
  virtual double train_epoch(const std::vector<std::vector<Seq2SeqPair>>& batches) = 0;

  virtual std::string generate(const std::vector<std::string>& source_tokens) const = 0;

  // Opaque state blob; load(save()) must reproduce generate exactly.
  virtual std::string save_state() const = 0;
  virtual void load_state(const std::string& blob) = 0;
};

struct TrainConfig {
  int epochs = 10;
  int batch_size = 4;
  std::size_t max_source_length = 768;
  TokenWindowPolicy window{768, 256, 512};
  SelectionMetric selection = SelectionMetric::F1Macro;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs <= 0) fail("TrainConfig: epochs must be positive");
    if (batch_size <= 0) fail("TrainConfig: batch_size must be positive");
    if (max_source_length == 0) fail("TrainConfig: max_source_length must be positive");
    window.validate();
    if (window.max_len != max_source_length)
      fail("TrainConfig: window.max_len (", window.max_len,
           ") != max_source_length (", max_source_length, ")");
  }
};

// ---------------------------------------------------------------------------
// Label verbalization and decoding
// ---------------------------------------------------------------------------

inline std::string verbalize_label(const Label& label, const LabelSpace& space) {
  return space.verbalize(label);
}

// Trims surrounding whitespace, then requires an exact match against a
// declared verbalization. Anything else decodes to the fallback label, so
// this is a total function over generated strings.
inline Label decode_label(const std::string& generated, const LabelSpace& space) {
  auto match = space.match_verbalization(trim(generated));
  return match ? *match : space.default_fallback();
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

// One prediction per input, in input order. Each example is generated
// independently, so batch size cannot influence outputs. A backend failure
// mid-run propagates and discards all partial results.
inline std::vector<std::pair<std::string, Label>> predict(const Backend& backend,
                                                          const Dataset& inputs,
                                                          const TrainConfig& config) {
  config.validate();
  std::vector<std::pair<std::string, Label>> out;
  out.reserve(inputs.size());
  for (const Example& ex : inputs.examples) {
    auto tokens = window_tokens(backend.tokenize(ex.text), config.window);
    std::string generated = backend.generate(tokens);
    out.emplace_back(ex.id, decode_label(generated, inputs.label_space));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training with best-checkpoint selection
// ---------------------------------------------------------------------------

struct EpochLogEntry {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double validation_metric = 0.0;
};

struct Checkpoint {
  std::string backend_name;
  std::string backend_state;
  int epoch = 0;  // 1-based epoch the state was saved at
  MetricsReport validation_report;
  std::vector<EpochLogEntry> epoch_log;
  TrainConfig config;
};

// Argmax with ties broken toward the earlier epoch. Factored out so the
// selection rule itself is testable against scripted metric sequences.
inline std::size_t best_epoch_index(const std::vector<double>& metrics) {
  if (metrics.empty()) fail("best_epoch_index: empty metric sequence");
  std::size_t best = 0;
  for (std::size_t i = 1; i < metrics.size(); ++i)
    if (metrics[i] > metrics[best]) best = i;
  return best;
}

inline std::vector<std::pair<std::string, Label>> gold_pairs(const Dataset& ds) {
  std::vector<std::pair<std::string, Label>> out;
  out.reserve(ds.size());
  for (const Example& ex : ds.examples) {
    if (!ex.label) fail("dataset '", ds.split_name, "': id '", ex.id, "' has no label");
    out.emplace_back(ex.id, *ex.label);
  }
  return out;
}

// Runs config.epochs epochs over windowed raw inputs, scores the validation
// set after each epoch, and returns the checkpoint with the best selection
// metric (earlier epoch wins ties). Example order is reshuffled every epoch
// from config.seed.
inline Checkpoint train(Backend& backend, const Dataset& train_set,
                        const Dataset& validation_set, const TrainConfig& config) {
  config.validate();
  if (train_set.examples.empty()) fail("train: training set is empty");
  if (validation_set.examples.empty()) fail("train: validation set is empty");
  const auto validation_golds = gold_pairs(validation_set);

  // Tokenize and window once; shuffling below permutes prepared pairs.
  std::vector<Seq2SeqPair> pairs;
  pairs.reserve(train_set.size());
  for (const Example& ex : train_set.examples) {
    if (!ex.label)
      fail("train: id '", ex.id, "' in '", train_set.split_name, "' has no label");
    Seq2SeqPair pair;
    pair.source_tokens = window_tokens(backend.tokenize(ex.text), config.window);
    pair.target_text = verbalize_label(*ex.label, train_set.label_space);
    pairs.push_back(std::move(pair));
  }

  Checkpoint best;
  best.backend_name = backend.name();
  best.config = config;
  double best_metric = -std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    auto order = shuffled_indices(pairs.size(),
                                  config.seed ^ (0x9e37ull * static_cast<std::uint64_t>(epoch)));
    std::vector<std::vector<Seq2SeqPair>> batches;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(config.batch_size)) {
      std::vector<Seq2SeqPair> batch;
      for (std::size_t j = i;
           j < order.size() && j < i + static_cast<std::size_t>(config.batch_size); ++j)
        batch.push_back(pairs[order[j]]);
      batches.push_back(std::move(batch));
    }

    const double loss = backend.train_epoch(batches);
    const auto preds = predict(backend, validation_set, config);
    const MetricsReport report =
        evaluate(validation_golds, preds, validation_set.label_space);
    const double metric = report.selection_value(config.selection);
    best.epoch_log.push_back({epoch, loss, metric});

    if (metric > best_metric) {
      best_metric = metric;
      best.epoch = epoch;
      best.backend_state = backend.save_state();
      best.validation_report = report;
    }
  }
  return best;
}

// Restores a checkpoint's state into the backend and rescores the validation
// set; with a sane backend this reproduces checkpoint.validation_report.
inline MetricsReport reevaluate_checkpoint(Backend& backend, const Checkpoint& cp,
                                           const Dataset& validation_set) {
  backend.load_state(cp.backend_state);
  const auto preds = predict(backend, validation_set, cp.config);
  return evaluate(gold_pairs(validation_set), preds, validation_set.label_space);
}

// ---------------------------------------------------------------------------
// Checkpoint directory layout: state.bin + manifest.txt (line-oriented
// key-value: config, seed, per-epoch metric log, recorded validation scores).
// ---------------------------------------------------------------------------

inline void save_checkpoint(const Checkpoint& cp, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream state(dir / "state.bin", std::ios::binary);
    if (!state) fail("cannot write ", (dir / "state.bin").string());
    state.write(cp.backend_state.data(),
                static_cast<std::streamsize>(cp.backend_state.size()));
  }
  std::ostringstream os;
  os.precision(17);
  os << "backend = " << cp.backend_name << "\n";
  os << "epoch = " << cp.epoch << "\n";
  os << "config.epochs = " << cp.config.epochs << "\n";
  os << "config.batch_size = " << cp.config.batch_size << "\n";
  os << "config.max_source_length = " << cp.config.max_source_length << "\n";
  os << "config.window.head = " << cp.config.window.head_len << "\n";
  os << "config.window.tail = " << cp.config.window.tail_len << "\n";
  os << "config.selection = " << to_string(cp.config.selection) << "\n";
  os << "config.seed = " << cp.config.seed << "\n";
  for (const auto& e : cp.epoch_log) {
    os << "epoch." << e.epoch << ".loss = " << e.train_loss << "\n";
    os << "epoch." << e.epoch << ".metric = " << e.validation_metric << "\n";
  }
  os << "validation.macro_f1 = " << cp.validation_report.macro_f1 << "\n";
  os << "validation.micro_f1 = " << cp.validation_report.micro_f1 << "\n";
  os << "validation.accuracy = " << cp.validation_report.accuracy << "\n";
  std::ofstream manifest(dir / "manifest.txt", std::ios::binary);
  if (!manifest) fail("cannot write ", (dir / "manifest.txt").string());
  manifest << os.str();
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  Checkpoint cp;
  {
    std::ifstream state(dir / "state.bin", std::ios::binary);
    if (!state) fail("cannot read ", (dir / "state.bin").string());
    std::ostringstream buf;
    buf << state.rdbuf();
    cp.backend_state = buf.str();
  }
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) fail("cannot read ", (dir / "manifest.txt").string());
  std::string line;
  std::map<int, EpochLogEntry> log;
  while (std::getline(manifest, line)) {
    auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (key == "backend") cp.backend_name = value;
    else if (key == "epoch") cp.epoch = std::stoi(value);
    else if (key == "config.epochs") cp.config.epochs = std::stoi(value);
    else if (key == "config.batch_size") cp.config.batch_size = std::stoi(value);
    else if (key == "config.max_source_length") cp.config.max_source_length = std::stoul(value);
    else if (key == "config.window.head") cp.config.window.head_len = std::stoul(value);
    else if (key == "config.window.tail") cp.config.window.tail_len = std::stoul(value);
    else if (key == "config.selection")
      cp.config.selection =
          value == "f1_micro" ? SelectionMetric::F1Micro : SelectionMetric::F1Macro;
    else if (key == "config.seed") cp.config.seed = std::stoull(value);
    else if (key == "validation.macro_f1") cp.validation_report.macro_f1 = std::stod(value);
    else if (key == "validation.micro_f1") cp.validation_report.micro_f1 = std::stod(value);
    else if (key == "validation.accuracy") cp.validation_report.accuracy = std::stod(value);
    else if (key.rfind("epoch.", 0) == 0) {
      auto rest = key.substr(6);
      auto dot = rest.find('.');
      if (dot == std::string::npos) continue;
      int epoch = std::stoi(rest.substr(0, dot));
      auto& entry = log[epoch];
      entry.epoch = epoch;
      if (rest.substr(dot + 1) == "loss") entry.train_loss = std::stod(value);
      else if (rest.substr(dot + 1) == "metric") entry.validation_metric = std::stod(value);
    }
  }
  cp.config.window.max_len = cp.config.window.head_len + cp.config.window.tail_len;
  for (auto& [_, entry] : log) cp.epoch_log.push_back(entry);
  return cp;
}

}  // namespace textclf
