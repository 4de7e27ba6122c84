#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "textclf/augment.hpp"
#include "textclf/classifier.hpp"
#include "textclf/common.hpp"
#include "textclf/corpus.hpp"
#include "textclf/metrics.hpp"
#include "textclf/mock_backend.hpp"
#include "textclf/paraphrase.hpp"
#include "textclf/seq2seq.hpp"
#include "textclf/task.hpp"

namespace textclf {

// Externally published comparison rows (organizer mean/median); these are
// config inputs, never computed here.
struct BaselineRow {
  std::string name;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::optional<double> accuracy;
};

struct ExperimentConfig {
  TaskId task = TaskId::Task3;
  std::string train_csv;
  std::string validation_csv;
  std::string test_csv;
  std::string backend = "mock";  // mock | tiny
  std::vector<AugmentStep> plan;
  std::string out_dir = "run";
  std::uint64_t seed = 13;

  // Training overrides; unset fields fall back to the task defaults.
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<std::size_t> max_source_length;
  std::optional<std::size_t> window_head;

  std::string paraphrase_provider = "stub";  // stub | http
  std::string paraphrase_cache;
  ClientPolicy client_policy;
  Bm25Params bm25;
  bool submission_header = true;
  std::vector<BaselineRow> baselines;

  TrainConfig train_config(const TaskSpec& spec) const {
    TrainConfig tc;
    tc.epochs = epochs.value_or(spec.epochs);
    tc.batch_size = batch_size.value_or(spec.batch_size);
    tc.max_source_length = max_source_length.value_or(spec.max_source_length);
    if (max_source_length && !window_head) {
      tc.window = TokenWindowPolicy::proportional(tc.max_source_length);
    } else if (window_head) {
      tc.window = TokenWindowPolicy{tc.max_source_length, *window_head,
                                    tc.max_source_length - *window_head};
    } else {
      tc.window = spec.window;
    }
    tc.selection = spec.selection;
    tc.seed = seed;
    tc.validate();
    return tc;
  }
};

// ---------------------------------------------------------------------------
// Config file: flat key-value lines, '#' comments, repeatable `baseline`.
// ---------------------------------------------------------------------------

inline ExperimentConfig parse_experiment_config(std::istream& in,
                                                const std::string& origin) {
  ExperimentConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  bool saw_task = false;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(origin, ":", lineno, ": expected key = value, got '", line, "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      if (key == "task") { cfg.task = parse_task(value); saw_task = true; }
      else if (key == "train_csv") cfg.train_csv = value;
      else if (key == "validation_csv") cfg.validation_csv = value;
      else if (key == "test_csv") cfg.test_csv = value;
      else if (key == "backend") cfg.backend = value;
      else if (key == "out_dir") cfg.out_dir = value;
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "epochs") cfg.epochs = std::stoi(value);
      else if (key == "batch_size") cfg.batch_size = std::stoi(value);
      else if (key == "max_source_length") cfg.max_source_length = std::stoul(value);
      else if (key == "window_head") cfg.window_head = std::stoul(value);
      else if (key == "paraphrase_provider") cfg.paraphrase_provider = value;
      else if (key == "paraphrase_cache") cfg.paraphrase_cache = value;
      else if (key == "max_concurrent_requests")
        cfg.client_policy.max_concurrent_requests = std::stoi(value);
      else if (key == "max_retries") cfg.client_policy.max_retries = std::stoi(value);
      else if (key == "backoff_base_seconds")
        cfg.client_policy.backoff_base_seconds = std::stod(value);
      else if (key == "requests_per_minute_cap")
        cfg.client_policy.requests_per_minute_cap = std::stoi(value);
      else if (key == "bm25_k1") cfg.bm25.k1 = std::stod(value);
      else if (key == "bm25_b") cfg.bm25.b = std::stod(value);
      else if (key == "submission_header")
        cfg.submission_header = (value == "true" || value == "1" || value == "yes");
      else if (key == "plan") {
        cfg.plan.clear();
        std::istringstream parts(value);
        std::string part;
        while (std::getline(parts, part, ',')) {
          part = trim(part);
          if (part.empty() || part == "base" || part == "training") continue;
          cfg.plan.push_back(parse_augment_step(part));
        }
      } else if (key == "baseline") {
        std::istringstream parts(value);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(parts, field, ',')) fields.push_back(trim(field));
        if (fields.size() < 4)
          fail("baseline needs name,f1,precision,recall[,accuracy]");
        BaselineRow row;
        row.name = fields[0];
        row.f1 = std::stod(fields[1]);
        row.precision = std::stod(fields[2]);
        row.recall = std::stod(fields[3]);
        if (fields.size() > 4) row.accuracy = std::stod(fields[4]);
        cfg.baselines.push_back(std::move(row));
      } else {
        fail("unknown config key '", key, "'");
      }
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      fail(origin, ":", lineno, ": bad value for '", key, "': ", e.what());
    }
  }
  if (!saw_task) fail(origin, ": config must set 'task'");
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file: ", path.string());
  return parse_experiment_config(in, path.string());
}

// ---------------------------------------------------------------------------
// Backends and providers by name
// ---------------------------------------------------------------------------

std::unique_ptr<Backend> make_backend(const std::string& name, std::uint64_t seed,
                                      std::size_t max_source_length);

inline std::unique_ptr<ParaphraseProvider> make_provider(const std::string& name) {
  if (name == "stub") return std::make_unique<StubParaphraseProvider>();
  if (name == "http") {
    // declared in http_provider.hpp; kept out of line to avoid forcing the
    // HTTP stack on pure-offline builds
    extern std::unique_ptr<ParaphraseProvider> make_http_provider_from_env();
    return make_http_provider_from_env();
  }
  fail("unknown paraphrase provider '", name, "', expected stub or http");
}

// ---------------------------------------------------------------------------
// Submission files
// ---------------------------------------------------------------------------

// TSV, header `id<TAB>label`, one row per test example in test order.
inline void write_submission(const std::vector<std::pair<std::string, Label>>& predictions,
                             const Dataset& test_set, const std::filesystem::path& path,
                             bool with_header = true) {
  std::unordered_map<std::string, const Label*> by_id;
  for (const auto& [id, label] : predictions)
    if (!by_id.emplace(id, &label).second)
      fail("write_submission: duplicate prediction id '", id, "'");
  if (by_id.size() != test_set.size())
    fail("write_submission: ", by_id.size(), " predictions for ", test_set.size(),
         " test rows");

  std::ostringstream body;
  if (with_header) body << "id\tlabel\n";
  for (const Example& ex : test_set.examples) {
    auto it = by_id.find(ex.id);
    if (it == by_id.end()) fail("write_submission: no prediction for id '", ex.id, "'");
    body << ex.id << '\t' << it->second->value << '\n';
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write submission file: ", path.string());
  out << body.str();
}

// ---------------------------------------------------------------------------
// Run manifest: ordered key-value lines; reruns with the same config and
// seed reproduce it byte for byte except the timing.* lines.
// ---------------------------------------------------------------------------

struct RunManifest {
  std::vector<std::pair<std::string, std::string>> lines;

  void add(const std::string& key, const std::string& value) {
    lines.emplace_back(key, value);
  }
  template <typename T>
  void add_num(const std::string& key, T value) {
    std::ostringstream os;
    os.precision(17);
    os << value;
    lines.emplace_back(key, os.str());
  }

  std::optional<std::string> get(const std::string& key) const {
    for (const auto& [k, v] : lines)
      if (k == key) return v;
    return std::nullopt;
  }

  std::string text() const {
    std::string out;
    for (const auto& [k, v] : lines) out += k + " = " + v + "\n";
    return out;
  }

  // The deterministic portion, for rerun comparisons.
  std::string text_without_timings() const {
    std::string out;
    for (const auto& [k, v] : lines)
      if (k.rfind("timing.", 0) != 0) out += k + " = " + v + "\n";
    return out;
  }
};

inline RunManifest parse_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open manifest: ", path.string());
  RunManifest m;
  std::string line;
  while (std::getline(in, line)) {
    auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    m.add(line.substr(0, eq), line.substr(eq + 3));
  }
  return m;
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) fail("cannot write ", tmp.string());
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// The full pipeline
// ---------------------------------------------------------------------------

struct RunResult {
  TaskSpec spec;
  ExperimentConfig config;
  ComposedDataset composed;
  Checkpoint checkpoint;
  std::vector<std::pair<std::string, Label>> test_predictions;
  std::optional<MetricsReport> test_report;
  RunManifest manifest;
  std::filesystem::path manifest_path;
  std::filesystem::path submission_path;
};

namespace detail {

template <typename F>
auto run_stage(const char* stage, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    fail("stage ", stage, ": ", e.what());
  }
}

inline void add_report_lines(RunManifest& m, const std::string& prefix,
                             const MetricsReport& r) {
  m.add_num(prefix + ".macro_f1", r.macro_f1);
  m.add_num(prefix + ".macro_precision", r.macro_precision);
  m.add_num(prefix + ".macro_recall", r.macro_recall);
  m.add_num(prefix + ".micro_f1", r.micro_f1);
  m.add_num(prefix + ".micro_precision", r.micro_precision);
  m.add_num(prefix + ".micro_recall", r.micro_recall);
  m.add_num(prefix + ".accuracy", r.accuracy);
  for (const auto& [label, cm] : r.per_class) {
    m.add_num(prefix + ".class." + label.value + ".precision", cm.precision);
    m.add_num(prefix + ".class." + label.value + ".recall", cm.recall);
    m.add_num(prefix + ".class." + label.value + ".f1", cm.f1);
  }
}

}  // namespace detail

inline RunResult run_experiment(const ExperimentConfig& config,
                                const Clock& clock = Clock::real()) {
  const auto t_start = std::chrono::steady_clock::now();
  RunResult result;
  result.config = config;
  result.spec = task_spec(config.task);
  const TaskSpec& spec = result.spec;
  const TrainConfig tc = config.train_config(spec);

  Dataset train_set, validation_set, test_set;
  detail::run_stage("ingest", [&] {
    train_set = load_csv(config.train_csv, spec.schema, spec.label_space, "train");
    validation_set =
        load_csv(config.validation_csv, spec.schema, spec.label_space, "validation");
    test_set = load_csv(config.test_csv, spec.schema, spec.label_space, "test");
    return 0;
  });

  std::filesystem::create_directories(config.out_dir);
  const std::filesystem::path out_dir(config.out_dir);

  // Materialize the augmentation plan.
  ParaphraseCache cache = config.paraphrase_cache.empty()
                              ? ParaphraseCache()
                              : ParaphraseCache(config.paraphrase_cache);
  std::unique_ptr<ParaphraseProvider> provider;
  auto need_provider = [&]() -> ParaphraseProvider& {
    if (!provider) provider = make_provider(config.paraphrase_provider);
    return *provider;
  };

  std::vector<AugmentComponent> components;
  detail::run_stage("augment", [&] {
    for (AugmentStep step : config.plan) {
      AugmentComponent comp;
      comp.step = step;
      switch (step) {
        case AugmentStep::AddValidation:
          comp.examples = validation_set.examples;
          break;
        case AugmentStep::AddFalseInferred: {
          // Train on the raw training set first, then collect the
          // validation examples that model got wrong.
          auto base_backend = make_backend(config.backend, config.seed,
                                           tc.max_source_length);
          Checkpoint base_cp = train(*base_backend, train_set, validation_set, tc);
          base_backend->load_state(base_cp.backend_state);
          comp.examples =
              false_inferred(predict(*base_backend, validation_set, tc), validation_set);
          break;
        }
        case AugmentStep::AddParaphrasedValidation: {
          auto para = paraphrase_examples(validation_set.examples, need_provider(),
                                          cache, config.client_policy, clock);
          comp.examples = std::move(para.examples);
          comp.omitted_source_ids = std::move(para.omitted_ids);
          break;
        }
        case AugmentStep::AddParaphrasedBm25Selected: {
          auto selected = bm25_select(train_set, validation_set, config.bm25);
          auto para = paraphrase_examples(selected, need_provider(), cache,
                                          config.client_policy, clock);
          comp.examples = std::move(para.examples);
          comp.omitted_source_ids = std::move(para.omitted_ids);
          break;
        }
      }
      components.push_back(std::move(comp));
    }
    result.composed = compose(train_set, components);
    write_csv(out_dir / "composed.csv", result.composed.dataset, spec.schema);
    write_provenance(out_dir / "provenance.tsv", result.composed);
    return 0;
  });

  detail::run_stage("train", [&] {
    auto backend = make_backend(config.backend, config.seed, tc.max_source_length);
    result.checkpoint = train(*backend, result.composed.dataset, validation_set, tc);
    save_checkpoint(result.checkpoint, out_dir / "checkpoint");

    backend->load_state(result.checkpoint.backend_state);
    result.test_predictions =
        detail::run_stage("predict", [&] { return predict(*backend, test_set, tc); });
    return 0;
  });

  detail::run_stage("evaluate", [&] {
    bool all_labeled = !test_set.examples.empty();
    for (const Example& ex : test_set.examples) all_labeled &= ex.label.has_value();
    if (all_labeled)
      result.test_report =
          evaluate(gold_pairs(test_set), result.test_predictions, spec.label_space);
    return 0;
  });

  detail::run_stage("write", [&] {
    result.submission_path = out_dir / "submission.tsv";
    write_submission(result.test_predictions, test_set, result.submission_path,
                     config.submission_header);

    RunManifest& m = result.manifest;
    m.add("manifest", "v1");
    m.add("task", spec.name);
    {
      std::string plan_names;
      for (std::size_t i = 0; i < config.plan.size(); ++i) {
        if (i) plan_names += ",";
        plan_names += to_string(config.plan[i]);
      }
      m.add("plan", plan_names);
      m.add("plan_label", plan_label(config.plan));
    }
    m.add("backend", config.backend);
    m.add_num("seed", config.seed);
    m.add_num("config.epochs", tc.epochs);
    m.add_num("config.batch_size", tc.batch_size);
    m.add_num("config.max_source_length", tc.max_source_length);
    m.add_num("config.window.head", tc.window.head_len);
    m.add_num("config.window.tail", tc.window.tail_len);
    m.add("config.selection", to_string(tc.selection));
    m.add("config.paraphrase_provider", config.paraphrase_provider);
    m.add_num("config.bm25.k1", config.bm25.k1);
    m.add_num("config.bm25.b", config.bm25.b);
    m.add("data.train", config.train_csv);
    m.add("data.validation", config.validation_csv);
    m.add("data.test", config.test_csv);
    m.add_num("data.train_rows", train_set.size());
    m.add_num("data.validation_rows", validation_set.size());
    m.add_num("data.test_rows", test_set.size());
    for (const auto& [origin, count] : result.composed.origin_counts())
      m.add_num("provenance." + origin, count);
    m.add_num("compose.total", result.composed.dataset.size());
    for (const auto& e : result.checkpoint.epoch_log) {
      m.add_num("epoch." + std::to_string(e.epoch) + ".loss", e.train_loss);
      m.add_num("epoch." + std::to_string(e.epoch) + ".metric", e.validation_metric);
    }
    m.add_num("best.epoch", result.checkpoint.epoch);
    m.add_num("best.metric",
              result.checkpoint.validation_report.selection_value(tc.selection));
    m.add("test.scored", result.test_report ? "true" : "false");
    if (result.test_report) detail::add_report_lines(m, "test", *result.test_report);
    m.add("submission", result.submission_path.string());
    const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - t_start);
    m.add_num("timing.total_ms", elapsed.count());

    result.manifest_path = out_dir / "manifest.txt";
    write_file_atomic(result.manifest_path, m.text());
    return 0;
  });

  return result;
}

// ---------------------------------------------------------------------------
// Comparison table
// ---------------------------------------------------------------------------

struct ReportRow {
  std::string submission;  // "1", "2", ... or "-" for baselines
  std::string data_label;
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::optional<double> accuracy;
};

// Pulls the table metrics out of a scored manifest. Multiclass runs report
// the macro aggregates plus accuracy; binary runs report the positive
// class ("1") and drop the accuracy column.
inline ReportRow report_row_from_manifest(const RunManifest& m) {
  auto need = [&](const std::string& key) -> std::string {
    auto v = m.get(key);
    if (!v) fail("manifest is missing '", key, "'");
    return *v;
  };
  if (need("test.scored") != "true")
    fail("run '", need("plan_label"), "' has no gold-scored test metrics");
  ReportRow row;
  row.data_label = need("plan_label");
  if (need("task") == "task5") {
    row.f1 = std::stod(need("test.class.1.f1"));
    row.precision = std::stod(need("test.class.1.precision"));
    row.recall = std::stod(need("test.class.1.recall"));
  } else {
    row.f1 = std::stod(need("test.macro_f1"));
    row.precision = std::stod(need("test.macro_precision"));
    row.recall = std::stod(need("test.macro_recall"));
    row.accuracy = std::stod(need("test.accuracy"));
  }
  return row;
}

// One row per run in submission order, then the supplied baseline rows.
inline std::string report_table(const std::vector<RunManifest>& manifests,
                                const std::vector<BaselineRow>& baselines) {
  if (manifests.empty()) fail("report_table: no manifests");
  std::string task;
  std::vector<ReportRow> rows;
  for (const RunManifest& m : manifests) {
    auto t = m.get("task");
    if (!t) fail("manifest is missing 'task'");
    if (task.empty()) task = *t;
    else if (task != *t) fail("report_table: mixed tasks (", task, " vs ", *t, ")");
    ReportRow row = report_row_from_manifest(m);
    row.submission = std::to_string(rows.size() + 1);
    rows.push_back(std::move(row));
  }
  const bool with_accuracy = task != "task5";
  for (const BaselineRow& b : baselines) {
    ReportRow row;
    row.submission = "-";
    row.data_label = b.name;
    row.f1 = b.f1;
    row.precision = b.precision;
    row.recall = b.recall;
    if (with_accuracy) row.accuracy = b.accuracy.value_or(0.0);
    rows.push_back(std::move(row));
  }

  std::size_t label_width = 4;
  for (const auto& row : rows) label_width = std::max(label_width, row.data_label.size());

  std::ostringstream os;
  os << std::left << std::setw(12) << "#Submission" << std::setw(label_width + 2)
     << "Data" << std::setw(8) << "F1" << std::setw(11) << "Precision" << std::setw(8)
     << "Recall";
  if (with_accuracy) os << std::setw(10) << "Accuracy";
  os << "\n";
  os << std::string(12 + label_width + 2 + 8 + 11 + 8 + (with_accuracy ? 10 : 0), '-')
     << "\n";
  for (const auto& row : rows) {
    os << std::left << std::setw(12) << row.submission << std::setw(label_width + 2)
       << row.data_label << std::fixed << std::setprecision(3) << std::setw(8) << row.f1
       << std::setw(11) << row.precision << std::setw(8) << row.recall;
    if (with_accuracy)
      os << std::setw(10) << (row.accuracy ? *row.accuracy : 0.0);
    os << "\n";
  }
  return os.str();
}

}  // namespace textclf
