#pragma once

#include <cstddef>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "textclf/common.hpp"
#include "textclf/corpus.hpp"

namespace textclf {

enum class SelectionMetric { F1Macro, F1Micro };

inline std::string to_string(SelectionMetric m) {
  return m == SelectionMetric::F1Macro ? "f1_macro" : "f1_micro";
}

struct ConfusionCounts {
  // Keyed by declared label. Out-of-space predictions count as a false
  // negative of the gold class and as a false positive of nothing.
  std::map<Label, std::size_t> tp, fp, fn;
  std::size_t total = 0;
  std::size_t correct = 0;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  std::map<Label, ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double micro_precision = 0.0;
  double micro_recall = 0.0;
  double micro_f1 = 0.0;
  double accuracy = 0.0;
  ConfusionCounts counts;

  double selection_value(SelectionMetric m) const {
    return m == SelectionMetric::F1Macro ? macro_f1 : micro_f1;
  }
};

namespace detail {

// 0/0 resolves to 0; this changes macro averages and must stay consistent
// between the implementation and every oracle.
inline double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

inline double f1_from(double p, double r) { return safe_div(2.0 * p * r, p + r); }

}  // namespace detail

// Scores predictions against golds paired by id. Preconditions: the two id
// sets are identical and duplicate-free, and every gold label lies in the
// declared space. Predictions may carry the out-of-space fallback label.
inline MetricsReport evaluate(const std::vector<std::pair<std::string, Label>>& golds,
                              const std::vector<std::pair<std::string, Label>>& preds,
                              const LabelSpace& space) {
  if (golds.empty()) fail("evaluate: empty input");
  if (golds.size() != preds.size())
    fail("evaluate: ", golds.size(), " golds vs ", preds.size(), " predictions");

  std::unordered_map<std::string, Label> pred_by_id;
  pred_by_id.reserve(preds.size());
  for (const auto& [id, label] : preds)
    if (!pred_by_id.emplace(id, label).second)
      fail("evaluate: duplicate prediction id '", id, "'");

  ConfusionCounts counts;
  for (const Label& c : space.declared()) {
    counts.tp[c] = 0;
    counts.fp[c] = 0;
    counts.fn[c] = 0;
  }

  std::unordered_set<std::string> seen_gold_ids;
  for (const auto& [id, gold] : golds) {
    if (!seen_gold_ids.insert(id).second) fail("evaluate: duplicate gold id '", id, "'");
    if (!space.contains(gold))
      fail("evaluate: gold label '", gold.value, "' for id '", id,
           "' is outside the declared space");
    auto it = pred_by_id.find(id);
    if (it == pred_by_id.end()) fail("evaluate: no prediction for id '", id, "'");
    const Label& pred = it->second;

    ++counts.total;
    if (pred == gold) {
      ++counts.correct;
      ++counts.tp[gold];
    } else {
      ++counts.fn[gold];
      if (space.contains(pred)) ++counts.fp[pred];
    }
  }

  MetricsReport report;
  report.counts = counts;

  double sum_tp = 0.0, sum_fp = 0.0, sum_fn = 0.0;
  double macro_p = 0.0, macro_r = 0.0, macro_f1 = 0.0;
  for (const Label& c : space.declared()) {
    const double tp = static_cast<double>(counts.tp.at(c));
    const double fp = static_cast<double>(counts.fp.at(c));
    const double fn = static_cast<double>(counts.fn.at(c));
    ClassMetrics cm;
    cm.precision = detail::safe_div(tp, tp + fp);
    cm.recall = detail::safe_div(tp, tp + fn);
    cm.f1 = detail::f1_from(cm.precision, cm.recall);
    report.per_class[c] = cm;
    macro_p += cm.precision;
    macro_r += cm.recall;
    macro_f1 += cm.f1;
    sum_tp += tp;
    sum_fp += fp;
    sum_fn += fn;
  }
  const double n_classes = static_cast<double>(space.declared().size());
  report.macro_precision = macro_p / n_classes;
  report.macro_recall = macro_r / n_classes;
  report.macro_f1 = macro_f1 / n_classes;

  report.micro_precision = detail::safe_div(sum_tp, sum_tp + sum_fp);
  report.micro_recall = detail::safe_div(sum_tp, sum_tp + sum_fn);
  report.micro_f1 = detail::f1_from(report.micro_precision, report.micro_recall);
  report.accuracy = detail::safe_div(static_cast<double>(counts.correct),
                                     static_cast<double>(counts.total));
  return report;
}

// Flat key-value rendering, one metric per line.
inline std::string format_report(const MetricsReport& r) {
  std::ostringstream os;
  os << std::setprecision(12);
  for (const auto& [label, cm] : r.per_class) {
    os << "class." << label.value << ".precision = " << cm.precision << "\n";
    os << "class." << label.value << ".recall = " << cm.recall << "\n";
    os << "class." << label.value << ".f1 = " << cm.f1 << "\n";
  }
  os << "macro.precision = " << r.macro_precision << "\n";
  os << "macro.recall = " << r.macro_recall << "\n";
  os << "macro.f1 = " << r.macro_f1 << "\n";
  os << "micro.precision = " << r.micro_precision << "\n";
  os << "micro.recall = " << r.micro_recall << "\n";
  os << "micro.f1 = " << r.micro_f1 << "\n";
  os << "accuracy = " << r.accuracy << "\n";
  return os.str();
}

// One comparison-table row: macro aggregates plus accuracy.
inline std::string report_csv_row(const std::string& name, const MetricsReport& r) {
  std::ostringstream os;
  os << name << ',' << std::fixed << std::setprecision(3) << r.macro_f1 << ','
     << r.macro_precision << ',' << r.macro_recall << ',' << r.accuracy;
  return os.str();
}

}  // namespace textclf
