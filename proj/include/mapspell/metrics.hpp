#pragma once

// Binary classification metrics. Label 1 = misspelt, 0 = clean.

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mapspell/error.hpp"

namespace mapspell {

/// Harmonic mean of precision and recall; 0 when both are 0.
inline double f1(double precision, double recall) {
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

struct Confusion {
  std::int64_t tp = 0;  // predicted 1, label 1
  std::int64_t fp = 0;  // predicted 1, label 0
  std::int64_t fn = 0;  // predicted 0, label 1
  std::int64_t tn = 0;  // predicted 0, label 0
  std::int64_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::int64_t support = 0;
  bool defined = true;  // false when the class never occurs in the labels
};

struct MetricsReport {
  ClassMetrics misspelt;             // label 1
  ClassMetrics clean;                // label 0
  std::optional<ClassMetrics> macro;  // omitted unless both classes occur
  Confusion confusion;
};

inline Confusion confusion_of(const std::vector<int>& predicted, const std::vector<int>& labels) {
  if (predicted.size() != labels.size()) throw ContractError("confusion: prediction and label counts differ");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predicted[i] == 1, l = labels[i] == 1;
    if (p && l) ++c.tp;
    else if (p) ++c.fp;
    else if (l) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline MetricsReport report_from(const Confusion& c) {
  if (c.total() == 0) throw ContractError("metrics: empty dataset");
  auto ratio = [](std::int64_t num, std::int64_t den) { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); };
  MetricsReport r;
  r.confusion = c;
  r.misspelt.precision = ratio(c.tp, c.tp + c.fp);
  r.misspelt.recall = ratio(c.tp, c.tp + c.fn);
  r.misspelt.support = c.tp + c.fn;
  r.misspelt.defined = r.misspelt.support > 0;
  r.clean.precision = ratio(c.tn, c.tn + c.fn);
  r.clean.recall = ratio(c.tn, c.tn + c.fp);
  r.clean.support = c.tn + c.fp;
  r.clean.defined = r.clean.support > 0;
  for (ClassMetrics* m : {&r.misspelt, &r.clean}) m->f1 = f1(m->precision, m->recall);
  if (r.misspelt.defined && r.clean.defined) {
    ClassMetrics m;
    m.precision = 0.5 * (r.misspelt.precision + r.clean.precision);
    m.recall = 0.5 * (r.misspelt.recall + r.clean.recall);
    m.f1 = 0.5 * (r.misspelt.f1 + r.clean.f1);
    m.support = c.total();
    r.macro = m;
  }
  return r;
}

inline MetricsReport evaluate_predictions(const std::vector<int>& predicted, const std::vector<int>& labels) {
  return report_from(confusion_of(predicted, labels));
}

/// Macro F1, or class-1 F1 when the macro average is undefined.
inline double headline_f1(const MetricsReport& r) { return r.macro ? r.macro->f1 : r.misspelt.f1; }

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  auto row = [](const ClassMetrics& m) {
    nlohmann::ordered_json j{{"Precision", m.precision}, {"Recall", m.recall}, {"F1", m.f1}, {"Support", m.support}};
    if (!m.defined) j["Undefined"] = true;
    return j;
  };
  nlohmann::ordered_json j;
  j["1"] = row(r.misspelt);
  j["0"] = row(r.clean);
  if (r.macro) j["Macro Avg"] = row(*r.macro);
  j["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}, {"tn", r.confusion.tn}};
  return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  const auto& c = j.at("confusion");
  return report_from({c.at("tp").get<std::int64_t>(), c.at("fp").get<std::int64_t>(), c.at("fn").get<std::int64_t>(),
                      c.at("tn").get<std::int64_t>()});
}

}  // namespace mapspell
