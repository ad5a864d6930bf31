// SPDX-License-Identifier: Apache-2.0
//
// Clip-level tagging metrics. A metric with an empty denominator is reported
// as undefined (std::nullopt), never silently replaced by 0 or 1.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace wsed {

using Metric = std::optional<double>;

inline constexpr double kDefaultThreshold = 0.5;

/// Scores and weak labels for N clips x C categories, row-major.
struct EvalBatch {
  std::size_t num_clips = 0;
  std::size_t num_categories = 0;
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> categories;

  double score(std::size_t clip, std::size_t cat) const { return scores[clip * num_categories + cat]; }
  bool label(std::size_t clip, std::size_t cat) const { return labels[clip * num_categories + cat] != 0; }

  /// Shapes agree, scores finite in [0, 1], labels in {0, 1}.
  void validate() const;
};

/// A cell is predicted positive when score >= threshold.
struct Counts {
  std::size_t tp = 0, fp = 0, fn = 0;
};

Counts pooled_counts(const EvalBatch& batch, double threshold);
Counts category_counts(const EvalBatch& batch, std::size_t category, double threshold);

/// TP / (TP + FP) over every (clip, category) cell.
Metric micro_precision(const EvalBatch& batch, double threshold = kDefaultThreshold);

struct MacroPrecision {
  Metric value;
  std::vector<Metric> per_category;
  /// Categories without positive predictions, left out of the average.
  std::size_t excluded = 0;
};

MacroPrecision macro_precision(const EvalBatch& batch, double threshold = kDefaultThreshold);

/// ROC AUC of one category by the rank-sum statistic with mid-ranks for
/// ties; undefined unless both classes are present.
Metric roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct AucResult {
  Metric value;  ///< macro average over includable categories
  std::vector<Metric> per_category;
  std::size_t excluded = 0;
};

AucResult macro_auc(const EvalBatch& batch);

struct CategoryPrecision {
  std::size_t id = 0;
  std::string name;
  Metric precision;
};

/// Per-category precision sorted descending; undefined entries last, ties by id.
std::vector<CategoryPrecision> per_category_report(const EvalBatch& batch,
                                                   double threshold = kDefaultThreshold);

struct MetricReport {
  std::size_t clips = 0;
  double threshold = kDefaultThreshold;
  Metric micro_p;
  Metric macro_p;
  Metric auc;
  std::size_t macro_excluded = 0;
  std::size_t auc_excluded = 0;
  std::vector<CategoryPrecision> per_category;
};

MetricReport evaluate(const EvalBatch& batch, double threshold = kDefaultThreshold);

/// Number, or "undefined".
std::string format_metric(const Metric& m);

/// `category,precision` rows in report order.
std::string per_category_csv(const MetricReport& report);

/// Fixed-width table for terminals.
std::string format_report_table(const MetricReport& report, const std::string& title);

}  // namespace wsed
