// SPDX-License-Identifier: Apache-2.0
#include "wsed/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "wsed/error.hpp"
#include "wsed/text.hpp"

namespace wsed {

void EvalBatch::validate() const {
  const std::size_t n = num_clips * num_categories;
  if (scores.size() != n || labels.size() != n) {
    throw ShapeError("EvalBatch: scores/labels do not match " + std::to_string(num_clips) + "x" +
                     std::to_string(num_categories));
  }
  if (!categories.empty() && categories.size() != num_categories) {
    throw ShapeError("EvalBatch: category table has wrong length");
  }
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw NumericError("EvalBatch: score outside [0, 1] or non-finite");
  }
  for (auto l : labels) {
    if (l > 1) throw DataError("EvalBatch: label outside {0, 1}");
  }
}

Counts category_counts(const EvalBatch& batch, std::size_t category, double threshold) {
  Counts c;
  for (std::size_t i = 0; i < batch.num_clips; ++i) {
    const bool pred = batch.score(i, category) >= threshold;
    const bool truth = batch.label(i, category);
    if (pred && truth) ++c.tp;
    if (pred && !truth) ++c.fp;
    if (!pred && truth) ++c.fn;
  }
  return c;
}

Counts pooled_counts(const EvalBatch& batch, double threshold) {
  Counts total;
  for (std::size_t k = 0; k < batch.num_categories; ++k) {
    const Counts c = category_counts(batch, k, threshold);
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
  }
  return total;
}

namespace {
Metric precision_of(const Counts& c) {
  if (c.tp + c.fp == 0) return std::nullopt;
  return static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
}
}  // namespace

Metric micro_precision(const EvalBatch& batch, double threshold) {
  batch.validate();
  return precision_of(pooled_counts(batch, threshold));
}

MacroPrecision macro_precision(const EvalBatch& batch, double threshold) {
  batch.validate();
  MacroPrecision out;
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < batch.num_categories; ++k) {
    const Metric p = precision_of(category_counts(batch, k, threshold));
    out.per_category.push_back(p);
    if (p) {
      sum += *p;
      ++used;
    } else {
      ++out.excluded;
    }
  }
  if (used > 0) out.value = sum / static_cast<double>(used);
  return out;
}

Metric roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ShapeError("roc_auc: scores/labels length mismatch");
  const std::size_t n = scores.size();
  std::size_t pos = 0;
  for (auto l : labels) pos += l ? 1 : 0;
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) return std::nullopt;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of 1-based mid-ranks of the positives.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]]) rank_sum += mid;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  const double q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

AucResult macro_auc(const EvalBatch& batch) {
  batch.validate();
  AucResult out;
  std::vector<double> s(batch.num_clips);
  std::vector<std::uint8_t> l(batch.num_clips);
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < batch.num_categories; ++k) {
    for (std::size_t i = 0; i < batch.num_clips; ++i) {
      s[i] = batch.score(i, k);
      l[i] = batch.label(i, k) ? 1 : 0;
    }
    const Metric a = roc_auc(s, l);
    out.per_category.push_back(a);
    if (a) {
      sum += *a;
      ++used;
    } else {
      ++out.excluded;
    }
  }
  if (used > 0) out.value = sum / static_cast<double>(used);
  return out;
}

std::vector<CategoryPrecision> per_category_report(const EvalBatch& batch, double threshold) {
  const MacroPrecision macro = macro_precision(batch, threshold);
  std::vector<CategoryPrecision> rows;
  for (std::size_t k = 0; k < batch.num_categories; ++k) {
    const std::string name = batch.categories.empty() ? std::to_string(k) : batch.categories[k];
    rows.push_back({k, name, macro.per_category[k]});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const CategoryPrecision& a, const CategoryPrecision& b) {
    if (a.precision.has_value() != b.precision.has_value()) return a.precision.has_value();
    if (!a.precision) return false;
    return *a.precision > *b.precision;
  });
  return rows;
}

MetricReport evaluate(const EvalBatch& batch, double threshold) {
  batch.validate();
  MetricReport r;
  r.clips = batch.num_clips;
  r.threshold = threshold;
  r.micro_p = micro_precision(batch, threshold);
  const MacroPrecision macro = macro_precision(batch, threshold);
  r.macro_p = macro.value;
  r.macro_excluded = macro.excluded;
  const AucResult auc = macro_auc(batch);
  r.auc = auc.value;
  r.auc_excluded = auc.excluded;
  r.per_category = per_category_report(batch, threshold);
  return r;
}

std::string format_metric(const Metric& m) { return m ? format_number(*m) : "undefined"; }

std::string per_category_csv(const MetricReport& report) {
  std::ostringstream os;
  os << "category,precision\n";
  for (const auto& row : report.per_category) os << row.name << ',' << format_metric(row.precision) << '\n';
  return os.str();
}

std::string format_report_table(const MetricReport& report, const std::string& title) {
  auto cell = [](const Metric& m) {
    if (!m) return std::string("undefined");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *m);
    return std::string(buf);
  };
  std::ostringstream os;
  os << title << " (" << report.clips << " clips, threshold " << format_number(report.threshold) << ")\n";
  os << "  micro-p  " << cell(report.micro_p) << '\n';
  os << "  macro-p  " << cell(report.macro_p);
  if (report.macro_excluded) os << "  (" << report.macro_excluded << (report.macro_excluded == 1 ? " category" : " categories")
                                 << " without positive predictions)";
  os << '\n';
  os << "  AUC      " << cell(report.auc);
  if (report.auc_excluded) os << "  (" << report.auc_excluded << (report.auc_excluded == 1 ? " category" : " categories")
                               << " lacking both classes)";
  os << '\n';
  for (const auto& row : report.per_category) {
    os << "    " << row.name << std::string(row.name.size() < 28 ? 28 - row.name.size() : 1, ' ')
       << cell(row.precision) << '\n';
  }
  return os.str();
}

}  // namespace wsed
