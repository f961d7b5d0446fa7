#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mmsev/head.hpp"
#include "mmsev/severity.hpp"

namespace mmsev {

struct MetricsReport {
  double accuracy = 0.0;
  double precision = 0.0;  // support-weighted
  double recall = 0.0;     // support-weighted
  double f1 = 0.0;         // support-weighted
  double auc = 0.0;        // macro one-vs-rest
  /// Population variance of per-seed accuracy in percent units (0 for one run).
  double variance = 0.0;
  std::array<double, kNumClasses> aupr{};
  std::array<double, kNumClasses> class_accuracy{};
};

/// Throws InputError on length mismatch or empty input.
MetricsReport evaluate(std::span<const ClassDistribution> predictions, std::span<const std::size_t> labels);

/// Mann–Whitney AUC, ties counted one half. NaN when either class is empty.
double roc_auc(std::span<const double> scores, const std::vector<bool>& positive);
/// Step-interpolated area under the precision-recall curve,
/// Σ (R_i − R_{i−1})·P_i over descending distinct thresholds. 0 without positives.
double average_precision(std::span<const double> scores, const std::vector<bool>& positive);
/// Mean one-vs-rest AUC over classes that have both positives and negatives.
double macro_ovr_auc(std::span<const ClassDistribution> predictions, std::span<const std::size_t> labels);

/// Population variance of accuracies expressed in percent. Needs ≥ 2 runs.
double cross_seed_variance(std::span<const double> accuracies);

/// Mean of every field over runs; `variance` is the cross-seed accuracy variance.
MetricsReport aggregate(std::span<const MetricsReport> runs);

/// Flat `key=value` lines with full precision rates.
void write_metrics_kv(const std::filesystem::path& path, const MetricsReport& report);
/// One row per seed plus an `all` row; percentages in the column order
/// Acc, Pre, Rec, F1, AUC, Var, then AUPR|Acc per class.
void write_metrics_csv(const std::filesystem::path& path, std::span<const std::string> row_names,
                       std::span<const MetricsReport> rows);
std::string metrics_csv_header();
std::string metrics_csv_row(const std::string& name, const MetricsReport& r);

}  // namespace mmsev
