#include "mmsev/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mmsev/csv.hpp"
#include "mmsev/errors.hpp"

namespace mmsev {

double roc_auc(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw InputError("roc_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // average ranks over tie groups, 1-based
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (positive[order[t]]) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double average_precision(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw InputError("average_precision: scores and labels differ in length");
  const std::size_t n = scores.size();
  const auto total_pos = static_cast<double>(std::count(positive.begin(), positive.end(), true));
  if (total_pos == 0.0) return 0.0;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (positive[order[j]]) tp += 1.0; else fp += 1.0;
      ++j;
    }
    const double recall = tp / total_pos;
    const double precision = tp / (tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

namespace {

void check_inputs(std::span<const ClassDistribution> predictions, std::span<const std::size_t> labels) {
  if (predictions.size() != labels.size())
    throw InputError(fmt::format("evaluate: {} predictions for {} labels", predictions.size(), labels.size()));
  if (predictions.empty()) throw InputError("evaluate: no predictions");
  for (const auto& p : predictions)
    if (p.p.size() != kNumClasses) throw InputError(fmt::format("evaluate: expected {} classes", kNumClasses));
  for (auto y : labels)
    if (y >= kNumClasses) throw LabelError(fmt::format("label {} outside 0..{}", y, kNumClasses - 1));
}

std::vector<double> class_scores(std::span<const ClassDistribution> predictions, std::size_t c) {
  std::vector<double> s(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) s[i] = predictions[i].p[c];
  return s;
}

std::vector<bool> one_vs_rest(std::span<const std::size_t> labels, std::size_t c) {
  std::vector<bool> pos(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) pos[i] = labels[i] == c;
  return pos;
}

}  // namespace

double macro_ovr_auc(std::span<const ClassDistribution> predictions, std::span<const std::size_t> labels) {
  check_inputs(predictions, labels);
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto scores = class_scores(predictions, c);
    const auto pos = one_vs_rest(labels, c);
    const double a = roc_auc(scores, pos);
    if (std::isnan(a)) continue;
    sum += a;
    ++used;
  }
  return used == 0 ? 0.5 : sum / static_cast<double>(used);
}

MetricsReport evaluate(std::span<const ClassDistribution> predictions, std::span<const std::size_t> labels) {
  check_inputs(predictions, labels);
  const std::size_t n = labels.size();
  std::array<std::array<double, kNumClasses>, kNumClasses> confusion{};  // [true][pred]
  for (std::size_t i = 0; i < n; ++i) confusion[labels[i]][predictions[i].argmax()] += 1.0;

  MetricsReport r;
  double correct = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) correct += confusion[c][c];
  r.accuracy = correct / static_cast<double>(n);

  for (std::size_t c = 0; c < kNumClasses; ++c) {
    double support = 0.0, predicted = 0.0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      support += confusion[c][k];
      predicted += confusion[k][c];
    }
    const double tp = confusion[c][c];
    const double precision = predicted > 0.0 ? tp / predicted : 0.0;
    const double recall = support > 0.0 ? tp / support : 0.0;
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    const double w = support / static_cast<double>(n);
    r.precision += w * precision;
    r.recall += w * recall;
    r.f1 += w * f1;
    r.class_accuracy[c] = recall;

    const auto scores = class_scores(predictions, c);
    const auto pos = one_vs_rest(labels, c);
    r.aupr[c] = average_precision(scores, pos);
  }
  r.auc = macro_ovr_auc(predictions, labels);
  return r;
}

double cross_seed_variance(std::span<const double> accuracies) {
  if (accuracies.size() < 2)
    throw InputError(fmt::format("variance needs at least 2 runs, got {}", accuracies.size()));
  double mean = 0.0;
  for (double a : accuracies) mean += 100.0 * a;
  mean /= static_cast<double>(accuracies.size());
  double var = 0.0;
  for (double a : accuracies) var += (100.0 * a - mean) * (100.0 * a - mean);
  return var / static_cast<double>(accuracies.size());
}

MetricsReport aggregate(std::span<const MetricsReport> runs) {
  if (runs.empty()) throw InputError("aggregate: no runs");
  MetricsReport m;
  const double k = static_cast<double>(runs.size());
  std::vector<double> acc;
  for (const auto& r : runs) {
    m.accuracy += r.accuracy / k;
    m.precision += r.precision / k;
    m.recall += r.recall / k;
    m.f1 += r.f1 / k;
    m.auc += r.auc / k;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      m.aupr[c] += r.aupr[c] / k;
      m.class_accuracy[c] += r.class_accuracy[c] / k;
    }
    acc.push_back(r.accuracy);
  }
  m.variance = runs.size() >= 2 ? cross_seed_variance(acc) : 0.0;
  return m;
}

void write_metrics_kv(const std::filesystem::path& path, const MetricsReport& r) {
  auto out = csv::open_output(path);
  out << "accuracy=" << csv::format_exact(r.accuracy) << '\n'
      << "precision=" << csv::format_exact(r.precision) << '\n'
      << "recall=" << csv::format_exact(r.recall) << '\n'
      << "f1=" << csv::format_exact(r.f1) << '\n'
      << "auc=" << csv::format_exact(r.auc) << '\n'
      << "variance=" << csv::format_exact(r.variance) << '\n';
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::string name(to_string(severity_from_index(c)));
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    out << "aupr_" << name << '=' << csv::format_exact(r.aupr[c]) << '\n';
    out << "accuracy_" << name << '=' << csv::format_exact(r.class_accuracy[c]) << '\n';
  }
}

std::string metrics_csv_header() {
  return "run,Acc,Pre,Rec,F1,AUC,Var,Normal_AUPR,Normal_Acc,Mild_AUPR,Mild_Acc,Moderate_AUPR,Moderate_Acc,"
         "Severe_AUPR,Severe_Acc";
}

std::string metrics_csv_row(const std::string& name, const MetricsReport& r) {
  std::string row = fmt::format("{},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f}", name, 100 * r.accuracy,
                                100 * r.precision, 100 * r.recall, 100 * r.f1, 100 * r.auc, r.variance);
  for (std::size_t c = 0; c < kNumClasses; ++c)
    row += fmt::format(",{:.4f},{:.4f}", 100 * r.aupr[c], 100 * r.class_accuracy[c]);
  return row;
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const std::string> row_names,
                       std::span<const MetricsReport> rows) {
  if (row_names.size() != rows.size()) throw InputError("write_metrics_csv: names and rows differ in length");
  auto out = csv::open_output(path);
  out << metrics_csv_header() << '\n';
  for (std::size_t i = 0; i < rows.size(); ++i) out << metrics_csv_row(row_names[i], rows[i]) << '\n';
}

}  // namespace mmsev
