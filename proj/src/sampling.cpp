#include "mmsev/sampling.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mmsev/errors.hpp"
#include "mmsev/params.hpp"

namespace mmsev {

LabeledDataset::LabeledDataset(std::vector<Sample> samples, std::size_t num_classes) : num_classes_(num_classes) {
  samples_.reserve(samples.size());
  for (auto& s : samples) add(std::move(s));
}

void LabeledDataset::add(Sample s) {
  if (s.label >= num_classes_)
    throw LabelError(fmt::format("label {} outside 0..{}", s.label, num_classes_ - 1));
  samples_.push_back(std::move(s));
}

std::vector<std::size_t> LabeledDataset::class_counts() const {
  std::vector<std::size_t> c(num_classes_, 0);
  for (const auto& s : samples_) ++c[s.label];
  return c;
}

LabeledDataset dataset_from_counts(const std::vector<std::size_t>& counts) {
  LabeledDataset d(counts.size());
  std::size_t origin = 0;
  for (std::size_t c = 0; c < counts.size(); ++c)
    for (std::size_t i = 0; i < counts[c]; ++i) d.add(Sample{origin++, c, {}, false});
  return d;
}

namespace {

std::vector<std::vector<std::size_t>> members_by_class(const LabeledDataset& data) {
  std::vector<std::vector<std::size_t>> m(data.num_classes());
  for (std::size_t i = 0; i < data.size(); ++i) m[data.samples()[i].label].push_back(i);
  return m;
}

void require_nonempty(const std::vector<std::vector<std::size_t>>& members) {
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (members[c].empty()) {
      const std::string name = members.size() == kNumClasses ? std::string(to_string(severity_from_index(c)))
                                                             : fmt::format("class {}", c);
      throw ResamplingError(fmt::format("cannot oversample: {} has no samples", name));
    }
  }
}

std::size_t target_count(const std::vector<std::vector<std::size_t>>& members) {
  std::size_t n = 0;
  for (const auto& m : members) n = std::max(n, m.size());
  return n;
}

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw InputError(fmt::format("SMOTE feature vectors differ in length ({} vs {})", a.size(), b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

LabeledDataset random_oversample(const LabeledDataset& data, std::uint64_t seed) {
  const auto members = members_by_class(data);
  require_nonempty(members);
  const std::size_t target = target_count(members);
  Rng rng(seed);
  LabeledDataset out(data.samples(), data.num_classes());
  for (const auto& cls : members) {
    std::uniform_int_distribution<std::size_t> pick(0, cls.size() - 1);
    for (std::size_t n = cls.size(); n < target; ++n) out.add(data.samples()[cls[pick(rng)]]);
  }
  return out;
}

LabeledDataset smote_oversample(const LabeledDataset& data, std::uint64_t seed, const SmoteOptions& opts) {
  const auto members = members_by_class(data);
  require_nonempty(members);
  if (opts.k_neighbors == 0) throw ParameterError("SMOTE needs k_neighbors >= 1");
  const std::size_t target = target_count(members);
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LabeledDataset out(data.samples(), data.num_classes());

  for (std::size_t c = 0; c < members.size(); ++c) {
    const auto& cls = members[c];
    if (cls.size() >= target) continue;
    std::uniform_int_distribution<std::size_t> pick(0, cls.size() - 1);
    if (cls.size() == 1) {
      fmt::print(stderr, "warning: SMOTE class {} has a single sample; duplicating it\n", c);
      for (std::size_t n = 1; n < target; ++n) out.add(data.samples()[cls[0]]);
      continue;
    }
    // k nearest same-class neighbours per member, ties broken by position
    const std::size_t k = std::min(opts.k_neighbors, cls.size() - 1);
    std::vector<std::vector<std::size_t>> neighbours(cls.size());
    for (std::size_t a = 0; a < cls.size(); ++a) {
      std::vector<std::pair<double, std::size_t>> d;
      d.reserve(cls.size() - 1);
      for (std::size_t b = 0; b < cls.size(); ++b) {
        if (a == b) continue;
        d.emplace_back(squared_distance(data.samples()[cls[a]].features, data.samples()[cls[b]].features), b);
      }
      std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
      for (std::size_t i = 0; i < k; ++i) neighbours[a].push_back(d[i].second);
    }
    std::uniform_int_distribution<std::size_t> pick_nn(0, k - 1);
    for (std::size_t n = cls.size(); n < target; ++n) {
      const std::size_t a = pick(rng);
      const std::size_t b = neighbours[a][pick_nn(rng)];
      const double u = opts.fixed_u ? *opts.fixed_u : unit(rng);
      const Sample& base = data.samples()[cls[a]];
      const Sample& nn = data.samples()[cls[b]];
      Sample s{base.origin, base.label, base.features, true};
      for (std::size_t i = 0; i < s.features.size(); ++i) s.features[i] += u * (nn.features[i] - base.features[i]);
      out.add(std::move(s));
    }
  }
  return out;
}

std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& fractions) {
  const double total = std::accumulate(fractions.begin(), fractions.end(), 0.0);
  if (!(total > 0.0)) throw ParameterError("split fractions must sum to a positive value");
  std::vector<std::size_t> counts(fractions.size());
  std::vector<double> remainder(fractions.size());
  std::size_t used = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double quota = static_cast<double>(n) * fractions[i] / total;
    // guard against 0.1*10 landing just below 1
    const double fl = std::floor(quota + 1e-9);
    counts[i] = static_cast<std::size_t>(fl);
    remainder[i] = quota - fl;
    used += counts[i];
  }
  std::vector<std::size_t> order(fractions.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; used < n; ++i, ++used) ++counts[order[i % order.size()]];
  return counts;
}

DataSplit stratified_split(const LabeledDataset& data, std::uint64_t seed, const SplitFractions& fr) {
  auto members = members_by_class(data);
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (!members[c].empty() && members[c].size() < 3)
      throw SplitError(fmt::format("class {} has {} samples; stratified split needs at least 3", c,
                                   members[c].size()));
  }
  Rng rng(seed);
  DataSplit out{LabeledDataset(data.num_classes()), LabeledDataset(data.num_classes()),
                LabeledDataset(data.num_classes())};
  for (auto& cls : members) {
    if (cls.empty()) continue;
    std::shuffle(cls.begin(), cls.end(), rng);
    const auto counts = apportion(cls.size(), {fr.train, fr.validation, fr.test});
    std::size_t pos = 0;
    LabeledDataset* parts[3] = {&out.train, &out.validation, &out.test};
    for (std::size_t p = 0; p < 3; ++p)
      for (std::size_t i = 0; i < counts[p]; ++i) parts[p]->add(data.samples()[cls[pos++]]);
  }
  return out;
}

}  // namespace mmsev
