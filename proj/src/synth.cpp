#include "mmsev/synth.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mmsev/errors.hpp"

namespace mmsev {

namespace {

constexpr std::uint64_t kTemplateSeed = 0x5eed'f4ce;

struct AhiRange {
  double lo, hi;
};
constexpr std::array<AhiRange, 4> kAhiRanges = {{{0.0, 5.0}, {5.0, 15.0}, {15.0, 30.0}, {30.0, 90.0}}};

// rounds to 1/scale, e.g. scale 10 keeps one decimal
double round_to(double v, double scale) { return std::round(v * scale) / scale; }

}  // namespace

std::vector<PlantedLandmark> default_planted_landmarks() {
  return {{172, 0, -1.0}, {136, 0, -1.0}, {150, 0, -1.0}, {397, 0, 1.0},
          {365, 0, 1.0},  {379, 0, 1.0},  {152, 2, 1.0},  {175, 2, 1.0}};
}

void SynthConfig::validate() const {
  if (n_subjects == 0) throw ConfigError("synth: n_subjects must be positive");
  if (class_proportions.size() != kNumClasses)
    throw ConfigError(fmt::format("synth: expected {} class proportions", kNumClasses));
  for (double p : class_proportions)
    if (!(p > 0.0)) throw ConfigError("synth: class proportions must be positive");
  if (!(signal_strength >= 0.0 && signal_strength <= 1.0))
    throw ConfigError(fmt::format("synth: signal strength {} outside [0,1]", signal_strength));
  if (!(noise_scale >= 0.0)) throw ConfigError("synth: noise scale must be >= 0");
  if (!(pose_jitter >= 0.0 && pose_jitter < 0.1)) throw ConfigError("synth: pose jitter must be in [0, 0.1)");
  for (const auto& p : planted) {
    if (p.landmark >= kLandmarkCount || p.axis > 2)
      throw ConfigError(fmt::format("synth: invalid planted landmark {} axis {}", p.landmark, p.axis));
  }
}

const std::vector<Landmark>& template_face() {
  static const std::vector<Landmark> face = [] {
    Rng rng(kTemplateSeed);
    std::uniform_real_distribution<double> xy(0.2, 0.8);
    std::uniform_real_distribution<double> depth(-0.05, 0.05);
    std::vector<Landmark> f(kLandmarkCount);
    for (auto& p : f) {
      p.x = xy(rng);
      p.y = xy(rng);
      p.z = depth(rng);
    }
    return f;
  }();
  return face;
}

SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const double s = cfg.signal_strength;
  std::discrete_distribution<std::size_t> pick_class(cfg.class_proportions.begin(), cfg.class_proportions.end());
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double bmi_base = std::accumulate(kBmiAnchors.begin(), kBmiAnchors.end(), 0.0) / 4.0;
  const double age_base = std::accumulate(kAgeAnchors.begin(), kAgeAnchors.end(), 0.0) / 4.0;
  const auto& face = template_face();

  SynthData out;
  out.records.reserve(cfg.n_subjects);
  out.meshes.reserve(cfg.n_subjects);
  const int width = static_cast<int>(std::to_string(cfg.n_subjects).size());
  for (std::size_t i = 0; i < cfg.n_subjects; ++i) {
    const std::size_t c = pick_class(rng);
    const double level = static_cast<double>(c);
    PatientRecord r;
    r.id = fmt::format("S{:0{}}", i + 1, width);
    r.severity = severity_from_index(c);
    const auto range = kAhiRanges[c];
    r.ahi = std::clamp(round_to(range.lo + (range.hi - range.lo) * unit(rng), 10.0), range.lo, range.hi - 0.1);

    r.gender = unit(rng) < 0.5 + s * 0.1 * level ? Gender::kMale : Gender::kFemale;
    r.age = std::clamp(std::round(age_base + s * (kAgeAnchors[c] - age_base) + 10.0 * gauss(rng)), 18.0, 90.0);
    r.bmi = std::clamp(round_to(bmi_base + s * (kBmiAnchors[c] - bmi_base) + 3.0 * gauss(rng), 10.0), 12.0, 58.0);
    r.neck_cm = std::clamp(std::round(37.0 + s * 2.0 * (level - 1.5) + 2.5 * gauss(rng)), 25.0, 55.0);
    r.whr = std::clamp(round_to(0.9 + s * 0.02 * (level - 1.5) + 0.05 * gauss(rng), 100.0), 0.6, 1.3);
    const double comorbid = 0.15 + s * 0.08 * (level - 1.5);
    r.hypertension = unit(rng) < comorbid;
    r.diabetes = unit(rng) < comorbid;
    r.heart_disease = unit(rng) < comorbid;
    r.hyperlipidemia = unit(rng) < comorbid;

    FaceMesh m;
    m.subject_id = r.id;
    m.landmarks = face;
    for (auto& p : m.landmarks) {
      p.x += cfg.noise_scale * gauss(rng);
      p.y += cfg.noise_scale * gauss(rng);
      p.z += cfg.noise_scale * gauss(rng);
    }
    for (const auto& pl : cfg.planted) {
      const double shift = pl.direction * cfg.displacement_step * level * s;
      auto& p = m.landmarks[pl.landmark];
      (pl.axis == 0 ? p.x : pl.axis == 1 ? p.y : p.z) += shift;
    }

    AffineTheta pose;
    if (cfg.pose_jitter > 0.0) {
      const double j = cfg.pose_jitter;
      pose.sx = 1.0 + j * (2.0 * unit(rng) - 1.0);
      pose.sy = 1.0 + j * (2.0 * unit(rng) - 1.0);
      pose.shx = 0.5 * j * (2.0 * unit(rng) - 1.0);
      pose.shy = 0.5 * j * (2.0 * unit(rng) - 1.0);
      pose.tx = j * (2.0 * unit(rng) - 1.0);
      pose.ty = j * (2.0 * unit(rng) - 1.0);
      for (auto& p : m.landmarks) {
        const double x = pose.sx * p.x + pose.shx * p.y + pose.tx;
        const double y = pose.shy * p.x + pose.sy * p.y + pose.ty;
        p.x = x;
        p.y = y;
      }
      out.thetas.emplace(r.id, inverse(pose));
    }
    out.records.push_back(std::move(r));
    out.meshes.push_back(std::move(m));
  }
  return out;
}

void write_synth(const std::filesystem::path& dir, const SynthData& data) {
  std::filesystem::create_directories(dir);
  save_patients(dir / "patients.csv", data.records);
  save_meshes(dir / "meshes.csv", data.meshes);
  if (!data.thetas.empty()) save_thetas(dir / "thetas.csv", data.thetas);
}

std::vector<std::size_t> planted_feature_indices(const std::vector<PlantedLandmark>& planted,
                                                 const KeypointSelection& sel) {
  std::vector<std::size_t> out;
  out.reserve(planted.size());
  for (const auto& p : planted) out.push_back(3 * sel.position_of(p.landmark) + p.axis);
  return out;
}

Severity planted_threshold_oracle(const FaceMesh& canonical, const SynthConfig& cfg) {
  if (cfg.planted.empty() || !(cfg.displacement_step * cfg.signal_strength > 0.0))
    throw ParameterError("threshold oracle needs planted landmarks and a positive signal");
  const auto& face = template_face();
  double level = 0.0;
  for (const auto& pl : cfg.planted) {
    const auto& p = canonical.landmarks[pl.landmark];
    const auto& t = face[pl.landmark];
    const double d = pl.axis == 0 ? p.x - t.x : pl.axis == 1 ? p.y - t.y : p.z - t.z;
    level += pl.direction * d / (cfg.displacement_step * cfg.signal_strength);
  }
  level /= static_cast<double>(cfg.planted.size());
  const double c = std::clamp(std::round(level), 0.0, static_cast<double>(kNumClasses - 1));
  return severity_from_index(static_cast<std::size_t>(c));
}

}  // namespace mmsev
