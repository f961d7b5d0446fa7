#pragma once

// Synthetic patients with a planted, ordinal, two-modality signal.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mmsev/mesh.hpp"
#include "mmsev/text.hpp"

namespace mmsev {

/// A landmark displaced along one axis (0=x, 1=y, 2=z) by direction·step·class·signal.
struct PlantedLandmark {
  std::size_t landmark = 0;
  std::size_t axis = 0;
  double direction = 1.0;
};

/// Jaw corners pushed outward (wider jaw) and chin points pushed back in depth.
std::vector<PlantedLandmark> default_planted_landmarks();

struct SynthConfig {
  std::size_t n_subjects = 500;
  std::vector<double> class_proportions = {58, 76, 76, 290};
  double signal_strength = 1.0;
  double noise_scale = 0.01;
  /// Landmark displacement per severity step at full signal.
  double displacement_step = 0.02;
  /// Half-width of the random per-subject pose; the sidecar holds its inverse.
  double pose_jitter = 0.02;
  std::vector<PlantedLandmark> planted = default_planted_landmarks();
  std::uint64_t seed = 7;

  /// Throws ConfigError on invalid settings.
  void validate() const;
};

struct SynthData {
  std::vector<PatientRecord> records;
  std::vector<FaceMesh> meshes;
  std::map<std::string, AffineTheta> thetas;
};

/// Class-conditional means at full signal, per severity.
inline constexpr std::array<double, 4> kBmiAnchors = {24.0, 25.1, 26.6, 28.6};
inline constexpr std::array<double, 4> kAgeAnchors = {32.1, 39.1, 43.2, 41.4};

SynthData generate(const SynthConfig& cfg);

/// Writes patients.csv, meshes.csv and thetas.csv under `dir`.
void write_synth(const std::filesystem::path& dir, const SynthData& data);

/// Shared noiseless face shared by every subject.
const std::vector<Landmark>& template_face();

/// Feature indices (into select_keypoints output) of the planted coordinates.
std::vector<std::size_t> planted_feature_indices(const std::vector<PlantedLandmark>& planted,
                                                 const KeypointSelection& sel);

/// Averages the planted displacements of a pose-corrected mesh and thresholds
/// at the midpoints between class levels.
Severity planted_threshold_oracle(const FaceMesh& canonical, const SynthConfig& cfg);

}  // namespace mmsev
