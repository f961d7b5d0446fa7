#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <unistd.h>
#include <random>
#include <vector>

#include "mmsev/matrix.hpp"
#include "mmsev/params.hpp"

namespace mmsev::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  return random_normal(rows, cols, scale, rng);
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

/// A random probability vector with strictly positive entries.
inline std::vector<double> random_simplex(std::size_t n, Rng& rng) {
  std::exponential_distribution<double> d(1.0);
  std::vector<double> v(n);
  double s = 0.0;
  for (double& x : v) s += (x = d(rng) + 1e-3);
  for (double& x : v) x /= s;
  return v;
}

inline double row_sum(std::span<const double> r) {
  double s = 0.0;
  for (double v : r) s += v;
  return s;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("mmsev_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  std::filesystem::path write(const std::string& name, const std::string& content) const {
    const auto p = path_ / name;
    std::ofstream(p) << content;
    return p;
  }

 private:
  std::filesystem::path path_;
};

}  // namespace mmsev::testing
