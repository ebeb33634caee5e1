#pragma once

#include <filesystem>
#include <ostream>
#include <random>
#include <string>

#include "ctiunet/tensor.hpp"

namespace ctiunet {

// gtest printer.
inline void PrintTo(const Shape& s, std::ostream* os) { *os << s.str(); }

}  // namespace ctiunet

namespace ctiunet::testing {

inline Tensor4 random_tensor(const Shape& s, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor4 t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

inline Tensor4 random_mask(const Shape& s, std::uint64_t seed, double density = 0.5) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution b(density);
  Tensor4 t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = b(rng) ? 1.0 : 0.0;
  return t;
}

// Fresh, empty directory under the system temp dir.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("ctiunet_test_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace ctiunet::testing
