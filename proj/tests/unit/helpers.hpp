#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "attnctl/captioner.hpp"
#include "attnctl/rng.hpp"
#include "attnctl/tensor.hpp"
#include "attnctl/vqa.hpp"

namespace testutil {

using namespace attnctl;

inline DenseArray random_array(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  DenseArray a(std::move(shape));
  for (auto& v : a.storage()) v = rng.uniform(lo, hi);
  return a;
}

/// Strictly positive simplex with a random spread of magnitudes.
inline DenseArray random_simplex(std::size_t n, Rng& rng) {
  DenseArray a({n});
  double total = 0.0;
  for (auto& v : a.storage()) {
    v = std::exp(rng.uniform(-4.0, 4.0));
    total += v;
  }
  for (auto& v : a.storage()) v /= total;
  return a;
}

inline double max_abs_diff(const DenseArray& a, const DenseArray& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline CaptionerConfig tiny_captioner_config(std::size_t regions = 4, std::size_t dim = 2, std::size_t vocab = 5) {
  CaptionerConfig c;
  c.regions = regions;
  c.feature_dim = dim;
  c.hidden_dim = 2 * dim;
  c.vocab_size = vocab;
  c.max_len = 6;
  c.dropout_rate = 0.0;
  c.lambda = 0.005;
  return c;
}

/// Captioner with every parameter drawn from uniform(-scale, scale), biases included.
inline Captioner random_captioner(const CaptionerConfig& config, Rng& rng, double scale = 1.0) {
  ParameterStore store;
  for (const auto& [name, shape] : captioner_parameter_shapes(config)) store.add(name, random_array(shape, rng, -scale, scale));
  return Captioner(config, std::move(store));
}

inline VqaModel random_vqa(const VqaConfig& config, Rng& rng, double scale = 1.0) {
  ParameterStore store;
  for (const auto& [name, shape] : vqa_parameter_shapes(config)) store.add(name, random_array(shape, rng, -scale, scale));
  return VqaModel(config, std::move(store));
}

inline ImageAnnotation random_image(std::size_t regions, std::size_t dim, Rng& rng) {
  return ImageAnnotation{random_array({regions, dim}, rng)};
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("attnctl_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
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

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace testutil
