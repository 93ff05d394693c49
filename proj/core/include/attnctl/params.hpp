#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "attnctl/rng.hpp"
#include "attnctl/tensor.hpp"

namespace attnctl {

struct ParameterEntry {
  DenseArray value;
  DenseArray grad;
  DenseArray adam_m;
  DenseArray adam_v;
};

/// Named trainable arrays with gradients and Adam moments. Entries are kept
/// in name order so iteration (and anything serialised from it) is stable.
class ParameterStore {
 public:
  ParameterEntry& add(const std::string& name, DenseArray init);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  ParameterEntry& at(const std::string& name);
  const ParameterEntry& at(const std::string& name) const;

  DenseArray& value(const std::string& name) { return at(name).value; }
  const DenseArray& value(const std::string& name) const { return at(name).value; }
  DenseArray& grad(const std::string& name) { return at(name).grad; }

  std::vector<std::string> names() const;
  std::size_t parameter_count() const;

  void zero_grad();
  /// Adds `scale` times each gradient into `target` (matching names).
  void accumulate_grads_into(ParameterStore& target, double scale = 1.0) const;

  std::map<std::string, ParameterEntry>& entries() { return entries_; }
  const std::map<std::string, ParameterEntry>& entries() const { return entries_; }

  std::uint64_t step_count = 0;

 private:
  std::map<std::string, ParameterEntry> entries_;
};

/// Glorot-style uniform init in [-r, r], r = sqrt(6 / (fan_in + fan_out)).
DenseArray glorot_uniform(std::size_t fan_out, std::size_t fan_in, Rng& rng);
DenseArray uniform_array(Shape shape, double range, Rng& rng);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update using step_count + 1, then increments
/// step_count and zeroes every gradient. Throws TrainingError naming the
/// first entry holding a non-finite gradient; values are untouched then.
void adam_step(ParameterStore& store, const AdamConfig& config);
void adam_step(ParameterStore& store, double lr, double beta1, double beta2, double eps);

struct GradCheckOptions {
  /// Coordinates checked per tensor; tensors at most this large are checked
  /// exhaustively.
  std::size_t samples_per_tensor = 32;
  std::uint64_t seed = 1;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_entry;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

using LossFn = std::function<double(const ParameterStore&)>;

/// Compares the gradients already stored in `store` against central
/// differences of `loss`. Relative error uses max(|a|, |n|, 1e-8) as the
/// denominator. Values are restored before returning.
GradCheckResult finite_diff_check(const LossFn& loss, ParameterStore& store, double epsilon,
                                  const GradCheckOptions& options = {});

}  // namespace attnctl
