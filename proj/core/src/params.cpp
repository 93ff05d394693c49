#include "attnctl/params.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace attnctl {

ParameterEntry& ParameterStore::add(const std::string& name, DenseArray init) {
  if (contains(name)) throw DomainError("ParameterStore: duplicate entry '" + name + "'");
  ParameterEntry entry;
  entry.grad = DenseArray(init.shape());
  entry.adam_m = DenseArray(init.shape());
  entry.adam_v = DenseArray(init.shape());
  entry.value = std::move(init);
  return entries_.emplace(name, std::move(entry)).first->second;
}

ParameterEntry& ParameterStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw DomainError("ParameterStore: no entry '" + name + "'");
  return it->second;
}

const ParameterEntry& ParameterStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw DomainError("ParameterStore: no entry '" + name + "'");
  return it->second;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, e] : entries_) e.grad.fill(0.0);
}

void ParameterStore::accumulate_grads_into(ParameterStore& target, double scale) const {
  for (const auto& [name, e] : entries_) axpy(scale, e.grad, target.grad(name));
}

DenseArray glorot_uniform(std::size_t fan_out, std::size_t fan_in, Rng& rng) {
  const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_array({fan_out, fan_in}, r, rng);
}

DenseArray uniform_array(Shape shape, double range, Rng& rng) {
  DenseArray out(std::move(shape));
  for (auto& x : out.storage()) x = rng.uniform(-range, range);
  return out;
}

void adam_step(ParameterStore& store, const AdamConfig& config) {
  for (const auto& [name, e] : store.entries()) {
    if (!e.grad.all_finite()) throw TrainingError("adam_step: non-finite gradient in '" + name + "'");
  }
  const double t = static_cast<double>(store.step_count + 1);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (auto& [_, e] : store.entries()) {
    auto& value = e.value.storage();
    auto& grad = e.grad.storage();
    auto& m = e.adam_m.storage();
    auto& v = e.adam_v.storage();
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      value[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
      grad[i] = 0.0;
    }
  }
  ++store.step_count;
}

void adam_step(ParameterStore& store, double lr, double beta1, double beta2, double eps) {
  adam_step(store, AdamConfig{lr, beta1, beta2, eps});
}

GradCheckResult finite_diff_check(const LossFn& loss, ParameterStore& store, double epsilon,
                                  const GradCheckOptions& options) {
  GradCheckResult result;
  Rng rng(options.seed);
  const std::size_t samples = std::max<std::size_t>(options.samples_per_tensor, 32);
  for (auto& [name, entry] : store.entries()) {
    const std::size_t n = entry.value.size();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (n > samples) {
      // Partial Fisher-Yates: the first `samples` slots become a random subset.
      for (std::size_t i = 0; i < samples; ++i) std::swap(coords[i], coords[i + rng.below(n - i)]);
      coords.resize(samples);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t idx : coords) {
      double& slot = entry.value[idx];
      const double saved = slot;
      slot = saved + epsilon;
      const double up = loss(store);
      slot = saved - epsilon;
      const double down = loss(store);
      slot = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = entry.grad[idx];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.coordinates_checked;
      if (rel > result.max_relative_error || result.worst_entry.empty()) {
        if (rel >= result.max_relative_error) {
          result.max_relative_error = rel;
          result.worst_entry = name;
          result.worst_index = idx;
          result.worst_analytic = analytic;
          result.worst_numeric = numeric;
        }
      }
    }
  }
  return result;
}

}  // namespace attnctl
