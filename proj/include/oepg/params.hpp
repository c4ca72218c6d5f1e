#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>

#include "oepg/matrix.hpp"
#include "oepg/random.hpp"

namespace oepg {

// Named trainable arrays, each with a gradient slot of the same shape.
// Iteration order is lexicographic by name, which keeps every traversal
// (optimizer, serialization, grad_check) deterministic.
class ParameterStore {
 public:
  struct Entry {
    Matrix value;
    Matrix grad;
  };

  void add(const std::string& name, Matrix value);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Matrix& value(const std::string& name);
  const Matrix& value(const std::string& name) const;
  Matrix& grad(const std::string& name);
  const Matrix& grad(const std::string& name) const;

  void zero_grad();
  std::size_t scalar_count() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }

  friend bool operator==(const ParameterStore& a, const ParameterStore& b);

 private:
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;

  std::map<std::string, Entry> entries_;
};

// Glorot-uniform initializer for a fan_in x fan_out weight.
Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, RandomStream& rng);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::map<std::string, Matrix> first_moment;
  std::map<std::string, Matrix> second_moment;
};

OptimizerState make_optimizer_state(const ParameterStore& params, AdamConfig config = {});

// Bias-corrected Adam update of every parameter; gradients are zeroed after.
void adam_step(ParameterStore& params, OptimizerState& state);

// Computes the loss and writes analytic gradients into the store's gradient
// slots (the callee zeroes them first).
using LossFn = std::function<double(ParameterStore&)>;

struct GradCheckReport {
  std::map<std::string, double> max_relative_error;
  double overall = 0.0;
};

// Central finite differences against the analytic gradient, per scalar entry.
GradCheckReport grad_check(const LossFn& loss_fn, ParameterStore params, double h);

}  // namespace oepg
