#include "oepg/params.hpp"

#include <algorithm>
#include <cmath>

#include "oepg/error.hpp"

namespace oepg {

void ParameterStore::add(const std::string& name, Matrix value) {
  if (contains(name)) throw ConfigError("duplicate parameter name: " + name);
  Matrix grad(value.rows(), value.cols());
  entries_.emplace(name, Entry{std::move(value), std::move(grad)});
}

ParameterStore::Entry& ParameterStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

const ParameterStore::Entry& ParameterStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter: " + name);
  return it->second;
}

Matrix& ParameterStore::value(const std::string& name) { return entry(name).value; }
const Matrix& ParameterStore::value(const std::string& name) const { return entry(name).value; }
Matrix& ParameterStore::grad(const std::string& name) { return entry(name).grad; }
const Matrix& ParameterStore::grad(const std::string& name) const { return entry(name).grad; }

void ParameterStore::zero_grad() {
  for (auto& [name, e] : entries_) e.grad.fill(0.0);
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

bool operator==(const ParameterStore& a, const ParameterStore& b) {
  if (a.entries_.size() != b.entries_.size()) return false;
  auto ib = b.entries_.begin();
  for (const auto& [name, e] : a.entries_) {
    if (ib->first != name || !(ib->second.value == e.value)) return false;
    ++ib;
  }
  return true;
}

Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, RandomStream& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (auto& v : w.data()) v = rng.uniform(-limit, limit);
  return w;
}

OptimizerState make_optimizer_state(const ParameterStore& params, AdamConfig config) {
  OptimizerState state;
  state.config = config;
  for (const auto& [name, e] : params) {
    state.first_moment.emplace(name, Matrix(e.value.rows(), e.value.cols()));
    state.second_moment.emplace(name, Matrix(e.value.rows(), e.value.cols()));
  }
  return state;
}

void adam_step(ParameterStore& params, OptimizerState& state) {
  const auto& cfg = state.config;
  // Validate before mutating anything so a failed step leaves no partial update.
  for (auto& [name, e] : params) {
    auto m = state.first_moment.find(name);
    auto v = state.second_moment.find(name);
    if (m == state.first_moment.end() || v == state.second_moment.end()) {
      throw ConfigError("optimizer has no moment slot for parameter " + name);
    }
    if (!m->second.same_shape(e.value) || !v->second.same_shape(e.value) ||
        !e.grad.same_shape(e.value)) {
      throw ConfigError("optimizer/gradient shape mismatch for parameter " + name);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ConfigError("optimizer state tracks parameters missing from the store");
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, e] : params) {
    auto& m = state.first_moment.at(name);
    auto& v = state.second_moment.at(name);
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      e.value[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
  params.zero_grad();
}

GradCheckReport grad_check(const LossFn& loss_fn, ParameterStore params, double h) {
  if (!(h > 0.0)) throw ContractError("grad_check step size must be positive");
  params.zero_grad();
  const double base = loss_fn(params);
  if (!std::isfinite(base)) throw NumericError("grad_check: loss is non-finite at the base point");

  std::map<std::string, Matrix> analytic;
  for (const auto& [name, e] : params) analytic.emplace(name, e.grad);

  GradCheckReport report;
  std::vector<std::string> names;
  for (const auto& [name, e] : params) names.push_back(name);
  for (const auto& name : names) {
    double worst = 0.0;
    const std::size_t n = params.value(name).size();
    for (std::size_t i = 0; i < n; ++i) {
      const double orig = params.value(name)[i];
      params.value(name)[i] = orig + h;
      const double fp = loss_fn(params);
      params.value(name)[i] = orig - h;
      const double fm = loss_fn(params);
      params.value(name)[i] = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw NumericError("grad_check: non-finite loss when perturbing " + name + "[" +
                           std::to_string(i) + "]");
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic.at(name)[i];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, rel);
    }
    report.max_relative_error[name] = worst;
    report.overall = std::max(report.overall, worst);
  }
  return report;
}

}  // namespace oepg
