#include "oepg/ego_semantics.hpp"

#include <cmath>

#include "oepg/error.hpp"

namespace oepg {

FirstOrder first_order(Var target, const ClusterHierarchy& hierarchy, double eps) {
  if (target.rows() != 1 || target.cols() != hierarchy.dim()) {
    throw ShapeError("first_order: target " + target.value().shape_string() + " vs centroid dim " +
                     std::to_string(hierarchy.dim()));
  }
  Tape& t = *target.tape;
  const std::size_t k = hierarchy.total_clusters();
  // Centroids are non-parametric: constants within a step.
  Var centroids = t.constant(hierarchy.stacked());
  Var diff = ad::sub(ad::broadcast_rows(target, k), centroids);
  return {ad::row_normalize(diff, eps), ad::row_sqnorm(diff)};
}

SecondOrder second_order(Var first_descriptors, double eps) {
  if (first_descriptors.rows() < 1) throw ContractError("second_order needs at least one descriptor");
  // Symmetric, so row s equals column s: X_s[k] = D_k . D_s.
  Var x = ad::matmul(first_descriptors, ad::transpose(first_descriptors));
  return {x, ad::row_normalize(x, eps), ad::row_sqnorm(x)};
}

Var omni_normalize(Var raw_sqnorms, Var decay) {
  if (decay.value().size() != 1) throw ShapeError("decay must be a scalar");
  if (!(decay.scalar() > 0.0)) throw ContractError("omni-granular decay must be positive");
  return ad::softmax(ad::neg(ad::mul_scalar(raw_sqnorms, decay)));
}

void init_omni_params(ParameterStore& params, std::size_t hidden_dim, std::size_t total_clusters,
                      RandomStream& rng) {
  // softplus^{-1}(1) = log(e - 1)
  const double unit = std::log(std::expm1(1.0));
  params.add("omni.alpha_raw", Matrix(1, 1, unit));
  params.add("omni.beta_raw", Matrix(1, 1, unit));
  params.add("omni.W", glorot_uniform(hidden_dim + total_clusters, hidden_dim, rng));
  params.add("omni.bias", Matrix(1, hidden_dim));
}

Var decay_parameter(ParameterStore& params, Tape& tape, const std::string& raw_name) {
  return ad::softplus(tape.parameter(params, raw_name));
}

double decay_value(const ParameterStore& params, const std::string& raw_name) {
  const double x = params.value(raw_name)[0];
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Var weight_and_fuse(Var first, Var second, Var weights_first, Var weights_second, Var W, Var bias) {
  const std::size_t k = first.rows();
  if (second.rows() != k || weights_first.rows() != k || weights_second.rows() != k) {
    throw ShapeError("weight_and_fuse: inconsistent descriptor counts");
  }
  if (W.rows() != first.cols() + second.cols() || bias.cols() != W.cols()) {
    throw ShapeError("weight_and_fuse: W " + W.value().shape_string() + " does not map " +
                     std::to_string(first.cols() + second.cols()) + " inputs");
  }
  Var weighted = ad::concat_cols(ad::row_scale(first, weights_first), ad::row_scale(second, weights_second));
  return ad::leaky_relu(ad::add_row(ad::matmul(weighted, W), bias), kFusionSlope);
}

DescriptorSet build_descriptors(Var target, const ClusterHierarchy& hierarchy, ParameterStore& params,
                                WeightingMode weighting) {
  Tape& t = *target.tape;
  DescriptorSet set;
  set.first = first_order(target, hierarchy);
  set.second = second_order(set.first.descriptors);
  const std::size_t k = hierarchy.total_clusters();
  if (weighting == WeightingMode::kTrainable) {
    set.weights_first = omni_normalize(set.first.raw_sqnorms, decay_parameter(params, t, "omni.alpha_raw"));
    set.weights_second = omni_normalize(set.second.raw_sqnorms, decay_parameter(params, t, "omni.beta_raw"));
  } else {
    set.weights_first = t.constant(Matrix(k, 1, 1.0 / static_cast<double>(k)));
    set.weights_second = set.weights_first;
  }
  set.fused = weight_and_fuse(set.first.descriptors, set.second.descriptors, set.weights_first,
                              set.weights_second, t.parameter(params, "omni.W"),
                              t.parameter(params, "omni.bias"));
  return set;
}

Matrix extend_adjacency(const Matrix& local_adjacency, std::size_t target, std::size_t descriptors,
                        Mode mode) {
  const std::size_t n = local_adjacency.rows();
  if (local_adjacency.cols() != n) throw ShapeError("adjacency must be square");
  if (target >= n) throw ContractError("target index outside the subgraph");
  Matrix a(n + descriptors, n + descriptors);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a(i, j) = local_adjacency(i, j);
  }
  for (std::size_t k = n; k < n + descriptors; ++k) {
    if (mode == Mode::kNode) {
      a(target, k) = 1.0;
      a(k, target) = 1.0;
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        a(i, k) = 1.0;
        a(k, i) = 1.0;
      }
    }
  }
  return a;
}

ExtendedGraph extend_subgraph(Var local_hidden, const Matrix& local_adjacency, std::size_t target,
                              Var fused, Mode mode) {
  if (local_hidden.rows() != local_adjacency.rows()) {
    throw ShapeError("extend_subgraph: feature rows do not match adjacency");
  }
  if (fused.rows() > 0 && fused.cols() != local_hidden.cols()) {
    throw ShapeError("extend_subgraph: descriptor dim " + std::to_string(fused.cols()) +
                     " vs hidden dim " + std::to_string(local_hidden.cols()));
  }
  ExtendedGraph g;
  g.num_local = local_hidden.rows();
  g.target = target;
  g.adjacency = extend_adjacency(local_adjacency, target, fused.rows(), mode);
  g.features = fused.rows() > 0 ? ad::concat_rows(local_hidden, fused) : local_hidden;
  return g;
}

}  // namespace oepg
