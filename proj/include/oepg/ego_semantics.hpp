#pragma once

#include <cstddef>

#include "oepg/clusters.hpp"
#include "oepg/encoder.hpp"
#include "oepg/params.hpp"
#include "oepg/tape.hpp"

namespace oepg {

inline constexpr double kNormEps = 1e-12;
inline constexpr double kFusionSlope = 0.01;

struct FirstOrder {
  Var descriptors;  // K x d, rows (V - C) / max(|V - C|, eps)
  Var raw_sqnorms;  // K x 1, |V - C|^2
};

struct SecondOrder {
  Var correlations;  // K x K, row s = [D_k . D_s]_k before normalization
  Var descriptors;   // K x K, rows normalized
  Var raw_sqnorms;   // K x 1, |X_s|^2
};

// First-order descriptors of a 1 x d target against every centroid (flat order).
FirstOrder first_order(Var target, const ClusterHierarchy& hierarchy, double eps = kNormEps);

SecondOrder second_order(Var first_descriptors, double eps = kNormEps);

// Softmax of -decay * raw over all K entries (the omni-granular weights).
Var omni_normalize(Var raw_sqnorms, Var decay);

// Registers omni.alpha_raw, omni.beta_raw (softplus(raw) = 1 at init),
// omni.W ((d + K) x d) and omni.bias (1 x d).
void init_omni_params(ParameterStore& params, std::size_t hidden_dim, std::size_t total_clusters,
                      RandomStream& rng);

// Positive decay scalar softplus(raw) as a tape node.
Var decay_parameter(ParameterStore& params, Tape& tape, const std::string& raw_name);
double decay_value(const ParameterStore& params, const std::string& raw_name);

// LeakyReLU(W * concat(a1 * D1, a2 * D2) + bias), one row per cluster.
Var weight_and_fuse(Var first, Var second, Var weights_first, Var weights_second, Var W, Var bias);

enum class WeightingMode { kTrainable, kUniform };

struct DescriptorSet {
  FirstOrder first;
  SecondOrder second;
  Var weights_first;
  Var weights_second;
  Var fused;  // K x d
};

// Full descriptor pipeline for one target embedding.
DescriptorSet build_descriptors(Var target, const ClusterHierarchy& hierarchy, ParameterStore& params,
                                WeightingMode weighting);

// Extended adjacency: descriptor nodes appended after the `num_local` local
// nodes. Node mode links each descriptor to the target only; graph mode links
// each descriptor to every local node. The descriptor block stays zero.
Matrix extend_adjacency(const Matrix& local_adjacency, std::size_t target, std::size_t descriptors,
                        Mode mode);

struct ExtendedGraph {
  Var features;  // (N + K) x d, local rows first
  Matrix adjacency;
  std::size_t num_local = 0;
  std::size_t target = 0;

  std::size_t num_descriptors() const { return adjacency.rows() - num_local; }
};

// `local_hidden` holds the input-projected local features (N x d). `fused`
// may have zero rows, in which case the extension is a no-op.
ExtendedGraph extend_subgraph(Var local_hidden, const Matrix& local_adjacency, std::size_t target,
                              Var fused, Mode mode);

}  // namespace oepg
