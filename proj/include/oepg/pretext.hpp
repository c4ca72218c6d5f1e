#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "oepg/matrix.hpp"
#include "oepg/random.hpp"
#include "oepg/tape.hpp"

namespace oepg {

struct AugmentationSpec {
  double local_drop = 0.2;
  double global_drop = 0.2;
};

struct MaskSpec {
  double local_mask_fraction = 0.25;
  double descriptor_mask_fraction = 0.25;
};

void validate(const AugmentationSpec& spec);
void validate(const MaskSpec& spec);

// Drops floor(local_drop * |local edges|) local edges and detaches
// floor(global_drop * K) descriptor nodes, resampling when the target would
// lose every neighbor. Rows/cols >= num_local are descriptor nodes.
Matrix augment(const Matrix& adjacency, std::size_t num_local, std::size_t target,
               const AugmentationSpec& spec, RandomStream& rng);

struct MaskedPartition {
  std::vector<std::size_t> remainder;  // G1, always contains the target
  std::vector<std::size_t> masked;     // G2: connected local block + descriptors
};

MaskedPartition mask_substructure(const Matrix& adjacency, std::size_t num_local, std::size_t target,
                                  const MaskSpec& spec, RandomStream& rng);

// Adjacency induced on `nodes` (in the listed order).
Matrix induced_adjacency(const Matrix& adjacency, std::span<const std::size_t> nodes);

// -mean_i cos(a_i, p_i) + mean over all (i, n) of cos(a_i, n), n in negatives[i].
Var contrastive_loss(std::span<const Var> anchors, std::span<const Var> positives,
                     const std::vector<std::vector<Var>>& negatives);

// mean_i [ -log s(e1_i . e2_i) - mean_n log(1 - s(e1_i . n)) ], n in negatives[i].
// With no negatives for an anchor only the positive term remains.
Var predictive_loss(std::span<const Var> remainder_embeddings, std::span<const Var> masked_embeddings,
                    const std::vector<std::vector<Var>>& negatives);

// negatives[i] = every `views[k]` with k != i.
std::vector<std::vector<Var>> in_batch_negatives(std::span<const Var> views);

}  // namespace oepg
