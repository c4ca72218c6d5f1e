#include "oepg/pretext.hpp"

#include <algorithm>
#include <cmath>

#include "oepg/error.hpp"

namespace oepg {

void validate(const AugmentationSpec& spec) {
  auto ok = [](double f) { return f >= 0.0 && f < 1.0; };
  if (!ok(spec.local_drop) || !ok(spec.global_drop)) {
    throw ConfigError("augmentation drop fractions must lie in [0, 1)");
  }
}

void validate(const MaskSpec& spec) {
  auto ok = [](double f) { return f > 0.0 && f < 1.0; };
  if (!ok(spec.local_mask_fraction) || !ok(spec.descriptor_mask_fraction)) {
    throw ConfigError("mask fractions must lie in (0, 1)");
  }
}

namespace {

template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t count, RandomStream& rng) {
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < count; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  pool.resize(count);
  return pool;
}

bool has_neighbor(const Matrix& a, std::size_t node) {
  for (std::size_t j = 0; j < a.cols(); ++j) {
    if (a(node, j) != 0.0) return true;
  }
  return false;
}

}  // namespace

Matrix augment(const Matrix& adjacency, std::size_t num_local, std::size_t target,
               const AugmentationSpec& spec, RandomStream& rng) {
  validate(spec);
  const std::size_t n = adjacency.rows();
  if (num_local > n || target >= num_local) throw ContractError("augment: bad node layout");
  std::vector<std::pair<std::size_t, std::size_t>> local_edges;
  for (std::size_t i = 0; i < num_local; ++i) {
    for (std::size_t j = i + 1; j < num_local; ++j) {
      if (adjacency(i, j) != 0.0) local_edges.emplace_back(i, j);
    }
  }
  std::vector<std::size_t> descriptors;
  for (std::size_t k = num_local; k < n; ++k) descriptors.push_back(k);

  const auto local_count = static_cast<std::size_t>(std::floor(spec.local_drop * static_cast<double>(local_edges.size())));
  const auto global_count = static_cast<std::size_t>(std::floor(spec.global_drop * static_cast<double>(descriptors.size())));
  if (local_count == 0 && global_count == 0) return adjacency;

  const bool target_connected = has_neighbor(adjacency, target);
  constexpr int kMaxAttempts = 64;
  Matrix view;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    view = adjacency;
    for (const auto& [i, j] : sample_without_replacement(local_edges, local_count, rng)) {
      view(i, j) = 0.0;
      view(j, i) = 0.0;
    }
    for (std::size_t k : sample_without_replacement(descriptors, global_count, rng)) {
      for (std::size_t i = 0; i < n; ++i) {
        view(i, k) = 0.0;
        view(k, i) = 0.0;
      }
    }
    if (!target_connected || has_neighbor(view, target)) return view;
  }
  // Every sampled drop set isolated the target: restore its first original edge.
  for (std::size_t j = 0; j < n; ++j) {
    if (adjacency(target, j) != 0.0) {
      view(target, j) = 1.0;
      view(j, target) = 1.0;
      break;
    }
  }
  return view;
}

MaskedPartition mask_substructure(const Matrix& adjacency, std::size_t num_local, std::size_t target,
                                  const MaskSpec& spec, RandomStream& rng) {
  validate(spec);
  const std::size_t n = adjacency.rows();
  if (num_local < 2 || n <= num_local) {
    throw ContractError("mask_substructure needs >= 2 local nodes and >= 1 descriptor");
  }
  if (target >= num_local) throw ContractError("mask_substructure: target outside local block");
  const std::size_t k = n - num_local;
  const auto local_want = std::min<std::size_t>(
      num_local - 1, static_cast<std::size_t>(std::ceil(spec.local_mask_fraction * static_cast<double>(num_local))));
  const auto desc_want = std::min<std::size_t>(
      k, static_cast<std::size_t>(std::ceil(spec.descriptor_mask_fraction * static_cast<double>(k))));

  // Breadth-first growth from a random non-target seed, never through the target.
  std::size_t seed = rng.below(num_local - 1);
  if (seed >= target) ++seed;
  std::vector<bool> in_mask(n, false);
  std::vector<std::size_t> frontier{seed};
  in_mask[seed] = true;
  std::size_t taken = 1;
  for (std::size_t head = 0; head < frontier.size() && taken < local_want; ++head) {
    const std::size_t u = frontier[head];
    for (std::size_t v = 0; v < num_local && taken < local_want; ++v) {
      if (v == target || in_mask[v] || adjacency(u, v) == 0.0) continue;
      in_mask[v] = true;
      frontier.push_back(v);
      ++taken;
    }
  }
  std::vector<std::size_t> descriptors;
  for (std::size_t i = num_local; i < n; ++i) descriptors.push_back(i);
  for (std::size_t d : sample_without_replacement(descriptors, desc_want, rng)) in_mask[d] = true;

  MaskedPartition part;
  for (std::size_t i = 0; i < n; ++i) (in_mask[i] ? part.masked : part.remainder).push_back(i);
  return part;
}

Matrix induced_adjacency(const Matrix& adjacency, std::span<const std::size_t> nodes) {
  Matrix out(nodes.size(), nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = 0; j < nodes.size(); ++j) out(i, j) = adjacency(nodes[i], nodes[j]);
  }
  return out;
}

Var contrastive_loss(std::span<const Var> anchors, std::span<const Var> positives,
                     const std::vector<std::vector<Var>>& negatives) {
  if (anchors.empty() || anchors.size() != positives.size()) {
    throw ContractError("contrastive_loss needs matching, non-empty anchor/positive lists");
  }
  std::vector<Var> pos_terms;
  std::vector<Var> neg_terms;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    pos_terms.push_back(ad::cosine(anchors[i], positives[i]));
    if (i < negatives.size()) {
      for (const Var& n : negatives[i]) neg_terms.push_back(ad::cosine(anchors[i], n));
    }
  }
  Var loss = ad::scale(ad::sum_scalars(pos_terms), -1.0 / static_cast<double>(pos_terms.size()));
  if (!neg_terms.empty()) {
    loss = ad::add(loss, ad::scale(ad::sum_scalars(neg_terms), 1.0 / static_cast<double>(neg_terms.size())));
  }
  return loss;
}

Var predictive_loss(std::span<const Var> remainder_embeddings, std::span<const Var> masked_embeddings,
                    const std::vector<std::vector<Var>>& negatives) {
  if (remainder_embeddings.empty() || remainder_embeddings.size() != masked_embeddings.size()) {
    throw ContractError("predictive_loss needs matching, non-empty embedding lists");
  }
  std::vector<Var> terms;
  for (std::size_t i = 0; i < remainder_embeddings.size(); ++i) {
    Var e1 = remainder_embeddings[i];
    Var term = ad::neg(ad::log_sigmoid(ad::dot(e1, masked_embeddings[i])));
    if (i < negatives.size() && !negatives[i].empty()) {
      std::vector<Var> neg;
      for (const Var& n : negatives[i]) neg.push_back(ad::log_sigmoid(ad::neg(ad::dot(e1, n))));
      term = ad::sub(term, ad::scale(ad::sum_scalars(neg), 1.0 / static_cast<double>(neg.size())));
    }
    terms.push_back(term);
  }
  return ad::scale(ad::sum_scalars(terms), 1.0 / static_cast<double>(terms.size()));
}

std::vector<std::vector<Var>> in_batch_negatives(std::span<const Var> views) {
  std::vector<std::vector<Var>> out(views.size());
  for (std::size_t i = 0; i < views.size(); ++i) {
    for (std::size_t k = 0; k < views.size(); ++k) {
      if (k != i) out[i].push_back(views[k]);
    }
  }
  return out;
}

}  // namespace oepg
