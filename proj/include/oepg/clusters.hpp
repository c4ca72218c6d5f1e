#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "oepg/matrix.hpp"
#include "oepg/random.hpp"

namespace oepg {

// Multi-granular centroids C_{s,h}. centroids[h] is S_h x d. Flat index
// order is hierarchy-major: all of h=0 (s ascending), then h=1, ...
struct ClusterHierarchy {
  std::vector<std::size_t> scales;
  std::vector<Matrix> centroids;

  std::size_t hierarchies() const { return scales.size(); }
  std::size_t total_clusters() const;
  std::size_t dim() const { return centroids.empty() ? 0 : centroids.front().cols(); }
  std::size_t flat_index(std::size_t h, std::size_t s) const;
  // All centroids stacked in flat order, K x d.
  Matrix stacked() const;
};

void validate_scales(std::span<const std::size_t> scales);

struct KMeansOptions {
  std::size_t max_iterations = 100;
  double tolerance = 1e-6;
};

// Lloyd's algorithm with k-means++ seeding. Returns k x d centroids.
Matrix kmeans(const Matrix& points, std::size_t k, RandomStream& rng, KMeansOptions options = {});

// Independent k-means per hierarchy.
ClusterHierarchy init_hierarchy(const Matrix& embeddings, std::span<const std::size_t> scales,
                                std::uint64_t seed);

// Cosine-closest centroid per hierarchy; ties go to the lowest index.
std::vector<std::size_t> assign(std::span<const double> embedding, const ClusterHierarchy& hierarchy);

// Per-(h, s) queues of detached embeddings with a shared budget.
struct ClusterQueues {
  std::size_t budget = 4;
  std::vector<std::vector<std::vector<std::vector<double>>>> queues;

  static ClusterQueues for_hierarchy(const ClusterHierarchy& hierarchy, std::size_t budget);
  std::vector<std::vector<double>>& at(std::size_t h, std::size_t s) { return queues[h][s]; }
  const std::vector<std::vector<double>>& at(std::size_t h, std::size_t s) const { return queues[h][s]; }
  std::size_t max_length() const;
  void clear();
};

// C <- m C + ((1 - m) / B) sum_i Q_i; the queue must hold exactly B entries.
std::vector<double> momentum_update(std::span<const double> centroid,
                                    const std::vector<std::vector<double>>& queue,
                                    std::size_t budget, double momentum);

struct EnqueueResult {
  std::vector<std::size_t> assigned;  // scale index per hierarchy
  std::vector<bool> updated;          // whether that cluster was refreshed
};

// Appends `embedding` to its assigned queue in every hierarchy and refreshes
// (then empties) any queue that reached the budget.
EnqueueResult enqueue_and_maybe_update(ClusterQueues& queues, ClusterHierarchy& hierarchy,
                                       std::span<const double> embedding, double momentum);

}  // namespace oepg
