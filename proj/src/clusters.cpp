#include "oepg/clusters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "oepg/error.hpp"

namespace oepg {

std::size_t ClusterHierarchy::total_clusters() const {
  std::size_t k = 0;
  for (std::size_t s : scales) k += s;
  return k;
}

std::size_t ClusterHierarchy::flat_index(std::size_t h, std::size_t s) const {
  std::size_t offset = 0;
  for (std::size_t i = 0; i < h; ++i) offset += scales[i];
  return offset + s;
}

Matrix ClusterHierarchy::stacked() const {
  Matrix out(total_clusters(), dim());
  std::size_t r = 0;
  for (const auto& c : centroids) {
    for (std::size_t s = 0; s < c.rows(); ++s, ++r) {
      std::copy_n(c.row(s).begin(), c.cols(), out.row(r).begin());
    }
  }
  return out;
}

void validate_scales(std::span<const std::size_t> scales) {
  if (scales.empty()) throw ConfigError("at least one hierarchy scale is required");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (scales[i] == 0) throw ConfigError("hierarchy scales must be positive");
    if (i > 0 && scales[i] >= scales[i - 1]) {
      throw ConfigError("hierarchy scales must be strictly decreasing");
    }
  }
}

namespace {

double sqdist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::size_t nearest(std::span<const double> p, const Matrix& centroids, double* best_out = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = sqdist(p, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (best_out) *best_out = best_d;
  return best;
}

Matrix kmeans_plus_plus(const Matrix& points, std::size_t k, RandomStream& rng) {
  const std::size_t n = points.rows();
  Matrix centroids(k, points.cols());
  std::size_t first = rng.below(n);
  std::copy_n(points.row(first).begin(), points.cols(), centroids.row(0).begin());
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sqdist(points.row(i), centroids.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total <= 0.0) {
      pick = rng.below(n);
    } else {
      double r = rng.uniform() * total;
      while (pick + 1 < n && r >= d2[pick]) {
        r -= d2[pick];
        ++pick;
      }
    }
    std::copy_n(points.row(pick).begin(), points.cols(), centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sqdist(points.row(i), centroids.row(c)));
  }
  return centroids;
}

}  // namespace

Matrix kmeans(const Matrix& points, std::size_t k, RandomStream& rng, KMeansOptions options) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  if (k == 0 || n < k) {
    throw ConfigError("k-means needs at least k=" + std::to_string(k) + " points, got " +
                      std::to_string(n));
  }
  Matrix centroids = kmeans_plus_plus(points, k, rng);
  std::vector<std::size_t> label(n);
  std::vector<double> dist(n);
  for (std::size_t iter = 0; iter < options.max_iterations; ++iter) {
    for (std::size_t i = 0; i < n; ++i) label[i] = nearest(points.row(i), centroids, &dist[i]);
    Matrix next(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto dst = next.row(label[i]);
      auto src = points.row(i);
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      ++counts[label[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Re-seed an empty cluster at the point farthest from its own centroid.
        const auto far = static_cast<std::size_t>(
            std::max_element(dist.begin(), dist.end()) - dist.begin());
        std::copy_n(points.row(far).begin(), d, next.row(c).begin());
        dist[far] = 0.0;
      } else {
        for (auto& v : next.row(c)) v /= static_cast<double>(counts[c]);
      }
    }
    double movement = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      movement = std::max(movement, std::sqrt(sqdist(next.row(c), centroids.row(c))));
    }
    centroids = std::move(next);
    if (movement < options.tolerance) break;
  }
  return centroids;
}

ClusterHierarchy init_hierarchy(const Matrix& embeddings, std::span<const std::size_t> scales,
                                std::uint64_t seed) {
  validate_scales(scales);
  if (embeddings.rows() < scales.front()) {
    throw ConfigError("cluster initialization needs at least " + std::to_string(scales.front()) +
                      " embeddings, got " + std::to_string(embeddings.rows()));
  }
  ClusterHierarchy hierarchy;
  hierarchy.scales.assign(scales.begin(), scales.end());
  RandomStream root(seed);
  for (std::size_t h = 0; h < scales.size(); ++h) {
    RandomStream rng = root.fork(h);
    hierarchy.centroids.push_back(kmeans(embeddings, scales[h], rng));
  }
  return hierarchy;
}

std::vector<std::size_t> assign(std::span<const double> embedding, const ClusterHierarchy& hierarchy) {
  if (embedding.size() != hierarchy.dim()) {
    throw ShapeError("assign: embedding dim " + std::to_string(embedding.size()) +
                     " vs centroid dim " + std::to_string(hierarchy.dim()));
  }
  const double en = norm(embedding);
  if (en == 0.0) throw NumericError("cannot assign a zero-norm embedding (cosine undefined)");
  std::vector<std::size_t> out;
  for (const auto& c : hierarchy.centroids) {
    std::size_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < c.rows(); ++s) {
      const double cn = norm(c.row(s));
      // A zero centroid has no direction; treat it as least similar.
      const double sim = cn == 0.0 ? -2.0 : dot(embedding, c.row(s)) / (en * cn);
      if (sim > best_sim) {
        best_sim = sim;
        best = s;
      }
    }
    out.push_back(best);
  }
  return out;
}

ClusterQueues ClusterQueues::for_hierarchy(const ClusterHierarchy& hierarchy, std::size_t budget) {
  if (budget == 0) throw ConfigError("queue budget must be positive");
  ClusterQueues q;
  q.budget = budget;
  for (std::size_t s : hierarchy.scales) q.queues.emplace_back(s);
  return q;
}

std::size_t ClusterQueues::max_length() const {
  std::size_t m = 0;
  for (const auto& h : queues) {
    for (const auto& q : h) m = std::max(m, q.size());
  }
  return m;
}

void ClusterQueues::clear() {
  for (auto& h : queues) {
    for (auto& q : h) q.clear();
  }
}

std::vector<double> momentum_update(std::span<const double> centroid,
                                    const std::vector<std::vector<double>>& queue,
                                    std::size_t budget, double momentum) {
  if (queue.size() != budget) {
    throw ContractError("momentum update needs a full queue: " + std::to_string(queue.size()) +
                        " of " + std::to_string(budget));
  }
  std::vector<double> sum(centroid.size(), 0.0);
  for (const auto& q : queue) {
    if (q.size() != centroid.size()) throw ShapeError("queued embedding dimension mismatch");
    for (std::size_t j = 0; j < q.size(); ++j) sum[j] += q[j];
  }
  const double w = (1.0 - momentum) / static_cast<double>(budget);
  std::vector<double> out(centroid.size());
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = momentum * centroid[j] + w * sum[j];
  return out;
}

EnqueueResult enqueue_and_maybe_update(ClusterQueues& queues, ClusterHierarchy& hierarchy,
                                       std::span<const double> embedding, double momentum) {
  EnqueueResult result;
  result.assigned = assign(embedding, hierarchy);
  for (std::size_t h = 0; h < hierarchy.hierarchies(); ++h) {
    const std::size_t s = result.assigned[h];
    auto& q = queues.at(h, s);
    q.emplace_back(embedding.begin(), embedding.end());
    const bool full = q.size() == queues.budget;
    if (full) {
      auto row = hierarchy.centroids[h].row(s);
      const auto next = momentum_update(row, q, queues.budget, momentum);
      std::copy(next.begin(), next.end(), row.begin());
      q.clear();
    }
    result.updated.push_back(full);
  }
  return result;
}

}  // namespace oepg
