#include <doctest.h>

#include <cmath>
#include <limits>

#include "oepg/clusters.hpp"
#include "oepg/error.hpp"

using namespace oepg;

namespace {

double sse(const Matrix& pts, const std::vector<int>& side, const Matrix& centers) {
  double s = 0.0;
  for (std::size_t i = 0; i < pts.rows(); ++i)
    for (std::size_t j = 0; j < pts.cols(); ++j) {
      const double d = pts(i, j) - centers(static_cast<std::size_t>(side[i]), j);
      s += d * d;
    }
  return s;
}

// Exhaustive 2-means over every bipartition of up to ~12 points.
Matrix brute_two_means(const Matrix& pts) {
  const std::size_t n = pts.rows();
  double best = std::numeric_limits<double>::infinity();
  Matrix best_c;
  for (std::uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
    std::vector<int> side(n);
    Matrix c(2, pts.cols());
    double cnt[2] = {0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      side[i] = (mask >> i) & 1;
      cnt[side[i]] += 1;
      for (std::size_t j = 0; j < pts.cols(); ++j) c(side[i], j) += pts(i, j);
    }
    for (int k = 0; k < 2; ++k)
      for (std::size_t j = 0; j < pts.cols(); ++j) c(k, j) /= cnt[k];
    const double s = sse(pts, side, c);
    if (s < best) {
      best = s;
      best_c = c;
    }
  }
  return best_c;
}

}  // namespace

TEST_CASE("identical points collapse every centroid onto them") {
  Matrix pts(10, 3);
  for (std::size_t i = 0; i < 10; ++i) {
    pts(i, 0) = 1.0;
    pts(i, 1) = -2.0;
    pts(i, 2) = 0.5;
  }
  const std::vector<std::size_t> scales{4, 2};
  const auto h = init_hierarchy(pts, scales, 3);
  for (const auto& c : h.centroids)
    for (std::size_t s = 0; s < c.rows(); ++s) CHECK(c(s, 1) == -2.0);
}

TEST_CASE("two blobs match the exhaustive 2-means partition") {
  RandomStream rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix pts(12, 2);
    for (std::size_t i = 0; i < 12; ++i) {
      const double off = i < 6 ? -10.0 : 10.0;
      pts(i, 0) = off + rng.normal();
      pts(i, 1) = rng.normal();
    }
    const std::vector<std::size_t> scales{2};
    const auto h = init_hierarchy(pts, scales, trial);
    const Matrix ref = brute_two_means(pts);
    const Matrix& got = h.centroids[0];
    const double direct = max_abs_diff(got, ref);
    const double swapped = max_abs_diff(select_rows(got, std::vector<std::size_t>{1, 0}), ref);
    CHECK(std::min(direct, swapped) <= 1e-6);
  }
}

TEST_CASE("kmeans rejects fewer points than clusters") {
  RandomStream rng(0);
  CHECK_THROWS_AS(kmeans(Matrix(2, 2, 1.0), 3, rng), ConfigError);
  const std::vector<std::size_t> bad{3, 4};
  CHECK_THROWS_AS(validate_scales(bad), ConfigError);
}

TEST_CASE("assign: exact centroid match, ties and zero norm") {
  ClusterHierarchy h;
  h.scales = {4};
  h.centroids = {Matrix{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0, 2, 0}}};
  // (0,1,0) and (0,2,0) are both cosine 1; the lower index wins.
  CHECK(assign(std::vector<double>{0, 3, 0}, h) == std::vector<std::size_t>{1});
  CHECK(assign(std::vector<double>{0, 0, 1}, h) == std::vector<std::size_t>{2});
  ClusterHierarchy same;
  same.scales = {3};
  same.centroids = {Matrix(3, 2, 1.0)};
  CHECK(assign(std::vector<double>{0.3, -1.0}, same) == std::vector<std::size_t>{0});
  CHECK_THROWS_AS(assign(std::vector<double>{0, 0, 0}, h), NumericError);
}

TEST_CASE("assign matches an exhaustive cosine scan") {
  RandomStream rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    ClusterHierarchy h;
    h.scales = {16, 12, 8, 4};
    for (auto s : h.scales) {
      Matrix c(s, 6);
      for (auto& v : c.data()) v = rng.normal();
      h.centroids.push_back(c);
    }
    std::vector<double> e(6);
    for (auto& v : e) v = rng.normal();
    const auto got = assign(e, h);
    for (std::size_t k = 0; k < h.hierarchies(); ++k) {
      std::size_t best = 0;
      double best_cos = -2.0;
      for (std::size_t s = 0; s < h.scales[k]; ++s) {
        double dp = 0, na = 0, nb = 0;
        for (std::size_t j = 0; j < 6; ++j) {
          dp += e[j] * h.centroids[k](s, j);
          na += e[j] * e[j];
          nb += h.centroids[k](s, j) * h.centroids[k](s, j);
        }
        const double c = dp / std::sqrt(na * nb);
        if (c > best_cos) best_cos = c, best = s;
      }
      CHECK(got[k] == best);
    }
  }
}

TEST_CASE("momentum update examples") {
  const std::vector<double> c{1.0, 0.0};
  const std::vector<std::vector<double>> q{{0.0, 1.0}, {0.0, 3.0}};
  CHECK(momentum_update(c, q, 2, 0.5) == std::vector<double>{0.5, 1.0});
  CHECK(momentum_update(c, q, 2, 1.0) == c);
  CHECK_THROWS_AS(momentum_update(c, q, 3, 0.5), ContractError);
}

TEST_CASE("budget of one updates on every enqueue") {
  ClusterHierarchy h;
  h.scales = {2};
  h.centroids = {Matrix{{1, 0}, {0, 1}}};
  auto q = ClusterQueues::for_hierarchy(h, 1);
  for (int i = 0; i < 5; ++i) {
    const auto r = enqueue_and_maybe_update(q, h, std::vector<double>{1.0, 0.1}, 0.9);
    CHECK(r.updated[0]);
    CHECK(q.max_length() == 0);
  }
}

TEST_CASE("eight enqueues into one cluster with budget four trigger two updates") {
  ClusterHierarchy h;
  h.scales = {2};
  h.centroids = {Matrix{{1, 0}, {0, 1}}};
  auto q = ClusterQueues::for_hierarchy(h, 4);
  int updates = 0;
  for (int i = 0; i < 8; ++i) {
    const auto r = enqueue_and_maybe_update(q, h, std::vector<double>{1.0, 0.05 * i}, 0.999);
    CHECK(r.assigned[0] == 0);
    updates += r.updated[0];
  }
  CHECK(updates == 2);
  CHECK(q.at(0, 0).empty());
}
