#include <doctest.h>

#include <cmath>

#include "oepg/ego_semantics.hpp"
#include "oepg/error.hpp"
#include "oepg/tape.hpp"

using namespace oepg;

namespace {

ClusterHierarchy random_hierarchy(std::vector<std::size_t> scales, std::size_t d, RandomStream& rng) {
  ClusterHierarchy h;
  h.scales = std::move(scales);
  for (auto s : h.scales) {
    Matrix c(s, d);
    for (auto& v : c.data()) v = rng.normal();
    h.centroids.push_back(c);
  }
  return h;
}

Matrix random_row(std::size_t d, RandomStream& rng) {
  Matrix m(1, d);
  for (auto& v : m.data()) v = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("first order: unit difference and coincident target") {
  ClusterHierarchy h;
  h.scales = {1};
  h.centroids = {Matrix{{0.0, 0.0}}};
  Tape t;
  auto f = first_order(t.constant(Matrix{{1.0, 0.0}}), h);
  CHECK(f.descriptors.value() == Matrix{{1.0, 0.0}});
  CHECK(f.raw_sqnorms.value()(0, 0) == 1.0);

  h.centroids = {Matrix{{0.3, -0.2}}};
  f = first_order(t.constant(Matrix{{0.3, -0.2}}), h);
  CHECK(f.descriptors.value() == Matrix{{0.0, 0.0}});
  CHECK(f.raw_sqnorms.value()(0, 0) == 0.0);
}

TEST_CASE("first order: 40 clusters in R^8 match a per-coordinate recomputation") {
  RandomStream rng(21);
  const auto h = random_hierarchy({16, 12, 8, 4}, 8, rng);
  const Matrix v = random_row(8, rng);
  Tape t;
  const auto f = first_order(t.constant(v), h);
  const Matrix c = h.stacked();
  REQUIRE(f.descriptors.rows() == 40);
  for (std::size_t k = 0; k < 40; ++k) {
    double sq = 0.0;
    for (std::size_t j = 0; j < 8; ++j) sq += (v(0, j) - c(k, j)) * (v(0, j) - c(k, j));
    CHECK(f.raw_sqnorms.value()(k, 0) == doctest::Approx(sq).epsilon(1e-13));
    double n = 0.0;
    for (std::size_t j = 0; j < 8; ++j) {
      const double expect = (v(0, j) - c(k, j)) / std::sqrt(sq);
      CHECK(std::abs(f.descriptors.value()(k, j) - expect) <= 1e-12);
      n += f.descriptors.value()(k, j) * f.descriptors.value()(k, j);
    }
    CHECK(std::sqrt(n) >= 1.0 - 1e-9);
    CHECK(std::sqrt(n) <= 1.0 + 1e-15);
  }
}

TEST_CASE("second order: singleton and orthogonal cases") {
  Tape t;
  auto s = second_order(t.constant(Matrix{{0.6, 0.8}}));
  CHECK(s.correlations.value()(0, 0) == doctest::Approx(1.0));
  CHECK(s.descriptors.value()(0, 0) == doctest::Approx(1.0));

  s = second_order(t.constant(Matrix{{1.0, 0.0}, {0.0, 1.0}}));
  CHECK(s.correlations.value() == Matrix{{1.0, 0.0}, {0.0, 1.0}});
  CHECK(s.descriptors.value() == Matrix{{1.0, 0.0}, {0.0, 1.0}});
}

TEST_CASE("second order matches a double-loop oracle") {
  RandomStream rng(2);
  const auto h = random_hierarchy({5, 4, 3}, 6, rng);
  Tape t;
  const auto f = first_order(t.constant(random_row(6, rng)), h);
  const auto s = second_order(f.descriptors);
  const Matrix& d = f.descriptors.value();
  const std::size_t k = d.rows();
  for (std::size_t a = 0; a < k; ++a) {
    std::vector<double> x(k, 0.0);
    double sq = 0.0;
    for (std::size_t b = 0; b < k; ++b) {
      for (std::size_t j = 0; j < d.cols(); ++j) x[b] += d(b, j) * d(a, j);
      sq += x[b] * x[b];
    }
    CHECK(std::abs(s.raw_sqnorms.value()(a, 0) - sq) <= 1e-12);
    for (std::size_t b = 0; b < k; ++b) {
      CHECK(std::abs(s.correlations.value()(a, b) - x[b]) <= 1e-12);
      CHECK(std::abs(s.descriptors.value()(a, b) - x[b] / std::sqrt(sq)) <= 1e-12);
    }
  }
}

TEST_CASE("omni normalization examples") {
  Tape t;
  Var w = omni_normalize(t.constant(Matrix{{0.1}, {0.5}}), t.constant(Matrix{{10.0}}));
  CHECK(w.value()(0, 0) == doctest::Approx(0.9820).epsilon(1e-4));
  CHECK(w.value()(1, 0) == doctest::Approx(0.0180).epsilon(1e-2));
  CHECK(w.value()(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(-4.0))).epsilon(1e-14));

  w = omni_normalize(t.constant(Matrix{{3.7}}), t.constant(Matrix{{123.0}}));
  CHECK(w.value()(0, 0) == 1.0);

  RandomStream rng(1);
  Matrix raw(40, 1);
  for (auto& v : raw.data()) v = rng.uniform(0.0, 4.0);
  w = omni_normalize(t.constant(raw), t.constant(Matrix{{1e-9}}));
  for (double v : w.value().data()) CHECK(std::abs(v - 1.0 / 40.0) <= 1e-6);

  CHECK_THROWS_AS(omni_normalize(t.constant(raw), t.constant(Matrix{{0.0}})), ContractError);
}

TEST_CASE("decay parameters start at one") {
  ParameterStore p;
  RandomStream rng(0);
  init_omni_params(p, 4, 6, rng);
  CHECK(decay_value(p, "omni.alpha_raw") == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(decay_value(p, "omni.beta_raw") == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(p.value("omni.W").rows() == 10);
  CHECK(p.value("omni.W").cols() == 4);
}

TEST_CASE("fusion matches a block-matrix oracle") {
  RandomStream rng(9);
  const std::size_t d = 4, k = 3;
  Matrix d1(k, d), d2(k, k), a1(k, 1), a2(k, 1), w(d + k, d), b(1, d);
  for (auto* m : {&d1, &d2, &a1, &a2, &w, &b})
    for (auto& v : m->data()) v = rng.normal();
  Tape t;
  const Matrix got =
      weight_and_fuse(t.constant(d1), t.constant(d2), t.constant(a1), t.constant(a2), t.constant(w), t.constant(b))
          .value();
  for (std::size_t s = 0; s < k; ++s)
    for (std::size_t j = 0; j < d; ++j) {
      double pre = b(0, j);
      for (std::size_t i = 0; i < d; ++i) pre += a1(s, 0) * d1(s, i) * w(i, j);
      for (std::size_t i = 0; i < k; ++i) pre += a2(s, 0) * d2(s, i) * w(d + i, j);
      const double expect = pre > 0 ? pre : kFusionSlope * pre;
      CHECK(std::abs(got(s, j) - expect) <= 1e-12);
    }

  const Matrix zero = weight_and_fuse(t.constant(d1), t.constant(d2), t.constant(a1), t.constant(a2),
                                      t.constant(Matrix(d + k, d)), t.constant(Matrix(1, d)))
                          .value();
  CHECK(zero == Matrix(k, d));

  // Zero weights on the second order: its block never reaches the output.
  Matrix w_alt = w;
  for (std::size_t i = d; i < d + k; ++i)
    for (std::size_t j = 0; j < d; ++j) w_alt(i, j) += 5.0;
  const Matrix a = weight_and_fuse(t.constant(d1), t.constant(d2), t.constant(a1), t.constant(Matrix(k, 1)),
                                   t.constant(w), t.constant(b)).value();
  const Matrix c = weight_and_fuse(t.constant(d1), t.constant(d2), t.constant(a1), t.constant(Matrix(k, 1)),
                                   t.constant(w_alt), t.constant(b)).value();
  CHECK(a == c);

  CHECK_THROWS_AS(weight_and_fuse(t.constant(d1), t.constant(d2), t.constant(a1), t.constant(a2),
                                  t.constant(Matrix(d, d)), t.constant(b)),
                  ShapeError);
}

TEST_CASE("extend: empty descriptor set leaves the adjacency unchanged") {
  Matrix adj{{0, 1, 0}, {1, 0, 1}, {0, 1, 0}};
  Tape t;
  const auto ext = extend_subgraph(t.constant(Matrix(3, 2, 1.0)), adj, 0, t.constant(Matrix(0, 2)), Mode::kNode);
  CHECK(ext.adjacency == adj);
  CHECK(ext.num_descriptors() == 0);
}

TEST_CASE("extend: node-level path with two descriptors") {
  Matrix adj{{0, 1, 0}, {1, 0, 1}, {0, 1, 0}};
  Tape t;
  const auto ext = extend_subgraph(t.constant(Matrix(3, 2, 1.0)), adj, 0, t.constant(Matrix(2, 2, 0.5)), Mode::kNode);
  Matrix expect(5, 5);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) expect(i, j) = adj(i, j);
  expect(0, 3) = expect(3, 0) = expect(0, 4) = expect(4, 0) = 1.0;
  CHECK(ext.adjacency == expect);
  CHECK(ext.features.rows() == 5);
  CHECK(ext.features.value()(4, 1) == 0.5);
}

TEST_CASE("extend: graph level links descriptors to every local node") {
  Matrix adj{{0, 1}, {1, 0}};
  const Matrix ext = extend_adjacency(adj, 0, 2, Mode::kGraph);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 2; k < 4; ++k) CHECK(ext(i, k) == 1.0);
  CHECK(ext(2, 3) == 0.0);
}

TEST_CASE("descriptor pipeline passes a gradient check") {
  RandomStream rng(14);
  const auto h = random_hierarchy({3, 2}, 4, rng);
  ParameterStore p;
  init_omni_params(p, 4, 5, rng);
  p.add("v", random_row(4, rng));
  LossFn loss = [&](ParameterStore& s) {
    s.zero_grad();
    Tape t;
    const auto ds = build_descriptors(t.parameter(s, "v"), h, s, WeightingMode::kTrainable);
    Var out = ad::sum_all(ad::softplus(ds.fused));
    t.backward(out);
    return out.scalar();
  };
  CHECK(grad_check(loss, p, 1e-6).overall <= 1e-5);
}
