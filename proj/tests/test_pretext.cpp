#include <doctest.h>

#include <cmath>
#include <set>

#include "oepg/ego_semantics.hpp"
#include "oepg/error.hpp"
#include "oepg/pretext.hpp"
#include "oepg/tape.hpp"

using namespace oepg;

namespace {

Matrix random_local(std::size_t n, double p, RandomStream& rng) {
  Matrix a(n, n);
  for (std::size_t i = 1; i < n; ++i) {
    const std::size_t j = rng.below(i);  // spanning tree keeps it connected
    a(i, j) = a(j, i) = 1.0;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (rng.bernoulli(p)) a(i, j) = a(j, i) = 1.0;
  return a;
}

bool connected(const Matrix& adj, const std::vector<std::size_t>& nodes) {
  if (nodes.empty()) return true;
  std::set<std::size_t> in(nodes.begin(), nodes.end());
  std::set<std::size_t> seen{nodes[0]};
  std::vector<std::size_t> stack{nodes[0]};
  while (!stack.empty()) {
    const auto u = stack.back();
    stack.pop_back();
    for (auto v : in)
      if (adj(u, v) != 0.0 && seen.insert(v).second) stack.push_back(v);
  }
  return seen.size() == in.size();
}

std::size_t descriptor_edges(const Matrix& adj, std::size_t num_local) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < num_local; ++i)
    for (std::size_t k = num_local; k < adj.cols(); ++k) n += adj(i, k) != 0.0;
  return n;
}

double cos(const Matrix& a, const Matrix& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t j = 0; j < a.cols(); ++j) {
    d += a(0, j) * b(0, j);
    na += a(0, j) * a(0, j);
    nb += b(0, j) * b(0, j);
  }
  return d / std::sqrt(na * nb);
}

}  // namespace

TEST_CASE("augment with zero drops is the identity") {
  RandomStream rng(1);
  const Matrix adj = extend_adjacency(random_local(6, 0.3, rng), 0, 4, Mode::kNode);
  RandomStream r(5);
  CHECK(augment(adj, 6, 0, {0.0, 0.0}, r) == adj);
}

TEST_CASE("augment removes the requested counts") {
  RandomStream rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix local = random_local(7, 0.3, rng);
    std::size_t local_edges = 0;
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = i + 1; j < 7; ++j) local_edges += local(i, j) != 0.0;
    const Matrix adj = extend_adjacency(local, 0, 4, Mode::kNode);
    RandomStream r(static_cast<std::uint64_t>(trial));
    const Matrix view = augment(adj, 7, 0, {0.2, 0.5}, r);
    CHECK(descriptor_edges(view, 7) == 2);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = i + 1; j < 7; ++j) kept += view(i, j) != 0.0;
    CHECK(kept >= local_edges - local_edges / 5);
    CHECK(view == transpose(view));
    double target_degree = 0.0;
    for (std::size_t j = 0; j < view.cols(); ++j) target_degree += view(0, j);
    CHECK(target_degree > 0.0);
  }
}

TEST_CASE("augment is deterministic per seed") {
  RandomStream rng(3);
  const Matrix adj = extend_adjacency(random_local(8, 0.4, rng), 0, 5, Mode::kNode);
  RandomStream a(77), b(77);
  CHECK(augment(adj, 8, 0, {0.3, 0.4}, a) == augment(adj, 8, 0, {0.3, 0.4}, b));
}

TEST_CASE("minimal mask on a 3-node subgraph") {
  Matrix local{{0, 1, 0}, {1, 0, 1}, {0, 1, 0}};
  const std::size_t k = 4;
  const Matrix adj = extend_adjacency(local, 0, k, Mode::kNode);
  RandomStream r(1);
  // ceil(0.3 * 3) = 1 local node, ceil(0.25 * 4) = 1 descriptor
  const auto part = mask_substructure(adj, 3, 0, {0.3, 0.25}, r);
  std::size_t rem_local = 0, rem_desc = 0;
  for (auto i : part.remainder) (i < 3 ? rem_local : rem_desc)++;
  CHECK(rem_local == 2);
  CHECK(rem_desc == k - 1);
  CHECK(part.masked.size() == 2);
}

TEST_CASE("mask partitions the extended graph and keeps the block connected") {
  RandomStream rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix local = random_local(30, 0.05, rng);
    const Matrix adj = extend_adjacency(local, 0, 6, Mode::kNode);
    RandomStream r(static_cast<std::uint64_t>(trial));
    const auto part = mask_substructure(adj, 30, 0, {0.25, 0.25}, r);
    std::set<std::size_t> all;
    for (auto i : part.remainder) CHECK(all.insert(i).second);
    for (auto i : part.masked) CHECK(all.insert(i).second);
    CHECK(all.size() == 36);
    CHECK(std::count(part.remainder.begin(), part.remainder.end(), 0u) == 1);
    std::vector<std::size_t> masked_local;
    for (auto i : part.masked)
      if (i < 30) masked_local.push_back(i);
    CHECK(masked_local.size() >= 1);
    CHECK(connected(adj, masked_local));
  }
}

TEST_CASE("mask rejects graphs that are too small") {
  RandomStream r(0);
  CHECK_THROWS_AS(mask_substructure(extend_adjacency(Matrix(1, 1), 0, 2, Mode::kNode), 1, 0, {}, r), ContractError);
  CHECK_THROWS_AS(mask_substructure(Matrix{{0, 1}, {1, 0}}, 2, 0, {}, r), ContractError);
}

TEST_CASE("contrastive loss examples") {
  Tape t;
  std::vector<Var> a{t.constant(Matrix{{1.0, 0.0}})};
  std::vector<Var> p{t.constant(Matrix{{1.0, 0.0}})};
  CHECK(contrastive_loss(a, p, {{}}).scalar() == doctest::Approx(-1.0));
  CHECK(contrastive_loss(a, p, {{t.constant(Matrix{{0.0, 2.0}})}}).scalar() == doctest::Approx(-1.0));
  CHECK_THROWS_AS(contrastive_loss(std::vector<Var>{t.constant(Matrix{{0.0, 0.0}})}, p, {{}}), NumericError);
}

TEST_CASE("contrastive loss matches a scalar oracle on a batch of four") {
  RandomStream rng(6);
  Tape t;
  std::vector<Matrix> am, pm;
  std::vector<Var> a, p;
  for (int i = 0; i < 4; ++i) {
    Matrix x(1, 5), y(1, 5);
    for (auto& v : x.data()) v = rng.normal();
    for (auto& v : y.data()) v = rng.normal();
    am.push_back(x);
    pm.push_back(y);
    a.push_back(t.constant(x));
    p.push_back(t.constant(y));
  }
  const auto negs = in_batch_negatives(p);
  double pos = 0.0, neg = 0.0;
  for (int i = 0; i < 4; ++i) {
    pos += cos(am[i], pm[i]);
    for (int j = 0; j < 4; ++j)
      if (j != i) neg += cos(am[i], pm[j]);
  }
  const double expect = -pos / 4.0 + neg / 12.0;
  CHECK(std::abs(contrastive_loss(a, p, negs).scalar() - expect) <= 1e-12);
}

TEST_CASE("predictive loss examples") {
  Tape t;
  std::vector<Var> e1{t.constant(Matrix{{1.0, 0.0}})};
  std::vector<Var> e2{t.constant(Matrix{{0.0, 1.0}})};
  CHECK(predictive_loss(e1, e2, {{}}).scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  std::vector<Var> big{t.constant(Matrix{{100.0, 0.0}})};
  CHECK(predictive_loss(big, big, {{}}).scalar() < 1e-12);
}

TEST_CASE("predictive loss matches a direct oracle") {
  RandomStream rng(8);
  Tape t;
  std::vector<Matrix> m1, m2;
  std::vector<Var> e1, e2;
  for (int i = 0; i < 3; ++i) {
    Matrix x(1, 4), y(1, 4);
    for (auto& v : x.data()) v = rng.normal();
    for (auto& v : y.data()) v = rng.normal();
    m1.push_back(x);
    m2.push_back(y);
    e1.push_back(t.constant(x));
    e2.push_back(t.constant(y));
  }
  const auto negs = in_batch_negatives(e2);
  auto dotp = [](const Matrix& a, const Matrix& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) s += a(0, j) * b(0, j);
    return s;
  };
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  double expect = 0.0;
  for (int i = 0; i < 3; ++i) {
    double term = -std::log(sig(dotp(m1[i], m2[i])));
    double n = 0.0;
    for (int j = 0; j < 3; ++j)
      if (j != i) n += std::log(sig(-dotp(m1[i], m2[j])));
    expect += term - n / 2.0;
  }
  expect /= 3.0;
  CHECK(std::abs(predictive_loss(e1, e2, negs).scalar() - expect) <= 1e-12);
}

TEST_CASE("spec validation") {
  CHECK_THROWS_AS(validate(AugmentationSpec{-0.1, 0.0}), ConfigError);
  CHECK_THROWS_AS(validate(MaskSpec{1.5, 0.1}), ConfigError);
}
