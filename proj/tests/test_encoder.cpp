#include <doctest.h>

#include "oepg/encoder.hpp"
#include "oepg/error.hpp"
#include "oepg/graph.hpp"
#include "oepg/tape.hpp"

using namespace oepg;

namespace {

ParameterStore make_params(std::size_t d_in, std::size_t d, std::size_t layers, std::uint64_t seed = 1) {
  ParameterStore p;
  RandomStream rng(seed);
  init_encoder_params(p, "enc", {layers, d, d_in, Mode::kNode}, rng);
  return p;
}

void set_identity(ParameterStore& p, std::size_t layers) {
  p.value("enc.input.w") = Matrix::identity(p.value("enc.input.w").rows());
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string base = "enc.layer" + std::to_string(l);
    p.value(base + ".w1") = Matrix::identity(p.value(base + ".w1").rows());
    p.value(base + ".w2") = Matrix::identity(p.value(base + ".w2").rows());
  }
}

}  // namespace

TEST_CASE("isolated node with identity perceptrons returns its projection") {
  auto p = make_params(3, 3, 2);
  set_identity(p, 2);
  Tape t;
  Var x = t.constant(Matrix{{0.5, 1.0, 2.0}});
  const auto emb = encode(p, "enc", 2, x, Matrix(1, 1));
  CHECK(emb.final().value() == Matrix{{0.5, 1.0, 2.0}});
  CHECK(emb.final().value() == emb.layers[0].value());
}

TEST_CASE("automorphic nodes of a 4-cycle embed identically") {
  auto p = make_params(2, 8, 3);
  Tape t;
  Var x = t.constant(Matrix(4, 2, 0.3));
  Matrix adj(4, 4);
  for (std::size_t i = 0; i < 4; ++i) adj(i, (i + 1) % 4) = adj((i + 1) % 4, i) = 1.0;
  const Matrix out = encode(p, "enc", 3, x, adj).final().value();
  for (std::size_t i = 1; i < 4; ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) CHECK(out(i, j) == doctest::Approx(out(0, j)).epsilon(1e-14));
}

TEST_CASE("encoder shape mismatch names the layer") {
  auto p = make_params(2, 4, 2);
  p.value("enc.layer1.w1") = Matrix(3, 4);
  Tape t;
  try {
    encode(p, "enc", 2, t.constant(Matrix(2, 2, 1.0)), Matrix(2, 2));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("layer1") != std::string::npos);
  }
}

TEST_CASE("readout is a permutation-invariant mean") {
  Tape t;
  NodeEmbeddings e;
  e.layers.push_back(t.constant(Matrix{{0.0, 2.0}, {2.0, 0.0}, {5.0, 7.0}}));
  CHECK(readout(e, std::vector<std::size_t>{0, 1}).value() == Matrix{{1.0, 1.0}});
  CHECK(readout(e, std::vector<std::size_t>{2}).value() == Matrix{{5.0, 7.0}});
  const Matrix fwd = readout(e, std::vector<std::size_t>{0, 1, 2}).value();
  const Matrix rev = readout(e, std::vector<std::size_t>{2, 0, 1}).value();
  CHECK(max_abs_diff(fwd, rev) <= 1e-12);
  CHECK_THROWS_AS(readout(e, std::vector<std::size_t>{}), ContractError);
}

TEST_CASE("target embedding: node row and one-node graph agree") {
  auto p = make_params(2, 4, 2);
  Graph g;
  g.node_features = Matrix{{0.2, -0.4}};
  const EgoSubgraph sub = whole_graph(g);
  Tape t;
  const Matrix node = target_embedding(t, p, "enc", {2, 4, 2, Mode::kNode}, sub).value();
  const Matrix graph = target_embedding(t, p, "enc", {2, 4, 2, Mode::kGraph}, sub).value();
  const Matrix row0 = encode(p, "enc", 2, t.constant(g.node_features), sub.adjacency).final().value();
  CHECK(node == row0);
  CHECK(node == graph);
}

TEST_CASE("encode followed by readout passes a gradient check") {
  auto p = make_params(3, 4, 2, 5);
  RandomStream rng(8);
  Matrix feats(5, 3);
  for (auto& v : feats.data()) v = rng.normal();
  Matrix adj(5, 5);
  for (auto [u, v] : std::vector<Edge>{{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}, {1, 3}}) adj(u, v) = adj(v, u) = 1.0;
  LossFn loss = [&](ParameterStore& s) {
    s.zero_grad();
    Tape t;
    const auto emb = encode(s, "enc", 2, t.constant(feats), adj);
    Var r = readout(emb, std::vector<std::size_t>{0, 1, 2, 3, 4});
    Var out = ad::sum_all(ad::softplus(r));
    t.backward(out);
    return out.scalar();
  };
  CHECK(grad_check(loss, p, 1e-6).overall <= 1e-6);
}

TEST_CASE("encoder config validation") {
  CHECK_THROWS_AS(validate(EncoderConfig{0, 4, 2, Mode::kNode}), ConfigError);
  CHECK_THROWS_AS(validate(EncoderConfig{2, 0, 2, Mode::kNode}), ConfigError);
  CHECK(parse_mode("graph") == Mode::kGraph);
  CHECK_THROWS_AS(parse_mode("edge"), ConfigError);
}
