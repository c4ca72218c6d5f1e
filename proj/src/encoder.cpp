#include "oepg/encoder.hpp"

#include <numeric>

#include "oepg/error.hpp"

namespace oepg {

std::string to_string(Mode mode) { return mode == Mode::kNode ? "node" : "graph"; }

Mode parse_mode(const std::string& text) {
  if (text == "node") return Mode::kNode;
  if (text == "graph") return Mode::kGraph;
  throw ConfigError("mode must be 'node' or 'graph', got '" + text + "'");
}

void validate(const EncoderConfig& config) {
  if (config.layers < 1) throw ConfigError("encoder needs at least one layer");
  if (config.hidden_dim < 1 || config.input_dim < 1) {
    throw ConfigError("encoder dimensions must be positive");
  }
}

void init_encoder_params(ParameterStore& params, const std::string& prefix,
                         const EncoderConfig& config, RandomStream& rng) {
  validate(config);
  const std::size_t d = config.hidden_dim;
  params.add(prefix + ".input.w", glorot_uniform(config.input_dim, d, rng));
  params.add(prefix + ".input.b", Matrix(1, d));
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string base = prefix + ".layer" + std::to_string(l);
    params.add(base + ".w1", glorot_uniform(d, d, rng));
    params.add(base + ".b1", Matrix(1, d));
    params.add(base + ".w2", glorot_uniform(d, d, rng));
    params.add(base + ".b2", Matrix(1, d));
  }
}

Var project_input(ParameterStore& params, const std::string& prefix, Var features) {
  Tape& t = *features.tape;
  Var w = t.parameter(params, prefix + ".input.w");
  Var b = t.parameter(params, prefix + ".input.b");
  if (features.cols() != w.rows()) {
    throw ShapeError(prefix + " input layer: features " + features.value().shape_string() +
                     " vs weight " + w.value().shape_string());
  }
  return ad::add_row(ad::matmul(features, w), b);
}

NodeEmbeddings propagate(ParameterStore& params, const std::string& prefix, std::size_t layers,
                         Var hidden, const AdjacencyList& neighbors) {
  Tape& t = *hidden.tape;
  NodeEmbeddings out;
  out.layers.push_back(hidden);
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string base = prefix + ".layer" + std::to_string(l);
    Var w1 = t.parameter(params, base + ".w1");
    Var b1 = t.parameter(params, base + ".b1");
    Var w2 = t.parameter(params, base + ".w2");
    Var b2 = t.parameter(params, base + ".b2");
    Var prev = out.layers.back();
    if (prev.cols() != w1.rows()) {
      throw ShapeError(base + ": input " + prev.value().shape_string() + " vs weight " +
                       w1.value().shape_string());
    }
    Var agg = ad::aggregate(prev, neighbors);
    Var hid = ad::relu(ad::add_row(ad::matmul(agg, w1), b1));
    out.layers.push_back(ad::add_row(ad::matmul(hid, w2), b2));
  }
  return out;
}

NodeEmbeddings encode(ParameterStore& params, const std::string& prefix, std::size_t layers,
                      Var features, const Matrix& adjacency) {
  if (adjacency.rows() != features.rows() || adjacency.cols() != features.rows()) {
    throw ShapeError(prefix + ": adjacency " + adjacency.shape_string() + " vs " +
                     std::to_string(features.rows()) + " feature rows");
  }
  Var hidden = project_input(params, prefix, features);
  return propagate(params, prefix, layers, hidden, adjacency_to_lists(adjacency));
}

Var readout(const NodeEmbeddings& embeddings, std::span<const std::size_t> subset) {
  if (subset.empty()) throw ContractError("readout over an empty node subset");
  return ad::mean_rows(embeddings.final(), subset);
}

Var target_embedding(Tape& tape, ParameterStore& params, const std::string& prefix,
                     const EncoderConfig& config, const EgoSubgraph& subgraph) {
  Var x = tape.constant(subgraph.features);
  NodeEmbeddings emb = encode(params, prefix, config.layers, x, subgraph.adjacency);
  if (config.mode == Mode::kNode) {
    const std::size_t idx[] = {subgraph.target};
    return ad::select_rows(emb.final(), idx);
  }
  std::vector<std::size_t> all(subgraph.num_nodes());
  std::iota(all.begin(), all.end(), 0);
  return readout(emb, all);
}

}  // namespace oepg
