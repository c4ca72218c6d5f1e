#pragma once

#include <span>
#include <string>
#include <vector>

#include "oepg/graph.hpp"
#include "oepg/params.hpp"
#include "oepg/random.hpp"
#include "oepg/tape.hpp"

namespace oepg {

enum class Mode { kNode, kGraph };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

struct EncoderConfig {
  std::size_t layers = 3;
  std::size_t hidden_dim = 32;
  std::size_t input_dim = 0;
  Mode mode = Mode::kNode;
};

void validate(const EncoderConfig& config);

// Registers "{prefix}.input.{w,b}" (d_in -> d projection) and
// "{prefix}.layer{i}.{w1,b1,w2,b2}" for every message-passing layer.
void init_encoder_params(ParameterStore& params, const std::string& prefix,
                         const EncoderConfig& config, RandomStream& rng);

// Per-layer node embeddings; layers[0] is the input projection.
struct NodeEmbeddings {
  std::vector<Var> layers;
  Var final() const { return layers.back(); }
};

// Linear input projection of raw node features into the hidden space.
Var project_input(ParameterStore& params, const std::string& prefix, Var features);

// Sum-aggregation message passing with a 2-layer ReLU perceptron per layer:
//   V_l = MLP_l(V_{l-1} + sum_{u in N(v)} V^u_{l-1}).
// `hidden` is already in R^d (projected features, possibly with descriptor rows).
NodeEmbeddings propagate(ParameterStore& params, const std::string& prefix, std::size_t layers,
                         Var hidden, const AdjacencyList& neighbors);

// Input projection followed by propagate().
NodeEmbeddings encode(ParameterStore& params, const std::string& prefix, std::size_t layers,
                      Var features, const Matrix& adjacency);

// Mean of final-layer rows over `subset`.
Var readout(const NodeEmbeddings& embeddings, std::span<const std::size_t> subset);

// Target row (node mode) or mean over all nodes (graph mode) of an encode()
// pass over the unextended subgraph.
Var target_embedding(Tape& tape, ParameterStore& params, const std::string& prefix,
                     const EncoderConfig& config, const EgoSubgraph& subgraph);

}  // namespace oepg
