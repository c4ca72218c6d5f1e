#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "oepg/matrix.hpp"

namespace oepg {

using Edge = std::pair<std::size_t, std::size_t>;
using AdjacencyList = std::vector<std::vector<std::size_t>>;

// Undirected attributed graph. Edges are stored once with u < v, no
// self-loops, no duplicates.
struct Graph {
  Matrix node_features;
  std::vector<Edge> edges;
  std::optional<int> label;
  std::vector<int> node_labels;

  std::size_t num_nodes() const { return node_features.rows(); }
  std::size_t feature_dim() const { return node_features.cols(); }
  AdjacencyList adjacency_list() const;
};

// Sorts/deduplicates edges and checks bounds; throws SchemaError on violations.
void normalize_edges(Graph& g);

// Induced neighborhood of one node. Local index 0 is the target.
struct EgoSubgraph {
  std::size_t target = 0;
  std::vector<std::size_t> node_ids;
  Matrix features;
  Matrix adjacency;
  std::size_t hops = 0;

  std::size_t num_nodes() const { return node_ids.size(); }
};

// Whole graph as a subgraph (graph-level instances); target is local 0.
EgoSubgraph whole_graph(const Graph& g);

EgoSubgraph k_hop_subgraph(const Graph& g, std::size_t node, std::size_t k);

AdjacencyList adjacency_to_lists(const Matrix& adjacency);

enum class DatasetFormat { kJsonl, kEdgeList };

DatasetFormat detect_format(const std::filesystem::path& path);
std::vector<Graph> load_dataset(const std::filesystem::path& path, DatasetFormat format);
std::vector<Graph> load_dataset(const std::filesystem::path& path);
std::vector<Graph> parse_jsonl(const std::string& text);
std::vector<Graph> parse_edge_list(const std::string& text);
std::string to_jsonl(const std::vector<Graph>& graphs);
void save_jsonl(const std::vector<Graph>& graphs, const std::filesystem::path& path);

struct SbmSpec {
  std::size_t classes = 3;
  std::size_t nodes_per_class = 100;
  double p_in = 0.1;
  double p_out = 0.01;
  double feature_noise = 1.0;
  std::uint64_t seed = 0;
};

// Stochastic block model with one-hot class features plus Gaussian noise.
Graph generate_sbm(const SbmSpec& spec);

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  double label_ratio = 1.0;
  double imbalance_ratio = 1.0;
};

// Quantity + topology imbalanced training split with balanced evaluation sets.
// `adjacency` may be empty, in which case minority picks are uniform.
DatasetSplit make_imbalanced_split(const std::vector<int>& labels, const AdjacencyList& adjacency,
                                   double imbalance_ratio, double label_ratio, std::uint64_t seed);

}  // namespace oepg
