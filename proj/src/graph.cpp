#include "oepg/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "oepg/error.hpp"
#include "oepg/random.hpp"

namespace oepg {

using json = nlohmann::json;

AdjacencyList Graph::adjacency_list() const {
  AdjacencyList adj(num_nodes());
  for (const auto& [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  for (auto& n : adj) std::sort(n.begin(), n.end());
  return adj;
}

void normalize_edges(Graph& g) {
  const std::size_t n = g.num_nodes();
  for (auto& [u, v] : g.edges) {
    if (u >= n || v >= n) {
      throw SchemaError("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                        ") out of range for " + std::to_string(n) + " nodes");
    }
    if (u == v) throw SchemaError("self-loop on node " + std::to_string(u));
    if (u > v) std::swap(u, v);
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
}

EgoSubgraph whole_graph(const Graph& g) {
  EgoSubgraph sub;
  sub.target = 0;
  sub.node_ids.resize(g.num_nodes());
  for (std::size_t i = 0; i < g.num_nodes(); ++i) sub.node_ids[i] = i;
  sub.features = g.node_features;
  sub.adjacency = Matrix(g.num_nodes(), g.num_nodes());
  for (const auto& [u, v] : g.edges) {
    sub.adjacency(u, v) = 1.0;
    sub.adjacency(v, u) = 1.0;
  }
  sub.hops = g.num_nodes();
  return sub;
}

EgoSubgraph k_hop_subgraph(const Graph& g, std::size_t node, std::size_t k) {
  if (node >= g.num_nodes()) throw ContractError("k_hop_subgraph: node out of range");
  const AdjacencyList adj = g.adjacency_list();
  std::vector<std::size_t> dist(g.num_nodes(), SIZE_MAX);
  std::vector<std::size_t> order{node};
  dist[node] = 0;
  for (std::size_t head = 0; head < order.size(); ++head) {
    const std::size_t u = order[head];
    if (dist[u] == k) continue;
    for (std::size_t v : adj[u]) {
      if (dist[v] == SIZE_MAX) {
        dist[v] = dist[u] + 1;
        order.push_back(v);
      }
    }
  }
  // Target first, the rest in ascending original id.
  std::sort(order.begin() + 1, order.end());
  std::vector<std::size_t> local(g.num_nodes(), SIZE_MAX);
  for (std::size_t i = 0; i < order.size(); ++i) local[order[i]] = i;

  EgoSubgraph sub;
  sub.target = 0;
  sub.hops = k;
  sub.node_ids = order;
  sub.features = select_rows(g.node_features, order);
  sub.adjacency = Matrix(order.size(), order.size());
  for (const auto& [u, v] : g.edges) {
    if (local[u] != SIZE_MAX && local[v] != SIZE_MAX) {
      sub.adjacency(local[u], local[v]) = 1.0;
      sub.adjacency(local[v], local[u]) = 1.0;
    }
  }
  return sub;
}

AdjacencyList adjacency_to_lists(const Matrix& adjacency) {
  AdjacencyList lists(adjacency.rows());
  for (std::size_t i = 0; i < adjacency.rows(); ++i) {
    for (std::size_t j = 0; j < adjacency.cols(); ++j) {
      if (adjacency(i, j) != 0.0) lists[i].push_back(j);
    }
  }
  return lists;
}

DatasetFormat detect_format(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return DatasetFormat::kJsonl;
  if (ext == ".txt" || ext == ".edges" || ext == ".el" || ext == ".edgelist") {
    return DatasetFormat::kEdgeList;
  }
  throw ConfigError("cannot infer dataset format from extension '" + ext + "'");
}

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open dataset file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_feature_dims(const std::vector<Graph>& graphs) {
  for (std::size_t i = 1; i < graphs.size(); ++i) {
    if (graphs[i].feature_dim() != graphs[0].feature_dim()) {
      throw SchemaError("graph " + std::to_string(i) + " has feature dim " +
                        std::to_string(graphs[i].feature_dim()) + ", expected " +
                        std::to_string(graphs[0].feature_dim()));
    }
  }
}

Graph graph_from_json(const json& j) {
  Graph g;
  const auto& nodes = j.at("nodes");
  if (!nodes.is_array() || nodes.empty()) throw ParseError("'nodes' must be a non-empty array");
  const std::size_t dim = nodes.at(0).size();
  g.node_features = Matrix(nodes.size(), dim);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!nodes[i].is_array() || nodes[i].size() != dim) {
      throw ParseError("node " + std::to_string(i) + " has a ragged feature row");
    }
    for (std::size_t c = 0; c < dim; ++c) g.node_features(i, c) = nodes[i][c].get<double>();
  }
  if (j.contains("edges")) {
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw ParseError("edge must be a [u, v] pair");
      const auto u = e[0].get<long long>();
      const auto v = e[1].get<long long>();
      if (u < 0 || v < 0) throw ParseError("negative edge endpoint");
      g.edges.emplace_back(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
    }
  }
  if (j.contains("label") && !j.at("label").is_null()) g.label = j.at("label").get<int>();
  if (j.contains("node_labels")) {
    g.node_labels = j.at("node_labels").get<std::vector<int>>();
    if (g.node_labels.size() != g.num_nodes()) {
      throw ParseError("node_labels length does not match node count");
    }
  }
  normalize_edges(g);
  return g;
}

}  // namespace

std::vector<Graph> parse_jsonl(const std::string& text) {
  std::vector<Graph> graphs;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      graphs.push_back(graph_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  check_feature_dims(graphs);
  return graphs;
}

std::vector<Graph> parse_edge_list(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") != std::string::npos && line[0] != '#') return true;
    }
    return false;
  };
  if (!next_line()) return {};
  std::size_t n = 0;
  std::size_t dim = 0;
  {
    std::istringstream hs(line);
    if (!(hs >> n >> dim)) throw ParseError("line " + std::to_string(line_no) + ": expected 'N d_in'");
  }
  Graph g;
  g.node_features = Matrix(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    if (!next_line()) throw ParseError("unexpected end of file in feature block");
    std::istringstream ls(line);
    for (std::size_t c = 0; c < dim; ++c) {
      if (!(ls >> g.node_features(i, c))) {
        throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(dim) +
                         " feature values");
      }
    }
  }
  while (next_line()) {
    std::istringstream ls(line);
    long long u = 0;
    long long v = 0;
    if (!(ls >> u >> v) || u < 0 || v < 0) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 'u v'");
    }
    if (static_cast<std::size_t>(u) >= n || static_cast<std::size_t>(v) >= n || u == v) {
      throw ParseError("line " + std::to_string(line_no) + ": invalid edge (" + std::to_string(u) +
                       ", " + std::to_string(v) + ")");
    }
    g.edges.emplace_back(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
  }
  normalize_edges(g);
  return {std::move(g)};
}

std::vector<Graph> load_dataset(const std::filesystem::path& path, DatasetFormat format) {
  const std::string text = read_file(path);
  return format == DatasetFormat::kJsonl ? parse_jsonl(text) : parse_edge_list(text);
}

std::vector<Graph> load_dataset(const std::filesystem::path& path) {
  return load_dataset(path, detect_format(path));
}

std::string to_jsonl(const std::vector<Graph>& graphs) {
  std::string out;
  for (const auto& g : graphs) {
    json j;
    json nodes = json::array();
    for (std::size_t i = 0; i < g.num_nodes(); ++i) {
      nodes.push_back(std::vector<double>(g.node_features.row(i).begin(), g.node_features.row(i).end()));
    }
    j["nodes"] = std::move(nodes);
    json edges = json::array();
    for (const auto& [u, v] : g.edges) edges.push_back({u, v});
    j["edges"] = std::move(edges);
    if (g.label) j["label"] = *g.label;
    if (!g.node_labels.empty()) j["node_labels"] = g.node_labels;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_jsonl(const std::vector<Graph>& graphs, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_jsonl(graphs);
}

Graph generate_sbm(const SbmSpec& spec) {
  if (!(0.0 <= spec.p_out && spec.p_out <= spec.p_in && spec.p_in <= 1.0)) {
    throw ConfigError("generate_sbm requires 0 <= p_out <= p_in <= 1");
  }
  RandomStream rng(spec.seed);
  const std::size_t n = spec.classes * spec.nodes_per_class;
  Graph g;
  g.node_labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.node_labels[i] = static_cast<int>(i / spec.nodes_per_class);
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v = u + 1; v < n; ++v) {
      const double p = g.node_labels[u] == g.node_labels[v] ? spec.p_in : spec.p_out;
      // Always draw so the stream position does not depend on p.
      if (rng.uniform() < p) g.edges.emplace_back(u, v);
    }
  }
  g.node_features = Matrix(n, spec.classes);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < spec.classes; ++c) {
      const double signal = static_cast<std::size_t>(g.node_labels[i]) == c ? 1.0 : 0.0;
      g.node_features(i, c) = signal + spec.feature_noise * rng.normal();
    }
  }
  return g;
}

namespace {

// Multi-source BFS distance to the nearest node with a differently labelled neighbor.
std::vector<std::size_t> boundary_distance(const std::vector<int>& labels, const AdjacencyList& adj) {
  const std::size_t n = labels.size();
  std::vector<std::size_t> dist(n, n);
  std::deque<std::size_t> queue;
  for (std::size_t u = 0; u < n; ++u) {
    for (std::size_t v : adj[u]) {
      if (labels[v] != labels[u]) {
        dist[u] = 0;
        queue.push_back(u);
        break;
      }
    }
  }
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t v : adj[u]) {
      if (dist[v] > dist[u] + 1) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist;
}

// Weighted sampling without replacement (sequential draws).
std::vector<std::size_t> weighted_pick(std::vector<std::size_t> pool, std::vector<double> weights,
                                       std::size_t count, RandomStream& rng) {
  std::vector<std::size_t> picked;
  while (picked.size() < count) {
    double total = 0.0;
    for (double w : weights) total += w;
    double r = rng.uniform() * total;
    std::size_t k = 0;
    while (k + 1 < pool.size() && r >= weights[k]) {
      r -= weights[k];
      ++k;
    }
    picked.push_back(pool[k]);
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(k));
    weights.erase(weights.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return picked;
}

}  // namespace

DatasetSplit make_imbalanced_split(const std::vector<int>& labels, const AdjacencyList& adjacency,
                                   double imbalance_ratio, double label_ratio, std::uint64_t seed) {
  if (!(imbalance_ratio > 0.0 && imbalance_ratio <= 1.0) || !(label_ratio > 0.0 && label_ratio <= 1.0)) {
    throw ConfigError("imbalance and label ratios must lie in (0, 1]");
  }
  if (!adjacency.empty() && adjacency.size() != labels.size()) {
    throw ShapeError("adjacency size does not match label count");
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  if (by_class.size() < 2) throw SplitError("imbalanced split needs at least 2 classes");

  std::size_t smallest = labels.size();
  for (const auto& [c, members] : by_class) smallest = std::min(smallest, members.size());
  const auto majority_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(label_ratio * static_cast<double>(smallest))));
  const auto minority_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(imbalance_ratio * static_cast<double>(majority_count))));
  // The last floor(C/2) classes (by label value) are the minority classes.
  const std::size_t num_minority = by_class.size() / 2;
  const std::size_t first_minority = by_class.size() - num_minority;

  std::vector<std::size_t> dist;
  if (!adjacency.empty()) dist = boundary_distance(labels, adjacency);

  RandomStream rng(seed);
  DatasetSplit split;
  split.label_ratio = label_ratio;
  split.imbalance_ratio = imbalance_ratio;
  std::vector<std::vector<std::size_t>> remaining;
  std::size_t class_pos = 0;
  for (auto& [c, members] : by_class) {
    const bool minority = class_pos++ >= first_minority;
    const std::size_t want = minority ? minority_count : majority_count;
    if (members.size() <= want) {
      throw SplitError("class " + std::to_string(c) + " has no nodes left for evaluation");
    }
    std::vector<std::size_t> chosen;
    if (minority && !dist.empty()) {
      std::vector<double> weights;
      for (std::size_t i : members) weights.push_back(1.0 / (1.0 + static_cast<double>(dist[i])));
      chosen = weighted_pick(members, std::move(weights), want, rng);
    } else {
      std::vector<std::size_t> pool = members;
      rng.shuffle(pool);
      chosen.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(want));
    }
    std::set<std::size_t> chosen_set(chosen.begin(), chosen.end());
    split.train.insert(split.train.end(), chosen.begin(), chosen.end());
    std::vector<std::size_t> rest;
    for (std::size_t i : members) {
      if (!chosen_set.count(i)) rest.push_back(i);
    }
    rng.shuffle(rest);
    remaining.push_back(std::move(rest));
  }

  std::size_t per_class = SIZE_MAX;
  for (const auto& r : remaining) per_class = std::min(per_class, r.size());
  const std::size_t val_per_class = per_class / 4;
  for (const auto& r : remaining) {
    split.validation.insert(split.validation.end(), r.begin(), r.begin() + static_cast<std::ptrdiff_t>(val_per_class));
    split.test.insert(split.test.end(), r.begin() + static_cast<std::ptrdiff_t>(val_per_class),
                      r.begin() + static_cast<std::ptrdiff_t>(per_class));
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace oepg
