#include "oepg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "oepg/error.hpp"

namespace oepg {

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::kAccuracy: return "acc";
    case Metric::kMacroF1: return "macro-f1";
    case Metric::kRocAuc: return "auc";
  }
  return "?";
}

Metric parse_metric(const std::string& text) {
  if (text == "acc" || text == "accuracy") return Metric::kAccuracy;
  if (text == "macro-f1" || text == "f1") return Metric::kMacroF1;
  if (text == "auc" || text == "roc-auc") return Metric::kRocAuc;
  throw ConfigError("metric must be acc, macro-f1 or auc; got '" + text + "'");
}

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw MetricError("metric inputs have different lengths");
  if (a == 0) throw MetricError("metric of an empty sample");
}

}  // namespace

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  check_lengths(predictions.size(), labels.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double macro_f1(std::span<const int> predictions, std::span<const int> labels) {
  check_lengths(predictions.size(), labels.size());
  std::set<int> classes(labels.begin(), labels.end());
  classes.insert(predictions.begin(), predictions.end());
  double total = 0.0;
  for (int c : classes) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const bool p = predictions[i] == c;
      const bool l = labels[i] == c;
      tp += p && l;
      fp += p && !l;
      fn += !p && l;
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    total += denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
  }
  return total / static_cast<double>(classes.size());
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size());
  std::size_t pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw MetricError("roc_auc expects binary 0/1 labels");
    pos += l == 1;
  }
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw MetricError("roc_auc needs both classes present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) rank_sum += avg_rank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

Matrix embed_all(const std::vector<Graph>& dataset, const Checkpoint& checkpoint, EmbedOptions options) {
  if (dataset.empty()) return Matrix(0, checkpoint.config.hidden_dim);
  for (const auto& g : dataset) {
    if (g.feature_dim() != checkpoint.input_dim) {
      throw SchemaError("dataset feature dim " + std::to_string(g.feature_dim()) +
                        " does not match checkpoint input dim " + std::to_string(checkpoint.input_dim));
    }
  }
  Trainer trainer(dataset, checkpoint.config);
  ParameterStore params = checkpoint.params;
  std::optional<ClusterHierarchy> hierarchy;
  if (options.use_descriptors && checkpoint.config.use_descriptors) {
    if (options.recluster) {
      hierarchy = init_hierarchy(trainer.target_embeddings(params), checkpoint.config.scales,
                                 mix_seed(checkpoint.config.seed, 0x7EC1));
    } else {
      hierarchy = checkpoint.hierarchy;
    }
  }
  return trainer.embed(params, hierarchy);
}

LabelledInstances instance_labels(const std::vector<Graph>& dataset, Mode mode) {
  LabelledInstances out;
  if (mode == Mode::kGraph) {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (!dataset[i].label) throw SchemaError("graph " + std::to_string(i) + " has no label");
      out.labels.push_back(*dataset[i].label);
    }
    return out;
  }
  std::size_t offset = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Graph& g = dataset[i];
    if (g.node_labels.size() != g.num_nodes()) {
      throw SchemaError("graph " + std::to_string(i) + " lacks node labels");
    }
    out.labels.insert(out.labels.end(), g.node_labels.begin(), g.node_labels.end());
    for (auto nb : g.adjacency_list()) {
      for (auto& v : nb) v += offset;
      out.adjacency.push_back(std::move(nb));
    }
    offset += g.num_nodes();
  }
  return out;
}

ProbeResult summarize(const std::string& metric, const std::string& split, std::vector<std::uint64_t> seeds,
                      std::vector<double> values) {
  ProbeResult r;
  r.metric = metric;
  r.split = split;
  r.seeds = std::move(seeds);
  r.values = std::move(values);
  if (!r.values.empty()) {
    r.mean = std::accumulate(r.values.begin(), r.values.end(), 0.0) / static_cast<double>(r.values.size());
    double ss = 0.0;
    for (double v : r.values) ss += (v - r.mean) * (v - r.mean);
    r.stddev = std::sqrt(ss / static_cast<double>(r.values.size()));
  }
  return r;
}

double probe_once(const Matrix& embeddings, std::span<const int> labels, const DatasetSplit& split,
                  std::uint64_t seed, Metric metric, ProbeOptions options) {
  if (labels.size() != embeddings.rows()) throw ShapeError("probe: label count does not match embeddings");
  if (split.train.empty() || split.test.empty()) throw ProbeError("probe needs non-empty train and test splits");
  std::vector<int> classes;
  for (std::size_t i : split.train) {
    if (i >= labels.size()) throw ProbeError("split index out of range");
    classes.push_back(labels[i]);
  }
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw ProbeError("training split contains a single class");
  std::map<int, std::size_t> class_index;
  for (std::size_t c = 0; c < classes.size(); ++c) class_index[classes[c]] = c;

  const std::size_t d = embeddings.cols();
  const std::size_t k = classes.size();
  // Standardize with training statistics.
  std::vector<double> mean(d, 0.0), scale(d, 0.0);
  for (std::size_t i : split.train) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += embeddings(i, j);
  }
  for (auto& m : mean) m /= static_cast<double>(split.train.size());
  for (std::size_t i : split.train) {
    for (std::size_t j = 0; j < d; ++j) scale[j] += (embeddings(i, j) - mean[j]) * (embeddings(i, j) - mean[j]);
  }
  for (auto& s : scale) {
    s = std::sqrt(s / static_cast<double>(split.train.size()));
    s = s > 1e-12 ? 1.0 / s : 0.0;
  }
  auto features = [&](std::span<const std::size_t> idx) {
    Matrix x(idx.size(), d);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      for (std::size_t j = 0; j < d; ++j) x(r, j) = (embeddings(idx[r], j) - mean[j]) * scale[j];
    }
    return x;
  };
  const Matrix x_train = features(split.train);

  RandomStream rng(seed);
  Matrix w(d, k);
  for (auto& v : w.data()) v = 0.01 * rng.normal();
  std::vector<double> b(k, 0.0);
  auto softmax_rows = [&](const Matrix& x) {
    Matrix p = matmul(x, w);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      auto row = p.row(r);
      double mx = -INFINITY;
      for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, row[c] += b[c]);
      double total = 0.0;
      for (auto& v : row) total += (v = std::exp(v - mx));
      for (auto& v : row) v /= total;
    }
    return p;
  };
  const double n = static_cast<double>(split.train.size());
  for (std::size_t it = 0; it < options.iterations; ++it) {
    Matrix g = softmax_rows(x_train);
    for (std::size_t r = 0; r < split.train.size(); ++r) g(r, class_index.at(labels[split.train[r]])) -= 1.0;
    g *= 1.0 / n;
    Matrix gw = matmul_tn(x_train, g);
    for (std::size_t i = 0; i < gw.size(); ++i) w[i] -= options.learning_rate * (gw[i] + options.l2 * w[i]);
    for (std::size_t c = 0; c < k; ++c) {
      double gb = 0.0;
      for (std::size_t r = 0; r < g.rows(); ++r) gb += g(r, c);
      b[c] -= options.learning_rate * gb;
    }
  }

  const Matrix prob = softmax_rows(features(split.test));
  std::vector<int> truth;
  std::vector<int> pred;
  for (std::size_t r = 0; r < split.test.size(); ++r) {
    truth.push_back(labels[split.test[r]]);
    const auto row = prob.row(r);
    pred.push_back(classes[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())]);
  }
  switch (metric) {
    case Metric::kAccuracy: return accuracy(pred, truth);
    case Metric::kMacroF1: return macro_f1(pred, truth);
    case Metric::kRocAuc: {
      // Binary: score of the larger class. Multi-class: macro one-vs-rest.
      std::vector<double> aucs;
      for (std::size_t c = (k == 2 ? 1 : 0); c < k; ++c) {
        std::vector<int> bin;
        std::vector<double> scores;
        for (std::size_t r = 0; r < truth.size(); ++r) {
          bin.push_back(truth[r] == classes[c] ? 1 : 0);
          scores.push_back(prob(r, c));
        }
        const auto pos = std::count(bin.begin(), bin.end(), 1);
        if (pos == 0 || pos == static_cast<long>(bin.size())) continue;
        aucs.push_back(roc_auc(scores, bin));
      }
      if (aucs.empty()) throw MetricError("roc_auc needs both classes present in the test split");
      return std::accumulate(aucs.begin(), aucs.end(), 0.0) / static_cast<double>(aucs.size());
    }
  }
  return 0.0;
}

ProbeResult linear_probe(const Matrix& embeddings, std::span<const int> labels, const DatasetSplit& split,
                         std::span<const std::uint64_t> seeds, Metric metric, ProbeOptions options) {
  std::vector<double> values;
  for (std::uint64_t s : seeds) values.push_back(probe_once(embeddings, labels, split, s, metric, options));
  std::ostringstream desc;
  desc << "train=" << split.train.size() << " test=" << split.test.size() << " lr=" << split.label_ratio
       << " ir=" << split.imbalance_ratio;
  return summarize(to_string(metric), desc.str(), {seeds.begin(), seeds.end()}, std::move(values));
}

TrainConfig stage_config(const TrainConfig& base, std::size_t stage) {
  if (stage >= kAblationStages.size()) throw ConfigError("ablation stage out of range");
  TrainConfig c = base;
  // The remaining switches are inert without descriptors; leaving them as
  // given keeps stage 0 identical to a plain descriptor-disabled run.
  c.use_descriptors = stage >= 1;
  if (stage == 0) return c;
  c.weighting = stage >= 2 ? WeightingMode::kTrainable : WeightingMode::kUniform;
  c.specialized_pretext = stage >= 3;
  c.momentum_update = stage >= 4;
  return c;
}

ProbeResult evaluate_config(const std::vector<Graph>& dataset, const TrainConfig& config,
                            const ProtocolOptions& options) {
  const LabelledInstances li = instance_labels(dataset, config.mode);
  std::vector<double> values;
  std::ostringstream desc;
  desc << "label_ratio=" << options.label_ratio << " imbalance_ratio=" << options.imbalance_ratio;
  for (std::uint64_t seed : options.seeds) {
    TrainConfig cfg = config;
    cfg.seed = seed;
    const Checkpoint ckpt = pretrain(dataset, cfg);
    const Matrix emb = embed_all(dataset, ckpt);
    const DatasetSplit split =
        make_imbalanced_split(li.labels, li.adjacency, options.imbalance_ratio, options.label_ratio, seed);
    values.push_back(probe_once(emb, li.labels, split, seed, options.metric));
  }
  return summarize(to_string(options.metric), desc.str(), options.seeds, std::move(values));
}

AblationReport run_ablation(const std::vector<Graph>& dataset, const TrainConfig& base,
                            const ProtocolOptions& options) {
  AblationReport report;
  for (std::size_t s = 0; s < kAblationStages.size(); ++s) {
    report.stages.push_back({kAblationStages[s], evaluate_config(dataset, stage_config(base, s), options)});
  }
  return report;
}

AblationReport run_imbalance(const std::vector<Graph>& dataset, const TrainConfig& base,
                             const ProtocolOptions& options) {
  AblationReport report;
  report.stages.push_back({"baseline", evaluate_config(dataset, stage_config(base, 0), options)});
  report.stages.push_back({"oepg", evaluate_config(dataset, stage_config(base, kAblationStages.size() - 1), options)});
  return report;
}

std::vector<DiversityPoint> run_diversity_sweep(std::span<const std::size_t> class_counts,
                                                const TrainConfig& config, const SbmSpec& sbm) {
  std::vector<DiversityPoint> out;
  for (std::size_t classes : class_counts) {
    if (classes < 2) throw ConfigError("diversity sweep needs at least 2 classes per point");
    SbmSpec spec = sbm;
    spec.classes = classes;
    const std::vector<Graph> data{generate_sbm(spec)};
    const Checkpoint ckpt = pretrain(data, config);
    out.push_back({classes, decay_value(ckpt.params, "omni.alpha_raw"), decay_value(ckpt.params, "omni.beta_raw")});
  }
  return out;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw MetricError("spearman needs two equal-length samples");
  auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[order[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::string results_csv(const std::string& run_id, const AblationReport& report) {
  std::ostringstream out;
  out.precision(10);
  out << "run_id,stage,metric,mean,std,seeds\n";
  for (const auto& st : report.stages) {
    std::string seeds;
    for (std::size_t i = 0; i < st.result.seeds.size(); ++i) {
      if (i) seeds += ";";
      seeds += std::to_string(st.result.seeds[i]);
    }
    out << run_id << "," << st.name << "," << st.result.metric << "," << st.result.mean << ","
        << st.result.stddev << "," << seeds << "\n";
  }
  return out.str();
}

std::string diversity_csv(const std::vector<DiversityPoint>& points) {
  std::ostringstream out;
  out.precision(10);
  out << "classes,alpha,beta\n";
  for (const auto& p : points) out << p.classes << "," << p.alpha << "," << p.beta << "\n";
  return out.str();
}

}  // namespace oepg
