#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "oepg/graph.hpp"
#include "oepg/matrix.hpp"
#include "oepg/trainer.hpp"

namespace oepg {

enum class Metric { kAccuracy, kMacroF1, kRocAuc };

std::string to_string(Metric metric);
Metric parse_metric(const std::string& text);

double accuracy(std::span<const int> predictions, std::span<const int> labels);
// Unweighted mean of per-class F1 over every class seen in labels or predictions.
double macro_f1(std::span<const int> predictions, std::span<const int> labels);
// Mann-Whitney rank statistic with tie-averaged ranks; labels must be 0/1.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

struct EmbedOptions {
  bool use_descriptors = true;
  // Re-cluster on this dataset instead of reusing the checkpoint's clusters.
  bool recluster = false;
};

// One row per instance (node or graph), descriptor-extended unless disabled.
Matrix embed_all(const std::vector<Graph>& dataset, const Checkpoint& checkpoint, EmbedOptions options = {});

// Labels and (node mode) the joint adjacency used for topology-aware splits.
struct LabelledInstances {
  std::vector<int> labels;
  AdjacencyList adjacency;
};
LabelledInstances instance_labels(const std::vector<Graph>& dataset, Mode mode);

struct ProbeOptions {
  std::size_t iterations = 500;
  double l2 = 1e-4;
  double learning_rate = 0.5;
};

struct ProbeResult {
  std::string metric;
  std::string split;
  std::vector<std::uint64_t> seeds;
  std::vector<double> values;
  double mean = 0.0;
  double stddev = 0.0;
};

ProbeResult summarize(const std::string& metric, const std::string& split, std::vector<std::uint64_t> seeds,
                      std::vector<double> values);

// Multinomial logistic regression on standardized embeddings, full-batch
// gradient descent; `metric` is measured on split.test.
double probe_once(const Matrix& embeddings, std::span<const int> labels, const DatasetSplit& split,
                  std::uint64_t seed, Metric metric, ProbeOptions options = {});

ProbeResult linear_probe(const Matrix& embeddings, std::span<const int> labels, const DatasetSplit& split,
                         std::span<const std::uint64_t> seeds, Metric metric, ProbeOptions options = {});

struct ProtocolOptions {
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  Metric metric = Metric::kAccuracy;
  double label_ratio = 0.1;
  double imbalance_ratio = 1.0;
};

struct StageResult {
  std::string name;
  ProbeResult result;
};

struct AblationReport {
  std::vector<StageResult> stages;
};

inline const std::vector<std::string> kAblationStages = {
    "baseline", "+ego-semantic", "+omni-granular-norm", "+pretext-tasks", "+momentum-update"};

// Module switches of one ablation stage applied on top of `base`.
TrainConfig stage_config(const TrainConfig& base, std::size_t stage);

// Trains, embeds and probes one configuration per seed (config.seed = seed;
// the split for each seed is drawn with that seed).
ProbeResult evaluate_config(const std::vector<Graph>& dataset, const TrainConfig& config,
                            const ProtocolOptions& options);

AblationReport run_ablation(const std::vector<Graph>& dataset, const TrainConfig& base,
                            const ProtocolOptions& options);

// Baseline (descriptors off) vs full model under the given split ratios.
AblationReport run_imbalance(const std::vector<Graph>& dataset, const TrainConfig& base,
                             const ProtocolOptions& options);

struct DiversityPoint {
  std::size_t classes = 0;
  double alpha = 0.0;
  double beta = 0.0;
};

std::vector<DiversityPoint> run_diversity_sweep(std::span<const std::size_t> class_counts,
                                                const TrainConfig& config, const SbmSpec& sbm);

double spearman(std::span<const double> x, std::span<const double> y);

std::string results_csv(const std::string& run_id, const AblationReport& report);
std::string diversity_csv(const std::vector<DiversityPoint>& points);

}  // namespace oepg
