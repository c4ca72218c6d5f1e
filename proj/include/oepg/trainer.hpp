#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oepg/clusters.hpp"
#include "oepg/ego_semantics.hpp"
#include "oepg/encoder.hpp"
#include "oepg/graph.hpp"
#include "oepg/params.hpp"
#include "oepg/pretext.hpp"

namespace oepg {

struct TrainConfig {
  Mode mode = Mode::kNode;
  std::size_t epochs = 10;
  std::size_t warmup_epochs = 2;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::vector<std::size_t> scales = {16, 12, 8, 4};
  std::size_t budget = 4;
  double momentum = 0.999;
  std::size_t kmeans_refit_interval = 2;
  AugmentationSpec augmentation;
  MaskSpec mask;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  std::size_t layers = 3;
  std::size_t hidden_dim = 32;
  // Ego-subgraph radius; 0 means "same as layers".
  std::size_t hops = 0;

  // Module switches (all on = full model; used by the ablation protocol).
  bool use_descriptors = true;
  WeightingMode weighting = WeightingMode::kTrainable;
  bool specialized_pretext = true;
  bool momentum_update = true;
  // false = positive-only predictive objective.
  bool predictive_negatives = true;
  // Re-verify descriptor/cluster invariants on every step.
  bool check_invariants = false;

  std::size_t hop_radius() const { return hops == 0 ? layers : hops; }
};

void validate(const TrainConfig& config);

std::map<std::string, std::string> to_key_values(const TrainConfig& config);
// Unknown keys raise ConfigError. If `epochs` is given without
// `warmup_epochs`, warmup defaults to 20% of epochs.
TrainConfig config_from_key_values(const std::map<std::string, std::string>& kv,
                                   TrainConfig base = {});
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
std::string format_config(const TrainConfig& config);

struct Checkpoint {
  TrainConfig config;
  std::size_t input_dim = 0;
  std::size_t epoch = 0;  // completed epochs, warmup included
  ParameterStore params;
  OptimizerState optimizer;
  std::optional<ClusterHierarchy> hierarchy;
  ClusterQueues queues;
  std::uint64_t momentum_updates = 0;
  std::vector<double> loss_history;  // mean batch loss per completed epoch

  friend bool operator==(const Checkpoint& a, const Checkpoint& b);
};

// One training instance: an ego-subgraph (node mode) or a whole graph.
struct Instance {
  std::size_t graph = 0;
  std::size_t node = 0;
  EgoSubgraph subgraph;
};

std::vector<Instance> build_instances(const std::vector<Graph>& dataset, Mode mode, std::size_t hops);

// Per-instance forward pass products on a tape.
struct InstanceForward {
  Var target;
  std::optional<DescriptorSet> descriptors;
  Var view_a;
  Var view_b;
  std::optional<Var> remainder;  // G1 embedding, main encoder
  std::optional<Var> masked;     // G2 embedding, auxiliary encoder
};

// Drives warmup, cluster maintenance and the pretext optimization.
class Trainer {
 public:
  Trainer(const std::vector<Graph>& dataset, TrainConfig config);

  const TrainConfig& config() const { return config_; }
  const std::vector<Instance>& instances() const { return instances_; }

  Checkpoint fresh_checkpoint() const;
  // Runs epochs until `ckpt.epoch == until_epoch` (capped at config.epochs).
  void train_until(Checkpoint& ckpt, std::size_t until_epoch) const;
  Checkpoint pretrain() const;

  // Combined loss of one batch against a fixed hierarchy, without any
  // cluster mutation. Writes gradients into `params`.
  double batch_loss(ParameterStore& params, const std::optional<ClusterHierarchy>& hierarchy,
                    std::span<const std::size_t> batch, bool warmup_phase, std::uint64_t view_seed) const;

  // Unextended target embeddings of every instance (M x d).
  Matrix target_embeddings(ParameterStore& params) const;

  // Evaluation embeddings: no augmentation, descriptor-extended when a
  // hierarchy is given, plain target embeddings otherwise.
  Matrix embed(ParameterStore& params, const std::optional<ClusterHierarchy>& hierarchy) const;

 private:
  InstanceForward forward(Tape& tape, ParameterStore& params, const Instance& inst,
                          const std::optional<ClusterHierarchy>& hierarchy, bool warmup_phase,
                          RandomStream& rng, ClusterQueues* queues, ClusterHierarchy* mutable_hierarchy,
                          std::uint64_t* updates) const;
  Var combine_losses(std::vector<InstanceForward>& outs, bool warmup_phase) const;
  void run_epoch(Checkpoint& ckpt) const;
  void maintain_hierarchy(Checkpoint& ckpt, bool allow_refit) const;
  void check_invariants(const InstanceForward& out, const ClusterQueues& queues) const;

  TrainConfig config_;
  std::size_t input_dim_ = 0;
  std::vector<Instance> instances_;
};

// Encoder-only contrastive pre-training on unextended subgraphs.
ParameterStore warmup_local(const std::vector<Graph>& dataset, const TrainConfig& config);

Checkpoint pretrain(const std::vector<Graph>& dataset, const TrainConfig& config);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

}  // namespace oepg
