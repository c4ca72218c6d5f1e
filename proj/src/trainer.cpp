#include "oepg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oepg/error.hpp"

namespace oepg {

namespace {

constexpr const char* kEncoder = "encoder";
constexpr const char* kAux = "aux";

// Stream tags, so each consumer of config.seed draws independently.
constexpr std::uint64_t kInitTag = 0x1417;
constexpr std::uint64_t kEpochTag = 0xE90C;
constexpr std::uint64_t kClusterTag = 0xC1A5;

struct TargetPass {
  Var hidden;  // projected local features
  Var target;
};

TargetPass target_pass(ParameterStore& params, const std::string& prefix, std::size_t layers,
                       Mode mode, Tape& tape, const EgoSubgraph& sub) {
  Var x = tape.constant(sub.features);
  Var hidden = project_input(params, prefix, x);
  NodeEmbeddings base = propagate(params, prefix, layers, hidden, adjacency_to_lists(sub.adjacency));
  if (mode == Mode::kNode) {
    const std::size_t idx[] = {sub.target};
    return {hidden, ad::select_rows(base.final(), idx)};
  }
  std::vector<std::size_t> all(sub.num_nodes());
  std::iota(all.begin(), all.end(), 0);
  return {hidden, readout(base, all)};
}

// Node mode: the target's row. Graph mode: mean over local (non-descriptor) rows.
Var instance_embedding(const NodeEmbeddings& emb, std::span<const std::size_t> local_rows,
                       std::size_t target_row, Mode mode) {
  if (mode == Mode::kNode) {
    const std::size_t idx[] = {target_row};
    return ad::select_rows(emb.final(), idx);
  }
  return readout(emb, local_rows);
}

std::vector<std::size_t> iota_vec(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  auto same_hierarchy = [](const std::optional<ClusterHierarchy>& x, const std::optional<ClusterHierarchy>& y) {
    if (x.has_value() != y.has_value()) return false;
    if (!x) return true;
    return x->scales == y->scales && x->centroids == y->centroids;
  };
  return to_key_values(a.config) == to_key_values(b.config) && a.input_dim == b.input_dim &&
         a.epoch == b.epoch && a.params == b.params && a.optimizer.step == b.optimizer.step &&
         a.optimizer.first_moment == b.optimizer.first_moment &&
         a.optimizer.second_moment == b.optimizer.second_moment &&
         same_hierarchy(a.hierarchy, b.hierarchy) && a.queues.budget == b.queues.budget &&
         a.queues.queues == b.queues.queues && a.momentum_updates == b.momentum_updates &&
         a.loss_history == b.loss_history;
}

std::vector<Instance> build_instances(const std::vector<Graph>& dataset, Mode mode, std::size_t hops) {
  std::vector<Instance> out;
  for (std::size_t g = 0; g < dataset.size(); ++g) {
    if (mode == Mode::kGraph) {
      out.push_back({g, 0, whole_graph(dataset[g])});
    } else {
      for (std::size_t v = 0; v < dataset[g].num_nodes(); ++v) {
        out.push_back({g, v, k_hop_subgraph(dataset[g], v, hops)});
      }
    }
  }
  return out;
}

Trainer::Trainer(const std::vector<Graph>& dataset, TrainConfig config) : config_(std::move(config)) {
  validate(config_);
  if (dataset.empty()) throw ConfigError("training dataset is empty");
  input_dim_ = dataset.front().feature_dim();
  instances_ = build_instances(dataset, config_.mode, config_.hop_radius());
}

Checkpoint Trainer::fresh_checkpoint() const {
  Checkpoint ckpt;
  ckpt.config = config_;
  ckpt.input_dim = input_dim_;
  RandomStream rng(mix_seed(config_.seed, kInitTag));
  const EncoderConfig enc{config_.layers, config_.hidden_dim, input_dim_, config_.mode};
  RandomStream enc_rng = rng.fork(1);
  RandomStream aux_rng = rng.fork(2);
  RandomStream omni_rng = rng.fork(3);
  init_encoder_params(ckpt.params, kEncoder, enc, enc_rng);
  init_encoder_params(ckpt.params, kAux, enc, aux_rng);
  std::size_t k = 0;
  for (std::size_t s : config_.scales) k += s;
  init_omni_params(ckpt.params, config_.hidden_dim, k, omni_rng);
  ckpt.optimizer = make_optimizer_state(ckpt.params, AdamConfig{config_.learning_rate});
  ckpt.queues.budget = config_.budget;
  return ckpt;
}

Matrix Trainer::target_embeddings(ParameterStore& params) const {
  Matrix out(instances_.size(), config_.hidden_dim);
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    Tape tape;
    const TargetPass pass = target_pass(params, kEncoder, config_.layers, config_.mode, tape, instances_[i].subgraph);
    std::copy_n(pass.target.value().data().begin(), config_.hidden_dim, out.row(i).begin());
  }
  return out;
}

Matrix Trainer::embed(ParameterStore& params, const std::optional<ClusterHierarchy>& hierarchy) const {
  if (!hierarchy) return target_embeddings(params);
  Matrix out(instances_.size(), config_.hidden_dim);
  for (std::size_t i = 0; i < instances_.size(); ++i) {
    const EgoSubgraph& sub = instances_[i].subgraph;
    Tape tape;
    const TargetPass pass = target_pass(params, kEncoder, config_.layers, config_.mode, tape, sub);
    const DescriptorSet ds = build_descriptors(pass.target, *hierarchy, params, config_.weighting);
    const ExtendedGraph ext = extend_subgraph(pass.hidden, sub.adjacency, sub.target, ds.fused, config_.mode);
    const NodeEmbeddings emb = propagate(params, kEncoder, config_.layers, ext.features, adjacency_to_lists(ext.adjacency));
    const Var z = instance_embedding(emb, iota_vec(ext.num_local), ext.target, config_.mode);
    std::copy_n(z.value().data().begin(), config_.hidden_dim, out.row(i).begin());
  }
  return out;
}

InstanceForward Trainer::forward(Tape& tape, ParameterStore& params, const Instance& inst,
                                 const std::optional<ClusterHierarchy>& hierarchy, bool warmup_phase,
                                 RandomStream& rng, ClusterQueues* queues,
                                 ClusterHierarchy* mutable_hierarchy, std::uint64_t* updates) const {
  const EgoSubgraph& sub = inst.subgraph;
  const Mode mode = config_.mode;
  InstanceForward out;
  const TargetPass pass = target_pass(params, kEncoder, config_.layers, mode, tape, sub);
  out.target = pass.target;

  const bool descriptors = !warmup_phase && config_.use_descriptors && hierarchy.has_value();
  Var fused = tape.constant(Matrix(0, config_.hidden_dim));
  if (descriptors) {
    // Enqueue first so a refreshed centroid feeds this instance's descriptors.
    if (queues != nullptr && mutable_hierarchy != nullptr) {
      const auto res = enqueue_and_maybe_update(*queues, *mutable_hierarchy, pass.target.value().data(),
                                                config_.momentum);
      if (updates) *updates += static_cast<std::uint64_t>(std::count(res.updated.begin(), res.updated.end(), true));
    }
    out.descriptors = build_descriptors(pass.target, *hierarchy, params, config_.weighting);
    fused = out.descriptors->fused;
  }
  const ExtendedGraph ext = extend_subgraph(pass.hidden, sub.adjacency, sub.target, fused, mode);
  const auto local_rows = iota_vec(ext.num_local);

  const bool specialized = descriptors && config_.specialized_pretext;
  AugmentationSpec aug = config_.augmentation;
  if (!specialized) aug.global_drop = 0.0;
  for (Var* view : {&out.view_a, &out.view_b}) {
    const Matrix adj = augment(ext.adjacency, ext.num_local, ext.target, aug, rng);
    const NodeEmbeddings emb = propagate(params, kEncoder, config_.layers, ext.features, adjacency_to_lists(adj));
    *view = instance_embedding(emb, local_rows, ext.target, mode);
  }

  if (specialized && config_.lambda > 0.0 && ext.num_local >= 2 && ext.num_descriptors() >= 1) {
    const MaskedPartition part = mask_substructure(ext.adjacency, ext.num_local, ext.target, config_.mask, rng);
    // G1 through the main encoder.
    std::vector<std::size_t> g1_local;
    std::size_t g1_target = 0;
    for (std::size_t i = 0; i < part.remainder.size(); ++i) {
      if (part.remainder[i] < ext.num_local) g1_local.push_back(i);
      if (part.remainder[i] == ext.target) g1_target = i;
    }
    const NodeEmbeddings g1 = propagate(params, kEncoder, config_.layers, ad::select_rows(ext.features, part.remainder),
                                        adjacency_to_lists(induced_adjacency(ext.adjacency, part.remainder)));
    out.remainder = instance_embedding(g1, g1_local, g1_target, mode);

    // G2 through the auxiliary encoder: its own projection for local rows,
    // fused descriptor rows as they are.
    std::vector<std::size_t> masked_local;
    std::vector<std::size_t> masked_desc;
    for (std::size_t v : part.masked) {
      if (v < ext.num_local) masked_local.push_back(v);
      else masked_desc.push_back(v - ext.num_local);
    }
    Var local_feats = project_input(params, kAux, tape.constant(select_rows(sub.features, masked_local)));
    Var g2_feats = masked_desc.empty() ? local_feats : ad::concat_rows(local_feats, ad::select_rows(fused, masked_desc));
    const NodeEmbeddings g2 = propagate(params, kAux, config_.layers, g2_feats,
                                        adjacency_to_lists(induced_adjacency(ext.adjacency, part.masked)));
    out.masked = readout(g2, iota_vec(part.masked.size()));
  }
  return out;
}

Var Trainer::combine_losses(std::vector<InstanceForward>& outs, bool warmup_phase) const {
  std::vector<Var> anchors;
  std::vector<Var> positives;
  for (const auto& o : outs) {
    anchors.push_back(o.view_a);
    positives.push_back(o.view_b);
  }
  Var loss = contrastive_loss(anchors, positives, in_batch_negatives(positives));
  if (warmup_phase) return loss;

  std::vector<Var> rem;
  std::vector<Var> msk;
  for (const auto& o : outs) {
    if (o.remainder && o.masked) {
      rem.push_back(*o.remainder);
      msk.push_back(*o.masked);
    }
  }
  if (!rem.empty()) {
    const auto negatives = config_.predictive_negatives ? in_batch_negatives(msk) : std::vector<std::vector<Var>>{};
    loss = ad::add(loss, ad::scale(predictive_loss(rem, msk, negatives), config_.lambda));
  }
  return loss;
}

double Trainer::batch_loss(ParameterStore& params, const std::optional<ClusterHierarchy>& hierarchy,
                           std::span<const std::size_t> batch, bool warmup_phase, std::uint64_t view_seed) const {
  params.zero_grad();
  Tape tape;
  RandomStream base(view_seed);
  std::vector<InstanceForward> outs;
  for (std::size_t j = 0; j < batch.size(); ++j) {
    RandomStream rng = base.fork(j);
    outs.push_back(forward(tape, params, instances_.at(batch[j]), hierarchy, warmup_phase, rng,
                           nullptr, nullptr, nullptr));
  }
  Var loss = combine_losses(outs, warmup_phase);
  tape.backward(loss);
  return loss.scalar();
}

void Trainer::check_invariants(const InstanceForward& out, const ClusterQueues& queues) const {
  if (queues.max_length() > queues.budget) throw ContractError("cluster queue exceeded its budget");
  if (!out.descriptors) return;
  const auto& ds = *out.descriptors;
  auto check_rows = [](const Matrix& d, const Matrix& raw, const char* what) {
    for (std::size_t i = 0; i < d.rows(); ++i) {
      if (raw[i] <= kNormEps * kNormEps) continue;
      if (std::abs(norm(d.row(i)) - 1.0) > 1e-9) {
        throw ContractError(std::string(what) + " descriptor lost unit norm");
      }
    }
  };
  check_rows(ds.first.descriptors.value(), ds.first.raw_sqnorms.value(), "first-order");
  check_rows(ds.second.descriptors.value(), ds.second.raw_sqnorms.value(), "second-order");
  for (const Var& w : {ds.weights_first, ds.weights_second}) {
    double total = 0.0;
    for (double v : w.value().data()) {
      if (v < 0.0 || v > 1.0) throw ContractError("omni weight outside [0, 1]");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ContractError("omni weights do not sum to 1");
  }
}

void Trainer::maintain_hierarchy(Checkpoint& ckpt, bool allow_refit) const {
  if (!config_.use_descriptors || ckpt.epoch < config_.warmup_epochs) return;
  const std::size_t phase = ckpt.epoch - config_.warmup_epochs;
  const bool refit = allow_refit && ckpt.hierarchy.has_value() && phase > 0 &&
                     phase % config_.kmeans_refit_interval == 0;
  if (ckpt.hierarchy && !refit) return;
  ckpt.hierarchy = init_hierarchy(target_embeddings(ckpt.params), config_.scales,
                                  mix_seed(config_.seed, kClusterTag + ckpt.epoch));
  ckpt.queues = ClusterQueues::for_hierarchy(*ckpt.hierarchy, config_.budget);
}

void Trainer::run_epoch(Checkpoint& ckpt) const {
  const std::size_t epoch = ckpt.epoch;
  const bool warmup = epoch < config_.warmup_epochs;
  if (!warmup) maintain_hierarchy(ckpt, true);

  const std::uint64_t epoch_seed = mix_seed(config_.seed, kEpochTag + epoch);
  RandomStream erng(epoch_seed);
  std::vector<std::size_t> order = iota_vec(instances_.size());
  erng.shuffle(order);

  const bool momentum = !warmup && config_.use_descriptors && config_.momentum_update && ckpt.hierarchy;
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < order.size(); start += config_.batch_size, ++batches) {
    const std::size_t end = std::min(order.size(), start + config_.batch_size);
    ckpt.params.zero_grad();
    Tape tape;
    RandomStream base(mix_seed(epoch_seed, batches));
    std::vector<InstanceForward> outs;
    for (std::size_t j = start; j < end; ++j) {
      RandomStream rng = base.fork(j - start);
      outs.push_back(forward(tape, ckpt.params, instances_[order[j]], ckpt.hierarchy, warmup, rng,
                             momentum ? &ckpt.queues : nullptr, momentum ? &*ckpt.hierarchy : nullptr,
                             &ckpt.momentum_updates));
      if (config_.check_invariants) check_invariants(outs.back(), ckpt.queues);
    }
    Var loss = combine_losses(outs, warmup);
    if (!std::isfinite(loss.scalar())) {
      throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batches));
    }
    tape.backward(loss);
    adam_step(ckpt.params, ckpt.optimizer);
    total += loss.scalar();
  }
  ckpt.loss_history.push_back(batches ? total / static_cast<double>(batches) : 0.0);
  ++ckpt.epoch;
}

void Trainer::train_until(Checkpoint& ckpt, std::size_t until_epoch) const {
  until_epoch = std::min(until_epoch, config_.epochs);
  while (ckpt.epoch < until_epoch) run_epoch(ckpt);
  // A run that stops right after warmup still carries initialized clusters.
  maintain_hierarchy(ckpt, false);
}

Checkpoint Trainer::pretrain() const {
  Checkpoint ckpt = fresh_checkpoint();
  train_until(ckpt, config_.epochs);
  return ckpt;
}

ParameterStore warmup_local(const std::vector<Graph>& dataset, const TrainConfig& config) {
  TrainConfig cfg = config;
  cfg.use_descriptors = false;
  Trainer trainer(dataset, cfg);
  Checkpoint ckpt = trainer.fresh_checkpoint();
  trainer.train_until(ckpt, cfg.warmup_epochs);
  return std::move(ckpt.params);
}

Checkpoint pretrain(const std::vector<Graph>& dataset, const TrainConfig& config) {
  return Trainer(dataset, config).pretrain();
}

}  // namespace oepg
