#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include <CLI11.hpp>
#include <json.hpp>

#include "oepg/error.hpp"
#include "oepg/eval.hpp"

using namespace oepg;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "results";
  std::string mode;
  bool no_descriptors = false;
  std::string metric = "acc";
  double imbalance_ratio = 1.0;
  double label_ratio = 0.1;
  std::size_t seeds = 5;
  std::string data;
  std::string checkpoint;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value training config");
  cmd->add_option("--seed", c.seed, "base seed")->each([&](const std::string&) { c.seed_set = true; });
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--mode", c.mode, "node | graph")->check(CLI::IsMember({"node", "graph"}));
  cmd->add_flag("--no-descriptors", c.no_descriptors, "disable ego-semantic descriptors");
}

void add_eval(CLI::App* cmd, Common& c) {
  cmd->add_option("--metric", c.metric, "acc | macro-f1 | auc")->check(CLI::IsMember({"acc", "macro-f1", "auc"}));
  cmd->add_option("--imbalance-ratio", c.imbalance_ratio, "minority / majority labeled count");
  cmd->add_option("--label-ratio", c.label_ratio, "labeled fraction of the smallest class");
  cmd->add_option("--seeds", c.seeds, "number of seeds, counting up from --seed");
}

TrainConfig build_config(const Common& c) {
  TrainConfig cfg = c.config.empty() ? TrainConfig{} : load_config(c.config);
  if (c.seed_set) cfg.seed = c.seed;
  if (!c.mode.empty()) cfg.mode = parse_mode(c.mode);
  if (c.no_descriptors) cfg.use_descriptors = false;
  validate(cfg);
  return cfg;
}

ProtocolOptions protocol(const Common& c) {
  ProtocolOptions o;
  o.seeds.resize(c.seeds);
  std::iota(o.seeds.begin(), o.seeds.end(), c.seed);
  o.metric = parse_metric(c.metric);
  o.label_ratio = c.label_ratio;
  o.imbalance_ratio = c.imbalance_ratio;
  return o;
}

json to_json(const ProbeResult& r) {
  return {{"metric", r.metric}, {"split", r.split}, {"seeds", r.seeds},
          {"values", r.values}, {"mean", r.mean},   {"std", r.stddev}};
}

json to_json(const AblationReport& report) {
  json stages = json::array();
  for (const auto& s : report.stages) {
    json j = to_json(s.result);
    j["stage"] = s.name;
    stages.push_back(j);
  }
  return stages;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::string run_id(const std::string& prefix, const Common& c) {
  return prefix + "-seed" + std::to_string(c.seed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ego-semantic graph pre-training and evaluation"};
  app.require_subcommand(1);
  Common c;

  SbmSpec sbm;
  auto* gen = app.add_subcommand("gen-sbm", "write a stochastic block model graph as JSONL");
  gen->add_option("--classes", sbm.classes);
  gen->add_option("--nodes-per-class", sbm.nodes_per_class);
  gen->add_option("--p-in", sbm.p_in);
  gen->add_option("--p-out", sbm.p_out);
  gen->add_option("--noise", sbm.feature_noise);
  gen->add_option("--seed", sbm.seed);
  gen->add_option("--out", c.out, "output directory");

  auto* pre = app.add_subcommand("pretrain", "pre-train and write a checkpoint");
  add_common(pre, c);
  pre->add_option("--data", c.data, "dataset (.jsonl or edge list)")->required();

  auto* emb = app.add_subcommand("embed", "export embeddings as CSV");
  add_common(emb, c);
  bool recluster = false;
  emb->add_option("--data", c.data)->required();
  emb->add_option("--checkpoint", c.checkpoint)->required();
  emb->add_flag("--recluster", recluster, "re-cluster on this dataset");

  auto* probe = app.add_subcommand("probe", "linear-probe a checkpoint");
  add_common(probe, c);
  add_eval(probe, c);
  probe->add_option("--data", c.data)->required();
  probe->add_option("--checkpoint", c.checkpoint)->required();

  auto* ablate = app.add_subcommand("ablate", "staged module ablation");
  add_common(ablate, c);
  add_eval(ablate, c);
  ablate->add_option("--data", c.data)->required();

  std::vector<std::size_t> class_counts{2, 3, 4, 5, 6};
  auto* sweep = app.add_subcommand("sweep-diversity", "learned decays versus SBM class count");
  add_common(sweep, c);
  sweep->add_option("--classes", class_counts, "class counts to sweep");
  sweep->add_option("--nodes-per-class", sbm.nodes_per_class);
  sweep->add_option("--p-in", sbm.p_in);
  sweep->add_option("--p-out", sbm.p_out);
  sweep->add_option("--noise", sbm.feature_noise);

  CLI11_PARSE(app, argc, argv);

  try {
    const fs::path out_dir(c.out);
    json result;
    if (gen->parsed()) {
      const Graph g = generate_sbm(sbm);
      const fs::path path = out_dir / "sbm.jsonl";
      fs::create_directories(out_dir);
      save_jsonl({g}, path);
      result = {{"path", path.string()}, {"nodes", g.num_nodes()}, {"edges", g.edges.size()},
                {"feature_dim", g.feature_dim()}};
    } else if (pre->parsed()) {
      const TrainConfig cfg = build_config(c);
      const auto data = load_dataset(c.data);
      const Checkpoint ck = pretrain(data, cfg);
      const fs::path path = out_dir / "checkpoint.oepg";
      fs::create_directories(out_dir);
      save_checkpoint(ck, path);
      result = {{"checkpoint", path.string()}, {"epochs", ck.epoch}, {"loss_history", ck.loss_history},
                {"momentum_updates", ck.momentum_updates},
                {"alpha", decay_value(ck.params, "omni.alpha_raw")},
                {"beta", decay_value(ck.params, "omni.beta_raw")}};
    } else if (emb->parsed()) {
      const auto data = load_dataset(c.data);
      const Checkpoint ck = load_checkpoint(c.checkpoint);
      const Matrix e = embed_all(data, ck, {!c.no_descriptors, recluster});
      std::ostringstream csv;
      csv.precision(17);
      for (std::size_t i = 0; i < e.rows(); ++i) {
        csv << i;
        for (double v : e.row(i)) csv << "," << v;
        csv << "\n";
      }
      const fs::path path = out_dir / "embeddings.csv";
      write_file(path, csv.str());
      result = {{"path", path.string()}, {"rows", e.rows()}, {"dim", e.cols()}};
    } else if (probe->parsed()) {
      const auto data = load_dataset(c.data);
      const Checkpoint ck = load_checkpoint(c.checkpoint);
      const ProtocolOptions o = protocol(c);
      const Matrix e = embed_all(data, ck, {!c.no_descriptors, false});
      const LabelledInstances li = instance_labels(data, ck.config.mode);
      std::vector<double> values;
      for (std::uint64_t s : o.seeds) {
        const DatasetSplit split = make_imbalanced_split(li.labels, li.adjacency, o.imbalance_ratio, o.label_ratio, s);
        values.push_back(probe_once(e, li.labels, split, s, o.metric));
      }
      const std::string split_desc =
          "label_ratio=" + std::to_string(o.label_ratio) + " imbalance_ratio=" + std::to_string(o.imbalance_ratio);
      const ProbeResult r = summarize(to_string(o.metric), split_desc, o.seeds, values);
      write_file(out_dir / "results.csv", results_csv(run_id("probe", c), {{{"checkpoint", r}}}));
      result = to_json(r);
    } else if (ablate->parsed()) {
      const TrainConfig cfg = build_config(c);
      const auto data = load_dataset(c.data);
      const AblationReport report = run_ablation(data, cfg, protocol(c));
      write_file(out_dir / "results.csv", results_csv(run_id("ablate", c), report));
      result = {{"stages", to_json(report)}};
    } else if (sweep->parsed()) {
      const TrainConfig cfg = build_config(c);
      sbm.seed = cfg.seed;
      const auto points = run_diversity_sweep(class_counts, cfg, sbm);
      write_file(out_dir / "diversity.csv", diversity_csv(points));
      std::vector<double> x, beta;
      json rows = json::array();
      for (const auto& p : points) {
        rows.push_back({{"classes", p.classes}, {"alpha", p.alpha}, {"beta", p.beta}});
        x.push_back(static_cast<double>(p.classes));
        beta.push_back(p.beta);
      }
      result = {{"points", rows}};
      if (points.size() >= 2) result["beta_spearman"] = spearman(x, beta);
    }
    std::cout << result.dump(2) << "\n";
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
