#include <doctest.h>

#include <cmath>
#include <map>

#include "oepg/error.hpp"
#include "oepg/eval.hpp"

using namespace oepg;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

double confusion_macro_f1(const std::vector<int>& pred, const std::vector<int>& truth, int classes) {
  std::vector<std::vector<int>> cm(classes, std::vector<int>(classes, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) cm[truth[i]][pred[i]]++;
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    int tp = cm[c][c], row = 0, col = 0;
    for (int k = 0; k < classes; ++k) row += cm[c][k], col += cm[k][c];
    if (row == 0 && col == 0) continue;
    ++present;
    const double p = col ? static_cast<double>(tp) / col : 0.0;
    const double r = row ? static_cast<double>(tp) / row : 0.0;
    total += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  return total / present;
}

DatasetSplit halves(std::size_t n) {
  DatasetSplit s;
  for (std::size_t i = 0; i < n; ++i) (i % 2 ? s.test : s.train).push_back(i);
  return s;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.epochs = 3;
  c.warmup_epochs = 1;
  c.batch_size = 16;
  c.learning_rate = 5e-3;
  c.scales = {4, 2};
  c.layers = 1;
  c.hidden_dim = 8;
  c.hops = 1;
  return c;
}

}  // namespace

TEST_CASE("perfect predictions score one on every metric") {
  const std::vector<int> y{0, 1, 1, 0, 2};
  CHECK(accuracy(y, y) == 1.0);
  CHECK(macro_f1(y, y) == 1.0);
  const std::vector<int> b{0, 1, 1, 0};
  const std::vector<double> s{0.0, 1.0, 1.0, 0.0};
  CHECK(roc_auc(s, b) == 1.0);
  const std::vector<double> flipped{1.0, 0.0, 0.0, 1.0};
  CHECK(roc_auc(flipped, b) == 0.0);
}

TEST_CASE("metric errors") {
  const std::vector<int> one{1, 1};
  const std::vector<double> s{0.1, 0.2};
  CHECK_THROWS_AS(roc_auc(s, one), MetricError);
  const std::vector<int> three{0, 1, 1};
  CHECK_THROWS_AS(accuracy(one, three), MetricError);
}

TEST_CASE("metrics match brute-force oracles on random instances") {
  RandomStream rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    std::vector<int> y(n), pred(n), bin(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(4));
      pred[i] = static_cast<int>(rng.below(4));
      bin[i] = static_cast<int>(rng.below(2));
      s[i] = std::round(rng.uniform() * 10.0) / 10.0;  // plenty of ties
    }
    bin[0] = 0;
    bin[1] = 1;
    CHECK(std::abs(roc_auc(s, bin) - pairwise_auc(s, bin)) <= 1e-12);
    CHECK(std::abs(macro_f1(pred, y) - confusion_macro_f1(pred, y, 4)) <= 1e-12);
  }
}

TEST_CASE("probe on one-hot class embeddings is perfect") {
  const std::size_t n = 60;
  Matrix emb(n, 3);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 3);
    emb(i, static_cast<std::size_t>(y[i])) = 1.0;
  }
  CHECK(probe_once(emb, y, halves(n), 0, Metric::kAccuracy) == 1.0);
}

TEST_CASE("probe on identical embeddings is near chance") {
  const std::size_t n = 200;
  Matrix emb(n, 4, 0.7);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>((i / 2) % 2);
  const double acc = probe_once(emb, y, halves(n), 0, Metric::kAccuracy);
  CHECK(std::abs(acc - 0.5) <= 0.15);
}

TEST_CASE("probe separates Gaussian blobs five sigma apart") {
  RandomStream rng(3);
  const std::size_t n = 300;
  Matrix emb(n, 2);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 3);
    // Centres on a circle of radius 5/sqrt(3): pairwise distance 5.
    const double angle = 2.0 * M_PI * y[i] / 3.0;
    emb(i, 0) = 5.0 / std::sqrt(3.0) * std::cos(angle) + rng.normal();
    emb(i, 1) = 5.0 / std::sqrt(3.0) * std::sin(angle) + rng.normal();
  }
  CHECK(probe_once(emb, y, halves(n), 1, Metric::kAccuracy) >= 0.95);
}

TEST_CASE("probe is deterministic and rejects a single-class training split") {
  RandomStream rng(4);
  Matrix emb(40, 3);
  for (auto& v : emb.data()) v = rng.normal();
  std::vector<int> y(40);
  for (std::size_t i = 0; i < 40; ++i) y[i] = static_cast<int>((i / 2) % 2);
  const std::vector<std::uint64_t> seeds{0, 1, 2};
  const auto a = linear_probe(emb, y, halves(40), seeds, Metric::kMacroF1);
  const auto b = linear_probe(emb, y, halves(40), seeds, Metric::kMacroF1);
  CHECK(a.values == b.values);
  CHECK(a.stddev >= 0.0);
  for (double v : a.values) CHECK((v >= 0.0 && v <= 1.0));
  const double auc = probe_once(emb, y, halves(40), 0, Metric::kRocAuc);
  CHECK((auc >= 0.0 && auc <= 1.0));

  DatasetSplit one;
  one.train = {0, 1, 4};
  one.test = {2, 3};
  CHECK_THROWS_AS(probe_once(emb, y, one, 0, Metric::kAccuracy), ProbeError);
}

TEST_CASE("embedding export") {
  const std::vector<Graph> data{generate_sbm({2, 8, 0.5, 0.1, 0.5, 2})};
  const Checkpoint ck = pretrain(data, tiny_config());
  const Matrix a = embed_all(data, ck);
  CHECK(a.rows() == 16);
  CHECK(a.cols() == 8);
  CHECK(a == embed_all(data, ck));

  // Without descriptors the table equals plain target embeddings.
  Trainer t(data, ck.config);
  ParameterStore params = ck.params;
  CHECK(embed_all(data, ck, {false, false}) == t.target_embeddings(params));
  CHECK_FALSE(embed_all(data, ck, {false, false}) == a);

  const Matrix r = embed_all(data, ck, {true, true});
  CHECK(r.rows() == 16);

  std::vector<Graph> wrong{generate_sbm({3, 4, 0.5, 0.1, 0.5, 2})};
  CHECK_THROWS_AS(embed_all(wrong, ck), SchemaError);
}

TEST_CASE("graph-level export gives one row per graph") {
  std::vector<Graph> data;
  for (int i = 0; i < 6; ++i) {
    Graph g = generate_sbm({2, 3, 0.9, 0.2, 0.3, static_cast<std::uint64_t>(i)});
    g.label = i % 2;
    data.push_back(g);
  }
  TrainConfig c = tiny_config();
  c.mode = Mode::kGraph;
  const Checkpoint ck = pretrain(data, c);
  CHECK(embed_all({data[0]}, ck).rows() == 1);
  CHECK(instance_labels(data, Mode::kGraph).labels.size() == 6);
}

TEST_CASE("ablation stages") {
  CHECK(kAblationStages ==
        std::vector<std::string>{"baseline", "+ego-semantic", "+omni-granular-norm", "+pretext-tasks", "+momentum-update"});
  const TrainConfig base = tiny_config();
  TrainConfig off = base;
  off.use_descriptors = false;
  CHECK(to_key_values(stage_config(base, 0)) == to_key_values(off));
  const TrainConfig s1 = stage_config(base, 1);
  CHECK(s1.use_descriptors);
  CHECK(s1.weighting == WeightingMode::kUniform);
  CHECK_FALSE(s1.specialized_pretext);
  CHECK_FALSE(s1.momentum_update);
  CHECK(stage_config(base, 2).weighting == WeightingMode::kTrainable);
  CHECK(stage_config(base, 3).specialized_pretext);
  CHECK(stage_config(base, 4).momentum_update);

  const std::vector<Graph> data{generate_sbm({2, 8, 0.5, 0.1, 0.5, 2})};
  CHECK(serialize_checkpoint(pretrain(data, stage_config(base, 0))) == serialize_checkpoint(pretrain(data, off)));
}

TEST_CASE("ablation report and csv") {
  const std::vector<Graph> data{generate_sbm({2, 20, 0.4, 0.05, 0.5, 5})};
  ProtocolOptions opts;
  opts.seeds = {0, 1};
  opts.label_ratio = 0.3;
  const auto report = run_ablation(data, tiny_config(), opts);
  REQUIRE(report.stages.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(report.stages[i].name == kAblationStages[i]);
    CHECK(report.stages[i].result.values.size() == 2);
  }
  const std::string csv = results_csv("r1", report);
  CHECK(csv.rfind("run_id,stage,metric,mean,std,seeds\n", 0) == 0);
  CHECK(csv.find("r1,+momentum-update,acc,") != std::string::npos);
}

TEST_CASE("diversity sweep is deterministic and reports both decays") {
  TrainConfig c = tiny_config();
  const SbmSpec sbm{2, 10, 0.4, 0.05, 0.5, 1};
  const std::vector<std::size_t> counts{2};
  const auto a = run_diversity_sweep(counts, c, sbm);
  const auto b = run_diversity_sweep(counts, c, sbm);
  REQUIRE(a.size() == 1);
  CHECK(a[0].alpha == b[0].alpha);
  CHECK(a[0].beta == b[0].beta);
  CHECK(a[0].alpha > 0.0);
  CHECK(diversity_csv(a).rfind("classes,alpha,beta\n", 0) == 0);
  const std::vector<std::size_t> bad{1};
  CHECK_THROWS_AS(run_diversity_sweep(bad, c, sbm), ConfigError);
}

TEST_CASE("spearman") {
  const std::vector<double> x{1, 2, 3, 4};
  const std::vector<double> y{10, 20, 25, 40};
  const std::vector<double> z{4, 3, 2, 1};
  CHECK(spearman(x, y) == doctest::Approx(1.0));
  CHECK(spearman(x, z) == doctest::Approx(-1.0));
}
