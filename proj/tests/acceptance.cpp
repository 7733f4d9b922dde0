// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "embattr/contrastive.hpp"
#include "embattr/harness.hpp"
#include "embattr/knn.hpp"
#include "embattr/openset_metrics.hpp"
#include "embattr/trainer.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace embattr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  std::string name;
  double budget_s;  // 0 = no time limit
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double rel_err(double a, double b, double floor) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return std::abs(a - b) / std::max(scale, floor);
}

const std::vector<std::string> kNames{"real", "ADM",  "SD_1.4", "SD_1.5", "VQDM",
                                      "Midjourney", "Glide", "BigGan", "Wukong"};
const std::vector<std::string> kTrained{"real", "ADM", "SD_1.4", "Glide"};

EmbeddingSet fingerprint_data(std::uint64_t seed, std::size_t per_class) {
  ClusterSpec spec;
  spec.num_classes = kNames.size();
  spec.dim = 32;
  spec.means = separated_means(kNames.size(), 32, 5.0, seed);
  spec.spread.assign(kNames.size(), 0.1);
  spec.count_per_class = per_class;
  spec.seed = seed + 1000;
  spec.label_names = kNames;
  return make_clusters(spec);
}

ExperimentConfig desk_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.name = "synthetic";
  cfg.train_label_names = kTrained;
  cfg.seed = seed;
  cfg.train.seed = seed;
  return cfg;
}

Outcome loss_oracle() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t classes = 2 + rng.below(4);
    const std::size_t n = 2 * classes + rng.below(33 - 2 * classes);
    const std::size_t d = 1 + rng.below(8);
    const double tau = std::vector<double>{0.07, 0.5, 1.0}[seed % 3];
    LabeledBatch b{testing::random_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d), rng), {}};
    for (std::size_t i = 0; i < n; ++i) {
      b.labels.push_back(static_cast<LabelId>(i < 2 * classes ? i / 2 : rng.below(classes)));
    }
    b = l2_normalize(b);
    const double want = oracle::supcon_loss(b.z, b.labels, tau);
    worst = std::max(worst, std::abs(supcon_loss(b, {tau}) - want) / std::abs(want));
  }
  return {worst <= 1e-12, "max rel err " + fmt("%.2e", worst)};
}

Outcome gradient_check() {
  const double h = 1e-5;
  double worst_loss = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const std::size_t n = 4 + rng.below(9);
    const std::size_t d = 2 + rng.below(7);
    LabeledBatch b{testing::random_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d), rng), {}};
    for (std::size_t i = 0; i < n; ++i) b.labels.push_back(static_cast<LabelId>((i / 2) % 3));
    b = l2_normalize(b);
    b.normalized = false;  // probes leave the sphere
    const Temperature tau{seed % 2 ? 0.07 : 0.5};
    const Matrix g = supcon_grad(b, tau);
    for (Eigen::Index k = 0; k < b.z.size(); ++k) {
      LabeledBatch p = b;
      p.z.data()[k] += h;
      const double up = supcon_loss(p, tau);
      p.z.data()[k] -= 2 * h;
      const double fd = (up - supcon_loss(p, tau)) / (2 * h);
      worst_loss = std::max(worst_loss, rel_err(g.data()[k], fd, 1e-8 / 1e-4));
    }
  }
  double worst_head = 0.0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed + 500);
    const std::size_t n = 4 + 2 * rng.below(7);
    const std::size_t d_in = 2 + rng.below(7);
    const auto head = ProjectionHead::init_uniform({d_in, 6, 2 + rng.below(7)}, seed);
    const Matrix x = testing::random_matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d_in), rng);
    std::vector<LabelId> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<LabelId>((i / 2) % 3));
    const Temperature tau{0.5};
    const auto res = head_loss_and_grad(head, x, labels, tau);
    ProjectionHead packed = head;
    for (std::size_t l = 0; l < head.layer_count(); ++l) {
      packed.weight(l) = res.grads.weights[l];
      packed.bias(l) = res.grads.biases[l];
    }
    const auto g = packed.parameters();
    const auto params = head.parameters();
    ProjectionHead probe = head;
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto shifted = params;
      shifted[p] += 1e-6;
      probe.set_parameters(shifted);
      const double up = head_loss_and_grad(probe, x, labels, tau).loss;
      shifted[p] -= 2e-6;
      probe.set_parameters(shifted);
      const double fd = (up - head_loss_and_grad(probe, x, labels, tau).loss) / 2e-6;
      worst_head = std::max(worst_head, rel_err(g[p], fd, 1e-8 / 1e-3));
    }
  }
  // rel_err with floor f/tol turns the absolute floor into an equivalent relative bound
  return {worst_loss <= 1e-4 && worst_head <= 1e-3,
          "loss " + fmt("%.2e", worst_loss) + ", composed " + fmt("%.2e", worst_head) +
              " over 50+50 instances"};
}

Outcome knn_oracle() {
  std::size_t mismatches = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    const std::size_t n = 11 + rng.below(490);
    const std::size_t d = 1 + rng.below(32);
    const std::size_t classes = 2 + rng.below(8);
    const std::size_t k = std::vector<std::size_t>{1, 5, 11}[seed % 3];
    const auto s = build_support(testing::random_set(n, d, classes, seed + 7), n, k, seed);
    std::vector<double> q(d);
    for (auto& x : q) x = rng.normal();
    const auto p = classify(s, q);
    const auto o = oracle::knn(s, q, k);
    bool ok = true;
    for (std::size_t c = 0; c < p.posterior.size(); ++c) {
      ok &= p.posterior[c] == static_cast<double>(o.votes[c]) / static_cast<double>(k);
    }
    // prediction: the oracle's tie-break, recomputed from its own neighbour list
    std::vector<double> sims(classes, 0.0);
    for (const auto e : o.top) {
      sims[s.label_ids()[e]] += s.exemplars().row(static_cast<Eigen::Index>(e)).dot(
          Eigen::Map<const Vector>(q.data(), static_cast<Eigen::Index>(d)).normalized());
    }
    LabelId best = 0;
    for (LabelId c = 1; c < classes; ++c) {
      if (o.votes[c] > o.votes[best] || (o.votes[c] == o.votes[best] && sims[c] > sims[best] + 1e-12)) best = c;
    }
    ok &= p.predicted == best;
    mismatches += !ok;
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches in 200 instances"};
}

Outcome oscr_oracle() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const std::size_t n = 2 + rng.below(199);
    const std::size_t k = 1 + rng.below(11);
    std::vector<EvalRecord> rs;
    for (std::size_t i = 0; i < n; ++i) {
      EvalRecord r;
      r.partition = i == 0 || (i != 1 && rng.below(2)) ? DataPartition::seen : DataPartition::unseen;
      r.true_label = static_cast<LabelId>(rng.below(3));
      r.prediction.predicted = rng.below(3) ? *r.true_label : static_cast<LabelId>((*r.true_label + 1) % 3);
      r.prediction.confidence = seed % 2 ? rng.uniform01()
                                         : static_cast<double>(rng.below(k + 1)) / static_cast<double>(k);
      r.prediction.posterior.assign(3, 0.0);
      r.prediction.posterior[r.prediction.predicted] = r.prediction.confidence;
      r.prediction.posterior[(r.prediction.predicted + 1) % 3] = (1.0 - r.prediction.confidence) / 2;
      rs.push_back(r);
    }
    const std::vector<LabelId> known{0, 1};
    worst = std::max(worst, std::abs(oscr(rs) - oracle::oscr(rs)));
    worst = std::max(worst, std::abs(oscr(rs, known) - oracle::oscr(rs, known)));
  }
  auto make = [](bool correct, double conf, DataPartition part) {
    EvalRecord r;
    r.true_label = 0;
    r.partition = part;
    r.prediction = {{conf, 1.0 - conf}, correct ? 0u : 1u, conf};
    return r;
  };
  const std::vector<EvalRecord> ideal{make(true, 1.0, DataPartition::seen),
                                      make(true, 1.0, DataPartition::seen),
                                      make(true, 0.0, DataPartition::unseen)};
  const std::vector<EvalRecord> wrong{make(false, 1.0, DataPartition::seen),
                                      make(false, 0.7, DataPartition::seen),
                                      make(true, 0.2, DataPartition::unseen)};
  const double a = oscr(ideal), b = oscr(wrong);
  return {worst <= 1e-12 && a == 1.0 && b == 0.0,
          "max abs err " + fmt("%.2e", worst) + ", ideal " + fmt("%g", a) + ", all-wrong " + fmt("%g", b)};
}

Outcome paper_numbers() {
  const std::vector<double> acc{89.82, 99.67, 99.91, 99.93};
  const std::vector<double> auc{95.16, 96.48, 96.30, 96.40};
  const std::vector<double> esb1{87.5, 96.5, 87.7, 91.6, 86.8, 94.4, 94.1, 91.6};
  const auto a = mean_stddev(acc), u = mean_stddev(auc), e = mean_stddev(esb1);
  return {std::abs(a.mean - 97.33) <= 0.01 && std::abs(u.mean - 96.09) <= 0.01 &&
              std::abs(e.mean - 91.3) <= 0.05,
          "closed " + fmt("%.4f", a.mean) + " +- " + fmt("%.2f", a.stddev) + ", auc " +
              fmt("%.4f", u.mean) + " +- " + fmt("%.2f", u.stddev) + ", detection " + fmt("%.4f", e.mean)};
}

Outcome end_to_end() {
  double min_seen = 1.0, min_unseen = 1.0, min_oscr = 1.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto pools = split_pools(fingerprint_data(seed, 2000), 0.5, seed);
    const auto res = run_experiment(desk_config(seed), pools.train, pools.test);
    min_seen = std::min(min_seen, res.report.macro_seen->f1);
    min_unseen = std::min(min_unseen, res.report.macro_unseen->f1);
    min_oscr = std::min(min_oscr, *res.report.oscr);
  }
  return {min_seen >= 0.95 && min_unseen >= 0.80 && min_oscr >= 0.90,
          "worst of 5 seeds: seen F1 " + fmt("%.4f", min_seen) + ", unseen F1 " +
              fmt("%.4f", min_unseen) + ", OSCR " + fmt("%.4f", min_oscr)};
}

Outcome sweep_trend() {
  const auto pools = split_pools(fingerprint_data(11, 2000), 0.5, 11);
  SweepConfig sc;
  sc.shots_grid = {10, 50, 150};
  sc.repeats = 5;
  sc.base = desk_config(11);
  const auto rows = sweep_shots(sc, pools.train, pools.test);
  std::vector<double> mean(3, 0.0);
  for (const auto& r : rows) {
    if (!r.accuracy) return {false, "sweep point failed: " + r.error};
    const std::size_t g = r.shots == 10 ? 0 : r.shots == 50 ? 1 : 2;
    mean[g] += *r.accuracy / 5.0;
  }
  return {mean[1] >= mean[0] - 0.02 && mean[2] >= mean[1] - 0.02,
          "mean accuracy " + fmt("%.4f", mean[0]) + " / " + fmt("%.4f", mean[1]) + " / " + fmt("%.4f", mean[2])};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(EMBATTR_CLI_PATH) + " " + args + " >>\"" + log.string() + "\" 2>&1";
  return std::system(cmd.c_str());
}

Outcome cli_determinism() {
  const fs::path root = fs::temp_directory_path() / "embattr_acceptance_cli";
  fs::remove_all(root);
  std::vector<fs::path> dirs{root / "a", root / "b"};
  for (const auto& dir : dirs) {
    fs::create_directories(dir);
    std::ofstream(dir / "spec.json") << R"({"num_classes": 9, "dim": 32, "count_per_class": 300,
      "seed": 5, "spread": 0.1, "separation": 5,
      "label_names": ["real", "ADM", "SD_1.4", "SD_1.5", "VQDM", "Midjourney", "Glide", "BigGan", "Wukong"]})";
    std::ofstream(dir / "splits.json") << R"({"train_fraction": 0.5,
      "experiment": {"name": "cli", "shots_per_class": 20, "seed": 3,
                     "train": {"epochs": 3}},
      "splits": [{"seen": ["real", "ADM", "VQDM", "Glide"], "unseen": ["SD_1.4", "BigGan"]},
                 {"seen": ["real", "SD_1.5", "Midjourney", "Wukong"], "unseen": ["ADM", "Glide"]}]})";
    std::ofstream(dir / "sweep.json") << R"({"data": "data.embs", "train_fraction": 0.5,
      "shots_grid": [5, 20], "repeats": 2,
      "base": {"train_classes": ["real", "ADM", "VQDM", "Glide"], "seed": 4, "train": {"epochs": 2}}})";
    const auto d = "\"" + dir.string() + "/";
    const auto log = dir / "log.txt";
    const std::vector<std::string> steps{
        "make-clusters --spec " + d + "spec.json\" --out " + d + "data.embs\"",
        "train-head --train " + d + "data.embs\" --classes real,ADM,VQDM,Glide --epochs 3 --seed 2 --out " + d + "head.bin\"",
        "build-support --data " + d + "data.embs\" --head " + d + "head.bin\" --shots 30 --k 11 --seed 8 --out " + d + "support.embs\"",
        "classify --support " + d + "support.embs\" --head " + d + "head.bin\" --queries " + d + "data.embs\" --seen real,ADM,VQDM,Glide --out " + d + "records.csv\"",
        "eval --records " + d + "records.csv\" --seen real,ADM,VQDM,Glide --out " + d + "report.json\" --csv " + d + "report.csv\"",
        "pca2 --data " + d + "data.embs\" --out " + d + "pca.csv\"",
        "splits --data " + d + "data.embs\" --config " + d + "splits.json\" --out " + d + "splits\"",
        "sweep --config " + d + "sweep.json\" --out " + d + "sweep.csv\""};
    for (const auto& s : steps) {
      if (run_cli(s, log) != 0) return {false, "command failed: " + s + "\n" + slurp(log)};
    }
    fs::remove(log);
  }
  std::size_t files = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dirs[0])) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dirs[0]);
    const auto other = dirs[1] / rel;
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
      return {false, rel.string() + " differs between runs"};
    }
    ++files;
  }
  fs::remove_all(root);
  return {files >= 15, std::to_string(files) + " output files byte-identical across two runs"};
}

Outcome throughput() {
  const auto support = build_support(testing::random_set(9 * 300, 1000, 9, 1), 150, kDefaultK, 2);
  const auto queries = testing::random_set(10000, 1000, 9, 3);
  const auto t0 = std::chrono::steady_clock::now();
  const auto preds = classify_batch(support, queries);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {preds.size() == 10000 && support.size() == 1350 && s < 5.0,
          "10000 x 1350 at d=1000 in " + fmt("%.3f", s) + " s"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {"loss-oracle", 5, loss_oracle},
      {"gradient-check", 30, gradient_check},
      {"knn-oracle", 10, knn_oracle},
      {"oscr-oracle", 0, oscr_oracle},
      {"paper-numbers", 0, paper_numbers},
      {"synthetic-end-to-end", 180, end_to_end},
      {"few-shot-sweep", 0, sweep_trend},
      {"cli-determinism", 0, cli_determinism},
      {"throughput", 5, throughput},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome out;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.budget_s > 0 && s >= c.budget_s) {
      out.pass = false;
      out.detail += ", over the " + fmt("%g", c.budget_s) + " s budget";
    }
    std::printf("%s %s: %s [%.2f s]\n", out.pass ? "PASS" : "FAIL", c.name.c_str(), out.detail.c_str(), s);
    std::fflush(stdout);
    failed += !out.pass;
  }
  return failed == 0 ? 0 : 1;
}
