// embattr: command-line front end for training projection heads, building
// support sets, classifying embeddings and evaluating attribution runs.
//
// Failures print one line "error: <category>: <message>" to stderr and exit
// with status 2 (1 for command-line usage errors).

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "embattr/config_io.hpp"
#include "embattr/embedding_store.hpp"
#include "embattr/error.hpp"
#include "embattr/harness.hpp"
#include "embattr/knn.hpp"
#include "embattr/pca.hpp"
#include "embattr/projection_head.hpp"
#include "embattr/records_io.hpp"
#include "embattr/trainer.hpp"

namespace fs = std::filesystem;
using namespace embattr;

namespace {

std::vector<std::string> split_names(const std::string& csv) {
  std::vector<std::string> names;
  std::stringstream in(csv);
  std::string name;
  while (std::getline(in, name, ',')) {
    if (!name.empty()) names.push_back(name);
  }
  return names;
}

std::string json_text(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

fs::path resolve_against(const fs::path& base_file, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base_file.parent_path() / path;
}

struct TrainHeadArgs {
  std::string train, classes, out;
  std::size_t epochs = TrainConfig{}.epochs;
  double lr = TrainConfig{}.learning_rate;
  double tau = Temperature{}.value;
  std::size_t batch = TrainConfig{}.batch_size;
  std::size_t samples_per_class = TrainConfig{}.samples_per_class;
  std::uint64_t seed = 0;
  std::vector<std::size_t> head_dims = ExperimentConfig{}.head_dims;
};

void run_train_head(const TrainHeadArgs& a) {
  ExperimentConfig cfg;
  cfg.train_label_names = split_names(a.classes);
  cfg.seed = a.seed;
  cfg.head_dims = a.head_dims;
  cfg.train.epochs = a.epochs;
  cfg.train.learning_rate = a.lr;
  cfg.train.tau.value = a.tau;
  cfg.train.seed = a.seed;
  cfg.train.batch_size = a.batch;
  cfg.train.samples_per_class = a.samples_per_class;
  if (a.samples_per_class == 0 || a.batch % a.samples_per_class != 0) {
    throw Error(Errc::configuration, "--batch must be a multiple of --samples-per-class");
  }
  cfg.train.classes_per_batch = a.batch / a.samples_per_class;
  const auto data = load_set(a.train);
  const auto trained = train_for_experiment(cfg, data);
  save_head(trained.head, a.out);
  for (std::size_t e = 0; e < trained.history.size(); ++e) {
    std::cout << "epoch " << e + 1 << " loss " << format_number(trained.history[e]) << '\n';
  }
}

struct BuildSupportArgs {
  std::string data, head, out;
  std::size_t shots = kDefaultShots;
  std::size_t k = kDefaultK;
  std::uint64_t seed = 0;
};

void run_build_support(const BuildSupportArgs& a) {
  const auto head = load_head(a.head);
  const auto projected = project(head, load_set(a.data));
  save_support(build_support(projected, a.shots, a.k, a.seed), a.out);
}

struct ClassifyArgs {
  std::string support, head, queries, out, seen;
  std::size_t k = 0;
  bool weighted = false;
};

void run_classify(const ClassifyArgs& a) {
  const auto support = load_support(a.support);
  const auto head = load_head(a.head);
  const auto queries = project(head, load_set(a.queries));
  const auto& labels = support.labels();

  std::vector<char> is_seen(labels.size(), a.seen.empty() ? 1 : 0);
  for (const auto& name : split_names(a.seen)) is_seen[labels.id(name)] = 1;

  auto predictions = classify_batch(support, queries, a.k ? std::optional(a.k) : std::nullopt,
                                    a.weighted ? Weighting::similarity : Weighting::vote);
  RecordsTable table{labels, {}};
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    EvalRecord r;
    r.sample_id = i;
    r.true_label = labels.find(queries.labels().name(queries.label_id(i)));
    r.partition =
        r.true_label && is_seen[*r.true_label] ? DataPartition::seen : DataPartition::unseen;
    r.prediction = std::move(predictions[i]);
    table.records.push_back(std::move(r));
  }
  save_records_csv(table, a.out);
}

struct EvalArgs {
  std::string records, seen, out, csv;
};

void run_eval(const EvalArgs& a) {
  const auto table = load_records_csv(a.records);
  std::vector<LabelId> seen;
  for (const auto& name : split_names(a.seen)) seen.push_back(table.labels.id(name));
  const auto rep = report(table.records, table.labels, seen);
  auto j = report_to_json(rep);
  if (const auto det = detection_summary(table.records, table.labels)) {
    j["detection"] = {{"accuracy", det->accuracy},
                      {"auc", det->auc},
                      {"per_generator_accuracy", det->per_generator_accuracy}};
  }
  write_text_file(a.out, json_text(j));
  if (!a.csv.empty()) {
    std::ostringstream text;
    const auto header = report_csv_header();
    const auto row = report_csv_row(rep);
    for (std::size_t i = 0; i < header.size(); ++i) text << (i ? "," : "") << header[i];
    text << '\n';
    for (std::size_t i = 0; i < row.size(); ++i) text << (i ? "," : "") << row[i];
    text << '\n';
    write_text_file(a.csv, text.str());
  }
}

struct SplitsArgs {
  std::string data, config, out;
};

void run_splits_cmd(const SplitsArgs& a) {
  const auto cfg = splits_from_json(load_json(a.config));
  const auto data = load_set(a.data);
  const auto res = run_splits(cfg.splits, data, cfg.experiment);
  fs::create_directories(a.out);

  const auto header = report_csv_header();
  std::ostringstream csv;
  csv << "split";
  for (const auto& h : header) csv << ',' << h;
  csv << '\n';
  for (std::size_t s = 0; s < res.per_split.size(); ++s) {
    const auto& r = res.per_split[s];
    const std::string stem = "split-" + std::to_string(s + 1);
    write_text_file(fs::path(a.out) / (stem + ".json"), json_text(report_to_json(r.report)));
    save_records_csv({data.labels(), r.records}, fs::path(a.out) / (stem + "_records.csv"));
    csv << stem;
    for (const auto& cell : report_csv_row(r.report)) csv << ',' << cell;
    csv << '\n';
  }
  nlohmann::ordered_json summary;
  summary["experiment"] = experiment_to_json(cfg.experiment);
  summary["splits"] = res.per_split.size();
  auto stats = nlohmann::ordered_json::object();
  for (const auto& name : header) {
    const auto it = res.summary.find(name);
    if (it == res.summary.end()) continue;
    stats[name] = {{"mean", it->second.mean}, {"stddev", it->second.stddev}};
  }
  summary["summary"] = std::move(stats);
  summary["mean_report"] = report_to_json(res.mean);
  write_text_file(fs::path(a.out) / "summary.json", json_text(summary));

  csv << "mean";
  for (const auto& name : header) {
    const auto it = res.summary.find(name);
    csv << ',' << (it == res.summary.end() ? "" : format_number(it->second.mean));
  }
  csv << "\nstddev";
  for (const auto& name : header) {
    const auto it = res.summary.find(name);
    csv << ',' << (it == res.summary.end() ? "" : format_number(it->second.stddev));
  }
  csv << '\n';
  write_text_file(fs::path(a.out) / "summary.csv", csv.str());
}

struct SweepArgs {
  std::string config, out;
};

void run_sweep_cmd(const SweepArgs& a) {
  const auto file = sweep_from_json(load_json(a.config));
  const fs::path cfg_path(a.config);
  std::optional<Pools> pools;
  if (file.data) {
    pools = split_pools(load_set(resolve_against(cfg_path, *file.data)), file.train_fraction,
                        file.sweep.base.seed);
  } else {
    pools = Pools{load_set(resolve_against(cfg_path, *file.train_data)),
                  load_set(resolve_against(cfg_path, *file.test_data))};
  }
  write_text_file(a.out, sweep_csv(sweep_shots(file.sweep, pools->train, pools->test)));
}

struct Pca2Args {
  std::string data, out;
};

void run_pca2(const Pca2Args& a) {
  const auto data = load_set(a.data);
  const auto proj = pca2(data);
  std::ostringstream text;
  write_pca_csv(data, proj, text);
  write_text_file(a.out, text.str());
}

struct ClustersArgs {
  std::string spec, out;
};

void run_make_clusters(const ClustersArgs& a) {
  save_set(make_clusters(cluster_spec_from_json(load_json(a.spec))), a.out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot attribution of embeddings with contrastive projection heads"};
  app.require_subcommand(1);

  TrainHeadArgs train_args;
  auto* train_cmd = app.add_subcommand("train-head", "Train a projection head with the supervised contrastive loss");
  train_cmd->add_option("--train", train_args.train, "Training EMBS file")->required();
  train_cmd->add_option("--classes", train_args.classes, "Comma-separated training classes")->required();
  train_cmd->add_option("--out", train_args.out, "Output head checkpoint")->required();
  train_cmd->add_option("--epochs", train_args.epochs, "Training epochs");
  train_cmd->add_option("--lr", train_args.lr, "Learning rate");
  train_cmd->add_option("--tau", train_args.tau, "Temperature");
  train_cmd->add_option("--batch", train_args.batch, "Batch size");
  train_cmd->add_option("--samples-per-class", train_args.samples_per_class, "Records per class in a batch");
  train_cmd->add_option("--seed", train_args.seed, "Seed");
  train_cmd->add_option("--head-dims", train_args.head_dims, "Hidden widths then output width");

  BuildSupportArgs support_args;
  auto* support_cmd = app.add_subcommand("build-support", "Sample a few-shot support set");
  support_cmd->add_option("--data", support_args.data, "EMBS file to sample from")->required();
  support_cmd->add_option("--head", support_args.head, "Head checkpoint")->required();
  support_cmd->add_option("--shots", support_args.shots, "Exemplars per class");
  support_cmd->add_option("--k", support_args.k, "Default neighbour count");
  support_cmd->add_option("--seed", support_args.seed, "Seed");
  support_cmd->add_option("--out", support_args.out, "Output support file")->required();

  ClassifyArgs classify_args;
  auto* classify_cmd = app.add_subcommand("classify", "Attribute query embeddings");
  classify_cmd->add_option("--support", classify_args.support, "Support file")->required();
  classify_cmd->add_option("--head", classify_args.head, "Head checkpoint")->required();
  classify_cmd->add_option("--queries", classify_args.queries, "Query EMBS file")->required();
  classify_cmd->add_option("--out", classify_args.out, "Output records CSV")->required();
  classify_cmd->add_option("--seen", classify_args.seen, "Comma-separated seen classes (default: all)");
  classify_cmd->add_option("--k", classify_args.k, "Neighbour count (default: the support's)");
  classify_cmd->add_flag("--weighted", classify_args.weighted, "Similarity-weighted posteriors");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Compute metrics from a records CSV");
  eval_cmd->add_option("--records", eval_args.records, "Records CSV")->required();
  eval_cmd->add_option("--seen", eval_args.seen, "Comma-separated seen classes")->required();
  eval_cmd->add_option("--out", eval_args.out, "Output report JSON")->required();
  eval_cmd->add_option("--csv", eval_args.csv, "Also write a flat CSV row");

  SplitsArgs splits_args;
  auto* splits_cmd = app.add_subcommand("splits", "Run an experiment over seen/unseen splits");
  splits_cmd->add_option("--data", splits_args.data, "EMBS file")->required();
  splits_cmd->add_option("--config", splits_args.config, "Splits config JSON")->required();
  splits_cmd->add_option("--out", splits_args.out, "Output directory")->required();

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand("sweep", "Few-shot sensitivity sweep");
  sweep_cmd->add_option("--config", sweep_args.config, "Sweep config JSON")->required();
  sweep_cmd->add_option("--out", sweep_args.out, "Output CSV")->required();

  Pca2Args pca_args;
  auto* pca_cmd = app.add_subcommand("pca2", "Two-dimensional PCA projection");
  pca_cmd->add_option("--data", pca_args.data, "EMBS file")->required();
  pca_cmd->add_option("--out", pca_args.out, "Output CSV")->required();

  ClustersArgs cluster_args;
  auto* cluster_cmd = app.add_subcommand("make-clusters", "Generate Gaussian cluster embeddings");
  cluster_cmd->add_option("--spec", cluster_args.spec, "Cluster spec JSON")->required();
  cluster_cmd->add_option("--out", cluster_args.out, "Output EMBS file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: usage-error: " << e.what() << '\n';
    return 1;
  }

  try {
    if (*train_cmd) run_train_head(train_args);
    if (*support_cmd) run_build_support(support_args);
    if (*classify_cmd) run_classify(classify_args);
    if (*eval_cmd) run_eval(eval_args);
    if (*splits_cmd) run_splits_cmd(splits_args);
    if (*sweep_cmd) run_sweep_cmd(sweep_args);
    if (*pca_cmd) run_pca2(pca_args);
    if (*cluster_cmd) run_make_clusters(cluster_args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.category() << ": " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: io-error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: internal-error: " << e.what() << '\n';
    return 2;
  }
  return EXIT_SUCCESS;
}
