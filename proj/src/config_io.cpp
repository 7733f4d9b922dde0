#include "embattr/config_io.hpp"

#include <fstream>
#include <initializer_list>
#include <set>

#include "embattr/error.hpp"

namespace embattr {

namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw Error(Errc::parse, std::string(what) + " must be a JSON object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!keys.count(key)) {
      throw Error(Errc::parse, std::string("unknown key '") + key + "' in " + what);
    }
  }
}

template <typename T>
T get(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::parse, std::string("bad value for '") + key + "': " + e.what());
  }
}

template <typename T>
T require(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(Errc::parse, std::string("missing key '") + key + "'");
  return get<T>(j, key, T{});
}

TrainConfig train_from_json(const json& j, TrainConfig cfg) {
  check_keys(j,
             {"batch_size", "epochs", "learning_rate", "seed", "classes_per_batch",
              "samples_per_class"},
             "train config");
  cfg.classes_per_batch = get(j, "classes_per_batch", cfg.classes_per_batch);
  cfg.samples_per_class = get(j, "samples_per_class", cfg.samples_per_class);
  cfg.batch_size = get(j, "batch_size", cfg.classes_per_batch * cfg.samples_per_class);
  cfg.epochs = get(j, "epochs", cfg.epochs);
  cfg.learning_rate = get(j, "learning_rate", cfg.learning_rate);
  cfg.seed = get(j, "seed", cfg.seed);
  return cfg;
}

}  // namespace

json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::parse, path.string() + ": " + e.what());
  }
}

ExperimentConfig experiment_from_json(const json& j) {
  check_keys(j,
             {"name", "train_classes", "shots_per_class", "k", "seed", "tau", "learnable_tau",
              "head_dims", "weighting", "train"},
             "experiment config");
  ExperimentConfig cfg;
  cfg.name = get(j, "name", cfg.name);
  cfg.train_label_names = get(j, "train_classes", cfg.train_label_names);
  cfg.shots_per_class = get(j, "shots_per_class", cfg.shots_per_class);
  cfg.k = get(j, "k", cfg.k);
  cfg.seed = get(j, "seed", cfg.seed);
  cfg.head_dims = get(j, "head_dims", cfg.head_dims);
  const auto weighting = get<std::string>(j, "weighting", "vote");
  if (weighting == "vote") {
    cfg.weighting = Weighting::vote;
  } else if (weighting == "similarity") {
    cfg.weighting = Weighting::similarity;
  } else {
    throw Error(Errc::parse, "weighting must be 'vote' or 'similarity'");
  }
  cfg.train.seed = cfg.seed;
  if (j.contains("train")) cfg.train = train_from_json(j.at("train"), cfg.train);
  cfg.train.tau.value = get(j, "tau", cfg.train.tau.value);
  cfg.train.tau.learnable = get(j, "learnable_tau", cfg.train.tau.learnable);
  cfg.validate();
  return cfg;
}

nlohmann::ordered_json experiment_to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["name"] = cfg.name;
  j["train_classes"] = cfg.train_label_names;
  j["shots_per_class"] = cfg.shots_per_class;
  j["k"] = cfg.k;
  j["seed"] = cfg.seed;
  j["tau"] = cfg.train.tau.value;
  j["learnable_tau"] = cfg.train.tau.learnable;
  j["head_dims"] = cfg.head_dims;
  j["weighting"] = cfg.weighting == Weighting::vote ? "vote" : "similarity";
  j["train"] = {{"batch_size", cfg.train.batch_size},
                {"epochs", cfg.train.epochs},
                {"learning_rate", cfg.train.learning_rate},
                {"seed", cfg.train.seed},
                {"classes_per_batch", cfg.train.classes_per_batch},
                {"samples_per_class", cfg.train.samples_per_class}};
  return j;
}

SplitsConfig splits_from_json(const json& j) {
  check_keys(j, {"experiment", "train_fraction", "splits"}, "splits config");
  if (!j.contains("experiment")) throw Error(Errc::parse, "missing key 'experiment'");
  if (!j.contains("splits") || !j.at("splits").is_array()) {
    throw Error(Errc::parse, "'splits' must be an array");
  }
  // train_classes is supplied by each split.
  json exp = j.at("experiment");
  if (!exp.contains("train_classes") || exp.at("train_classes").empty()) {
    exp["train_classes"] = j.at("splits").empty()
                               ? json::array()
                               : j.at("splits").at(0).value("seen", json::array());
  }
  SplitsConfig out{experiment_from_json(exp), {}};
  out.splits.train_fraction = get(j, "train_fraction", out.splits.train_fraction);
  for (const auto& s : j.at("splits")) {
    check_keys(s, {"seen", "unseen"}, "split");
    out.splits.splits.push_back({require<std::vector<std::string>>(s, "seen"),
                                 get(s, "unseen", std::vector<std::string>{})});
  }
  out.splits.validate();
  return out;
}

SweepFile sweep_from_json(const json& j) {
  check_keys(j, {"data", "train_data", "test_data", "train_fraction", "shots_grid", "repeats", "base"},
             "sweep config");
  SweepFile out;
  if (j.contains("data")) out.data = require<std::string>(j, "data");
  if (j.contains("train_data")) out.train_data = require<std::string>(j, "train_data");
  if (j.contains("test_data")) out.test_data = require<std::string>(j, "test_data");
  if (out.data.has_value() == (out.train_data.has_value() || out.test_data.has_value()) ||
      out.train_data.has_value() != out.test_data.has_value()) {
    throw Error(Errc::parse, "sweep config needs either 'data' or both 'train_data' and 'test_data'");
  }
  out.train_fraction = get(j, "train_fraction", out.train_fraction);
  out.sweep.shots_grid = get(j, "shots_grid", out.sweep.shots_grid);
  out.sweep.repeats = get(j, "repeats", out.sweep.repeats);
  if (!j.contains("base")) throw Error(Errc::parse, "missing key 'base'");
  out.sweep.base = experiment_from_json(j.at("base"));
  out.sweep.validate();
  return out;
}

ClusterSpec cluster_spec_from_json(const json& j) {
  check_keys(j,
             {"num_classes", "dim", "count_per_class", "seed", "spread", "means", "separation",
              "means_seed", "label_names"},
             "cluster spec");
  ClusterSpec spec;
  spec.num_classes = require<std::size_t>(j, "num_classes");
  spec.dim = require<std::size_t>(j, "dim");
  spec.count_per_class = require<std::size_t>(j, "count_per_class");
  spec.seed = get(j, "seed", spec.seed);
  spec.label_names = get(j, "label_names", spec.label_names);
  if (!j.contains("spread")) throw Error(Errc::parse, "missing key 'spread'");
  if (j.at("spread").is_array()) {
    spec.spread = require<std::vector<double>>(j, "spread");
  } else {
    spec.spread.assign(spec.num_classes, require<double>(j, "spread"));
  }
  if (j.contains("means") == j.contains("separation")) {
    throw Error(Errc::parse, "cluster spec needs exactly one of 'means' and 'separation'");
  }
  if (j.contains("means")) {
    spec.means = require<std::vector<std::vector<double>>>(j, "means");
  } else {
    spec.means = separated_means(spec.num_classes, spec.dim, require<double>(j, "separation"),
                                 get(j, "means_seed", spec.seed));
  }
  spec.validate();
  return spec;
}

}  // namespace embattr
