#include "embattr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "embattr/error.hpp"
#include "embattr/random.hpp"
#include "embattr/records_io.hpp"

namespace embattr {

namespace {

std::vector<LabelId> resolve(const LabelTable& labels, const std::vector<std::string>& names) {
  std::vector<LabelId> ids;
  for (const auto& n : names) ids.push_back(labels.id(n));
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<std::optional<double>> scalar_metrics(const MetricsReport& r) {
  auto triple = [](const std::optional<ClassScores>& s, double ClassScores::*field) {
    return s ? std::optional<double>((*s).*field) : std::nullopt;
  };
  return {r.closed_accuracy,
          r.attribution_accuracy,
          r.auc,
          r.oscr,
          triple(r.macro_seen, &ClassScores::precision),
          triple(r.macro_seen, &ClassScores::recall),
          triple(r.macro_seen, &ClassScores::f1),
          triple(r.macro_unseen, &ClassScores::precision),
          triple(r.macro_unseen, &ClassScores::recall),
          triple(r.macro_unseen, &ClassScores::f1)};
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::optional<ClassScores> mean_scores(const std::vector<std::optional<ClassScores>>& values) {
  ClassScores m;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (!v) continue;
    m.precision += v->precision;
    m.recall += v->recall;
    m.f1 += v->f1;
    m.support += v->support;
    ++n;
  }
  if (n == 0) return std::nullopt;
  m.precision /= static_cast<double>(n);
  m.recall /= static_cast<double>(n);
  m.f1 /= static_cast<double>(n);
  return m;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (train_label_names.empty()) {
    throw Error(Errc::configuration, "experiment " + name + " has no training classes");
  }
  if (shots_per_class == 0 || k == 0) {
    throw Error(Errc::configuration, "shots_per_class and k must be positive");
  }
  if (head_dims.empty()) throw Error(Errc::configuration, "head needs an output width");
  train.validate();
}

TrainResult train_for_experiment(const ExperimentConfig& cfg, const EmbeddingSet& train_data) {
  cfg.validate();
  const auto ids = resolve(train_data.labels(), cfg.train_label_names);
  const auto pool = partition(train_data, ids, std::nullopt, 0);
  std::vector<std::size_t> dims{train_data.dim()};
  dims.insert(dims.end(), cfg.head_dims.begin(), cfg.head_dims.end());
  return train(ProjectionHead::init_uniform(std::move(dims), cfg.seed), pool.selected, cfg.train);
}

ExperimentResult evaluate_with_head(const ExperimentConfig& cfg, const ProjectionHead& head,
                                    const EmbeddingSet& test_data, std::size_t shots,
                                    std::uint64_t support_seed) {
  const auto seen = resolve(test_data.labels(), cfg.train_label_names);
  const auto projected = project(head, test_data);
  const auto support = build_support(projected, shots, cfg.k, support_seed);

  ExperimentResult out{{}, {}, head, {}, {}, {}};
  out.support_indices.assign(support.source_indices().begin(), support.source_indices().end());
  std::vector<char> used(test_data.size(), 0);
  for (const auto i : out.support_indices) used[i] = 1;
  for (std::size_t i = 0; i < test_data.size(); ++i) {
    if (!used[i]) out.eval_indices.push_back(i);
  }
  // Support samples are never scored.
  for (const auto i : out.eval_indices) {
    if (used[i]) throw Error(Errc::validation, "support sample leaked into the evaluation pool");
  }

  const auto queries = projected.subset(out.eval_indices);
  auto predictions = classify_batch(support, queries, cfg.k, cfg.weighting);
  std::vector<char> is_seen(test_data.labels().size(), 0);
  for (const auto id : seen) is_seen[id] = 1;
  out.records.reserve(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto truth = queries.label_id(i);
    out.records.push_back({out.eval_indices[i], truth, std::move(predictions[i]),
                           is_seen[truth] ? DataPartition::seen : DataPartition::unseen});
  }
  out.report = report(out.records, test_data.labels(), seen);
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const EmbeddingSet& train_data,
                                const EmbeddingSet& test_data) {
  auto trained = train_for_experiment(cfg, train_data);
  auto out = evaluate_with_head(cfg, trained.head, test_data, cfg.shots_per_class, cfg.seed);
  out.history = std::move(trained.history);
  return out;
}

Pools split_pools(const EmbeddingSet& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(Errc::configuration, "train_fraction must lie strictly between 0 and 1");
  }
  std::vector<std::vector<std::size_t>> by_class(data.labels().size());
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.label_id(i)].push_back(i);
  Rng rng(seed);
  std::vector<char> to_train(data.size(), 0);
  for (auto& pool : by_class) {
    const auto take = static_cast<std::size_t>(
        std::floor(static_cast<double>(pool.size()) * train_fraction));
    for (std::size_t j = 0; j < take; ++j) {
      std::swap(pool[j], pool[j + rng.below(pool.size() - j)]);
      to_train[pool[j]] = 1;
    }
  }
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  for (std::size_t i = 0; i < data.size(); ++i) (to_train[i] ? train_idx : test_idx).push_back(i);
  return {data.subset(train_idx), data.subset(test_idx)};
}

void SplitSet::validate() const {
  if (splits.empty()) throw Error(Errc::configuration, "split set is empty");
  for (std::size_t s = 0; s < splits.size(); ++s) {
    for (const auto& name : splits[s].seen) {
      if (std::find(splits[s].unseen.begin(), splits[s].unseen.end(), name) !=
          splits[s].unseen.end()) {
        throw Error(Errc::configuration, "split " + std::to_string(s) + " lists " + name +
                                             " as both seen and unseen");
      }
    }
  }
}

MeanStd mean_stddev(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::undefined_metric, "mean of no values");
  double sum = 0.0;
  for (const double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (const double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

SplitsResult run_splits(const SplitSet& splits, const EmbeddingSet& data,
                        const ExperimentConfig& base) {
  splits.validate();
  const auto pools = split_pools(data, splits.train_fraction, base.seed);
  SplitsResult out;
  for (std::size_t s = 0; s < splits.splits.size(); ++s) {
    const auto& spec = splits.splits[s];
    ExperimentConfig cfg = base;
    cfg.name = base.name + "/split-" + std::to_string(s + 1);
    cfg.train_label_names = spec.seen;
    std::vector<std::string> tested = spec.seen;
    tested.insert(tested.end(), spec.unseen.begin(), spec.unseen.end());
    const auto test_ids = resolve(data.labels(), tested);
    const auto test = partition(pools.test, test_ids, std::nullopt, 0).selected;
    out.per_split.push_back(run_experiment(cfg, pools.train, test));
  }

  const auto names = report_csv_header();
  std::vector<std::vector<std::optional<double>>> columns(names.size());
  for (const auto& r : out.per_split) {
    const auto values = scalar_metrics(r.report);
    for (std::size_t m = 0; m < names.size(); ++m) columns[m].push_back(values[m]);
  }
  for (std::size_t m = 0; m < names.size(); ++m) {
    std::vector<double> present;
    for (const auto& v : columns[m]) {
      if (v) present.push_back(*v);
    }
    if (!present.empty()) out.summary[names[m]] = mean_stddev(present);
  }

  auto& mean = out.mean;
  mean.labels = data.labels();
  std::vector<std::optional<double>> closed, attribution, auc, oscr_values;
  std::vector<std::optional<ClassScores>> seen_scores, unseen_scores;
  mean.per_class.assign(data.labels().size(), ClassScores{});
  for (const auto& r : out.per_split) {
    closed.push_back(r.report.closed_accuracy);
    attribution.push_back(r.report.attribution_accuracy);
    auc.push_back(r.report.auc);
    oscr_values.push_back(r.report.oscr);
    seen_scores.push_back(r.report.macro_seen);
    unseen_scores.push_back(r.report.macro_unseen);
    mean.seen_records += r.report.seen_records;
    mean.unseen_records += r.report.unseen_records;
  }
  mean.closed_accuracy = mean_of(closed);
  mean.attribution_accuracy = mean_of(attribution);
  mean.auc = mean_of(auc);
  mean.oscr = mean_of(oscr_values);
  mean.macro_seen = mean_scores(seen_scores);
  mean.macro_unseen = mean_scores(unseen_scores);
  for (LabelId c = 0; c < mean.per_class.size(); ++c) {
    std::vector<std::optional<ClassScores>> scores;
    for (const auto& r : out.per_split) scores.push_back(r.report.per_class[c]);
    mean.per_class[c] = *mean_scores(scores);
  }
  return out;
}

void SweepConfig::validate() const {
  if (shots_grid.empty()) throw Error(Errc::configuration, "shots grid is empty");
  for (std::size_t i = 0; i < shots_grid.size(); ++i) {
    if (shots_grid[i] == 0) throw Error(Errc::configuration, "shots must be positive");
    if (i > 0 && shots_grid[i] <= shots_grid[i - 1]) {
      throw Error(Errc::configuration, "shots grid must be strictly ascending");
    }
  }
  if (repeats == 0) throw Error(Errc::configuration, "repeats must be at least 1");
  base.validate();
}

std::vector<SweepRow> sweep_shots(const SweepConfig& cfg, const EmbeddingSet& train_data,
                                  const EmbeddingSet& test_data) {
  cfg.validate();
  const auto trained = train_for_experiment(cfg.base, train_data);
  const auto counts = test_data.class_counts();
  std::size_t smallest = test_data.size();
  for (const auto c : counts) {
    if (c > 0) smallest = std::min(smallest, c);
  }

  std::vector<SweepRow> rows;
  for (const auto shots : cfg.shots_grid) {
    for (std::size_t r = 0; r < cfg.repeats; ++r) {
      SweepRow row{shots, r, cfg.base.seed + r, std::nullopt, std::nullopt, {}};
      if (shots > smallest) {
        row.error = std::string(category_name(Errc::composition));
        rows.push_back(std::move(row));
        continue;
      }
      try {
        const auto res = evaluate_with_head(cfg.base, trained.head, test_data, shots, row.seed);
        row.accuracy = res.report.attribution_accuracy;
        row.closed_accuracy = res.report.closed_accuracy;
      } catch (const Error& e) {
        row.error = std::string(e.category());
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "shots,repeat,seed,accuracy,closed_accuracy,error\n";
  for (const auto& r : rows) {
    out << r.shots << ',' << r.repeat << ',' << r.seed << ','
        << (r.accuracy ? format_number(*r.accuracy) : "") << ','
        << (r.closed_accuracy ? format_number(*r.closed_accuracy) : "") << ',' << r.error << '\n';
  }
  return out.str();
}

std::optional<DetectionSummary> detection_summary(std::span<const EvalRecord> records,
                                                  const LabelTable& labels,
                                                  const std::string& real_name) {
  const auto real = labels.find(real_name);
  if (!real) return std::nullopt;
  std::vector<std::size_t> support(labels.size(), 0);
  for (const auto& r : records) {
    if (r.true_label) ++support[*r.true_label];
  }
  if (support[*real] == 0) return std::nullopt;
  DetectionSummary out;
  bool any_generator = false;
  for (LabelId c = 0; c < labels.size(); ++c) {
    if (c == *real || support[c] == 0) continue;
    any_generator = true;
    out.per_generator_accuracy[labels.name(c)] = detection_accuracy(records, *real, c);
  }
  if (!any_generator) return std::nullopt;
  out.accuracy = detection_accuracy(records, *real);
  out.auc = detection_auc(records, *real);
  return out;
}

}  // namespace embattr
