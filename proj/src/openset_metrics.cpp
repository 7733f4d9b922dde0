#include "embattr/openset_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "embattr/error.hpp"

namespace embattr {

namespace {

bool is_correct(const EvalRecord& r) {
  return r.true_label && r.prediction.predicted == *r.true_label;
}

std::size_t count_partition(std::span<const EvalRecord> records, DataPartition part) {
  return static_cast<std::size_t>(std::count_if(
      records.begin(), records.end(), [part](const EvalRecord& r) { return r.partition == part; }));
}

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

ClassScores mean_scores(const std::vector<ClassScores>& per_class, std::span<const LabelId> ids) {
  ClassScores m;
  for (const auto id : ids) {
    m.precision += per_class[id].precision;
    m.recall += per_class[id].recall;
    m.f1 += per_class[id].f1;
    m.support += per_class[id].support;
  }
  const auto n = static_cast<double>(ids.size());
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  return m;
}

bool in_detection(const EvalRecord& r, LabelId real_id, std::optional<LabelId> generator) {
  if (!r.true_label) return false;
  return *r.true_label == real_id || !generator || *r.true_label == *generator;
}

}  // namespace

double ccr(std::span<const EvalRecord> records, double threshold) {
  std::size_t seen = 0;
  std::size_t hits = 0;
  for (const auto& r : records) {
    if (r.partition != DataPartition::seen) continue;
    ++seen;
    if (is_correct(r) && r.prediction.confidence > threshold) ++hits;
  }
  if (seen == 0) throw Error(Errc::undefined_metric, "CCR needs at least one seen record");
  return ratio(hits, seen);
}

double open_score(const EvalRecord& record, std::span<const LabelId> known) {
  if (known.empty()) return record.prediction.confidence;
  double best = 0.0;
  for (const auto k : known) {
    if (k < record.prediction.posterior.size()) best = std::max(best, record.prediction.posterior[k]);
  }
  return best;
}

double fpr(std::span<const EvalRecord> records, double threshold,
           std::span<const LabelId> known) {
  std::size_t unseen = 0;
  std::size_t accepted = 0;
  for (const auto& r : records) {
    if (r.partition != DataPartition::unseen) continue;
    ++unseen;
    if (open_score(r, known) >= threshold) ++accepted;
  }
  if (unseen == 0) throw Error(Errc::undefined_metric, "FPR needs at least one unseen record");
  return ratio(accepted, unseen);
}

ThresholdCurve threshold_curve(std::span<const EvalRecord> records,
                               std::span<const LabelId> known) {
  std::vector<double> correct;  // confidences of correctly classified seen records
  std::vector<double> unseen;
  std::vector<double> all;
  std::size_t seen = 0;
  for (const auto& r : records) {
    if (r.partition == DataPartition::seen) {
      ++seen;
      all.push_back(r.prediction.confidence);
      if (is_correct(r)) correct.push_back(r.prediction.confidence);
    } else {
      unseen.push_back(open_score(r, known));
      all.push_back(unseen.back());
    }
  }
  if (seen == 0) throw Error(Errc::undefined_metric, "CCR needs at least one seen record");
  if (unseen.empty()) throw Error(Errc::undefined_metric, "FPR needs at least one unseen record");
  std::sort(correct.begin(), correct.end());
  std::sort(unseen.begin(), unseen.end());
  std::sort(all.begin(), all.end(), std::greater<>());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  std::vector<double> thresholds{std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < all.size(); ++i) {
    thresholds.push_back(all[i]);
    if (i + 1 < all.size()) thresholds.push_back(all[i] + (all[i + 1] - all[i]) / 2.0);
  }
  thresholds.push_back(-std::numeric_limits<double>::infinity());

  ThresholdCurve curve;
  curve.reserve(thresholds.size());
  for (const double t : thresholds) {
    const auto above = static_cast<std::size_t>(
        correct.end() - std::upper_bound(correct.begin(), correct.end(), t));
    const auto at_or_above = static_cast<std::size_t>(
        unseen.end() - std::lower_bound(unseen.begin(), unseen.end(), t));
    curve.push_back({t, ratio(above, seen), ratio(at_or_above, unseen.size())});
  }
  return curve;
}

double oscr(std::span<const EvalRecord> records, std::span<const LabelId> known) {
  const auto curve = threshold_curve(records, known);
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * (curve[i].ccr + curve[i - 1].ccr) / 2.0;
  }
  return area;
}

double roc_auc(std::span<const double> positive, std::span<const double> negative) {
  if (positive.empty() || negative.empty()) {
    throw Error(Errc::undefined_metric, "AUC needs scores on both sides");
  }
  std::vector<double> neg(negative.begin(), negative.end());
  std::sort(neg.begin(), neg.end());
  // Twice the Mann-Whitney U statistic, in integers.
  std::uint64_t twice_u = 0;
  for (const double s : positive) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), s);
    const auto hi = std::upper_bound(lo, neg.end(), s);
    twice_u += 2 * static_cast<std::uint64_t>(lo - neg.begin()) + static_cast<std::uint64_t>(hi - lo);
  }
  const std::uint64_t total = 2 * static_cast<std::uint64_t>(positive.size()) * neg.size();
  // Taking the complement above one half makes auc(a,b) + auc(b,a) == 1 in floating point.
  if (2 * twice_u <= total) return static_cast<double>(twice_u) / static_cast<double>(total);
  return 1.0 - static_cast<double>(total - twice_u) / static_cast<double>(total);
}

MetricsReport report(std::span<const EvalRecord> records, const LabelTable& labels,
                     std::span<const LabelId> seen_ids) {
  if (records.empty()) throw Error(Errc::undefined_metric, "no records to evaluate");
  const std::size_t classes = labels.size();
  std::vector<char> is_seen(classes, 0);
  for (const auto id : seen_ids) {
    if (id >= classes) throw Error(Errc::unknown_label, "seen label id outside the label table");
    is_seen[id] = 1;
  }

  std::vector<std::size_t> tp(classes, 0);
  std::vector<std::size_t> fp(classes, 0);
  std::vector<std::size_t> fn(classes, 0);
  std::vector<std::size_t> support(classes, 0);
  std::size_t labeled = 0;
  std::size_t labeled_correct = 0;
  std::size_t seen_correct = 0;
  for (const auto& r : records) {
    const auto pred = r.prediction.predicted;
    if (pred >= classes) throw Error(Errc::label_out_of_range, "predicted label out of range");
    const bool seen_label = r.true_label && *r.true_label < classes && is_seen[*r.true_label];
    if (r.true_label && *r.true_label >= classes) {
      throw Error(Errc::label_out_of_range, "true label out of range");
    }
    if ((r.partition == DataPartition::seen) != seen_label) {
      throw Error(Errc::validation, "record " + std::to_string(r.sample_id) +
                                        " has a partition that disagrees with the seen classes");
    }
    if (!r.true_label) {
      ++fp[pred];
      continue;
    }
    const auto truth = *r.true_label;
    ++labeled;
    ++support[truth];
    if (pred == truth) {
      ++tp[truth];
      ++labeled_correct;
      if (seen_label) ++seen_correct;
    } else {
      ++fp[pred];
      ++fn[truth];
    }
  }

  MetricsReport rep;
  rep.labels = labels;
  rep.seen_ids.assign(seen_ids.begin(), seen_ids.end());
  std::sort(rep.seen_ids.begin(), rep.seen_ids.end());
  rep.seen_ids.erase(std::unique(rep.seen_ids.begin(), rep.seen_ids.end()), rep.seen_ids.end());
  for (LabelId c = 0; c < classes; ++c) {
    if (!is_seen[c] && support[c] > 0) rep.unseen_ids.push_back(c);
  }
  rep.seen_records = count_partition(records, DataPartition::seen);
  rep.unseen_records = count_partition(records, DataPartition::unseen);

  rep.per_class.resize(classes);
  for (LabelId c = 0; c < classes; ++c) {
    auto& s = rep.per_class[c];
    s.support = support[c];
    s.precision = ratio(tp[c], tp[c] + fp[c]);
    s.recall = ratio(tp[c], tp[c] + fn[c]);
    s.f1 = s.precision + s.recall > 0.0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
  }
  if (!rep.seen_ids.empty()) rep.macro_seen = mean_scores(rep.per_class, rep.seen_ids);
  if (!rep.unseen_ids.empty()) rep.macro_unseen = mean_scores(rep.per_class, rep.unseen_ids);

  if (rep.seen_records > 0) rep.closed_accuracy = ratio(seen_correct, rep.seen_records);
  if (labeled > 0) rep.attribution_accuracy = ratio(labeled_correct, labeled);
  if (rep.seen_records > 0 && rep.unseen_records > 0) {
    std::vector<double> pos;
    std::vector<double> neg;
    for (const auto& r : records) {
      if (r.partition == DataPartition::seen) {
        pos.push_back(r.prediction.confidence);
      } else {
        neg.push_back(open_score(r, rep.seen_ids));
      }
    }
    rep.auc = roc_auc(pos, neg);
    rep.oscr = oscr(records, rep.seen_ids);
  }
  return rep;
}

double detection_accuracy(std::span<const EvalRecord> records, LabelId real_id,
                          std::optional<LabelId> generator) {
  std::size_t total = 0;
  std::size_t correct = 0;
  for (const auto& r : records) {
    if (!in_detection(r, real_id, generator)) continue;
    ++total;
    const bool truly_real = *r.true_label == real_id;
    const bool called_real = r.prediction.predicted == real_id;
    if (truly_real == called_real) ++correct;
  }
  if (total == 0) throw Error(Errc::undefined_metric, "no records for detection accuracy");
  return ratio(correct, total);
}

double detection_auc(std::span<const EvalRecord> records, LabelId real_id,
                     std::optional<LabelId> generator) {
  std::vector<double> synthetic;
  std::vector<double> real;
  for (const auto& r : records) {
    if (!in_detection(r, real_id, generator)) continue;
    if (real_id >= r.prediction.posterior.size()) {
      throw Error(Errc::label_out_of_range, "real label outside the posterior");
    }
    const double score = 1.0 - r.prediction.posterior[real_id];
    (*r.true_label == real_id ? real : synthetic).push_back(score);
  }
  return roc_auc(synthetic, real);
}

}  // namespace embattr
