#pragma once

// Closed-set and open-set evaluation of attribution predictions.
//
// Seen records come from classes the embedding extractor was trained on (the
// known classes), unseen records from every other class. Support sets may
// hold exemplars of unseen classes too, so an unseen record only counts as a
// false positive through the posterior it gives to known classes:
//   CCR(t) = |{seen : predicted == true and confidence >  t}| / |seen|
//   FPR(t) = |{unseen : max over known k of posterior[k] >= t}| / |unseen|
// With no known set given, the FPR score is the plain confidence.
// OSCR is the trapezoidal area under CCR plotted against FPR.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "embattr/embedding_store.hpp"
#include "embattr/knn.hpp"

namespace embattr {

enum class DataPartition { seen, unseen };

struct EvalRecord {
  std::uint64_t sample_id = 0;
  std::optional<LabelId> true_label;  ///< nullopt is the UNKNOWN marker
  Prediction prediction;
  DataPartition partition = DataPartition::seen;
};

double ccr(std::span<const EvalRecord> records, double threshold);
double fpr(std::span<const EvalRecord> records, double threshold,
           std::span<const LabelId> known = {});

/// Largest posterior over `known`; the confidence when `known` is empty.
double open_score(const EvalRecord& record, std::span<const LabelId> known);

struct CurvePoint {
  double threshold;
  double ccr;
  double fpr;
};
/// Points in descending threshold order, hence nondecreasing CCR and FPR.
using ThresholdCurve = std::vector<CurvePoint>;

/// Thresholds: +inf, every distinct score (confidence for seen records,
/// open_score for unseen ones), the midpoint between each pair of
/// neighbouring distinct scores, and -inf. Midpoints matter
/// because CCR counts strictly above a threshold while FPR counts at or
/// above it; without them a perfect detector would only reach area 0.5.
ThresholdCurve threshold_curve(std::span<const EvalRecord> records,
                               std::span<const LabelId> known = {});

double oscr(std::span<const EvalRecord> records, std::span<const LabelId> known = {});

/// Mann-Whitney estimate of P(positive > negative), ties counted as half.
/// roc_auc(a, b) + roc_auc(b, a) is exactly 1.
double roc_auc(std::span<const double> positive, std::span<const double> negative);

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  ///< records whose true label is the class
};

struct MetricsReport {
  LabelTable labels;
  std::vector<LabelId> seen_ids;
  std::vector<LabelId> unseen_ids;  ///< classes with records outside seen_ids
  std::size_t seen_records = 0;
  std::size_t unseen_records = 0;

  std::optional<double> closed_accuracy;  ///< over seen records
  std::optional<double> attribution_accuracy;  ///< over every labeled record
  std::optional<double> auc;   ///< confidence, seen vs unseen
  std::optional<double> oscr;
  std::vector<ClassScores> per_class;  ///< indexed by label id
  std::optional<ClassScores> macro_seen;
  std::optional<ClassScores> macro_unseen;
};

/// Per-class scores come from the confusion of predicted against true labels;
/// a zero denominator yields 0. Records with an UNKNOWN true label count as
/// false positives of whatever they were assigned to. Throws Errc::validation
/// when a record's partition disagrees with seen_ids.
MetricsReport report(std::span<const EvalRecord> records, const LabelTable& labels,
                     std::span<const LabelId> seen_ids);

/// Real-vs-rest detection: a record is called synthetic when its predicted
/// label is not `real_id`. With a generator, only that generator's records
/// and the real records take part; otherwise every labeled record does.
double detection_accuracy(std::span<const EvalRecord> records, LabelId real_id,
                          std::optional<LabelId> generator = std::nullopt);

/// Same record selection; score is 1 - posterior[real_id], synthetic records
/// are the positives.
double detection_auc(std::span<const EvalRecord> records, LabelId real_id,
                     std::optional<LabelId> generator = std::nullopt);

}  // namespace embattr
