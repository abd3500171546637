#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "uqfuse/dataset.hpp"

namespace uqfuse {

struct Prediction {
  Label label;
  Label predicted;
  bool correct() const noexcept { return label == predicted; }
};

/// Correct/incorrect x accepted/rejected tallies.
struct Buckets {
  std::size_t ca = 0, cr = 0, ia = 0, ir = 0;
  std::size_t total() const noexcept { return ca + cr + ia + ir; }
};

struct OutcomeCounts {
  Buckets overall;
  std::array<Buckets, 2> per_class;  // indexed by true label
};

/// Accepts when u <= tau.
OutcomeCounts outcome_counts(std::span<const Prediction> preds, std::span<const double> u,
                             double tau);

/// Percentages. An empty denominator yields the vacuous value (CPA and IPR
/// count as 100, rejection rates as 0) and sets the matching flag. The
/// incorrect-rejection rate and IPR are the same quantity, and the correct
/// rejection rate is 100 - CPA.
struct RateSet {
  double total_rate = 0.0;
  double correct_rate = 0.0;
  double incorrect_rate = 0.0;
  double cpa = 0.0;
  double ipr = 0.0;
  bool total_vacuous = false;
  bool cpa_vacuous = false;
  bool ipr_vacuous = false;
};

struct RejectionReport {
  RateSet overall;
  std::array<RateSet, 2> per_class;
};

RateSet rates(const Buckets& b);
RejectionReport rates(const OutcomeCounts& counts);

/// CPA_AI + IPR_AI + CPA_Nature + IPR_Nature, in [0, 400].
double selection_score(const OutcomeCounts& counts);

struct SweepResult {
  double tau_star = 0.0;
  double best_score = 0.0;
  std::vector<double> taus;
  std::vector<double> scores;
};

inline constexpr std::size_t kSweepGrid = 1000;

/// Evenly spaced grid over [min u, max u]; ties go to the smallest tau.
SweepResult sweep_threshold(std::span<const Prediction> preds, std::span<const double> u,
                            std::size_t grid = kSweepGrid);

/// Positive class is Nature (1).
struct ConfusionMatrix {
  std::size_t tn = 0, fp = 0, fn = 0, tp = 0;
};

struct ClassificationMetrics {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm);
ClassificationMetrics classification_metrics(std::span<const Prediction> preds);

}  // namespace uqfuse
