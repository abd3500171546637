#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "uqfuse/attacks.hpp"
#include "uqfuse/dataset.hpp"
#include "uqfuse/eval.hpp"
#include "uqfuse/fusion.hpp"
#include "uqfuse/gp.hpp"
#include "uqfuse/head.hpp"
#include "uqfuse/mcdropout.hpp"
#include "uqfuse/pso.hpp"

namespace uqfuse {

/// Measures a report can evaluate: the six fused columns, `prob`
/// (1 - max(p, 1 - p)), `ee`, and `combined` (requires a policy).
std::vector<std::string> measure_names();
std::vector<double> measure_values(std::span<const UncertaintyRecord> records,
                                   const std::string& measure,
                                   const RejectionPolicy* policy = nullptr);

struct MeasureEvaluation {
  std::string measure;
  double tau = 0.0;
  OutcomeCounts counts;
  RejectionReport rates;
  double score = 0.0;
};

MeasureEvaluation evaluate_measure(const std::string& measure, std::span<const Prediction> preds,
                                   std::span<const double> u, double tau);

/// JSON object for one (dataset, measure) pair: counts, rates, CPA, IPR, Score.
std::string evaluation_json(const MeasureEvaluation& e);
/// Report for `uqfuse evaluate`: the policy applied to one score file, plus
/// classification metrics.
std::string policy_report_json(std::span<const UncertaintyRecord> records,
                               const RejectionPolicy& policy);

std::string sweep_curve_csv(const SweepResult& s);
std::string calibration_history_csv(std::span<const double> history);

struct ShiftConfig {
  /// Translation of the class-0 mean along the all-ones direction.
  double along = 1.1;
  /// Magnitude of an extra translation orthogonal to the all-ones direction.
  double orthogonal = 24.0;
  double covariance_scale = 1.0;
};

/// Class-0 translation vector for the pipeline's shifted split.
std::vector<double> shift_vector(const ShiftConfig& cfg, std::size_t dim);

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  std::size_t n_per_class = 1000;
  std::size_t dim = 16;
  double separation = 1.1;

  ShiftConfig shift;
  TrainConfig head;
  GpFitConfig gp;
  McConfig mc;
  PsoConfig pso;

  bool run_attacks = true;
  double attack_epsilon = 0.25;
  std::size_t attack_steps = 10;

  std::filesystem::path out_dir = "uqfuse_run";
};

/// Validates the configuration; throws InvalidArgument naming the field.
void validate(const RunConfig& cfg);

/// Module configs with their seeds derived from the global one.
RunConfig resolve_seeds(const RunConfig& cfg);

std::string config_json(const RunConfig& cfg);
/// Inverse of config_json for the user-settable fields; missing keys keep
/// their defaults, derived per-module seeds are ignored.
RunConfig run_config_from_json(const std::string& text, const std::string& origin = "<memory>");

struct SplitResult {
  std::string name;
  EmbeddingDataset data;
  std::vector<UncertaintyRecord> records;
};

struct ExperimentResult {
  RunConfig config;  // resolved
  ClassifierHead head;
  SparseGP gp;
  std::vector<double> gp_elbo;
  Calibration calibration;
  /// Single-measure thresholds swept on the calibration split.
  std::map<std::string, SweepResult> sweeps;
  std::vector<SplitResult> splits;  // calib, test, shift, then attacks if enabled
  std::string report;               // report.json contents

  const SplitResult& split(const std::string& name) const;
  /// Evaluation of `measure` on `split` at its calibrated threshold.
  MeasureEvaluation evaluate(const std::string& split, const std::string& measure) const;
};

ExperimentResult run_experiment(const RunConfig& cfg);

/// Runs the experiment and writes head.json, gp.json, scores_<split>.csv,
/// policy.json, calibration_history.csv and report.json into cfg.out_dir.
ExperimentResult run_pipeline(const RunConfig& cfg);

}  // namespace uqfuse
