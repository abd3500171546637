#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "uqfuse/eval.hpp"
#include "uqfuse/fusion.hpp"

namespace uqfuse {

struct Bounds {
  double lo = 0.0;
  double hi = 1.0;
};

struct PsoConfig {
  std::size_t swarm_size = 40;
  std::size_t iterations = 200;
  double inertia = 0.7;
  double cognitive = 1.5;
  double social = 1.5;
  std::vector<Bounds> bounds;  // empty: calibrate_* fills in the defaults
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct Particle {
  std::vector<double> position;
  std::vector<double> velocity;
  std::vector<double> best_position;
  double best_value = 0.0;
};

struct PsoResult {
  std::vector<double> best_position;
  double best_value = 0.0;
  /// Global best after initialisation (entry 0) and after every iteration.
  std::vector<double> history;
};

using Objective = std::function<double(std::span<const double>)>;

/// Synchronous global-best PSO. Each iteration moves every particle, clips
/// positions to the box (zeroing the velocity component that hit a bound),
/// evaluates all particles, then updates personal and global bests.
PsoResult pso_minimize(const Objective& objective, const PsoConfig& cfg);

/// Four-term CPA/IPR score of u = normalized * w against tau.
double rejection_score(const Eigen::MatrixXd& normalized, std::span<const Prediction> preds,
                       std::span<const double> weights, double tau);
double rejection_score(std::span<const UncertaintyRecord> records, const ZStats& zstats,
                       std::span<const double> weights, double tau);

inline constexpr Bounds kWeightBounds{0.0, 1.0};
inline constexpr Bounds kTauBounds{-10.0, 10.0};

struct Calibration {
  RejectionPolicy policy;
  double score = 0.0;
  std::vector<double> history;  // best score (not its negative) per iteration
};

/// Fits z-stats on `raw` (N x m), then searches [w_1..w_m, tau] maximising
/// rejection_score. Default bounds: [0, 1] per weight, [-10, 10] for tau.
Calibration calibrate_matrix(const Eigen::MatrixXd& raw, std::span<const Prediction> preds,
                             const PsoConfig& cfg);
Calibration calibrate_policy(std::span<const UncertaintyRecord> records, const PsoConfig& cfg);

}  // namespace uqfuse
