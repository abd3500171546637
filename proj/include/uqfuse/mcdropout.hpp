#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "uqfuse/head.hpp"

namespace uqfuse {

struct McConfig {
  std::size_t n_passes = 20;
  std::uint64_t seed = 0;
  double prob_clip = 1e-7;
};

struct McResult {
  std::vector<double> probs;
  double entropy_of_expected = 0.0;
  double expected_entropy = 0.0;
  double knowledge_uncertainty = 0.0;
  bool deterministic_head = false;  // dropout_rate == 0, every pass identical
};

/// Pass i uses a mask drawn from derive_seed(cfg.seed, i).
std::vector<double> mc_passes(const ClassifierHead& head, std::span<const double> x,
                              const McConfig& cfg);

/// Binary entropy in nats.
double binary_entropy(double p);
double entropy_of_expected(std::span<const double> probs);
double expected_entropy(std::span<const double> probs);
inline double knowledge_uncertainty(double eoe, double ee) { return eoe - ee; }

McResult mc_dropout(const ClassifierHead& head, std::span<const double> x, const McConfig& cfg);

}  // namespace uqfuse
