#pragma once

#include <span>
#include <utility>
#include <vector>

#include "uqfuse/dataset.hpp"
#include "uqfuse/head.hpp"

namespace uqfuse {

/// Per-coordinate box; empty vectors mean unbounded, a single value is
/// broadcast to every coordinate.
struct ClampBox {
  std::vector<double> lo;
  std::vector<double> hi;

  bool bounded() const noexcept { return !lo.empty(); }
  void apply(std::span<double> x) const;
};

struct AttackConfig {
  double epsilon = 0.03;
  double alpha = 0.0;  // PGD step; <= 0 selects epsilon / 3
  std::size_t steps = 10;
  ClampBox clamp;

  double step_size() const noexcept { return alpha > 0.0 ? alpha : epsilon / 3.0; }
};

/// Valid-pixel box [0, 1] expressed in normalized units (x - mean) / std.
ClampBox clamp_bounds_from_norm(std::span<const double> mean, std::span<const double> std);

/// Untargeted one-step attack: clamp(x + eps * sign(grad_x BCE)), sign(0) = 0.
std::vector<double> fgsm(const ClassifierHead& head, std::span<const double> x, Label y,
                         const AttackConfig& cfg);

/// `steps` iterations of x <- clamp(project_eps(x + alpha * sign(grad))),
/// starting at x (no random start).
std::vector<double> pgd(const ClassifierHead& head, std::span<const double> x, Label y,
                        const AttackConfig& cfg);

enum class AttackMethod { Fgsm, Pgd };

/// Perturbs every sample against its true label; ids and labels unchanged.
EmbeddingDataset attack_dataset(const ClassifierHead& head, const EmbeddingDataset& data,
                                AttackMethod method, const AttackConfig& cfg,
                                std::size_t threads = 1);

}  // namespace uqfuse
