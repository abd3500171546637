#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "uqfuse/head.hpp"

namespace uqfuse {

inline constexpr double kFisherEpsilon = 1e-12;

/// Diagonal of the per-instance Fisher information, split by head layer in
/// the head's flattened parameter order.
struct FisherDiag {
  std::vector<Eigen::VectorXd> layers;
  double epsilon = kFisherEpsilon;

  Eigen::Index size() const;
  Eigen::VectorXd flat() const;
};

/// How Frobenius norms combine across layers.
enum class FrobeniusPooling {
  PoolThenRoot,   // sqrt of all squared entries pooled over layers
  SumLayerNorms,  // sum of per-layer norms
};

struct FisherEntropy {
  double value = 0.0;
  bool degenerate_layer = false;  // some layer had zero trace and contributed 0
};

struct FisherSummary {
  double trace = 0.0;
  double frobenius = 0.0;
  double entropy = 0.0;
  bool degenerate_layer = false;
  double fisher_total_u = 0.0;
  double fisher_frobenius_u = 0.0;
  double fisher_entropy_u = 0.0;
};

/// 0.5 * g0 (.) g0 + 0.5 * g1 (.) g1 with gy the BCE gradient for label y,
/// evaluated with dropout off.
FisherDiag fim_diag(const ClassifierHead& head, std::span<const double> x);

/// Splits a flat diagonal into the head's layer blocks.
FisherDiag fisher_from_flat(const ClassifierHead& head, const Eigen::VectorXd& flat,
                            double epsilon = kFisherEpsilon);

double fisher_trace(const FisherDiag& d);
double fisher_frobenius(const FisherDiag& d,
                        FrobeniusPooling pooling = FrobeniusPooling::PoolThenRoot);
FisherEntropy fisher_entropy(const FisherDiag& d);

struct FisherUncertainties {
  double total = 0.0;
  double frobenius = 0.0;
  double entropy = 0.0;
};

FisherUncertainties fisher_uncertainties(double trace, double frob, double ent,
                                         double epsilon = kFisherEpsilon);

FisherSummary fisher_summary(const ClassifierHead& head, std::span<const double> x,
                             FrobeniusPooling pooling = FrobeniusPooling::PoolThenRoot);

}  // namespace uqfuse
