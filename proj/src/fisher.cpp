#include "uqfuse/fisher.hpp"

#include <cmath>

#include "uqfuse/error.hpp"

namespace uqfuse {

Eigen::Index FisherDiag::size() const {
  Eigen::Index n = 0;
  for (const auto& l : layers) n += l.size();
  return n;
}

Eigen::VectorXd FisherDiag::flat() const {
  Eigen::VectorXd out(size());
  Eigen::Index off = 0;
  for (const auto& l : layers) {
    out.segment(off, l.size()) = l;
    off += l.size();
  }
  return out;
}

FisherDiag fisher_from_flat(const ClassifierHead& head, const Eigen::VectorXd& flat,
                            double epsilon) {
  require(static_cast<std::size_t>(flat.size()) == head.num_params(),
          "Fisher diagonal length does not match head parameter count");
  FisherDiag d;
  d.epsilon = epsilon;
  for (const auto& [off, n] : head.layer_blocks())
    d.layers.push_back(flat.segment(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(n)));
  return d;
}

FisherDiag fim_diag(const ClassifierHead& head, std::span<const double> x) {
  const Eigen::VectorXd g0 = head_grad_params(head, x, Label::AI);
  const Eigen::VectorXd g1 = head_grad_params(head, x, Label::Nature);
  return fisher_from_flat(head, 0.5 * g0.cwiseAbs2() + 0.5 * g1.cwiseAbs2());
}

double fisher_trace(const FisherDiag& d) {
  double t = 0.0;
  for (const auto& l : d.layers) t += l.sum();
  return t;
}

double fisher_frobenius(const FisherDiag& d, FrobeniusPooling pooling) {
  if (pooling == FrobeniusPooling::SumLayerNorms) {
    double s = 0.0;
    for (const auto& l : d.layers) s += l.norm();
    return s;
  }
  double sq = 0.0;
  for (const auto& l : d.layers) sq += l.squaredNorm();
  return std::sqrt(sq);
}

FisherEntropy fisher_entropy(const FisherDiag& d) {
  FisherEntropy out;
  if (d.layers.empty()) return out;
  double total = 0.0;
  for (const auto& l : d.layers) {
    const double tr = l.sum();
    if (!(tr > 0.0)) {
      out.degenerate_layer = true;
      continue;
    }
    double h = 0.0;
    for (Eigen::Index k = 0; k < l.size(); ++k) {
      const double p = l[k] / tr;
      h -= p * std::log(p + d.epsilon);
    }
    total += h;
  }
  out.value = total / static_cast<double>(d.layers.size());
  return out;
}

FisherUncertainties fisher_uncertainties(double trace, double frob, double ent, double epsilon) {
  return {1.0 / (trace + epsilon), 1.0 / (frob + epsilon), 1.0 / (ent + epsilon)};
}

FisherSummary fisher_summary(const ClassifierHead& head, std::span<const double> x,
                             FrobeniusPooling pooling) {
  const auto d = fim_diag(head, x);
  FisherSummary s;
  s.trace = fisher_trace(d);
  s.frobenius = fisher_frobenius(d, pooling);
  const auto ent = fisher_entropy(d);
  s.entropy = ent.value;
  s.degenerate_layer = ent.degenerate_layer;
  const auto u = fisher_uncertainties(s.trace, s.frobenius, s.entropy, d.epsilon);
  s.fisher_total_u = u.total;
  s.fisher_frobenius_u = u.frobenius;
  s.fisher_entropy_u = u.entropy;
  return s;
}

}  // namespace uqfuse
