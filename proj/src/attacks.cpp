#include "uqfuse/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "uqfuse/error.hpp"
#include "uqfuse/parallel.hpp"

namespace uqfuse {

namespace {

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

void check(const AttackConfig& cfg) {
  require(cfg.epsilon >= 0.0 && std::isfinite(cfg.epsilon), "epsilon must be nonnegative");
  require(cfg.step_size() <= cfg.epsilon || cfg.epsilon == 0.0, "alpha must not exceed epsilon");
  require(cfg.steps >= 1, "steps must be at least 1");
  require(cfg.clamp.lo.size() == cfg.clamp.hi.size(), "clamp bounds must have equal lengths");
  for (std::size_t k = 0; k < cfg.clamp.lo.size(); ++k)
    require(cfg.clamp.lo[k] < cfg.clamp.hi[k], "clamp_min must be below clamp_max");
}

// Moves x0 + delta back inside [x0 - eps, x0 + eps]; x0 +- eps may round outward,
// so step toward x0 until the ball holds exactly.
double project(double v, double x0, double eps) {
  v = std::clamp(v, x0 - eps, x0 + eps);
  while (std::abs(v - x0) > eps) v = std::nextafter(v, x0);
  return v;
}

}  // namespace

void ClampBox::apply(std::span<double> x) const {
  if (!bounded()) return;
  require(lo.size() == 1 || lo.size() == x.size(), "clamp box size does not match input");
  for (std::size_t k = 0; k < x.size(); ++k) {
    const std::size_t j = lo.size() == 1 ? 0 : k;
    x[k] = std::clamp(x[k], lo[j], hi[j]);
  }
}

ClampBox clamp_bounds_from_norm(std::span<const double> mean, std::span<const double> std) {
  require(mean.size() == std.size() && !mean.empty(), "mean and std must have equal length");
  ClampBox box;
  for (std::size_t c = 0; c < mean.size(); ++c) {
    require(std[c] > 0.0, "std must be positive");
    box.lo.push_back((0.0 - mean[c]) / std[c]);
    box.hi.push_back((1.0 - mean[c]) / std[c]);
  }
  return box;
}

std::vector<double> fgsm(const ClassifierHead& head, std::span<const double> x, Label y,
                         const AttackConfig& cfg) {
  check(cfg);
  const Eigen::VectorXd g = head_grad_input(head, x, y);
  std::vector<double> adv(x.begin(), x.end());
  for (std::size_t k = 0; k < adv.size(); ++k)
    adv[k] = project(adv[k] + cfg.epsilon * sign(g[static_cast<Eigen::Index>(k)]), x[k], cfg.epsilon);
  cfg.clamp.apply(adv);
  return adv;
}

std::vector<double> pgd(const ClassifierHead& head, std::span<const double> x, Label y,
                        const AttackConfig& cfg) {
  check(cfg);
  const double alpha = cfg.step_size();
  std::vector<double> adv(x.begin(), x.end());
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const Eigen::VectorXd g = head_grad_input(head, adv, y);
    for (std::size_t k = 0; k < adv.size(); ++k) {
      adv[k] = project(adv[k] + alpha * sign(g[static_cast<Eigen::Index>(k)]), x[k], cfg.epsilon);
    }
    cfg.clamp.apply(adv);
  }
  return adv;
}

EmbeddingDataset attack_dataset(const ClassifierHead& head, const EmbeddingDataset& data,
                                AttackMethod method, const AttackConfig& cfg,
                                std::size_t threads) {
  check(cfg);
  if (head.input_dim() != data.dim()) throw_invalid("attack: head and dataset dimensions differ");
  std::vector<Sample> out(data.samples());
  parallel_for(out.size(), threads, [&](std::size_t i) {
    const auto& s = data[i];
    out[i].embedding = method == AttackMethod::Fgsm ? fgsm(head, s.embedding, s.label, cfg)
                                                    : pgd(head, s.embedding, s.label, cfg);
  });
  return EmbeddingDataset(std::move(out), data.dim());
}

}  // namespace uqfuse
