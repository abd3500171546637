#include "uqfuse/pso.hpp"

#include <algorithm>
#include <limits>

#include "uqfuse/error.hpp"
#include "uqfuse/parallel.hpp"
#include "uqfuse/rng.hpp"

namespace uqfuse {

PsoResult pso_minimize(const Objective& objective, const PsoConfig& cfg) {
  require(cfg.swarm_size >= 2, "swarm_size must be at least 2");
  require(!cfg.bounds.empty(), "PSO needs at least one bounded dimension");
  require(cfg.inertia > 0 && cfg.cognitive > 0 && cfg.social > 0,
          "inertia, cognitive and social coefficients must be positive");
  for (const auto& b : cfg.bounds) require(b.lo < b.hi, "every bound needs min < max");

  const std::size_t dim = cfg.bounds.size();
  Rng rng(cfg.seed, 0x950);
  std::vector<Particle> swarm(cfg.swarm_size);
  for (auto& p : swarm) {
    p.position.resize(dim);
    p.velocity.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      const auto [lo, hi] = cfg.bounds[k];
      p.position[k] = rng.uniform(lo, hi);
      p.velocity[k] = rng.uniform(-(hi - lo), hi - lo);
    }
  }

  std::vector<double> values(swarm.size());
  auto evaluate_all = [&] {
    parallel_for(swarm.size(), cfg.threads,
                 [&](std::size_t i) { values[i] = objective(swarm[i].position); });
  };

  PsoResult out;
  out.best_value = std::numeric_limits<double>::infinity();
  evaluate_all();
  for (std::size_t i = 0; i < swarm.size(); ++i) {
    swarm[i].best_position = swarm[i].position;
    swarm[i].best_value = values[i];
    if (values[i] < out.best_value) {
      out.best_value = values[i];
      out.best_position = swarm[i].position;
    }
  }
  out.history.push_back(out.best_value);

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    for (auto& p : swarm) {
      for (std::size_t k = 0; k < dim; ++k) {
        const double rp = rng.uniform(), rg = rng.uniform();
        p.velocity[k] = cfg.inertia * p.velocity[k] +
                        cfg.cognitive * rp * (p.best_position[k] - p.position[k]) +
                        cfg.social * rg * (out.best_position[k] - p.position[k]);
        p.position[k] += p.velocity[k];
        const auto [lo, hi] = cfg.bounds[k];
        if (p.position[k] <= lo) {
          p.position[k] = lo;
          p.velocity[k] = 0.0;
        } else if (p.position[k] >= hi) {
          p.position[k] = hi;
          p.velocity[k] = 0.0;
        }
      }
    }
    evaluate_all();
    for (std::size_t i = 0; i < swarm.size(); ++i) {
      if (values[i] < swarm[i].best_value) {
        swarm[i].best_value = values[i];
        swarm[i].best_position = swarm[i].position;
      }
      if (values[i] < out.best_value) {
        out.best_value = values[i];
        out.best_position = swarm[i].position;
      }
    }
    out.history.push_back(out.best_value);
  }
  return out;
}

double rejection_score(const Eigen::MatrixXd& normalized, std::span<const Prediction> preds,
                       std::span<const double> weights, double tau) {
  require(normalized.rows() > 0, "rejection_score: no records");
  require(static_cast<std::size_t>(normalized.rows()) == preds.size(),
          "rejection_score: length mismatch");
  require(static_cast<std::size_t>(normalized.cols()) == weights.size(),
          "rejection_score: weight width mismatch");
  const Eigen::Map<const Eigen::VectorXd> w(weights.data(), static_cast<Eigen::Index>(weights.size()));
  const Eigen::VectorXd u = normalized * w;
  return selection_score(outcome_counts(preds, std::span<const double>(u.data(), static_cast<std::size_t>(u.size())), tau));
}

double rejection_score(std::span<const UncertaintyRecord> records, const ZStats& zstats,
                       std::span<const double> weights, double tau) {
  const auto preds = predictions(records);
  return rejection_score(normalize(column_matrix(records), zstats), preds, weights, tau);
}

Calibration calibrate_matrix(const Eigen::MatrixXd& raw, std::span<const Prediction> preds,
                             const PsoConfig& cfg) {
  require(static_cast<std::size_t>(raw.rows()) == preds.size(), "calibrate: length mismatch");
  bool has[2] = {false, false};
  for (const auto& p : preds) has[to_int(p.label)] = true;
  if (!has[0] || !has[1]) throw_invalid("calibration set must contain both classes");

  const std::size_t m = static_cast<std::size_t>(raw.cols());
  PsoConfig c = cfg;
  if (c.bounds.empty()) {
    c.bounds.assign(m, kWeightBounds);
    c.bounds.push_back(kTauBounds);
  }
  require(c.bounds.size() == m + 1, "calibrate: bounds must cover every weight and tau");

  Calibration out;
  out.policy.zstats = fit_zstats(raw);
  const Eigen::MatrixXd z = normalize(raw, out.policy.zstats);
  const auto objective = [&](std::span<const double> pos) {
    return -rejection_score(z, preds, pos.first(m), pos[m]);
  };
  const auto res = pso_minimize(objective, c);
  out.policy.weights.assign(res.best_position.begin(), res.best_position.begin() + static_cast<std::ptrdiff_t>(m));
  out.policy.tau = res.best_position[m];
  out.score = -res.best_value;
  for (double v : res.history) out.history.push_back(-v);
  return out;
}

Calibration calibrate_policy(std::span<const UncertaintyRecord> records, const PsoConfig& cfg) {
  const auto preds = predictions(records);
  return calibrate_matrix(column_matrix(records), preds, cfg);
}

}  // namespace uqfuse
