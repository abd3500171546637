#include "uqfuse/mcdropout.hpp"

#include <algorithm>
#include <cmath>

#include "uqfuse/error.hpp"

namespace uqfuse {

namespace {

void check(const McConfig& cfg) {
  require(cfg.n_passes >= 2, "n_passes must be at least 2");
  require(cfg.prob_clip > 0.0 && cfg.prob_clip < 0.5, "prob_clip must lie in (0, 0.5)");
}

}  // namespace

std::vector<double> mc_passes(const ClassifierHead& head, std::span<const double> x,
                              const McConfig& cfg) {
  check(cfg);
  std::vector<double> probs(cfg.n_passes);
  for (std::size_t i = 0; i < cfg.n_passes; ++i) {
    double z;
    if (head.dropout_rate() > 0.0) {
      Rng rng(derive_seed(cfg.seed, i));
      const auto mask = draw_mask(head, rng);
      z = head_forward(head, x, &mask);
    } else {
      z = head_forward(head, x);
    }
    probs[i] = std::clamp(sigmoid(z), cfg.prob_clip, 1.0 - cfg.prob_clip);
  }
  return probs;
}

double binary_entropy(double p) {
  double h = 0.0;
  if (p > 0.0) h -= p * std::log(p);
  if (p < 1.0) h -= (1.0 - p) * std::log1p(-p);
  return h;
}

double entropy_of_expected(std::span<const double> probs) {
  require(!probs.empty(), "probability vector is empty");
  double mean = 0.0;
  for (double p : probs) mean += p;
  return binary_entropy(mean / static_cast<double>(probs.size()));
}

double expected_entropy(std::span<const double> probs) {
  require(!probs.empty(), "probability vector is empty");
  double s = 0.0;
  for (double p : probs) s += binary_entropy(p);
  return s / static_cast<double>(probs.size());
}

McResult mc_dropout(const ClassifierHead& head, std::span<const double> x, const McConfig& cfg) {
  McResult r;
  r.probs = mc_passes(head, x, cfg);
  r.entropy_of_expected = entropy_of_expected(r.probs);
  r.expected_entropy = expected_entropy(r.probs);
  r.knowledge_uncertainty = knowledge_uncertainty(r.entropy_of_expected, r.expected_entropy);
  r.deterministic_head = head.dropout_rate() == 0.0;
  return r;
}

}  // namespace uqfuse
