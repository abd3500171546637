#include "uqfuse/eval.hpp"

#include <algorithm>

#include "uqfuse/error.hpp"

namespace uqfuse {

OutcomeCounts outcome_counts(std::span<const Prediction> preds, std::span<const double> u,
                             double tau) {
  if (preds.size() != u.size())
    throw_invalid("outcome_counts: " + std::to_string(preds.size()) + " predictions but " +
                  std::to_string(u.size()) + " scores");
  OutcomeCounts c;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const bool accepted = u[i] <= tau;
    auto& cls = c.per_class[static_cast<std::size_t>(to_int(preds[i].label))];
    if (preds[i].correct()) {
      (accepted ? c.overall.ca : c.overall.cr)++;
      (accepted ? cls.ca : cls.cr)++;
    } else {
      (accepted ? c.overall.ia : c.overall.ir)++;
      (accepted ? cls.ia : cls.ir)++;
    }
  }
  return c;
}

RateSet rates(const Buckets& b) {
  RateSet r;
  const auto pct = [](std::size_t num, std::size_t den) {
    return 100.0 * static_cast<double>(num) / static_cast<double>(den);
  };
  if (b.total() == 0)
    r.total_vacuous = true;
  else
    r.total_rate = pct(b.cr + b.ir, b.total());
  if (b.ca + b.cr == 0) {
    r.cpa_vacuous = true;
    r.cpa = 100.0;
  } else {
    r.cpa = pct(b.ca, b.ca + b.cr);
  }
  if (b.ia + b.ir == 0) {
    r.ipr_vacuous = true;
    r.ipr = 100.0;
  } else {
    r.ipr = pct(b.ir, b.ia + b.ir);
  }
  r.correct_rate = r.cpa_vacuous ? 0.0 : pct(b.cr, b.ca + b.cr);
  r.incorrect_rate = r.ipr;
  return r;
}

RejectionReport rates(const OutcomeCounts& counts) {
  return {rates(counts.overall), {rates(counts.per_class[0]), rates(counts.per_class[1])}};
}

double selection_score(const OutcomeCounts& counts) {
  double s = 0.0;
  for (const auto& b : counts.per_class) {
    const auto r = rates(b);
    s += r.cpa + r.ipr;
  }
  return s;
}

SweepResult sweep_threshold(std::span<const Prediction> preds, std::span<const double> u,
                            std::size_t grid) {
  require(!u.empty(), "sweep_threshold: no scores");
  require(grid >= 2, "sweep_threshold: grid needs at least two points");
  if (preds.size() != u.size()) throw_invalid("sweep_threshold: length mismatch");
  const auto [lo_it, hi_it] = std::minmax_element(u.begin(), u.end());
  const double lo = *lo_it, hi = *hi_it;

  // Sort once so each grid point is a single merge step.
  std::vector<std::size_t> order(u.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return u[a] < u[b]; });

  SweepResult out;
  out.taus.resize(grid);
  out.scores.resize(grid);
  OutcomeCounts running;  // everything rejected, then accepted one by one
  for (const auto& p : preds) {
    auto& cls = running.per_class[static_cast<std::size_t>(to_int(p.label))];
    (p.correct() ? running.overall.cr : running.overall.ir)++;
    (p.correct() ? cls.cr : cls.ir)++;
  }
  std::size_t next = 0;
  out.best_score = -1.0;
  for (std::size_t k = 0; k < grid; ++k) {
    const double tau =
        k + 1 == grid ? hi : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(grid - 1);
    while (next < order.size() && u[order[next]] <= tau) {
      const auto& p = preds[order[next]];
      auto& cls = running.per_class[static_cast<std::size_t>(to_int(p.label))];
      if (p.correct()) {
        --running.overall.cr, ++running.overall.ca;
        --cls.cr, ++cls.ca;
      } else {
        --running.overall.ir, ++running.overall.ia;
        --cls.ir, ++cls.ia;
      }
      ++next;
    }
    out.taus[k] = tau;
    out.scores[k] = selection_score(running);
    if (out.scores[k] > out.best_score) {
      out.best_score = out.scores[k];
      out.tau_star = tau;
    }
  }
  return out;
}

ClassificationMetrics classification_metrics(const ConfusionMatrix& cm) {
  ClassificationMetrics m;
  m.confusion = cm;
  const double tp = static_cast<double>(cm.tp), tn = static_cast<double>(cm.tn),
               fp = static_cast<double>(cm.fp), fn = static_cast<double>(cm.fn);
  const double n = tp + tn + fp + fn;
  require(n > 0, "classification_metrics: no predictions");
  m.accuracy = (tp + tn) / n;
  m.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

ClassificationMetrics classification_metrics(std::span<const Prediction> preds) {
  ConfusionMatrix cm;
  for (const auto& p : preds) {
    if (p.label == Label::AI)
      (p.predicted == Label::AI ? cm.tn : cm.fp)++;
    else
      (p.predicted == Label::AI ? cm.fn : cm.tp)++;
  }
  return classification_metrics(cm);
}

}  // namespace uqfuse
