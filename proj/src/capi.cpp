#include "uqfuse/uqfuse.h"

#include <array>
#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "uqfuse/attacks.hpp"
#include "uqfuse/dataset.hpp"
#include "uqfuse/error.hpp"
#include "uqfuse/eval.hpp"
#include "uqfuse/fusion.hpp"
#include "uqfuse/gp.hpp"
#include "uqfuse/head.hpp"
#include "uqfuse/io.hpp"
#include "uqfuse/pipeline.hpp"
#include "uqfuse/pso.hpp"
#include "uqfuse/texture.hpp"

struct uqf_dataset {
  uqfuse::EmbeddingDataset d;
};
struct uqf_head {
  uqfuse::ClassifierHead h;
};
struct uqf_gp {
  uqfuse::SparseGP g;
};
struct uqf_scores {
  std::vector<uqfuse::UncertaintyRecord> r;
};
struct uqf_policy {
  uqfuse::RejectionPolicy p;
};

namespace {

struct LastError {
  std::string message;
  std::string path;
  long line = 0;
};

thread_local LastError g_error;

uqf_status fail(uqf_status s, std::string msg, std::string path = {}, long line = 0) {
  g_error = {std::move(msg), std::move(path), line};
  return s;
}

template <typename Fn>
uqf_status guard(Fn&& fn) {
  g_error = {};
  try {
    fn();
    return UQF_OK;
  } catch (const uqfuse::Error& e) {
    uqf_status s = UQF_ERR_INTERNAL;
    switch (e.kind()) {
      case uqfuse::ErrorKind::InvalidArgument: s = UQF_ERR_INVALID; break;
      case uqfuse::ErrorKind::Io: s = UQF_ERR_IO; break;
      case uqfuse::ErrorKind::Parse: s = UQF_ERR_PARSE; break;
      case uqfuse::ErrorKind::Compute: s = UQF_ERR_COMPUTE; break;
    }
    return fail(s, e.what(), e.path(), e.line());
  } catch (const std::bad_alloc&) {
    return fail(UQF_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(UQF_ERR_INTERNAL, e.what());
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) uqfuse::throw_invalid(std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

// Stores s into *out when out is non-null.
void emit(char** out, const std::string& s) {
  if (out != nullptr) *out = dup_string(s);
}

}  // namespace

extern "C" {

const char* uqf_version(void) { return "1.0.0"; }
const char* uqf_last_error(void) { return g_error.message.c_str(); }
const char* uqf_last_error_path(void) { return g_error.path.c_str(); }
long uqf_last_error_line(void) { return g_error.line; }
void uqf_string_free(char* s) { std::free(s); }

const char* uqf_column_name(size_t k) {
  static const std::array<std::string, uqfuse::kNumColumns> names = [] {
    std::array<std::string, uqfuse::kNumColumns> a;
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::string(uqfuse::kColumnNames[i]);
    return a;
  }();
  return k < names.size() ? names[k].c_str() : nullptr;
}

uqf_status uqf_dataset_generate(size_t n_per_class, size_t dim, double separation, uint64_t seed,
                                uqf_dataset** out) {
  return guard([&] {
    need(out, "out");
    *out = new uqf_dataset{uqfuse::synth_generate(n_per_class, dim, separation, seed)};
  });
}

uqf_status uqf_dataset_shift(const uqf_dataset* base, const double* mean_shift, size_t shift_len,
                             double cov_scale, uint64_t seed, uqf_dataset** out) {
  return guard([&] {
    need(base, "base");
    need(mean_shift, "mean_shift");
    need(out, "out");
    uqfuse::ShiftSpec spec;
    spec.mean_shift.assign(mean_shift, mean_shift + shift_len);
    spec.covariance_scale = cov_scale;
    spec.seed = seed;
    *out = new uqf_dataset{uqfuse::synth_shift(base->d, spec)};
  });
}

uqf_status uqf_dataset_load(const char* path, uqf_dataset** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new uqf_dataset{uqfuse::load_dataset(path)};
  });
}

uqf_status uqf_dataset_save(const uqf_dataset* d, const char* path, int binary) {
  return guard([&] {
    need(d, "dataset");
    need(path, "path");
    uqfuse::save_dataset(d->d, path, binary ? uqfuse::DataFormat::Binary : uqfuse::DataFormat::Csv);
  });
}

size_t uqf_dataset_size(const uqf_dataset* d) { return d ? d->d.size() : 0; }
size_t uqf_dataset_dim(const uqf_dataset* d) { return d ? d->d.dim() : 0; }

uqf_status uqf_dataset_get(const uqf_dataset* d, size_t i, double* embedding, int* label) {
  return guard([&] {
    need(d, "dataset");
    if (i >= d->d.size()) uqfuse::throw_invalid("sample index out of range");
    const auto& s = d->d[i];
    if (embedding) std::copy(s.embedding.begin(), s.embedding.end(), embedding);
    if (label) *label = uqfuse::to_int(s.label);
  });
}

void uqf_dataset_free(uqf_dataset* d) { delete d; }

uqf_train_options uqf_train_options_default(void) {
  const uqfuse::TrainConfig c;
  return {c.h1, c.h2, c.epochs, c.batch_size, c.learning_rate, c.dropout_rate, 0, c.seed};
}

uqf_status uqf_head_train(const uqf_dataset* data, const uqf_train_options* opts, uqf_head** out) {
  return guard([&] {
    need(data, "data");
    need(out, "out");
    const auto o = opts ? *opts : uqf_train_options_default();
    uqfuse::TrainConfig c;
    c.h1 = o.h1;
    c.h2 = o.h2;
    c.epochs = o.epochs;
    c.batch_size = o.batch;
    c.learning_rate = o.lr;
    c.dropout_rate = o.dropout;
    c.optimizer = o.adam ? uqfuse::Optimizer::Adam : uqfuse::Optimizer::Sgd;
    c.seed = o.seed;
    *out = new uqf_head{uqfuse::head_train(data->d, c)};
  });
}

uqf_status uqf_head_load(const char* path, uqf_head** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new uqf_head{uqfuse::head_from_json(uqfuse::read_text_file(path), path)};
  });
}

uqf_status uqf_head_save(const uqf_head* h, const char* path) {
  return guard([&] {
    need(h, "head");
    need(path, "path");
    uqfuse::write_text_file(path, uqfuse::head_to_json(h->h) + "\n");
  });
}

uqf_status uqf_head_prob(const uqf_head* h, const double* x, size_t len, double* prob) {
  return guard([&] {
    need(h, "head");
    need(x, "x");
    need(prob, "prob");
    if (len != h->h.input_dim()) uqfuse::throw_invalid("input dimension does not match the head");
    *prob = uqfuse::head_prob(h->h, std::span<const double>(x, len));
  });
}

uqf_status uqf_head_accuracy(const uqf_head* h, const uqf_dataset* data, double* acc) {
  return guard([&] {
    need(h, "head");
    need(data, "data");
    need(acc, "acc");
    *acc = uqfuse::accuracy(h->h, data->d);
  });
}

void uqf_head_free(uqf_head* h) { delete h; }

uqf_gp_options uqf_gp_options_default(void) {
  const uqfuse::GpFitConfig c;
  return {c.m_per_class, c.elbo_steps, c.mc_elbo_samples, c.learning_rate, c.jitter, 0, c.seed};
}

uqf_status uqf_gp_fit(const uqf_dataset* data, const uqf_gp_options* opts, uqf_gp** out) {
  return guard([&] {
    need(data, "data");
    need(out, "out");
    const auto o = opts ? *opts : uqf_gp_options_default();
    uqfuse::GpFitConfig c;
    c.m_per_class = o.m_per_class;
    c.elbo_steps = o.steps;
    c.mc_elbo_samples = o.mc;
    c.learning_rate = o.lr;
    c.jitter = o.jitter;
    c.init = o.kmeans ? uqfuse::InducingInit::PerClassKMeans : uqfuse::InducingInit::PerClassRandom;
    c.seed = o.seed;
    *out = new uqf_gp{uqfuse::fit_gp(data->d, c)};
  });
}

uqf_status uqf_gp_load(const char* path, uqf_gp** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new uqf_gp{uqfuse::gp_from_json(uqfuse::read_text_file(path), path)};
  });
}

uqf_status uqf_gp_save(const uqf_gp* g, const char* path) {
  return guard([&] {
    need(g, "gp");
    need(path, "path");
    uqfuse::write_text_file(path, uqfuse::gp_to_json(g->g) + "\n");
  });
}

uqf_status uqf_gp_predict(const uqf_gp* g, const double* z, size_t len, double* mean,
                          double* variance) {
  return guard([&] {
    need(g, "gp");
    need(z, "z");
    if (len != g->g.dim()) uqfuse::throw_invalid("input dimension does not match the GP");
    const auto p = uqfuse::predictive_latent(g->g, std::span<const double>(z, len));
    if (mean) *mean = p.mean;
    if (variance) *variance = p.variance;
  });
}

void uqf_gp_free(uqf_gp* g) { delete g; }

uqf_score_options uqf_score_options_default(void) {
  const uqfuse::McConfig c;
  return {c.n_passes, c.prob_clip, c.seed, 1};
}

uqf_status uqf_scores_compute(const uqf_head* h, const uqf_gp* g, const uqf_dataset* data,
                              const uqf_score_options* opts, uqf_scores** out) {
  return guard([&] {
    need(h, "head");
    need(g, "gp");
    need(data, "data");
    need(out, "out");
    const auto o = opts ? *opts : uqf_score_options_default();
    uqfuse::ScoreOptions so;
    so.mc.n_passes = o.mc_passes;
    so.mc.prob_clip = o.prob_clip;
    so.mc.seed = o.seed;
    so.threads = o.threads;
    *out = new uqf_scores{uqfuse::score_all(h->h, g->g, data->d, so)};
  });
}

uqf_status uqf_scores_load(const char* path, uqf_scores** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new uqf_scores{uqfuse::load_scores(path)};
  });
}

uqf_status uqf_scores_save(const uqf_scores* s, const char* path) {
  return guard([&] {
    need(s, "scores");
    need(path, "path");
    uqfuse::save_scores(s->r, path);
  });
}

size_t uqf_scores_size(const uqf_scores* s) { return s ? s->r.size() : 0; }

uqf_status uqf_scores_get(const uqf_scores* s, size_t i, int* label, int* predicted, double* prob,
                          double* columns) {
  return guard([&] {
    need(s, "scores");
    if (i >= s->r.size()) uqfuse::throw_invalid("record index out of range");
    const auto& r = s->r[i];
    if (label) *label = uqfuse::to_int(r.label);
    if (predicted) *predicted = uqfuse::to_int(r.predicted);
    if (prob) *prob = r.prob;
    if (columns) std::copy(r.columns.begin(), r.columns.end(), columns);
  });
}

void uqf_scores_free(uqf_scores* s) { delete s; }

uqf_pso_options uqf_pso_options_default(void) {
  const uqfuse::PsoConfig c;
  return {c.swarm_size, c.iterations, c.inertia, c.cognitive, c.social, c.seed, 1};
}

uqf_status uqf_calibrate(const uqf_scores* s, const uqf_pso_options* opts, uqf_policy** out,
                         double* score, char** history_csv) {
  return guard([&] {
    need(s, "scores");
    need(out, "out");
    const auto o = opts ? *opts : uqf_pso_options_default();
    uqfuse::PsoConfig c;
    c.swarm_size = o.swarm;
    c.iterations = o.iters;
    c.inertia = o.inertia;
    c.cognitive = o.cognitive;
    c.social = o.social;
    c.seed = o.seed;
    c.threads = o.threads;
    auto cal = uqfuse::calibrate_policy(s->r, c);
    const auto hist = uqfuse::calibration_history_csv(cal.history);
    emit(history_csv, hist);
    if (score) *score = cal.score;
    *out = new uqf_policy{std::move(cal.policy)};
  });
}

uqf_status uqf_policy_load(const char* path, uqf_policy** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    auto p = uqfuse::policy_from_json(uqfuse::read_text_file(path), path);
    if (p.weights.size() != uqfuse::kNumColumns)
      throw uqfuse::Error(uqfuse::ErrorKind::Parse, "policy must have 6 weights", path);
    *out = new uqf_policy{std::move(p)};
  });
}

uqf_status uqf_policy_save(const uqf_policy* p, const char* path) {
  return guard([&] {
    need(p, "policy");
    need(path, "path");
    uqfuse::write_text_file(path, uqfuse::policy_to_json(p->p) + "\n");
  });
}

uqf_status uqf_policy_get(const uqf_policy* p, double* weights, double* tau) {
  return guard([&] {
    need(p, "policy");
    if (weights) std::copy(p->p.weights.begin(), p->p.weights.end(), weights);
    if (tau) *tau = p->p.tau;
  });
}

void uqf_policy_free(uqf_policy* p) { delete p; }

uqf_status uqf_evaluate(const uqf_scores* s, const uqf_policy* p, char** report_json) {
  return guard([&] {
    need(s, "scores");
    need(p, "policy");
    need(report_json, "report_json");
    *report_json = dup_string(uqfuse::policy_report_json(s->r, p->p) + "\n");
  });
}

uqf_status uqf_sweep(const uqf_scores* s, const char* measure, const uqf_policy* p, double* tau,
                     double* score, char** curve_csv) {
  return guard([&] {
    need(s, "scores");
    need(measure, "measure");
    if (s->r.empty()) uqfuse::throw_invalid("sweep: no score records");
    const auto u = uqfuse::measure_values(s->r, measure, p ? &p->p : nullptr);
    const auto preds = uqfuse::predictions(s->r);
    const auto res = uqfuse::sweep_threshold(preds, u);
    const auto curve = uqfuse::sweep_curve_csv(res);
    emit(curve_csv, curve);
    if (tau) *tau = res.tau_star;
    if (score) *score = res.best_score;
  });
}

uqf_status uqf_classification_metrics(size_t tn, size_t fp, size_t fn, size_t tp,
                                      double* accuracy, double* precision, double* recall,
                                      double* f1) {
  return guard([&] {
    const auto m = uqfuse::classification_metrics(uqfuse::ConfusionMatrix{tn, fp, fn, tp});
    if (accuracy) *accuracy = m.accuracy;
    if (precision) *precision = m.precision;
    if (recall) *recall = m.recall;
    if (f1) *f1 = m.f1;
  });
}

uqf_status uqf_attack(const uqf_head* h, const uqf_dataset* data, int method, double eps,
                      double alpha, size_t steps, size_t threads, uqf_dataset** out) {
  return guard([&] {
    need(h, "head");
    need(data, "data");
    need(out, "out");
    if (method != 0 && method != 1) uqfuse::throw_invalid("attack method must be 0 (fgsm) or 1 (pgd)");
    uqfuse::AttackConfig c;
    c.epsilon = eps;
    c.alpha = alpha;
    c.steps = steps;
    const auto m = method == 0 ? uqfuse::AttackMethod::Fgsm : uqfuse::AttackMethod::Pgd;
    *out = new uqf_dataset{uqfuse::attack_dataset(h->h, data->d, m, c, threads)};
  });
}

uqf_status uqf_texture_stats(const char* real, const char* fake, size_t bins, char** report_json,
                             char** report_csv, char** pairplot_csv) {
  char* js = nullptr;
  char* cs = nullptr;
  const auto st = guard([&] {
    need(real, "real");
    need(fake, "fake");
    const auto a = uqfuse::load_texture_source(real);
    const auto b = uqfuse::load_texture_source(fake);
    const auto rep = uqfuse::texture_stats(a, b, bins);
    emit(&js, uqfuse::texture_report_json(rep) + "\n");
    emit(&cs, uqfuse::texture_report_csv(rep));
    emit(pairplot_csv, uqfuse::texture_pairplot_csv(a, b));
  });
  if (st != UQF_OK) {
    std::free(js);
    std::free(cs);
    return st;
  }
  if (report_json) *report_json = js; else std::free(js);
  if (report_csv) *report_csv = cs; else std::free(cs);
  return st;
}

uqf_status uqf_run_pipeline(const char* config_json, char** report_json) {
  return guard([&] {
    need(config_json, "config_json");
    const auto cfg = uqfuse::run_config_from_json(config_json);
    const auto res = uqfuse::run_pipeline(cfg);
    emit(report_json, res.report);
  });
}

uqf_status uqf_resolve_config(const char* config_json, char** resolved_json) {
  return guard([&] {
    need(config_json, "config_json");
    need(resolved_json, "resolved_json");
    const auto cfg = uqfuse::resolve_seeds(uqfuse::run_config_from_json(config_json));
    *resolved_json = dup_string(uqfuse::config_json(cfg) + "\n");
  });
}

}  // extern "C"
