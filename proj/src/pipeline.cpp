#include "uqfuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <type_traits>

#include "json.hpp"
#include "uqfuse/error.hpp"
#include "uqfuse/io.hpp"
#include "uqfuse/rng.hpp"

namespace uqfuse {

using json = nlohmann::json;

namespace {

// Seed tags for the module configs.
constexpr std::uint64_t kTagData = 1, kTagShift = 2, kTagHead = 3, kTagGp = 4, kTagMc = 5,
                        kTagPso = 6;

json rates_json(const RateSet& r) {
  return {{"total_rate", r.total_rate},     {"correct_rate", r.correct_rate},
          {"incorrect_rate", r.incorrect_rate}, {"cpa", r.cpa},
          {"ipr", r.ipr},                   {"total_vacuous", r.total_vacuous},
          {"cpa_vacuous", r.cpa_vacuous},   {"ipr_vacuous", r.ipr_vacuous}};
}

json buckets_json(const Buckets& b) {
  return {{"ca", b.ca}, {"cr", b.cr}, {"ia", b.ia}, {"ir", b.ir}};
}

json evaluation_object(const MeasureEvaluation& e) {
  json j;
  j["measure"] = e.measure;
  j["tau"] = e.tau;
  j["score"] = e.score;
  j["counts"] = {{"overall", buckets_json(e.counts.overall)},
                 {"ai", buckets_json(e.counts.per_class[0])},
                 {"nature", buckets_json(e.counts.per_class[1])}};
  j["rates"] = {{"overall", rates_json(e.rates.overall)},
                {"ai", rates_json(e.rates.per_class[0])},
                {"nature", rates_json(e.rates.per_class[1])}};
  return j;
}

json metrics_json(const ClassificationMetrics& m) {
  return {{"accuracy", m.accuracy},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"confusion",
           {{"tn", m.confusion.tn}, {"fp", m.confusion.fp}, {"fn", m.confusion.fn}, {"tp", m.confusion.tp}}}};
}

json policy_object(const RejectionPolicy& p) { return json::parse(policy_to_json(p)); }

EmbeddingDataset subset(const EmbeddingDataset& d, std::size_t period,
                        std::span<const std::size_t> phases) {
  std::vector<Sample> out;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (std::find(phases.begin(), phases.end(), i % period) != phases.end()) out.push_back(d[i]);
  return EmbeddingDataset(std::move(out), d.dim());
}

}  // namespace

std::vector<std::string> measure_names() {
  std::vector<std::string> out(kColumnNames.begin(), kColumnNames.end());
  out.emplace_back("prob");
  out.emplace_back("ee");
  return out;
}

std::vector<double> measure_values(std::span<const UncertaintyRecord> records,
                                   const std::string& measure, const RejectionPolicy* policy) {
  std::vector<double> u;
  u.reserve(records.size());
  if (measure == "combined") {
    if (policy == nullptr) throw_invalid("measure 'combined' requires a policy");
    return combine_all(records, *policy);
  }
  if (measure == "prob") {
    for (const auto& r : records) u.push_back(r.prob_uncertainty());
    return u;
  }
  if (measure == "ee") {
    for (const auto& r : records) u.push_back(r.expected_entropy);
    return u;
  }
  const auto k = column_index(measure);
  if (!k) throw_invalid("unknown measure '" + measure + "'");
  for (const auto& r : records) u.push_back(r.columns[*k]);
  return u;
}

MeasureEvaluation evaluate_measure(const std::string& measure, std::span<const Prediction> preds,
                                   std::span<const double> u, double tau) {
  MeasureEvaluation e;
  e.measure = measure;
  e.tau = tau;
  e.counts = outcome_counts(preds, u, tau);
  e.rates = rates(e.counts);
  e.score = selection_score(e.counts);
  return e;
}

std::string evaluation_json(const MeasureEvaluation& e) { return evaluation_object(e).dump(1); }

std::string policy_report_json(std::span<const UncertaintyRecord> records,
                               const RejectionPolicy& policy) {
  require(!records.empty(), "evaluate: no score records");
  const auto preds = predictions(records);
  const auto u = combine_all(records, policy);
  json j;
  j["schema"] = "report/1";
  j["n"] = records.size();
  j["policy"] = policy_object(policy);
  j["evaluation"] = evaluation_object(evaluate_measure("combined", preds, u, policy.tau));
  j["metrics"] = metrics_json(classification_metrics(preds));
  return j.dump(1);
}

std::string sweep_curve_csv(const SweepResult& s) {
  std::string out = "tau,score\n";
  for (std::size_t i = 0; i < s.taus.size(); ++i)
    out += format_double(s.taus[i]) + ',' + format_double(s.scores[i]) + '\n';
  return out;
}

std::string calibration_history_csv(std::span<const double> history) {
  std::string out = "iteration,best_score\n";
  for (std::size_t i = 0; i < history.size(); ++i)
    out += std::to_string(i) + ',' + format_double(history[i]) + '\n';
  return out;
}

std::vector<double> shift_vector(const ShiftConfig& cfg, std::size_t dim) {
  require(dim >= 1, "shift_vector: dim must be positive");
  std::vector<double> v(dim, cfg.along);
  // Alternating +1/-1 pattern, orthogonal to the all-ones direction.
  const std::size_t paired = dim - dim % 2;
  if (paired > 0 && cfg.orthogonal != 0.0) {
    const double a = cfg.orthogonal / std::sqrt(static_cast<double>(paired));
    for (std::size_t k = 0; k < paired; ++k) v[k] += (k % 2 == 0) ? a : -a;
  }
  return v;
}

void validate(const RunConfig& c) {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw_invalid("config: " + what);
  };
  need(c.threads >= 1, "threads must be >= 1");
  need(c.n_per_class >= 8, "data.n_per_class must be >= 8");
  need(c.dim >= 1, "data.dim must be >= 1");
  need(std::isfinite(c.separation), "data.separation must be finite");
  need(c.shift.covariance_scale > 0.0, "shift.cov_scale must be > 0");
  need(c.head.epochs >= 1 && c.head.batch_size >= 1, "head.epochs and head.batch must be >= 1");
  need(c.head.learning_rate > 0.0, "head.lr must be > 0");
  need(c.head.h1 >= 1 && c.head.h2 >= 1, "head.h1 and head.h2 must be >= 1");
  need(c.head.dropout_rate >= 0.0 && c.head.dropout_rate < 1.0, "head.dropout must be in [0, 1)");
  need(c.gp.m_per_class >= 1, "gp.m_per_class must be >= 1");
  need(c.gp.learning_rate > 0.0, "gp.lr must be > 0");
  need(c.gp.mc_elbo_samples >= 1, "gp.mc must be >= 1");
  need(c.gp.jitter > 0.0, "gp.jitter must be > 0");
  need(c.mc.n_passes >= 2, "mc.passes must be >= 2");
  need(c.mc.prob_clip > 0.0 && c.mc.prob_clip < 0.5, "mc.prob_clip must be in (0, 0.5)");
  need(c.pso.swarm_size >= 2 && c.pso.iterations >= 1, "pso.swarm must be >= 2 and pso.iters >= 1");
  need(c.attack_epsilon > 0.0, "attack.eps must be > 0");
  need(c.attack_steps >= 1, "attack.steps must be >= 1");
}

RunConfig resolve_seeds(const RunConfig& cfg) {
  RunConfig c = cfg;
  c.head.seed = derive_seed(cfg.seed, kTagHead);
  c.gp.seed = derive_seed(cfg.seed, kTagGp);
  c.mc.seed = derive_seed(cfg.seed, kTagMc);
  c.pso.seed = derive_seed(cfg.seed, kTagPso);
  c.pso.threads = cfg.threads;
  return c;
}

std::string config_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["data"] = {{"n_per_class", c.n_per_class}, {"dim", c.dim}, {"separation", c.separation},
               {"seed", derive_seed(c.seed, kTagData)}};
  j["shift"] = {{"along", c.shift.along},
                {"orthogonal", c.shift.orthogonal},
                {"cov_scale", c.shift.covariance_scale},
                {"mean_shift", shift_vector(c.shift, c.dim)},
                {"seed", derive_seed(c.seed, kTagShift)}};
  j["head"] = {{"h1", c.head.h1},
               {"h2", c.head.h2},
               {"dropout", c.head.dropout_rate},
               {"epochs", c.head.epochs},
               {"batch", c.head.batch_size},
               {"lr", c.head.learning_rate},
               {"optimizer", c.head.optimizer == Optimizer::Adam ? "adam" : "sgd"},
               {"seed", c.head.seed}};
  j["gp"] = {{"m_per_class", c.gp.m_per_class},
             {"steps", c.gp.elbo_steps},
             {"lr", c.gp.learning_rate},
             {"mc", c.gp.mc_elbo_samples},
             {"jitter", c.gp.jitter},
             {"init", c.gp.init == InducingInit::PerClassKMeans ? "kmeans" : "random"},
             {"seed", c.gp.seed}};
  j["mc"] = {{"passes", c.mc.n_passes}, {"prob_clip", c.mc.prob_clip}, {"seed", c.mc.seed}};
  j["pso"] = {{"swarm", c.pso.swarm_size},
              {"iters", c.pso.iterations},
              {"inertia", c.pso.inertia},
              {"cognitive", c.pso.cognitive},
              {"social", c.pso.social},
              {"seed", c.pso.seed}};
  j["attack"] = {{"enabled", c.run_attacks}, {"eps", c.attack_epsilon}, {"steps", c.attack_steps}};
  return j.dump(1);
}

RunConfig run_config_from_json(const std::string& text, const std::string& origin) {
  RunConfig c;
  try {
    const json j = json::parse(text);
    auto get = [](const json& obj, const char* key, auto& dst) {
      if (obj.contains(key)) dst = obj.at(key).get<std::decay_t<decltype(dst)>>();
    };
    get(j, "seed", c.seed);
    get(j, "threads", c.threads);
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("data")) {
      const auto& d = j.at("data");
      get(d, "n_per_class", c.n_per_class);
      get(d, "dim", c.dim);
      get(d, "separation", c.separation);
    }
    if (j.contains("shift")) {
      const auto& d = j.at("shift");
      get(d, "along", c.shift.along);
      get(d, "orthogonal", c.shift.orthogonal);
      get(d, "cov_scale", c.shift.covariance_scale);
    }
    if (j.contains("head")) {
      const auto& d = j.at("head");
      get(d, "h1", c.head.h1);
      get(d, "h2", c.head.h2);
      get(d, "dropout", c.head.dropout_rate);
      get(d, "epochs", c.head.epochs);
      get(d, "batch", c.head.batch_size);
      get(d, "lr", c.head.learning_rate);
      if (d.contains("optimizer")) {
        const auto o = d.at("optimizer").get<std::string>();
        if (o != "sgd" && o != "adam") throw_invalid("config: head.optimizer must be sgd or adam");
        c.head.optimizer = o == "adam" ? Optimizer::Adam : Optimizer::Sgd;
      }
    }
    if (j.contains("gp")) {
      const auto& d = j.at("gp");
      get(d, "m_per_class", c.gp.m_per_class);
      get(d, "steps", c.gp.elbo_steps);
      get(d, "lr", c.gp.learning_rate);
      get(d, "mc", c.gp.mc_elbo_samples);
      get(d, "jitter", c.gp.jitter);
      if (d.contains("init")) {
        const auto o = d.at("init").get<std::string>();
        if (o != "random" && o != "kmeans") throw_invalid("config: gp.init must be random or kmeans");
        c.gp.init = o == "kmeans" ? InducingInit::PerClassKMeans : InducingInit::PerClassRandom;
      }
    }
    if (j.contains("mc")) {
      const auto& d = j.at("mc");
      get(d, "passes", c.mc.n_passes);
      get(d, "prob_clip", c.mc.prob_clip);
    }
    if (j.contains("pso")) {
      const auto& d = j.at("pso");
      get(d, "swarm", c.pso.swarm_size);
      get(d, "iters", c.pso.iterations);
      get(d, "inertia", c.pso.inertia);
      get(d, "cognitive", c.pso.cognitive);
      get(d, "social", c.pso.social);
    }
    if (j.contains("attack")) {
      const auto& d = j.at("attack");
      get(d, "enabled", c.run_attacks);
      get(d, "eps", c.attack_epsilon);
      get(d, "steps", c.attack_steps);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("config: ") + e.what(), origin);
  }
  validate(c);
  return c;
}

const SplitResult& ExperimentResult::split(const std::string& name) const {
  for (const auto& s : splits)
    if (s.name == name) return s;
  throw_invalid("no split named '" + name + "'");
}

MeasureEvaluation ExperimentResult::evaluate(const std::string& split_name,
                                             const std::string& measure) const {
  const auto& s = split(split_name);
  const auto preds = predictions(s.records);
  if (measure == "combined") {
    const auto u = combine_all(s.records, calibration.policy);
    return evaluate_measure(measure, preds, u, calibration.policy.tau);
  }
  const auto it = sweeps.find(measure);
  if (it == sweeps.end()) throw_invalid("no calibrated threshold for measure '" + measure + "'");
  const auto u = measure_values(s.records, measure);
  return evaluate_measure(measure, preds, u, it->second.tau_star);
}

ExperimentResult run_experiment(const RunConfig& input) {
  validate(input);
  ExperimentResult out;
  out.config = resolve_seeds(input);
  const RunConfig& c = out.config;

  // Interleaved split: half train, a quarter each for calibration and test.
  const auto all = synth_generate(c.n_per_class, c.dim, c.separation, derive_seed(c.seed, kTagData));
  const std::size_t train_phases[] = {0, 1}, calib_phases[] = {2}, test_phases[] = {3};
  const auto train = subset(all, 4, train_phases);
  auto calib = subset(all, 4, calib_phases);
  auto test = subset(all, 4, test_phases);
  ShiftSpec spec;
  spec.mean_shift = shift_vector(c.shift, c.dim);
  spec.covariance_scale = c.shift.covariance_scale;
  spec.seed = derive_seed(c.seed, kTagShift);
  auto shifted = synth_shift(test, spec);

  out.head = head_train(train, c.head);
  GpFitTrace trace;
  out.gp = fit_gp(train, c.gp, &trace);
  out.gp_elbo = std::move(trace.elbo);

  ScoreOptions opts;
  opts.mc = c.mc;
  opts.threads = c.threads;
  auto add_split = [&](std::string name, EmbeddingDataset data) {
    SplitResult s;
    s.name = std::move(name);
    s.records = score_all(out.head, out.gp, data, opts);
    s.data = std::move(data);
    out.splits.push_back(std::move(s));
  };
  add_split("calib", std::move(calib));
  add_split("test", std::move(test));
  add_split("shift", std::move(shifted));
  if (c.run_attacks) {
    AttackConfig ac;
    ac.epsilon = c.attack_epsilon;
    ac.steps = c.attack_steps;
    const auto& base = out.split("test").data;
    auto fg = attack_dataset(out.head, base, AttackMethod::Fgsm, ac, c.threads);
    auto pg = attack_dataset(out.head, base, AttackMethod::Pgd, ac, c.threads);
    add_split("fgsm", std::move(fg));
    add_split("pgd", std::move(pg));
  }

  const auto& cal = out.split("calib").records;
  out.calibration = calibrate_policy(cal, c.pso);
  const auto cal_preds = predictions(cal);
  for (const auto& m : measure_names()) {
    const auto u = measure_values(cal, m);
    out.sweeps.emplace(m, sweep_threshold(cal_preds, u));
  }

  json report;
  report["schema"] = "report/1";
  report["config"] = json::parse(config_json(c));
  report["head"] = {{"train_accuracy", accuracy(out.head, train)}};
  report["gp"] = {{"outputscale", out.gp.kernel().outputscale()},
                  {"lengthscale", out.gp.kernel().lengthscale()},
                  {"num_inducing", out.gp.num_inducing()},
                  {"final_elbo", out.gp_elbo.empty() ? 0.0 : out.gp_elbo.back()}};
  report["policy"] = policy_object(out.calibration.policy);
  report["calibration_score"] = out.calibration.score;
  json thresholds = json::object();
  for (const auto& [m, s] : out.sweeps) thresholds[m] = {{"tau", s.tau_star}, {"score", s.best_score}};
  report["single_measure_thresholds"] = std::move(thresholds);
  json splits = json::array();
  auto measures = measure_names();
  measures.emplace_back("combined");
  for (const auto& s : out.splits) {
    json js;
    js["name"] = s.name;
    js["n"] = s.records.size();
    js["metrics"] = metrics_json(classification_metrics(predictions(s.records)));
    json evals = json::array();
    for (const auto& m : measures) evals.push_back(evaluation_object(out.evaluate(s.name, m)));
    js["measures"] = std::move(evals);
    splits.push_back(std::move(js));
  }
  report["splits"] = std::move(splits);
  out.report = report.dump(1) + "\n";
  return out;
}

ExperimentResult run_pipeline(const RunConfig& cfg) {
  auto result = run_experiment(cfg);
  const auto& dir = cfg.out_dir;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create output directory: " + ec.message(), dir.string());
  write_text_file(dir / "head.json", head_to_json(result.head) + "\n");
  write_text_file(dir / "gp.json", gp_to_json(result.gp) + "\n");
  for (const auto& s : result.splits) save_scores(s.records, dir / ("scores_" + s.name + ".csv"));
  write_text_file(dir / "policy.json", policy_to_json(result.calibration.policy) + "\n");
  write_text_file(dir / "calibration_history.csv", calibration_history_csv(result.calibration.history));
  write_text_file(dir / "report.json", result.report);
  return result;
}

}  // namespace uqfuse
