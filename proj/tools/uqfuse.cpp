// Command-line front end. Talks to the library only through the C API.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "uqfuse/uqfuse.h"

namespace {

using json = nlohmann::json;

// Exit codes: 0 success, 1 computation error, 2 I/O or configuration error.
int exit_code(uqf_status s) {
  switch (s) {
    case UQF_OK: return 0;
    case UQF_ERR_COMPUTE:
    case UQF_ERR_INTERNAL: return 1;
    default: return 2;
  }
}

const char* kind_name(uqf_status s) {
  switch (s) {
    case UQF_OK: return "ok";
    case UQF_ERR_INVALID: return "invalid_argument";
    case UQF_ERR_IO: return "io";
    case UQF_ERR_PARSE: return "parse";
    case UQF_ERR_COMPUTE: return "compute";
    case UQF_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

struct Failure {
  uqf_status status;
};

void report_error(uqf_status s, const std::string& message, const std::string& path, long line) {
  json err = {{"kind", kind_name(s)}, {"message", message}, {"exit_code", exit_code(s)}};
  if (!path.empty()) err["path"] = path;
  if (line > 0) err["line"] = line;
  std::cerr << json{{"error", err}}.dump() << "\n";
}

// Throws Failure after printing the error JSON.
void check(uqf_status s) {
  if (s == UQF_OK) return;
  report_error(s, uqf_last_error(), uqf_last_error_path(), uqf_last_error_line());
  throw Failure{s};
}

// For failures outside a subcommand action.
void check_or_exit(uqf_status s) {
  if (s == UQF_OK) return;
  report_error(s, uqf_last_error(), uqf_last_error_path(), uqf_last_error_line());
  std::exit(exit_code(s));
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using DatasetPtr = std::unique_ptr<uqf_dataset, Deleter<uqf_dataset, uqf_dataset_free>>;
using HeadPtr = std::unique_ptr<uqf_head, Deleter<uqf_head, uqf_head_free>>;
using GpPtr = std::unique_ptr<uqf_gp, Deleter<uqf_gp, uqf_gp_free>>;
using ScoresPtr = std::unique_ptr<uqf_scores, Deleter<uqf_scores, uqf_scores_free>>;
using PolicyPtr = std::unique_ptr<uqf_policy, Deleter<uqf_policy, uqf_policy_free>>;

struct CString {
  char* p = nullptr;
  ~CString() { uqf_string_free(p); }
  std::string str() const { return p ? std::string(p) : std::string(); }
};

void write_file(const std::string& path, const std::string& text) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  bool ok = f != nullptr;
  if (ok) ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
  if (f != nullptr && std::fclose(f) != 0) ok = false;
  if (!ok) {
    report_error(UQF_ERR_IO, "cannot write file", path, 0);
    throw Failure{UQF_ERR_IO};
  }
}

DatasetPtr load_dataset(const std::string& path) {
  uqf_dataset* d = nullptr;
  check(uqf_dataset_load(path.c_str(), &d));
  return DatasetPtr(d);
}

int wants_binary(const std::string& format, const std::string& path) {
  if (format == "binary") return 1;
  if (format == "csv") return 0;
  const auto ext = std::filesystem::path(path).extension().string();
  return ext == ".bin" || ext == ".uqf" ? 1 : 0;
}

struct Globals {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool quiet = false;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Uncertainty fusion for selective binary classification"};
  app.set_config("--config", "", "TOML configuration file; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.fallthrough();
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(uqf_version()));
  Globals g;
  app.add_option("--seed", g.seed, "Global random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_flag("--quiet", g.quiet, "Suppress informational output");

  std::function<void()> action;
  auto info = [&](const std::string& msg) {
    if (!g.quiet) std::cout << msg << "\n";
  };

  // gen
  struct {
    std::size_t n = 1000, dim = 16;
    double sep = 1.1;
    std::string out, format = "auto";
  } gen;
  auto* c_gen = app.add_subcommand("gen", "Generate a synthetic embedding dataset");
  c_gen->add_option("--n", gen.n, "Samples per class")->capture_default_str();
  c_gen->add_option("--dim", gen.dim, "Embedding dimension")->capture_default_str();
  c_gen->add_option("--sep", gen.sep, "Separation between class means")->capture_default_str();
  c_gen->add_option("--out", gen.out, "Output dataset")->required();
  c_gen->add_option("--format", gen.format, "csv, binary or auto (by extension)")
      ->check(CLI::IsMember({"auto", "csv", "binary"}))->capture_default_str();
  c_gen->callback([&] {
    action = [&] {
      uqf_dataset* d = nullptr;
      check(uqf_dataset_generate(gen.n, gen.dim, gen.sep, g.seed, &d));
      DatasetPtr p(d);
      check(uqf_dataset_save(d, gen.out.c_str(), wants_binary(gen.format, gen.out)));
      info("wrote " + std::to_string(uqf_dataset_size(d)) + " samples to " + gen.out);
    };
  });

  // shift
  struct {
    std::string in, out, format = "auto";
    std::vector<double> mean_shift{0.0};
    double cov_scale = 1.0;
  } sh;
  auto* c_shift = app.add_subcommand("shift", "Redraw class-0 samples under a distribution shift");
  c_shift->add_option("--in", sh.in, "Base dataset")->required();
  c_shift->add_option("--mean-shift", sh.mean_shift, "Scalar (broadcast) or one value per dimension")
      ->expected(1, -1)->capture_default_str();
  c_shift->add_option("--cov-scale", sh.cov_scale, "Covariance multiplier")->capture_default_str();
  c_shift->add_option("--out", sh.out, "Output dataset")->required();
  c_shift->add_option("--format", sh.format, "csv, binary or auto")
      ->check(CLI::IsMember({"auto", "csv", "binary"}))->capture_default_str();
  c_shift->callback([&] {
    action = [&] {
      auto base = load_dataset(sh.in);
      uqf_dataset* d = nullptr;
      check(uqf_dataset_shift(base.get(), sh.mean_shift.data(), sh.mean_shift.size(), sh.cov_scale,
                              g.seed, &d));
      DatasetPtr p(d);
      check(uqf_dataset_save(d, sh.out.c_str(), wants_binary(sh.format, sh.out)));
      info("wrote shifted dataset to " + sh.out);
    };
  });

  // train-head
  auto tr = uqf_train_options_default();
  std::string tr_data, tr_out, tr_opt = "sgd";
  auto* c_train = app.add_subcommand("train-head", "Train the classifier head");
  c_train->add_option("--data", tr_data, "Training dataset")->required();
  c_train->add_option("--h1", tr.h1, "First hidden width")->capture_default_str();
  c_train->add_option("--h2", tr.h2, "Second hidden width")->capture_default_str();
  c_train->add_option("--epochs", tr.epochs, "Training epochs")->capture_default_str();
  c_train->add_option("--batch", tr.batch, "Minibatch size")->capture_default_str();
  c_train->add_option("--lr", tr.lr, "Learning rate")->capture_default_str();
  c_train->add_option("--dropout", tr.dropout, "Dropout rate")->capture_default_str();
  c_train->add_option("--optimizer", tr_opt, "sgd or adam")
      ->check(CLI::IsMember({"sgd", "adam"}))->capture_default_str();
  c_train->add_option("--out", tr_out, "Output head JSON")->required();
  c_train->callback([&] {
    action = [&] {
      auto data = load_dataset(tr_data);
      tr.seed = g.seed;
      tr.adam = tr_opt == "adam";
      uqf_head* h = nullptr;
      check(uqf_head_train(data.get(), &tr, &h));
      HeadPtr p(h);
      double acc = 0.0;
      check(uqf_head_accuracy(h, data.get(), &acc));
      check(uqf_head_save(h, tr_out.c_str()));
      info("training accuracy " + std::to_string(acc) + ", wrote " + tr_out);
    };
  });

  // fit-gp
  auto gpo = uqf_gp_options_default();
  std::string gp_data, gp_out, gp_init = "random";
  auto* c_gp = app.add_subcommand("fit-gp", "Fit the sparse variational GP");
  c_gp->add_option("--data", gp_data, "Training dataset")->required();
  c_gp->add_option("--m-per-class", gpo.m_per_class, "Inducing points per class")->capture_default_str();
  c_gp->add_option("--steps", gpo.steps, "Optimization steps")->capture_default_str();
  c_gp->add_option("--lr", gpo.lr, "Adam learning rate")->capture_default_str();
  c_gp->add_option("--mc", gpo.mc, "Monte Carlo samples per point per step")->capture_default_str();
  c_gp->add_option("--jitter", gpo.jitter, "Initial Cholesky jitter")->capture_default_str();
  c_gp->add_option("--init", gp_init, "Inducing initialization: random or kmeans")
      ->check(CLI::IsMember({"random", "kmeans"}))->capture_default_str();
  c_gp->add_option("--out", gp_out, "Output GP JSON")->required();
  c_gp->callback([&] {
    action = [&] {
      auto data = load_dataset(gp_data);
      gpo.seed = g.seed;
      gpo.kmeans = gp_init == "kmeans";
      uqf_gp* gp = nullptr;
      check(uqf_gp_fit(data.get(), &gpo, &gp));
      GpPtr p(gp);
      check(uqf_gp_save(gp, gp_out.c_str()));
      info("wrote " + gp_out);
    };
  });

  // score
  auto so = uqf_score_options_default();
  std::string sc_head, sc_gp, sc_data, sc_out;
  auto* c_score = app.add_subcommand("score", "Compute the six uncertainty columns per sample");
  c_score->add_option("--head", sc_head, "Head JSON")->required();
  c_score->add_option("--gp", sc_gp, "GP JSON")->required();
  c_score->add_option("--data", sc_data, "Dataset to score")->required();
  c_score->add_option("--mc-passes", so.mc_passes, "MC dropout passes")->capture_default_str();
  c_score->add_option("--out", sc_out, "Output score CSV")->required();
  c_score->callback([&] {
    action = [&] {
      uqf_head* h = nullptr;
      check(uqf_head_load(sc_head.c_str(), &h));
      HeadPtr hp(h);
      uqf_gp* gp = nullptr;
      check(uqf_gp_load(sc_gp.c_str(), &gp));
      GpPtr gpp(gp);
      auto data = load_dataset(sc_data);
      so.seed = g.seed;
      so.threads = g.threads;
      uqf_scores* s = nullptr;
      check(uqf_scores_compute(h, gp, data.get(), &so, &s));
      ScoresPtr sp(s);
      check(uqf_scores_save(s, sc_out.c_str()));
      info("wrote " + std::to_string(uqf_scores_size(s)) + " records to " + sc_out);
    };
  });

  // calibrate
  auto po = uqf_pso_options_default();
  std::string cal_scores, cal_out, cal_history;
  auto* c_cal = app.add_subcommand("calibrate", "Fit z-scores and PSO-optimize weights and threshold");
  c_cal->add_option("--scores", cal_scores, "Calibration score CSV")->required();
  c_cal->add_option("--swarm", po.swarm, "Swarm size")->capture_default_str();
  c_cal->add_option("--iters", po.iters, "PSO iterations")->capture_default_str();
  c_cal->add_option("--inertia", po.inertia, "Inertia weight")->capture_default_str();
  c_cal->add_option("--cognitive", po.cognitive, "Cognitive coefficient")->capture_default_str();
  c_cal->add_option("--social", po.social, "Social coefficient")->capture_default_str();
  c_cal->add_option("--out", cal_out, "Output policy JSON")->required();
  c_cal->add_option("--history", cal_history, "Optional per-iteration best-score CSV");
  c_cal->callback([&] {
    action = [&] {
      uqf_scores* s = nullptr;
      check(uqf_scores_load(cal_scores.c_str(), &s));
      ScoresPtr sp(s);
      po.seed = g.seed;
      po.threads = g.threads;
      uqf_policy* p = nullptr;
      double score = 0.0;
      CString hist;
      check(uqf_calibrate(s, &po, &p, &score, &hist.p));
      PolicyPtr pp(p);
      check(uqf_policy_save(p, cal_out.c_str()));
      if (!cal_history.empty()) write_file(cal_history, hist.str());
      info("calibration score " + std::to_string(score) + ", wrote " + cal_out);
    };
  });

  // sweep
  std::string sw_scores, sw_column = "combined", sw_policy, sw_out;
  auto* c_sweep = app.add_subcommand("sweep", "Exhaustive threshold search for one measure");
  c_sweep->add_option("--scores", sw_scores, "Score CSV")->required();
  c_sweep->add_option("--column", sw_column, "Column name, prob, ee or combined")->capture_default_str();
  c_sweep->add_option("--policy", sw_policy, "Policy JSON (required for combined)");
  c_sweep->add_option("--out", sw_out, "Output score-curve CSV")->required();
  c_sweep->callback([&] {
    action = [&] {
      uqf_scores* s = nullptr;
      check(uqf_scores_load(sw_scores.c_str(), &s));
      ScoresPtr sp(s);
      PolicyPtr pp;
      if (!sw_policy.empty()) {
        uqf_policy* p = nullptr;
        check(uqf_policy_load(sw_policy.c_str(), &p));
        pp.reset(p);
      }
      double tau = 0.0, score = 0.0;
      CString curve;
      check(uqf_sweep(s, sw_column.c_str(), pp.get(), &tau, &score, &curve.p));
      write_file(sw_out, curve.str());
      if (!g.quiet)
        std::cout << json{{"measure", sw_column}, {"tau_star", tau}, {"score", score}}.dump() << "\n";
    };
  });

  // evaluate
  std::string ev_scores, ev_policy, ev_report;
  auto* c_eval = app.add_subcommand("evaluate", "Apply a policy to a score file and report rates");
  c_eval->add_option("--scores", ev_scores, "Score CSV")->required();
  c_eval->add_option("--policy", ev_policy, "Policy JSON")->required();
  c_eval->add_option("--report", ev_report, "Output report JSON")->required();
  c_eval->callback([&] {
    action = [&] {
      uqf_scores* s = nullptr;
      check(uqf_scores_load(ev_scores.c_str(), &s));
      ScoresPtr sp(s);
      uqf_policy* p = nullptr;
      check(uqf_policy_load(ev_policy.c_str(), &p));
      PolicyPtr pp(p);
      CString rep;
      check(uqf_evaluate(s, p, &rep.p));
      write_file(ev_report, rep.str());
      info("wrote " + ev_report);
    };
  });

  // attack
  struct {
    std::string head, data, method = "fgsm", out, format = "auto";
    double eps = 0.25, alpha = 0.0;
    std::size_t steps = 10;
  } at;
  auto* c_att = app.add_subcommand("attack", "Perturb a dataset with FGSM or PGD against a head");
  c_att->add_option("--head", at.head, "Head JSON")->required();
  c_att->add_option("--data", at.data, "Dataset to perturb")->required();
  c_att->add_option("--method", at.method, "fgsm or pgd")
      ->check(CLI::IsMember({"fgsm", "pgd"}))->capture_default_str();
  c_att->add_option("--eps", at.eps, "L-infinity budget")->capture_default_str();
  c_att->add_option("--alpha", at.alpha, "PGD step (0 selects eps/3)")->capture_default_str();
  c_att->add_option("--steps", at.steps, "PGD iterations")->capture_default_str();
  c_att->add_option("--out", at.out, "Output dataset")->required();
  c_att->add_option("--format", at.format, "csv, binary or auto")
      ->check(CLI::IsMember({"auto", "csv", "binary"}))->capture_default_str();
  c_att->callback([&] {
    action = [&] {
      uqf_head* h = nullptr;
      check(uqf_head_load(at.head.c_str(), &h));
      HeadPtr hp(h);
      auto data = load_dataset(at.data);
      uqf_dataset* d = nullptr;
      check(uqf_attack(h, data.get(), at.method == "pgd" ? 1 : 0, at.eps, at.alpha, at.steps,
                       g.threads, &d));
      DatasetPtr dp(d);
      check(uqf_dataset_save(d, at.out.c_str(), wants_binary(at.format, at.out)));
      info("wrote perturbed dataset to " + at.out);
    };
  });

  // texture-stats
  struct {
    std::string real, fake, out, csv, pairplot;
    std::size_t bins = 50;
  } tx;
  auto* c_tex = app.add_subcommand("texture-stats", "GLCM texture statistics between two image sets");
  c_tex->add_option("--real", tx.real, "PGM directory or feature CSV")->required();
  c_tex->add_option("--fake", tx.fake, "PGM directory or feature CSV")->required();
  c_tex->add_option("--bins", tx.bins, "KL histogram bins")->capture_default_str();
  c_tex->add_option("--out", tx.out, "Output report JSON")->required();
  c_tex->add_option("--csv", tx.csv, "Optional report CSV");
  c_tex->add_option("--pairplot", tx.pairplot, "Optional long-format feature CSV");
  c_tex->callback([&] {
    action = [&] {
      CString js, cs, pp;
      check(uqf_texture_stats(tx.real.c_str(), tx.fake.c_str(), tx.bins, &js.p, &cs.p, &pp.p));
      write_file(tx.out, js.str());
      if (!tx.csv.empty()) write_file(tx.csv, cs.str());
      if (!tx.pairplot.empty()) write_file(tx.pairplot, pp.str());
      info("wrote " + tx.out);
    };
  });

  // run
  json run_cfg;
  // Defaults come from the library so the two cannot drift apart.
  json defaults;
  {
    CString d;
    check_or_exit(uqf_resolve_config("{}", &d.p));
    defaults = json::parse(d.str());
  }
  struct {
    std::string out_dir = "uqfuse_run";
    std::size_t n, dim;
    double sep, shift_along, shift_orthogonal, shift_cov;
    bool no_attacks = false;
    double eps;
    std::size_t attack_steps;
    std::string optimizer = "sgd", init = "random";
  } rn;
  rn.n = defaults["data"]["n_per_class"];
  rn.dim = defaults["data"]["dim"];
  rn.sep = defaults["data"]["separation"];
  rn.shift_along = defaults["shift"]["along"];
  rn.shift_orthogonal = defaults["shift"]["orthogonal"];
  rn.shift_cov = defaults["shift"]["cov_scale"];
  rn.eps = defaults["attack"]["eps"];
  rn.attack_steps = defaults["attack"]["steps"];
  auto rtr = uqf_train_options_default();
  auto rgp = uqf_gp_options_default();
  auto rso = uqf_score_options_default();
  auto rpo = uqf_pso_options_default();
  auto* c_run = app.add_subcommand("run", "End-to-end pipeline on synthetic data");
  c_run->add_option("--out-dir", rn.out_dir, "Artifact directory")->capture_default_str();
  c_run->add_option("--n", rn.n, "Samples per class before splitting")->capture_default_str();
  c_run->add_option("--dim", rn.dim, "Embedding dimension")->capture_default_str();
  c_run->add_option("--sep", rn.sep, "Class separation")->capture_default_str();
  c_run->add_option("--shift-along", rn.shift_along, "Class-0 shift along the class axis")->capture_default_str();
  c_run->add_option("--shift-orthogonal", rn.shift_orthogonal, "Class-0 shift orthogonal to it")
      ->capture_default_str();
  c_run->add_option("--shift-cov", rn.shift_cov, "Class-0 covariance multiplier")->capture_default_str();
  c_run->add_option("--h1", rtr.h1, "First hidden width")->capture_default_str();
  c_run->add_option("--h2", rtr.h2, "Second hidden width")->capture_default_str();
  c_run->add_option("--epochs", rtr.epochs, "Head epochs")->capture_default_str();
  c_run->add_option("--batch", rtr.batch, "Head minibatch")->capture_default_str();
  c_run->add_option("--head-lr", rtr.lr, "Head learning rate")->capture_default_str();
  c_run->add_option("--dropout", rtr.dropout, "Dropout rate")->capture_default_str();
  c_run->add_option("--optimizer", rn.optimizer, "sgd or adam")
      ->check(CLI::IsMember({"sgd", "adam"}))->capture_default_str();
  c_run->add_option("--m-per-class", rgp.m_per_class, "GP inducing points per class")->capture_default_str();
  c_run->add_option("--gp-steps", rgp.steps, "GP optimization steps")->capture_default_str();
  c_run->add_option("--gp-lr", rgp.lr, "GP learning rate")->capture_default_str();
  c_run->add_option("--gp-mc", rgp.mc, "GP Monte Carlo samples")->capture_default_str();
  c_run->add_option("--init", rn.init, "random or kmeans")
      ->check(CLI::IsMember({"random", "kmeans"}))->capture_default_str();
  c_run->add_option("--mc-passes", rso.mc_passes, "MC dropout passes")->capture_default_str();
  c_run->add_option("--swarm", rpo.swarm, "PSO swarm size")->capture_default_str();
  c_run->add_option("--iters", rpo.iters, "PSO iterations")->capture_default_str();
  c_run->add_option("--eps", rn.eps, "Attack budget")->capture_default_str();
  c_run->add_option("--attack-steps", rn.attack_steps, "PGD iterations")->capture_default_str();
  c_run->add_flag("--no-attacks", rn.no_attacks, "Skip the FGSM and PGD splits");
  c_run->callback([&] {
    action = [&] {
      run_cfg = {
          {"seed", g.seed},
          {"threads", g.threads},
          {"out_dir", rn.out_dir},
          {"data", {{"n_per_class", rn.n}, {"dim", rn.dim}, {"separation", rn.sep}}},
          {"shift", {{"along", rn.shift_along}, {"orthogonal", rn.shift_orthogonal}, {"cov_scale", rn.shift_cov}}},
          {"head",
           {{"h1", rtr.h1}, {"h2", rtr.h2}, {"epochs", rtr.epochs}, {"batch", rtr.batch},
            {"lr", rtr.lr}, {"dropout", rtr.dropout}, {"optimizer", rn.optimizer}}},
          {"gp",
           {{"m_per_class", rgp.m_per_class}, {"steps", rgp.steps}, {"lr", rgp.lr}, {"mc", rgp.mc},
            {"init", rn.init}}},
          {"mc", {{"passes", rso.mc_passes}}},
          {"pso", {{"swarm", rpo.swarm}, {"iters", rpo.iters}}},
          {"attack", {{"enabled", !rn.no_attacks}, {"eps", rn.eps}, {"steps", rn.attack_steps}}}};
      CString rep;
      check(uqf_run_pipeline(run_cfg.dump().c_str(), &rep.p));
      info("wrote artifacts to " + rn.out_dir);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::FileError& e) {
    report_error(UQF_ERR_IO, e.what(), "", 0);
    return 2;
  } catch (const CLI::ParseError& e) {
    report_error(UQF_ERR_INVALID, e.what(), "", 0);
    return 2;
  }

  try {
    if (action) action();
  } catch (const Failure& f) {
    return exit_code(f.status);
  }
  return 0;
}
