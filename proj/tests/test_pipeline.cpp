#include "doctest.h"

#include <fstream>
#include <sstream>

#include "support.hpp"
#include "uqfuse/error.hpp"
#include "uqfuse/pipeline.hpp"

using namespace uqfuse;

namespace {

RunConfig small_config(const std::filesystem::path& out) {
  RunConfig c;
  c.seed = 5;
  c.n_per_class = 40;
  c.dim = 4;
  c.head.epochs = 5;
  c.head.h1 = 8;
  c.head.h2 = 4;
  c.gp.m_per_class = 3;
  c.gp.elbo_steps = 10;
  c.mc.n_passes = 4;
  c.pso.swarm_size = 6;
  c.pso.iterations = 5;
  c.attack_steps = 2;
  c.out_dir = out;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::vector<std::string> kArtifacts{
    "head.json",       "gp.json",          "scores_calib.csv", "scores_test.csv",
    "scores_shift.csv", "scores_fgsm.csv", "scores_pgd.csv",   "policy.json",
    "calibration_history.csv", "report.json"};

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("measure names and values") {
    const auto names = measure_names();
    CHECK(names.size() == 8);
    std::vector<UncertaintyRecord> r(2);
    r[0].prob = 0.9;
    r[1].prob = 0.3;
    r[0].columns[GpVar] = 2.0;
    const auto p = measure_values(r, "prob");
    CHECK(p[0] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(measure_values(r, "gp_var")[0] == 2.0);
    CHECK_THROWS_AS(measure_values(r, "combined"), Error);
    CHECK_THROWS_AS(measure_values(r, "bogus"), Error);
  }

  TEST_CASE("shift vector geometry") {
    ShiftConfig s;
    s.along = 2.0;
    s.orthogonal = 3.0;
    const auto v = shift_vector(s, 6);
    double dot = 0, norm2 = 0;
    for (double x : v) dot += x, norm2 += x * x;
    CHECK(dot / 6 == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(norm2 - 6 * 4.0 == doctest::Approx(9.0).epsilon(1e-12));
  }

  TEST_CASE("run writes every artifact and reruns byte-identically") {
    const auto dir = testing::scratch_dir("pipeline");
    auto cfg = small_config(dir / "a");
    const auto res = run_pipeline(cfg);
    for (const auto& f : kArtifacts) CHECK_MESSAGE(std::filesystem::exists(dir / "a" / f), f);
    CHECK(res.splits.size() == 5);
    CHECK(res.split("test").records.size() == 20);
    CHECK(res.split("calib").records.size() == 20);
    CHECK(res.calibration.policy.weights.size() == kNumColumns);
    const auto e = res.evaluate("shift", "combined");
    CHECK(e.counts.overall.total() == res.split("shift").records.size());
    CHECK(res.sweeps.count("prob") == 1);
    CHECK_THROWS_AS(res.split("nope"), Error);

    cfg.out_dir = dir / "b";
    cfg.threads = 3;
    run_pipeline(cfg);
    for (const auto& f : kArtifacts) {
      if (f == "report.json") continue;  // records the thread count
      CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "b" / f), f);
    }
    cfg.threads = 1;
    cfg.out_dir = dir / "c";
    run_pipeline(cfg);
    for (const auto& f : kArtifacts) CHECK_MESSAGE(slurp(dir / "a" / f) == slurp(dir / "c" / f), f);

    cfg.run_attacks = false;
    cfg.out_dir = dir / "d";
    CHECK(run_pipeline(cfg).splits.size() == 3);
    CHECK_FALSE(std::filesystem::exists(dir / "d" / "scores_pgd.csv"));
  }

  TEST_CASE("config JSON round trip and defaults") {
    auto cfg = small_config("somewhere");
    cfg.head.optimizer = Optimizer::Adam;
    cfg.gp.init = InducingInit::PerClassKMeans;
    cfg.shift.orthogonal = 3.5;
    const auto back = run_config_from_json(config_json(cfg));
    CHECK(config_json(back) == config_json(cfg));
    const auto def = run_config_from_json("{}");
    CHECK(config_json(def) == config_json(RunConfig{}));
  }

  TEST_CASE("config validation names the field") {
    auto check_msg = [](const std::string& text, const std::string& needle, ErrorKind kind) {
      try {
        run_config_from_json(text);
        FAIL("expected an error for " << text);
      } catch (const Error& e) {
        CHECK(e.kind() == kind);
        CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
      }
    };
    check_msg(R"({"head":{"lr":-1}})", "head.lr", ErrorKind::InvalidArgument);
    check_msg(R"({"data":{"n_per_class":2}})", "n_per_class", ErrorKind::InvalidArgument);
    check_msg(R"({"mc":{"passes":1}})", "mc.passes", ErrorKind::InvalidArgument);
    check_msg(R"({"head":{"optimizer":"rmsprop"}})", "optimizer", ErrorKind::InvalidArgument);
    check_msg(R"({"data":{"dim":"wide"}})", "config", ErrorKind::Parse);
    check_msg("{not json", "config", ErrorKind::Parse);
  }
}
