#include "doctest.h"

#include "support.hpp"
#include "uqfuse/dataset.hpp"
#include "uqfuse/error.hpp"
#include "uqfuse/head.hpp"

using namespace uqfuse;

namespace {

ClassifierHead unit_chain(double w = 1.0, double dropout = 0.5) {
  auto h = ClassifierHead::zeros(1, 1, 1, dropout);
  for (auto& l : h.mutable_layers()) l.weight(0, 0) = w;
  return h;
}

}  // namespace

TEST_SUITE("head") {
  TEST_CASE("zero network gives logit 0") {
    const auto h = ClassifierHead::zeros(3, 4, 2);
    const std::vector<double> x{1.0, -2.0, 3.0};
    CHECK(head_forward(h, x) == 0.0);
    CHECK(head_prob(h, x) == 0.5);
  }

  TEST_CASE("hand-evaluated unit chain") {
    const auto h = unit_chain();
    const std::vector<double> x{2.0};
    CHECK(head_forward(h, x) == 2.0);
    // Keeping every unit with keep-prob 0.5 doubles the signal at both hidden layers.
    const auto m = ones_mask(h);
    CHECK(m.keep_prob == 0.5);
    CHECK(head_forward(h, x, &m) == 8.0);
  }

  TEST_CASE("invariants are validated") {
    CHECK_THROWS_AS(ClassifierHead::zeros(2, 3, 2, 1.0), Error);
    auto layers = ClassifierHead::zeros(2, 3, 2).layers();
    layers[1].weight = Eigen::MatrixXd::Zero(2, 4);
    CHECK_THROWS_AS(ClassifierHead(layers, 0.5), Error);
    layers = ClassifierHead::zeros(2, 3, 2).layers();
    layers[2].weight = Eigen::MatrixXd::Zero(2, 2);
    layers[2].bias = Eigen::VectorXd::Zero(2);
    CHECK_THROWS_AS(ClassifierHead(layers, 0.5), Error);
    const auto h = ClassifierHead::zeros(2, 3, 2);
    const std::vector<double> x{1.0};
    CHECK_THROWS_AS(head_forward(h, x), Error);
  }

  TEST_CASE("parameter gradient at the zero network") {
    const auto h = ClassifierHead::zeros(2, 3, 2);
    const std::vector<double> x{0.3, -0.7};
    const auto g1 = head_grad_params(h, x, Label::Nature);
    const auto g0 = head_grad_params(h, x, Label::AI);
    const auto last = g1.size() - 1;  // output bias is the final flat entry
    CHECK(g1[last] == -0.5);
    CHECK(g0[last] + g1[last] == doctest::Approx(2 * sigmoid(0.0) - 1));
    CHECK(head_grad_input(h, x, Label::Nature).isZero());
  }

  TEST_CASE("input gradient on a linear chain") {
    const auto h = unit_chain(0.8);
    const std::vector<double> x{1.5};
    const double z = head_forward(h, x);
    CHECK(z == doctest::Approx(0.8 * 0.8 * 0.8 * 1.5));
    const auto g = head_grad_input(h, x, Label::AI);
    CHECK(g[0] == doctest::Approx((sigmoid(z) - 0.0) * 0.8 * 0.8 * 0.8));
  }

  TEST_CASE("gradients match central finite differences") {
    Rng rng(3, 1);
    int checked = 0;
    for (std::uint64_t t = 0; checked < 60 && t < 500; ++t) {
      const auto h = testing::random_small_head(t, 3, 4, 3);
      REQUIRE(h.num_params() <= 50);
      const auto x = testing::random_vector(rng, 3);
      if (!testing::away_from_kinks(h, x, 1e-3)) continue;
      ++checked;
      for (Label y : {Label::AI, Label::Nature}) {
        const auto ga = head_grad_params(h, x, y);
        const auto gf = testing::fd_grad_params(h, x, y);
        for (Eigen::Index i = 0; i < ga.size(); ++i) CHECK(testing::rel_err(ga[i], gf[i], 1e-6) < 1e-4);
        const auto ia = head_grad_input(h, x, y);
        const auto ifd = testing::fd_grad_input(h, x, y);
        for (Eigen::Index i = 0; i < ia.size(); ++i) CHECK(testing::rel_err(ia[i], ifd[i], 1e-6) < 1e-4);
      }
    }
    CHECK(checked == 60);
  }

  TEST_CASE("masked parameter gradient matches finite differences of the masked loss") {
    const auto h = testing::random_small_head(9, 3, 4, 3);
    Rng rng(5, 5);
    const auto m = draw_mask(h, rng);
    const std::vector<double> x{0.4, -0.2, 0.9};
    const auto g = head_grad_params(h, x, Label::Nature, &m);
    auto probe = h;
    const Eigen::VectorXd p0 = h.flat_params();
    for (Eigen::Index i = 0; i < p0.size(); ++i) {
      Eigen::VectorXd p = p0;
      p[i] += 1e-6;
      probe.set_flat_params(p);
      const double up = softplus(-head_forward(probe, x, &m));
      p[i] -= 2e-6;
      probe.set_flat_params(p);
      const double dn = softplus(-head_forward(probe, x, &m));
      CHECK(g[i] == doctest::Approx((up - dn) / 2e-6).epsilon(1e-4));
    }
  }

  TEST_CASE("evaluation forward is pure") {
    const auto h = testing::random_small_head(2, 3, 4, 3);
    const std::vector<double> x{0.1, 0.2, 0.3};
    const double a = head_forward(h, x);
    for (int i = 0; i < 5; ++i) CHECK(head_forward(h, x) == a);
  }

  TEST_CASE("inverted dropout preserves expectations on a linear path") {
    // Positive weights and inputs keep every unit active, so the network is
    // linear along the path and the mask average matches evaluation mode.
    auto h = ClassifierHead::zeros(2, 3, 2, 0.5);
    for (auto& l : h.mutable_layers()) l.weight.setConstant(0.5);
    const std::vector<double> x{1.0, 2.0};
    const double eval = head_forward(h, x);
    Rng rng(12, 0);
    const int n = 20000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto m = draw_mask(h, rng);
      // The first layer output feeds the second through the mask; average the
      // second-layer pre-activation, which is linear in each mask.
      const double v = head_forward(h, x, &m);
      sum += v;
      sq += v * v;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::abs(mean - eval) < 3 * se + 1e-12);
  }

  TEST_CASE("training is deterministic and learns separable data") {
    const auto d = synth_generate(200, 2, 6.0, 1);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.seed = 3;
    const auto a = head_train(d, cfg);
    const auto b = head_train(d, cfg);
    CHECK(a.flat_params() == b.flat_params());
    CHECK(accuracy(a, d) >= 0.99);
    cfg.optimizer = Optimizer::Adam;
    cfg.learning_rate = 0.01;
    CHECK(accuracy(head_train(d, cfg), d) >= 0.99);
  }

  TEST_CASE("chance-level data trains to chance-level accuracy") {
    const auto d = synth_generate(500, 2, 0.0, 2);
    TrainConfig cfg;
    cfg.epochs = 20;
    const double acc = accuracy(head_train(d, cfg), d);
    CHECK(acc >= 0.45);
    CHECK(acc <= 0.60);
  }

  TEST_CASE("training rejects a single-class dataset") {
    const EmbeddingDataset d({Sample{"a", {1.0}, Label::AI}, Sample{"b", {2.0}, Label::AI}}, 1);
    CHECK_THROWS_AS(head_train(d, TrainConfig{}), Error);
  }

  TEST_CASE("JSON round trip is exact") {
    const auto h = testing::random_small_head(4, 3, 4, 3, 0.3);
    const auto back = head_from_json(head_to_json(h));
    CHECK(back.flat_params() == h.flat_params());
    CHECK(back.dropout_rate() == 0.3);
    CHECK_THROWS_AS(head_from_json("{\"schema\":\"head/2\"}"), Error);
    CHECK_THROWS_AS(head_from_json("not json"), Error);
  }
}
