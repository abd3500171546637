#include "doctest.h"

#include <cmath>

#include "support.hpp"
#include "uqfuse/error.hpp"
#include "uqfuse/gp.hpp"

using namespace uqfuse;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  MatrixXd a(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) a(i, j) = scale * rng.normal();
  return a;
}

// Random valid state: q(u) mean and a lower factor with positive diagonal.
SparseGP random_gp(Rng& rng, Eigen::Index m, Eigen::Index d) {
  const RbfKernel k{rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.5)};
  MatrixXd f = random_matrix(rng, m, m, 0.3).triangularView<Eigen::Lower>();
  for (Eigen::Index i = 0; i < m; ++i) f(i, i) = rng.uniform(0.2, 1.2);
  return SparseGP(k, random_matrix(rng, m, d), random_matrix(rng, m, 1).col(0), f);
}

double sigmoid_ref(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

TEST_SUITE("gp") {
  TEST_CASE("rbf hand values and symmetry") {
    const std::vector<double> a{1.0, -2.0, 0.5};
    CHECK(rbf(RbfKernel{std::log(2.0), 0.3}, a, a) == doctest::Approx(2.0).epsilon(1e-14));
    const std::vector<double> o{0, 0}, e{1, 0};
    CHECK(rbf(RbfKernel{}, o, e) == doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
    CHECK(rbf(RbfKernel{}, o, e) == doctest::Approx(0.606531).epsilon(1e-6));
    Rng rng(1, 0);
    for (int t = 0; t < 100; ++t) {
      const RbfKernel k{rng.uniform(-1, 1), rng.uniform(-1, 1)};
      const auto x = testing::random_vector(rng, 4), y = testing::random_vector(rng, 4);
      CHECK(rbf(k, x, y) == rbf(k, y, x));
    }
    CHECK_THROWS_AS(rbf(RbfKernel{}, a, o), Error);
  }

  TEST_CASE("prior state collapses to the kernel variance") {
    Rng rng(2, 0);
    const RbfKernel k{std::log(1.7), std::log(0.9)};
    const auto gp = SparseGP::prior(k, random_matrix(rng, 8, 3));
    for (int t = 0; t < 50; ++t) {
      const auto z = testing::random_vector(rng, 3);
      const auto p = predictive_latent(gp, z);
      CHECK(std::abs(p.mean) < 1e-12);
      CHECK(std::abs(p.variance - 1.7) < 1e-8);
    }
    CHECK(std::abs(kl_qu_pu(gp)) < 1e-9);
  }

  TEST_CASE("far-away inputs revert to the prior variance") {
    Rng rng(3, 0);
    auto gp = random_gp(rng, 6, 2);
    const double ls = gp.kernel().lengthscale();
    const std::vector<double> far{40.0 * ls + 10.0, -40.0 * ls - 10.0};
    const auto p = predictive_latent(gp, far);
    CHECK(std::abs(p.variance - gp.kernel().outputscale()) < 1e-6);
    CHECK(std::abs(p.mean) < 1e-6);
  }

  TEST_CASE("shrunk covariance at an inducing input gives a tiny variance") {
    Rng rng(4, 0);
    const RbfKernel k{0.0, 0.0};
    const MatrixXd z = random_matrix(rng, 5, 2, 2.0);
    const auto prior = SparseGP::prior(k, z);
    const SparseGP gp(k, z, VectorXd::Zero(5), 1e-6 * prior.kuu_chol());
    const std::vector<double> at{z(2, 0), z(2, 1)};
    const auto p = predictive_latent(gp, at);
    CHECK(p.variance > 0.0);
    CHECK(p.variance < 1e-5);
    CHECK(p.variance < k.outputscale());
  }

  TEST_CASE("predictive variance is positive everywhere") {
    Rng rng(5, 0);
    for (int t = 0; t < 20; ++t) {
      const auto gp = random_gp(rng, 4, 3);
      for (int q = 0; q < 20; ++q) CHECK(predictive_latent(gp, testing::random_vector(rng, 3)).variance > 0.0);
    }
  }

  TEST_CASE("predictive probability: symmetry, degenerate and quadrature") {
    const double p0 = predictive_prob(LatentPrediction{0.0, 2.0}, 4096, 7);
    CHECK(std::abs(p0 - 0.5) < 3.0 / std::sqrt(4096.0) * 0.25);
    CHECK(predictive_prob(LatentPrediction{2.0, 0.0}, 100, 1) == doctest::Approx(0.880797).epsilon(1e-6));
    CHECK(predictive_prob(LatentPrediction{2.0, 0.0}, 100, 1) == doctest::Approx(sigmoid_ref(2.0)).epsilon(1e-15));
    CHECK(predictive_prob(LatentPrediction{1, 1}, 64, 5) == predictive_prob(LatentPrediction{1, 1}, 64, 5));

    const std::size_t s = 100000;
    const double oracle = testing::gauss_hermite_expectation(sigmoid_ref, 1.0, 1.0);
    const double second = testing::gauss_hermite_expectation(
        [](double f) { return sigmoid_ref(f) * sigmoid_ref(f); }, 1.0, 1.0);
    const double se = std::sqrt((second - oracle * oracle) / static_cast<double>(s));
    CHECK(std::abs(predictive_prob(LatentPrediction{1.0, 1.0}, s, 3) - oracle) < 3 * se);

    std::vector<double> reps;
    for (std::uint64_t r = 0; r < 30; ++r) reps.push_back(predictive_prob(LatentPrediction{0.3, 2.0}, 4096, 100 + r));
    double mean = 0, var = 0;
    for (double v : reps) mean += v / 30;
    for (double v : reps) var += (v - mean) * (v - mean) / 29;
    CHECK(std::sqrt(var) < 0.01);
    CHECK_THROWS_AS(predictive_prob(LatentPrediction{}, 0, 1), Error);
  }

  TEST_CASE("KL closed forms and nonnegativity") {
    // M = 1: Kuu = os + jitter, S = Kuu, mean delta -> delta^2 / (2 Kuu).
    const RbfKernel k{std::log(2.0), 0.0};
    const MatrixXd z = MatrixXd::Zero(1, 3);
    const double kuu = 2.0 + 1e-6;
    const SparseGP gp(k, z, VectorXd::Constant(1, 0.7), MatrixXd::Constant(1, 1, std::sqrt(kuu)));
    CHECK(kl_qu_pu(gp) == doctest::Approx(0.5 * 0.49 / kuu).epsilon(1e-10));
    // Scalar Gaussians N(m, s2) vs N(0, K).
    const double s2 = 0.3;
    const SparseGP g2(k, z, VectorXd::Constant(1, -0.4), MatrixXd::Constant(1, 1, std::sqrt(s2)));
    const double ref = 0.5 * (s2 / kuu + 0.16 / kuu - 1.0 + std::log(kuu / s2));
    CHECK(kl_qu_pu(g2) == doctest::Approx(ref).epsilon(1e-10));

    Rng rng(6, 0);
    for (int t = 0; t < 100; ++t) CHECK(kl_qu_pu(random_gp(rng, 1 + rng.below(6), 2)) >= -1e-9);
  }

  TEST_CASE("ELBO sign and expected log-likelihood against quadrature") {
    Rng rng(7, 0);
    std::vector<Sample> s;
    for (int i = 0; i < 20; ++i)
      s.push_back({"s" + std::to_string(i), testing::random_vector(rng, 2), i % 2 ? Label::Nature : Label::AI});
    const EmbeddingDataset data(s, 2);
    for (int t = 0; t < 10; ++t) CHECK(elbo(random_gp(rng, 4, 2), data, 8, t) <= 0.0);

    // Prior state: every latent is N(0, os) and the per-point term is E[log sigmoid(f)].
    const auto gp = SparseGP::prior(RbfKernel{}, random_matrix(rng, 4, 2));
    MatrixXd x(20, 2);
    Eigen::VectorXi y(20);
    for (int i = 0; i < 20; ++i) {
      x(i, 0) = s[static_cast<std::size_t>(i)].embedding[0];
      x(i, 1) = s[static_cast<std::size_t>(i)].embedding[1];
      y[i] = i % 2;
    }
    const MatrixXd eps = random_matrix(rng, 20, 5000);
    const auto obj = detail::elbo_with_grad(detail::params_from_gp(gp), x, y, eps, 1e-6);
    auto lsig = [](double f) { return -std::log1p(std::exp(-f)); };
    const double oracle = testing::gauss_hermite_expectation(lsig, 0.0, 1.0);
    const double m2 = testing::gauss_hermite_expectation([&](double f) { return lsig(f) * lsig(f); }, 0.0, 1.0);
    const double se = std::sqrt((m2 - oracle * oracle) / (20.0 * 5000.0));
    CHECK(std::abs(obj.expected_loglik / 20.0 - oracle) < 3 * se);
    CHECK(std::abs(obj.kl) < 1e-6);

    // Confident correct latents give a log-likelihood near 0 from below.
    CHECK(bernoulli_loglik(1, 40.0) <= 0.0);
    CHECK(bernoulli_loglik(1, 40.0) > -1e-15);
    CHECK(bernoulli_loglik(0, -40.0) > -1e-15);
    CHECK(bernoulli_loglik(1, -3.0) == doctest::Approx(std::log(sigmoid_ref(-3.0))).epsilon(1e-12));
  }

  TEST_CASE("ELBO gradient matches finite differences") {
    Rng rng(8, 0);
    const Eigen::Index m = 3, d = 2, n = 7;
    for (int t = 0; t < 5; ++t) {
      const auto gp = random_gp(rng, m, d);
      auto p = detail::params_from_gp(gp);
      const MatrixXd x = random_matrix(rng, n, d);
      Eigen::VectorXi y(n);
      for (Eigen::Index i = 0; i < n; ++i) y[i] = static_cast<int>(rng.below(2));
      const MatrixXd eps = random_matrix(rng, n, 4);
      const double jit = gp.effective_jitter();
      const auto obj = detail::elbo_with_grad(p, x, y, eps, jit);

      auto f = [&](const detail::GpParams& q) { return detail::elbo_with_grad(q, x, y, eps, jit).elbo; };
      auto check_one = [&](double& slot, double analytic) {
        const double h = 1e-6, keep = slot;
        slot = keep + h;
        const double up = f(p);
        slot = keep - h;
        const double dn = f(p);
        slot = keep;
        CHECK(testing::rel_err(analytic, (up - dn) / (2 * h), 1e-4) < 1e-4);
      };
      check_one(p.log_outputscale, obj.grad.log_outputscale);
      check_one(p.log_lengthscale, obj.grad.log_lengthscale);
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < d; ++j) check_one(p.inducing(i, j), obj.grad.inducing(i, j));
      for (Eigen::Index i = 0; i < m; ++i) check_one(p.white_mean[i], obj.grad.white_mean[i]);
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) check_one(p.white_factor(i, j), obj.grad.white_factor(i, j));
    }
  }

  TEST_CASE("fit improves the ELBO, orders variances and is deterministic") {
    const auto data = synth_generate(60, 4, 3.0, 5);
    GpFitConfig cfg;
    cfg.m_per_class = 6;
    cfg.elbo_steps = 200;
    cfg.seed = 3;
    const auto init = initial_gp(data, cfg);
    const auto gp = fit_gp(data, cfg);
    const double e0 = elbo(init, data, 64, 1), e1 = elbo(gp, data, 64, 1);
    CHECK(e1 > e0 + 0.1 * std::abs(e0));

    const double ls = gp.kernel().lengthscale();
    double near = 0, far = 0;
    for (const auto& s : data) {
      near += predictive_latent(gp, s.embedding).variance;
      auto z = s.embedding;
      for (auto& v : z) v += 10.0 * ls;
      far += predictive_latent(gp, z).variance;
    }
    CHECK(near < far);

    const auto again = fit_gp(data, cfg);
    CHECK(again.kernel().log_outputscale == gp.kernel().log_outputscale);
    CHECK(again.kernel().log_lengthscale == gp.kernel().log_lengthscale);
    CHECK(again.var_mean() == gp.var_mean());

    cfg.init = InducingInit::PerClassKMeans;
    CHECK(fit_gp(data, cfg).num_inducing() == 12);
  }

  TEST_CASE("fit preconditions and JSON round trip") {
    const auto data = synth_generate(5, 2, 2.0, 1);
    GpFitConfig cfg;
    cfg.m_per_class = 6;
    CHECK_THROWS_AS(fit_gp(data, cfg), Error);
    cfg.m_per_class = 3;
    cfg.elbo_steps = 20;
    const auto gp = fit_gp(data, cfg);
    const auto back = gp_from_json(gp_to_json(gp));
    CHECK(back.inducing() == gp.inducing());
    CHECK(back.var_mean() == gp.var_mean());
    CHECK(back.var_cov_factor() == gp.var_cov_factor());
    CHECK(back.kernel().log_lengthscale == gp.kernel().log_lengthscale);
    const std::vector<double> z{0.3, 0.1};
    CHECK(predictive_latent(back, z).variance == predictive_latent(gp, z).variance);
    CHECK_THROWS_AS(gp_from_json("{\"schema\":\"gp/1\"}"), Error);
  }

  TEST_CASE("jitter escalation gives up with a compute error") {
    MatrixXd k(2, 2);
    k << 1.0, 0.0, 0.0, -1.0;
    try {
      cholesky_with_jitter(k, 1e-6);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Compute);
    }
    // Duplicate inducing inputs are rescued by the starting jitter.
    MatrixXd dup = MatrixXd::Ones(2, 2);
    const auto c = cholesky_with_jitter(dup, 1e-6);
    CHECK(c.jitter >= 1e-6);
  }
}
