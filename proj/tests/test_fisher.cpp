#include "doctest.h"

#include <cmath>

#include "support.hpp"
#include "uqfuse/fisher.hpp"

using namespace uqfuse;

namespace {

FisherDiag diag_of(std::vector<std::vector<double>> layers) {
  FisherDiag d;
  for (auto& l : layers) d.layers.push_back(Eigen::Map<Eigen::VectorXd>(l.data(), static_cast<Eigen::Index>(l.size())));
  return d;
}

}  // namespace

TEST_SUITE("fisher") {
  TEST_CASE("zero network puts 0.25 on the output bias only") {
    const auto h = ClassifierHead::zeros(2, 3, 2);
    const std::vector<double> x{0.5, -1.0};
    const auto d = fim_diag(h, x);
    const auto flat = d.flat();
    CHECK(flat[flat.size() - 1] == 0.25);
    CHECK(flat.head(flat.size() - 1).isZero());
    CHECK(fisher_trace(d) == 0.25);
    CHECK(fisher_frobenius(d) == 0.25);
  }

  TEST_CASE("layer partition follows the parameter layout") {
    const auto h = testing::random_small_head(1, 3, 4, 2);
    const std::vector<double> x{0.1, 0.2, 0.3};
    const auto d = fim_diag(h, x);
    const auto blocks = h.layer_blocks();
    REQUIRE(d.layers.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) CHECK(static_cast<std::size_t>(d.layers[k].size()) == blocks[k].second);
    CHECK((d.flat().array() >= 0.0).all());
  }

  TEST_CASE("diagonal equals the two-class enumeration and finite differences") {
    Rng rng(8, 2);
    int checked = 0;
    for (std::uint64_t t = 0; checked < 40 && t < 400; ++t) {
      const auto h = testing::random_small_head(100 + t, 3, 4, 3);
      const auto x = testing::random_vector(rng, 3);
      if (!testing::away_from_kinks(h, x, 1e-3)) continue;
      ++checked;
      const auto g0 = testing::fd_grad_params(h, x, Label::AI);
      const auto g1 = testing::fd_grad_params(h, x, Label::Nature);
      const Eigen::VectorXd oracle = 0.5 * g0.cwiseProduct(g0) + 0.5 * g1.cwiseProduct(g1);
      const auto got = fim_diag(h, x).flat();
      for (Eigen::Index i = 0; i < got.size(); ++i) CHECK(testing::rel_err(got[i], oracle[i], 1e-10) < 1e-3);
    }
    CHECK(checked == 40);
  }

  TEST_CASE("trace, Frobenius and entropy hand cases") {
    CHECK(fisher_trace(diag_of({{1, 1, 1, 1}})) == 4.0);
    CHECK(fisher_trace(diag_of({{0, 0}})) == 0.0);
    CHECK(fisher_frobenius(diag_of({{1, 1, 1, 1}})) == 2.0);
    CHECK(fisher_frobenius(diag_of({{3}, {4}})) == 5.0);
    CHECK(fisher_frobenius(diag_of({{3}, {4}}), FrobeniusPooling::SumLayerNorms) == 7.0);
    CHECK(fisher_frobenius(diag_of({{0.25}})) == 0.25);
    CHECK(std::abs(fisher_entropy(diag_of({{1, 1, 1, 1}})).value - std::log(4.0)) < 1e-11);
    CHECK(std::abs(fisher_entropy(diag_of({{1, 0, 0, 0}})).value) < 1e-11);
    const auto two = fisher_entropy(diag_of({{1, 1}, {2, 2, 2, 2}}));
    CHECK(two.value == doctest::Approx((std::log(2.0) + std::log(4.0)) / 2).epsilon(1e-10));
    CHECK_FALSE(two.degenerate_layer);
  }

  TEST_CASE("zero-trace layer contributes 0 and raises the flag") {
    const auto e = fisher_entropy(diag_of({{0, 0}, {1, 1}}));
    CHECK(e.degenerate_layer);
    CHECK(e.value == doctest::Approx(std::log(2.0) / 2));
  }

  TEST_CASE("reciprocal transforms") {
    const auto u = fisher_uncertainties(4.0, 5.0, 0.0);
    CHECK(u.total == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(u.frobenius == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(u.entropy == doctest::Approx(1e12));
    CHECK(fisher_uncertainties(0.0, 0.0, 0.0).total == doctest::Approx(1e12));
  }

  TEST_CASE("summary is consistent with its parts") {
    const auto h = testing::random_small_head(5, 3, 4, 3);
    const std::vector<double> x{0.3, -0.4, 0.8};
    const auto d = fim_diag(h, x);
    const auto s = fisher_summary(h, x);
    const auto flat = d.flat();
    CHECK(s.trace == doctest::Approx(flat.sum()).epsilon(1e-14));
    CHECK(s.frobenius * s.frobenius == doctest::Approx(flat.squaredNorm()).epsilon(1e-12));
    CHECK(s.fisher_total_u == 1.0 / (s.trace + kFisherEpsilon));
    CHECK(s.fisher_frobenius_u == 1.0 / (s.frobenius + kFisherEpsilon));
    CHECK(s.fisher_entropy_u == 1.0 / (s.entropy + kFisherEpsilon));
  }

  TEST_CASE("properties on random diagonals and samples") {
    Rng rng(21, 0);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> a(2 + rng.below(10)), b(1 + rng.below(5));
      for (auto& v : a) v = rng.uniform(0.01, 3.0);
      for (auto& v : b) v = rng.uniform(0.01, 3.0);
      const auto d = diag_of({a, b});
      CHECK(fisher_frobenius(d) <= fisher_trace(d));
    }
    // Reciprocal is strictly decreasing in the trace.
    const auto h = testing::random_small_head(6, 3, 4, 3);
    for (int t = 0; t < 50; ++t) {
      const auto xa = testing::random_vector(rng, 3), xb = testing::random_vector(rng, 3);
      const auto sa = fisher_summary(h, xa), sb = fisher_summary(h, xb);
      if (sa.trace > sb.trace) CHECK(sa.fisher_total_u < sb.fisher_total_u);
      if (sb.trace > sa.trace) CHECK(sb.fisher_total_u < sa.fisher_total_u);
    }
  }
}
