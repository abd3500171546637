#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "uqfuse/head.hpp"
#include "uqfuse/rng.hpp"

namespace testing {

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Random head with at most ~50 parameters and nonzero biases.
inline uqfuse::ClassifierHead random_small_head(std::uint64_t seed, std::size_t d, std::size_t h1,
                                                std::size_t h2, double dropout = 0.5) {
  uqfuse::Rng rng(seed, 77);
  auto head = uqfuse::ClassifierHead::zeros(d, h1, h2, dropout);
  Eigen::VectorXd p(static_cast<Eigen::Index>(head.num_params()));
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = rng.uniform(-1.5, 1.5);
  head.set_flat_params(p);
  return head;
}

inline std::vector<double> random_vector(uqfuse::Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

// Central finite-difference gradient of the BCE loss with respect to the flat parameters.
inline Eigen::VectorXd fd_grad_params(const uqfuse::ClassifierHead& head, std::span<const double> x,
                                      uqfuse::Label y, double h = 1e-5) {
  auto probe = head;
  const Eigen::VectorXd p0 = head.flat_params();
  Eigen::VectorXd g(p0.size());
  for (Eigen::Index i = 0; i < p0.size(); ++i) {
    Eigen::VectorXd p = p0;
    p[i] = p0[i] + h;
    probe.set_flat_params(p);
    const double up = uqfuse::head_loss(probe, x, y);
    p[i] = p0[i] - h;
    probe.set_flat_params(p);
    const double dn = uqfuse::head_loss(probe, x, y);
    g[i] = (up - dn) / (2 * h);
  }
  return g;
}

inline Eigen::VectorXd fd_grad_input(const uqfuse::ClassifierHead& head, std::span<const double> x,
                                     uqfuse::Label y, double h = 1e-5) {
  std::vector<double> v(x.begin(), x.end());
  Eigen::VectorXd g(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x0 = v[i];
    v[i] = x0 + h;
    const double up = uqfuse::head_loss(head, v, y);
    v[i] = x0 - h;
    const double dn = uqfuse::head_loss(head, v, y);
    v[i] = x0;
    g[static_cast<Eigen::Index>(i)] = (up - dn) / (2 * h);
  }
  return g;
}

// True when every ReLU pre-activation is at least `margin` away from zero, so
// central differences with a small step never straddle a kink.
inline bool away_from_kinks(const uqfuse::ClassifierHead& head, std::span<const double> x,
                            double margin) {
  const auto& L = head.layers();
  Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
  for (std::size_t k = 0; k < 2; ++k) {
    const Eigen::VectorXd z = L[k].weight * a + L[k].bias;
    if ((z.array().abs() < margin).any()) return false;
    a = z.cwiseMax(0.0);
  }
  return true;
}

// Disc of radius 1 (Nature) inside an annulus of radii 1.8..2.8 (AI). Separable
// with a 0.8 gap, but only by a curved boundary, so trained heads are far from linear.
inline uqfuse::EmbeddingDataset ring_data(std::size_t n_per_class, std::uint64_t seed) {
  uqfuse::Rng rng(seed, 1);
  std::vector<uqfuse::Sample> s;
  for (std::size_t i = 0; i < 2 * n_per_class; ++i) {
    const bool inner = i % 2 == 1;
    const double r = inner ? std::sqrt(rng.uniform()) : 1.8 + rng.uniform();
    const double a = rng.uniform(0, 2 * 3.141592653589793);
    s.push_back({"r" + std::to_string(i), {r * std::cos(a), r * std::sin(a)},
                 inner ? uqfuse::Label::Nature : uqfuse::Label::AI});
  }
  return uqfuse::EmbeddingDataset(std::move(s), 2);
}

// Head trained on ring_data.
inline uqfuse::ClassifierHead ring_head(const uqfuse::EmbeddingDataset& data, std::uint64_t seed) {
  uqfuse::TrainConfig tc;
  tc.epochs = 200;
  tc.seed = seed;
  tc.optimizer = uqfuse::Optimizer::Adam;
  tc.learning_rate = 0.01;
  tc.dropout_rate = 0.1;
  return uqfuse::head_train(data, tc);
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("uqfuse_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Gauss-Hermite (probabilists' weight) quadrature of E[f(X)], X ~ N(mu, sigma^2),
// nodes and weights from the Golub-Welsch eigenproblem.
template <typename F>
double gauss_hermite_expectation(F f, double mu, double sigma, int nodes = 61) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(nodes, nodes);
  for (int i = 1; i < nodes; ++i) J(i, i - 1) = J(i - 1, i) = std::sqrt(static_cast<double>(i));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  double acc = 0.0;
  for (int i = 0; i < nodes; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    acc += v0 * v0 * f(mu + sigma * es.eigenvalues()[i]);
  }
  return acc;
}

}  // namespace testing
