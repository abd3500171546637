#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uqfuse/dataset.hpp"

namespace uqfuse {

/// k(z, z') = outputscale * exp(-|z - z'|^2 / (2 lengthscale^2)), both
/// hyperparameters stored as logs.
struct RbfKernel {
  double log_outputscale = 0.0;
  double log_lengthscale = 0.0;

  double outputscale() const { return std::exp(log_outputscale); }
  double lengthscale() const { return std::exp(log_lengthscale); }
};

double rbf(const RbfKernel& k, std::span<const double> z, std::span<const double> z2);

/// Cross-covariance between rows of a (n x d) and rows of b (m x d).
Eigen::MatrixXd rbf_matrix(const RbfKernel& k, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Lower Cholesky factor of K + jitter*I, escalating jitter by x10 from
/// `start` up to 1e-2. Throws ErrorKind::Compute when every attempt fails.
struct JitteredCholesky {
  Eigen::MatrixXd lower;
  double jitter = 0.0;
};
JitteredCholesky cholesky_with_jitter(const Eigen::MatrixXd& k, double start);

/// Sparse variational GP classifier: inducing inputs Z (M x d) and
/// q(u) = N(var_mean, S) with S = factor * factor^T, factor lower triangular
/// with positive diagonal. The inducing prior is N(0, Kuu + jitter*I).
class SparseGP {
 public:
  SparseGP() = default;
  SparseGP(RbfKernel kernel, Eigen::MatrixXd inducing, Eigen::VectorXd var_mean,
           Eigen::MatrixXd var_cov_factor, double jitter = 1e-6);

  /// q(u) = p(u): zero mean, S = Kuu + jitter*I.
  static SparseGP prior(RbfKernel kernel, Eigen::MatrixXd inducing, double jitter = 1e-6);

  const RbfKernel& kernel() const noexcept { return kernel_; }
  const Eigen::MatrixXd& inducing() const noexcept { return inducing_; }
  const Eigen::VectorXd& var_mean() const noexcept { return var_mean_; }
  const Eigen::MatrixXd& var_cov_factor() const noexcept { return var_cov_factor_; }
  double jitter() const noexcept { return jitter_; }
  std::size_t num_inducing() const { return static_cast<std::size_t>(inducing_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(inducing_.cols()); }

  /// Cholesky factor of Kuu + jitter*I (after any escalation).
  const Eigen::MatrixXd& kuu_chol() const noexcept { return kuu_chol_; }
  double effective_jitter() const noexcept { return effective_jitter_; }
  /// Whitened variational mean L^{-1} mu and factor L^{-1} factor.
  const Eigen::VectorXd& white_mean() const noexcept { return white_mean_; }
  const Eigen::MatrixXd& white_factor() const noexcept { return white_factor_; }

 private:
  RbfKernel kernel_;
  Eigen::MatrixXd inducing_;
  Eigen::VectorXd var_mean_;
  Eigen::MatrixXd var_cov_factor_;
  double jitter_ = 1e-6;

  Eigen::MatrixXd kuu_chol_;
  double effective_jitter_ = 0.0;
  Eigen::VectorXd white_mean_;
  Eigen::MatrixXd white_factor_;
};

struct LatentPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

LatentPrediction predictive_latent(const SparseGP& gp, std::span<const double> z);

/// MC estimate of E[sigmoid(f)], f ~ N(mean, variance).
double predictive_prob(const LatentPrediction& latent, std::size_t s_samples, std::uint64_t seed);
double predictive_prob(const SparseGP& gp, std::span<const double> z, std::size_t s_samples,
                       std::uint64_t seed);

double kl_qu_pu(const SparseGP& gp);

/// Bernoulli log-likelihood log p(y | f) = y f - softplus(f).
double bernoulli_loglik(int y, double f);

/// Sum over samples of the MC expected log-likelihood minus KL[q(u) || p(u)].
double elbo(const SparseGP& gp, const EmbeddingDataset& data, std::size_t mc_samples,
            std::uint64_t seed);

enum class InducingInit { PerClassRandom, PerClassKMeans };

struct GpFitConfig {
  std::size_t m_per_class = 16;
  std::size_t elbo_steps = 300;
  double learning_rate = 0.02;
  std::size_t mc_elbo_samples = 8;
  std::uint64_t seed = 0;
  double jitter = 1e-6;
  InducingInit init = InducingInit::PerClassRandom;
};

struct GpFitTrace {
  std::vector<double> elbo;  // MC ELBO at every step, before the update
};

SparseGP fit_gp(const EmbeddingDataset& data, const GpFitConfig& cfg, GpFitTrace* trace = nullptr);

/// Initial state used by fit_gp: per-class inducing inputs, q(u) = p(u),
/// unit outputscale, lengthscale from the median inducing-point distance.
SparseGP initial_gp(const EmbeddingDataset& data, const GpFitConfig& cfg);

std::string gp_to_json(const SparseGP& gp);
SparseGP gp_from_json(const std::string& text, const std::string& origin = "<memory>");

namespace detail {

/// Unconstrained fit parameters: log hyperparameters, inducing inputs,
/// whitened mean, and whitened lower factor whose diagonal is stored as logs.
struct GpParams {
  double log_outputscale = 0.0;
  double log_lengthscale = 0.0;
  Eigen::MatrixXd inducing;
  Eigen::VectorXd white_mean;
  Eigen::MatrixXd white_factor;  // strictly lower part used; diagonal holds logs
};

struct GpObjective {
  double elbo = 0.0;
  double expected_loglik = 0.0;
  double kl = 0.0;
  GpParams grad;  // d elbo / d params, same layout
};

/// ELBO and its gradient for fixed standard-normal draws eps (N x S).
GpObjective elbo_with_grad(const GpParams& p, const Eigen::MatrixXd& x, const Eigen::VectorXi& y,
                           const Eigen::MatrixXd& eps, double jitter);

GpParams params_from_gp(const SparseGP& gp);
SparseGP gp_from_params(const GpParams& p, double jitter);

}  // namespace detail

}  // namespace uqfuse
