#include "uqfuse/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "uqfuse/error.hpp"
#include "uqfuse/head.hpp"
#include "uqfuse/rng.hpp"

namespace uqfuse {

using json = nlohmann::json;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kMaxJitter = 1e-2;
constexpr double kVarianceFloor = 1e-12;  // relative to the outputscale

MatrixXd squared_distances(const MatrixXd& a, const MatrixXd& b) {
  const VectorXd an = a.rowwise().squaredNorm();
  const VectorXd bn = b.rowwise().squaredNorm();
  MatrixXd d = (-2.0 * a * b.transpose()).colwise() + an;
  d.rowwise() += bn.transpose();
  return d.cwiseMax(0.0);
}

MatrixXd solve_lower(const MatrixXd& lower, const MatrixXd& rhs) {
  return lower.triangularView<Eigen::Lower>().solve(rhs);
}

MatrixXd solve_lower_transpose(const MatrixXd& lower, const MatrixXd& rhs) {
  return lower.transpose().triangularView<Eigen::Upper>().solve(rhs);
}

MatrixXd to_matrix(const EmbeddingDataset& data) {
  MatrixXd x(static_cast<Index>(data.size()), static_cast<Index>(data.dim()));
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t j = 0; j < data.dim(); ++j)
      x(static_cast<Index>(i), static_cast<Index>(j)) = data[i].embedding[j];
  return x;
}

}  // namespace

double rbf(const RbfKernel& k, std::span<const double> z, std::span<const double> z2) {
  if (z.size() != z2.size()) throw_invalid("rbf: dimension mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) sq += (z[i] - z2[i]) * (z[i] - z2[i]);
  const double l = k.lengthscale();
  return k.outputscale() * std::exp(-sq / (2.0 * l * l));
}

Eigen::MatrixXd rbf_matrix(const RbfKernel& k, const MatrixXd& a, const MatrixXd& b) {
  require(a.cols() == b.cols(), "rbf_matrix: dimension mismatch");
  const double l = k.lengthscale();
  return k.outputscale() * (squared_distances(a, b) / (-2.0 * l * l)).array().exp().matrix();
}

JitteredCholesky cholesky_with_jitter(const MatrixXd& k, double start) {
  require(start > 0.0, "jitter must be positive");
  const Index m = k.rows();
  for (double jitter = start; jitter <= kMaxJitter * (1 + 1e-9); jitter *= 10.0) {
    MatrixXd kj = k;
    kj.diagonal().array() += jitter;
    Eigen::LLT<MatrixXd> llt(kj);
    if (llt.info() == Eigen::Success) {
      MatrixXd lower = llt.matrixL();
      if (lower.diagonal().minCoeff() > 0.0 && lower.allFinite())
        return {std::move(lower), jitter};
    }
    if (m == 0) break;
  }
  throw_compute("inducing covariance is not positive definite even with jitter 1e-2 "
                "(ill-conditioned kernel matrix; check for duplicate inducing points or a "
                "degenerate lengthscale)");
}

SparseGP::SparseGP(RbfKernel kernel, MatrixXd inducing, VectorXd var_mean,
                   MatrixXd var_cov_factor, double jitter)
    : kernel_(kernel),
      inducing_(std::move(inducing)),
      var_mean_(std::move(var_mean)),
      var_cov_factor_(std::move(var_cov_factor)),
      jitter_(jitter) {
  const Index m = inducing_.rows();
  require(m >= 1 && inducing_.cols() >= 1, "GP needs at least one inducing point");
  require(var_mean_.size() == m, "var_mean length must equal the number of inducing points");
  require(var_cov_factor_.rows() == m && var_cov_factor_.cols() == m,
          "var_cov_factor must be M x M");
  require(std::isfinite(kernel_.log_outputscale) && std::isfinite(kernel_.log_lengthscale),
          "kernel hyperparameters must be finite");
  require(jitter_ > 0.0, "jitter must be positive");
  var_cov_factor_ = var_cov_factor_.triangularView<Eigen::Lower>();
  require(var_cov_factor_.diagonal().minCoeff() > 0.0,
          "var_cov_factor must have a positive diagonal");

  auto chol = cholesky_with_jitter(rbf_matrix(kernel_, inducing_, inducing_), jitter_);
  kuu_chol_ = std::move(chol.lower);
  effective_jitter_ = chol.jitter;
  white_mean_ = solve_lower(kuu_chol_, var_mean_);
  white_factor_ = solve_lower(kuu_chol_, var_cov_factor_);
  white_factor_ = white_factor_.triangularView<Eigen::Lower>();
}

SparseGP SparseGP::prior(RbfKernel kernel, MatrixXd inducing, double jitter) {
  auto chol = cholesky_with_jitter(rbf_matrix(kernel, inducing, inducing), jitter);
  const Index m = inducing.rows();
  return SparseGP(kernel, std::move(inducing), VectorXd::Zero(m), std::move(chol.lower),
                  chol.jitter);
}

LatentPrediction predictive_latent(const SparseGP& gp, std::span<const double> z) {
  if (z.size() != gp.dim())
    throw_invalid("predictive_latent: input dimension " + std::to_string(z.size()) +
                  " does not match GP dimension " + std::to_string(gp.dim()));
  const Eigen::Map<const Eigen::RowVectorXd> zr(z.data(), static_cast<Index>(z.size()));
  const VectorXd kfu = rbf_matrix(gp.kernel(), gp.inducing(), MatrixXd(zr)).col(0);
  const VectorXd a = solve_lower(gp.kuu_chol(), kfu);
  const double kss = gp.kernel().outputscale();
  const double conditional = std::max(kss - a.squaredNorm(), 0.0);
  const double explained = (gp.white_factor().transpose() * a).squaredNorm();
  LatentPrediction out;
  out.mean = a.dot(gp.white_mean());
  out.variance = std::max(conditional + explained, kVarianceFloor * kss);
  return out;
}

double predictive_prob(const LatentPrediction& latent, std::size_t s_samples, std::uint64_t seed) {
  require(s_samples >= 1, "s_samples must be at least 1");
  const double sd = std::sqrt(std::max(latent.variance, 0.0));
  Rng rng(seed, 0x6F);
  double acc = 0.0;
  for (std::size_t s = 0; s < s_samples; ++s) acc += sigmoid(latent.mean + sd * rng.normal());
  return acc / static_cast<double>(s_samples);
}

double predictive_prob(const SparseGP& gp, std::span<const double> z, std::size_t s_samples,
                       std::uint64_t seed) {
  return predictive_prob(predictive_latent(gp, z), s_samples, seed);
}

double kl_qu_pu(const SparseGP& gp) {
  // In whitened coordinates p(v) = N(0, I) and q(v) = N(m, R R^T).
  const auto& r = gp.white_factor();
  const auto& m = gp.white_mean();
  double logdet = 0.0;
  for (Index i = 0; i < r.rows(); ++i) logdet += std::log(std::abs(r(i, i)));
  return 0.5 * (r.squaredNorm() + m.squaredNorm() - static_cast<double>(r.rows())) - logdet;
}

double bernoulli_loglik(int y, double f) { return y * f - softplus(f); }

double elbo(const SparseGP& gp, const EmbeddingDataset& data, std::size_t mc_samples,
            std::uint64_t seed) {
  require(!data.empty(), "elbo: data is empty");
  require(mc_samples >= 1, "elbo: mc_samples must be at least 1");
  require(data.dim() == gp.dim(), "elbo: data dimension does not match GP");
  const auto p = detail::params_from_gp(gp);
  const MatrixXd x = to_matrix(data);
  Eigen::VectorXi y(static_cast<Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) y[static_cast<Index>(i)] = to_int(data[i].label);
  Rng rng(seed, 0xE1B0);
  MatrixXd eps(x.rows(), static_cast<Index>(mc_samples));
  for (Index i = 0; i < eps.rows(); ++i)
    for (Index s = 0; s < eps.cols(); ++s) eps(i, s) = rng.normal();
  return detail::elbo_with_grad(p, x, y, eps, gp.effective_jitter()).elbo;
}

namespace detail {

GpParams params_from_gp(const SparseGP& gp) {
  GpParams p;
  p.log_outputscale = gp.kernel().log_outputscale;
  p.log_lengthscale = gp.kernel().log_lengthscale;
  p.inducing = gp.inducing();
  p.white_mean = gp.white_mean();
  p.white_factor = gp.white_factor();
  for (Index i = 0; i < p.white_factor.rows(); ++i)
    p.white_factor(i, i) = std::log(std::abs(p.white_factor(i, i)));
  return p;
}

SparseGP gp_from_params(const GpParams& p, double jitter) {
  const RbfKernel k{p.log_outputscale, p.log_lengthscale};
  auto chol = cholesky_with_jitter(rbf_matrix(k, p.inducing, p.inducing), jitter);
  MatrixXd r = p.white_factor.triangularView<Eigen::StrictlyLower>();
  r.diagonal() = p.white_factor.diagonal().array().exp().matrix();
  MatrixXd factor = chol.lower * r;
  VectorXd mean = chol.lower * p.white_mean;
  return SparseGP(k, p.inducing, std::move(mean), std::move(factor), chol.jitter);
}

GpObjective elbo_with_grad(const GpParams& p, const MatrixXd& x, const Eigen::VectorXi& y,
                           const MatrixXd& eps, double jitter) {
  const Index m = p.inducing.rows();
  const Index n = x.rows();
  const Index s = eps.cols();
  const double os = std::exp(p.log_outputscale);
  const double ls = std::exp(p.log_lengthscale);
  const double inv_l2 = 1.0 / (ls * ls);

  MatrixXd r = p.white_factor.triangularView<Eigen::StrictlyLower>();
  r.diagonal() = p.white_factor.diagonal().array().exp().matrix();

  const MatrixXd duu = squared_distances(p.inducing, p.inducing);
  const MatrixXd duf = squared_distances(p.inducing, x);
  const MatrixXd kuu = os * (duu * (-0.5 * inv_l2)).array().exp().matrix();
  const MatrixXd kuf = os * (duf * (-0.5 * inv_l2)).array().exp().matrix();
  const auto chol = cholesky_with_jitter(kuu, jitter);
  const MatrixXd& lower = chol.lower;

  const MatrixXd a = solve_lower(lower, kuf);  // M x N
  const MatrixXd b = r.transpose() * a;        // M x N
  const VectorXd mu = a.transpose() * p.white_mean;
  const VectorXd raw_var = VectorXd::Constant(n, os) - a.colwise().squaredNorm().transpose() +
                           b.colwise().squaredNorm().transpose();
  const double floor = kVarianceFloor * os;

  GpObjective out;
  VectorXd g_mu(n), g_var(n);
  double ell = 0.0;
  for (Index i = 0; i < n; ++i) {
    const bool floored = raw_var[i] < floor;
    const double var = floored ? floor : raw_var[i];
    const double sd = std::sqrt(var);
    double gm = 0.0, gv = 0.0;
    for (Index k = 0; k < s; ++k) {
      const double f = mu[i] + sd * eps(i, k);
      ell += bernoulli_loglik(y[i], f);
      const double d = y[i] - sigmoid(f);
      gm += d;
      gv += d * eps(i, k);
    }
    g_mu[i] = gm / static_cast<double>(s);
    g_var[i] = floored ? 0.0 : gv / (2.0 * sd * static_cast<double>(s));
  }
  ell /= static_cast<double>(s);

  double logdet = 0.0;
  for (Index i = 0; i < m; ++i) logdet += p.white_factor(i, i);
  const double kl =
      0.5 * (r.squaredNorm() + p.white_mean.squaredNorm() - static_cast<double>(m)) - logdet;

  out.expected_loglik = ell;
  out.kl = kl;
  out.elbo = ell - kl;

  GpParams& g = out.grad;
  g.white_mean = a * g_mu - p.white_mean;

  const MatrixXd a_gv = a * g_var.asDiagonal();  // M x N
  MatrixXd g_r = 2.0 * (a_gv * a.transpose()) * r - r;
  g_r = g_r.triangularView<Eigen::Lower>();
  g.white_factor = g_r;
  for (Index i = 0; i < m; ++i) g.white_factor(i, i) = g_r(i, i) * r(i, i) + 1.0;

  // Back through A = L^{-1} Kuf.
  const MatrixXd a_bar =
      p.white_mean * g_mu.transpose() + 2.0 * (r * r.transpose() - MatrixXd::Identity(m, m)) * a_gv;
  const MatrixXd kuf_bar = solve_lower_transpose(lower, a_bar);
  const MatrixXd l_bar = (-(kuf_bar * a.transpose())).triangularView<Eigen::Lower>();

  // Cholesky adjoint: K_bar = sym(L^{-T} Phi(L^T L_bar) L^{-1}).
  MatrixXd phi = (lower.transpose() * l_bar).triangularView<Eigen::Lower>();
  phi.diagonal() *= 0.5;
  const MatrixXd tmp = solve_lower_transpose(lower, phi);                       // L^{-T} Phi
  const MatrixXd k_bar_raw = solve_lower_transpose(lower, tmp.transpose()).transpose();  // * L^{-1}
  const MatrixXd k_bar = 0.5 * (k_bar_raw + k_bar_raw.transpose());

  // The prior variance k(x, x) = outputscale enters var directly.
  g.log_outputscale = os * g_var.sum() + (k_bar.cwiseProduct(kuu)).sum() +
                      (kuf_bar.cwiseProduct(kuf)).sum();
  g.log_lengthscale = inv_l2 * ((k_bar.cwiseProduct(kuu).cwiseProduct(duu)).sum() +
                                (kuf_bar.cwiseProduct(kuf).cwiseProduct(duf)).sum());

  const MatrixXd wf = kuf_bar.cwiseProduct(kuf);  // M x N
  const MatrixXd wu = 2.0 * k_bar.cwiseProduct(kuu);
  g.inducing = inv_l2 * (wf * x - wf.rowwise().sum().asDiagonal() * p.inducing +
                         wu * p.inducing - wu.rowwise().sum().asDiagonal() * p.inducing);
  return out;
}

}  // namespace detail

namespace {

MatrixXd pick_rows(const MatrixXd& x, const std::vector<Index>& rows) {
  MatrixXd out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = x.row(rows[i]);
  return out;
}

std::vector<Index> sample_without_replacement(std::vector<Index> pool, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  pool.resize(k);
  return pool;
}

MatrixXd kmeans(const MatrixXd& pts, MatrixXd centers, std::size_t iters) {
  std::vector<Index> assign(static_cast<std::size_t>(pts.rows()), 0);
  for (std::size_t it = 0; it < iters; ++it) {
    const MatrixXd d = squared_distances(pts, centers);
    for (Index i = 0; i < pts.rows(); ++i) d.row(i).minCoeff(&assign[static_cast<std::size_t>(i)]);
    MatrixXd sum = MatrixXd::Zero(centers.rows(), centers.cols());
    VectorXd cnt = VectorXd::Zero(centers.rows());
    for (Index i = 0; i < pts.rows(); ++i) {
      sum.row(assign[static_cast<std::size_t>(i)]) += pts.row(i);
      cnt[assign[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (Index c = 0; c < centers.rows(); ++c)
      if (cnt[c] > 0) centers.row(c) = sum.row(c) / cnt[c];
  }
  return centers;
}

}  // namespace

SparseGP initial_gp(const EmbeddingDataset& data, const GpFitConfig& cfg) {
  require(cfg.m_per_class >= 1, "m_per_class must be positive");
  require(cfg.jitter > 0.0, "jitter must be positive");
  std::array<std::vector<Index>, 2> by_class;
  for (std::size_t i = 0; i < data.size(); ++i)
    by_class[static_cast<std::size_t>(to_int(data[i].label))].push_back(static_cast<Index>(i));
  if (by_class[0].empty() || by_class[1].empty())
    throw_invalid("fit_gp needs samples of both classes");
  if (by_class[0].size() < cfg.m_per_class || by_class[1].size() < cfg.m_per_class)
    throw_invalid("too few samples per class for " + std::to_string(cfg.m_per_class) +
                  " inducing points per class");

  const MatrixXd x = to_matrix(data);
  Rng rng(cfg.seed, 0x1DC);
  std::vector<MatrixXd> blocks;
  for (const auto& pool : by_class) {
    MatrixXd z = pick_rows(x, sample_without_replacement(pool, cfg.m_per_class, rng));
    if (cfg.init == InducingInit::PerClassKMeans) z = kmeans(pick_rows(x, pool), z, 25);
    blocks.push_back(std::move(z));
  }
  MatrixXd z(2 * static_cast<Index>(cfg.m_per_class), x.cols());
  z << blocks[0], blocks[1];

  // Median pairwise inducing distance as the starting lengthscale.
  const MatrixXd d = squared_distances(z, z);
  std::vector<double> dist;
  for (Index i = 0; i < z.rows(); ++i)
    for (Index j = i + 1; j < z.rows(); ++j) dist.push_back(std::sqrt(d(i, j)));
  double ls = 1.0;
  if (!dist.empty()) {
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(dist.size() / 2),
                     dist.end());
    ls = std::max(dist[dist.size() / 2], 1e-3);
  }
  return SparseGP::prior(RbfKernel{0.0, std::log(ls)}, std::move(z), cfg.jitter);
}

SparseGP fit_gp(const EmbeddingDataset& data, const GpFitConfig& cfg, GpFitTrace* trace) {
  require(cfg.elbo_steps >= 1, "elbo_steps must be positive");
  require(cfg.learning_rate > 0.0, "learning_rate must be positive");
  require(cfg.mc_elbo_samples >= 1, "mc_elbo_samples must be positive");
  const SparseGP init = initial_gp(data, cfg);
  detail::GpParams p = detail::params_from_gp(init);
  const double jitter = init.effective_jitter();

  const MatrixXd x = to_matrix(data);
  Eigen::VectorXi y(x.rows());
  for (std::size_t i = 0; i < data.size(); ++i) y[static_cast<Index>(i)] = to_int(data[i].label);

  // Adam state over the flattened parameter vector.
  const Index m = p.inducing.rows(), d = p.inducing.cols();
  const Index n_params = 2 + m * d + m + m * m;
  auto pack = [&](const detail::GpParams& q) {
    VectorXd v(n_params);
    v[0] = q.log_outputscale;
    v[1] = q.log_lengthscale;
    Index off = 2;
    v.segment(off, m * d) = Eigen::Map<const VectorXd>(q.inducing.data(), m * d);
    off += m * d;
    v.segment(off, m) = q.white_mean;
    off += m;
    v.segment(off, m * m) = Eigen::Map<const VectorXd>(q.white_factor.data(), m * m);
    return v;
  };
  auto unpack = [&](const VectorXd& v, detail::GpParams& q) {
    q.log_outputscale = v[0];
    q.log_lengthscale = v[1];
    Index off = 2;
    q.inducing = Eigen::Map<const MatrixXd>(v.data() + off, m, d);
    off += m * d;
    q.white_mean = v.segment(off, m);
    off += m;
    q.white_factor = Eigen::Map<const MatrixXd>(v.data() + off, m, m);
    q.white_factor = q.white_factor.triangularView<Eigen::Lower>();
  };

  VectorXd theta = pack(p);
  VectorXd m1 = VectorXd::Zero(n_params), m2 = VectorXd::Zero(n_params);
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  MatrixXd eps(x.rows(), static_cast<Index>(cfg.mc_elbo_samples));
  if (trace) trace->elbo.clear();

  for (std::size_t step = 0; step < cfg.elbo_steps; ++step) {
    Rng rng(cfg.seed, 0x57E9 + step);
    for (Index i = 0; i < eps.rows(); ++i)
      for (Index k = 0; k < eps.cols(); ++k) eps(i, k) = rng.normal();
    const auto obj = detail::elbo_with_grad(p, x, y, eps, jitter);
    if (trace) trace->elbo.push_back(obj.elbo);
    VectorXd g = pack(obj.grad);
    // Only the lower triangle of the factor is a parameter.
    for (Index c = 0; c < m; ++c)
      for (Index r = 0; r < c; ++r) g[2 + m * d + m + c * m + r] = 0.0;
    const auto t = static_cast<double>(step + 1);
    m1 = beta1 * m1 + (1 - beta1) * g;
    m2 = beta2 * m2 + (1 - beta2) * g.cwiseAbs2();
    const double c1 = 1 - std::pow(beta1, t), c2 = 1 - std::pow(beta2, t);
    theta.array() += cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + adam_eps);
    // Keep hyperparameters in a range where the kernel matrix stays usable.
    theta[0] = std::clamp(theta[0], -10.0, 10.0);
    theta[1] = std::clamp(theta[1], -7.0, 7.0);
    unpack(theta, p);
  }
  return detail::gp_from_params(p, jitter);
}

std::string gp_to_json(const SparseGP& gp) {
  auto matrix = [](const MatrixXd& a) {
    json rows = json::array();
    for (Index i = 0; i < a.rows(); ++i) {
      json row = json::array();
      for (Index j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  json j;
  j["schema"] = "gp/1";
  j["kernel"] = {{"log_os", gp.kernel().log_outputscale}, {"log_ls", gp.kernel().log_lengthscale}};
  j["inducing"] = matrix(gp.inducing());
  j["var_mean"] = std::vector<double>(gp.var_mean().data(),
                                      gp.var_mean().data() + gp.var_mean().size());
  j["var_cov_factor"] = matrix(gp.var_cov_factor());
  j["jitter"] = gp.jitter();
  return j.dump(1);
}

SparseGP gp_from_json(const std::string& text, const std::string& origin) {
  auto matrix = [&](const json& rows) {
    if (!rows.is_array() || rows.empty()) throw Error(ErrorKind::Parse, "empty matrix", origin);
    const auto r = rows.size(), c = rows[0].size();
    MatrixXd a(static_cast<Index>(r), static_cast<Index>(c));
    for (std::size_t i = 0; i < r; ++i) {
      if (rows[i].size() != c) throw Error(ErrorKind::Parse, "ragged matrix", origin);
      for (std::size_t k = 0; k < c; ++k)
        a(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k].get<double>();
    }
    return a;
  };
  try {
    const json j = json::parse(text);
    if (j.at("schema").get<std::string>() != "gp/1")
      throw Error(ErrorKind::Parse, "unsupported GP schema", origin);
    const RbfKernel k{j.at("kernel").at("log_os").get<double>(),
                      j.at("kernel").at("log_ls").get<double>()};
    const auto mean = j.at("var_mean").get<std::vector<double>>();
    return SparseGP(k, matrix(j.at("inducing")), Eigen::Map<const VectorXd>(mean.data(), static_cast<Index>(mean.size())),
                    matrix(j.at("var_cov_factor")), j.at("jitter").get<double>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("invalid GP JSON: ") + e.what(), origin);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::InvalidArgument) throw;
    throw Error(ErrorKind::Parse, e.what(), origin);
  }
}

}  // namespace uqfuse
