#include "uqfuse/head.hpp"

#include <cmath>
#include <numeric>

#include "json.hpp"
#include "uqfuse/error.hpp"

namespace uqfuse {

using json = nlohmann::json;

double sigmoid(double z) noexcept {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) noexcept {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

ClassifierHead::ClassifierHead(std::array<DenseLayer, kLayers> layers, double dropout_rate)
    : layers_(std::move(layers)), dropout_rate_(dropout_rate) {
  require(dropout_rate_ >= 0.0 && dropout_rate_ < 1.0, "dropout_rate must lie in [0, 1)");
  for (std::size_t k = 0; k < kLayers; ++k) {
    const auto& l = layers_[k];
    require(l.weight.rows() >= 1 && l.weight.cols() >= 1, "layer has an empty weight matrix");
    require(l.bias.size() == l.weight.rows(), "bias length must equal layer output size");
    if (k > 0)
      require(l.weight.cols() == layers_[k - 1].weight.rows(),
              "layer dimensions do not chain (out of layer k != in of layer k+1)");
  }
  require(layers_[kLayers - 1].weight.rows() == 1, "final layer must have exactly one output");
}

ClassifierHead ClassifierHead::zeros(std::size_t dim, std::size_t h1, std::size_t h2,
                                     double dropout_rate) {
  const auto d = static_cast<Eigen::Index>(dim), a = static_cast<Eigen::Index>(h1),
             b = static_cast<Eigen::Index>(h2);
  return ClassifierHead({DenseLayer{Eigen::MatrixXd::Zero(a, d), Eigen::VectorXd::Zero(a)},
                         DenseLayer{Eigen::MatrixXd::Zero(b, a), Eigen::VectorXd::Zero(b)},
                         DenseLayer{Eigen::MatrixXd::Zero(1, b), Eigen::VectorXd::Zero(1)}},
                        dropout_rate);
}

ClassifierHead ClassifierHead::glorot(std::size_t dim, std::size_t h1, std::size_t h2,
                                      double dropout_rate, std::uint64_t seed) {
  auto head = zeros(dim, h1, h2, dropout_rate);
  Rng rng(seed, 0x11E1D);
  for (auto& l : head.layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.weight.rows() + l.weight.cols()));
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = rng.uniform(-limit, limit);
  }
  return head;
}

std::size_t ClassifierHead::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

std::array<std::pair<std::size_t, std::size_t>, ClassifierHead::kLayers>
ClassifierHead::layer_blocks() const {
  std::array<std::pair<std::size_t, std::size_t>, kLayers> out;
  std::size_t off = 0;
  for (std::size_t k = 0; k < kLayers; ++k) {
    const auto n = static_cast<std::size_t>(layers_[k].weight.size() + layers_[k].bias.size());
    out[k] = {off, n};
    off += n;
  }
  return out;
}

Eigen::VectorXd ClassifierHead::flat_params() const {
  Eigen::VectorXd p(static_cast<Eigen::Index>(num_params()));
  Eigen::Index off = 0;
  for (const auto& l : layers_) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) p[off++] = l.weight(i, j);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) p[off++] = l.bias[i];
  }
  return p;
}

void ClassifierHead::set_flat_params(const Eigen::VectorXd& p) {
  require(static_cast<std::size_t>(p.size()) == num_params(), "parameter vector size mismatch");
  Eigen::Index off = 0;
  for (auto& l : layers_) {
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = p[off++];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = p[off++];
  }
}

DropoutMask draw_mask(const ClassifierHead& head, Rng& rng) {
  DropoutMask m;
  m.keep_prob = 1.0 - head.dropout_rate();
  for (std::size_t k = 0; k < 2; ++k) {
    const auto n = head.layers()[k].weight.rows();
    m.keep[k].resize(n);
    for (Eigen::Index i = 0; i < n; ++i) m.keep[k][i] = rng.bernoulli(m.keep_prob) ? 1.0 : 0.0;
  }
  return m;
}

DropoutMask ones_mask(const ClassifierHead& head) {
  DropoutMask m;
  m.keep_prob = 1.0 - head.dropout_rate();
  for (std::size_t k = 0; k < 2; ++k) m.keep[k] = Eigen::VectorXd::Ones(head.layers()[k].weight.rows());
  return m;
}

namespace {

struct Activations {
  Eigen::VectorXd pre0, out0, pre1, out1;
  double logit = 0.0;
};

void check_input(const ClassifierHead& head, std::span<const double> x) {
  if (x.size() != head.input_dim())
    throw_invalid("input dimension " + std::to_string(x.size()) + " does not match head input " +
                  std::to_string(head.input_dim()));
}

void check_mask(const ClassifierHead& head, const DropoutMask& m) {
  require(m.keep[0].size() == head.layers()[0].weight.rows() &&
              m.keep[1].size() == head.layers()[1].weight.rows(),
          "dropout mask shape does not match hidden sizes");
  require(m.keep_prob > 0.0, "dropout mask keep probability must be positive");
}

Activations forward_trace(const ClassifierHead& head, const Eigen::Ref<const Eigen::VectorXd>& x,
                          const DropoutMask* mask) {
  const auto& L = head.layers();
  Activations a;
  a.pre0 = L[0].weight * x + L[0].bias;
  a.out0 = a.pre0.cwiseMax(0.0);
  if (mask) a.out0 = a.out0.cwiseProduct(mask->keep[0]) / mask->keep_prob;
  a.pre1 = L[1].weight * a.out0 + L[1].bias;
  a.out1 = a.pre1.cwiseMax(0.0);
  if (mask) a.out1 = a.out1.cwiseProduct(mask->keep[1]) / mask->keep_prob;
  a.logit = L[2].weight.row(0).dot(a.out1) + L[2].bias[0];
  return a;
}

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> x) {
  return {x.data(), static_cast<Eigen::Index>(x.size())};
}

struct Backprop {
  Eigen::VectorXd dpre0, dpre1;  // gradients at the hidden pre-activations
  double dlogit = 0.0;
};

Backprop backward(const ClassifierHead& head, const Activations& a, Label y,
                  const DropoutMask* mask) {
  const auto& L = head.layers();
  Backprop b;
  b.dlogit = sigmoid(a.logit) - to_int(y);
  Eigen::VectorXd d1 = L[2].weight.row(0).transpose() * b.dlogit;
  if (mask) d1 = d1.cwiseProduct(mask->keep[1]) / mask->keep_prob;
  b.dpre1 = (a.pre1.array() > 0.0).select(d1, 0.0);
  Eigen::VectorXd d0 = L[1].weight.transpose() * b.dpre1;
  if (mask) d0 = d0.cwiseProduct(mask->keep[0]) / mask->keep_prob;
  b.dpre0 = (a.pre0.array() > 0.0).select(d0, 0.0);
  return b;
}

void scatter_param_grad(const Eigen::Ref<const Eigen::VectorXd>& x, const Activations& a,
                        const Backprop& b, Eigen::Ref<Eigen::VectorXd> g) {
  Eigen::Index off = 0;
  auto emit = [&](const Eigen::VectorXd& delta, const Eigen::Ref<const Eigen::VectorXd>& input) {
    for (Eigen::Index i = 0; i < delta.size(); ++i)
      for (Eigen::Index j = 0; j < input.size(); ++j) g[off++] = delta[i] * input[j];
    for (Eigen::Index i = 0; i < delta.size(); ++i) g[off++] = delta[i];
  };
  emit(b.dpre0, x);
  emit(b.dpre1, a.out0);
  emit(Eigen::VectorXd::Constant(1, b.dlogit), a.out1);
}

}  // namespace

double head_forward(const ClassifierHead& head, std::span<const double> x,
                    const DropoutMask* mask) {
  check_input(head, x);
  if (mask) check_mask(head, *mask);
  return forward_trace(head, as_vector(x), mask).logit;
}

double head_prob(const ClassifierHead& head, std::span<const double> x) {
  return sigmoid(head_forward(head, x));
}

double head_loss(const ClassifierHead& head, std::span<const double> x, Label y) {
  const double z = head_forward(head, x);
  return softplus(z) - to_int(y) * z;
}

Eigen::VectorXd head_grad_params(const ClassifierHead& head, std::span<const double> x, Label y,
                                 const DropoutMask* mask) {
  check_input(head, x);
  if (mask) check_mask(head, *mask);
  const auto xv = as_vector(x);
  const auto a = forward_trace(head, xv, mask);
  const auto b = backward(head, a, y, mask);
  Eigen::VectorXd g(static_cast<Eigen::Index>(head.num_params()));
  scatter_param_grad(xv, a, b, g);
  return g;
}

Eigen::VectorXd head_grad_input(const ClassifierHead& head, std::span<const double> x, Label y) {
  check_input(head, x);
  const auto a = forward_trace(head, as_vector(x), nullptr);
  const auto b = backward(head, a, y, nullptr);
  return head.layers()[0].weight.transpose() * b.dpre0;
}

ClassifierHead head_train(const EmbeddingDataset& data, const TrainConfig& cfg) {
  require(!data.empty(), "training data is empty");
  require(cfg.epochs >= 1, "epochs must be at least 1");
  require(cfg.batch_size >= 1, "batch_size must be at least 1");
  require(cfg.learning_rate > 0.0, "learning_rate must be positive");
  require(cfg.h1 >= 1 && cfg.h2 >= 1, "hidden sizes must be at least 1");
  if (data.count(Label::AI) == 0 || data.count(Label::Nature) == 0)
    throw_invalid("training data must contain both classes");

  auto head = ClassifierHead::glorot(data.dim(), cfg.h1, cfg.h2, cfg.dropout_rate, cfg.seed);
  const auto P = static_cast<Eigen::Index>(head.num_params());
  Eigen::VectorXd params = head.flat_params();
  Eigen::VectorXd grad(P), g(P);
  Eigen::VectorXd m1 = Eigen::VectorXd::Zero(P), m2 = Eigen::VectorXd::Zero(P);
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::size_t adam_t = 0;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(cfg.seed, 0x5B0FF1E);
  Rng mask_rng(cfg.seed, 0xD50);
  const bool use_dropout = cfg.dropout_rate > 0.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      grad.setZero();
      for (std::size_t k = start; k < stop; ++k) {
        const auto& s = data[order[k]];
        const auto xv = as_vector(s.embedding);
        DropoutMask mask;
        if (use_dropout) mask = draw_mask(head, mask_rng);
        const DropoutMask* mp = use_dropout ? &mask : nullptr;
        const auto a = forward_trace(head, xv, mp);
        const auto b = backward(head, a, s.label, mp);
        scatter_param_grad(xv, a, b, g);
        grad += g;
      }
      grad /= static_cast<double>(stop - start);
      if (cfg.optimizer == Optimizer::Sgd) {
        params -= cfg.learning_rate * grad;
      } else {
        ++adam_t;
        m1 = beta1 * m1 + (1 - beta1) * grad;
        m2 = beta2 * m2 + (1 - beta2) * grad.cwiseAbs2();
        const double c1 = 1 - std::pow(beta1, static_cast<double>(adam_t));
        const double c2 = 1 - std::pow(beta2, static_cast<double>(adam_t));
        params.array() -=
            cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + adam_eps);
      }
      head.set_flat_params(params);
    }
  }
  return head;
}

double accuracy(const ClassifierHead& head, const EmbeddingDataset& data) {
  if (data.empty()) return 0.0;
  std::size_t ok = 0;
  for (const auto& s : data) {
    const int pred = head_prob(head, s.embedding) >= 0.5 ? 1 : 0;
    ok += pred == to_int(s.label);
  }
  return static_cast<double>(ok) / static_cast<double>(data.size());
}

std::string head_to_json(const ClassifierHead& head) {
  json j;
  j["schema"] = "head/1";
  j["dims"] = {head.input_dim(), head.hidden1(), head.hidden2(), 1};
  j["dropout"] = head.dropout_rate();
  json layers = json::array();
  for (const auto& l : head.layers()) {
    json w = json::array();
    for (Eigen::Index i = 0; i < l.weight.rows(); ++i) {
      json row = json::array();
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) row.push_back(l.weight(i, c));
      w.push_back(std::move(row));
    }
    json b = json::array();
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) b.push_back(l.bias[i]);
    layers.push_back({{"weight", std::move(w)}, {"bias", std::move(b)}});
  }
  j["weights"] = std::move(layers);
  return j.dump(1);
}

ClassifierHead head_from_json(const std::string& text, const std::string& origin) {
  try {
    const json j = json::parse(text);
    if (j.at("schema").get<std::string>() != "head/1")
      throw Error(ErrorKind::Parse, "unsupported head schema", origin);
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    if (dims.size() != 4 || dims[3] != 1)
      throw Error(ErrorKind::Parse, "dims must be [d, h1, h2, 1]", origin);
    const auto& layers = j.at("weights");
    if (!layers.is_array() || layers.size() != 3)
      throw Error(ErrorKind::Parse, "weights must list three layers", origin);
    std::array<DenseLayer, 3> out;
    for (std::size_t k = 0; k < 3; ++k) {
      const auto rows = static_cast<Eigen::Index>(dims[k + 1]);
      const auto cols = static_cast<Eigen::Index>(dims[k]);
      const auto& w = layers[k].at("weight");
      const auto& b = layers[k].at("bias");
      if (w.size() != dims[k + 1] || b.size() != dims[k + 1])
        throw Error(ErrorKind::Parse, "layer " + std::to_string(k) + " shape mismatch", origin);
      out[k].weight.resize(rows, cols);
      out[k].bias.resize(rows);
      for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = w[static_cast<std::size_t>(i)];
        if (row.size() != dims[k])
          throw Error(ErrorKind::Parse, "layer " + std::to_string(k) + " shape mismatch", origin);
        for (Eigen::Index c = 0; c < cols; ++c)
          out[k].weight(i, c) = row[static_cast<std::size_t>(c)].get<double>();
        out[k].bias[i] = b[static_cast<std::size_t>(i)].get<double>();
      }
    }
    return ClassifierHead(std::move(out), j.at("dropout").get<double>());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("invalid head JSON: ") + e.what(), origin);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Parse) throw;
    throw Error(ErrorKind::Parse, e.what(), origin);
  }
}

}  // namespace uqfuse
