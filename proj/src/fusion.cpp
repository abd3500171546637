#include "uqfuse/fusion.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "uqfuse/error.hpp"
#include "uqfuse/io.hpp"
#include "uqfuse/parallel.hpp"

namespace uqfuse {

using json = nlohmann::json;

namespace {

constexpr double kConstantStd = 1e-12;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto pos = line.find(',');
    out.push_back(trim(line.substr(0, pos)));
    if (pos == std::string_view::npos) break;
    line.remove_prefix(pos + 1);
  }
  return out;
}

bool to_double(std::string_view s, double& v) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::optional<std::size_t> column_index(std::string_view name) {
  for (std::size_t j = 0; j < kNumColumns; ++j)
    if (kColumnNames[j] == name) return j;
  return std::nullopt;
}

double UncertaintyRecord::prob_uncertainty() const noexcept {
  return 1.0 - std::max(prob, 1.0 - prob);
}

UncertaintyRecord score_one(const ClassifierHead& head, const SparseGP& gp, const Sample& s,
                            const ScoreOptions& opts, std::uint64_t mc_seed) {
  UncertaintyRecord r;
  r.id = s.id;
  r.label = s.label;
  r.prob = head_prob(head, s.embedding);
  r.predicted = r.prob >= 0.5 ? Label::Nature : Label::AI;

  const auto fisher = fisher_summary(head, s.embedding, opts.pooling);
  r.columns[FisherTotalU] = fisher.fisher_total_u;
  r.columns[FisherFrobU] = fisher.fisher_frobenius_u;
  r.columns[FisherEntU] = fisher.fisher_entropy_u;
  r.columns[GpVar] = predictive_latent(gp, s.embedding).variance;

  McConfig mc = opts.mc;
  mc.seed = mc_seed;
  const auto drop = mc_dropout(head, s.embedding, mc);
  r.columns[Eoe] = drop.entropy_of_expected;
  r.columns[Ku] = drop.knowledge_uncertainty;
  r.expected_entropy = drop.expected_entropy;
  return r;
}

std::vector<UncertaintyRecord> score_all(const ClassifierHead& head, const SparseGP& gp,
                                         const EmbeddingDataset& data, const ScoreOptions& opts) {
  if (head.input_dim() != data.dim() || gp.dim() != data.dim())
    throw_invalid("score_all: head, GP and dataset dimensions differ (" +
                  std::to_string(head.input_dim()) + ", " + std::to_string(gp.dim()) + ", " +
                  std::to_string(data.dim()) + ")");
  std::vector<UncertaintyRecord> out(data.size());
  parallel_for(data.size(), opts.threads, [&](std::size_t i) {
    out[i] = score_one(head, gp, data[i], opts, derive_seed(opts.mc.seed, i));
  });
  return out;
}

std::vector<Prediction> predictions(std::span<const UncertaintyRecord> records) {
  std::vector<Prediction> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.prediction());
  return out;
}

Eigen::MatrixXd column_matrix(std::span<const UncertaintyRecord> records) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(kNumColumns));
  for (std::size_t i = 0; i < records.size(); ++i)
    for (std::size_t j = 0; j < kNumColumns; ++j)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = records[i].columns[j];
  return x;
}

ZStats fit_zstats(const Eigen::MatrixXd& raw) {
  if (raw.rows() == 0) throw_invalid("fit_zstats: no records");
  require(raw.rows() >= 2, "fit_zstats: need at least two records");
  ZStats z;
  const auto n = static_cast<double>(raw.rows());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    const double mean = raw.col(j).sum() / n;
    const double var = (raw.col(j).array() - mean).square().sum() / n;
    const double sd = std::sqrt(var);
    const bool flat = !(sd >= kConstantStd);
    z.mean.push_back(mean);
    z.std.push_back(flat ? 1.0 : sd);
    z.constant.push_back(flat);
  }
  return z;
}

ZStats fit_zstats(std::span<const UncertaintyRecord> records) {
  return fit_zstats(column_matrix(records));
}

Eigen::MatrixXd normalize(const Eigen::MatrixXd& raw, const ZStats& z) {
  require(static_cast<std::size_t>(raw.cols()) == z.width(), "normalize: width mismatch");
  Eigen::MatrixXd out(raw.rows(), raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    const auto k = static_cast<std::size_t>(j);
    if (z.constant[k])
      out.col(j).setZero();
    else
      out.col(j) = (raw.col(j).array() - z.mean[k]) / z.std[k];
  }
  return out;
}

double combine(std::span<const double> raw, const ZStats& z, std::span<const double> weights) {
  require(raw.size() == z.width() && weights.size() == z.width(), "combine: width mismatch");
  double u = 0.0;
  for (std::size_t j = 0; j < raw.size(); ++j)
    if (!z.constant[j]) u += weights[j] * (raw[j] - z.mean[j]) / z.std[j];
  return u;
}

double combine(const UncertaintyRecord& r, const RejectionPolicy& policy) {
  return combine(r.columns, policy.zstats, policy.weights);
}

std::vector<double> combine_all(std::span<const UncertaintyRecord> records,
                                const RejectionPolicy& policy) {
  std::vector<double> u;
  u.reserve(records.size());
  for (const auto& r : records) u.push_back(combine(r, policy));
  return u;
}

std::string scores_to_csv(std::span<const UncertaintyRecord> records) {
  std::string out = "id,label,pred,prob";
  for (auto name : kColumnNames) {
    out += ',';
    out += name;
  }
  out += ",ee\n";
  for (const auto& r : records) {
    out += r.id;
    out += ',';
    out += static_cast<char>('0' + to_int(r.label));
    out += ',';
    out += static_cast<char>('0' + to_int(r.predicted));
    out += ',' + format_double(r.prob);
    for (double v : r.columns) out += ',' + format_double(v);
    out += ',' + format_double(r.expected_entropy) + '\n';
  }
  return out;
}

std::vector<UncertaintyRecord> scores_from_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  long lineno = 1;
  if (!std::getline(in, line)) throw Error(ErrorKind::Parse, "empty score file", origin, 1);
  const auto header = split(trim(line));
  std::vector<std::string_view> expected = {"id", "label", "pred", "prob"};
  expected.insert(expected.end(), kColumnNames.begin(), kColumnNames.end());
  const bool has_ee = header.size() == expected.size() + 1 && header.back() == "ee";
  if (header.size() < expected.size() ||
      !std::equal(expected.begin(), expected.end(), header.begin()) ||
      (header.size() > expected.size() && !has_ee))
    throw Error(ErrorKind::Parse,
                "score header must be id,label,pred,prob,fisher_total_u,fisher_frob_u,"
                "fisher_ent_u,gp_var,eoe,ku[,ee]",
                origin, 1);
  std::vector<UncertaintyRecord> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split(trim(line));
    if (cells.size() != header.size())
      throw Error(ErrorKind::Parse, "expected " + std::to_string(header.size()) + " fields", origin,
                  lineno);
    UncertaintyRecord r;
    r.id = std::string(cells[0]);
    auto label = [&](std::string_view c) {
      if (c == "0") return Label::AI;
      if (c == "1") return Label::Nature;
      throw Error(ErrorKind::Parse, "unknown label '" + std::string(c) + "'", origin, lineno);
    };
    r.label = label(cells[1]);
    r.predicted = label(cells[2]);
    if (!to_double(cells[3], r.prob))
      throw Error(ErrorKind::Parse, "malformed prob", origin, lineno);
    for (std::size_t j = 0; j < kNumColumns; ++j)
      if (!to_double(cells[4 + j], r.columns[j]))
        throw Error(ErrorKind::Parse, "malformed value in " + std::string(kColumnNames[j]), origin,
                    lineno);
    if (has_ee && !to_double(cells.back(), r.expected_entropy))
      throw Error(ErrorKind::Parse, "malformed ee", origin, lineno);
    out.push_back(std::move(r));
  }
  return out;
}

void save_scores(std::span<const UncertaintyRecord> records, const std::filesystem::path& path) {
  write_text_file(path, scores_to_csv(records));
}

std::vector<UncertaintyRecord> load_scores(const std::filesystem::path& path) {
  return scores_from_csv(read_text_file(path), path.string());
}

std::string policy_to_json(const RejectionPolicy& policy) {
  json j;
  j["schema"] = "policy/1";
  j["columns"] = std::vector<std::string>(kColumnNames.begin(), kColumnNames.end());
  if (policy.zstats.width() != kNumColumns) j.erase("columns");
  j["mean"] = policy.zstats.mean;
  j["std"] = policy.zstats.std;
  j["constant_flags"] = policy.zstats.constant;
  j["weights"] = policy.weights;
  j["tau"] = policy.tau;
  return j.dump(1);
}

RejectionPolicy policy_from_json(const std::string& text, const std::string& origin) {
  try {
    const json j = json::parse(text);
    if (j.at("schema").get<std::string>() != "policy/1")
      throw Error(ErrorKind::Parse, "unsupported policy schema", origin);
    RejectionPolicy p;
    p.zstats.mean = j.at("mean").get<std::vector<double>>();
    p.zstats.std = j.at("std").get<std::vector<double>>();
    p.zstats.constant = j.at("constant_flags").get<std::vector<bool>>();
    p.weights = j.at("weights").get<std::vector<double>>();
    p.tau = j.at("tau").get<double>();
    const auto w = p.zstats.mean.size();
    if (p.zstats.std.size() != w || p.zstats.constant.size() != w || p.weights.size() != w)
      throw Error(ErrorKind::Parse, "policy arrays have different lengths", origin);
    for (std::size_t k = 0; k < w; ++k)
      if (!p.zstats.constant[k] && !(p.zstats.std[k] > 0.0))
        throw Error(ErrorKind::Parse, "non-constant column with nonpositive std", origin);
    for (double wk : p.weights)
      if (!(wk >= 0.0 && wk <= 1.0))
        throw Error(ErrorKind::Parse, "policy weights must lie in [0, 1]", origin);
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("invalid policy JSON: ") + e.what(), origin);
  }
}

}  // namespace uqfuse
