#pragma once

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uqfuse/dataset.hpp"
#include "uqfuse/eval.hpp"
#include "uqfuse/fisher.hpp"
#include "uqfuse/gp.hpp"
#include "uqfuse/head.hpp"
#include "uqfuse/mcdropout.hpp"

namespace uqfuse {

inline constexpr std::size_t kNumColumns = 6;

/// Frozen column order of the fusion matrix; weight vectors index it.
enum Column : std::size_t { FisherTotalU, FisherFrobU, FisherEntU, GpVar, Eoe, Ku };

inline constexpr std::array<std::string_view, kNumColumns> kColumnNames = {
    "fisher_total_u", "fisher_frob_u", "fisher_ent_u", "gp_var", "eoe", "ku"};

std::optional<std::size_t> column_index(std::string_view name);

struct UncertaintyRecord {
  std::string id;
  Label label = Label::AI;
  Label predicted = Label::AI;
  double prob = 0.5;  // evaluation-mode head probability of class 1
  std::array<double, kNumColumns> columns{};
  double expected_entropy = 0.0;  // informational, never fused

  bool correct() const noexcept { return label == predicted; }
  Prediction prediction() const noexcept { return {label, predicted}; }
  /// 1 - max(p, 1 - p): the head's own confidence turned into an uncertainty.
  double prob_uncertainty() const noexcept;
};

struct ScoreOptions {
  McConfig mc;
  FrobeniusPooling pooling = FrobeniusPooling::PoolThenRoot;
  std::size_t threads = 1;
};

/// One record per sample. Sample i runs MC dropout with seed
/// derive_seed(mc.seed, i), so results do not depend on `threads`.
std::vector<UncertaintyRecord> score_all(const ClassifierHead& head, const SparseGP& gp,
                                         const EmbeddingDataset& data, const ScoreOptions& opts);

UncertaintyRecord score_one(const ClassifierHead& head, const SparseGP& gp, const Sample& s,
                            const ScoreOptions& opts, std::uint64_t mc_seed);

std::vector<Prediction> predictions(std::span<const UncertaintyRecord> records);
/// N x 6 matrix of raw column values.
Eigen::MatrixXd column_matrix(std::span<const UncertaintyRecord> records);

/// Per-column population mean and standard deviation. Columns whose std is
/// below 1e-12 are flagged constant, store std 1, and normalize to 0.
struct ZStats {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<bool> constant;

  std::size_t width() const noexcept { return mean.size(); }
};

ZStats fit_zstats(const Eigen::MatrixXd& raw);
ZStats fit_zstats(std::span<const UncertaintyRecord> records);
Eigen::MatrixXd normalize(const Eigen::MatrixXd& raw, const ZStats& z);

struct RejectionPolicy {
  ZStats zstats;
  std::vector<double> weights;
  double tau = 0.0;
};

double combine(std::span<const double> raw, const ZStats& z, std::span<const double> weights);
double combine(const UncertaintyRecord& r, const RejectionPolicy& policy);
std::vector<double> combine_all(std::span<const UncertaintyRecord> records,
                                const RejectionPolicy& policy);

enum class Decision { Accept, Reject };

/// Reject iff u > tau.
inline Decision decide(double u, double tau) noexcept {
  return u > tau ? Decision::Reject : Decision::Accept;
}

std::string scores_to_csv(std::span<const UncertaintyRecord> records);
std::vector<UncertaintyRecord> scores_from_csv(const std::string& text,
                                               const std::string& origin = "<memory>");
void save_scores(std::span<const UncertaintyRecord> records, const std::filesystem::path& path);
std::vector<UncertaintyRecord> load_scores(const std::filesystem::path& path);

std::string policy_to_json(const RejectionPolicy& policy);
RejectionPolicy policy_from_json(const std::string& text, const std::string& origin = "<memory>");

/// Writes a JSON-like number that round-trips exactly.
std::string format_double(double v);

}  // namespace uqfuse
