#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace uqfuse {

/// Class labels. AI-generated images are class 0, natural images class 1.
enum class Label : std::uint8_t { AI = 0, Nature = 1 };

inline int to_int(Label y) noexcept { return static_cast<int>(y); }

struct Sample {
  std::string id;
  std::vector<double> embedding;
  Label label;
};

/// Labeled embeddings with a fixed dimension. Immutable once built; the
/// constructor validates dimension, label and id-uniqueness invariants.
class EmbeddingDataset {
 public:
  EmbeddingDataset() = default;
  EmbeddingDataset(std::vector<Sample> samples, std::size_t dim);

  std::size_t size() const noexcept { return samples_.size(); }
  bool empty() const noexcept { return samples_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }
  const std::vector<Sample>& samples() const noexcept { return samples_; }
  auto begin() const noexcept { return samples_.begin(); }
  auto end() const noexcept { return samples_.end(); }

  std::size_t count(Label y) const noexcept;

 private:
  std::vector<Sample> samples_;
  std::size_t dim_ = 0;
};

enum class DataFormat { Csv, Binary };

/// Picks the format from the file contents: "UQF1" magic means binary.
DataFormat sniff_format(const std::filesystem::path& path);

EmbeddingDataset load_dataset(const std::filesystem::path& path, DataFormat format);
EmbeddingDataset load_dataset(const std::filesystem::path& path);
void save_dataset(const EmbeddingDataset& data, const std::filesystem::path& path,
                  DataFormat format);

EmbeddingDataset parse_csv(const std::string& text, const std::string& origin = "<memory>");
std::string to_csv(const EmbeddingDataset& data);
std::vector<std::uint8_t> to_binary(const EmbeddingDataset& data);
EmbeddingDataset parse_binary(std::span<const std::uint8_t> bytes,
                              const std::string& origin = "<memory>");

/// Class-conditional unit-covariance Gaussians with means at -sep/2 and +sep/2
/// along the all-ones direction. Ids are "s<index>", class 0 first.
EmbeddingDataset synth_generate(std::size_t n_per_class, std::size_t dim, double separation,
                                std::uint64_t seed);

struct ShiftSpec {
  /// Either one value broadcast to every coordinate or exactly `dim` values.
  std::vector<double> mean_shift{0.0};
  double covariance_scale = 1.0;
  std::uint64_t seed = 0;
};

/// Redraws class-0 samples around (class-0 mean + mean_shift) with covariance
/// scaled by covariance_scale; class-1 samples pass through unchanged. The
/// class-0 mean is estimated from the base dataset.
EmbeddingDataset synth_shift(const EmbeddingDataset& base, const ShiftSpec& spec);

}  // namespace uqfuse
