#pragma once

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace uqfuse {

/// Grayscale image with integer levels, row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<int> pixels;

  int at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

/// Binary (P5) PGM, 8- or 16-bit.
struct PgmImage {
  GrayImage image;
  int maxval = 255;
};
PgmImage read_pgm(const std::filesystem::path& path);
PgmImage parse_pgm(const std::string& bytes, const std::string& origin = "<memory>");

/// Maps [0, maxval] onto [0, levels) by floor(g * levels / (maxval + 1)); for
/// 8-bit input and 64 levels that is floor(g / 4).
GrayImage quantize(const GrayImage& img, int maxval, int levels);

struct GlcmMatrix {
  Eigen::MatrixXd p;  // levels x levels, sums to 1
  int levels = 0;
  int dx = 1;
  int dy = 0;
  bool symmetric = true;
};

/// Co-occurrence of (img(x, y), img(x + dx, y + dy)) over every in-bounds pair.
GlcmMatrix glcm(const GrayImage& img, int levels, int dx = 1, int dy = 0, bool symmetric = true);

struct TextureFeatures {
  double contrast = 0.0;
  double energy = 0.0;
  double entropy = 0.0;
  double homogeneity = 0.0;
};

inline constexpr std::array<const char*, 4> kTextureFeatureNames = {"contrast", "energy", "entropy",
                                                                    "homogeneity"};

/// Haralick definitions: contrast sum (i-j)^2 P, energy sum P^2, entropy
/// -sum P ln P, homogeneity sum P / (1 + (i-j)^2).
TextureFeatures texture_features(const GlcmMatrix& m);
double feature_value(const TextureFeatures& f, std::size_t k);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

WelchResult welch_t(std::span<const double> a, std::span<const double> b);

struct HotellingResult {
  double t2 = 0.0;
  double f = 0.0;
  double df1 = 0.0;
  double df2 = 0.0;
  double p = 1.0;
  bool regularized = false;
};

/// Two-sample Hotelling T^2 with pooled covariance; rows are observations.
HotellingResult hotelling_t2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

inline constexpr double kKlSmoothing = 1e-10;

/// Histograms both samples on shared edges over the pooled range, adds the
/// smoothing constant to every bin, normalizes, and returns D(a || b).
double kl_divergence(std::span<const double> a, std::span<const double> b, std::size_t bins = 50,
                     double smoothing = kKlSmoothing);
/// D(p || q) for two histograms over the same bins (normalized here).
double kl_from_histograms(std::span<const double> p, std::span<const double> q);

struct FeatureComparison {
  std::string feature;
  WelchResult welch;
  double kl = 0.0;
};

struct TextureStatsReport {
  std::array<FeatureComparison, 4> features;
  HotellingResult hotelling;
  std::size_t n_real = 0;
  std::size_t n_fake = 0;
  std::size_t bins = 50;
};

/// Default extraction: 64 levels, offset (1, 0), symmetric.
TextureFeatures extract_texture(const PgmImage& img);

/// A directory of P5 PGM files, or a CSV `label,contrast,energy,entropy,homogeneity`.
std::vector<TextureFeatures> load_texture_source(const std::filesystem::path& path);

TextureStatsReport texture_stats(std::span<const TextureFeatures> real,
                                 std::span<const TextureFeatures> fake, std::size_t bins = 50);

std::string texture_report_json(const TextureStatsReport& r);
std::string texture_report_csv(const TextureStatsReport& r);
/// Long format: group,index,feature,value per row.
std::string texture_pairplot_csv(std::span<const TextureFeatures> real,
                                 std::span<const TextureFeatures> fake);

}  // namespace uqfuse
