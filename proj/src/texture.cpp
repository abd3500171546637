#include "uqfuse/texture.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "uqfuse/error.hpp"
#include "uqfuse/fusion.hpp"
#include "uqfuse/io.hpp"
#include "uqfuse/special.hpp"

namespace uqfuse {

using json = nlohmann::json;

PgmImage parse_pgm(const std::string& bytes, const std::string& origin) {
  std::size_t pos = 0;
  auto fail = [&](const std::string& what) -> void {
    throw Error(ErrorKind::Parse, "PGM: " + what, origin);
  };
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    int v = 0;
    auto [ptr, ec] = std::from_chars(bytes.data() + pos, bytes.data() + bytes.size(), v);
    if (ec != std::errc() || v <= 0) fail("bad header integer");
    pos = static_cast<std::size_t>(ptr - bytes.data());
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') fail("only binary P5 is supported");
  pos = 2;
  const int w = read_int(), h = read_int(), maxval = read_int();
  if (maxval > 65535) fail("maxval above 65535");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    fail("missing separator after header");
  ++pos;
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() - pos < n * bpp) fail("truncated raster");
  PgmImage out;
  out.maxval = maxval;
  out.image.width = static_cast<std::size_t>(w);
  out.image.height = static_cast<std::size_t>(h);
  out.image.pixels.resize(n);
  const auto* raster = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t i = 0; i < n; ++i) {
    const int v = bpp == 1 ? raster[i] : (raster[2 * i] << 8) | raster[2 * i + 1];
    out.image.pixels[i] = std::min(v, maxval);
  }
  return out;
}

PgmImage read_pgm(const std::filesystem::path& path) {
  return parse_pgm(read_text_file(path), path.string());
}

GrayImage quantize(const GrayImage& img, int maxval, int levels) {
  require(maxval >= 1 && levels >= 1, "quantize: maxval and levels must be positive");
  GrayImage out = img;
  for (auto& v : out.pixels)
    v = static_cast<int>(static_cast<long long>(v) * levels / (static_cast<long long>(maxval) + 1));
  return out;
}

GlcmMatrix glcm(const GrayImage& img, int levels, int dx, int dy, bool symmetric) {
  require(levels >= 1, "glcm: levels must be positive");
  require(img.pixels.size() == img.width * img.height, "glcm: pixel buffer size mismatch");
  const auto adx = static_cast<std::size_t>(std::abs(dx)), ady = static_cast<std::size_t>(std::abs(dy));
  if (img.width <= adx || img.height <= ady)
    throw_invalid("glcm: image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                  " is smaller than the offset reach");
  for (int v : img.pixels)
    if (v < 0 || v >= levels) throw_invalid("glcm: pixel value outside [0, levels)");

  GlcmMatrix m;
  m.levels = levels;
  m.dx = dx;
  m.dy = dy;
  m.symmetric = symmetric;
  m.p = Eigen::MatrixXd::Zero(levels, levels);
  const auto x0 = static_cast<std::ptrdiff_t>(dx < 0 ? adx : 0);
  const auto y0 = static_cast<std::ptrdiff_t>(dy < 0 ? ady : 0);
  const auto x1 = static_cast<std::ptrdiff_t>(img.width - (dx > 0 ? adx : 0));
  const auto y1 = static_cast<std::ptrdiff_t>(img.height - (dy > 0 ? ady : 0));
  for (std::ptrdiff_t y = y0; y < y1; ++y)
    for (std::ptrdiff_t x = x0; x < x1; ++x) {
      const int i = img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
      const int j = img.at(static_cast<std::size_t>(x + dx), static_cast<std::size_t>(y + dy));
      m.p(i, j) += 1.0;
      if (symmetric) m.p(j, i) += 1.0;
    }
  m.p /= m.p.sum();
  return m;
}

TextureFeatures texture_features(const GlcmMatrix& m) {
  TextureFeatures f;
  for (Eigen::Index i = 0; i < m.p.rows(); ++i)
    for (Eigen::Index j = 0; j < m.p.cols(); ++j) {
      const double p = m.p(i, j);
      const double d2 = static_cast<double>((i - j) * (i - j));
      f.contrast += d2 * p;
      f.energy += p * p;
      if (p > 0.0) f.entropy -= p * std::log(p);
      f.homogeneity += p / (1.0 + d2);
    }
  return f;
}

double feature_value(const TextureFeatures& f, std::size_t k) {
  switch (k) {
    case 0: return f.contrast;
    case 1: return f.energy;
    case 2: return f.entropy;
    case 3: return f.homogeneity;
  }
  throw_invalid("feature index out of range");
}

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // sample variance
};

Moments moments(std::span<const double> v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size() - 1);
  return m;
}

}  // namespace

WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
  require(a.size() >= 2 && b.size() >= 2, "welch_t: each sample needs at least two values");
  const auto ma = moments(a), mb = moments(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double va = ma.var / na, vb = mb.var / nb;
  if (va == 0.0 && vb == 0.0) throw_compute("welch_t: both samples have zero variance");
  WelchResult r;
  r.t = (ma.mean - mb.mean) / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) / (va * va / (na - 1) + vb * vb / (nb - 1));
  r.p = student_t_two_sided_p(r.t, r.df);
  return r;
}

HotellingResult hotelling_t2(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  require(a.cols() == b.cols() && a.cols() >= 1, "hotelling: feature counts differ");
  const auto k = static_cast<double>(a.cols());
  const auto na = static_cast<double>(a.rows()), nb = static_cast<double>(b.rows());
  require(na + nb - 2 > k, "hotelling: need n_a + n_b - 2 > k");
  require(a.rows() >= 1 && b.rows() >= 1, "hotelling: both samples need observations");
  const Eigen::VectorXd ma = a.colwise().mean(), mb = b.colwise().mean();
  const Eigen::MatrixXd ca = a.rowwise() - ma.transpose();
  const Eigen::MatrixXd cb = b.rowwise() - mb.transpose();
  Eigen::MatrixXd pooled = (ca.transpose() * ca + cb.transpose() * cb) / (na + nb - 2);
  const Eigen::VectorXd diff = ma - mb;

  HotellingResult r;
  // A pivot that is only rounding noise relative to the largest variance means
  // the covariance is singular in exact arithmetic.
  auto singular = [&](const Eigen::LLT<Eigen::MatrixXd>& f) {
    if (f.info() != Eigen::Success) return true;
    const double piv = f.matrixLLT().diagonal().minCoeff();
    return !(piv * piv > 1e-12 * pooled.diagonal().maxCoeff());
  };
  Eigen::LLT<Eigen::MatrixXd> llt(pooled);
  if (singular(llt)) {
    const double ridge = 1e-8 * pooled.trace() / k;
    if (!(ridge > 0.0)) throw_compute("hotelling: pooled covariance is zero");
    pooled.diagonal().array() += ridge;
    llt.compute(pooled);
    if (llt.info() != Eigen::Success) throw_compute("hotelling: covariance singular after ridge");
    r.regularized = true;
  }
  r.t2 = (na * nb / (na + nb)) * diff.dot(llt.solve(diff));
  r.df1 = k;
  r.df2 = na + nb - k - 1;
  r.f = r.t2 * r.df2 / (k * (na + nb - 2));
  r.p = f_survival(r.f, r.df1, r.df2);
  return r;
}

double kl_from_histograms(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size() && !p.empty(), "kl: histograms must have the same nonzero length");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    require(p[i] >= 0.0 && q[i] >= 0.0, "kl: histogram entries must be nonnegative");
    sp += p[i];
    sq += q[i];
  }
  require(sp > 0.0 && sq > 0.0, "kl: histograms must have positive mass");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = p[i] / sp, qi = q[i] / sq;
    if (pi > 0.0) d += pi * std::log(pi / qi);
  }
  return std::max(d, 0.0);
}

double kl_divergence(std::span<const double> a, std::span<const double> b, std::size_t bins,
                     double smoothing) {
  require(!a.empty() && !b.empty(), "kl_divergence: both samples must be nonempty");
  require(bins >= 1, "kl_divergence: bins must be positive");
  double lo = a[0], hi = a[0];
  for (double v : a) lo = std::min(lo, v), hi = std::max(hi, v);
  for (double v : b) lo = std::min(lo, v), hi = std::max(hi, v);
  auto histogram = [&](std::span<const double> v) {
    std::vector<double> h(bins, smoothing);
    for (double x : v) {
      std::size_t k = 0;
      if (hi > lo)
        k = std::min(bins - 1, static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins)));
      h[k] += 1.0;
    }
    return h;
  };
  const auto ha = histogram(a), hb = histogram(b);
  return kl_from_histograms(ha, hb);
}

TextureFeatures extract_texture(const PgmImage& img) {
  return texture_features(glcm(quantize(img.image, img.maxval, 64), 64, 1, 0, true));
}

std::vector<TextureFeatures> load_texture_source(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::exists(path, ec)) throw Error(ErrorKind::Io, "input does not exist", path.string());
  std::vector<TextureFeatures> out;
  if (fs::is_directory(path, ec)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(ErrorKind::Io, "no .pgm files in directory", path.string());
    for (const auto& f : files) out.push_back(extract_texture(read_pgm(f)));
    return out;
  }
  std::istringstream in(read_text_file(path));
  std::string line;
  long lineno = 1;
  if (!std::getline(in, line)) throw Error(ErrorKind::Parse, "empty feature CSV", path.string(), 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "label,contrast,energy,entropy,homogeneity")
    throw Error(ErrorKind::Parse, "feature CSV header must be label,contrast,energy,entropy,homogeneity",
                path.string(), 1);
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<double, 4> v{};
    std::size_t start = line.find(',');
    if (start == std::string::npos)
      throw Error(ErrorKind::Parse, "expected 5 fields", path.string(), lineno);
    for (std::size_t k = 0; k < 4; ++k) {
      const std::size_t begin = start + 1;
      std::size_t end = line.find(',', begin);
      if ((k < 3) == (end == std::string::npos))
        throw Error(ErrorKind::Parse, "expected 5 fields", path.string(), lineno);
      if (end == std::string::npos) end = line.size();
      auto [ptr, err] = std::from_chars(line.data() + begin, line.data() + end, v[k]);
      if (err != std::errc() || ptr != line.data() + end)
        throw Error(ErrorKind::Parse, "malformed feature value", path.string(), lineno);
      start = end;
    }
    out.push_back({v[0], v[1], v[2], v[3]});
  }
  if (out.empty()) throw Error(ErrorKind::Parse, "feature CSV has no rows", path.string());
  return out;
}

TextureStatsReport texture_stats(std::span<const TextureFeatures> real,
                                 std::span<const TextureFeatures> fake, std::size_t bins) {
  TextureStatsReport r;
  r.n_real = real.size();
  r.n_fake = fake.size();
  r.bins = bins;
  Eigen::MatrixXd a(static_cast<Eigen::Index>(real.size()), 4), b(static_cast<Eigen::Index>(fake.size()), 4);
  for (std::size_t i = 0; i < real.size(); ++i)
    for (std::size_t k = 0; k < 4; ++k) a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = feature_value(real[i], k);
  for (std::size_t i = 0; i < fake.size(); ++i)
    for (std::size_t k = 0; k < 4; ++k) b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = feature_value(fake[i], k);
  for (std::size_t k = 0; k < 4; ++k) {
    const Eigen::VectorXd ca = a.col(static_cast<Eigen::Index>(k)), cb = b.col(static_cast<Eigen::Index>(k));
    const std::span<const double> sa(ca.data(), static_cast<std::size_t>(ca.size()));
    const std::span<const double> sb(cb.data(), static_cast<std::size_t>(cb.size()));
    r.features[k].feature = kTextureFeatureNames[k];
    r.features[k].welch = welch_t(sa, sb);
    r.features[k].kl = kl_divergence(sa, sb, bins);
  }
  r.hotelling = hotelling_t2(a, b);
  return r;
}

std::string texture_report_json(const TextureStatsReport& r) {
  json j;
  j["schema"] = "texture-stats/1";
  j["n_real"] = r.n_real;
  j["n_fake"] = r.n_fake;
  j["bins"] = r.bins;
  j["glcm"] = {{"levels", 64}, {"offset", {1, 0}}, {"symmetric", true}};
  json feats = json::object();
  for (const auto& f : r.features)
    feats[f.feature] = {{"welch_t", f.welch.t}, {"welch_df", f.welch.df}, {"welch_p", f.welch.p},
                        {"kl", f.kl}};
  j["features"] = std::move(feats);
  j["hotelling"] = {{"t2", r.hotelling.t2}, {"f", r.hotelling.f}, {"df1", r.hotelling.df1},
                    {"df2", r.hotelling.df2}, {"p", r.hotelling.p},
                    {"regularized", r.hotelling.regularized}};
  return j.dump(1);
}

std::string texture_report_csv(const TextureStatsReport& r) {
  std::string out = "feature,welch_t,welch_df,welch_p,kl\n";
  for (const auto& f : r.features)
    out += f.feature + ',' + format_double(f.welch.t) + ',' + format_double(f.welch.df) + ',' +
           format_double(f.welch.p) + ',' + format_double(f.kl) + '\n';
  out += "hotelling_t2," + format_double(r.hotelling.t2) + ",,," + "\n";
  out += "hotelling_p," + format_double(r.hotelling.p) + ",,," + "\n";
  return out;
}

std::string texture_pairplot_csv(std::span<const TextureFeatures> real,
                                  std::span<const TextureFeatures> fake) {
  std::string out = "group,index,feature,value\n";
  auto emit = [&](const char* group, std::span<const TextureFeatures> v) {
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t k = 0; k < 4; ++k)
        out += std::string(group) + ',' + std::to_string(i) + ',' + kTextureFeatureNames[k] + ',' +
               format_double(feature_value(v[i], k)) + '\n';
  };
  emit("real", real);
  emit("fake", fake);
  return out;
}

}  // namespace uqfuse
