#include "uqfuse/dataset.hpp"

#include <Eigen/Dense>

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "uqfuse/error.hpp"
#include "uqfuse/io.hpp"
#include "uqfuse/rng.hpp"

namespace uqfuse {

EmbeddingDataset::EmbeddingDataset(std::vector<Sample> samples, std::size_t dim)
    : samples_(std::move(samples)), dim_(dim) {
  require(dim_ >= 1, "dataset dimension must be at least 1");
  std::unordered_set<std::string> ids;
  ids.reserve(samples_.size());
  for (const auto& s : samples_) {
    if (s.embedding.size() != dim_)
      throw_invalid("sample '" + s.id + "' has dimension " + std::to_string(s.embedding.size()) +
                    ", expected " + std::to_string(dim_));
    if (s.label != Label::AI && s.label != Label::Nature)
      throw_invalid("sample '" + s.id + "' has unknown label");
    if (!ids.insert(s.id).second) throw_invalid("duplicate sample id '" + s.id + "'");
  }
}

std::size_t EmbeddingDataset::count(Label y) const noexcept {
  std::size_t n = 0;
  for (const auto& s : samples_) n += s.label == y;
  return n;
}

namespace {

constexpr char kMagic[4] = {'U', 'Q', 'F', '1'};

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace

EmbeddingDataset parse_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  long lineno = 0;
  if (!std::getline(in, line)) throw Error(ErrorKind::Parse, "empty CSV file", origin, 1);
  ++lineno;
  auto header = split_commas(trim(line));
  if (header.size() < 3 || trim(header[0]) != "id" || trim(header[1]) != "label")
    throw Error(ErrorKind::Parse, "header must be id,label,f0,...", origin, lineno);
  const std::size_t dim = header.size() - 2;
  for (std::size_t j = 0; j < dim; ++j)
    if (trim(header[j + 2]) != "f" + std::to_string(j))
      throw Error(ErrorKind::Parse, "header column " + std::to_string(j + 2) + " must be f" +
                                        std::to_string(j),
                  origin, lineno);

  std::vector<Sample> samples;
  std::unordered_set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    auto body = trim(line);
    if (body.empty()) continue;
    auto cells = split_commas(body);
    if (cells.size() != dim + 2)
      throw Error(ErrorKind::Parse,
                  "dimension mismatch: expected " + std::to_string(dim + 2) + " fields, got " +
                      std::to_string(cells.size()),
                  origin, lineno);
    Sample s;
    s.id = std::string(trim(cells[0]));
    if (s.id.empty()) throw Error(ErrorKind::Parse, "empty id", origin, lineno);
    auto lab = trim(cells[1]);
    if (lab == "0")
      s.label = Label::AI;
    else if (lab == "1")
      s.label = Label::Nature;
    else
      throw Error(ErrorKind::Parse, "unknown label '" + std::string(lab) + "'", origin, lineno);
    s.embedding.resize(dim);
    for (std::size_t j = 0; j < dim; ++j)
      if (!parse_double(cells[j + 2], s.embedding[j]))
        throw Error(ErrorKind::Parse, "malformed value in column f" + std::to_string(j), origin,
                    lineno);
    if (!ids.insert(s.id).second)
      throw Error(ErrorKind::Parse, "duplicate id '" + s.id + "'", origin, lineno);
    samples.push_back(std::move(s));
  }
  return EmbeddingDataset(std::move(samples), dim);
}

std::string to_csv(const EmbeddingDataset& data) {
  std::string out = "id,label";
  for (std::size_t j = 0; j < data.dim(); ++j) out += ",f" + std::to_string(j);
  out += '\n';
  char buf[64];
  for (const auto& s : data) {
    out += s.id;
    out += ',';
    out += static_cast<char>('0' + to_int(s.label));
    for (double v : s.embedding) {
      // Shortest representation that round-trips exactly.
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out += ',';
      out.append(buf, ptr);
    }
    out += '\n';
  }
  return out;
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, const std::string& origin)
      : bytes_(bytes), origin_(origin) {}

  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size())
      throw Error(ErrorKind::Parse, "truncated binary dataset at byte " + std::to_string(pos_),
                  origin_);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t size() const { return bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> to_binary(const EmbeddingDataset& data) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  put_u32(out, static_cast<std::uint32_t>(data.dim()));
  for (const auto& s : data) {
    put_u32(out, static_cast<std::uint32_t>(s.id.size()));
    out.insert(out.end(), s.id.begin(), s.id.end());
    out.push_back(static_cast<std::uint8_t>(s.label));
    for (double v : s.embedding) put_f64(out, v);
  }
  return out;
}

EmbeddingDataset parse_binary(std::span<const std::uint8_t> bytes, const std::string& origin) {
  ByteReader r(bytes, origin);
  if (r.str(4) != std::string(kMagic, 4)) throw Error(ErrorKind::Parse, "bad magic", origin);
  const std::uint32_t n = r.u32();
  const std::uint32_t d = r.u32();
  if (d == 0) throw Error(ErrorKind::Parse, "dimension must be at least 1", origin);
  std::vector<Sample> samples;
  samples.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Sample s;
    s.id = r.str(r.u32());
    const auto lab = r.u8();
    if (lab > 1)
      throw Error(ErrorKind::Parse, "unknown label " + std::to_string(lab) + " in record " +
                                        std::to_string(i),
                  origin);
    s.label = static_cast<Label>(lab);
    s.embedding.resize(d);
    for (auto& v : s.embedding) v = r.f64();
    samples.push_back(std::move(s));
  }
  if (r.pos() != r.size()) throw Error(ErrorKind::Parse, "trailing bytes after last record", origin);
  try {
    return EmbeddingDataset(std::move(samples), d);
  } catch (const Error& e) {
    throw Error(ErrorKind::Parse, e.what(), origin);
  }
}

DataFormat sniff_format(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open file for reading", path.string());
  char head[4] = {};
  in.read(head, 4);
  return (in.gcount() == 4 && std::memcmp(head, kMagic, 4) == 0) ? DataFormat::Binary
                                                                  : DataFormat::Csv;
}

EmbeddingDataset load_dataset(const std::filesystem::path& path, DataFormat format) {
  const std::string text = read_text_file(path);
  if (format == DataFormat::Binary) {
    std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(text.data()),
                                        text.size());
    return parse_binary(bytes, path.string());
  }
  try {
    return parse_csv(text, path.string());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidArgument)
      throw Error(ErrorKind::Parse, e.what(), path.string());
    throw;
  }
}

EmbeddingDataset load_dataset(const std::filesystem::path& path) {
  return load_dataset(path, sniff_format(path));
}

void save_dataset(const EmbeddingDataset& data, const std::filesystem::path& path,
                  DataFormat format) {
  if (format == DataFormat::Binary) {
    const auto bytes = to_binary(data);
    write_text_file(path, std::string(bytes.begin(), bytes.end()));
  } else {
    const auto text = to_csv(data);
    write_text_file(path, text);
  }
}

EmbeddingDataset synth_generate(std::size_t n_per_class, std::size_t dim, double separation,
                                std::uint64_t seed) {
  require(n_per_class >= 1, "n_per_class must be at least 1");
  require(dim >= 1, "dim must be at least 1");
  std::vector<Sample> samples;
  samples.reserve(2 * n_per_class);
  for (int cls = 0; cls < 2; ++cls) {
    const double center = (cls == 0 ? -0.5 : 0.5) * separation;
    Rng rng(seed, static_cast<std::uint64_t>(cls));
    for (std::size_t i = 0; i < n_per_class; ++i) {
      Sample s;
      s.id = "s" + std::to_string(samples.size());
      s.label = static_cast<Label>(cls);
      s.embedding.resize(dim);
      for (auto& v : s.embedding) v = center + rng.normal();
      samples.push_back(std::move(s));
    }
  }
  return EmbeddingDataset(std::move(samples), dim);
}

EmbeddingDataset synth_shift(const EmbeddingDataset& base, const ShiftSpec& spec) {
  require(!base.empty(), "synth_shift needs a nonempty base dataset");
  require(spec.covariance_scale > 0.0, "covariance_scale must be positive");
  const std::size_t d = base.dim();
  require(spec.mean_shift.size() == 1 || spec.mean_shift.size() == d,
          "mean_shift must be a scalar or have the dataset dimension");

  Eigen::VectorXd shift(d);
  for (std::size_t j = 0; j < d; ++j)
    shift[j] = spec.mean_shift.size() == 1 ? spec.mean_shift[0] : spec.mean_shift[j];

  // Class-0 moments from the base data; identity covariance when there are too
  // few samples for an estimate.
  std::vector<const Sample*> ai;
  for (const auto& s : base)
    if (s.label == Label::AI) ai.push_back(&s);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
  Eigen::MatrixXd chol = Eigen::MatrixXd::Identity(d, d);
  if (!ai.empty()) {
    for (auto* s : ai) mean += Eigen::Map<const Eigen::VectorXd>(s->embedding.data(), d);
    mean /= static_cast<double>(ai.size());
  }
  if (ai.size() > d) {
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (auto* s : ai) {
      Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(s->embedding.data(), d) - mean;
      cov += c * c.transpose();
    }
    cov /= static_cast<double>(ai.size() - 1);
    cov.diagonal().array() += 1e-9;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) chol = llt.matrixL();
  }
  chol *= std::sqrt(spec.covariance_scale);
  const Eigen::VectorXd center = mean + shift;

  Rng rng(spec.seed, 0x5A1F7);
  std::vector<Sample> out;
  out.reserve(base.size());
  Eigen::VectorXd z(d);
  for (const auto& s : base) {
    Sample t = s;
    if (s.label == Label::AI) {
      for (std::size_t j = 0; j < d; ++j) z[j] = rng.normal();
      Eigen::Map<Eigen::VectorXd>(t.embedding.data(), d) = center + chol * z;
    }
    out.push_back(std::move(t));
  }
  return EmbeddingDataset(std::move(out), d);
}

}  // namespace uqfuse
