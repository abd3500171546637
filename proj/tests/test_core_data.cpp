#include "doctest.h"

#include <cstring>

#include "support.hpp"
#include "uqfuse/dataset.hpp"
#include "uqfuse/error.hpp"
#include "uqfuse/head.hpp"
#include "uqfuse/io.hpp"

using namespace uqfuse;

namespace {

bool same_values(const EmbeddingDataset& a, const EmbeddingDataset& b) {
  if (a.size() != b.size() || a.dim() != b.dim()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].id != b[i].id || a[i].label != b[i].label) return false;
    if (std::memcmp(a[i].embedding.data(), b[i].embedding.data(), a.dim() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

std::string error_text(const std::string& csv) {
  try {
    parse_csv(csv);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("core_data") {
  TEST_CASE("CSV with three rows parses") {
    const auto d = parse_csv("id,label,f0,f1\na,0,1.5,2\nb,1,-3,4e-2\nc,0,0,0\n");
    CHECK(d.size() == 3);
    CHECK(d.dim() == 2);
    CHECK(d[0].label == Label::AI);
    CHECK(d[1].label == Label::Nature);
    CHECK(d[1].embedding[1] == doctest::Approx(0.04));
  }

  TEST_CASE("malformed rows are reported with line numbers") {
    try {
      parse_csv("id,label,f0\na,0,1\nb,2,1\n");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Parse);
      CHECK(e.line() == 3);
      CHECK(std::string(e.what()).find("unknown label") != std::string::npos);
    }
    CHECK(error_text("id,label,f0,f1\na,0,1\n").find("dimension mismatch") != std::string::npos);
    CHECK(error_text("id,label,f0\na,0,abc\n").find("malformed") != std::string::npos);
    CHECK(error_text("id,label,f0\na,0,1\na,1,2\n").find("duplicate") != std::string::npos);
  }

  TEST_CASE("CSV and binary round trips are exact") {
    const auto d = synth_generate(50, 7, 2.5, 11);
    CHECK(same_values(d, parse_csv(to_csv(d))));
    CHECK(same_values(d, parse_binary(to_binary(d))));
    const auto dir = testing::scratch_dir("core_data");
    save_dataset(d, dir / "a.bin", DataFormat::Binary);
    save_dataset(d, dir / "a.csv", DataFormat::Csv);
    CHECK(sniff_format(dir / "a.bin") == DataFormat::Binary);
    CHECK(sniff_format(dir / "a.csv") == DataFormat::Csv);
    CHECK(same_values(d, load_dataset(dir / "a.bin")));
    CHECK(same_values(d, load_dataset(dir / "a.csv")));
  }

  TEST_CASE("binary layout matches the documented format") {
    const EmbeddingDataset d({Sample{"xy", {1.0}, Label::Nature}}, 1);
    const auto b = to_binary(d);
    REQUIRE(b.size() == 4 + 4 + 4 + 4 + 2 + 1 + 8);
    CHECK(std::memcmp(b.data(), "UQF1", 4) == 0);
    CHECK(b[4] == 1);  // n, little endian
    CHECK(b[8] == 1);  // d
    CHECK(b[12] == 2);  // id length
    CHECK(b[16] == 'x');
    CHECK(b[18] == 1);  // label
    double v = 0.0;
    std::memcpy(&v, b.data() + 19, 8);
    CHECK(v == 1.0);
    auto bad = b;
    bad[18] = 3;
    CHECK_THROWS_AS(parse_binary(bad), Error);
    bad = b;
    bad.pop_back();
    CHECK_THROWS_AS(parse_binary(bad), Error);
  }

  TEST_CASE("missing file is an I/O error naming the path") {
    try {
      load_dataset("/nonexistent/x.csv");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Io);
      CHECK(e.path() == "/nonexistent/x.csv");
    }
  }

  TEST_CASE("dataset invariants are enforced") {
    CHECK_THROWS_AS(EmbeddingDataset({Sample{"a", {1.0, 2.0}, Label::AI}}, 1), Error);
    CHECK_THROWS_AS(EmbeddingDataset({Sample{"a", {1.0}, Label::AI}, Sample{"a", {1.0}, Label::AI}}, 1),
                    Error);
    CHECK_THROWS_AS(EmbeddingDataset({Sample{"a", {1.0}, static_cast<Label>(2)}}, 1), Error);
  }

  TEST_CASE("synthetic generator is balanced and deterministic") {
    const auto a = synth_generate(40, 3, 4.0, 5);
    const auto b = synth_generate(40, 3, 4.0, 5);
    CHECK(same_values(a, b));
    CHECK(a.count(Label::AI) == 40);
    CHECK(a.count(Label::Nature) == 40);
    CHECK_FALSE(same_values(a, synth_generate(40, 3, 4.0, 6)));
    const auto tiny = synth_generate(1, 1, 0.0, 0);
    CHECK(tiny.size() == 2);
  }

  TEST_CASE("synthetic class means sit at plus and minus half the separation") {
    const auto d = synth_generate(4000, 2, 3.0, 9);
    double m[2][2] = {};
    for (const auto& s : d)
      for (std::size_t j = 0; j < 2; ++j) m[to_int(s.label)][j] += s.embedding[j] / 4000.0;
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(m[0][j] == doctest::Approx(-1.5).epsilon(0.05));
      CHECK(m[1][j] == doctest::Approx(1.5).epsilon(0.05));
    }
  }

  TEST_CASE("separable data trains to high accuracy") {
    const auto d = synth_generate(1000, 2, 6.0, 7);
    TrainConfig cfg;
    cfg.epochs = 50;
    CHECK(accuracy(head_train(d, cfg), d) >= 0.99);
  }

  TEST_CASE("shift: identity spec keeps class 0 statistics and class 1 samples") {
    const auto base = synth_generate(3000, 2, 2.0, 3);
    ShiftSpec spec;
    spec.seed = 4;
    const auto s = synth_shift(base, spec);
    double mean_b = 0.0, mean_s = 0.0, var_b = 0.0, var_s = 0.0;
    for (std::size_t i = 0; i < base.size(); ++i) {
      if (base[i].label == Label::Nature) {
        CHECK(base[i].embedding == s[i].embedding);
        continue;
      }
      mean_b += base[i].embedding[0] / 3000.0;
      mean_s += s[i].embedding[0] / 3000.0;
      var_b += base[i].embedding[0] * base[i].embedding[0] / 3000.0;
      var_s += s[i].embedding[0] * s[i].embedding[0] / 3000.0;
    }
    CHECK(mean_s == doctest::Approx(mean_b).epsilon(0.1));
    CHECK(var_s - mean_s * mean_s == doctest::Approx(var_b - mean_b * mean_b).epsilon(0.1));
    CHECK(same_values(s, synth_shift(base, spec)));
  }

  TEST_CASE("shift across the boundary breaks class-0 accuracy") {
    const auto base = synth_generate(500, 4, 3.0, 21);
    TrainConfig cfg;
    cfg.epochs = 30;
    const auto head = head_train(base, cfg);
    ShiftSpec spec;
    spec.mean_shift = {4.0};
    spec.seed = 1;
    const auto s = synth_shift(base, spec);
    std::size_t right = 0, n0 = 0;
    for (const auto& x : s)
      if (x.label == Label::AI) {
        ++n0;
        right += head_prob(head, x.embedding) < 0.5;
      }
    CHECK(static_cast<double>(right) / static_cast<double>(n0) < 0.6);
  }

  TEST_CASE("shift scales class-0 covariance") {
    const auto base = synth_generate(4000, 1, 0.0, 8);
    ShiftSpec spec;
    spec.covariance_scale = 4.0;
    spec.mean_shift = {0.0};
    const auto s = synth_shift(base, spec);
    double v = 0.0, m = 0.0;
    for (const auto& x : s)
      if (x.label == Label::AI) m += x.embedding[0] / 4000.0;
    for (const auto& x : s)
      if (x.label == Label::AI) v += (x.embedding[0] - m) * (x.embedding[0] - m) / 4000.0;
    CHECK(v == doctest::Approx(4.0).epsilon(0.1));
    spec.covariance_scale = 0.0;
    CHECK_THROWS_AS(synth_shift(base, spec), Error);
  }
}
