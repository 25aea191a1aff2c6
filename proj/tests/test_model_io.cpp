#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sdt/errors.hpp>
#include <sdt/model_io.hpp>
#include <string>

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("sdt_test_model_io_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

sdt::ModelConfig small_config() {
  sdt::ModelConfig cfg;
  cfg.scale = 2;
  cfg.feature_filters = {4, 3};
  cfg.recon_a1 = 8;
  cfg.recon_b1 = 4;
  cfg.recon_b2 = 4;
  cfg.dropout_keep = 0.9;
  return cfg;
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), {});
}

void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << bytes;
}

bool models_identical(const sdt::ModelWeights<float>& a,
                      const sdt::ModelWeights<float>& b) {
  bool eq = a.feature.size() == b.feature.size();
  auto& ma = const_cast<sdt::ModelWeights<float>&>(a);
  auto& mb = const_cast<sdt::ModelWeights<float>&>(b);
  ma.for_each_layer([&](const std::string& name, sdt::ConvLayer<float>& la) {
    mb.for_each_layer([&](const std::string& n2, sdt::ConvLayer<float>& lb) {
      if (n2 != name) return;
      eq = eq && la.kh == lb.kh && la.kw == lb.kw &&
           la.in_channels == lb.in_channels &&
           la.out_channels == lb.out_channels &&
           la.kernel.size() == lb.kernel.size() &&
           (la.kernel == lb.kernel).all() && (la.bias == lb.bias).all() &&
           la.prelu.size() == lb.prelu.size() &&
           (la.prelu.size() == 0 || (la.prelu == lb.prelu).all());
    });
  });
  return eq;
}

}  // namespace

TEST_CASE("model files roundtrip bit-exactly") {
  TempDir tmp;
  const auto path = (tmp.path / "m.sdtd").string();
  const sdt::ModelConfig cfg = small_config();
  const auto w = sdt::init_model<float>(cfg, 1234);

  sdt::save_model(path, w, cfg);
  auto [w2, cfg2] = sdt::load_model(path);
  CHECK(cfg2 == cfg);
  CHECK(models_identical(w, w2));
}

TEST_CASE("default-schedule configs roundtrip too") {
  TempDir tmp;
  const auto path = (tmp.path / "m4.sdtd").string();
  sdt::ModelConfig cfg;  // generated schedule, no explicit filter list
  cfg.scale = 4;
  cfg.feature_filters.clear();
  cfg.first_filters = 12;
  cfg.last_filters = 4;
  cfg.feature_layers = 3;
  cfg.recon_a1 = 6;
  cfg.recon_b1 = 3;
  cfg.recon_b2 = 3;
  cfg.activator = sdt::Activator::SELU;
  const auto w = sdt::init_model<float>(cfg, 99);
  sdt::save_model(path, w, cfg);
  auto [w2, cfg2] = sdt::load_model(path);
  CHECK(cfg2 == cfg);
  CHECK(cfg2.activator == sdt::Activator::SELU);
  CHECK(models_identical(w, w2));
}

TEST_CASE("serialisation is byte-deterministic") {
  TempDir tmp;
  const auto p1 = (tmp.path / "a.sdtd").string();
  const auto p2 = (tmp.path / "b.sdtd").string();
  const sdt::ModelConfig cfg = small_config();
  const auto w = sdt::init_model<float>(cfg, 7);
  sdt::save_model(p1, w, cfg);
  sdt::save_model(p2, w, cfg);
  const std::string b1 = read_file(p1);
  const std::string b2 = read_file(p2);
  CHECK(b1 == b2);
  CHECK(b1.substr(0, 4) == "SDTD");
}

TEST_CASE("file size is exactly framing + header + float32 payload") {
  TempDir tmp;
  const auto path = (tmp.path / "m.sdtd").string();
  const sdt::ModelConfig cfg = small_config();
  auto w = sdt::init_model<float>(cfg, 5);
  sdt::save_model(path, w, cfg);

  const std::string bytes = read_file(path);
  REQUIRE(bytes.size() > 12);
  std::uint32_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 8, 4);
  CHECK(bytes.size() == 12 + header_len + 4 * w.parameter_count());
}

TEST_CASE("loading classifies every failure mode") {
  TempDir tmp;
  const auto good = tmp.path / "good.sdtd";
  const sdt::ModelConfig cfg = small_config();
  const auto w = sdt::init_model<float>(cfg, 8);
  sdt::save_model(good.string(), w, cfg);
  const std::string bytes = read_file(good);

  SUBCASE("missing file") {
    CHECK_THROWS_AS(sdt::load_model((tmp.path / "nope.sdtd").string()),
                    sdt::IoError);
  }
  SUBCASE("bad magic") {
    std::string bad = bytes;
    bad[0] = 'X';
    write_file(tmp.path / "bad.sdtd", bad);
    try {
      sdt::load_model((tmp.path / "bad.sdtd").string());
      FAIL("expected FormatError");
    } catch (const sdt::FormatError& e) {
      CHECK(std::string(e.what()).find("SDTD") != std::string::npos);
    }
  }
  SUBCASE("unsupported version") {
    std::string bad = bytes;
    const std::uint32_t v = 999;
    std::memcpy(bad.data() + 4, &v, 4);
    write_file(tmp.path / "v999.sdtd", bad);
    CHECK_THROWS_AS(sdt::load_model((tmp.path / "v999.sdtd").string()),
                    sdt::VersionError);
  }
  SUBCASE("truncated payload") {
    write_file(tmp.path / "trunc.sdtd", bytes.substr(0, bytes.size() - 5));
    CHECK_THROWS_AS(sdt::load_model((tmp.path / "trunc.sdtd").string()),
                    sdt::CorruptionError);
  }
  SUBCASE("trailing garbage") {
    write_file(tmp.path / "long.sdtd", bytes + "extra");
    CHECK_THROWS_AS(sdt::load_model((tmp.path / "long.sdtd").string()),
                    sdt::CorruptionError);
  }
  SUBCASE("absurd header length") {
    std::string bad = bytes;
    const std::uint32_t huge = 0x7fffffff;
    std::memcpy(bad.data() + 8, &huge, 4);
    write_file(tmp.path / "hdr.sdtd", bad);
    CHECK_THROWS_AS(sdt::load_model((tmp.path / "hdr.sdtd").string()),
                    sdt::CorruptionError);
  }
  SUBCASE("unparseable header json") {
    std::string bad = bytes;
    bad[12] = 'X';  // first byte of the JSON header
    write_file(tmp.path / "json.sdtd", bad);
    CHECK_THROWS_AS(sdt::load_model((tmp.path / "json.sdtd").string()),
                    sdt::FormatError);
  }
}

TEST_CASE("saving into a missing directory reports an io error") {
  TempDir tmp;
  const sdt::ModelConfig cfg = small_config();
  const auto w = sdt::init_model<float>(cfg, 3);
  CHECK_THROWS_AS(
      sdt::save_model((tmp.path / "no" / "dir" / "m.sdtd").string(), w, cfg),
      sdt::IoError);
}
