#include <doctest.h>

#include <filesystem>

#include "casimir/io.hpp"

using namespace casimir;
using doctest::Approx;
namespace fs = std::filesystem;

TEST_SUITE("io") {
  TEST_CASE("shortest round-trip doubles") {
    for (double v : {0.1, 1.0 / 3.0, 6.3636e-3, -2.5e-300, 1e22}) CHECK(std::stod(io::format_double(v)) == v);
  }

  TEST_CASE("spectrum csv") {
    const auto s = tabulate_model(bundled_au(), 1e14, 1e16, 5);
    const auto back = io::parse_spectrum_csv(io::spectrum_csv(s));
    REQUIRE(back.size() == s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      CHECK(back.points[i].omega == s.points[i].omega);
      CHECK(back.points[i].eps_imag == s.points[i].eps_imag);
      CHECK(back.points[i].provenance == s.points[i].provenance);
    }
    try {
      io::parse_spectrum_csv("# note\nomega_rad_per_s,eps_real,eps_imag\n1e14,2,0.1\n2e14,3\n", "x.csv");
      FAIL("expected ParseError");
    } catch (const io::ParseError& e) {
      CHECK(e.line() == 4);
      CHECK(std::string(e.what()).rfind("x.csv:4:", 0) == 0);
      CHECK(e.kind() == ErrorKind::Io);
    }
    CHECK_THROWS_AS(io::parse_spectrum_csv(""), io::ParseError);
    CHECK_THROWS_AS(io::parse_spectrum_csv("omega_rad_per_s,eps_real,eps_imag\n1e14,abc,0\n"), io::ParseError);
  }

  TEST_CASE("model json") {
    const auto j = io::to_json(bundled_psi());
    const auto m = io::model_from_json(j);
    CHECK(m.omega_p == bundled_psi().omega_p);
    REQUIRE(m.oscillators.size() == bundled_psi().oscillators.size());
    CHECK(m.oscillators[3].gamma == bundled_psi().oscillators[3].gamma);
  }

  TEST_CASE("maps") {
    io::MapFile f;
    f.values = Grid::Random(7, 5) * 1e-9;
    f.pitch = 25e-9;
    for (const auto& bytes : {io::map_text(f), io::map_binary(f)}) {
      const auto g = io::parse_map(bytes);
      CHECK(g.values == f.values);
      CHECK(g.pitch == f.pitch);
      CHECK(g.unit == "m");
    }
    CHECK(io::map_binary(f).rfind(io::kBinaryMapMagic, 0) == 0);
    const auto h = io::to_height_map(io::parse_map(io::map_text(f)), MapRole::Plate);
    CHECK(h.nx() == 5);
    CHECK_THROWS_AS(io::to_potential_map(f), ValidationError);
    CHECK_THROWS_AS(io::parse_map("{\"nx\":2,\"ny\":2,\"pitch_m\":1e-8,\"unit\":\"m\"}\n1 2\n3\n"), io::ParseError);
  }

  TEST_CASE("sweeps jsonl") {
    SweepRecord s;
    s.index = 3;
    s.omega0_cal = 3826.9;
    s.t_cal = 12.5;
    s.a0_true = 1e-6;
    s.points.push_back({1e-7, -0.25, 0.01, 0.02, 13.0, 0.5, 1e-7, 2e-7, 1.5e-10});
    s.points.push_back({2e-7, -0.05, 0.02, 0.04, 14.0, 0.5, 1e-7, 2e-7, 1.5e-10});
    io::Meta meta;
    meta.command = "simulate";
    const auto text = io::sweeps_jsonl({s, s}, &meta);
    const auto back = io::parse_sweeps(text);
    REQUIRE(back.size() == 2);
    CHECK(back[0].index == 3);
    CHECK(back[1].points[1].v_ex == 0.04);
    CHECK(back[1].points[0].sigma_a_pz == 1.5e-10);
    CHECK(back[0].a0_true == s.a0_true);
    CHECK(io::sweeps_jsonl(back, &meta) == text);
    CHECK_THROWS_AS(io::parse_sweeps("{\"index\": 1}\nnot json\n"), io::ParseError);
  }

  TEST_CASE("corrections csv") {
    CorrectionResult r = unit_correction({80e-9, 100e-9});
    r.eta = {1.01, 1.005};
    r.band_lo = {1.0, 1.0};
    r.band_hi = {1.02, 1.01};
    r.n_accepted = 9;
    r.n_attempts = 11;
    const auto back = io::parse_correction_csv(io::correction_csv(r));
    CHECK(back.eta == r.eta);
    CHECK(back.band_hi == r.band_hi);
    CHECK(back.n_accepted == 9);
    CHECK(back.n_attempts == 11);
  }

  TEST_CASE("gradient csv") {
    std::vector<GradientPoint> g{{80e-9, 6e-3, 1e-9}, {100e-9, 2.86e-3, 2e-9}};
    const auto back = io::parse_gradient_csv(io::gradient_csv(g));
    REQUIRE(back.size() == 2);
    CHECK(back[1].value == 2.86e-3);
  }

  TEST_CASE("lengths") {
    CHECK(io::parse_length("80nm") == Approx(80e-9).epsilon(1e-15));
    CHECK(io::parse_length("2.5um") == Approx(2.5e-6).epsilon(1e-15));
    CHECK(io::parse_length("1e-7") == 1e-7);
    CHECK(io::parse_length("3mm") == Approx(3e-3).epsilon(1e-15));
    CHECK_THROWS_AS(io::parse_length("12 parsecs"), ValidationError);
    const auto w = io::parse_window("80nm,160nm");
    CHECK(w.lo == Approx(80e-9).epsilon(1e-15));
    CHECK(w.hi == Approx(160e-9).epsilon(1e-15));
    CHECK_THROWS_AS(io::parse_window("120nm,80nm"), ValidationError);
  }

  TEST_CASE("config hash and atomic writes") {
    const io::Json a = io::Json::parse(R"({"b": 1, "a": [1, 2]})");
    const io::Json b = io::Json::parse(R"({"a": [1, 2], "b": 1})");
    CHECK(io::config_hash(a) == io::config_hash(b));
    CHECK(io::hex64(0xabcULL) == "0000000000000abc");
    const auto dir = fs::temp_directory_path() / "casimir_io_test";
    fs::remove_all(dir);
    io::write_text(dir / "sub" / "x.txt", "hello\n");
    CHECK(io::read_text(dir / "sub" / "x.txt") == "hello\n");
    CHECK_FALSE(fs::exists(dir / "sub" / "x.txt.tmp"));
    CHECK_THROWS_AS(io::read_text(dir / "missing"), IoError);
    fs::remove_all(dir);
  }
}
