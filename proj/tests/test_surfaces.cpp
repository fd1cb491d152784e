#include <doctest.h>

#include <cmath>
#include <numbers>

#include "casimir/constants.hpp"
#include "casimir/surfaces.hpp"

using namespace casimir;
using doctest::Approx;

namespace {

constexpr double kR = 77.9e-6;

const GradientLaw& quartic() {
  static const GradientLaw law = GradientLaw::power_law(2.754e-3, 100e-9, 4.0);
  return law;
}

// Cartesian sum of G'(h) over the disk inside the rim plus the same
// smooth-surface tail as the polar rule.
double eta_cartesian(double a, const HeightMap& sphere, const HeightMap& plate, double sx, double sy, double t_min,
                     double step) {
  const auto& law = quartic();
  const double u_rim = a / t_min - a;
  const double rho_rim = std::sqrt(u_rim * (2.0 * kR - u_rim));
  const int n = static_cast<int>(std::ceil(rho_rim / step));
  double num = 0.0, den = 0.0;
  for (int iy = -n; iy <= n; ++iy)
    for (int ix = -n; ix <= n; ++ix) {
      const double x = ix * step, y = iy * step;
      const double rho2 = x * x + y * y;
      if (rho2 > rho_rim * rho_rim) continue;
      const double u = kR - std::sqrt(kR * kR - rho2);
      const double h = a + u - sample_bilinear(sphere, sphere.origin_x + x, sphere.origin_y + y, false) -
                       sample_bilinear(plate, sx + x, sy + y, true);
      num += law.derivative(h);
      den += law.derivative(a + u);
    }
  num *= step * step;
  den *= step * step;
  double rim_offset = 0.0;
  const int na = 4096;
  for (int j = 0; j < na; ++j) {
    const double phi = 2.0 * std::numbers::pi * (j + 0.5) / na;
    const double x = rho_rim * std::cos(phi), y = rho_rim * std::sin(phi);
    rim_offset += sample_bilinear(sphere, sphere.origin_x + x, sphere.origin_y + y, false) +
                  sample_bilinear(plate, sx + x, sy + y, true);
  }
  rim_offset /= na;
  num -= 2.0 * std::numbers::pi * kR * law(a + u_rim - rim_offset);
  den -= 2.0 * std::numbers::pi * kR * law(a + u_rim);
  return num / den;
}

}  // namespace

TEST_SUITE("surfaces") {
  TEST_CASE("surface statistics") {
    HeightMap flat(Grid::Constant(4, 4, 3e-9), 1e-9, MapRole::Plate);
    const auto s0 = surface_stats(flat);
    CHECK(s0.rms == 0.0);
    CHECK(s0.peak_peak == 0.0);

    Grid two(1, 2);
    two << 0.0, 2e-9;
    const auto s1 = surface_stats(HeightMap(two, 1e-9, MapRole::Plate));
    CHECK(s1.mean == Approx(1e-9).epsilon(1e-14));
    CHECK(s1.rms == Approx(1e-9).epsilon(1e-14));
    CHECK(s1.peak_peak == Approx(2e-9).epsilon(1e-14));

    const auto g = gaussian_field(256, 256, 25e-9, 3.2e-9, 50e-9, 3, 0);
    CHECK(std::abs(surface_stats(g).rms / 3.2e-9 - 1.0) < 0.05);
  }

  TEST_CASE("sphere fit") {
    SUBCASE("exact cap") {
      HeightMap cap(Grid::Zero(300, 300), 50e-9, MapRole::Sphere);
      add_spherical_cap(cap, kR, 7.3e-6, 7.6e-6);
      const auto f = fit_sphere(cap);
      REQUIRE_FALSE(f.degenerate);
      CHECK(std::abs(f.radius / kR - 1.0) < 1e-4);
      CHECK(f.center_x == Approx(7.3e-6).epsilon(1e-4));
      CHECK(f.center_y == Approx(7.6e-6).epsilon(1e-4));
    }
    SUBCASE("plane") {
      HeightMap plane(gaussian_field(200, 200, 50e-9, 1e-9, 100e-9, 7, 1), 50e-9, MapRole::Plate);
      CHECK(fit_sphere(plane).degenerate);
    }
    SUBCASE("noisy cap") {
      HeightMap cap(gaussian_field(400, 400, 50e-9, 14.5e-9, 60e-9, 9, 1), 50e-9, MapRole::Sphere);
      add_spherical_cap(cap, kR, 10e-6, 10e-6);
      const auto f = fit_sphere(cap);
      CHECK(std::abs(f.radius / kR - 1.0) < 1e-2);
    }
  }

  TEST_CASE("peak preprocessing") {
    SUBCASE("under cutoff") {
      const Grid g = gaussian_field(64, 64, 25e-9, 2e-9, 50e-9, 1, 0);
      const auto rep = preprocess_peaks(HeightMap(g, 25e-9, MapRole::Plate));
      CHECK(rep.masked_fraction == 0.0);
      CHECK(rep.map.valid.all());
    }
    SUBCASE("single spike") {
      Grid g = Grid::Zero(32, 32);
      g(5, 7) = 50e-9;
      const auto rep = preprocess_peaks(HeightMap(g, 25e-9, MapRole::Plate));
      CHECK_FALSE(rep.map.valid(5, 7));
      CHECK((!rep.map.valid).count() == 1);
    }
    SUBCASE("planted clusters") {
      SpikeSpec spikes;
      spikes.fraction = 0.05;
      const auto syn = synthetic_height_map(MapRole::Plate, 400, 400, 25e-9, 2.2e-9, 40e-9, spikes, 5);
      const double planted = static_cast<double>(syn.planted.count()) / static_cast<double>(syn.planted.size());
      const auto rep = preprocess_peaks(syn.map);
      CHECK(std::abs(rep.masked_fraction / planted - 1.0) < 0.10);
    }
  }

  TEST_CASE("flat maps give eta = 1 exactly") {
    HeightMap sphere(Grid::Zero(500, 500), 50e-9, MapRole::Sphere), plate(Grid::Zero(200, 200), 50e-9, MapRole::Plate);
    RoughnessOptions opt;
    opt.n_mc = 5;
    const auto r = roughness_eta({80e-9, 100e-9, 120e-9}, sphere, plate, kR, quartic(), opt);
    for (double e : r.eta) CHECK(e == 1.0);
    CHECK(r.n_accepted == 5);
  }

  TEST_CASE("uniform plate offset") {
    HeightMap sphere(Grid::Zero(500, 500), 50e-9, MapRole::Sphere);
    HeightMap plate(Grid::Constant(200, 200, 2e-9), 50e-9, MapRole::Plate);
    const double e = roughness_eta_single(100e-9, sphere, plate, kR, quartic(), 0.0, 0.0, RoughnessOptions{});
    // exact-sphere area element 2 pi (R - u) du differs from PFA at O(a/R)
    CHECK(e == Approx(quartic()(98e-9) / quartic()(100e-9)).epsilon(5e-5));
  }

  TEST_CASE("rough maps") {
    HeightMap sphere(gaussian_field(500, 500, 50e-9, 3e-9, 60e-9, 31, 0), 50e-9, MapRole::Sphere);
    HeightMap plate(gaussian_field(400, 400, 25e-9, 3e-9, 40e-9, 32, 0), 25e-9, MapRole::Plate);
    RoughnessOptions opt;
    opt.n_mc = 20;
    const auto r = roughness_eta({80e-9, 100e-9, 120e-9}, sphere, plate, kR, quartic(), opt);
    CHECK(r.eta[0] > 1.0);
    CHECK(r.eta[0] > r.eta[1]);
    CHECK(r.eta[1] > r.eta[2]);

    RoughnessOptions dense;
    dense.radial_nodes = 256;
    dense.angular_nodes = 512;
    const double polar = roughness_eta_single(80e-9, sphere, plate, kR, quartic(), 3.1e-6, 7.7e-6, dense);
    const double cart = eta_cartesian(80e-9, sphere, plate, 3.1e-6, 7.7e-6, dense.t_min, 12.5e-9);
    CHECK(polar == Approx(cart).epsilon(2e-3));
  }

  TEST_CASE("roughness is deterministic for a fixed seed") {
    const auto syn = synthetic_height_map(MapRole::Sphere, 500, 500, 50e-9, 4e-9, 60e-9, {}, 3);
    HeightMap plate(gaussian_field(200, 200, 25e-9, 2e-9, 40e-9, 4, 0), 25e-9, MapRole::Plate);
    RoughnessOptions opt;
    opt.n_mc = 8;
    opt.seed = 42;
    const auto a = roughness_eta({90e-9, 110e-9}, syn.map, plate, kR, quartic(), opt);
    const auto b = roughness_eta({90e-9, 110e-9}, syn.map, plate, kR, quartic(), opt);
    CHECK(a.eta == b.eta);
    CHECK(a.band_lo == b.band_lo);
    opt.seed = 43;
    const auto c = roughness_eta({90e-9, 110e-9}, syn.map, plate, kR, quartic(), opt);
    CHECK(a.eta != c.eta);
  }

  TEST_CASE("touching surfaces are rejected") {
    HeightMap sphere(Grid::Zero(500, 500), 50e-9, MapRole::Sphere);
    HeightMap plate(Grid::Constant(100, 100, 90e-9), 50e-9, MapRole::Plate);
    CHECK_THROWS_AS(roughness_eta_single(80e-9, sphere, plate, kR, quartic(), 0.0, 0.0, RoughnessOptions{}),
                    GeometryError);
    RoughnessOptions opt;
    opt.n_mc = 3;
    opt.max_attempts = 6;
    CHECK_THROWS_AS(roughness_eta({80e-9}, sphere, plate, kR, quartic(), opt), SamplingExhaustedError);
  }

  TEST_CASE("patch potentials") {
    PatchOptions opt;
    SUBCASE("uniform and equal") {
      PotentialMap s(Grid::Constant(50, 50, 0.02), 50e-9), p(Grid::Constant(50, 50, 0.02), 50e-9);
      CHECK(std::abs(patch_single(100e-9, s, p, kR, 0.0, 0.0, opt).gradient) < 1e-18);
      PotentialMap s2(Grid::Constant(50, 50, 0.03), 50e-9);
      CHECK(std::abs(patch_single(100e-9, s2, p, kR, 0.0, 0.0, opt).gradient) < 1e-18);
    }
    SUBCASE("uniform difference, no compensation") {
      PotentialMap s(Grid::Constant(50, 50, 0.01), 50e-9), p(Grid::Zero(50, 50), 50e-9);
      opt.force_v0_zero = true;
      const double a = 100e-9;
      const double g = patch_single(a, s, p, kR, 0.0, 0.0, opt).gradient;
      const double closed = std::numbers::pi * kR * constants::epsilon0 * 1e-4 / (a * a);
      CHECK(g == Approx(closed * (1.0 - opt.t_min * opt.t_min)).epsilon(1e-6));
      CHECK(g == Approx(closed).epsilon(1e-3));
    }
    SUBCASE("random patches") {
      const auto vs = synthetic_potential_map(500, 500, 50e-9, 3.5e-3, 200e-9, 21);
      const auto vp = synthetic_potential_map(400, 400, 25e-9, 2.4e-3, 200e-9, 22);
      opt.n_mc = 10;
      const auto r = patch_gradient({100e-9}, vs, vp, kR, opt, quartic());
      const double vmax = vs.v.cwiseAbs().maxCoeff() + vp.v.cwiseAbs().maxCoeff();
      const double bound = std::numbers::pi * kR * constants::epsilon0 * 4.0 * vmax * vmax / (100e-9 * 100e-9);
      CHECK(r.gradient[0] > 0.0);
      CHECK(r.gradient[0] < bound);
      CHECK(r.gradient[0] < 0.01 * 2.754e-3);
      CHECK(r.eta[0] == Approx(1.0 + r.gradient[0] / quartic()(100e-9)).epsilon(1e-12));
    }
  }

  TEST_CASE("combined reduction") {
    const std::vector<double> grid{80e-9, 100e-9, 120e-9};
    std::vector<GradientPoint> g;
    for (double a : grid) g.push_back({a, quartic()(a), 0.0});
    const auto one = unit_correction(grid);
    const auto c = combine_corrections(g, g, one, one, one, one);
    for (double d : c.delta) CHECK(d == 0.0);

    auto gb = g;
    for (auto& p : gb) p.value *= 0.97;
    auto rb = one;
    for (auto& e : rb.eta) e = 1.01;
    const auto c2 = combine_corrections(g, gb, one, rb, one, one);
    for (double d : c2.delta) CHECK(d == Approx(0.97 * 1.01 - 1.0).epsilon(1e-12));
  }

  TEST_CASE("gradient law") {
    const auto law = GradientLaw::power_law(1e-3, 100e-9, 3.0);
    CHECK(law(50e-9) == Approx(8e-3).epsilon(1e-12));
    CHECK(law.derivative(100e-9) == Approx(-3.0 * 1e-3 / 100e-9).epsilon(1e-10));
    CHECK_THROWS_AS(GradientLaw({1e-9}, {1.0}), ValidationError);
  }
}
