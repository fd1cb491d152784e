#include <doctest.h>

#include <cmath>
#include <numbers>
#include <limits>
#include <random>

#include "casimir/constants.hpp"
#include "casimir/lifshitz.hpp"

using namespace casimir;
using doctest::Approx;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

MaterialAssignment pair(const DielectricSource& plate, const DielectricSource& sphere) {
  return {plate, sphere, std::nullopt};
}

const MaterialAssignment& au_pair() {
  static const auto m = pair(DielectricSource::model_kk(bundled_au(), "au"),
                             DielectricSource::model_kk(bundled_au(), "au"));
  return m;
}

double ideal_gradient(double a, double R) {
  using namespace constants;
  return 2.0 * pi * R * pi * pi * hbar * c / (240.0 * std::pow(a, 4));
}

}  // namespace

TEST_SUITE("lifshitz") {
  TEST_CASE("kappa") {
    CHECK(kappa(1.0, 1.0) == 1.0);
    CHECK(kappa(2.0, 1.0) == 2.0);
    CHECK(kappa(1.5, 4.0) == Approx(std::sqrt(5.25)).epsilon(1e-15));
  }

  TEST_CASE("fresnel coefficients") {
    CHECK(fresnel_tm(1.3, 3.0, 3.0) == 0.0);
    CHECK(fresnel_te(1.3, 3.0, 3.0) == 0.0);
    CHECK(fresnel_tm(1.0, 1.0, 4.0) == Approx(-1.0 / 3.0).epsilon(1e-15));
    CHECK(fresnel_te(1.0, 1.0, 4.0) == Approx(1.0 / 3.0).epsilon(1e-15));
    // growing eps' drives |r_TM| to 1; the sign follows the (m, m') ordering
    CHECK(fresnel_tm(1.0, 1.0, 1e12) == Approx(-1.0).epsilon(1e-5));
    CHECK(fresnel_tm(1.0, 1e12, 1.0) == Approx(1.0).epsilon(1e-5));
    CHECK(fresnel_tm(1.0, 1.0, kInf) == -1.0);
    CHECK(fresnel_tm(1.0, kInf, 1.0) == 1.0);
  }

  TEST_CASE("reflection magnitude bounded") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> lp(0.0, 6.0);
    for (int i = 0; i < 20000; ++i) {
      const double p = std::pow(10.0, lp(rng) / 2.0);
      const double e1 = 1.0 + std::pow(10.0, lp(rng)) - 1.0;
      const double e2 = 1.0 + std::pow(10.0, lp(rng)) - 1.0;
      CHECK(std::abs(fresnel_tm(p, e1, e2)) <= 1.0);
      CHECK(std::abs(fresnel_te(p, e1, e2)) <= 1.0);
      const auto r = layered_reflection(e1, e2, 1e-9 * lp(rng), p, 1e15);
      CHECK(std::abs(r.tm) <= 1.0);
      CHECK(std::abs(r.te) <= 1.0);
    }
  }

  TEST_CASE("layered reflection") {
    // body-side ordering: r^(body, gap), the sign entering the gradient
    const double p = 1.0, xi = 1e15;
    const auto r0 = layered_reflection(2.0, 10.0, 0.0, p, xi);
    CHECK(r0.tm == Approx(fresnel_tm(p, 10.0, 1.0)).epsilon(1e-14));
    CHECK(r0.te == Approx(fresnel_te(p, 10.0, 1.0)).epsilon(1e-14));
    const auto rinf = layered_reflection(2.0, 10.0, 1e-3, p, xi);
    CHECK(rinf.tm == Approx(fresnel_tm(p, 2.0, 1.0)).epsilon(1e-14));
    CHECK(rinf.te == Approx(fresnel_te(p, 2.0, 1.0)).epsilon(1e-14));
    // mpmath value of the vacuum-first form is -0.50737340960890037 (TM); reversing
    // the ordering of every interface negates the stack coefficient
    const auto r = layered_reflection(2.0, 10.0, 4e-9, p, xi);
    CHECK(r.tm == Approx(0.50737340960890037).epsilon(1e-12));
    CHECK(r.te == Approx(-0.50737340960890037).epsilon(1e-12));
  }

  TEST_CASE("Matsubara frequencies and polylog") {
    CHECK(MatsubaraGrid::frequency(1, 296.0) == Approx(243488638508435.31).epsilon(1e-14));
    CHECK(MatsubaraGrid::frequency(0, 296.0) == 0.0);
    CHECK(polylog3(0.0) == 0.0);
    CHECK(polylog3(1.0) == Approx(constants::zeta3).epsilon(1e-13));
    CHECK(polylog3(-1.0) == Approx(-0.75 * constants::zeta3).epsilon(1e-13));
    CHECK(polylog3(0.5) == Approx(0.53721319360804020094).epsilon(1e-13));
  }

  TEST_CASE("ideal conductors") {
    LifshitzConfig cfg;
    cfg.zero_temperature = true;
    const auto pc = pair(DielectricSource::perfect_conductor(), DielectricSource::perfect_conductor());
    const auto g = gradient_pfa(100e-9, pc, cfg);
    CHECK(g.value == Approx(ideal_gradient(100e-9, cfg.sphere_radius)).epsilon(1e-6));
    CHECK(g.value == Approx(6.3636e-3).epsilon(1e-4));
  }

  TEST_CASE("vacuum gives no force") {
    const auto vac = pair(DielectricSource::vacuum(), DielectricSource::vacuum());
    for (double a : {20e-9, 100e-9, 1e-6}) CHECK(gradient_pfa(a, vac, LifshitzConfig{}).value == 0.0);
  }

  TEST_CASE("gold baseline") {
    const auto g = gradient_pfa(100e-9, au_pair(), LifshitzConfig{});
    CHECK(std::abs(g.value / 2.754e-3 - 1.0) < 0.10);
    CHECK(g.rel_err < 1e-6);
    CHECK(g.value < ideal_gradient(100e-9, 77.9e-6));
  }

  TEST_CASE("separation range") {
    CHECK_THROWS_AS(gradient_pfa(5e-9, au_pair(), LifshitzConfig{}), ValidationError);
    CHECK_THROWS_AS(gradient_pfa(20e-6, au_pair(), LifshitzConfig{}), ValidationError);
    LifshitzConfig bad;
    bad.temperature = -1.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
  }

  TEST_CASE("reduction symmetries") {
    const std::vector<double> grid{80e-9, 100e-9, 120e-9};
    LifshitzConfig cfg;
    const auto same = reduction_curve(grid, au_pair(), au_pair(), cfg);
    for (double d : same.delta) CHECK(d == 0.0);

    // plate and sphere exchanged with a clone of the gold source
    const auto clone = DielectricSource("clone", [](double xi) { return eval_imag_axis_causal(bundled_au(), xi); },
                                        StaticLimit::DrudeMetal);
    const auto swapped = pair(au_pair().sphere, clone);
    const auto r = reduction_curve(grid, au_pair(), swapped, cfg);
    for (double d : r.delta) CHECK(std::abs(d) < 1e-4);
  }

  TEST_CASE("trapezoid window mean") {
    std::vector<double> x, y;
    for (int i = 0; i <= 20; ++i) {
      x.push_back((60.0 + 5.0 * i) * 1e-9);
      y.push_back(3.0 * x.back() + 1.0);
    }
    int n = 0;
    CHECK(window_mean(x, y, {80e-9, 120e-9}, &n) == Approx(3.0 * 100e-9 + 1.0).epsilon(1e-14));
    CHECK(n == 9);
  }
}
