#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "casimir/instrument.hpp"

using namespace casimir;
using doctest::Approx;

namespace {

constexpr double kPi = std::numbers::pi;

double phase_diff(double a, double b, double period = 2.0 * kPi) { return std::abs(std::remainder(a - b, period)); }

}  // namespace

TEST_SUITE("instrument") {
  TEST_CASE("frequency shift and gradient") {
    const double m = 1.871e-8, w0 = 2.0 * kPi * 609.07;
    CHECK(gradient_from_shift(m, w0, 0.0) == 0.0);
    CHECK(gradient_from_shift(m, w0, -2.0 * kPi * 0.1) == Approx(8.9969451918156372e-5).epsilon(1e-12));
    CHECK(shift_from_gradient(m, w0, 0.0) == 0.0);
    CHECK(shift_from_gradient(m, w0, 1e-4) == Approx(-1e-4 / (2.0 * m * w0)).epsilon(1e-3));
    for (double g : {-1e-2, -3e-5, 2e-6, 4e-3, 0.1}) {
      const double dw = shift_from_gradient(m, w0, g);
      CHECK(gradient_from_shift(m, w0, dw) == Approx(g).epsilon(1e-12));
    }
    CHECK_THROWS_AS(shift_from_gradient(m, w0, m * w0 * w0), PullInError);
  }

  TEST_CASE("electrostatic calibration response") {
    const auto p = CantileverParams::defaults();
    CHECK(electrostatic_response(1e-6, 0.0, 0.0, p.omega0, p, kDefaultSphereRadius) == Complex(0.0, 0.0));
    const auto st = electrostatic_response(1e-6, 0.5, 0.2, 0.0, p, kDefaultSphereRadius);
    CHECK(st.real() > 0.0);
    CHECK(st.imag() == 0.0);
    const auto r = electrostatic_response(2.5e-6, 1.0, 0.0, p.omega0, p, kDefaultSphereRadius);
    CHECK(r.real() == Approx(-0.011649928270432015).epsilon(1e-10));
    CHECK(r.imag() == Approx(-0.30506344476969034).epsilon(1e-10));
    CHECK_THROWS_AS(electrostatic_response(0.0, 1.0, 0.0, 1.0, p, 1e-5), ValidationError);
  }

  TEST_CASE("equation of motion") {
    const auto p = CantileverParams::defaults();
    const double w = 0.97 * p.omega0;
    SUBCASE("damped oscillator reduction") {
      const LocalTerms t{0.01, 0.0, 0.0};
      const SourceAmplitudes s{1e-12, 0.0, 0.0};
      const Complex expect = s.F / Complex(p.k - t.df - p.m * w * w, p.gamma1 * w);
      CHECK(std::abs(eom_response(w, p, s, t) / expect - 1.0) < 1e-14);
      CHECK(std::abs(eom_response(0.0, p, s, t) - Complex(s.F / (p.k - t.df), 0.0)) < 1e-14 * s.F / p.k);
    }
    SUBCASE("full parameter set at omega0") {
      const auto t = LocalTerms::at(p, 100e-9, 0.01);
      const SourceAmplitudes s{1e-12, 1e-10, 2e-10};
      const auto y = eom_response(p.omega0, p, s, t);
      CHECK(y.real() == Approx(-1.8182032810178831e-10).epsilon(1e-10));
      CHECK(y.imag() == Approx(-6.8082594152370689e-10).epsilon(1e-10));
    }
  }

  TEST_CASE("transfer functions") {
    auto p = CantileverParams::defaults();
    SUBCASE("undamped force response") {
      auto q = CantileverParams::make(p.m, p.omega0, 0.0, 0.0);
      const LocalTerms t{0.02, 0.0, 0.0};
      const double w = 0.9 * q.omega0;
      const auto y = transfer_function(Source::F, w, q, {}, t);
      CHECK(std::abs(y - 1.0 / (q.k - t.df - q.m * w * w)) < 1e-12 * std::abs(y));
      // static base motion: relative deflection df/(k - df); adding the base itself gives k/(k - df)
      const auto y1 = transfer_function(Source::X1, 0.0, q, {}, t);
      CHECK(y1.real() == Approx(t.df / (q.k - t.df)).epsilon(1e-12));
      CHECK(1.0 + y1.real() == Approx(q.k / (q.k - t.df)).epsilon(1e-12));
    }
    SUBCASE("finite differences") {
      const auto t = LocalTerms::at(p, 120e-9, 0.03);
      const SourceAmplitudes s{2e-12, 3e-10, 1e-10};
      const double w = 1.01 * p.omega0;
      for (Source b : {Source::F, Source::X0, Source::X1}) {
        const double h = (b == Source::F ? 1e-18 : 1e-16);
        SourceAmplitudes s0 = s, s1 = s;
        s0[b] = 0.0;
        s1[b] = h;
        const Complex fd = (eom_response(w, p, s1, t) - eom_response(w, p, s0, t)) / h;
        const Complex an = transfer_function(b, w, p, s, t);
        CHECK(std::abs(fd / an - 1.0) < 1e-5);
      }
    }
  }

  TEST_CASE("resonance closed forms over random draws") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    double worst_w = 0.0, worst_phi = 0.0, worst_f = 0.0;
    for (int i = 0; i < 200; ++i) {
      const auto q = CantileverParams::make(1e-8 * (0.5 + U(rng)), 2e3 + 4e3 * U(rng), 1e-10 * U(rng),
                                            1e-12 * (0.1 + 3 * U(rng)), 0.5 + U(rng));
      const auto t = LocalTerms::at(q, 50e-9 + 500e-9 * U(rng), 0.5 * q.k * U(rng));
      const SourceAmplitudes s{1e-12 * U(rng), 1e-10 * U(rng), 1e-10 * U(rng)};
      for (Source b : {Source::F, Source::X0, Source::X1}) {
        const auto r = resonance_and_phase(b, q, s, t);
        worst_w = std::max(worst_w, std::abs(r.omega_res / resonance_closed_form(q, t) - 1.0));
        const double d = phase_diff(r.phi_res, phase_closed_form(b, q, s, t));
        (b == Source::F ? worst_f : worst_phi) = std::max(b == Source::F ? worst_f : worst_phi, d);
        if (b == Source::F) CHECK(phase_closed_form(b, q, s, t) == -kPi / 2);
      }
    }
    CHECK(worst_w < 1e-9);
    CHECK(worst_phi < 1e-9);
    CHECK(worst_f < 1e-9);
  }

  TEST_CASE("single-source limits") {
    const auto p = CantileverParams::defaults();
    const auto t = LocalTerms::at(p, 90e-9, 0.05);
    for (Source b : {Source::X0, Source::X1}) {
      const auto r = resonance_and_phase(b, p, {}, t);
      CHECK(phase_diff(r.phi_res, phase_single_source_limit(b, p, t), kPi) < 1e-9);
    }
    // printed X1 limit: atan(k m / (gamma0 sqrt(m (k - df))))
    const double wm = std::sqrt(p.m * (p.k - t.df));
    CHECK(phase_diff(phase_single_source_limit(Source::X1, p, t), std::atan(p.k * p.m / (t.gamma0 * wm)), kPi) <
          1e-12);
    // vanishing squeeze film: both phases approach +-pi/2
    const auto q = CantileverParams::make(p.m, p.omega0, p.gamma1, 1e-24);
    const auto tq = LocalTerms::at(q, 90e-9, 0.05);
    for (Source b : {Source::X0, Source::X1})
      CHECK(std::abs(std::abs(phase_single_source_limit(b, q, tq)) - kPi / 2) < 1e-6);
  }

  TEST_CASE("phi_F is distance independent, phi_X0 and phi_X1 are not") {
    const auto p = CantileverParams::defaults();
    const SourceAmplitudes s{1e-12, 2e-10, 2e-10};
    double fmin = 1e9, fmax = -1e9, x0min = 1e9, x0max = -1e9, x1min = 1e9, x1max = -1e9;
    for (int i = 0; i <= 40; ++i) {
      const double a = 60e-9 + 20e-9 * i;
      const auto t = LocalTerms::at(p, a, 2.754e-3 * std::pow(100e-9 / a, 4));
      const double f = resonance_and_phase(Source::F, p, s, t).phi_res;
      const double x0 = resonance_and_phase(Source::X0, p, s, t).phi_res;
      const double x1 = resonance_and_phase(Source::X1, p, s, t).phi_res;
      fmin = std::min(fmin, f);
      fmax = std::max(fmax, f);
      x0min = std::min(x0min, x0);
      x0max = std::max(x0max, x0);
      x1min = std::min(x1min, x1);
      x1max = std::max(x1max, x1);
    }
    CHECK(fmax - fmin < 1e-9);
    CHECK(x0max - x0min > 1e-3);
    CHECK(x1max - x1min > 1e-6);
  }

  TEST_CASE("omega0 calibration") {
    const auto p = CantileverParams::defaults();
    CalibrationSetup cs;
    std::vector<double> w;
    for (int i = 0; i <= 100; ++i) w.push_back(p.omega0 * (0.9 + 0.2 * i / 100.0));
    const double g = p.gamma0(cs.a) + p.gamma1;
    auto p0 = CantileverParams::make(p.m, p.omega0 * 1.003, p.gamma1, p.gamma0_C);

    const auto clean = calibrate_omega0(calibration_sweep(w, p, cs, 0.3, g), p0, cs);
    CHECK(clean.converged);
    CHECK(std::abs(clean.omega0 / p.omega0 - 1.0) < 1e-6);
    CHECK(clean.phi_off == Approx(0.3).epsilon(1e-6));
    CHECK(std::abs(clean.gamma / g - 1.0) < 1e-6);

    const auto noisy = calibrate_omega0(calibration_sweep(w, p, cs, 0.3, g, 0.01, 5), p0, cs);
    CHECK(std::abs(noisy.omega0 / p.omega0 - 1.0) < 1e-4);

    FrequencySweep flat;
    flat.omega = w;
    flat.phase.assign(w.size(), 0.2);
    flat.response.assign(w.size(), Complex(1.0, 0.0));
    CHECK_THROWS_AS(calibrate_omega0(flat, p0, cs), BracketError);
  }

  TEST_CASE("mass calibration") {
    const auto p = CantileverParams::defaults();
    const double a = 500e-9;
    auto parabola = [&](double v0, double off) {
      std::vector<std::pair<double, double>> out;
      for (int i = -4; i <= 4; ++i) {
        const double v = v0 + 0.15 * i;
        out.push_back({v, shift_from_gradient(p.m, p.omega0, electrostatic_gradient(a, (v - v0) * (v - v0),
                                                                                    kDefaultSphereRadius)) +
                              off});
      }
      return out;
    };
    const auto f = calibrate_mass(parabola(0.1, 0.002), a, p.omega0);
    CHECK(f.converged);
    CHECK(std::abs(f.m / p.m - 1.0) < 1e-3);
    CHECK(f.v0 == Approx(0.1).epsilon(1e-9));
    CHECK(f.omega_off == Approx(0.002).epsilon(1e-8));
    const auto sym = calibrate_mass(parabola(0.0, 0.0), a, p.omega0);
    CHECK(std::abs(sym.v0) < 1e-12);

    std::vector<std::pair<double, double>> line;
    for (int i = 0; i < 6; ++i) line.push_back({0.1 * i, 0.01 * i});
    CHECK_THROWS(calibrate_mass(line, a, p.omega0));
  }

  TEST_CASE("simulator") {
    const auto p = CantileverParams::defaults();
    const auto law = [](double a) { return 2.754e-3 * std::pow(100e-9 / a, 4); };
    SweepPlan plan;
    const auto run = simulate_run(law, p, plan, NoiseModel{}, 7);
    REQUIRE(run.sweeps.size() == 35);
    for (const auto& s : run.sweeps) {
      CHECK(s.points.size() == 34);
      CHECK_FALSE(s.truncated);
      CHECK(s.a0_true.has_value());
    }
    const auto again = simulate_run(law, p, plan, NoiseModel{}, 7);
    CHECK(again.sweeps[3].points[5].delta_omega == run.sweeps[3].points[5].delta_omega);

    NoiseModel drift;
    drift.omega0_drift_span = 2.0 * kPi * 0.08;
    const auto d = simulate_run(law, p, plan, drift, 3);
    const auto [lo, hi] = std::minmax_element(d.omega0_true.begin(), d.omega0_true.end());
    CHECK(*hi - *lo <= drift.omega0_drift_span + 1e-12);
  }
}
