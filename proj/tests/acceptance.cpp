// Acceptance run: one PASS/FAIL line per criterion, runtime included.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <algorithm>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "casimir/analysis.hpp"
#include "casimir/constants.hpp"
#include "casimir/instrument.hpp"
#include "casimir/io.hpp"
#include "casimir/lifshitz.hpp"
#include "casimir/surfaces.hpp"

using namespace casimir;

namespace {

constexpr double kR = 77.9e-6;
constexpr double kPi = std::numbers::pi;

MaterialAssignment pair(const DielectricSource& plate, const DielectricSource& sphere) {
  return {plate, sphere, std::nullopt};
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<double> window_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 8; ++i) g.push_back((80.0 + 5.0 * i) * 1e-9);
  return g;
}

const DielectricSource& au() {
  static const auto s = DielectricSource::model_kk(bundled_au(), "au");
  return s;
}
const DielectricSource& psi() {
  static const auto s = DielectricSource::model_kk(bundled_psi(), "psi");
  return s;
}

Outcome ideal_conductor() {
  LifshitzConfig cfg;
  cfg.zero_temperature = true;
  const auto pc = pair(DielectricSource::perfect_conductor(), DielectricSource::perfect_conductor());
  const double a = 100e-9;
  const double g = gradient_pfa(a, pc, cfg).value;
  const double ideal = 2.0 * kPi * kR * kPi * kPi * constants::hbar * constants::c / (240.0 * std::pow(a, 4));
  const double rel = g / ideal - 1.0;
  return {std::abs(rel) < 0.01, fmt("dF/da = %.5e N/m, analytic %.5e, rel %.1e (tol 1e-2)", g, ideal, rel)};
}

Outcome gold_baseline() {
  const auto m = pair(au(), au());
  const auto g = gradient_pfa(100e-9, m, LifshitzConfig{});
  const double rel = g.value / 2.754e-3 - 1.0;
  return {std::abs(rel) < 0.10,
          fmt("Au/Au at 100 nm: %.4e N/m vs 2.754e-3, rel %+.2f%% (tol 10%%)", g.value, 100.0 * rel)};
}

Outcome bare_reduction() {
  const auto a = pair(au(), au());
  const auto b = pair(psi(), psi());
  const auto r = reduction_curve(window_grid(), a, b, LifshitzConfig{});
  const double pct = 100.0 * r.window_mean;
  return {std::abs(pct + 3.24) <= 0.5, fmt("window mean %.3f%% vs -3.24 +/- 0.5", pct)};
}

Outcome gold_sphere_info() {
  const auto a = pair(au(), au());
  const auto b = pair(psi(), au());
  const auto r = reduction_curve(window_grid(), a, b, LifshitzConfig{});
  return {true, fmt("PS I plate against an Au sphere: window mean %.3f%% (informational)", 100.0 * r.window_mean)};
}

Outcome corrected_band() {
  LifshitzConfig cfg;
  const auto A = pair(au(), au());
  const auto B = pair(psi(), psi());
  const auto grid = window_grid();
  const auto ga = gradient_curve(grid, A, cfg), gb = gradient_curve(grid, B, cfg);
  const auto la = GradientLaw::from_lifshitz(A, cfg), lb = GradientLaw::from_lifshitz(B, cfg);

  SpikeSpec holes;
  holes.fraction = 0.04;
  holes.sign = -1.0;
  const auto sphere = synthetic_height_map(MapRole::Sphere, 500, 500, 50e-9, 4e-9, 60e-9, holes, 11);
  const auto pa = synthetic_height_map(MapRole::Plate, 400, 400, 25e-9, 1.9e-9, 40e-9, {}, 12);
  const auto pb = synthetic_height_map(MapRole::Plate, 400, 400, 25e-9, 2.2e-9, 40e-9, {}, 13);

  RoughnessOptions ro;
  ro.n_mc = 100;
  ro.seed = 1;
  const auto ra = roughness_eta(grid, sphere.map, preprocess_peaks(pa.map).map, kR, la, ro);
  const auto rb = roughness_eta(grid, sphere.map, preprocess_peaks(pb.map).map, kR, lb, ro);

  const auto vs = synthetic_potential_map(500, 500, 50e-9, 3.5e-3, 200e-9, 21);
  const auto va = synthetic_potential_map(400, 400, 25e-9, 1.6e-3, 200e-9, 22);
  const auto vb = synthetic_potential_map(400, 400, 25e-9, 2.4e-3, 200e-9, 23);
  PatchOptions po;
  po.n_mc = 100;
  po.seed = 1;
  const auto qa = patch_gradient(grid, vs, va, kR, po, la);
  const auto qb = patch_gradient(grid, vs, vb, kR, po, lb);

  const auto c = combine_corrections(ga, gb, ra, rb, qa, qb);
  const double mean = 100.0 * window_mean(c.a, c.delta, {});
  const double lo = 100.0 * window_mean(c.a, c.delta_lo, {});
  const double hi = 100.0 * window_mean(c.a, c.delta_hi, {});
  const bool pass = mean >= -2.7 - 1.7 && mean <= -2.7 + 1.2;
  return {pass, fmt("combined %.3f%% [%.3f, %.3f] vs -2.7 +1.2/-1.7; rms sphere %.1f nm, plates %.1f/%.1f nm; "
                    "accepted %d/%d %d/%d %d/%d %d/%d",
                    mean, lo, hi, 1e9 * surface_stats(sphere.map).rms, 1e9 * surface_stats(pa.map).rms,
                    1e9 * surface_stats(pb.map).rms, ra.n_accepted, ra.n_attempts, rb.n_accepted, rb.n_attempts,
                    qa.n_accepted, qa.n_attempts, qb.n_accepted, qb.n_attempts)};
}

Outcome closed_forms() {
  std::mt19937_64 rng(20240501);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst_w = 0.0, worst_f = 0.0, worst_x = 0.0;
  bool exact_f = true;
  for (int i = 0; i < 1000; ++i) {
    const auto q = CantileverParams::make(1e-8 * (0.5 + U(rng)), 2e3 + 4e3 * U(rng), 1e-10 * U(rng),
                                          1e-12 * (0.1 + 3.0 * U(rng)), 0.5 + U(rng));
    const auto t = LocalTerms::at(q, 50e-9 + 500e-9 * U(rng), 0.5 * q.k * U(rng));
    const SourceAmplitudes s{1e-12 * U(rng), 1e-10 * U(rng), 1e-10 * U(rng)};
    for (Source b : {Source::F, Source::X0, Source::X1}) {
      const auto r = resonance_and_phase(b, q, s, t);
      worst_w = std::max(worst_w, std::abs(r.omega_res / resonance_closed_form(q, t) - 1.0));
      if (b == Source::F) {
        worst_f = std::max(worst_f, std::abs(std::remainder(r.phi_res + kPi / 2.0, 2.0 * kPi)));
        exact_f = exact_f && phase_closed_form(b, q, s, t) == -kPi / 2.0;
      }
      else
        worst_x = std::max(worst_x, std::abs(std::remainder(r.phi_res - phase_closed_form(b, q, s, t), 2.0 * kPi)));
    }
  }
  const bool pass = worst_w < 1e-9 && exact_f && worst_f < 1e-9 && worst_x < 1e-9;
  return {pass, fmt("1000 draws: resonance rel %.1e, closed-form phi_F %s -pi/2, numeric |phi_F + pi/2| %.1e, phi_X0/X1 %.1e",
                    worst_w, exact_f ? "==" : "!=", worst_f, worst_x)};
}

Outcome distance_independence() {
  const auto p = CantileverParams::defaults();
  const SourceAmplitudes s{1e-12, 2e-10, 2e-10};
  std::vector<double> f, x0, x1;
  for (int i = 0; i <= 60; ++i) {
    const double a = 60e-9 + 15e-9 * i;
    const auto t = LocalTerms::at(p, a, 2.754e-3 * std::pow(100e-9 / a, 4));
    f.push_back(resonance_and_phase(Source::F, p, s, t).phi_res);
    x0.push_back(resonance_and_phase(Source::X0, p, s, t).phi_res);
    x1.push_back(resonance_and_phase(Source::X1, p, s, t).phi_res);
  }
  auto span = [](const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi - *lo;
  };
  const double sf = span(f), s0 = span(x0), s1 = span(x1);
  return {sf < 1e-9 && s0 > 1e-9 && s1 > 1e-9,
          fmt("60-960 nm, C = %.2e: span phi_F %.1e rad, phi_X0 %.3e rad, phi_X1 %.3e rad", p.gamma0_C, sf, s0, s1)};
}

Outcome pipeline() {
  LifshitzConfig cfg;
  const auto A = pair(au(), au());
  const auto law = GradientLaw::from_lifshitz(A, cfg, 40e-9, 1e-6, 24);
  const auto p = CantileverParams::defaults();
  const SweepPlan plan;
  PipelineCalibration cal;
  cal.m = p.m;
  const auto truth = [&](double a) { return law(a); };
  const auto planted = [&](double a) { return 0.96 * law(a); };

  int inside = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    NoiseModel nm;
    nm.omega0_drift_span = 2.0 * kPi * 0.08;
    nm.a0_drift_per_sweep = 0.2e-9;
    nm.a0_walk = 0.3e-9;

    // size the frequency noise so the propagated budget at 100 nm is 116.1 uN/m
    NoiseModel quiet = nm;
    quiet.sigma_freq = 0.0;
    PipelineCalibration c0 = cal;
    c0.sigma_freq = 0.0;
    const auto b0 = error_budget(analyze_run(simulate_run(truth, p, plan, quiet, seed).sweeps, c0).samples);
    const double others2 = b0.total() * b0.total() - b0.frequency * b0.frequency;
    const double target = 116.1e-6;
    nm.sigma_freq = std::sqrt(std::max(0.0, target * target - others2)) / (2.0 * p.m * p.omega0);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    PipelineCalibration c = cal;
    c.m = p.m + cal.sigma_m * n01(rng);
    c.sigma_freq = nm.sigma_freq;

    const auto sample = analyze_run(simulate_run(planted, p, plan, nm, seed * 100).sweeps, c);
    std::vector<RunAnalysis> refs;
    for (std::uint64_t k = 0; k < 4; ++k)
      refs.push_back(analyze_run(simulate_run(truth, p, plan, nm, seed * 100 + 1 + k).sweeps, c));
    const auto rep = relative_reduction(pooled_curve({sample}), pooled_curve(refs));
    const double pull = (rep.window_mean + 0.04) / rep.window_sigma;
    inside += std::abs(pull) <= 1.0;
    detail += fmt("%sseed %d: %.2f +/- %.2f%% (budget %.1f uN/m, %d sweeps)", seed > 1 ? "; " : "", int(seed),
                  100.0 * rep.window_mean, 100.0 * rep.window_sigma, 1e6 * error_budget(sample.samples).total(),
                  sample.runset.accepted());
  }
  return {inside >= 2, fmt("%d/3 within 1 sigma of -4.0%%; ", inside) + detail};
}

Outcome properties() {
  std::vector<std::string> failed;

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  bool bounded = true;
  for (int i = 0; i < 100000; ++i) {
    const double p = 1.0 + 1e3 * U(rng) * U(rng);
    const double e1 = 1.0 + std::pow(10.0, 8.0 * U(rng)) - 1.0, e2 = std::pow(10.0, 8.0 * U(rng));
    const auto r = layered_reflection(e1, e2, 1e-8 * U(rng), p, 1e13 + 1e16 * U(rng));
    bounded = bounded && std::abs(fresnel_tm(p, e1, e2)) <= 1.0 && std::abs(fresnel_te(p, e1, e2)) <= 1.0 &&
              std::abs(r.tm) <= 1.0 && std::abs(r.te) <= 1.0;
  }
  if (!bounded) failed.push_back("|r| <= 1");

  bool monotone = true;
  std::vector<const DrudeLorentzModel*> models{&bundled_au(), &bundled_psi()};
  std::vector<DrudeLorentzModel> passive(50);
  for (auto& m : passive) {
    m.omega_p = U(rng) < 0.5 ? 0.0 : 1e16 * U(rng);
    m.tau_D = 1e-15 + 1e-13 * U(rng);
    for (int j = 0; j < 4; ++j) m.oscillators.push_back({1e14 + 1e16 * U(rng), 1e32 * U(rng), 1e16 * U(rng)});
    models.push_back(&m);
  }
  const auto grid = validation_grid();
  for (const auto* m : models) {
    double prev = INFINITY;
    for (double xi : grid) {
      const double e = eval_imag_axis_causal(*m, xi);
      monotone = monotone && e <= prev && e >= 1.0;
      prev = e;
    }
  }
  if (!monotone) failed.push_back("eps(i xi) monotone");

  const auto flat_law = GradientLaw::power_law(2.754e-3, 100e-9, 4.0);
  HeightMap fs(Grid::Zero(500, 500), 50e-9, MapRole::Sphere), fp(Grid::Zero(300, 300), 50e-9, MapRole::Plate);
  RoughnessOptions ro;
  ro.n_mc = 10;
  const auto flat = roughness_eta({60e-9, 100e-9, 200e-9}, fs, fp, kR, flat_law, ro);
  for (double e : flat.eta)
    if (e != 1.0) failed.push_back("flat eta == 1");

  double kk_worst = 0.0;
  for (const auto* m : {&bundled_au(), &bundled_psi()}) {
    const auto s = tabulate_model(*m, 1e11, 1e19, 100);
    for (int i = 0; i <= 40; ++i) {
      const double xi = std::pow(10.0, 13.0 + 0.1 * i);
      kk_worst = std::max(kk_worst, std::abs(kk_transform(s, xi) / eval_imag_axis_causal(*m, xi) - 1.0));
    }
  }
  if (kk_worst > 5e-3) failed.push_back("KK within 0.5%");

  // fixed seeds must give identical bytes
  auto mc_bytes = [&] {
    const auto sph = synthetic_height_map(MapRole::Sphere, 400, 400, 50e-9, 4e-9, 60e-9, {0.03, 40e-9, 100e-9, 100e-9, -1.0}, 5);
    const auto pl = synthetic_height_map(MapRole::Plate, 200, 200, 25e-9, 2.2e-9, 40e-9, {0.02}, 6);
    RoughnessOptions r;
    r.n_mc = 12;
    r.seed = 99;
    PatchOptions q;
    q.n_mc = 12;
    q.seed = 99;
    const auto vs = synthetic_potential_map(300, 300, 50e-9, 3.5e-3, 200e-9, 7);
    const auto vp = synthetic_potential_map(200, 200, 25e-9, 2.4e-3, 200e-9, 8);
    const std::vector<double> g{80e-9, 100e-9, 120e-9};
    const auto rough = roughness_eta(g, sph.map, preprocess_peaks(pl.map).map, kR, flat_law, r);
    const auto patch = patch_gradient(g, vs, vp, kR, q, flat_law);
    const auto sims = simulate_run([&](double a) { return flat_law(a); }, CantileverParams::defaults(), SweepPlan{}, NoiseModel{}, 99);
    return io::correction_csv(rough) + io::shift_log_csv(rough) + io::correction_csv(patch) +
           io::shift_log_csv(patch) + io::sweeps_jsonl(sims.sweeps);
  };
  if (mc_bytes() != mc_bytes()) failed.push_back("byte determinism");

  std::string detail = fmt("|r|<=1 over 1e5 draws, monotone over %zu models, flat eta exact, KK worst %.2e, "
                           "Monte-Carlo outputs byte-identical",
                           models.size(), kk_worst);
  if (!failed.empty()) {
    detail = "failed:";
    for (const auto& f : failed) detail += " [" + f + "]";
  }
  return {failed.empty(), detail};
}

}  // namespace

int main() {
  std::setvbuf(stdout, nullptr, _IONBF, 0);
  struct Criterion {
    const char* id;
    const char* name;
    double limit_s;
    Outcome (*run)();
  };
  const Criterion criteria[] = {
      {"1", "ideal-conductor limit", 1.0, ideal_conductor},
      {"2", "gold baseline", 10.0, gold_baseline},
      {"3", "bare-dielectric reduction", 30.0, bare_reduction},
      {"3i", "gold sphere reading", 30.0, gold_sphere_info},
      {"4", "corrected reduction band", 600.0, corrected_band},
      {"5", "Methods closed forms", 10.0, closed_forms},
      {"6", "distance independence", 5.0, distance_independence},
      {"7", "end-to-end pipeline", 120.0, pipeline},
      {"8", "property suites", 120.0, properties},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = dt < c.limit_s;
    const bool ok = o.pass && in_time;
    const bool info = c.id[1] == 'i';
    if (!ok && !info) ++failures;
    std::printf("%s criterion %s (%s): %s [%.2f s, limit %.0f s%s]\n", info ? "INFO" : (ok ? "PASS" : "FAIL"), c.id,
                c.name, o.detail.c_str(), dt, c.limit_s, in_time ? "" : ", too slow");
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
