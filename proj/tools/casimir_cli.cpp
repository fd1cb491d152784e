// Command-line front end: casimir <subcommand> [options]
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "casimir/analysis.hpp"
#include "casimir/constants.hpp"
#include "casimir/dielectric.hpp"
#include "casimir/instrument.hpp"
#include "casimir/io.hpp"
#include "casimir/lifshitz.hpp"
#include "casimir/numerics/random.hpp"
#include "casimir/surfaces.hpp"

namespace fs = std::filesystem;
using casimir::io::Json;

namespace {

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out = ".";
  std::string window;
};

Json default_config() {
  return Json{
      {"lifshitz",
       {{"temperature", 296.0},
        {"sphere_radius", 77.9e-6},
        {"matsubara_tolerance", 1e-8},
        {"quadrature_tolerance", 1e-9},
        {"max_terms", 200000},
        {"zero_temperature", false}}},
      {"window", {{"a_min", 80e-9}, {"a_max", 120e-9}}},
      {"fit", {{"oscillators", 4}, {"multistart", 8}, {"max_iterations", 400}, {"crossover", 7.53e15}}},
      {"kk", {{"xi_min", 1e12}, {"xi_max", 1e17}, {"per_decade", 10}, {"min_decades", 6.0}}},
      {"gradient", {{"a_min", 50e-9}, {"a_max", 500e-9}, {"points", 46}, {"plate_only", false}}},
      {"corrections",
       {{"a_min", 60e-9},
        {"a_max", 200e-9},
        {"points", 15},
        {"n_mc", 100},
        {"min_gap", 30e-9},
        {"peak_cutoff", 30e-9},
        {"fit_sphere", true}}},
      {"simulate",
       {{"runs", 1},
        {"scale", 1.0},
        {"plan",
         {{"sweeps", 35},
          {"points", 34},
          {"a_start", 500e-9},
          {"a_end", 70e-9},
          {"a0", 1e-6},
          {"run_duration", 48.0 * 3600.0},
          {"v_ref", 0.02},
          {"a_ref", 100e-9}}},
        {"noise",
         {{"sigma_freq", 0.547},
          {"sigma_omega0", 0.222},
          {"omega0_drift_span", 2.0 * std::numbers::pi * 0.08},
          {"sigma_a_pz", 0.15e-9},
          {"sigma_v_rel", 1e-5},
          {"a0_drift_per_sweep", 0.2e-9},
          {"a0_walk", 0.3e-9}}}}},
      {"analysis",
       {{"calibration",
         {{"m", 1.871e-8},
          {"sigma_m", 0.036e-8},
          {"R", 77.9e-6},
          {"sigma_R", 0.8e-6},
          {"sigma_omega0", 0.222},
          {"sigma_freq", 0.547},
          {"distance_exponent", 4.0}}},
        {"screening", {{"max_delta_a0", 5e-9}, {"max_delta_delta_a0", 3e-9}}},
        {"single_sweep_sigma", 2.5e-9}}}};
}

/// Defaults, patched by --config, then by --window.
Json resolve_config(const Globals& g) {
  Json cfg = default_config();
  if (!g.config_path.empty()) {
    Json user;
    try {
      user = Json::parse(casimir::io::read_text(g.config_path));
    } catch (const Json::parse_error& e) {
      throw casimir::io::ParseError(g.config_path, 1, e.what());
    }
    if (!user.is_object()) throw casimir::ValidationError("config must be a JSON object");
    cfg.merge_patch(user);
  }
  if (!g.window.empty()) {
    const auto w = casimir::io::parse_window(g.window);
    cfg["window"] = {{"a_min", w.lo}, {"a_max", w.hi}};
  }
  return cfg;
}

casimir::LifshitzConfig lifshitz_config(const Json& cfg) {
  const auto& j = cfg.at("lifshitz");
  casimir::LifshitzConfig c;
  c.temperature = j.at("temperature").get<double>();
  c.sphere_radius = j.at("sphere_radius").get<double>();
  c.matsubara_tolerance = j.at("matsubara_tolerance").get<double>();
  c.quadrature_tolerance = j.at("quadrature_tolerance").get<double>();
  c.max_terms = j.at("max_terms").get<int>();
  c.zero_temperature = j.at("zero_temperature").get<bool>();
  c.validate();
  return c;
}

casimir::Window window_of(const Json& cfg) {
  casimir::Window w{cfg.at("window").at("a_min").get<double>(), cfg.at("window").at("a_max").get<double>()};
  if (!(w.lo > 0.0 && w.hi > w.lo)) throw casimir::ValidationError("window needs 0 < a_min < a_max");
  return w;
}

/// "au", "psi", "pc" (perfect conductor), a model JSON path, or spectrum:<csv>.
casimir::DielectricSource material(const std::string& spec) {
  using casimir::DielectricSource;
  if (spec == "au") return DielectricSource::model_kk(casimir::bundled_au(), "au");
  if (spec == "psi") return DielectricSource::model_kk(casimir::bundled_psi(), "psi");
  if (spec == "pc") return DielectricSource::perfect_conductor();
  if (spec.rfind("spectrum:", 0) == 0) {
    const auto path = spec.substr(9);
    return DielectricSource::spectrum(casimir::io::read_spectrum_csv(path), fs::path(path).stem().string());
  }
  return DielectricSource::model_kk(casimir::io::read_model(spec), fs::path(spec).stem().string());
}

std::vector<double> log_grid(double lo, double hi, int n) {
  if (n < 1 || !(lo > 0.0) || hi < lo) throw casimir::ValidationError("grid needs n >= 1 and 0 < min <= max");
  std::vector<double> g(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = n == 1 ? lo : lo * std::pow(hi / lo, double(i) / (n - 1));
  return g;
}

struct Context {
  Json config;
  casimir::io::Meta meta;
  fs::path out;

  void write(const std::string& name, std::string_view text) const { casimir::io::write_text(out / name, text); }
  void write_json(const std::string& name, Json body) const {
    body["meta"] = casimir::io::to_json(meta);
    write(name, body.dump(2) + "\n");
  }
};

Context make_context(const Globals& g, const std::string& command, Json cfg) {
  Context ctx;
  ctx.config = std::move(cfg);
  ctx.meta.command = command;
  ctx.meta.seed = g.seed;
  ctx.meta.config_hash = casimir::io::config_hash(ctx.config);
  ctx.out = g.out;
  ctx.write_json("config.resolved.json", Json{{"config", ctx.config}});
  return ctx;
}

// fit-dielectric ---------------------------------------------------------------

struct FitArgs {
  std::string spectrum, ellipsometry, literature;
  std::optional<int> oscillators;
};

int cmd_fit_dielectric(const Globals& g, const FitArgs& a) {
  auto cfg = resolve_config(g);
  if (a.oscillators) cfg["fit"]["oscillators"] = *a.oscillators;
  const auto ctx = make_context(g, "fit-dielectric", cfg);
  const auto& fc = ctx.config.at("fit");

  casimir::TabulatedSpectrum spectrum;
  if (!a.spectrum.empty()) {
    spectrum = casimir::io::read_spectrum_csv(a.spectrum);
  } else if (!a.ellipsometry.empty()) {
    for (const auto& p : casimir::io::parse_ellipsometry_csv(casimir::io::read_text(a.ellipsometry), a.ellipsometry)) {
      const auto eps = casimir::ellipsometry_to_epsilon(p);
      spectrum.points.push_back(
          {2.0 * std::numbers::pi * casimir::constants::c / p.wavelength, eps.real(), eps.imag()});
    }
    std::sort(spectrum.points.begin(), spectrum.points.end(),
              [](const auto& x, const auto& y) { return x.omega < y.omega; });
    spectrum.validate();
  } else {
    throw casimir::ValidationError("fit-dielectric needs --spectrum or --ellipsometry");
  }
  if (!a.literature.empty())
    spectrum = casimir::merge_with_literature(spectrum, casimir::io::read_spectrum_csv(a.literature),
                                              fc.at("crossover").get<double>());

  casimir::FitOptions opt;
  opt.seed = g.seed;
  opt.multistart = fc.at("multistart").get<int>();
  opt.max_iterations = fc.at("max_iterations").get<int>();
  const auto report = casimir::fit_model(spectrum, fc.at("oscillators").get<int>(), std::nullopt, opt);

  ctx.write_json("model.json",
                 Json{{"model", casimir::io::to_json(report.model)},
                      {"report",
                       {{"residual_norm", report.residual_norm},
                        {"iterations", report.iterations},
                        {"converged", report.converged},
                        {"boundary", report.boundary},
                        {"collapsed_oscillators", report.collapsed},
                        {"starts", report.starts},
                        {"residual_count", report.residual_count},
                        {"weighting", report.weighting}}}});
  std::printf("fit: %zu oscillators, residual %.6g, %s\n", report.model.oscillators.size(), report.residual_norm,
              report.converged ? "converged" : "NOT converged (best effort written)");
  return report.converged ? 0 : static_cast<int>(casimir::ErrorKind::Convergence);
}

// kk -----------------------------------------------------------------------------

struct KKArgs {
  std::string spectrum, material = "au";
};

int cmd_kk(const Globals& g, const KKArgs& a) {
  const auto ctx = make_context(g, "kk", resolve_config(g));
  const auto& kc = ctx.config.at("kk");
  const auto xi = log_grid(kc.at("xi_min").get<double>(), kc.at("xi_max").get<double>(),
                           static_cast<int>(std::lround(std::log10(kc.at("xi_max").get<double>() /
                                                                   kc.at("xi_min").get<double>()) *
                                                        kc.at("per_decade").get<double>())) +
                               1);
  casimir::KKOptions opt;
  opt.min_decades = kc.at("min_decades").get<double>();

  std::optional<casimir::DrudeLorentzModel> model;
  casimir::TabulatedSpectrum spectrum;
  if (!a.spectrum.empty()) {
    spectrum = casimir::io::read_spectrum_csv(a.spectrum);
  } else {
    if (a.material == "au") model = casimir::bundled_au();
    else if (a.material == "psi") model = casimir::bundled_psi();
    else model = casimir::io::read_model(a.material);
    spectrum = casimir::tabulate_model(*model, 1e9, 1e20, 400);
  }
  std::string csv = casimir::io::comment_line(ctx.meta) + "\n";
  csv += model ? "xi_rad_per_s,eps_kk,eps_model_causal,rel_diff\n" : "xi_rad_per_s,eps_kk\n";
  double worst = 0.0;
  for (double x : xi) {
    const double e = casimir::kk_transform(spectrum, x, opt);
    csv += casimir::io::format_double(x) + "," + casimir::io::format_double(e);
    if (model) {
      const double d = casimir::eval_imag_axis_causal(*model, x);
      worst = std::max(worst, std::abs(e / d - 1.0));
      csv += "," + casimir::io::format_double(d) + "," + casimir::io::format_double(e / d - 1.0);
    }
    csv += "\n";
  }
  ctx.write("kk.csv", csv);
  if (model) std::printf("kk: max relative deviation from the model %.3g%%\n", 100.0 * worst);
  return 0;
}

// gradient -------------------------------------------------------------------------

struct GradientArgs {
  std::string model_a = "au", model_b;
  std::string a_min, a_max;
  std::optional<int> points;
  bool plate_only = false;
};

int cmd_gradient(const Globals& g, const GradientArgs& a) {
  auto cfg = resolve_config(g);
  if (!a.a_min.empty()) cfg["gradient"]["a_min"] = casimir::io::parse_length(a.a_min);
  if (!a.a_max.empty()) cfg["gradient"]["a_max"] = casimir::io::parse_length(a.a_max);
  if (a.points) cfg["gradient"]["points"] = *a.points;
  if (a.plate_only) cfg["gradient"]["plate_only"] = true;
  cfg["gradient"]["model_a"] = a.model_a;
  cfg["gradient"]["model_b"] = a.model_b;
  const auto ctx = make_context(g, "gradient", cfg);
  const auto& gc = ctx.config.at("gradient");
  const auto lc = lifshitz_config(ctx.config);
  const auto grid = log_grid(gc.at("a_min").get<double>(), gc.at("a_max").get<double>(), gc.at("points").get<int>());
  for (double x : grid)
    if (x < casimir::kMinSeparation || x > casimir::kMaxSeparation)
      throw casimir::ValidationError("separation " + casimir::io::format_double(x) + " m outside [10 nm, 10 um]");

  const auto ma = material(a.model_a);
  const casimir::MaterialAssignment A{ma, ma, std::nullopt};
  if (a.model_b.empty()) {
    const auto curve = casimir::gradient_curve(grid, A, lc);
    ctx.write("gradient_a.csv", casimir::io::gradient_csv(curve, &ctx.meta));
    return 0;
  }
  const auto mb = material(a.model_b);
  const casimir::MaterialAssignment B{mb, gc.at("plate_only").get<bool>() ? ma : mb, std::nullopt};
  const auto red = casimir::reduction_curve(grid, A, B, lc, window_of(ctx.config));
  std::vector<casimir::GradientPoint> ca, cb;
  for (std::size_t i = 0; i < red.a.size(); ++i) {
    ca.push_back({red.a[i], red.grad_a[i], 0.0});
    cb.push_back({red.a[i], red.grad_b[i], 0.0});
  }
  ctx.write("gradient_a.csv", casimir::io::gradient_csv(ca, &ctx.meta));
  ctx.write("gradient_b.csv", casimir::io::gradient_csv(cb, &ctx.meta));
  ctx.write("reduction.csv", casimir::io::reduction_csv(red, &ctx.meta));
  ctx.write_json("summary.json", Json{{"window", {{"a_min_m", red.window.lo}, {"a_max_m", red.window.hi}}},
                                      {"window_mean", red.window_mean},
                                      {"window_points", red.window_points}});
  std::printf("reduction %s vs %s over %.0f-%.0f nm: %.3f%% (%d points)\n", a.model_b.c_str(), a.model_a.c_str(),
              red.window.lo * 1e9, red.window.hi * 1e9, 100.0 * red.window_mean, red.window_points);
  return 0;
}

// corrections ------------------------------------------------------------------------

struct CorrectionArgs {
  std::string sphere_map, plate_map, sphere_potential, plate_potential, model = "au";
  std::optional<int> n_mc;
};

int cmd_corrections(const Globals& g, const CorrectionArgs& a) {
  auto cfg = resolve_config(g);
  if (a.n_mc) cfg["corrections"]["n_mc"] = *a.n_mc;
  cfg["corrections"]["model"] = a.model;
  const auto ctx = make_context(g, "corrections", cfg);
  const auto& cc = ctx.config.at("corrections");
  const auto lc = lifshitz_config(ctx.config);
  const double R = lc.sphere_radius;
  const auto grid = log_grid(cc.at("a_min").get<double>(), cc.at("a_max").get<double>(), cc.at("points").get<int>());

  const auto m = material(a.model);
  const auto law = casimir::GradientLaw::from_lifshitz({m, m, std::nullopt}, lc);

  if (a.sphere_map.empty() != a.plate_map.empty())
    throw casimir::ValidationError("roughness needs both --sphere-map and --plate-map");
  if (a.sphere_potential.empty() != a.plate_potential.empty())
    throw casimir::ValidationError("patches need both --sphere-potential and --plate-potential");
  if (a.sphere_map.empty() && a.sphere_potential.empty())
    throw casimir::ValidationError("corrections needs height maps, potential maps, or both");

  if (!a.sphere_map.empty()) {
    auto sphere = casimir::io::to_height_map(casimir::io::read_map(a.sphere_map), casimir::MapRole::Sphere);
    if (cc.at("fit_sphere").get<bool>()) {
      const auto fit = casimir::fit_sphere(sphere);
      if (!fit.degenerate) sphere = fit.residual;
    }
    const auto plate = casimir::preprocess_peaks(
        casimir::io::to_height_map(casimir::io::read_map(a.plate_map), casimir::MapRole::Plate),
        cc.at("peak_cutoff").get<double>());
    if (plate.quality_warning)
      std::fprintf(stderr, "warning: %.1f%% of the plate map masked as peaks\n", 100.0 * plate.masked_fraction);
    casimir::RoughnessOptions ro;
    ro.n_mc = cc.at("n_mc").get<int>();
    ro.seed = g.seed;
    ro.min_gap = cc.at("min_gap").get<double>();
    const auto rough = casimir::roughness_eta(grid, sphere, plate.map, R, law, ro);
    ctx.write("roughness.csv", casimir::io::correction_csv(rough, &ctx.meta));
    ctx.write("roughness_log.csv", casimir::io::shift_log_csv(rough, &ctx.meta));
    std::printf("roughness: %d/%d shifts accepted\n", rough.n_accepted, rough.n_attempts);
  }
  if (!a.sphere_potential.empty()) {
    const auto vs = casimir::io::to_potential_map(casimir::io::read_map(a.sphere_potential));
    const auto vp = casimir::io::to_potential_map(casimir::io::read_map(a.plate_potential));
    casimir::PatchOptions po;
    po.n_mc = cc.at("n_mc").get<int>();
    po.seed = g.seed;
    const auto patch = casimir::patch_gradient(grid, vs, vp, R, po, law);
    ctx.write("patch.csv", casimir::io::correction_csv(patch, &ctx.meta));
    ctx.write("patch_log.csv", casimir::io::shift_log_csv(patch, &ctx.meta));
    std::printf("patch: %d/%d positions accepted\n", patch.n_accepted, patch.n_attempts);
  }
  return 0;
}

// simulate ----------------------------------------------------------------------------

struct SimulateArgs {
  std::string material = "au";
  std::optional<double> scale;
  std::optional<int> runs;
};

int cmd_simulate(const Globals& g, const SimulateArgs& a) {
  auto cfg = resolve_config(g);
  if (a.scale) cfg["simulate"]["scale"] = *a.scale;
  if (a.runs) cfg["simulate"]["runs"] = *a.runs;
  cfg["simulate"]["material"] = a.material;
  const auto ctx = make_context(g, "simulate", cfg);
  const auto& sc = ctx.config.at("simulate");
  const auto& pj = sc.at("plan");
  const auto& nj = sc.at("noise");
  const auto lc = lifshitz_config(ctx.config);

  casimir::SweepPlan plan;
  plan.sweeps = pj.at("sweeps").get<int>();
  plan.points = pj.at("points").get<int>();
  plan.a_start = pj.at("a_start").get<double>();
  plan.a_end = pj.at("a_end").get<double>();
  plan.a0 = pj.at("a0").get<double>();
  plan.run_duration = pj.at("run_duration").get<double>();
  plan.v_ref = pj.at("v_ref").get<double>();
  plan.a_ref = pj.at("a_ref").get<double>();
  casimir::NoiseModel noise;
  noise.sigma_freq = nj.at("sigma_freq").get<double>();
  noise.sigma_omega0 = nj.at("sigma_omega0").get<double>();
  noise.omega0_drift_span = nj.at("omega0_drift_span").get<double>();
  noise.sigma_a_pz = nj.at("sigma_a_pz").get<double>();
  noise.sigma_v_rel = nj.at("sigma_v_rel").get<double>();
  noise.a0_drift_per_sweep = nj.at("a0_drift_per_sweep").get<double>();
  noise.a0_walk = nj.at("a0_walk").get<double>();
  if (nj.contains("a0_jumps"))
    for (const auto& jmp : nj.at("a0_jumps")) noise.a0_jumps.emplace_back(jmp.at(0).get<int>(), jmp.at(1).get<double>());

  const auto m = material(a.material);
  const auto law = casimir::GradientLaw::from_lifshitz({m, m, std::nullopt}, lc, 40e-9, 1e-6, 24);
  const double scale = sc.at("scale").get<double>();
  const auto truth = [&](double x) { return scale * law(x); };
  const auto params = casimir::CantileverParams::defaults();
  const int runs = sc.at("runs").get<int>();
  if (runs < 1) throw casimir::ValidationError("simulate: runs must be >= 1");
  for (int r = 0; r < runs; ++r) {
    const auto run = casimir::simulate_run(truth, params, plan, noise,
                                           casimir::numerics::mix64(g.seed) + static_cast<std::uint64_t>(r),
                                           lc.sphere_radius);
    const auto name = runs == 1 ? std::string("sweeps.jsonl") : "sweeps_" + std::to_string(r) + ".jsonl";
    ctx.write(name, casimir::io::sweeps_jsonl(run.sweeps, &ctx.meta));
  }
  std::printf("simulate: %d run(s) of %d sweeps written to %s\n", runs, plan.sweeps, ctx.out.string().c_str());
  return 0;
}

// analyze ------------------------------------------------------------------------------

struct AnalyzeArgs {
  std::vector<std::string> records, reference;
};

casimir::RunAnalysis analyze_file(const std::string& path, const Json& ac) {
  const auto& cj = ac.at("calibration");
  casimir::PipelineCalibration cal;
  cal.m = cj.at("m").get<double>();
  cal.sigma_m = cj.at("sigma_m").get<double>();
  cal.R = cj.at("R").get<double>();
  cal.sigma_R = cj.at("sigma_R").get<double>();
  cal.sigma_omega0 = cj.at("sigma_omega0").get<double>();
  cal.sigma_freq = cj.at("sigma_freq").get<double>();
  cal.distance_exponent = cj.at("distance_exponent").get<double>();
  casimir::ScreeningRules rules;
  rules.max_delta_a0 = ac.at("screening").at("max_delta_a0").get<double>();
  rules.max_delta_delta_a0 = ac.at("screening").at("max_delta_delta_a0").get<double>();
  casimir::DriftOptions drift;
  drift.single_sweep_sigma = ac.at("single_sweep_sigma").get<double>();
  return casimir::analyze_run(casimir::io::read_sweeps(path), cal, rules, drift);
}

std::string rejection_csv(const std::vector<casimir::RunAnalysis>& runs, const std::vector<std::string>& names,
                          const casimir::io::Meta& meta) {
  std::string out = casimir::io::comment_line(meta) + "\nfile,sweep,accepted,a0_m,delta_a0_m,reason\n";
  for (std::size_t r = 0; r < runs.size(); ++r)
    for (const auto& s : runs[r].runset.status)
      out += names[r] + "," + std::to_string(s.index) + "," + (s.accepted ? "1" : "0") + "," +
             casimir::io::format_double(s.a0) + "," + casimir::io::format_double(s.delta_a0) + "," + s.reason + "\n";
  return out;
}

int cmd_analyze(const Globals& g, const AnalyzeArgs& a) {
  if (a.reference.empty()) throw casimir::ValidationError("analyze needs at least one --reference file");
  const auto ctx = make_context(g, "analyze", resolve_config(g));
  const auto& ac = ctx.config.at("analysis");

  std::vector<casimir::RunAnalysis> ref, sample;
  for (const auto& f : a.reference) ref.push_back(analyze_file(f, ac));
  for (const auto& f : a.records) sample.push_back(analyze_file(f, ac));
  const bool self_check = sample.empty();

  const auto curve_ref = casimir::pooled_curve(ref);
  const auto curve_sample = self_check ? curve_ref : casimir::pooled_curve(sample);
  const auto report = casimir::relative_reduction(curve_sample, curve_ref, window_of(ctx.config));

  ctx.write("curve_reference.csv", casimir::io::averaged_curve_csv(curve_ref, &ctx.meta));
  if (!self_check) ctx.write("curve_sample.csv", casimir::io::averaged_curve_csv(curve_sample, &ctx.meta));
  std::vector<casimir::RunAnalysis> all = sample;
  all.insert(all.end(), ref.begin(), ref.end());
  std::vector<std::string> names = a.records;
  names.insert(names.end(), a.reference.begin(), a.reference.end());
  ctx.write("rejections.csv", rejection_csv(all, names, ctx.meta));

  Json body{{"mode", self_check ? "self-check" : "sample-vs-reference"}, {"reduction", casimir::io::to_json(report)}};
  Json rejected = Json::array();
  for (std::size_t r = 0; r < all.size(); ++r)
    for (const auto& s : all[r].runset.status)
      if (!s.accepted) rejected.push_back({{"file", names[r]}, {"sweep", s.index}, {"reason", s.reason}});
  body["rejections"] = rejected;
  const auto& budget_runs = self_check ? ref : sample;
  try {
    const auto b = casimir::error_budget(budget_runs.front().samples);
    body["error_budget_100nm"] = {{"radius", b.radius},       {"mass", b.mass},         {"voltages", b.voltages},
                                  {"frequency", b.frequency}, {"omega0", b.omega0},     {"distance", b.distance},
                                  {"total", b.total()}};
  } catch (const casimir::RangeError&) {
    body["error_budget_100nm"] = nullptr;
  }
  ctx.write_json("reduction.json", body);
  std::printf("%s: window %.0f-%.0f nm mean %.3f%% +- %.3f%% (%d points)\n",
              self_check ? "self-check" : "reduction", report.window.lo * 1e9, report.window.hi * 1e9,
              100.0 * report.window_mean, 100.0 * report.window_sigma, report.window_points);
  return 0;
}

// report ---------------------------------------------------------------------------------

struct ReportArgs {
  std::string gradient_a, gradient_b, rough_a, rough_b, patch_a, patch_b;
};

int cmd_report(const Globals& g, const ReportArgs& a) {
  const auto ctx = make_context(g, "report", resolve_config(g));
  const auto ga = casimir::io::parse_gradient_csv(casimir::io::read_text(a.gradient_a), a.gradient_a);
  const auto gb = casimir::io::parse_gradient_csv(casimir::io::read_text(a.gradient_b), a.gradient_b);
  std::vector<double> grid;
  for (const auto& p : ga) grid.push_back(p.a);
  auto corr = [&](const std::string& path) {
    return path.empty() ? casimir::unit_correction(grid)
                        : casimir::io::parse_correction_csv(casimir::io::read_text(path), path);
  };
  const auto combined =
      casimir::combine_corrections(ga, gb, corr(a.rough_a), corr(a.rough_b), corr(a.patch_a), corr(a.patch_b));
  const auto w = window_of(ctx.config);
  int n = 0;
  const double mean = casimir::window_mean(combined.a, combined.delta, w, &n);
  const double lo = casimir::window_mean(combined.a, combined.delta_lo, w);
  const double hi = casimir::window_mean(combined.a, combined.delta_hi, w);
  ctx.write("combined.csv", casimir::io::combined_csv(combined, &ctx.meta));
  ctx.write_json("summary.json", Json{{"window", {{"a_min_m", w.lo}, {"a_max_m", w.hi}}},
                                      {"window_mean", mean},
                                      {"band_lo", lo},
                                      {"band_hi", hi},
                                      {"window_points", n}});
  std::printf("combined reduction over %.0f-%.0f nm: %.3f%% (band %.3f%% .. %.3f%%)\n", w.lo * 1e9, w.hi * 1e9,
              100.0 * mean, 100.0 * lo, 100.0 * hi);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Casimir force-gradient toolkit: dielectric fits, Lifshitz gradients, surface corrections, "
               "sweep simulation and analysis"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "JSON config patched over the defaults")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "RNG seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--window", g.window, "averaging window a_min,a_max (e.g. 80nm,120nm)");

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit-dielectric", "fit a Drude-Lorentz model to a spectrum");
  c_fit->add_option("--spectrum", fit.spectrum, "spectrum CSV")->check(CLI::ExistingFile);
  c_fit->add_option("--ellipsometry", fit.ellipsometry, "ellipsometry CSV")->check(CLI::ExistingFile);
  c_fit->add_option("--literature", fit.literature, "literature spectrum merged above the crossover")
      ->check(CLI::ExistingFile);
  c_fit->add_option("--oscillators", fit.oscillators, "number of Lorentz oscillators");

  KKArgs kk;
  auto* c_kk = app.add_subcommand("kk", "eps(i xi) by Kramers-Kronig");
  c_kk->add_option("--spectrum", kk.spectrum, "spectrum CSV")->check(CLI::ExistingFile);
  c_kk->add_option("--material", kk.material, "au, psi or a model JSON (when no spectrum)");

  GradientArgs grad;
  auto* c_grad = app.add_subcommand("gradient", "Lifshitz/PFA gradient curve and reduction");
  c_grad->add_option("--model-a", grad.model_a, "reference material: au, psi, pc, model JSON or spectrum:<csv>");
  c_grad->add_option("--model-b", grad.model_b, "sample material");
  c_grad->add_option("--a-min", grad.a_min, "smallest separation (e.g. 50nm)");
  c_grad->add_option("--a-max", grad.a_max, "largest separation");
  c_grad->add_option("--points", grad.points, "log-spaced grid points");
  c_grad->add_flag("--plate-only", grad.plate_only, "sample material on the plate only");

  CorrectionArgs corr;
  auto* c_corr = app.add_subcommand("corrections", "Monte-Carlo roughness and patch corrections");
  c_corr->add_option("--sphere-map", corr.sphere_map, "sphere height map")->check(CLI::ExistingFile);
  c_corr->add_option("--plate-map", corr.plate_map, "plate height map")->check(CLI::ExistingFile);
  c_corr->add_option("--sphere-potential", corr.sphere_potential, "sphere potential map")->check(CLI::ExistingFile);
  c_corr->add_option("--plate-potential", corr.plate_potential, "plate potential map")->check(CLI::ExistingFile);
  c_corr->add_option("--model", corr.model, "material of the smooth-surface law");
  c_corr->add_option("--n-mc", corr.n_mc, "accepted Monte-Carlo positions");

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "synthetic distance sweeps");
  c_sim->add_option("--material", sim.material, "material of the true law");
  c_sim->add_option("--scale", sim.scale, "factor on the true law (0.96 plants -4%)");
  c_sim->add_option("--runs", sim.runs, "independent runs");

  AnalyzeArgs an;
  auto* c_an = app.add_subcommand("analyze", "sweep records to averaged curves and reduction");
  c_an->add_option("--records", an.records, "sample run files (JSON Lines)")->check(CLI::ExistingFile);
  c_an->add_option("--reference", an.reference, "reference run files")->check(CLI::ExistingFile);

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "combine gradients and corrections into the corrected reduction");
  c_rep->add_option("--gradient-a", rep.gradient_a, "reference gradient CSV")->required()->check(CLI::ExistingFile);
  c_rep->add_option("--gradient-b", rep.gradient_b, "sample gradient CSV")->required()->check(CLI::ExistingFile);
  c_rep->add_option("--rough-a", rep.rough_a, "reference roughness CSV")->check(CLI::ExistingFile);
  c_rep->add_option("--rough-b", rep.rough_b, "sample roughness CSV")->check(CLI::ExistingFile);
  c_rep->add_option("--patch-a", rep.patch_a, "reference patch CSV")->check(CLI::ExistingFile);
  c_rep->add_option("--patch-b", rep.patch_b, "sample patch CSV")->check(CLI::ExistingFile);

  for (auto* sub : {c_fit, c_kk, c_grad, c_corr, c_sim, c_an, c_rep}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(casimir::ErrorKind::Validation);
  }

  try {
    if (*c_fit) return cmd_fit_dielectric(g, fit);
    if (*c_kk) return cmd_kk(g, kk);
    if (*c_grad) return cmd_gradient(g, grad);
    if (*c_corr) return cmd_corrections(g, corr);
    if (*c_sim) return cmd_simulate(g, sim);
    if (*c_an) return cmd_analyze(g, an);
    if (*c_rep) return cmd_report(g, rep);
  } catch (const casimir::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.kind());
  } catch (const Json::exception& e) {
    std::fprintf(stderr, "error: config: %s\n", e.what());
    return static_cast<int>(casimir::ErrorKind::Validation);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
