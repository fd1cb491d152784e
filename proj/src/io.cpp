#include "casimir/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace casimir::io {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

bool to_double(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

double number(std::string_view s, const std::string& source, std::size_t line) {
  double v = 0.0;
  if (!to_double(s, v)) throw ParseError(source, line, "not a number: '" + std::string(s) + "'");
  return v;
}

/// Data lines of a CSV with a required header; comment lines start with '#'.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string_view>> rows;
  std::vector<std::size_t> line_numbers;
};

Table parse_table(std::string_view text, const std::string& source, const std::vector<std::string>& required) {
  Table t;
  std::size_t line_no = 0, pos = 0;
  bool have_header = false;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    auto cells = split(line, ',');
    if (!have_header) {
      for (auto c : cells) t.header.emplace_back(c);
      for (std::size_t i = 0; i < required.size(); ++i)
        if (i >= t.header.size() || t.header[i] != required[i])
          throw ParseError(source, line_no, "expected column '" + required[i] + "'");
      have_header = true;
    } else {
      if (cells.size() != t.header.size())
        throw ParseError(source, line_no,
                         "expected " + std::to_string(t.header.size()) + " fields, got " + std::to_string(cells.size()));
      t.rows.push_back(std::move(cells));
      t.line_numbers.push_back(line_no);
    }
    if (end == text.size()) break;
  }
  if (!have_header) throw ParseError(source, line_no, "empty input, no header line");
  if (t.rows.empty()) throw ParseError(source, line_no, "no data rows");
  return t;
}

std::string header_block(const Meta* meta) { return meta ? comment_line(*meta) + "\n" : std::string(); }

std::vector<double> numbers(const Json& j, const char* key) {
  if (!j.contains(key)) return {};
  return j.at(key).get<std::vector<double>>();
}

}  // namespace

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename to " + path.string() + ": " + ec.message());
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t config_hash(const Json& config) { return fnv1a(config.dump()); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

Json to_json(const Meta& meta) {
  return Json{{"version", meta.version},
              {"command", meta.command},
              {"config_hash", hex64(meta.config_hash)},
              {"seed", meta.seed}};
}

std::string comment_line(const Meta& meta) {
  return "# casimir " + meta.version + " command=" + meta.command + " config=" + hex64(meta.config_hash) +
         " seed=" + std::to_string(meta.seed);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

// Spectra and models ---------------------------------------------------------

TabulatedSpectrum parse_spectrum_csv(std::string_view text, const std::string& source) {
  const auto t = parse_table(text, source, {"omega_rad_per_s", "eps_real", "eps_imag"});
  const bool has_prov = t.header.size() > 3 && t.header[3] == "provenance";
  TabulatedSpectrum s;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto line = t.line_numbers[r];
    SpectrumPoint p;
    p.omega = number(row[0], source, line);
    p.eps_real = number(row[1], source, line);
    p.eps_imag = number(row[2], source, line);
    if (has_prov) {
      try {
        p.provenance = provenance_from_string(row[3]);
      } catch (const Error& e) {
        throw ParseError(source, line, e.what());
      }
    }
    s.points.push_back(p);
  }
  s.validate();
  return s;
}

TabulatedSpectrum read_spectrum_csv(const std::filesystem::path& path) {
  return parse_spectrum_csv(read_text(path), path.string());
}

std::string spectrum_csv(const TabulatedSpectrum& spectrum, const Meta* meta) {
  std::string out = header_block(meta) + "omega_rad_per_s,eps_real,eps_imag,provenance\n";
  for (const auto& p : spectrum.points)
    out += format_double(p.omega) + "," + format_double(p.eps_real) + "," + format_double(p.eps_imag) + "," +
           std::string(to_string(p.provenance)) + "\n";
  return out;
}

std::vector<EllipsometricPoint> parse_ellipsometry_csv(std::string_view text, const std::string& source) {
  const auto t = parse_table(text, source, {"wavelength_m", "psi_rad", "delta_rad", "phi_rad"});
  std::vector<EllipsometricPoint> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const auto line = t.line_numbers[r];
    out.push_back({number(row[0], source, line), number(row[1], source, line), number(row[2], source, line),
                   number(row[3], source, line)});
  }
  return out;
}

Json to_json(const DrudeLorentzModel& model) {
  Json osc = Json::array();
  for (const auto& o : model.oscillators) osc.push_back({{"omega", o.omega}, {"xi", o.strength}, {"gamma", o.gamma}});
  return Json{{"omega_p", model.omega_p}, {"tau_D", model.tau_D}, {"oscillators", osc}};
}

DrudeLorentzModel model_from_json(const Json& j) {
  DrudeLorentzModel m;
  try {
    m.omega_p = j.value("omega_p", 0.0);
    m.tau_D = j.value("tau_D", 1.0);
    if (j.contains("oscillators"))
      for (const auto& o : j.at("oscillators"))
        m.oscillators.push_back({o.at("omega").get<double>(), o.at("xi").get<double>(), o.at("gamma").get<double>()});
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("model JSON: ") + e.what());
  }
  m.validate();
  return m;
}

DrudeLorentzModel read_model(const std::filesystem::path& path) {
  const auto text = read_text(path);
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string(), 1, e.what());
  }
  if (j.contains("model")) return model_from_json(j.at("model"));
  return model_from_json(j);
}

// Curves ---------------------------------------------------------------------

std::string gradient_csv(const std::vector<GradientPoint>& curve, const Meta* meta) {
  std::string out = header_block(meta) + "a_m,dFda_N_per_m,rel_err\n";
  for (const auto& p : curve)
    out += format_double(p.a) + "," + format_double(p.value) + "," + format_double(p.rel_err) + "\n";
  return out;
}

std::vector<GradientPoint> parse_gradient_csv(std::string_view text, const std::string& source) {
  const auto t = parse_table(text, source, {"a_m", "dFda_N_per_m", "rel_err"});
  std::vector<GradientPoint> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto line = t.line_numbers[r];
    out.push_back({number(t.rows[r][0], source, line), number(t.rows[r][1], source, line),
                   number(t.rows[r][2], source, line)});
  }
  return out;
}

std::string reduction_csv(const ReductionCurve& curve, const Meta* meta) {
  std::string out = header_block(meta) + "a_m,dFda_a_N_per_m,dFda_b_N_per_m,delta\n";
  for (std::size_t i = 0; i < curve.a.size(); ++i)
    out += format_double(curve.a[i]) + "," + format_double(curve.grad_a[i]) + "," + format_double(curve.grad_b[i]) +
           "," + format_double(curve.delta[i]) + "\n";
  return out;
}

std::string averaged_curve_csv(const AveragedCurve& curve, const Meta* meta) {
  std::string out = header_block(meta) + "a_m,value,sigma\n";
  for (std::size_t i = 0; i < curve.a.size(); ++i)
    out += format_double(curve.a[i]) + "," + format_double(curve.value[i]) + "," + format_double(curve.sigma[i]) +
           "\n";
  return out;
}

Json to_json(const ReductionReport& r) {
  return Json{{"window", {{"a_min_m", r.window.lo}, {"a_max_m", r.window.hi}}},
              {"window_mean", r.window_mean},
              {"window_sigma", r.window_sigma},
              {"window_points", r.window_points},
              {"sample_groups", r.sample_groups},
              {"reference_groups", r.reference_groups},
              {"a_m", r.a},
              {"delta", r.delta},
              {"sigma", r.sigma},
              {"histogram", {{"edges", r.histogram.edges}, {"counts", r.histogram.counts}}}};
}

Json to_json(const RunSet& rs) {
  Json arr = Json::array();
  for (const auto& s : rs.status) {
    Json j{{"index", s.index}, {"accepted", s.accepted}};
    if (s.reason != kReasonA0Fit) {
      j["a0_m"] = s.a0;
      j["sigma_a0_m"] = s.sigma_a0;
      j["delta_a0_m"] = s.delta_a0;
    }
    if (!s.reason.empty()) j["reason"] = s.reason;
    arr.push_back(std::move(j));
  }
  return arr;
}

// Maps -----------------------------------------------------------------------

namespace {

struct MapHeader {
  Eigen::Index nx = 0, ny = 0;
  double pitch = 0.0;
  std::string unit;
};

MapHeader parse_map_header(std::string_view line, const std::string& source, std::size_t line_no) {
  MapHeader h;
  try {
    const auto j = Json::parse(line);
    h.nx = j.at("nx").get<Eigen::Index>();
    h.ny = j.at("ny").get<Eigen::Index>();
    h.pitch = j.at("pitch_m").get<double>();
    h.unit = j.value("unit", std::string("m"));
  } catch (const Json::exception& e) {
    throw ParseError(source, line_no, std::string("map header: ") + e.what());
  }
  if (h.nx < 1 || h.ny < 1 || !(h.pitch > 0.0))
    throw ParseError(source, line_no, "map header needs nx, ny >= 1 and pitch_m > 0");
  if (h.unit != "m" && h.unit != "V") throw ParseError(source, line_no, "map unit must be 'm' or 'V'");
  return h;
}

std::string header_json(const MapFile& map) {
  return Json{{"nx", map.values.cols()}, {"ny", map.values.rows()}, {"pitch_m", map.pitch}, {"unit", map.unit}}
      .dump();
}

}  // namespace

MapFile parse_map(std::string_view bytes, const std::string& source) {
  MapFile out;
  if (bytes.substr(0, kBinaryMapMagic.size()) == kBinaryMapMagic) {
    bytes.remove_prefix(kBinaryMapMagic.size());
    const auto nl = bytes.find('\n');
    if (nl == std::string_view::npos) throw ParseError(source, 2, "missing map header");
    const auto h = parse_map_header(bytes.substr(0, nl), source, 2);
    bytes.remove_prefix(nl + 1);
    const auto count = static_cast<std::size_t>(h.nx * h.ny);
    if (bytes.size() != count * sizeof(double))
      throw ParseError(source, 3,
                       "expected " + std::to_string(count * sizeof(double)) + " bytes of data, got " +
                           std::to_string(bytes.size()));
    out.values.resize(h.ny, h.nx);
    for (Eigen::Index iy = 0; iy < h.ny; ++iy)
      for (Eigen::Index ix = 0; ix < h.nx; ++ix) {
        std::uint64_t raw = 0;
        std::memcpy(&raw, bytes.data() + (iy * h.nx + ix) * sizeof(double), sizeof raw);
        if constexpr (std::endian::native == std::endian::big) raw = __builtin_bswap64(raw);
        out.values(iy, ix) = std::bit_cast<double>(raw);
      }
    out.pitch = h.pitch;
    out.unit = h.unit;
    return out;
  }

  std::size_t pos = 0, line_no = 0;
  auto next_line = [&](std::string_view& line) {
    while (pos < bytes.size()) {
      const auto end = std::min(bytes.find('\n', pos), bytes.size());
      line = trim(bytes.substr(pos, end - pos));
      pos = end + 1;
      ++line_no;
      if (!line.empty() && line.front() != '#') return true;
    }
    return false;
  };
  std::string_view line;
  if (!next_line(line)) throw ParseError(source, line_no, "empty map file");
  const auto h = parse_map_header(line, source, line_no);
  out.values.resize(h.ny, h.nx);
  for (Eigen::Index iy = 0; iy < h.ny; ++iy) {
    if (!next_line(line))
      throw ParseError(source, line_no, "expected " + std::to_string(h.ny) + " rows, got " + std::to_string(iy));
    const auto cells = split_ws(line);
    if (static_cast<Eigen::Index>(cells.size()) != h.nx)
      throw ParseError(source, line_no,
                       "expected " + std::to_string(h.nx) + " values, got " + std::to_string(cells.size()));
    for (Eigen::Index ix = 0; ix < h.nx; ++ix)
      out.values(iy, ix) = number(cells[static_cast<std::size_t>(ix)], source, line_no);
  }
  if (next_line(line)) throw ParseError(source, line_no, "trailing data after the last row");
  out.pitch = h.pitch;
  out.unit = h.unit;
  return out;
}

MapFile read_map(const std::filesystem::path& path) { return parse_map(read_text(path), path.string()); }

std::string map_text(const MapFile& map) {
  std::string out = header_json(map) + "\n";
  for (Eigen::Index iy = 0; iy < map.values.rows(); ++iy) {
    for (Eigen::Index ix = 0; ix < map.values.cols(); ++ix) {
      if (ix) out += ' ';
      out += format_double(map.values(iy, ix));
    }
    out += '\n';
  }
  return out;
}

std::string map_binary(const MapFile& map) {
  std::string out(kBinaryMapMagic);
  out += header_json(map) + "\n";
  for (Eigen::Index iy = 0; iy < map.values.rows(); ++iy)
    for (Eigen::Index ix = 0; ix < map.values.cols(); ++ix) {
      auto raw = std::bit_cast<std::uint64_t>(map.values(iy, ix));
      if constexpr (std::endian::native == std::endian::big) raw = __builtin_bswap64(raw);
      char buf[sizeof raw];
      std::memcpy(buf, &raw, sizeof raw);
      out.append(buf, sizeof raw);
    }
  return out;
}

HeightMap to_height_map(const MapFile& file, MapRole role) {
  if (file.unit != "m") throw ValidationError("height map must be in metres, got unit '" + file.unit + "'");
  return HeightMap(file.values, file.pitch, role);
}

PotentialMap to_potential_map(const MapFile& file) {
  if (file.unit != "V") throw ValidationError("potential map must be in volts, got unit '" + file.unit + "'");
  return PotentialMap(file.values, file.pitch);
}

// Corrections ----------------------------------------------------------------

std::string correction_csv(const CorrectionResult& r, const Meta* meta) {
  std::string out = header_block(meta);
  out += "# n_accepted=" + std::to_string(r.n_accepted) + " n_attempts=" + std::to_string(r.n_attempts) + "\n";
  if (!r.note.empty()) out += "# " + r.note + "\n";
  const bool patch = !r.gradient.empty();
  out += patch ? "a_m,eta,band_lo,band_hi,gradient_N_per_m,gradient_lo,gradient_hi\n" : "a_m,eta,band_lo,band_hi\n";
  for (std::size_t i = 0; i < r.a_grid.size(); ++i) {
    out += format_double(r.a_grid[i]) + "," + format_double(r.eta[i]) + "," + format_double(r.band_lo[i]) + "," +
           format_double(r.band_hi[i]);
    if (patch)
      out += "," + format_double(r.gradient[i]) + "," + format_double(r.gradient_lo[i]) + "," +
             format_double(r.gradient_hi[i]);
    out += "\n";
  }
  return out;
}

CorrectionResult parse_correction_csv(std::string_view text, const std::string& source) {
  const auto t = parse_table(text, source, {"a_m", "eta", "band_lo", "band_hi"});
  const bool patch = t.header.size() >= 7;
  CorrectionResult r;
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    const auto& row = t.rows[k];
    const auto line = t.line_numbers[k];
    r.a_grid.push_back(number(row[0], source, line));
    r.eta.push_back(number(row[1], source, line));
    r.band_lo.push_back(number(row[2], source, line));
    r.band_hi.push_back(number(row[3], source, line));
    if (patch) {
      r.gradient.push_back(number(row[4], source, line));
      r.gradient_lo.push_back(number(row[5], source, line));
      r.gradient_hi.push_back(number(row[6], source, line));
    }
  }
  // counts from the comment line, when present
  const auto p = text.find("# n_accepted=");
  if (p != std::string_view::npos) {
    std::istringstream ss(std::string(text.substr(p + 13, text.find('\n', p) - p - 13)));
    std::string rest;
    ss >> r.n_accepted >> rest;
    if (rest.rfind("n_attempts=", 0) == 0) r.n_attempts = std::stoi(rest.substr(11));
  }
  return r;
}

std::string shift_log_csv(const CorrectionResult& r, const Meta* meta) {
  std::string out = header_block(meta) + "index,x_m,y_m,accepted,min_gap_m,reason\n";
  for (const auto& s : r.log)
    out += std::to_string(s.index) + "," + format_double(s.x) + "," + format_double(s.y) + "," +
           (s.accepted ? "1" : "0") + "," + format_double(s.min_gap) + "," + s.reason + "\n";
  return out;
}

std::string combined_csv(const CombinedReduction& c, const Meta* meta) {
  std::string out = header_block(meta) + "a_m,delta,delta_lo,delta_hi\n";
  for (std::size_t i = 0; i < c.a.size(); ++i)
    out += format_double(c.a[i]) + "," + format_double(c.delta[i]) + "," + format_double(c.delta_lo[i]) + "," +
           format_double(c.delta_hi[i]) + "\n";
  return out;
}

// Sweep records --------------------------------------------------------------

Json to_json(const SweepRecord& s) {
  Json j{{"version", s.version}, {"index", s.index}, {"omega0_cal", s.omega0_cal}, {"t_cal", s.t_cal},
         {"truncated", s.truncated}};
  std::vector<double> a, w, vac, vex, t, sw, sac, sex, sa;
  for (const auto& p : s.points) {
    a.push_back(p.a_pz);
    w.push_back(p.delta_omega);
    vac.push_back(p.v_ac);
    vex.push_back(p.v_ex);
    t.push_back(p.t);
    sw.push_back(p.sigma_delta_omega);
    sac.push_back(p.sigma_v_ac);
    sex.push_back(p.sigma_v_ex);
    sa.push_back(p.sigma_a_pz);
  }
  j["a_pz_m"] = a;
  j["delta_omega_rad_s"] = w;
  j["V_ac"] = vac;
  j["V_ex"] = vex;
  j["t_s"] = t;
  j["sigma_delta_omega_rad_s"] = sw;
  j["sigma_V_ac"] = sac;
  j["sigma_V_ex"] = sex;
  j["sigma_a_pz_m"] = sa;
  if (s.a0_true) j["a0_true"] = *s.a0_true;
  return j;
}

SweepRecord sweep_from_json(const Json& j) {
  SweepRecord s;
  s.version = j.value("version", kSweepRecordVersion);
  s.index = j.at("index").get<int>();
  s.omega0_cal = j.at("omega0_cal").get<double>();
  s.t_cal = j.value("t_cal", 0.0);
  s.truncated = j.value("truncated", false);
  if (j.contains("a0_true") && !j.at("a0_true").is_null()) s.a0_true = j.at("a0_true").get<double>();
  const auto a = numbers(j, "a_pz_m"), w = numbers(j, "delta_omega_rad_s"), vac = numbers(j, "V_ac"),
             vex = numbers(j, "V_ex"), t = numbers(j, "t_s");
  const auto sw = numbers(j, "sigma_delta_omega_rad_s"), sac = numbers(j, "sigma_V_ac"),
             sex = numbers(j, "sigma_V_ex"), sa = numbers(j, "sigma_a_pz_m");
  const auto n = a.size();
  for (const auto* v : {&w, &vac, &vex, &t})
    if (v->size() != n) throw ValidationError("sweep " + std::to_string(s.index) + ": array lengths differ");
  for (const auto* v : {&sw, &sac, &sex, &sa})
    if (!v->empty() && v->size() != n)
      throw ValidationError("sweep " + std::to_string(s.index) + ": error array lengths differ");
  auto at = [](const std::vector<double>& v, std::size_t i) { return v.empty() ? 0.0 : v[i]; };
  for (std::size_t i = 0; i < n; ++i)
    s.points.push_back({a[i], w[i], vac[i], vex[i], t[i], at(sw, i), at(sac, i), at(sex, i), at(sa, i)});
  return s;
}

std::vector<SweepRecord> parse_sweeps(std::string_view text, const std::string& source) {
  std::vector<SweepRecord> out;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ParseError(source, line_no, e.what());
    }
    if (j.contains("meta") && !j.contains("index")) continue;
    try {
      out.push_back(sweep_from_json(j));
    } catch (const Json::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  if (out.empty()) throw ParseError(source, line_no, "no sweep records");
  return out;
}

std::vector<SweepRecord> read_sweeps(const std::filesystem::path& path) {
  return parse_sweeps(read_text(path), path.string());
}

std::string sweeps_jsonl(const std::vector<SweepRecord>& sweeps, const Meta* meta) {
  std::string out;
  if (meta) out += Json{{"meta", to_json(*meta)}}.dump() + "\n";
  for (const auto& s : sweeps) out += to_json(s).dump() + "\n";
  return out;
}

double parse_length(std::string_view text) {
  auto s = trim(text);
  double scale = 1.0;
  auto ends_with = [&](std::string_view suffix) {
    return s.size() > suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
  };
  if (ends_with("nm")) {
    scale = 1e-9;
    s.remove_suffix(2);
  } else if (ends_with("um")) {
    scale = 1e-6;
    s.remove_suffix(2);
  } else if (ends_with("\xC2\xB5m")) {  // micro sign
    scale = 1e-6;
    s.remove_suffix(3);
  } else if (ends_with("mm")) {
    scale = 1e-3;
    s.remove_suffix(2);
  } else if (ends_with("m")) {
    s.remove_suffix(1);
  }
  double v = 0.0;
  if (!to_double(s, v)) throw ValidationError("cannot parse length '" + std::string(text) + "'");
  return v * scale;
}

Window parse_window(std::string_view text) {
  const auto parts = split(text, ',');
  if (parts.size() != 2) throw ValidationError("window must be 'a_min,a_max', got '" + std::string(text) + "'");
  Window w{parse_length(parts[0]), parse_length(parts[1])};
  if (!(w.lo > 0.0 && w.hi > w.lo)) throw ValidationError("window needs 0 < a_min < a_max");
  return w;
}

}  // namespace casimir::io
