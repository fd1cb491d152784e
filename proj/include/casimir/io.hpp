#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "casimir/analysis.hpp"
#include "casimir/dielectric.hpp"
#include "casimir/lifshitz.hpp"
#include "casimir/records.hpp"
#include "casimir/surfaces.hpp"

namespace casimir::io {

using Json = nlohmann::json;

/// Malformed input; the message carries the source name and line.
class ParseError : public IoError {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : IoError(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

std::string read_text(const std::filesystem::path& path);
/// Writes atomically enough for our purposes: to path.tmp, then rename.
void write_text(const std::filesystem::path& path, std::string_view text);

/// Provenance stamped into every output file.
struct Meta {
  std::string version = CASIMIR_VERSION;
  std::string command;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
};

std::uint64_t fnv1a(std::string_view bytes);
/// FNV-1a of the canonical (key-sorted, compact) dump.
std::uint64_t config_hash(const Json& config);
std::string hex64(std::uint64_t v);
Json to_json(const Meta& meta);
/// "# casimir <version> command=<cmd> config=<hash> seed=<seed>"
std::string comment_line(const Meta& meta);

/// Shortest round-trip decimal form.
std::string format_double(double v);

// Spectra and models ---------------------------------------------------------

TabulatedSpectrum parse_spectrum_csv(std::string_view text, const std::string& source = "<spectrum>");
TabulatedSpectrum read_spectrum_csv(const std::filesystem::path& path);
std::string spectrum_csv(const TabulatedSpectrum& spectrum, const Meta* meta = nullptr);

std::vector<EllipsometricPoint> parse_ellipsometry_csv(std::string_view text,
                                                       const std::string& source = "<ellipsometry>");

Json to_json(const DrudeLorentzModel& model);
DrudeLorentzModel model_from_json(const Json& j);
DrudeLorentzModel read_model(const std::filesystem::path& path);

// Curves ---------------------------------------------------------------------

std::string gradient_csv(const std::vector<GradientPoint>& curve, const Meta* meta = nullptr);
std::vector<GradientPoint> parse_gradient_csv(std::string_view text, const std::string& source = "<gradient>");

std::string reduction_csv(const ReductionCurve& curve, const Meta* meta = nullptr);

/// Columns a_m, value, sigma.
std::string averaged_curve_csv(const AveragedCurve& curve, const Meta* meta = nullptr);

Json to_json(const ReductionReport& report);
Json to_json(const RunSet& runset);

// Maps -----------------------------------------------------------------------

/// Text: a JSON header line {nx, ny, pitch_m, unit} followed by ny rows of nx
/// values. Binary: the magic line "CSMAPB1\n", the same header line, then
/// nx*ny little-endian doubles in row order.
struct MapFile {
  Grid values;
  double pitch = 0.0;
  std::string unit = "m";  // "m" for heights, "V" for potentials
};

inline constexpr std::string_view kBinaryMapMagic = "CSMAPB1\n";

MapFile parse_map(std::string_view bytes, const std::string& source = "<map>");
MapFile read_map(const std::filesystem::path& path);
std::string map_text(const MapFile& map);
std::string map_binary(const MapFile& map);

HeightMap to_height_map(const MapFile& file, MapRole role);
PotentialMap to_potential_map(const MapFile& file);

// Corrections ----------------------------------------------------------------

std::string correction_csv(const CorrectionResult& result, const Meta* meta = nullptr);
CorrectionResult parse_correction_csv(std::string_view text, const std::string& source = "<correction>");
std::string shift_log_csv(const CorrectionResult& result, const Meta* meta = nullptr);
std::string combined_csv(const CombinedReduction& combined, const Meta* meta = nullptr);

// Sweep records (JSON Lines) -------------------------------------------------

Json to_json(const SweepRecord& sweep);
SweepRecord sweep_from_json(const Json& j);
/// One record per line; a leading {"meta": ...} line is skipped.
std::vector<SweepRecord> parse_sweeps(std::string_view text, const std::string& source = "<sweeps>");
std::vector<SweepRecord> read_sweeps(const std::filesystem::path& path);
std::string sweeps_jsonl(const std::vector<SweepRecord>& sweeps, const Meta* meta = nullptr);

/// Parses "80nm", "2.5um", "1e-7" (metres) into metres.
double parse_length(std::string_view text);
/// Parses "a_min,a_max" with optional unit suffixes.
Window parse_window(std::string_view text);

}  // namespace casimir::io
