#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cryoscope/reconstruction.hpp"
#include "cryoscope/virtual_cryoscope.hpp"
#include "cryoscope/waveform.hpp"

namespace cryoscope {

inline constexpr const char* kToolVersion = "0.1.0";

/// Column-major numeric table with a header row.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> data;

  std::size_t rows() const { return data.empty() ? 0 : data.front().size(); }
  const std::vector<double>& column(std::string_view name) const;
};

/// Shortest text that reads back to the same double (at most 17
/// significant digits).
std::string format_double(double v);

std::string to_csv(const CsvTable& table);
CsvTable parse_csv(std::string_view text);

std::string read_file(const std::filesystem::path& path);

/// Writes through a temporary file in the same directory and renames it
/// into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string sha256_hex(std::string_view data);

/// Metadata stored next to every CSV payload as <file>.json.
struct Sidecar {
  std::string kind;  // "waveform", "trace", "reconstruction", "snr", ...
  std::string tool_version = kToolVersion;
  std::uint64_t seed = 0;
  std::string config_json = "{}";  // serialised config snapshot
  std::string payload_sha256;
};

std::filesystem::path sidecar_path(const std::filesystem::path& csv);

/// Writes the CSV and its sidecar; the hash is filled in here.
void write_with_sidecar(const std::filesystem::path& csv, const CsvTable& table, Sidecar sidecar);

/// Reads the CSV, checks the sidecar hash (ConfigError on mismatch) and
/// returns the table. `sidecar` receives the metadata when non-null.
CsvTable read_with_sidecar(const std::filesystem::path& csv, Sidecar* sidecar = nullptr);

CsvTable to_table(const Waveform& wf, std::string_view value_column = "value");
Waveform waveform_from_table(const CsvTable& table);

CsvTable to_table(const CryoscopeTrace& trace);
CryoscopeTrace trace_from_table(const CsvTable& table);

CsvTable to_table(const ReconstructionResult& result);

/// Waveform from a two-column CSV (time in ns, value) without a sidecar.
/// The sample rate is taken from the time column, which must be uniform.
Waveform load_waveform_csv(const std::filesystem::path& path);

}  // namespace cryoscope
