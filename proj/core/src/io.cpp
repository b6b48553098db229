#include "cryoscope/io.hpp"

#include <openssl/evp.h>

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <random>
#include <sstream>
#include <system_error>

#include "cryoscope/errors.hpp"

namespace cryoscope {
namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

double parse_number(std::string_view s, std::size_t row, std::size_t col) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    std::ostringstream os;
    os << "CSV row " << row << ", column " << col << ": '" << s << "' is not a number";
    throw ConfigError(os.str());
  }
  return v;
}

double uniform_rate(const std::vector<double>& t) {
  if (t.size() < 2) throw ConfigError("time column needs at least two samples");
  const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(dt > 0.0)) throw ConfigError("time column must be increasing");
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (std::abs(t[i] - t[i - 1] - dt) > 1e-6 * dt) throw ConfigError("time column must be uniformly spaced");
  }
  return 1.0 / dt;
}

}  // namespace

const std::vector<double>& CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i] == name) return data[i];
  }
  throw ConfigError("CSV has no column '" + std::string(name) + "'");
}

std::string format_double(double v) {
  if (!std::isfinite(v)) throw ConfigError("cannot serialise a non-finite value");
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::string to_csv(const CsvTable& table) {
  if (table.columns.size() != table.data.size()) throw ShapeError("CSV header and column count differ");
  const std::size_t n = table.rows();
  for (const auto& c : table.data) {
    if (c.size() != n) throw ShapeError("CSV columns must have equal length");
  }
  std::string out;
  for (std::size_t j = 0; j < table.columns.size(); ++j) {
    if (j) out += ',';
    out += table.columns[j];
  }
  out += '\n';
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < table.data.size(); ++j) {
      if (j) out += ',';
      out += format_double(table.data[j][i]);
    }
    out += '\n';
  }
  return out;
}

CsvTable parse_csv(std::string_view text) {
  CsvTable t;
  std::size_t pos = 0;
  std::size_t row = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto cells = split(line);
    if (t.columns.empty()) {
      for (auto c : cells) t.columns.emplace_back(c);
      t.data.resize(cells.size());
      continue;
    }
    ++row;
    if (cells.size() != t.columns.size()) {
      std::ostringstream os;
      os << "CSV row " << row << " has " << cells.size() << " fields, expected " << t.columns.size();
      throw ConfigError(os.str());
    }
    for (std::size_t j = 0; j < cells.size(); ++j) t.data[j].push_back(parse_number(cells[j], row, j));
  }
  if (t.columns.empty()) throw ConfigError("CSV is empty");
  return t;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::filesystem::create_directories(dir);
  std::random_device rd;
  const auto tmp = dir / (path.filename().string() + ".tmp" + std::to_string(rd()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

std::string sha256_hex(std::string_view data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xF];
  }
  return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv) { return std::filesystem::path(csv.string() + ".json"); }

void write_with_sidecar(const std::filesystem::path& csv, const CsvTable& table, Sidecar sidecar) {
  const auto payload = to_csv(table);
  sidecar.payload_sha256 = sha256_hex(payload);
  json j;
  j["kind"] = sidecar.kind;
  j["tool_version"] = sidecar.tool_version;
  j["seed"] = sidecar.seed;
  j["payload_sha256"] = sidecar.payload_sha256;
  j["config"] = json::parse(sidecar.config_json);
  write_file_atomic(csv, payload);
  write_file_atomic(sidecar_path(csv), j.dump(2) + "\n");
}

CsvTable read_with_sidecar(const std::filesystem::path& csv, Sidecar* sidecar) {
  const auto payload = read_file(csv);
  const auto meta_text = read_file(sidecar_path(csv));
  json meta;
  try {
    meta = json::parse(meta_text);
  } catch (const json::exception& e) {
    throw ConfigError("sidecar " + sidecar_path(csv).string() + " is not valid JSON: " + e.what());
  }
  Sidecar s;
  try {
    s.kind = meta.at("kind").get<std::string>();
    s.tool_version = meta.at("tool_version").get<std::string>();
    s.seed = meta.at("seed").get<std::uint64_t>();
    s.payload_sha256 = meta.at("payload_sha256").get<std::string>();
    s.config_json = meta.at("config").dump();
  } catch (const json::exception& e) {
    throw ConfigError("sidecar " + sidecar_path(csv).string() + " is incomplete: " + e.what());
  }
  if (sha256_hex(payload) != s.payload_sha256) {
    throw ConfigError("payload hash of " + csv.string() + " does not match its sidecar");
  }
  if (sidecar) *sidecar = s;
  return parse_csv(payload);
}

CsvTable to_table(const Waveform& wf, std::string_view value_column) {
  return CsvTable{{"t_ns", std::string(value_column)}, {time_axis(wf), wf.samples}};
}

Waveform waveform_from_table(const CsvTable& table) {
  if (table.columns.size() != 2) throw ConfigError("waveform CSV needs exactly two columns (t_ns, value)");
  const auto& t = table.data[0];
  Waveform wf{table.data[1], uniform_rate(t), t.front()};
  validate(wf);
  return wf;
}

CsvTable to_table(const CryoscopeTrace& trace) { return CsvTable{{"tau_ns", "x", "y"}, {trace.tau, trace.x, trace.y}}; }

CryoscopeTrace trace_from_table(const CsvTable& table) {
  CryoscopeTrace t;
  t.tau = table.column("tau_ns");
  t.x = table.column("x");
  t.y = table.column("y");
  return t;
}

CsvTable to_table(const ReconstructionResult& r) {
  std::vector<double> edge(r.edge.size());
  for (std::size_t i = 0; i < edge.size(); ++i) edge[i] = r.edge[i] ? 1.0 : 0.0;
  return CsvTable{{"t_ns", "df_ghz", "phi_phi0", "raw_phase_rad", "edge"}, {r.t, r.df_r, r.phi_r, r.raw_phase, edge}};
}

Waveform load_waveform_csv(const std::filesystem::path& path) {
  return waveform_from_table(parse_csv(read_file(path)));
}

}  // namespace cryoscope
