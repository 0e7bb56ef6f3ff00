#include "cslab/csvio.hpp"

#include <charconv>
#include <cmath>
#include <ctime>
#include <fstream>

#include "cslab/errors.hpp"

namespace cslab {

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw NumericsError("number formatting failed");
  return std::string(buf, p);
}

std::string csv_body(const CsvTable& t) {
  std::string out;
  for (std::size_t i = 0; i < t.columns.size(); ++i) {
    if (i) out += ',';
    out += t.columns[i];
  }
  out += '\n';
  for (const auto& row : t.rows) {
    if (row.size() != t.columns.size()) throw IoError("csv row width mismatch");
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ',';
      out += row[i];
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::string& path, const CsvTable& t, const std::string& config_hash) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  std::time_t now = std::time(nullptr);
  char ts[32];
  std::strftime(ts, sizeof(ts), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  out << "# config=" << config_hash << '\n';
  out << "# generated=" << ts << '\n';
  out << csv_body(t);
  if (!out) throw IoError("write failed: " + path);
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace cslab
