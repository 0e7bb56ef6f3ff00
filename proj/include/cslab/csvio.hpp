#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cslab {

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

// Shortest decimal representation that round-trips; "nan"/"inf" spelled out.
std::string fmt_double(double v);

// Header and data lines only; excludes the comment preamble, so two runs of
// the same computation compare byte-equal on this string.
std::string csv_body(const CsvTable& t);

// Writes "# config=<hash>", "# generated=<UTC timestamp>", then the body.
void write_csv(const std::string& path, const CsvTable& t, const std::string& config_hash);

// Pretty-printed with sorted keys, so re-runs are byte-identical.
void write_json(const std::string& path, const nlohmann::json& j);

}  // namespace cslab
