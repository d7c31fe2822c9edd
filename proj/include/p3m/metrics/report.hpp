#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "p3m/core/io.hpp"
#include "p3m/metrics/metrics.hpp"

namespace p3m {

struct ImageScore {
  std::string stem;
  MetricReport report;
};

inline nlohmann::json metrics_json(const MetricReport& r) {
  nlohmann::json j = nlohmann::json::object();
  const auto v = r.values();
  for (std::size_t i = 0; i < v.size(); ++i) j[MetricReport::kColumns[i]] = v[i];
  return j;
}

inline MetricReport metrics_from_json(const nlohmann::json& j) {
  std::array<double, 10> v{};
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!j.contains(MetricReport::kColumns[i])) throw FormatError(std::string("report lacks column ") + MetricReport::kColumns[i]);
    v[i] = j.at(MetricReport::kColumns[i]).get<double>();
  }
  return MetricReport::from_values(v);
}

inline std::string scores_csv(const std::vector<ImageScore>& rows) {
  std::ostringstream o;
  o << "image";
  for (const char* c : MetricReport::kColumns) o << ',' << c;
  o << '\n' << std::setprecision(17);
  for (const auto& r : rows) {
    o << r.stem;
    for (double v : r.report.values()) o << ',' << v;
    o << '\n';
  }
  return o.str();
}

inline std::vector<ImageScore> parse_scores_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("score CSV is empty");
  std::vector<std::string> head;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) head.push_back(cell);
  }
  if (head.size() != 11 || head[0] != "image") throw FormatError("score CSV header does not match the metric schema");
  for (std::size_t i = 0; i < 10; ++i)
    if (head[i + 1] != MetricReport::kColumns[i]) throw FormatError("score CSV column " + head[i + 1] + " unexpected");
  std::vector<ImageScore> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    ImageScore s;
    std::getline(ls, s.stem, ',');
    std::array<double, 10> v{};
    for (auto& x : v) {
      if (!std::getline(ls, cell, ',')) throw FormatError("short score CSV row for " + s.stem);
      try {
        x = std::stod(cell);
      } catch (const std::exception&) {
        throw FormatError("bad number '" + cell + "' in score CSV");
      }
    }
    s.report = MetricReport::from_values(v);
    rows.push_back(std::move(s));
  }
  return rows;
}

inline MetricReport aggregate(const std::vector<ImageScore>& rows) {
  std::vector<MetricReport> r;
  r.reserve(rows.size());
  for (const auto& s : rows) r.push_back(s.report);
  return aggregate(r);
}

// Aggregate document: protocol label, image count, the ten metrics and the
// evaluation settings.
inline nlohmann::json aggregate_json(const std::string& protocol, const std::vector<ImageScore>& rows,
                                     const nlohmann::json& settings = nlohmann::json::object()) {
  nlohmann::json j;
  j["protocol"] = protocol;
  j["count"] = rows.size();
  j["columns"] = MetricReport::kColumns;
  j["metrics"] = metrics_json(aggregate(rows));
  nlohmann::json s = settings;
  if (!s.contains("grad_sigma")) s["grad_sigma"] = GradParams{}.sigma;
  if (!s.contains("conn_step")) s["conn_step"] = ConnParams{}.step;
  j["settings"] = s;
  return j;
}

inline void write_report(const std::filesystem::path& dir, const std::string& name, const std::string& protocol,
                         const std::vector<ImageScore>& rows, const nlohmann::json& settings = nlohmann::json::object()) {
  std::filesystem::create_directories(dir);
  write_text_atomic(dir / (name + ".csv"), scores_csv(rows));
  write_text_atomic(dir / (name + ".json"), aggregate_json(protocol, rows, settings).dump(2) + "\n");
}

}  // namespace p3m
