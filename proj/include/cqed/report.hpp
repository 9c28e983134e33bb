// report.hpp - self-contained analysis report emitted by the command line tool.
//
// {"command": ..., "inputs": {...}, "results": {name: {"units": ..., ...}},
//  "warnings": [...], "provenance": {"tool", "version", "rng", "seeds", "timestamp"}}
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace cqed::report {

using nlohmann::json;

class AnalysisReport {
 public:
  explicit AnalysisReport(std::string command);

  void input(const std::string& key, json value);
  // Records the path and its SHA-256 digest.
  void input_file(const std::string& key, const std::string& path);

  void result(const std::string& name, double value, const std::string& units,
              std::optional<double> sigma = std::nullopt);
  // Structured result; must be an object with a "units" member.
  void result(const std::string& name, json value);

  void seed(std::uint64_t s);
  void warn(std::string message);
  void converged(bool ok) { converged_ = ok; }

  const json& results() const { return results_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  // `timestamp` false leaves the provenance timestamp null (byte-stable output).
  json to_json(bool timestamp = true) const;

 private:
  std::string command_;
  json inputs_ = json::object();
  json results_ = json::object();
  std::vector<std::string> warnings_;
  std::vector<std::uint64_t> seeds_;
  std::optional<bool> converged_;
};

// Error document written to stderr on failure.
json error_json(const std::string& kind, const std::string& message,
                const std::vector<std::string>& details = {});

std::string utc_timestamp();

}  // namespace cqed::report
