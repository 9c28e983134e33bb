#include "cqed/report.hpp"

#include <chrono>
#include <cmath>
#include <ctime>

#include "cqed/errors.hpp"
#include "cqed/io.hpp"

namespace cqed::report {

AnalysisReport::AnalysisReport(std::string command) : command_(std::move(command)) {}

void AnalysisReport::input(const std::string& key, json value) { inputs_[key] = std::move(value); }

void AnalysisReport::input_file(const std::string& key, const std::string& path) {
  inputs_[key] = {{"path", path}, {"sha256", io::sha256_file(path)}};
}

void AnalysisReport::result(const std::string& name, double value, const std::string& units,
                            std::optional<double> sigma) {
  json q = {{"value", std::isfinite(value) ? json(value) : json(nullptr)}, {"units", units}};
  if (sigma) q["sigma"] = std::isfinite(*sigma) ? json(*sigma) : json(nullptr);
  results_[name] = std::move(q);
}

void AnalysisReport::result(const std::string& name, json value) {
  if (!value.is_object() || !value.contains("units"))
    throw Error("report result '" + name + "' lacks units");
  results_[name] = std::move(value);
}

void AnalysisReport::seed(std::uint64_t s) { seeds_.push_back(s); }

void AnalysisReport::warn(std::string message) { warnings_.push_back(std::move(message)); }

json AnalysisReport::to_json(bool timestamp) const {
  json j = {{"command", command_},
            {"inputs", inputs_},
            {"results", results_},
            {"warnings", warnings_},
            {"provenance",
             {{"tool", "cqed"},
              {"version", CQED_VERSION},
              {"rng", "mt19937_64"},
              {"digest", "sha256"},
              {"seeds", seeds_},
              {"timestamp", timestamp ? json(utc_timestamp()) : json(nullptr)}}}};
  if (converged_) j["converged"] = *converged_;
  return j;
}

json error_json(const std::string& kind, const std::string& message,
                const std::vector<std::string>& details) {
  return {{"error", {{"kind", kind}, {"message", message}, {"details", details}}}};
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace cqed::report
