#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "scsm/core_model.hpp"
#include "scsm/estimator.hpp"
#include "scsm/inference.hpp"
#include "scsm/mc_harness.hpp"
#include "scsm/simulation.hpp"

namespace scsm {

const char* tool_version() noexcept;

// 64-bit FNV-1a, as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

// Provenance block written into every output file. `config` holds every
// setting that affects the output (never the worker count).
struct Manifest {
  std::string command;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();

  std::string config_hash() const;
  nlohmann::json to_json() const;
  std::string comment_block() const;  // "# key: value" lines for CSV files
};

// JSON text with every floating-point number printed with 17 significant
// digits.
std::string dump_json(const nlohmann::json& value, int indent = 2);

std::string format_double(double x);  // %.17g

// Long-format input: events (id,time,status,z) and treatment (id,t_start,d).
// Lines starting with '#' are ignored. Errors name the file, row and column.
Dataset read_dataset(std::istream& events, std::istream& treatment, std::optional<double> tau = std::nullopt,
                     const std::string& events_name = "events", const std::string& treatment_name = "treatment");
Dataset load_dataset(const std::string& events_path, const std::string& treatment_path,
                     std::optional<double> tau = std::nullopt);

void write_events(std::ostream& out, const Dataset& data);
void write_treatment(std::ostream& out, const Dataset& data);
void write_dataset(const Dataset& data, const std::string& events_path, const std::string& treatment_path,
                   const Manifest* manifest = nullptr);

nlohmann::json truth_json(const Trial& trial, const DgmConfig& cfg);

// Everything the fit command reports.
struct FitReport {
  FitResult fit;
  StandardErrors se;
  Bands bands;
  std::optional<MultiplierTests> tests;
  std::size_t events = 0;
  double tau = 0.0;
};

std::string curve_csv(const FitReport& report);
nlohmann::json summary_json(const FitReport& report, const Manifest& manifest);
// Writes <prefix>.curve.csv and <prefix>.summary.json.
void write_results(const FitReport& report, const Manifest& manifest, const std::string& prefix);

nlohmann::json study_json(const StudyReport& report, const Manifest& manifest);

// Writes text to path, throwing Error when the file cannot be written.
void write_text(const std::string& path, const std::string& text);

}  // namespace scsm
