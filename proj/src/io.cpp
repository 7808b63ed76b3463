#include "scsm/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>


#include "scsm/error.hpp"

namespace scsm {

namespace {

using nlohmann::json;

struct CsvTable {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;  // (line number, cells)
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos
                                                                                          : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

CsvTable read_csv(std::istream& in, const std::string& name, const std::vector<std::string>& expected) {
  CsvTable t;
  t.name = name;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || line[0] == '#') continue;
    auto cells = split(line);
    if (t.header.empty()) {
      if (!cells.empty() && cells[0].rfind("\xEF\xBB\xBF", 0) == 0) cells[0].erase(0, 3);
      t.header = cells;
      for (const auto& col : expected)
        if (std::find(t.header.begin(), t.header.end(), col) == t.header.end())
          throw DataError(name + " row " + std::to_string(line_no) + ": header lacks column '" + col + "'");
      continue;
    }
    if (cells.size() != t.header.size())
      throw DataError(name + " row " + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                      " fields, found " + std::to_string(cells.size()));
    t.rows.emplace_back(line_no, std::move(cells));
  }
  if (t.header.empty()) throw DataError(name + ": missing header row");
  return t;
}

std::size_t column(const CsvTable& t, const std::string& col) {
  return static_cast<std::size_t>(std::find(t.header.begin(), t.header.end(), col) - t.header.begin());
}

[[noreturn]] void cell_error(const CsvTable& t, std::size_t line, const std::string& col, const std::string& what) {
  throw DataError(t.name + " row " + std::to_string(line) + ", column '" + col + "': " + what);
}

double parse_real(const CsvTable& t, std::size_t line, const std::string& col, const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (!text.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (text.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
    cell_error(t, line, col, "'" + text + "' is not a finite number");
  return v;
}

int parse_binary(const CsvTable& t, std::size_t line, const std::string& col, const std::string& text) {
  if (text == "0") return 0;
  if (text == "1") return 1;
  cell_error(t, line, col, "'" + text + "' is not 0 or 1");
}

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

void dump_rec(const json& v, int indent, int depth, std::string& out) {
  const std::string pad = indent > 0 ? std::string(static_cast<std::size_t>(indent * (depth + 1)), ' ') : "";
  const std::string close_pad = indent > 0 ? std::string(static_cast<std::size_t>(indent * depth), ' ') : "";
  const char* nl = indent > 0 ? "\n" : "";
  switch (v.type()) {
    case json::value_t::number_float:
      out += format_double(v.get<double>());
      return;
    case json::value_t::object: {
      if (v.empty()) {
        out += "{}";
        return;
      }
      out += "{";
      out += nl;
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += std::string(",") + nl;
        first = false;
        out += pad + json(it.key()).dump() + (indent > 0 ? ": " : ":");
        dump_rec(it.value(), indent, depth + 1, out);
      }
      out += nl + close_pad + "}";
      return;
    }
    case json::value_t::array: {
      if (v.empty()) {
        out += "[]";
        return;
      }
      out += "[";
      out += nl;
      bool first = true;
      for (const auto& e : v) {
        if (!first) out += std::string(",") + nl;
        first = false;
        out += pad;
        dump_rec(e, indent, depth + 1, out);
      }
      out += nl + close_pad + "]";
      return;
    }
    default:
      out += v.dump();
  }
}

double two_sided_p(double estimate, double se) {
  if (!(se > 0.0)) return std::nan("");
  return std::erfc(std::abs(estimate / se) / std::sqrt(2.0));
}

json coefficient_json(const FitReport& r, int col) {
  const double est = r.fit.beta(col);
  const double se = r.se.beta(col);
  const double z = normal_critical_value(r.bands.level);
  return {{"estimate", est},
          {"se", se},
          {"ci", json::array({est - z * se, est + z * se})},
          {"p_value", number_or_null(two_sided_p(est, se))}};
}

}  // namespace

const char* tool_version() noexcept { return "scsm " SCSM_VERSION; }

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string Manifest::config_hash() const { return fnv1a_hex(dump_json(config, 0)); }

json Manifest::to_json() const {
  return {{"tool", tool_version()}, {"command", command}, {"seed", seed}, {"config_hash", config_hash()},
          {"config", config}};
}

std::string Manifest::comment_block() const {
  return "# tool: " + std::string(tool_version()) + "\n# command: " + command + "\n# seed: " + std::to_string(seed) +
         "\n# config_hash: " + config_hash() + "\n# config: " + dump_json(config, 0) + "\n";
}

std::string format_double(double x) {
  if (!std::isfinite(x)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string dump_json(const json& value, int indent) {
  std::string out;
  dump_rec(value, indent, 0, out);
  if (indent > 0) out += '\n';
  return out;
}

Dataset read_dataset(std::istream& events, std::istream& treatment, std::optional<double> tau,
                     const std::string& events_name, const std::string& treatment_name) {
  const auto ev = read_csv(events, events_name, {"id", "time", "status", "z"});
  const auto tr = read_csv(treatment, treatment_name, {"id", "t_start", "d"});

  struct Row {
    std::size_t line;
    double t_start;
    int d;
  };
  std::unordered_map<std::string, std::vector<Row>> paths;
  {
    const auto c_id = column(tr, "id"), c_t = column(tr, "t_start"), c_d = column(tr, "d");
    for (const auto& [line, cells] : tr.rows) {
      const std::string& id = cells[c_id];
      if (id.empty()) cell_error(tr, line, "id", "empty id");
      const double t = parse_real(tr, line, "t_start", cells[c_t]);
      if (t < 0.0) cell_error(tr, line, "t_start", "must be non-negative");
      const int d = parse_binary(tr, line, "d", cells[c_d]);
      auto& rows = paths[id];
      if (rows.empty() && t != 0.0)
        cell_error(tr, line, "t_start", "first row for id '" + id + "' must have t_start = 0");
      if (!rows.empty()) {
        if (t == rows.back().t_start) cell_error(tr, line, "t_start", "duplicate (id, t_start) for id '" + id + "'");
        if (t < rows.back().t_start) cell_error(tr, line, "t_start", "not increasing for id '" + id + "'");
      }
      rows.push_back({line, t, d});
    }
  }

  std::vector<Subject> subjects;
  std::unordered_set<std::string> seen;
  const auto c_id = column(ev, "id"), c_time = column(ev, "time"), c_status = column(ev, "status"),
             c_z = column(ev, "z");
  for (const auto& [line, cells] : ev.rows) {
    Subject s;
    s.id = cells[c_id];
    if (s.id.empty()) cell_error(ev, line, "id", "empty id");
    if (!seen.insert(s.id).second) cell_error(ev, line, "id", "duplicate id '" + s.id + "'");
    s.followup = parse_real(ev, line, "time", cells[c_time]);
    if (!(s.followup > 0.0)) cell_error(ev, line, "time", "must be positive");
    s.event = parse_binary(ev, line, "status", cells[c_status]);
    s.arm = parse_binary(ev, line, "z", cells[c_z]);
    const auto it = paths.find(s.id);
    if (it == paths.end()) cell_error(ev, line, "id", "id '" + s.id + "' has no treatment rows");
    std::vector<TreatmentPath::Switch> switches;
    int current = it->second.front().d;
    for (std::size_t j = 1; j < it->second.size(); ++j) {
      const auto& r = it->second[j];
      if (r.d == current) continue;  // repeated value: no change in force
      switches.push_back({r.t_start, r.d});
      current = r.d;
    }
    s.path = TreatmentPath(it->second.front().d, std::move(switches));
    subjects.push_back(std::move(s));
  }
  for (const auto& [id, rows] : paths)
    if (!seen.count(id))
      cell_error(tr, rows.front().line, "id", "id '" + id + "' does not appear in " + events_name);
  if (subjects.empty()) throw DataError(events_name + ": no subjects");

  double t = 0.0;
  if (tau) {
    if (!(*tau > 0.0) || !std::isfinite(*tau)) throw InvalidInput("tau must be positive and finite");
    t = *tau;
  }
  try {
    return Dataset(std::move(subjects), t);
  } catch (const IdentificationError&) {
    throw;
  } catch (const InvalidInput& e) {
    throw DataError(e.what());
  }
}

Dataset load_dataset(const std::string& events_path, const std::string& treatment_path, std::optional<double> tau) {
  std::ifstream ev(events_path);
  if (!ev) throw DataError("cannot open events file '" + events_path + "'");
  std::ifstream tr(treatment_path);
  if (!tr) throw DataError("cannot open treatment file '" + treatment_path + "'");
  return read_dataset(ev, tr, tau, events_path, treatment_path);
}

void write_events(std::ostream& out, const Dataset& data) {
  out << "id,time,status,z\n";
  for (const auto& s : data.subjects())
    out << s.id << ',' << format_double(s.followup) << ',' << s.event << ',' << s.arm << '\n';
}

void write_treatment(std::ostream& out, const Dataset& data) {
  out << "id,t_start,d\n";
  for (const auto& s : data.subjects()) {
    out << s.id << ",0," << s.path.initial_value() << '\n';
    for (const auto& sw : s.path.switches()) out << s.id << ',' << format_double(sw.time) << ',' << sw.value << '\n';
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
  out.close();
  if (!out) throw DataError("error while writing '" + path + "'");
}

void write_dataset(const Dataset& data, const std::string& events_path, const std::string& treatment_path,
                   const Manifest* manifest) {
  std::ostringstream ev, tr;
  if (manifest) {
    ev << manifest->comment_block();
    tr << manifest->comment_block();
  }
  write_events(ev, data);
  write_treatment(tr, data);
  write_text(events_path, ev.str());
  write_text(treatment_path, tr.str());
}

json truth_json(const Trial& trial, const DgmConfig& cfg) {
  json grid = json::array();
  for (double t : {1.0, 2.0, 3.0})
    grid.push_back({{"t", t}, {"B_D", trial.truth.b_d(t)}, {"B_Z", trial.truth.b_z(t)}});
  json warnings = trial.warnings;
  return {{"variant", to_string(cfg.variant)},
          {"n", cfg.n},
          {"B_D_slope", trial.truth.slope_d},
          {"B_Z_slope", trial.truth.slope_z},
          {"beta_D", trial.truth.slope_d},
          {"beta_Z", trial.truth.slope_z},
          {"truth_at", grid},
          {"lambda_c", trial.lambda_c},
          {"tau_admin", cfg.tau_admin},
          {"censor_rate_target", cfg.censor_rate_target},
          {"switch_grid_step", cfg.grid_step},
          {"switching_fraction", trial.switching_fraction},
          {"censoring_fraction", trial.censoring_fraction},
          {"switch_survival_repair", cfg.variant == Variant::paper ? "clamp to [0,1] then running minimum" : "none needed"},
          {"warnings", warnings}};
}

std::string curve_csv(const FitReport& r) {
  std::string out = "t,B_D,se_D,lo_D,hi_D,B_Z,se_Z,lo_Z,hi_Z\n";
  const auto cum = r.fit.curve.cumulative();
  for (Eigen::Index k = 0; k < cum.rows(); ++k) {
    out += format_double(r.fit.curve.jump_times()[static_cast<std::size_t>(k)]);
    for (int c = 0; c < 2; ++c) {
      out += ',' + format_double(cum(k, c)) + ',' + format_double(r.se.curve(k, c)) + ',' +
             format_double(r.bands.lower(k, c)) + ',' + format_double(r.bands.upper(k, c));
    }
    out += '\n';
  }
  return out;
}

json summary_json(const FitReport& r, const Manifest& manifest) {
  double min_sv = std::numeric_limits<double>::infinity();
  for (const auto& d : r.fit.diagnostics) min_sv = std::min(min_sv, d.min_singular);
  json warnings = r.fit.warnings;
  for (const auto& w : r.se.warnings) warnings.push_back(w);
  if (r.tests)
    for (const auto& w : r.tests->warnings) warnings.push_back(w);

  json out = {{"manifest", manifest.to_json()},
              {"estimator", to_string(r.fit.kind)},
              {"n", r.fit.survivor_weights.size()},
              {"events", r.events},
              {"jumps", r.fit.curve.size()},
              {"tau", r.tau},
              {"no_events", r.fit.no_events},
              {"level", r.bands.level},
              {"se_method", to_string(r.se.method)},
              {"beta_D", coefficient_json(r, 0)},
              {"beta_Z", coefficient_json(r, 1)}};
  if (r.tests) {
    out["p_null_D"] = r.tests->p_null_d;
    out["p_null_Z"] = r.tests->p_null_z;
    out["p_gof"] = r.tests->p_gof;
    out["multiplier_replicates"] = r.tests->replicates;
  } else {
    out["p_null_D"] = nullptr;
    out["p_null_Z"] = nullptr;
    out["p_gof"] = nullptr;
  }
  json diag = {{"pinv_rtol", r.fit.options.pinv_rtol},
               {"centering", to_string(r.fit.options.centering)},
               {"degenerate_jumps", r.fit.degenerate_jumps},
               {"min_singular_value", number_or_null(min_sv)},
               {"seed", manifest.seed},
               {"warnings", warnings}};
  if (r.se.method == SeMethod::bootstrap) {
    diag["bootstrap_replicates"] = r.se.replicates;
    diag["bootstrap_redraws"] = r.se.redraws;
  }
  out["diagnostics"] = diag;
  return out;
}

void write_results(const FitReport& report, const Manifest& manifest, const std::string& prefix) {
  write_text(prefix + ".curve.csv", manifest.comment_block() + curve_csv(report));
  write_text(prefix + ".summary.json", dump_json(summary_json(report, manifest)));
}

json study_json(const StudyReport& report, const Manifest& manifest) {
  json estimators = json::array();
  for (const auto& es : report.estimators) {
    json targets = json::array();
    for (const auto& t : es.targets)
      targets.push_back({{"target", t.target}, {"truth", t.truth}, {"bias", t.bias}, {"see", t.see}, {"sd", t.sd},
                         {"cp", t.cp}, {"n", t.n}});
    json e = {{"estimator", to_string(es.kind)}, {"successes", es.successes}, {"failures", es.failures},
              {"targets", targets}};
    if (report.config.mult_G > 0)
      e["rejection_rate_5pct"] = {{"p_null_D", es.reject_null_d}, {"p_null_Z", es.reject_null_z},
                                   {"p_gof", es.reject_gof}};
    json errors = json::array();
    for (std::size_t r = 0; r < es.replicates.size(); ++r)
      if (!es.replicates[r].ok) errors.push_back({{"replicate", r}, {"error", es.replicates[r].error}});
    e["failed_replicates"] = errors;
    estimators.push_back(e);
  }
  json warnings = report.warnings;
  return {{"manifest", manifest.to_json()},
          {"replicates", report.config.reps},
          {"lambda_c", report.lambda_c},
          {"mean_switching_fraction", report.mean_switching},
          {"mean_censoring_fraction", report.mean_censoring},
          {"estimators", estimators},
          {"warnings", warnings}};
}

}  // namespace scsm
