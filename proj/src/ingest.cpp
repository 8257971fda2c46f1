#include "scm/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "scm/errors.hpp"
#include "scm/simulation.hpp"

namespace scm {
namespace {

using nlohmann::json;

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool parse_int(const std::string& text, std::int64_t& out) {
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc{} && res.ptr == last && first != last;
}

bool parse_double(const std::string& text, double& out) {
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, out);
  return res.ec == std::errc{} && res.ptr == last && first != last && std::isfinite(out);
}

std::string quote_csv(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  return out;
}

void finish_write(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  RunConfig cfg;
  try {
    const json j = json::parse(text);
    cfg.treated = j.at("treated").get<std::string>();
    cfg.treatment_time = j.at("treatment_time").get<std::int64_t>();
    if (j.contains("spillover")) cfg.spillover = j.at("spillover").get<std::vector<std::string>>();
    if (j.contains("method") && !j.at("method").is_null()) cfg.method = j.at("method").get<std::string>();
    if (j.contains("iterative_options")) {
      const json& io = j.at("iterative_options");
      cfg.iterative_options.replace_pre = io.value("replace_pre", true);
      cfg.iterative_options.use_cleaned = io.value("use_cleaned", true);
    }
  } catch (const json::exception& e) {
    throw MalformedFile(std::string("run config: ") + e.what());
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open run config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return from_json_text(ss.str());
  } catch (const MalformedFile& e) {
    throw MalformedFile(path.string() + ": " + e.what());
  }
}

std::string RunConfig::to_json_text() const {
  json j;
  j["treated"] = treated;
  j["treatment_time"] = treatment_time;
  j["spillover"] = spillover;
  if (method) j["method"] = *method;
  j["iterative_options"] = {{"replace_pre", iterative_options.replace_pre},
                            {"use_cleaned", iterative_options.use_cleaned}};
  return j.dump(2);
}

PanelReadResult read_panel(std::istream& in, const RunConfig& config, const std::string& source) {
  PanelReadResult result;
  std::string line;
  std::size_t line_no = 0;

  // Header (skip leading blank lines and a UTF-8 byte-order mark).
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw MalformedFile(source + ": missing header row");

  std::ptrdiff_t unit_col = -1, time_col = -1, outcome_col = -1;
  std::vector<std::string> ignored;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name = trim(header[c]);
    if ((name == "unit_id" || name == "unit") && unit_col < 0) {
      unit_col = static_cast<std::ptrdiff_t>(c);
    } else if (name == "time" && time_col < 0) {
      time_col = static_cast<std::ptrdiff_t>(c);
    } else if (name == "outcome" && outcome_col < 0) {
      outcome_col = static_cast<std::ptrdiff_t>(c);
    } else {
      ignored.push_back(name);
    }
  }
  if (unit_col < 0 || time_col < 0 || outcome_col < 0)
    throw MalformedFile(source + ": header must contain unit_id, time and outcome columns");
  if (!ignored.empty()) {
    std::string names;
    for (const auto& n : ignored) names += (names.empty() ? "" : ", ") + n;
    result.warnings.push_back("ignoring extra column(s) " + names + "; covariates are not used");
  }
  const std::size_t needed = static_cast<std::size_t>(std::max({unit_col, time_col, outcome_col})) + 1;

  std::vector<std::string> appearance;
  std::unordered_map<std::string, std::size_t> unit_index;
  std::map<std::pair<std::size_t, std::int64_t>, double> cells;
  std::vector<std::int64_t> times;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    const std::string where = source + ":" + std::to_string(line_no);
    if (fields.size() < needed) throw MalformedFile(where + ": expected at least " +
                                                    std::to_string(needed) + " fields");
    const std::string unit = trim(fields[static_cast<std::size_t>(unit_col)]);
    const std::string time_text = trim(fields[static_cast<std::size_t>(time_col)]);
    const std::string value_text = trim(fields[static_cast<std::size_t>(outcome_col)]);
    if (unit.empty()) throw MalformedFile(where + ": empty unit_id");
    std::int64_t time = 0;
    if (!parse_int(time_text, time)) throw MalformedFile(where + ": time '" + time_text + "' is not an integer");
    double value = 0.0;
    if (!parse_double(value_text, value))
      throw NonNumericOutcome(where + ": outcome '" + value_text + "' for unit '" + unit +
                              "' at time " + std::to_string(time) + " is not a finite number");
    auto [it, inserted] = unit_index.emplace(unit, appearance.size());
    if (inserted) appearance.push_back(unit);
    if (!cells.emplace(std::make_pair(it->second, time), value).second)
      throw DuplicateCell(where + ": duplicate cell for unit '" + unit + "' at time " + std::to_string(time));
    times.push_back(time);
  }
  if (appearance.empty()) throw MalformedFile(source + ": no data rows");

  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  const auto lookup = [&](const std::string& id, const char* role) {
    const auto it = unit_index.find(id);
    if (it == unit_index.end())
      throw UnknownUnit(source + ": " + role + " unit '" + id + "' does not appear in the data");
    return it->second;
  };
  const std::size_t treated_file = lookup(config.treated, "treated");
  std::vector<std::size_t> spill_file;
  for (const auto& id : config.spillover) {
    const std::size_t idx = lookup(id, "spillover");
    if (idx == treated_file)
      throw DataError(source + ": treated unit '" + id + "' is also listed as spillover");
    spill_file.push_back(idx);
  }

  if (!(times.front() < config.treatment_time && config.treatment_time <= times.back()))
    throw TreatmentTimeOutOfRange(source + ": treatment_time " + std::to_string(config.treatment_time) +
                                  " must lie in (" + std::to_string(times.front()) + ", " +
                                  std::to_string(times.back()) + "]");

  // Treated first, then donors in first-appearance order.
  std::vector<std::size_t> order{treated_file};
  for (std::size_t u = 0; u < appearance.size(); ++u)
    if (u != treated_file) order.push_back(u);
  std::vector<std::size_t> position(appearance.size());
  for (std::size_t p = 0; p < order.size(); ++p) position[order[p]] = p;

  Panel& panel = result.panel;
  panel.outcomes = Matrix(order.size(), times.size());
  for (std::size_t p = 0; p < order.size(); ++p) {
    for (std::size_t t = 0; t < times.size(); ++t) {
      const auto it = cells.find({order[p], times[t]});
      if (it == cells.end())
        throw MissingCell(source + ": missing cell for unit '" + appearance[order[p]] + "' at time " +
                          std::to_string(times[t]));
      panel.outcomes(p, t) = it->second;
    }
    panel.unit_ids.push_back(appearance[order[p]]);
  }
  panel.treated_unit = 0;
  panel.pre_periods = static_cast<std::size_t>(
      std::lower_bound(times.begin(), times.end(), config.treatment_time) - times.begin());
  for (std::size_t idx : spill_file) panel.spillover_units.push_back(position[idx]);
  std::sort(panel.spillover_units.begin(), panel.spillover_units.end());
  panel.spillover_units.erase(std::unique(panel.spillover_units.begin(), panel.spillover_units.end()),
                              panel.spillover_units.end());
  panel.times = std::move(times);
  panel.validate();
  return result;
}

PanelReadResult read_panel(const std::filesystem::path& path, const RunConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open panel file '" + path.string() + "'");
  return read_panel(in, config, path.string());
}

void write_panel(std::ostream& out, const Panel& panel) {
  out << "unit_id,time,outcome\n";
  for (std::size_t u = 0; u < panel.units(); ++u)
    for (std::size_t t = 0; t < panel.periods(); ++t)
      out << quote_csv(panel.unit_label(u)) << ',' << panel.time_label(t) << ','
          << format_double(panel.outcomes(u, t)) << '\n';
}

void write_panel(const std::filesystem::path& path, const Panel& panel) {
  auto out = open_for_write(path);
  write_panel(out, panel);
  finish_write(out, path);
}

RunConfig run_config_for(const Panel& panel) {
  RunConfig cfg;
  cfg.treated = panel.unit_label(panel.treated_unit);
  cfg.treatment_time = panel.time_label(panel.pre_periods);
  for (std::size_t u : panel.spillover_units) cfg.spillover.push_back(panel.unit_label(u));
  return cfg;
}

void write_results(std::ostream& out, const EffectEstimate& est, const Panel& panel) {
  const auto& d = est.diagnostics;
  out << "# method: " << est.label << '\n';
  out << "# treated: " << panel.unit_label(panel.treated_unit) << '\n';
  out << "# treatment_time: " << panel.time_label(panel.pre_periods) << '\n';
  out << "# pre_fit_objective: " << format_double(d.pre_fit_objective) << '\n';
  out << "# converged: " << (d.converged ? "true" : "false") << '\n';
  out << "# mean_post_effect: " << format_double(est.mean_effect()) << '\n';
  out << "# weights:";
  for (std::size_t i = 0; i < d.donor_units.size(); ++i)
    if (d.weights[i] > 0.0) out << ' ' << panel.unit_label(d.donor_units[i]) << '=' << format_double(d.weights[i]);
  out << '\n';
  if (!d.cleaning_order.empty()) {
    out << "# cleaning_order:";
    for (std::size_t u : d.cleaning_order) out << ' ' << panel.unit_label(u);
    out << '\n';
  }
  if (!d.affected_units.empty()) {
    out << "# system_condition: " << format_double(d.system_condition) << '\n';
    for (std::size_t p = 0; p < d.solved_effects.size(); ++p) {
      out << "# solved_effects[" << panel.time_label(panel.pre_periods + p) << "]:";
      for (std::size_t a = 0; a < d.affected_units.size(); ++a)
        out << ' ' << panel.unit_label(d.affected_units[a]) << '=' << format_double(d.solved_effects[p][a]);
      out << '\n';
    }
  }
  for (std::size_t p = 0; p < d.spillover_coefficients.size(); ++p) {
    out << "# spillover_coefficients[" << panel.time_label(panel.pre_periods + p) << "]:";
    for (double b : d.spillover_coefficients[p]) out << ' ' << format_double(b);
    out << '\n';
  }
  for (const auto& w : d.warnings) out << "# warning: " << w << '\n';

  out << "time,actual,counterfactual,gap\n";
  const auto actual = panel.outcomes.row(panel.treated_unit);
  for (std::size_t t = 0; t < panel.periods(); ++t) {
    const bool is_pre = t < panel.pre_periods;
    const double cf = is_pre ? est.counterfactual_pre[t] : est.counterfactual_post[t - panel.pre_periods];
    out << panel.time_label(t) << ',' << format_double(actual[t]) << ',' << format_double(cf) << ','
        << format_double(actual[t] - cf) << '\n';
  }
}

void write_results(const std::filesystem::path& path, const EffectEstimate& est, const Panel& panel) {
  auto out = open_for_write(path);
  write_results(out, est, panel);
  finish_write(out, path);
}

std::vector<ResultRow> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open results file '" + path.string() + "'");
  std::vector<ResultRow> rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto f = split_csv_line(line);
    ResultRow r;
    if (f.size() != 4 || !parse_int(f[0], r.time) || !parse_double(f[1], r.actual) ||
        !parse_double(f[2], r.counterfactual) || !parse_double(f[3], r.gap))
      throw MalformedFile(path.string() + ": bad result row '" + line + "'");
    rows.push_back(r);
  }
  return rows;
}

}  // namespace scm
