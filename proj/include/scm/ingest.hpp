#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "scm/estimators.hpp"
#include "scm/panel.hpp"

namespace scm {

/// Metadata that turns a long-format outcome file into a Panel, plus the
/// method selection for `scm estimate`.
///
/// JSON form:
///   {"treated": "California", "treatment_time": 1989,
///    "spillover": ["Nevada", "Oregon"], "method": "iterative",
///    "iterative_options": {"replace_pre": true, "use_cleaned": true}}
/// `treatment_time` is the first post-treatment period.
struct RunConfig {
  std::string treated;
  std::int64_t treatment_time = 0;
  std::vector<std::string> spillover;
  std::optional<std::string> method;
  IterativeOptions iterative_options{};

  static RunConfig from_json_text(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  std::string to_json_text() const;
};

/// Parsed panel plus anything the reader wants the caller to know about.
struct PanelReadResult {
  Panel panel;
  std::vector<std::string> warnings;  // e.g. ignored covariate columns
};

/// Parses a long-format CSV (header row required; columns unit_id, time,
/// outcome in any order; extra columns are ignored with a warning).
/// Units are ordered treated first, then donors in first-appearance order;
/// times ascending. Throws DataError subclasses.
PanelReadResult read_panel(std::istream& in, const RunConfig& config,
                           const std::string& source = "<stream>");
PanelReadResult read_panel(const std::filesystem::path& path, const RunConfig& config);

/// Writes `panel` as long-format CSV (unit_id,time,outcome), every value in
/// shortest round-trip form so re-reading reproduces the panel exactly.
void write_panel(std::ostream& out, const Panel& panel);
void write_panel(const std::filesystem::path& path, const Panel& panel);

/// Run config that reproduces `panel`'s treated unit, treatment time and
/// spillover flags when the panel is written with write_panel.
RunConfig run_config_for(const Panel& panel);

/// Result file: '#'-prefixed metadata lines, then time,actual,counterfactual,gap
/// for every period. Pre-period counterfactual values are the synthetic fit.
void write_results(std::ostream& out, const EffectEstimate& estimate, const Panel& panel);
void write_results(const std::filesystem::path& path, const EffectEstimate& estimate,
                   const Panel& panel);

/// Rows of a result file, for tooling and tests.
struct ResultRow {
  std::int64_t time = 0;
  double actual = 0.0;
  double counterfactual = 0.0;
  double gap = 0.0;
};
std::vector<ResultRow> read_results(const std::filesystem::path& path);

/// Splits one CSV record. Handles double-quoted fields with "" escapes.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace scm
