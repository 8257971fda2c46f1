#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "scm/dgp.hpp"
#include "scm/estimators.hpp"

namespace scm {

/// Factor-model settings shared by every cell of a grid.
struct DgpShape {
  std::size_t n_factors = 2;
  double loading_sd = 1.0;
  double noise_sd = 1.0;
  TreatedLoadings treated_loadings = TreatedLoadings::Independent;

  bool operator==(const DgpShape&) const = default;
};

/// The parameter grid of a Monte Carlo run. Defaults reproduce the 384-cell
/// comparison grid with 100 replications per cell.
struct GridSpec {
  std::vector<DgpCase> dgp_cases{DgpCase::Stationary, DgpCase::I1};
  std::vector<std::size_t> pre_periods_values{10, 15};
  std::vector<std::size_t> n_controls_values{5, 9};
  std::vector<double> spillover_ratio_values{0.11, 0.33, 0.67, 0.9};
  std::vector<double> treatment_effect_values{1.8, 3.0, 5.0};
  std::vector<double> spill_ratio_values{0.1, 0.3, 0.6, 0.9};
  std::size_t replications = 100;
  std::uint64_t base_seed = 20240501;
  std::vector<MethodSpec> methods{{Method::Unrestricted}, {Method::Restricted},
                                  {Method::Iterative},    {Method::Inclusive},
                                  {Method::Sp}};
  DgpShape dgp{};

  /// Throws InvalidArgument naming the offending field.
  void validate() const;
  std::size_t grid_size() const;

  bool operator==(const GridSpec&) const = default;
};

/// The six grid parameters, in nesting order (outermost first).
inline constexpr const char* kGridParameters[] = {
    "dgp_case", "pre_periods", "n_controls", "spillover_ratio", "treatment_effect", "spill_ratio"};

/// Cartesian product with dgp_case outermost and spill_ratio innermost. The
/// returned configs carry seed 0; run_grid assigns per-replication seeds.
std::vector<DGPConfig> enumerate_grid(const GridSpec& spec);

/// fmix64(fmix64(base_seed) + (config_index << 32 | replication)), where fmix64
/// is the MurmurHash3 64-bit finaliser (a bijection). Injective in
/// (config_index, replication) for a fixed base while both stay below 2^32.
std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t config_index,
                          std::uint64_t replication);

/// Prediction errors (true y0 - predicted y0 at the first post period) of one
/// method on one grid cell. Failed replications hold NaN and a reason.
struct PEVector {
  std::size_t config_index = 0;
  std::string method;
  std::vector<double> errors;
  std::vector<std::string> failures;  // one entry per failed replication, "rep N: reason"
};

struct MSPERow {
  std::size_t config_index = 0;
  DGPConfig config;
  std::string method;
  double mspe = 0.0;
  std::size_t n_valid = 0;
  bool unreliable = false;  // more than half the replications failed
};

/// Mean of the per-config MSPEs sharing one value of one parameter, within a
/// DGP case.
struct MarginalCell {
  std::string dgp_case;
  std::string value;  // parameter value as printed in the row-level CSV
  std::string method;
  double mspe = 0.0;
  std::size_t n_configs = 0;
};

struct MSPETable {
  std::vector<MSPERow> rows;  // ordered by (config_index, method order)
  /// parameter name -> cells, for every entry of kGridParameters.
  std::map<std::string, std::vector<MarginalCell>> marginals;
};

struct GridResult {
  std::vector<PEVector> pe;  // ordered like MSPETable::rows
  MSPETable table;
};

struct RunOptions {
  std::size_t threads = 0;  // 0 = hardware concurrency
};

/// Generates every (config, replication) dataset, runs every method and
/// aggregates. Output is bit-identical for any thread count.
GridResult run_grid(const GridSpec& spec, const RunOptions& options = {});

/// Mean of squared finite entries; NaN when none are finite.
double mspe(const std::vector<double>& errors);

/// Marginal view of `rows` by one parameter (see kGridParameters): unweighted
/// mean over configs per (dgp_case, value, method), in first-appearance order.
std::vector<MarginalCell> marginalize(const std::vector<MSPERow>& rows, const std::string& parameter);

/// Printed value of `parameter` for `config`, as it appears in CSV output.
std::string parameter_value(const DGPConfig& config, const std::string& parameter);

/// Shortest round-trippable decimal representation.
std::string format_double(double v);

void write_mspe_csv(std::ostream& os, const MSPETable& table);
void write_marginal_csv(std::ostream& os, const std::string& parameter,
                        const std::vector<MarginalCell>& cells);
void write_pe_csv(std::ostream& os, const std::vector<PEVector>& pe);

/// 2x2 means of the iterative variants per DGP case, plus the by-ratio series.
struct IterativeSweep {
  struct Cell {
    std::string dgp_case;
    bool replace_pre = true;
    bool use_cleaned = true;
    double mspe = 0.0;
  };
  std::vector<Cell> table;
  std::vector<MarginalCell> by_spillover_ratio;
};

/// The four IterativeOptions variants as method specs, in (yy, yn, ny, nn) order.
std::vector<MethodSpec> iterative_variants();

IterativeSweep summarize_iterative_sweep(const MSPETable& table);

}  // namespace scm

namespace scm {

/// Grid spec from JSON. Every field is optional and defaults to GridSpec{}:
///   {"dgp_cases": ["stationary", "i1"], "pre_periods": [10, 15],
///    "n_controls": [5, 9], "spillover_ratio": [0.11, 0.33, 0.67, 0.9],
///    "treatment_effect": [1.8, 3, 5], "spill_ratio": [0.1, 0.3, 0.6, 0.9],
///    "replications": 100, "base_seed": 20240501,
///    "methods": ["unrestricted", "restricted", "iterative", "inclusive", "sp"],
///    "dgp": {"n_factors": 2, "loading_sd": 1, "noise_sd": 1,
///            "treated_loadings": "independent"}}
/// A run manifest (an object with a "grid" member) is accepted too.
/// Throws InvalidArgument naming the offending field.
GridSpec parse_grid_spec(const std::string& json_text);

/// Canonical JSON for `spec`; parse_grid_spec(grid_spec_json(s)) == s.
std::string grid_spec_json(const GridSpec& spec);

/// FNV-1a 64 of the canonical JSON, as 16 hex digits.
std::string grid_spec_hash(const GridSpec& spec);

}  // namespace scm
