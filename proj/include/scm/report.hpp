#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "scm/simulation.hpp"

namespace scm {

/// Parses the row-level CSV written by write_mspe_csv.
std::vector<MSPERow> read_mspe_csv(std::istream& in, const std::string& source = "<stream>");
std::vector<MSPERow> read_mspe_csv(const std::filesystem::path& path);

/// Throws InvalidArgument listing the valid names when `parameter` is unknown.
void check_parameter_name(const std::string& parameter);

/// Self-contained SVG line chart: one panel per DGP case, MSPE against the
/// parameter's values, one polyline per method.
void write_marginal_svg(std::ostream& os, const std::string& parameter,
                        const std::vector<MarginalCell>& cells);

}  // namespace scm
