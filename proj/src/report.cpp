#include "scm/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "scm/errors.hpp"
#include "scm/ingest.hpp"

namespace scm {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};

double to_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  if (s == "nan") return std::nan("");
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw MalformedFile(where + ": '" + s + "' is not a number");
  return v;
}

std::size_t to_size(const std::string& s, const std::string& where) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw MalformedFile(where + ": '" + s + "' is not a count");
  return v;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

}  // namespace

void check_parameter_name(const std::string& parameter) {
  for (const char* p : kGridParameters)
    if (parameter == p) return;
  std::string names;
  for (const char* p : kGridParameters) names += (names.empty() ? "" : ", ") + std::string(p);
  throw InvalidArgument("unknown parameter '" + parameter + "'; valid names: " + names);
}

std::vector<MSPERow> read_mspe_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw MalformedFile(source + ": empty results file");
  const auto header = split_csv_line(line);
  const std::vector<std::string> expected{"config_index", "dgp_case", "pre_periods", "n_controls",
                                          "spillover_ratio", "treatment_effect", "spill_ratio",
                                          "method", "mspe", "n_valid", "unreliable"};
  if (header != expected) throw MalformedFile(source + ": not a row-level MSPE file (unexpected header)");

  std::vector<MSPERow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto f = split_csv_line(line);
    if (f.size() != expected.size()) throw MalformedFile(where + ": wrong field count");
    MSPERow r;
    r.config_index = to_size(f[0], where);
    try {
      r.config.dgp_case = parse_dgp_case(f[1]);
    } catch (const InvalidArgument& e) {
      throw MalformedFile(where + ": " + e.what());
    }
    r.config.pre_periods = to_size(f[2], where);
    r.config.n_controls = to_size(f[3], where);
    r.config.spillover_ratio = to_double(f[4], where);
    r.config.treatment_effect = to_double(f[5], where);
    r.config.spill_to_treat_ratio = to_double(f[6], where);
    r.method = f[7];
    r.mspe = to_double(f[8], where);
    r.n_valid = to_size(f[9], where);
    r.unreliable = f[10] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<MSPERow> read_mspe_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open results file '" + path.string() + "'");
  return read_mspe_csv(in, path.string());
}

void write_marginal_svg(std::ostream& os, const std::string& parameter,
                        const std::vector<MarginalCell>& cells) {
  std::vector<std::string> cases, values, methods;
  const auto remember = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  double y_max = 0.0;
  for (const auto& c : cells) {
    remember(cases, c.dgp_case);
    remember(values, c.value);
    remember(methods, c.method);
    if (std::isfinite(c.mspe)) y_max = std::max(y_max, c.mspe);
  }
  if (y_max <= 0.0) y_max = 1.0;
  y_max *= 1.1;

  const double panel_w = 420, panel_h = 300, margin_l = 60, margin_t = 40, margin_b = 50;
  const double legend_w = 170;
  const double width = margin_l + cases.size() * (panel_w + margin_l) + legend_w;
  const double height = margin_t + panel_h + margin_b;

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const double x0 = margin_l + ci * (panel_w + margin_l);
    const double y0 = margin_t;
    const auto px = [&](std::size_t vi) {
      return values.size() == 1 ? x0 + panel_w / 2
                                : x0 + 20 + (panel_w - 40) * static_cast<double>(vi) / (values.size() - 1);
    };
    const auto py = [&](double v) { return y0 + panel_h - panel_h * v / y_max; };

    os << "<text x=\"" << x0 + panel_w / 2 << "\" y=\"" << y0 - 15 << "\" text-anchor=\"middle\" font-weight=\"bold\">"
       << escape_xml(cases[ci]) << "</text>\n";
    os << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << panel_w << "\" height=\"" << panel_h
       << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
      const double v = y_max * tick / 4.0;
      os << "<line x1=\"" << x0 << "\" x2=\"" << x0 + panel_w << "\" y1=\"" << py(v) << "\" y2=\"" << py(v)
         << "\" stroke=\"#ddd\"/>\n";
      os << "<text x=\"" << x0 - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
    }
    for (std::size_t vi = 0; vi < values.size(); ++vi)
      os << "<text x=\"" << px(vi) << "\" y=\"" << y0 + panel_h + 18 << "\" text-anchor=\"middle\">"
         << escape_xml(values[vi]) << "</text>\n";
    os << "<text x=\"" << x0 + panel_w / 2 << "\" y=\"" << y0 + panel_h + 38 << "\" text-anchor=\"middle\">"
       << escape_xml(parameter) << "</text>\n";
    if (ci == 0)
      os << "<text x=\"" << 14 << "\" y=\"" << y0 + panel_h / 2 << "\" transform=\"rotate(-90 14 "
         << y0 + panel_h / 2 << ")\" text-anchor=\"middle\">MSPE</text>\n";

    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      const char* color = kPalette[mi % std::size(kPalette)];
      std::string points;
      for (std::size_t vi = 0; vi < values.size(); ++vi) {
        const auto it = std::find_if(cells.begin(), cells.end(), [&](const MarginalCell& c) {
          return c.dgp_case == cases[ci] && c.value == values[vi] && c.method == methods[mi];
        });
        if (it == cells.end() || !std::isfinite(it->mspe)) continue;
        points += fmt(px(vi)) + "," + fmt(py(it->mspe)) + " ";
        os << "<circle cx=\"" << px(vi) << "\" cy=\"" << py(it->mspe) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      }
      os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"" << points << "\"/>\n";
    }
  }

  const double lx = margin_l + cases.size() * (panel_w + margin_l);
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    const double ly = margin_t + 10 + 20.0 * mi;
    os << "<line x1=\"" << lx << "\" x2=\"" << lx + 24 << "\" y1=\"" << ly << "\" y2=\"" << ly << "\" stroke=\""
       << kPalette[mi % std::size(kPalette)] << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << lx + 30 << "\" y=\"" << ly + 4 << "\">" << escape_xml(methods[mi]) << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace scm
