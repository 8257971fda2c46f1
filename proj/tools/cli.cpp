#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "scm/errors.hpp"
#include "scm/estimators.hpp"
#include "scm/ingest.hpp"
#include "scm/kernels.hpp"
#include "scm/report.hpp"
#include "scm/simulation.hpp"

namespace scm::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

// Usage problems detected after parsing (bad spec file, unknown names).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GridFlags {
  std::string spec_path;
  std::string out_dir;
  std::size_t replications = 0;
  std::uint64_t base_seed = 0;
  std::size_t threads = 0;
  bool dump_pe = false;
  CLI::Option* replications_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

struct EstimateFlags {
  std::string panel_path;
  std::string config_path;
  std::string method;
  std::string out_path;
};

struct ReportFlags {
  std::string results_path;
  std::string group_by;
  std::string out_path;
  std::string format = "csv";
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  return out;
}

GridSpec load_grid_spec(const GridFlags& f) {
  GridSpec spec;
  if (!f.spec_path.empty()) {
    try {
      spec = parse_grid_spec(read_text(f.spec_path));
    } catch (const InvalidArgument& e) {
      throw UsageError(f.spec_path + ": " + e.what());
    }
  }
  if (f.replications_opt->count() > 0) spec.replications = f.replications;
  if (f.seed_opt->count() > 0) spec.base_seed = f.base_seed;
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  return spec;
}

void prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory '" + dir + "'");
}

void write_manifest(const fs::path& path, const std::string& command, const GridSpec& spec,
                    std::size_t threads) {
  nlohmann::json m;
  m["tool"] = "scm";
  m["version"] = kVersion;
  m["command"] = command;
  m["grid"] = nlohmann::json::parse(grid_spec_json(spec));
  m["grid_hash"] = grid_spec_hash(spec);
  m["base_seed"] = spec.base_seed;
  m["threads"] = threads;
  m["kernel"] = std::string(kernels::active().name);
  m["seed_derivation"] = "fmix64(fmix64(base_seed) + (config_index << 32 | replication))";
  m["rng"] = "std::mt19937_64 + std::normal_distribution<double>";
  auto out = open_out(path);
  out << m.dump(2) << '\n';
}

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

void print_case_summary(const MSPETable& table) {
  std::cout << "MSPE by DGP case (mean over grid cells)\n";
  for (const auto& c : table.marginals.at("dgp_case"))
    std::cout << "  " << std::left << std::setw(12) << c.dgp_case << std::setw(16) << c.method
              << format_double(c.mspe) << '\n';
}

int cmd_simulate(const GridFlags& f) {
  const GridSpec spec = load_grid_spec(f);
  prepare_out_dir(f.out_dir);
  const std::size_t threads = resolve_threads(f.threads);
  const GridResult result = run_grid(spec, RunOptions{threads});
  const fs::path dir(f.out_dir);
  {
    auto out = open_out(dir / "mspe.csv");
    write_mspe_csv(out, result.table);
  }
  for (const auto& [param, cells] : result.table.marginals) {
    auto out = open_out(dir / ("marginal_" + param + ".csv"));
    write_marginal_csv(out, param, cells);
  }
  if (f.dump_pe) {
    auto out = open_out(dir / "pe.csv");
    write_pe_csv(out, result.pe);
  }
  write_manifest(dir / "manifest.json", "simulate", spec, threads);

  std::size_t unreliable = 0;
  for (const auto& r : result.table.rows) unreliable += r.unreliable ? 1 : 0;
  std::cout << "configs: " << spec.grid_size() << ", replications: " << spec.replications
            << ", rows: " << result.table.rows.size() << '\n';
  if (unreliable > 0) std::cout << "unreliable cells (>50% failed replications): " << unreliable << '\n';
  print_case_summary(result.table);
  return kOk;
}

int cmd_sweep(GridFlags f) {
  GridSpec spec = load_grid_spec(f);
  spec.methods = iterative_variants();
  prepare_out_dir(f.out_dir);
  const std::size_t threads = resolve_threads(f.threads);
  const GridResult result = run_grid(spec, RunOptions{threads});
  const IterativeSweep sweep = summarize_iterative_sweep(result.table);
  const fs::path dir(f.out_dir);
  {
    auto out = open_out(dir / "iterative_mspe.csv");
    write_mspe_csv(out, result.table);
  }
  {
    auto out = open_out(dir / "iterative_2x2.csv");
    out << "dgp_case,replace_pre,use_cleaned,mspe\n";
    for (const auto& c : sweep.table)
      out << c.dgp_case << ',' << (c.replace_pre ? "yes" : "no") << ',' << (c.use_cleaned ? "yes" : "no")
          << ',' << format_double(c.mspe) << '\n';
  }
  {
    auto out = open_out(dir / "iterative_by_spillover_ratio.csv");
    write_marginal_csv(out, "spillover_ratio", sweep.by_spillover_ratio);
  }
  write_manifest(dir / "manifest.json", "sweep-iterative", spec, threads);

  std::cout << "Iterative variants, mean MSPE over grid cells\n";
  for (const auto& c : sweep.table)
    std::cout << "  " << std::left << std::setw(12) << c.dgp_case << "replace_pre=" << std::setw(4)
              << (c.replace_pre ? "yes" : "no") << " use_cleaned=" << std::setw(4)
              << (c.use_cleaned ? "yes" : "no") << ' ' << format_double(c.mspe) << '\n';
  return kOk;
}

int cmd_estimate(const EstimateFlags& f) {
  RunConfig config = RunConfig::load(f.config_path);
  std::string selector = !f.method.empty() ? f.method : config.method.value_or("all");

  std::vector<MethodSpec> specs;
  if (selector == "all") {
    for (Method m : kAllMethods) specs.push_back(MethodSpec{m, {}});
  } else {
    try {
      specs.push_back(MethodSpec::parse(selector));
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
  }
  for (auto& s : specs)
    if (s.method == Method::Iterative && selector == "all") s.iterative = config.iterative_options;
  if (selector == "iterative") specs.front().iterative = config.iterative_options;

  const PanelReadResult read = read_panel(f.panel_path, config);
  for (const auto& w : read.warnings) std::cerr << "warning: " << w << '\n';
  const Panel& panel = read.panel;

  const bool many = specs.size() > 1;
  if (many) prepare_out_dir(f.out_path);

  std::vector<EffectEstimate> done;
  int status = kOk;
  for (const auto& spec : specs) {
    try {
      EffectEstimate est = estimate(panel, spec);
      const fs::path target = many ? fs::path(f.out_path) / (est.label + ".csv") : fs::path(f.out_path);
      write_results(target, est, panel);
      std::cout << std::left << std::setw(14) << est.label << " mean post-period effect: "
                << format_double(est.mean_effect()) << '\n';
      for (const auto& w : est.diagnostics.warnings) std::cerr << "warning (" << est.label << "): " << w << '\n';
      if (!est.diagnostics.converged)
        std::cerr << "warning (" << est.label << "): simplex solver hit its iteration limit\n";
      done.push_back(std::move(est));
    } catch (const SingularSystem& e) {
      std::cerr << "error (" << spec.label() << "): " << e.what() << '\n';
      status = kNumericalError;
    } catch (const NumericalError& e) {
      std::cerr << "error (" << spec.label() << "): " << e.what() << '\n';
      status = kNumericalError;
    } catch (const EmptyDonorPool& e) {
      std::cerr << "error (" << spec.label() << "): " << e.what() << '\n';
      if (status == kOk) status = kDataError;
    }
  }

  if (many && !done.empty()) {
    auto out = open_out(fs::path(f.out_path) / "gaps.csv");
    out << "time";
    for (const auto& e : done) out << ",gap_" << e.label;
    out << '\n';
    const auto actual = panel.outcomes.row(panel.treated_unit);
    for (std::size_t t = 0; t < panel.periods(); ++t) {
      out << panel.time_label(t);
      for (const auto& e : done) {
        const double cf = t < panel.pre_periods ? e.counterfactual_pre[t]
                                                : e.counterfactual_post[t - panel.pre_periods];
        out << ',' << format_double(actual[t] - cf);
      }
      out << '\n';
    }
  }
  return status;
}

int cmd_report(const ReportFlags& f) {
  try {
    check_parameter_name(f.group_by);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  if (f.format != "csv" && f.format != "svg") throw UsageError("--format must be csv or svg");
  const std::vector<MSPERow> rows = read_mspe_csv(f.results_path);
  const std::vector<MarginalCell> cells = marginalize(rows, f.group_by);
  auto out = open_out(f.out_path);
  if (f.format == "csv") {
    write_marginal_csv(out, f.group_by, cells);
  } else {
    write_marginal_svg(out, f.group_by, cells);
  }
  std::cout << "wrote " << cells.size() << " cells grouped by " << f.group_by << " to " << f.out_path << '\n';
  return kOk;
}

void add_grid_flags(CLI::App* sub, GridFlags& f) {
  sub->add_option("--spec", f.spec_path, "Grid spec JSON (or a run manifest); defaults to the full grid")
      ->envname("SCM_SPEC");
  sub->add_option("--out", f.out_dir, "Output directory")->required()->envname("SCM_OUT");
  f.replications_opt = sub->add_option("--replications", f.replications, "Replications per grid cell")
                           ->envname("SCM_REPLICATIONS")
                           ->check(CLI::PositiveNumber);
  f.seed_opt = sub->add_option("--base-seed", f.base_seed, "Base seed for per-replication seeds")
                   ->envname("SCM_BASE_SEED");
  sub->add_option("--threads", f.threads, "Worker threads (0 = all cores)")->envname("SCM_THREADS");
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Synthetic control estimators with spillover handling"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  std::string kernel;
  app.add_option("--kernel", kernel, "Arithmetic kernel: scalar or avx2 (default: best available)")
      ->envname("SCM_KERNEL");

  GridFlags sim_flags;
  auto* simulate = app.add_subcommand("simulate", "Run the Monte Carlo grid and write MSPE tables");
  add_grid_flags(simulate, sim_flags);
  simulate->add_flag("--pe", sim_flags.dump_pe, "Also write per-replication prediction errors");

  GridFlags sweep_flags;
  auto* sweep = app.add_subcommand("sweep-iterative", "Compare the four iterative cleaning variants");
  add_grid_flags(sweep, sweep_flags);

  EstimateFlags est_flags;
  auto* est = app.add_subcommand("estimate", "Estimate effects on a panel CSV");
  est->add_option("--panel", est_flags.panel_path, "Long-format panel CSV")->required()->envname("SCM_PANEL");
  est->add_option("--config", est_flags.config_path, "Run config JSON")->required()->envname("SCM_CONFIG");
  est->add_option("--method", est_flags.method,
                  "unrestricted, restricted, iterative, inclusive, sp, iterative_yn-style variant, or all")
      ->envname("SCM_METHOD");
  est->add_option("--out", est_flags.out_path, "Result file (a directory when --method all)")
      ->required()
      ->envname("SCM_OUT");

  ReportFlags rep_flags;
  auto* report = app.add_subcommand("report", "Marginal MSPE series from a simulate result");
  report->add_option("--results", rep_flags.results_path, "mspe.csv from simulate")
      ->required()
      ->envname("SCM_RESULTS");
  report->add_option("--group-by", rep_flags.group_by, "Grid parameter to group by")
      ->required()
      ->envname("SCM_GROUP_BY");
  report->add_option("--out", rep_flags.out_path, "Output file")->required()->envname("SCM_OUT");
  report->add_option("--format", rep_flags.format, "csv or svg")->envname("SCM_FORMAT");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }

  try {
    if (!kernel.empty() && !kernels::select(kernel))
      throw UsageError("kernel '" + kernel + "' is unknown or not supported on this CPU");
    if (simulate->parsed()) return cmd_simulate(sim_flags);
    if (sweep->parsed()) return cmd_sweep(sweep_flags);
    if (est->parsed()) return cmd_estimate(est_flags);
    if (report->parsed()) return cmd_report(rep_flags);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const EmptyDonorPool& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const InvalidArgument& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsageError;
}

}  // namespace scm::cli
