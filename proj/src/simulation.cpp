#include "scm/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>
#include <thread>

#include "scm/errors.hpp"

namespace scm {
namespace {

std::uint64_t fmix64(std::uint64_t k) {
  k ^= k >> 33;
  k *= 0xff51afd7ed558ccdULL;
  k ^= k >> 33;
  k *= 0xc4ceb9fe1a85ec53ULL;
  k ^= k >> 33;
  return k;
}

template <class T>
void require_nonempty(const std::vector<T>& v, const char* field) {
  if (v.empty()) throw InvalidArgument(std::string("grid spec field '") + field + "' is empty");
}

// Per-task output slot; written by exactly one worker.
struct TaskResult {
  std::vector<double> errors;        // per method
  std::vector<std::string> reasons;  // per method, empty when valid
};

}  // namespace

void GridSpec::validate() const {
  require_nonempty(dgp_cases, "dgp_cases");
  require_nonempty(pre_periods_values, "pre_periods");
  require_nonempty(n_controls_values, "n_controls");
  require_nonempty(spillover_ratio_values, "spillover_ratio");
  require_nonempty(treatment_effect_values, "treatment_effect");
  require_nonempty(spill_ratio_values, "spill_ratio");
  require_nonempty(methods, "methods");
  if (replications < 1) throw InvalidArgument("grid spec field 'replications' must be >= 1");
  for (auto v : pre_periods_values)
    if (v < 1) throw InvalidArgument("grid spec field 'pre_periods' must hold values >= 1");
  for (auto v : n_controls_values)
    if (v < 2) throw InvalidArgument("grid spec field 'n_controls' must hold values >= 2");
  for (auto v : spillover_ratio_values)
    if (!(v > 0.0 && v < 1.0))
      throw InvalidArgument("grid spec field 'spillover_ratio' must hold values in (0, 1)");
  for (auto v : treatment_effect_values)
    if (!(v > 0.0) || !std::isfinite(v))
      throw InvalidArgument("grid spec field 'treatment_effect' must hold positive values");
  for (auto v : spill_ratio_values)
    if (!std::isfinite(v)) throw InvalidArgument("grid spec field 'spill_ratio' must hold finite values");
  if (dgp.n_factors < 1) throw InvalidArgument("grid spec field 'dgp.n_factors' must be >= 1");
  if (!(dgp.loading_sd >= 0.0) || !std::isfinite(dgp.loading_sd))
    throw InvalidArgument("grid spec field 'dgp.loading_sd' must be non-negative");
  if (!(dgp.noise_sd >= 0.0) || !std::isfinite(dgp.noise_sd))
    throw InvalidArgument("grid spec field 'dgp.noise_sd' must be non-negative");
  if (grid_size() >= (std::uint64_t{1} << 32) || replications >= (std::uint64_t{1} << 32))
    throw InvalidArgument("grid spec is too large for seed derivation");
}

std::size_t GridSpec::grid_size() const {
  return dgp_cases.size() * pre_periods_values.size() * n_controls_values.size() *
         spillover_ratio_values.size() * treatment_effect_values.size() * spill_ratio_values.size();
}

std::vector<DGPConfig> enumerate_grid(const GridSpec& spec) {
  std::vector<DGPConfig> out;
  out.reserve(spec.grid_size());
  for (DgpCase dc : spec.dgp_cases)
    for (std::size_t pre : spec.pre_periods_values)
      for (std::size_t nc : spec.n_controls_values)
        for (double sr : spec.spillover_ratio_values)
          for (double te : spec.treatment_effect_values)
            for (double st : spec.spill_ratio_values) {
              DGPConfig c;
              c.dgp_case = dc;
              c.pre_periods = pre;
              c.n_controls = nc;
              c.spillover_ratio = sr;
              c.treatment_effect = te;
              c.spill_to_treat_ratio = st;
              c.n_factors = spec.dgp.n_factors;
              c.loading_sd = spec.dgp.loading_sd;
              c.noise_sd = spec.dgp.noise_sd;
              c.treated_loadings = spec.dgp.treated_loadings;
              out.push_back(c);
            }
  return out;
}

std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t config_index,
                          std::uint64_t replication) {
  return fmix64(fmix64(base_seed) + ((config_index << 32) | (replication & 0xffffffffULL)));
}

double mspe(const std::vector<double>& errors) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double e : errors) {
    if (std::isfinite(e)) {
      sum += e * e;
      ++n;
    }
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(n);
}

GridResult run_grid(const GridSpec& spec, const RunOptions& options) {
  spec.validate();
  const std::vector<DGPConfig> configs = enumerate_grid(spec);
  const std::size_t reps = spec.replications;
  const std::size_t n_methods = spec.methods.size();
  const std::size_t n_tasks = configs.size() * reps;

  std::vector<TaskResult> results(n_tasks);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (;;) {
      const std::size_t task = next.fetch_add(1, std::memory_order_relaxed);
      if (task >= n_tasks) return;
      const std::size_t ci = task / reps;
      const std::size_t rep = task % reps;
      DGPConfig cfg = configs[ci];
      cfg.seed = derive_seed(spec.base_seed, ci, rep);
      TaskResult& slot = results[task];
      slot.errors.assign(n_methods, std::numeric_limits<double>::quiet_NaN());
      slot.reasons.assign(n_methods, {});
      GeneratedDataset data;
      try {
        data = generate(cfg);
      } catch (const std::exception& e) {
        for (auto& r : slot.reasons) r = std::string("generation failed: ") + e.what();
        continue;
      }
      for (std::size_t m = 0; m < n_methods; ++m) {
        try {
          const EffectEstimate est = estimate(data.panel, spec.methods[m]);
          const double pe = data.true_y0_treated_post.front() - est.counterfactual_post.front();
          if (std::isfinite(pe)) {
            slot.errors[m] = pe;
          } else {
            slot.reasons[m] = "non-finite prediction";
          }
        } catch (const std::exception& e) {
          slot.reasons[m] = e.what();
        }
      }
    }
  };

  std::size_t threads = options.threads == 0 ? std::thread::hardware_concurrency() : options.threads;
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n_tasks, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  GridResult out;
  out.pe.reserve(configs.size() * n_methods);
  out.table.rows.reserve(configs.size() * n_methods);
  for (std::size_t ci = 0; ci < configs.size(); ++ci) {
    for (std::size_t m = 0; m < n_methods; ++m) {
      PEVector pe;
      pe.config_index = ci;
      pe.method = spec.methods[m].label();
      pe.errors.resize(reps);
      for (std::size_t rep = 0; rep < reps; ++rep) {
        const TaskResult& r = results[ci * reps + rep];
        pe.errors[rep] = r.errors[m];
        if (!r.reasons[m].empty())
          pe.failures.push_back("rep " + std::to_string(rep) + ": " + r.reasons[m]);
      }
      MSPERow row;
      row.config_index = ci;
      row.config = configs[ci];
      row.method = pe.method;
      row.mspe = mspe(pe.errors);
      row.n_valid = reps - pe.failures.size();
      row.unreliable = 2 * pe.failures.size() > reps;
      out.table.rows.push_back(std::move(row));
      out.pe.push_back(std::move(pe));
    }
  }
  for (const char* p : kGridParameters) out.table.marginals[p] = marginalize(out.table.rows, p);
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string parameter_value(const DGPConfig& c, const std::string& parameter) {
  if (parameter == "dgp_case") return std::string(dgp_case_name(c.dgp_case));
  if (parameter == "pre_periods") return std::to_string(c.pre_periods);
  if (parameter == "n_controls") return std::to_string(c.n_controls);
  if (parameter == "spillover_ratio") return format_double(c.spillover_ratio);
  if (parameter == "treatment_effect") return format_double(c.treatment_effect);
  if (parameter == "spill_ratio") return format_double(c.spill_to_treat_ratio);
  throw InvalidArgument("unknown grid parameter '" + parameter + "'");
}

std::vector<MarginalCell> marginalize(const std::vector<MSPERow>& rows, const std::string& parameter) {
  std::vector<MarginalCell> cells;
  for (const MSPERow& row : rows) {
    const std::string dc(dgp_case_name(row.config.dgp_case));
    const std::string value = parameter_value(row.config, parameter);
    auto it = std::find_if(cells.begin(), cells.end(), [&](const MarginalCell& c) {
      return c.dgp_case == dc && c.value == value && c.method == row.method;
    });
    if (it == cells.end()) {
      cells.push_back(MarginalCell{dc, value, row.method, 0.0, 0});
      it = std::prev(cells.end());
    }
    if (std::isfinite(row.mspe)) {
      it->mspe += row.mspe;
      ++it->n_configs;
    }
  }
  for (auto& c : cells)
    c.mspe = c.n_configs == 0 ? std::numeric_limits<double>::quiet_NaN()
                              : c.mspe / static_cast<double>(c.n_configs);
  return cells;
}

void write_mspe_csv(std::ostream& os, const MSPETable& table) {
  os << "config_index,dgp_case,pre_periods,n_controls,spillover_ratio,treatment_effect,"
        "spill_ratio,method,mspe,n_valid,unreliable\n";
  for (const MSPERow& r : table.rows) {
    os << r.config_index;
    for (const char* p : kGridParameters) os << ',' << parameter_value(r.config, p);
    os << ',' << r.method << ',' << format_double(r.mspe) << ',' << r.n_valid << ','
       << (r.unreliable ? 1 : 0) << '\n';
  }
}

void write_marginal_csv(std::ostream& os, const std::string& parameter,
                        const std::vector<MarginalCell>& cells) {
  if (parameter == "dgp_case") {
    os << "dgp_case,method,mspe,n_configs\n";
    for (const auto& c : cells)
      os << c.dgp_case << ',' << c.method << ',' << format_double(c.mspe) << ',' << c.n_configs << '\n';
    return;
  }
  os << "dgp_case," << parameter << ",method,mspe,n_configs\n";
  for (const auto& c : cells)
    os << c.dgp_case << ',' << c.value << ',' << c.method << ',' << format_double(c.mspe) << ','
       << c.n_configs << '\n';
}

void write_pe_csv(std::ostream& os, const std::vector<PEVector>& pe) {
  os << "config_index,method,replication,pe\n";
  for (const PEVector& v : pe)
    for (std::size_t rep = 0; rep < v.errors.size(); ++rep)
      os << v.config_index << ',' << v.method << ',' << rep << ',' << format_double(v.errors[rep]) << '\n';
}

std::vector<MethodSpec> iterative_variants() {
  std::vector<MethodSpec> out;
  for (bool replace : {true, false})
    for (bool use : {true, false}) out.push_back(MethodSpec{Method::Iterative, {replace, use}});
  return out;
}

IterativeSweep summarize_iterative_sweep(const MSPETable& table) {
  IterativeSweep out;
  const auto variants = iterative_variants();
  std::vector<MSPERow> rows;
  for (const MSPERow& r : table.rows) {
    const bool is_variant = std::any_of(variants.begin(), variants.end(),
                                        [&](const MethodSpec& v) { return v.label() == r.method; });
    if (is_variant) rows.push_back(r);
  }
  for (const MarginalCell& c : marginalize(rows, "dgp_case")) {
    const MethodSpec spec = MethodSpec::parse(c.method);
    out.table.push_back({c.dgp_case, spec.iterative.replace_pre, spec.iterative.use_cleaned, c.mspe});
  }
  out.by_spillover_ratio = marginalize(rows, "spillover_ratio");
  return out;
}

}  // namespace scm
