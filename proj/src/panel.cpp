#include "scm/panel.hpp"

#include <algorithm>
#include <cmath>

#include "scm/errors.hpp"

namespace scm {

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionMismatch("Matrix: ragged initializer rows");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols_) throw DimensionMismatch("Matrix: ragged rows");
    std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  }
  return m;
}

Matrix Matrix::leading_cols(std::size_t n) const {
  if (n > cols_) throw DimensionMismatch("Matrix::leading_cols: not enough columns");
  Matrix out(rows_, n);
  for (std::size_t r = 0; r < rows_; ++r) {
    auto src = row(r).first(n);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

bool Panel::is_spillover(std::size_t unit) const {
  return std::binary_search(spillover_units.begin(), spillover_units.end(), unit);
}

std::vector<std::size_t> Panel::donors() const {
  std::vector<std::size_t> out;
  out.reserve(units());
  for (std::size_t u = 0; u < units(); ++u)
    if (u != treated_unit) out.push_back(u);
  return out;
}

std::vector<std::size_t> Panel::clean_donors() const {
  std::vector<std::size_t> out;
  for (std::size_t u = 0; u < units(); ++u)
    if (u != treated_unit && !is_spillover(u)) out.push_back(u);
  return out;
}

std::string Panel::unit_label(std::size_t unit) const {
  return unit < unit_ids.size() ? unit_ids[unit] : std::to_string(unit);
}

std::int64_t Panel::time_label(std::size_t period) const {
  return period < times.size() ? times[period] : static_cast<std::int64_t>(period);
}

void Panel::validate() const {
  if (units() < 2) throw InvalidArgument("panel needs at least one donor (N >= 2)");
  if (pre_periods < 1 || pre_periods >= periods())
    throw InvalidArgument("panel needs 1 <= pre_periods < periods (got pre_periods=" +
                          std::to_string(pre_periods) + ", periods=" +
                          std::to_string(periods()) + ")");
  if (treated_unit >= units()) throw InvalidArgument("treated unit index out of range");
  if (!std::is_sorted(spillover_units.begin(), spillover_units.end()) ||
      std::adjacent_find(spillover_units.begin(), spillover_units.end()) !=
          spillover_units.end())
    throw InvalidArgument("spillover units must be sorted and unique");
  for (std::size_t u : spillover_units) {
    if (u >= units()) throw InvalidArgument("spillover unit index out of range");
    if (u == treated_unit) throw InvalidArgument("treated unit cannot be flagged as spillover");
  }
  if (!unit_ids.empty() && unit_ids.size() != units())
    throw InvalidArgument("unit label count does not match unit count");
  if (!times.empty() && times.size() != periods())
    throw InvalidArgument("time label count does not match period count");
  for (double v : outcomes.data())
    if (!std::isfinite(v)) throw NonFiniteInput("panel outcomes contain a non-finite value");
}

}  // namespace scm
