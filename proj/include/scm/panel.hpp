#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace scm {

/// Dense row-major matrix of doubles. Rows are units, columns are periods
/// wherever the library stores outcomes.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  /// Copy of the leading `n` columns.
  Matrix leading_cols(std::size_t n) const;

  std::span<const double> data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Outcomes of N units over T periods with one treated unit. Treatment takes
/// effect from period index `pre_periods` onwards.
struct Panel {
  Matrix outcomes;
  std::size_t treated_unit = 0;
  std::size_t pre_periods = 0;
  std::vector<std::size_t> spillover_units;  // sorted, unique

  // Optional labels carried through from file input; empty means "use indices".
  std::vector<std::string> unit_ids;
  std::vector<std::int64_t> times;

  std::size_t units() const noexcept { return outcomes.rows(); }
  std::size_t periods() const noexcept { return outcomes.cols(); }
  std::size_t post_periods() const noexcept { return periods() - pre_periods; }

  bool is_spillover(std::size_t unit) const;

  /// All units except the treated one, ascending.
  std::vector<std::size_t> donors() const;
  /// Donors not flagged as spillover-affected, ascending.
  std::vector<std::size_t> clean_donors() const;

  std::span<const double> pre(std::size_t unit) const {
    return outcomes.row(unit).first(pre_periods);
  }
  std::span<const double> post(std::size_t unit) const {
    return outcomes.row(unit).subspan(pre_periods);
  }

  std::string unit_label(std::size_t unit) const;
  std::int64_t time_label(std::size_t period) const;

  /// Throws InvalidArgument naming the violated invariant. `spillover_units`
  /// must already be sorted and unique.
  void validate() const;

  bool operator==(const Panel&) const = default;
};

}  // namespace scm
