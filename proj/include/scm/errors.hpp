#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace scm {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller passed inputs that violate a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class NonFiniteInput : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class DimensionMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// No donor is left after removing flagged units.
class EmptyDonorPool : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

/// The spillover system (I - W) e = g cannot be solved reliably.
class SingularSystem : public NumericalError {
 public:
  SingularSystem(const std::string& what, double determinant, double condition)
      : NumericalError(what), determinant_(determinant), condition_(condition) {}

  double determinant() const noexcept { return determinant_; }
  double condition() const noexcept { return condition_; }

 private:
  double determinant_;
  double condition_;
};

/// The linear spillover design has linearly dependent columns.
class RankDeficientDesign : public NumericalError {
 public:
  RankDeficientDesign(const std::string& what, std::vector<std::size_t> columns)
      : NumericalError(what), columns_(std::move(columns)) {}

  const std::vector<std::size_t>& columns() const noexcept { return columns_; }

 private:
  std::vector<std::size_t> columns_;
};

// Input file problems.
class DataError : public Error {
 public:
  using Error::Error;
};

class MissingCell : public DataError {
 public:
  using DataError::DataError;
};

class DuplicateCell : public DataError {
 public:
  using DataError::DataError;
};

class UnknownUnit : public DataError {
 public:
  using DataError::DataError;
};

class NonNumericOutcome : public DataError {
 public:
  using DataError::DataError;
};

class TreatmentTimeOutOfRange : public DataError {
 public:
  using DataError::DataError;
};

class MalformedFile : public DataError {
 public:
  using DataError::DataError;
};

}  // namespace scm
