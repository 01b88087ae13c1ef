#pragma once

#include <stdexcept>
#include <string>

namespace smx {

// Shape or extent mismatch between operands.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Input outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

// An iterative algorithm failed to converge.
class NumericalError : public std::runtime_error {
  public:
    NumericalError(const std::string &what, int iterations)
        : std::runtime_error(what), iterations_(iterations) {}
    int iterations() const { return iterations_; }

  private:
    int iterations_ = 0;
};

// A configured resource cap (e.g. materialization size) was exceeded.
class ResourceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace smx
