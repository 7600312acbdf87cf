#pragma once

#include <stdexcept>
#include <string>

namespace echofit {

/// Model evaluated outside its documented domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed input data, files or configuration.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The fit problem cannot be posed (too few points, bad initial values).
class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void require_domain(bool ok, const char* what) {
  if (!ok) throw DomainError(what);
}
}  // namespace detail

}  // namespace echofit
