#pragma once

#include <stdexcept>
#include <string>

namespace rome {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke a documented precondition (dimension mismatch and the like).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration: bad parameter values, missing keys, degenerate schemes.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Problems with input data: missing columns, empty datasets, unreadable files.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: non-finite values, factorization failures, divergence.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Alternating projections failed to land in simplex-and-ball.
class InfeasibleError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Paired test with zero variance of the differences.
class DegenerateTestError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint does not match the configuration it is being used with.
class CompatibilityError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Runs fn(), re-raising any library error with `context` prefixed and its
/// category preserved.
template <class Fn>
auto with_context(const std::string& context, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const DegenerateTestError& e) {
    throw DegenerateTestError(context + ": " + e.what());
  } catch (const InfeasibleError& e) {
    throw InfeasibleError(context + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(context + ": " + e.what());
  } catch (const CompatibilityError& e) {
    throw CompatibilityError(context + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(context + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(context + ": " + e.what());
  } catch (const ContractError& e) {
    throw ContractError(context + ": " + e.what());
  }
}

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace detail

}  // namespace rome
