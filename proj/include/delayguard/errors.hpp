#pragma once

#include <stdexcept>
#include <string>

namespace delayguard {

/// Argument outside an operation's domain (bad offset, bad index, dimension mismatch).
class DomainError : public std::domain_error
{
public:
  using std::domain_error::domain_error;
};

/// A barrier functional was evaluated where its safe-set functional h is not positive.
class BarrierDomainError : public std::runtime_error
{
public:
  BarrierDomainError(const std::string & what, double h_value)
  : std::runtime_error(what), h_(h_value) {}

  double h() const noexcept { return h_; }

private:
  double h_;
};

/// The sliding-surface gradient G vanished, so the surface controller is undefined.
class DegenerateSurfaceError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or construction parameters.
class ConfigError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite numbers appeared during integration.
class NumericalAbort : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

}  // namespace delayguard
