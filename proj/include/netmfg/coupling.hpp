#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "netmfg/error.hpp"

namespace netmfg {

enum class CouplingFamily { Power, Log, Bounded };

// Local coupling F(m) + shift, one of
//   power    kappa m^theta
//   log      kappa log(m + epsilon)
//   bounded  kappa m / (1 + m)
// with kappa >= 0 so that F is bounded from below on [0, inf).
struct CouplingSpec {
  CouplingFamily family = CouplingFamily::Power;
  double kappa = 1.0;
  double theta = 1.0;
  double epsilon = 1e-6;
  double shift = 0.0;
  double truncation = std::numeric_limits<double>::infinity();

  void validate() const {
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ModelError("coupling kappa must be nonnegative");
    if (family == CouplingFamily::Power && !(theta > 0.0)) throw ModelError("coupling theta must be positive");
    if (family == CouplingFamily::Log && !(epsilon > 0.0)) throw ModelError("coupling epsilon must be positive");
    if (!std::isfinite(shift)) throw ModelError("coupling shift must be finite");
    if (!(truncation > 0.0)) throw ModelError("truncation level must be positive");
  }

  double operator()(double r) const {
    r = std::clamp(r, 0.0, truncation);
    switch (family) {
      case CouplingFamily::Power: return kappa * std::pow(r, theta) + shift;
      case CouplingFamily::Log: return kappa * std::log(r + epsilon) + shift;
      case CouplingFamily::Bounded: return kappa * r / (1.0 + r) + shift;
    }
    return shift;
  }

  // inf over r >= 0; F >= -M with M = -lower_bound().
  double lower_bound() const { return (*this)(0.0); }

  bool strictly_monotone() const { return kappa > 0.0; }
};

// F_n(r) = F(min(r, n)).
inline CouplingSpec truncate_coupling(const CouplingSpec& F, double n) {
  if (!(n > 0.0)) throw ModelError("truncation level must be positive");
  CouplingSpec out = F;
  out.truncation = std::min(F.truncation, n);
  return out;
}

inline std::string to_string(CouplingFamily f) {
  switch (f) {
    case CouplingFamily::Power: return "power";
    case CouplingFamily::Log: return "log";
    case CouplingFamily::Bounded: return "bounded";
  }
  return "power";
}

} // namespace netmfg
