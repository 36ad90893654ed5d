#pragma once

#include <charconv>
#include <cmath>
#include <limits>
#include <string>

namespace mblr {

inline constexpr double kLn2Pi = 1.8378770664093454836;
// Two-sided 90% normal quantile.
inline constexpr double kZ90 = 1.6449;

/// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double log_sigmoid(double x) { return -softplus(-x); }

inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Bernoulli log-likelihood y*eta - softplus(eta).
inline double bernoulli_logit_ll(int y, double eta) {
  return y ? log_sigmoid(eta) : log_sigmoid(-eta);
}

/// Shortest round-trip decimal text; "nan"/"inf"/"-inf" for non-finite.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

}  // namespace mblr
