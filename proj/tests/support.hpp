#pragma once

// Test-only helpers: random datasets and parameters, finite differences.

#include "mblr/data.hpp"
#include "mblr/model.hpp"

#include <Eigen/Dense>

#include <functional>
#include <random>
#include <string>
#include <vector>

namespace mblr::testing {

inline SafetyDataset random_dataset(std::uint64_t seed, std::size_t N, std::size_t K, std::size_t L,
                                    const std::vector<std::size_t>& covariate_sizes, double event_rate = 0.3) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SafetyDataset d;
  for (std::size_t j = 0; j < covariate_sizes.size(); ++j) {
    Covariate c{"c" + std::to_string(j), {}};
    for (std::size_t v = 0; v < covariate_sizes[j]; ++v) c.levels.push_back("v" + std::to_string(v));
    d.schema.covariates.push_back(c);
  }
  for (std::size_t k = 0; k < K; ++k) d.schema.issue_names.push_back("ae" + std::to_string(k));
  for (std::size_t l = 0; l < L; ++l) d.trial_ids.push_back("T" + std::to_string(l));
  for (std::size_t i = 0; i < N; ++i) {
    PatientRecord r;
    r.trial = i % L;
    r.treatment = static_cast<int>((i / L) % 2);
    for (auto s : covariate_sizes) r.levels.push_back(static_cast<int>(rng() % s));
    for (std::size_t k = 0; k < K; ++k) r.outcomes.push_back(unif(rng) < event_rate ? 1 : 0);
    d.records.push_back(r);
  }
  return d;
}

/// Locations ~ N(0, 0.5^2), sds uniform in (0.3 d/3, 2.5 d/3).
inline ParameterSet random_theta(const ModelSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> norm(0.0, 0.5);
  std::uniform_real_distribution<double> unif(0.3, 2.5);
  ParameterSet p = default_parameters(spec);
  const auto& lay = *p.layout;
  for (std::size_t i = 0; i < lay.dim(); ++i)
    p.values(static_cast<Eigen::Index>(i)) = lay.is_sd(i) ? unif(rng) * spec.prior.d / 3.0 : norm(rng);
  lay.canonicalize(p.values);
  return p;
}

inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                   double h) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

inline Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                   const Eigen::VectorXd& x, double h) {
  Eigen::MatrixXd J(x.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd a = x, b = x;
    a(i) += h;
    b(i) -= h;
    J.col(i) = (f(a) - f(b)) / (2.0 * h);
  }
  return J;
}

/// max_i |a_i - b_i| / max(|b_i|, 1)
inline double max_rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return ((a - b).array().abs() / b.array().abs().max(1.0)).maxCoeff();
}

}  // namespace mblr::testing
