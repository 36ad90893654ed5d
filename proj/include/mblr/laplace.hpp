#pragma once

#include "mblr/model.hpp"
#include "mblr/summary.hpp"

#include <Eigen/Dense>

#include <array>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace mblr {

struct MapOptions {
  double grad_tol = 1e-6;
  /// Location solve tolerance while the variance components are optimized
  /// (the outer finite differences need a tighter inner optimum).
  double inner_tol = 1e-9;
  int max_iter = 200;
  /// Per-coordinate pin; pinned coordinates keep their initial value.
  std::vector<bool> fixed;
  double separation_threshold = 15.0;
};

/// Mode of the posterior on the unconstrained scale.
///
/// Locations are the conditional mode given the variance components. Free
/// variance components maximize their Laplace-approximated marginal
///   l(phi) = T(theta_hat(phi), phi) + n/2 log(2 pi) - 1/2 log det(-H_loc)
/// on the unconstrained scale (T includes the log-Jacobian). The joint mode
/// is not used: it is unbounded as any sd shrinks to zero together with its
/// deviations.
struct MapResult {
  ParameterSet theta;  // constrained
  ParameterSet u;      // unconstrained
  double log_posterior = 0.0;
  double log_marginal = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  int halvings = 0;
  bool converged = false;
  double grad_norm = 0.0;
  std::vector<std::string> warnings;
  std::vector<bool> fixed;
  MapOptions options;
};

/// Intercepts at the empirical event log-odds, other locations 0, sds at
/// min(0.5, d/2).
ParameterSet initial_parameters(const Model& model);

MapResult find_map(const Model& model, const std::optional<ParameterSet>& init = std::nullopt,
                   const MapOptions& opts = {});
MapResult find_map(const ModelSpec& spec, const DesignMatrix& design,
                   const std::optional<ParameterSet>& init = std::nullopt, const MapOptions& opts = {});

struct LaplaceCovariance {
  Eigen::MatrixXd unconstrained;  // D x D; zero rows for pinned coordinates
  Eigen::VectorXd sd;             // constrained-scale sds (delta method for sds)
};

/// Locations: inverse of the negative conditional Hessian at the mode.
/// Variance components: inverse of the negative Hessian of l(phi) (finite
/// differences), mapped back to the sd scale by the delta method. Derived
/// sum-to-zero coordinates get the variance of minus the sum of siblings.
LaplaceCovariance laplace_covariance(const Model& model, const MapResult& map);

PosteriorSummary summarize(const MapResult& map, const LaplaceCovariance& cov);

/// Ascending grid per pooled variance component (sigma_A, sigma_0, sigma_B, tau).
struct GridSpec {
  std::array<std::vector<double>, 4> points;
  void check(double d) const;
};

/// 5 geometric points per component spanning (0.05, 0.9 d).
GridSpec default_grid(double d);

struct GridPoint {
  std::array<double, 4> phi{};
  double log_weight = 0.0;  // conditional Laplace evidence + log quadrature volume
  double weight = 0.0;      // normalized
  bool converged = false;
};

struct GridPosterior {
  PosteriorSummary summary;
  std::vector<GridPoint> points;  // grid order: sigma_A slowest, tau fastest
};

/// Numerical integration over the pooled model's variance components:
/// conditional Laplace at each grid point, mixed with normalized weights.
GridPosterior grid_posterior(const Model& model, const GridSpec& grid, const MapOptions& opts = {});

/// Keeps the location sub-vector of an unconstrained vector.
std::vector<Eigen::Index> location_coordinates(const ParameterLayout& layout, const std::vector<bool>& fixed);
std::vector<Eigen::Index> variance_coordinates(const ParameterLayout& layout, const std::vector<bool>& fixed);

}  // namespace mblr
