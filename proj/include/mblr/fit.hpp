#pragma once

#include "mblr/laplace.hpp"
#include "mblr/mcmc.hpp"
#include "mblr/summary.hpp"

#include <optional>

namespace mblr {

struct FitOptions {
  Method method = Method::Laplace;
  MapOptions map;
  std::optional<GridSpec> grid;  // default_grid(d) when empty
  McmcConfig mcmc;
};

struct FitResult {
  PosteriorSummary summary;
  std::optional<MapResult> map;
  std::optional<McmcFit> mcmc;
};

/// Fits one model with the chosen backend. Throws NumericalError when the
/// mode does not converge (laplace) or every grid point fails (grid); MCMC
/// convergence problems are reported as summary warnings.
FitResult fit(const Model& model, const FitOptions& opts);

}  // namespace mblr
