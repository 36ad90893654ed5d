#include "mblr/fit.hpp"

#include "mblr/errors.hpp"
#include "mblr/numeric.hpp"

namespace mblr {

FitResult fit(const Model& model, const FitOptions& opts) {
  FitResult out;
  switch (opts.method) {
    case Method::Laplace: {
      MapResult map = find_map(model, std::nullopt, opts.map);
      if (!map.converged)
        throw NumericalError("posterior mode did not converge (gradient norm " + format_double(map.grad_norm) + ")");
      out.summary = summarize(map, laplace_covariance(model, map));
      out.map = std::move(map);
      break;
    }
    case Method::Grid: {
      const GridSpec grid = opts.grid ? *opts.grid : default_grid(model.spec().prior.d);
      out.summary = grid_posterior(model, grid, opts.map).summary;
      break;
    }
    case Method::Mcmc: {
      McmcFit f = fit_mcmc(model, opts.mcmc);
      out.summary = f.summary;
      out.mcmc = std::move(f);
      break;
    }
  }
  out.summary.method = opts.method;
  out.summary.variant = model.spec().variant;
  return out;
}

}  // namespace mblr
