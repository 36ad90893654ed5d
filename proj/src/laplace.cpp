#include "mblr/laplace.hpp"

#include "mblr/errors.hpp"
#include "mblr/newton.hpp"
#include "mblr/numeric.hpp"
#include "mblr/parallel.hpp"

#include <cmath>

namespace mblr {

namespace {

constexpr double kGradStep = 1e-4;
constexpr double kHessStep = 1e-3;
constexpr double kMaxOuterStep = 2.0;

std::vector<bool> effective_fixed(const ParameterLayout& lay, const std::vector<bool>& fixed) {
  if (fixed.empty()) return std::vector<bool>(lay.dim(), false);
  if (fixed.size() != lay.dim()) throw std::invalid_argument("fixed mask has wrong dimension");
  return fixed;
}

/// Conditional location solver and the Laplace log-marginal of the free
/// variance components.
class ConditionalLaplace {
 public:
  ConditionalLaplace(const Model& model, const std::vector<bool>& fixed, const MapOptions& opts)
      : model_(model),
        loc_(location_coordinates(model.layout(), fixed)),
        phi_(variance_coordinates(model.layout(), fixed)),
        opts_(opts) {}

  const std::vector<Eigen::Index>& loc() const { return loc_; }
  const std::vector<Eigen::Index>& phi() const { return phi_; }

  /// Newton over the free locations of `u` (updated in place).
  NewtonResult solve(Eigen::VectorXd& u, double tol) const {
    Objective f;
    f.value = [&](const Eigen::VectorXd& x) {
      Eigen::VectorXd w = u;
      w(loc_) = x;
      return model_.target(w, Order::Value).value;
    };
    f.derivatives = [&](const Eigen::VectorXd& x) {
      Eigen::VectorXd w = u;
      w(loc_) = x;
      Evaluation full = model_.target(w, Order::Hessian);
      Evaluation sub;
      sub.value = full.value;
      sub.grad = full.grad(loc_);
      sub.hess = full.hess(loc_, loc_);
      return sub;
    };
    NewtonOptions nopts;
    nopts.grad_tol = tol;
    nopts.max_iter = opts_.max_iter;
    NewtonResult res = newton_maximize(f, u(loc_), nopts);
    u(loc_) = res.x;
    if (!res.converged && res.grad_norm < opts_.grad_tol) res.converged = true;
    return res;
  }

  struct Marginal {
    double value = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd u;
    NewtonResult inner;
  };

  /// l(phi) with locations warm-started from `base`.
  Marginal marginal(const Eigen::VectorXd& base, const Eigen::VectorXd& phi_values) const {
    Marginal m;
    m.u = base;
    m.u(phi_) = phi_values;
    if (!std::isfinite(model_.target(m.u, Order::Value).value)) return m;
    m.inner = solve(m.u, opts_.inner_tol);
    if (!m.inner.converged) return m;
    const auto logdet = log_det_negative(m.inner.hess);
    if (!logdet) return m;
    m.value = m.inner.value + 0.5 * static_cast<double>(loc_.size()) * kLn2Pi - 0.5 * *logdet;
    return m;
  }

  double marginal_value(const Eigen::VectorXd& base, const Eigen::VectorXd& phi_values) const {
    return marginal(base, phi_values).value;
  }

  Eigen::VectorXd fd_gradient(const Eigen::VectorXd& base) const {
    const Eigen::VectorXd p0 = base(phi_);
    Eigen::VectorXd g(p0.size());
    for (Eigen::Index i = 0; i < p0.size(); ++i) {
      Eigen::VectorXd hi = p0, lo = p0;
      hi(i) += kGradStep;
      lo(i) -= kGradStep;
      g(i) = (marginal_value(base, hi) - marginal_value(base, lo)) / (2.0 * kGradStep);
    }
    return g;
  }

  Eigen::MatrixXd fd_hessian(const Eigen::VectorXd& base, double f0) const {
    const Eigen::VectorXd p0 = base(phi_);
    const Eigen::Index m = p0.size();
    const double h = kHessStep;
    Eigen::MatrixXd H(m, m);
    auto at = [&](Eigen::Index i, double si, Eigen::Index j, double sj) {
      Eigen::VectorXd p = p0;
      p(i) += si * h;
      if (j >= 0) p(j) += sj * h;
      return marginal_value(base, p);
    };
    for (Eigen::Index i = 0; i < m; ++i) {
      H(i, i) = (at(i, 1, -1, 0) - 2.0 * f0 + at(i, -1, -1, 0)) / (h * h);
      for (Eigen::Index j = 0; j < i; ++j) {
        const double v = (at(i, 1, j, 1) - at(i, 1, j, -1) - at(i, -1, j, 1) + at(i, -1, j, -1)) / (4.0 * h * h);
        H(i, j) = v;
        H(j, i) = v;
      }
    }
    return H;
  }

 private:
  const Model& model_;
  std::vector<Eigen::Index> loc_;
  std::vector<Eigen::Index> phi_;
  MapOptions opts_;
};

Eigen::VectorXd outer_direction(const Eigen::MatrixXd& H, const Eigen::VectorXd& g) {
  const Eigen::Index n = H.rows();
  Eigen::MatrixXd A = -H;
  Eigen::LLT<Eigen::MatrixXd> llt(A);
  Eigen::VectorXd step;
  if (llt.info() == Eigen::Success) {
    step = llt.solve(g);
  } else {
    const double scale = std::max(A.diagonal().cwiseAbs().maxCoeff(), 1.0);
    step = g / scale;
    for (double ridge = 1e-6 * scale; ridge < 1e8 * scale; ridge *= 10.0) {
      llt.compute(A + ridge * Eigen::MatrixXd::Identity(n, n));
      if (llt.info() == Eigen::Success) {
        step = llt.solve(g);
        break;
      }
    }
  }
  const double big = step.cwiseAbs().maxCoeff();
  if (big > kMaxOuterStep) step *= kMaxOuterStep / big;
  return step;
}

/// Maps the free-coordinate covariance onto all D coordinates: derived
/// coordinates are minus the sum of their free siblings, pinned ones are 0.
Eigen::MatrixXd expand_covariance(const ParameterLayout& lay, const std::vector<Eigen::Index>& free,
                                  const Eigen::MatrixXd& cov_free) {
  const auto D = static_cast<Eigen::Index>(lay.dim());
  const auto n = static_cast<Eigen::Index>(free.size());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(D, n);
  std::vector<Eigen::Index> pos(static_cast<std::size_t>(D), -1);
  for (Eigen::Index c = 0; c < n; ++c) {
    J(free[static_cast<std::size_t>(c)], c) = 1.0;
    pos[static_cast<std::size_t>(free[static_cast<std::size_t>(c)])] = c;
  }
  for (const auto& grp : lay.zero_sum_groups()) {
    for (std::size_t f : grp.free) {
      const Eigen::Index c = pos[f];
      if (c >= 0) J(static_cast<Eigen::Index>(grp.derived), c) = -1.0;
    }
  }
  const Eigen::MatrixXd full = J * cov_free * J.transpose();
  return 0.5 * (full + full.transpose());
}

void add_separation_warnings(const ParameterLayout& lay, const Eigen::VectorXd& theta, double threshold,
                             std::vector<std::string>& warnings) {
  for (std::size_t i = 0; i < lay.dim(); ++i) {
    if (lay.is_sd(i)) continue;
    const double v = theta(static_cast<Eigen::Index>(i));
    if (std::abs(v) > threshold)
      warnings.push_back("possible separation: |" + lay.name(i) + "| = " + format_double(std::abs(v)) +
                         " exceeds " + format_double(threshold));
  }
}

}  // namespace

std::vector<Eigen::Index> location_coordinates(const ParameterLayout& lay, const std::vector<bool>& fixed) {
  std::vector<Eigen::Index> out;
  for (std::size_t i = 0; i < lay.dim(); ++i)
    if (!lay.is_sd(i) && !lay.is_derived(i) && (fixed.empty() || !fixed[i])) out.push_back(static_cast<Eigen::Index>(i));
  return out;
}

std::vector<Eigen::Index> variance_coordinates(const ParameterLayout& lay, const std::vector<bool>& fixed) {
  std::vector<Eigen::Index> out;
  for (std::size_t i : lay.sd_indices())
    if (fixed.empty() || !fixed[i]) out.push_back(static_cast<Eigen::Index>(i));
  return out;
}

ParameterSet initial_parameters(const Model& model) {
  ParameterSet p = default_parameters(model.spec());
  const auto& lay = model.layout();
  const std::size_t K = model.spec().K, L = model.spec().L;
  std::vector<double> n(K * L, 0.0), y(K * L, 0.0);
  for (const auto& c : model.cells()) {
    for (std::size_t k = 0; k < K; ++k) {
      n[k * L + c.trial] += c.n;
      y[k * L + c.trial] += c.events(static_cast<Eigen::Index>(k));
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    double nk = 0.0, yk = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      nk += n[k * L + l];
      yk += y[k * L + l];
      if (lay.variant() == Variant::MetaAnalytic)
        p.values(static_cast<Eigen::Index>(lay.alpha0_trial(k, l))) = logit((y[k * L + l] + 0.5) / (n[k * L + l] + 1.0));
    }
    p.values(static_cast<Eigen::Index>(lay.alpha0(k))) = logit((yk + 0.5) / (nk + 1.0));
  }
  return p;
}

MapResult find_map(const Model& model, const std::optional<ParameterSet>& init, const MapOptions& opts) {
  const auto& lay = model.layout();
  MapResult res;
  res.options = opts;
  res.fixed = effective_fixed(lay, opts.fixed);

  ParameterSet start = init ? *init : initial_parameters(model);
  if (start.scale == Scale::Unconstrained) start = from_unconstrained(start);
  if (static_cast<std::size_t>(start.values.size()) != lay.dim())
    throw std::invalid_argument("initial parameters have the wrong dimension");
  start.layout = model.layout_ptr();
  lay.canonicalize(start.values);
  Eigen::VectorXd u = to_unconstrained(start).values;

  const ConditionalLaplace cl(model, res.fixed, opts);
  if (cl.phi().empty()) {
    const NewtonResult nr = cl.solve(u, opts.grad_tol);
    res.iterations = nr.iterations;
    res.halvings = nr.halvings;
    res.converged = nr.converged;
    res.grad_norm = nr.grad_norm;
  } else {
    auto cur = cl.marginal(u, u(cl.phi()));
    if (!std::isfinite(cur.value)) throw NumericalError("Laplace marginal is not finite at the starting point");
    double inner_norm = cur.inner.grad_norm;
    for (;;) {
      const Eigen::VectorXd g = cl.fd_gradient(cur.u);
      res.grad_norm = std::max(g.cwiseAbs().maxCoeff(), inner_norm);
      if (g.cwiseAbs().maxCoeff() < opts.grad_tol) {
        res.converged = true;
        break;
      }
      if (res.iterations >= opts.max_iter) break;
      ++res.iterations;
      const Eigen::MatrixXd H = cl.fd_hessian(cur.u, cur.value);
      const Eigen::VectorXd step = outer_direction(H, g);
      const Eigen::VectorXd p0 = cur.u(cl.phi());
      double t = 1.0;
      bool accepted = false;
      for (int h = 0; h <= 40; ++h) {
        auto next = cl.marginal(cur.u, p0 + t * step);
        if (std::isfinite(next.value) && next.value >= cur.value) {
          cur = std::move(next);
          inner_norm = cur.inner.grad_norm;
          accepted = true;
          break;
        }
        t *= 0.5;
        ++res.halvings;
      }
      if (!accepted) break;
    }
    u = cur.u;
    res.log_marginal = cur.value;
  }

  res.u = ParameterSet{u, model.layout_ptr(), Scale::Unconstrained};
  res.theta = from_unconstrained(res.u);
  lay.canonicalize(res.theta.values);
  res.log_posterior = model.posterior(res.theta.values, Order::Value).value;
  if (!res.converged)
    res.warnings.push_back("optimizer did not converge (gradient norm " + format_double(res.grad_norm) + ")");
  add_separation_warnings(lay, res.theta.values, opts.separation_threshold, res.warnings);
  return res;
}

MapResult find_map(const ModelSpec& spec, const DesignMatrix& design, const std::optional<ParameterSet>& init,
                   const MapOptions& opts) {
  const Model model(spec, design);
  return find_map(model, init, opts);
}

LaplaceCovariance laplace_covariance(const Model& model, const MapResult& map) {
  if (!map.converged) throw NumericalError("Laplace covariance requires a converged mode");
  const auto& lay = model.layout();
  const ConditionalLaplace cl(model, map.fixed, map.options);
  const Evaluation ev = model.target(map.u.values, Order::Hessian);
  const Eigen::MatrixXd cov_loc = inverse_negative_hessian(ev.hess(cl.loc(), cl.loc()));

  std::vector<Eigen::Index> free = cl.loc();
  Eigen::MatrixXd cov_free = cov_loc;
  if (!cl.phi().empty()) {
    const double f0 = cl.marginal_value(map.u.values, map.u.values(cl.phi()));
    const Eigen::MatrixXd cov_phi = inverse_negative_hessian(cl.fd_hessian(map.u.values, f0));
    const auto nl = static_cast<Eigen::Index>(cl.loc().size());
    const auto np = static_cast<Eigen::Index>(cl.phi().size());
    cov_free = Eigen::MatrixXd::Zero(nl + np, nl + np);
    cov_free.topLeftCorner(nl, nl) = cov_loc;
    cov_free.bottomRightCorner(np, np) = cov_phi;
    free.insert(free.end(), cl.phi().begin(), cl.phi().end());
  }

  LaplaceCovariance out;
  out.unconstrained = expand_covariance(lay, free, cov_free);
  out.sd = out.unconstrained.diagonal().cwiseMax(0.0).cwiseSqrt();
  const double d = lay.upper();
  for (std::size_t i : lay.sd_indices()) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double s = sigmoid(map.u.values(ii));
    out.sd(ii) *= d * s * (1.0 - s);
  }
  return out;
}

PosteriorSummary summarize(const MapResult& map, const LaplaceCovariance& cov) {
  PosteriorSummary s;
  s.method = Method::Laplace;
  s.variant = map.theta.layout->variant();
  s.warnings = map.warnings;
  const auto& lay = *map.theta.layout;
  for (std::size_t i = 0; i < lay.dim(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    s.rows.push_back(normal_row(lay.name(i), map.theta.values(ii), cov.sd(ii)));
  }
  return s;
}

void GridSpec::check(double d) const {
  for (const auto& axis : points) {
    if (axis.empty()) throw UsageError("grid component has no points");
    for (std::size_t i = 0; i < axis.size(); ++i) {
      if (!(axis[i] > 0.0 && axis[i] < d)) throw UsageError("grid point " + format_double(axis[i]) + " outside (0, d)");
      if (i > 0 && !(axis[i] > axis[i - 1])) throw UsageError("grid points must be strictly ascending");
    }
  }
}

GridSpec default_grid(double d) {
  GridSpec g;
  const double lo = 0.05, hi = 0.9 * d;
  for (auto& axis : g.points) {
    for (int i = 0; i < 5; ++i) axis.push_back(lo * std::pow(hi / lo, i / 4.0));
  }
  return g;
}

namespace {

std::vector<double> trapezoid_widths(const std::vector<double>& x) {
  if (x.size() == 1) return {1.0};
  std::vector<double> w(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double left = i == 0 ? x[0] : x[i - 1];
    const double right = i + 1 == x.size() ? x[i] : x[i + 1];
    w[i] = 0.5 * (right - left);
  }
  return w;
}

}  // namespace

GridPosterior grid_posterior(const Model& model, const GridSpec& grid, const MapOptions& opts) {
  const auto& lay = model.layout();
  if (lay.variant() != Variant::Pooled) throw UsageError("grid integration is available for the pooled model only");
  grid.check(lay.upper());

  const std::array<std::size_t, 4> phi_index{lay.sigma_A(), lay.sigma_0(), lay.sigma_B(), lay.tau()};
  std::array<std::vector<double>, 4> widths;
  for (int c = 0; c < 4; ++c) widths[static_cast<std::size_t>(c)] = trapezoid_widths(grid.points[static_cast<std::size_t>(c)]);

  std::vector<GridPoint> points;
  std::vector<double> log_volume;
  for (std::size_t a = 0; a < grid.points[0].size(); ++a)
    for (std::size_t b = 0; b < grid.points[1].size(); ++b)
      for (std::size_t c = 0; c < grid.points[2].size(); ++c)
        for (std::size_t e = 0; e < grid.points[3].size(); ++e) {
          GridPoint p;
          p.phi = {grid.points[0][a], grid.points[1][b], grid.points[2][c], grid.points[3][e]};
          points.push_back(p);
          log_volume.push_back(std::log(widths[0][a]) + std::log(widths[1][b]) + std::log(widths[2][c]) +
                               std::log(widths[3][e]));
        }

  std::vector<bool> fixed(lay.dim(), false);
  for (auto i : phi_index) fixed[i] = true;
  const auto loc = location_coordinates(lay, fixed);
  const ParameterSet base = initial_parameters(model);
  const auto D = static_cast<Eigen::Index>(lay.dim());

  std::vector<Eigen::VectorXd> modes(points.size());
  std::vector<Eigen::VectorXd> variances(points.size());
  parallel_for(points.size(), [&](std::size_t m) {
    GridPoint& p = points[m];
    ParameterSet start = base;
    for (int c = 0; c < 4; ++c) start.values(static_cast<Eigen::Index>(phi_index[static_cast<std::size_t>(c)])) = p.phi[static_cast<std::size_t>(c)];
    MapOptions o = opts;
    o.fixed = fixed;
    o.grad_tol = opts.inner_tol;
    const MapResult mr = find_map(model, start, o);
    p.converged = mr.converged;
    if (!mr.converged) return;
    const Evaluation ev = model.posterior(mr.theta.values, Order::Hessian);
    const Eigen::MatrixXd Hloc = ev.hess(loc, loc);
    const auto logdet = log_det_negative(Hloc);
    if (!logdet) {
      p.converged = false;
      return;
    }
    p.log_weight = ev.value + 0.5 * static_cast<double>(loc.size()) * kLn2Pi - 0.5 * *logdet + log_volume[m];
    modes[m] = mr.theta.values;
    variances[m] = expand_covariance(lay, loc, inverse_negative_hessian(Hloc)).diagonal();
  });

  GridPosterior out;
  out.summary.method = Method::Grid;
  out.summary.variant = Variant::Pooled;
  double max_lw = -std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < points.size(); ++m) {
    if (!points[m].converged) {
      out.summary.warnings.push_back("grid point " + std::to_string(m) + " dropped: conditional mode did not converge");
      continue;
    }
    max_lw = std::max(max_lw, points[m].log_weight);
  }
  if (!std::isfinite(max_lw)) throw NumericalError("all grid weights underflow or no grid point converged");
  double total = 0.0;
  for (auto& p : points) {
    if (!p.converged) continue;
    p.weight = std::exp(p.log_weight - max_lw);
    total += p.weight;
  }
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(D), second = Eigen::VectorXd::Zero(D);
  for (std::size_t m = 0; m < points.size(); ++m) {
    auto& p = points[m];
    if (!p.converged) continue;
    p.weight /= total;
    Eigen::VectorXd v = variances[m];
    for (int c = 0; c < 4; ++c) v(static_cast<Eigen::Index>(phi_index[static_cast<std::size_t>(c)])) = 0.0;
    mean += p.weight * modes[m];
    second += p.weight * (v + modes[m].cwiseProduct(modes[m]));
  }
  for (Eigen::Index i = 0; i < D; ++i) {
    const double var = std::max(second(i) - mean(i) * mean(i), 0.0);
    out.summary.rows.push_back(normal_row(lay.name(static_cast<std::size_t>(i)), mean(i), std::sqrt(var)));
  }
  out.points = std::move(points);
  return out;
}

}  // namespace mblr
