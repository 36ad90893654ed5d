#include "mblr/errors.hpp"
#include "mblr/laplace.hpp"
#include "mblr/newton.hpp"
#include "mblr/numeric.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <map>

using namespace mblr;
using mblr::testing::random_dataset;

namespace {

/// Plain IRLS logistic regression on per-row features.
Eigen::VectorXd irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Eigen::VectorXd b = Eigen::VectorXd::Zero(X.cols());
  for (int it = 0; it < 100; ++it) {
    const Eigen::VectorXd eta = X * b;
    Eigen::VectorXd p(eta.size()), w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      p(i) = 1.0 / (1.0 + std::exp(-eta(i)));
      w(i) = p(i) * (1.0 - p(i));
    }
    const Eigen::MatrixXd XtWX = X.transpose() * w.asDiagonal() * X;
    const Eigen::VectorXd step = XtWX.ldlt().solve(X.transpose() * (y - p));
    b += step;
    if (step.cwiseAbs().maxCoeff() < 1e-13) break;
  }
  return b;
}

/// Hierarchy sds pinned at 1e4 under d = 1e5 with flat locations.
struct Decoupled {
  ModelSpec spec;
  MapOptions opts;
  ParameterSet init;
};

Decoupled decoupled(const DesignMatrix& dm) {
  PriorConfig prior;
  prior.d = 1e5;
  prior.location_sd.reset();
  Decoupled out{make_model_spec(Variant::Pooled, dm, prior), {}, {}};
  out.init = default_parameters(out.spec);
  out.opts.fixed.assign(out.init.layout->dim(), false);
  for (std::size_t i : out.init.layout->sd_indices()) {
    out.init.values(static_cast<Eigen::Index>(i)) = 1e4;
    out.opts.fixed[i] = true;
  }
  return out;
}

double linear_predictor(const ParameterSet& theta, const DesignMatrix& dm, std::size_t row, std::size_t k) {
  const auto& lay = *theta.layout;
  double eta = theta.values(static_cast<Eigen::Index>(lay.alpha0(k)));
  const int t = dm.treat(static_cast<Eigen::Index>(row));
  if (t) eta += theta.values(static_cast<Eigen::Index>(lay.beta0(k)));
  for (std::size_t g = 0; g < lay.G(); ++g) {
    const double x = dm.X(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(g));
    eta += x * theta.values(static_cast<Eigen::Index>(lay.alpha(k, g)));
    if (t) eta += x * theta.values(static_cast<Eigen::Index>(lay.beta(k, g)));
  }
  return eta;
}

}  // namespace

TEST_CASE("decoupled fit matches independent IRLS per issue") {
  for (std::size_t G : {0u, 2u}) {
    CAPTURE(G);
    std::vector<std::size_t> sizes;
    if (G) sizes.push_back(G);
    const auto dm = build_design(random_dataset(21, 300, 3, 1, sizes, 0.35));
    const auto dc = decoupled(dm);
    const MapResult map = find_map(dc.spec, dm, dc.init, dc.opts);
    REQUIRE(map.converged);
    CHECK(map.grad_norm < 1e-6);

    // Reference coding: intercept, treatment, non-reference level, interaction.
    const auto N = static_cast<Eigen::Index>(dm.rows());
    const Eigen::Index p = G ? 4 : 2;
    Eigen::MatrixXd X(N, p);
    for (Eigen::Index i = 0; i < N; ++i) {
      X(i, 0) = 1.0;
      X(i, 1) = dm.treat(i);
      if (G) {
        X(i, 2) = dm.X(i, 1);
        X(i, 3) = dm.treat(i) * dm.X(i, 1);
      }
    }
    for (std::size_t k = 0; k < 3; ++k) {
      const Eigen::VectorXd b = irls(X, dm.Y.col(static_cast<Eigen::Index>(k)).cast<double>());
      const Eigen::VectorXd eta_ref = X * b;
      for (Eigen::Index i = 0; i < N; ++i)
        CHECK(std::abs(linear_predictor(map.theta, dm, static_cast<std::size_t>(i), k) - eta_ref(i)) < 1e-6);
      if (!G) {
        CHECK(std::abs(map.theta.values(static_cast<Eigen::Index>(map.theta.layout->alpha0(k))) - b(0)) < 1e-6);
        CHECK(std::abs(map.theta.values(static_cast<Eigen::Index>(map.theta.layout->beta0(k))) - b(1)) < 1e-6);
      }
    }
  }
}

TEST_CASE("restart at the mode converges immediately") {
  const auto dm = build_design(random_dataset(22, 250, 2, 1, {2}));
  SUBCASE("pinned variance components") {
    const auto dc = decoupled(dm);
    const MapResult map = find_map(dc.spec, dm, dc.init, dc.opts);
    REQUIRE(map.converged);
    const MapResult again = find_map(dc.spec, dm, map.theta, dc.opts);
    CHECK(again.converged);
    CHECK(again.iterations <= 2);
    CHECK(again.halvings == 0);
  }
  SUBCASE("free variance components") {
    const auto spec = make_model_spec(Variant::Pooled, dm);
    const MapResult map = find_map(spec, dm);
    REQUIRE(map.converged);
    const MapResult again = find_map(spec, dm, map.theta);
    CHECK(again.converged);
    CHECK(again.iterations <= 2);
    CHECK(again.halvings == 0);
  }
}

TEST_CASE("gradient of the free locations vanishes at the mode") {
  for (Variant v : {Variant::Pooled, Variant::MetaAnalytic}) {
    const auto dm = build_design(random_dataset(23, 300, 2, 3, {2}));
    const Model model(make_model_spec(v, dm), dm);
    const MapResult map = find_map(model);
    REQUIRE(map.converged);
    const Evaluation ev = model.target(map.u.values, Order::Hessian);
    const auto loc = location_coordinates(model.layout(), map.fixed);
    CHECK(ev.grad(loc).cwiseAbs().maxCoeff() < 1e-6);
    // Conditional curvature is negative definite after a tiny ridge.
    const Eigen::MatrixXd H = ev.hess(loc, loc);
    const double eps = 1e-8 * H.diagonal().cwiseAbs().maxCoeff();
    const Eigen::MatrixXd A = -H + eps * Eigen::MatrixXd::Identity(H.rows(), H.rows());
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(A).eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("separation warning for an issue without events") {
  auto d = random_dataset(24, 200, 2, 1, {});
  for (auto& r : d.records) r.outcomes[1] = 0;
  const auto dm = build_design(d);
  PriorConfig flat;
  flat.location_sd.reset();
  const MapResult map = find_map(make_model_spec(Variant::Pooled, dm, flat), dm);
  bool found = false;
  for (const auto& w : map.warnings) found = found || w.find("separation") != std::string::npos;
  CHECK(found);
}

TEST_CASE("Gaussian curvature gives the exact variance") {
  const double a = 1.3, v = 0.37;
  Objective f;
  f.value = [&](const Eigen::VectorXd& x) { return -(x(0) - a) * (x(0) - a) / (2 * v); };
  f.derivatives = [&](const Eigen::VectorXd& x) {
    Evaluation e;
    e.value = f.value(x);
    e.grad = Eigen::VectorXd::Constant(1, -(x(0) - a) / v);
    e.hess = Eigen::MatrixXd::Constant(1, 1, -1.0 / v);
    return e;
  };
  const NewtonResult r = newton_maximize(f, Eigen::VectorXd::Constant(1, -4.0));
  CHECK(r.converged);
  CHECK(r.x(0) == doctest::Approx(a).epsilon(1e-12));
  CHECK(inverse_negative_hessian(r.hess)(0, 0) == doctest::Approx(v).epsilon(1e-12));
  CHECK_THROWS_AS(inverse_negative_hessian(Eigen::MatrixXd::Constant(1, 1, 2.0)), NumericalError);
}

TEST_CASE("duplicated data halves location variances") {
  auto d = random_dataset(25, 600, 2, 1, {}, 0.3);
  auto d2 = d;
  d2.records.insert(d2.records.end(), d.records.begin(), d.records.end());
  const auto dm1 = build_design(d);
  const auto dm2 = build_design(d2);
  const Model m1(make_model_spec(Variant::Pooled, dm1), dm1);
  const Model m2(make_model_spec(Variant::Pooled, dm2), dm2);
  const auto map1 = find_map(m1);
  const auto map2 = find_map(m2);
  REQUIRE(map1.converged);
  REQUIRE(map2.converged);
  const auto c1 = laplace_covariance(m1, map1);
  const auto c2 = laplace_covariance(m2, map2);
  const auto& lay = m1.layout();
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t i : {lay.alpha0(k), lay.beta0(k)}) {
      const auto ii = static_cast<Eigen::Index>(i);
      CAPTURE(lay.name(i));
      CHECK(c2.unconstrained(ii, ii) / c1.unconstrained(ii, ii) == doctest::Approx(0.5).epsilon(0.05));
    }
}

TEST_CASE("Laplace covariance and summary contracts") {
  const auto dm = build_design(random_dataset(26, 400, 2, 2, {2, 3}));
  for (Variant v : {Variant::Pooled, Variant::MetaAnalytic}) {
    const Model model(make_model_spec(v, dm), dm);
    const auto map = find_map(model);
    REQUIRE(map.converged);
    const auto cov = laplace_covariance(model, map);
    const auto& lay = model.layout();
    CHECK((cov.unconstrained - cov.unconstrained.transpose()).cwiseAbs().maxCoeff() == 0.0);
    std::vector<Eigen::Index> free;
    for (std::size_t i = 0; i < lay.dim(); ++i)
      if (!lay.is_derived(i)) free.push_back(static_cast<Eigen::Index>(i));
    const Eigen::MatrixXd sub = cov.unconstrained(free, free);
    CHECK(Eigen::LLT<Eigen::MatrixXd>(sub).info() == Eigen::Success);

    const auto s = summarize(map, cov);
    REQUIRE(s.rows.size() == lay.dim());
    for (const auto& r : s.rows) {
      CAPTURE(r.name);
      CHECK(r.sd > 0.0);
      CHECK(r.z == r.mean / r.sd);
      CHECK((r.hi90 - r.mean) / r.sd == doctest::Approx(kZ90).epsilon(1e-12));
      CHECK((r.mean - r.lo90) / r.sd == doctest::Approx(kZ90).epsilon(1e-12));
    }
    // Derived hyper-mean variance equals that of minus the sum of its siblings.
    for (const auto& grp : lay.zero_sum_groups()) {
      double var = 0.0;
      for (std::size_t a : grp.free)
        for (std::size_t b : grp.free)
          var += cov.unconstrained(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
      const auto di = static_cast<Eigen::Index>(grp.derived);
      CHECK(cov.unconstrained(di, di) == doctest::Approx(var).epsilon(1e-12));
    }
  }
  const SummaryRow r = normal_row("x", 1.0, 0.5);
  CHECK(r.z == 2.0);
}

TEST_CASE("unconverged mode is rejected by the covariance step") {
  const auto dm = build_design(random_dataset(27, 100, 1, 1, {}));
  const Model model(make_model_spec(Variant::Pooled, dm), dm);
  MapOptions opts;
  opts.max_iter = 0;
  opts.fixed.assign(model.layout().dim(), false);
  for (std::size_t i : model.layout().sd_indices()) opts.fixed[i] = true;
  const auto map = find_map(model, std::nullopt, opts);
  CHECK_FALSE(map.converged);
  CHECK_FALSE(map.warnings.empty());
  CHECK_THROWS_AS(laplace_covariance(model, map), NumericalError);
}

TEST_CASE("accepted Newton steps never decrease the target") {
  const auto dm = build_design(random_dataset(28, 300, 2, 2, {3}));
  const Model model(make_model_spec(Variant::MetaAnalytic, dm), dm);
  Eigen::VectorXd u = to_unconstrained(initial_parameters(model)).values;
  const auto loc = location_coordinates(model.layout(), {});
  std::vector<double> accepted;
  Objective f;
  f.value = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd w = u;
    w(loc) = x;
    return model.target(w, Order::Value).value;
  };
  f.derivatives = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd w = u;
    w(loc) = x;
    Evaluation full = model.target(w, Order::Hessian);
    accepted.push_back(full.value);
    Evaluation e;
    e.value = full.value;
    e.grad = full.grad(loc);
    e.hess = full.hess(loc, loc);
    return e;
  };
  Eigen::VectorXd x0 = u(loc);
  x0.array() += 2.0;  // far start so several steps are taken
  const auto r = newton_maximize(f, x0);
  CHECK(r.converged);
  CHECK(accepted.size() > 2);
  for (std::size_t i = 1; i < accepted.size(); ++i) CHECK(accepted[i] >= accepted[i - 1]);
}

TEST_CASE("mode finding is deterministic") {
  const auto dm = build_design(random_dataset(29, 300, 2, 2, {2}));
  const auto spec = make_model_spec(Variant::MetaAnalytic, dm);
  const auto a = find_map(spec, dm);
  const auto b = find_map(spec, dm);
  CHECK(a.theta.values == b.theta.values);
  CHECK(a.iterations == b.iterations);
  CHECK(a.log_posterior == b.log_posterior);
}

TEST_CASE("meta-analytic model with one trial and tiny trial sds matches pooled") {
  const auto dm = build_design(random_dataset(30, 300, 2, 1, {2}));
  const auto po = make_model_spec(Variant::Pooled, dm);
  const auto ma = make_model_spec(Variant::MetaAnalytic, dm);
  auto pin = [](const ModelSpec& spec) {
    std::pair<ParameterSet, MapOptions> out{default_parameters(spec), {}};
    const auto& lay = *out.first.layout;
    out.second.fixed.assign(lay.dim(), false);
    for (std::size_t i : lay.sd_indices()) {
      const auto b = lay.block_of(i);
      out.first.values(static_cast<Eigen::Index>(i)) =
          (b == Block::SigmaAIssue || b == Block::Sigma0Issue) ? 1e-4 : 0.8;
      out.second.fixed[i] = true;
    }
    return out;
  };
  const auto [ip, op] = pin(po);
  const auto [im, om] = pin(ma);
  const auto mp = find_map(po, dm, ip, op);
  const auto mm = find_map(ma, dm, im, om);
  REQUIRE(mp.converged);
  REQUIRE(mm.converged);
  for (std::size_t i = 0; i < mp.theta.layout->dim(); ++i) {
    const auto& name = mp.theta.layout->name(i);
    CAPTURE(name);
    CHECK(std::abs(mm.theta[name] - mp.theta[name]) < 1e-4);
  }
}

TEST_CASE("grid posterior") {
  const auto dm = build_design(random_dataset(31, 200, 2, 1, {}));
  const Model model(make_model_spec(Variant::Pooled, dm), dm);

  SUBCASE("one point equals the conditional Laplace fit") {
    GridSpec g;
    g.points = {{{0.4}, {0.7}, {1.1}, {0.9}}};
    const auto gp = grid_posterior(model, g);
    REQUIRE(gp.points.size() == 1);
    CHECK(gp.points[0].weight == 1.0);

    auto init = initial_parameters(model);
    const auto& lay = model.layout();
    MapOptions o;
    o.fixed.assign(lay.dim(), false);
    const std::array<std::size_t, 4> idx{lay.sigma_A(), lay.sigma_0(), lay.sigma_B(), lay.tau()};
    for (int c = 0; c < 4; ++c) {
      init.values(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(c)])) = g.points[static_cast<std::size_t>(c)][0];
      o.fixed[idx[static_cast<std::size_t>(c)]] = true;
    }
    o.grad_tol = o.inner_tol;
    const auto map = find_map(model, init, o);
    const auto s = summarize(map, laplace_covariance(model, map));
    for (const auto& r : s.rows) {
      CAPTURE(r.name);
      const auto& q = gp.summary.at(r.name);
      CHECK(std::abs(q.mean - r.mean) < 1e-10);
      CHECK(std::abs(q.sd - r.sd) < 1e-10);
    }
  }

  SUBCASE("components absent from the model get equal weights") {
    // With no covariates sigma_A does not enter the posterior.
    GridSpec g;
    g.points = {{{0.5, 1.5}, {0.7}, {1.1}, {0.9}}};
    const auto gp = grid_posterior(model, g);
    REQUIRE(gp.points.size() == 2);
    CHECK(std::abs(gp.points[0].weight - 0.5) < 1e-10);
    CHECK(std::abs(gp.points[1].weight - 0.5) < 1e-10);
    CHECK(gp.summary.at("sigma_A").mean == doctest::Approx(1.0).epsilon(1e-10));
  }

  SUBCASE("weights stay normalized as the grid grows") {
    const auto dmc = build_design(random_dataset(32, 200, 2, 1, {2}));
    const Model mc(make_model_spec(Variant::Pooled, dmc), dmc);
    GridSpec g;
    g.points = {{{0.2, 1.0}, {0.3, 1.2}, {0.5}, {0.4, 1.5}}};
    for (int grow = 0; grow < 3; ++grow) {
      const auto gp = grid_posterior(mc, g);
      double total = 0.0;
      for (const auto& p : gp.points) total += p.weight;
      CHECK(std::abs(total - 1.0) < 1e-12);
      for (auto& axis : g.points) axis.push_back(axis.back() + 0.4);
    }
  }

  SUBCASE("result does not depend on the worker count") {
    const GridSpec g = default_grid(3.0);
    ::setenv("MBLR_THREADS", "1", 1);
    const auto a = grid_posterior(model, g);
    ::setenv("MBLR_THREADS", "3", 1);
    const auto b = grid_posterior(model, g);
    ::unsetenv("MBLR_THREADS");
    REQUIRE(a.summary.rows.size() == b.summary.rows.size());
    for (std::size_t i = 0; i < a.summary.rows.size(); ++i) {
      CHECK(a.summary.rows[i].mean == b.summary.rows[i].mean);
      CHECK(a.summary.rows[i].sd == b.summary.rows[i].sd);
    }
  }

  SUBCASE("invalid grids and variants") {
    GridSpec g = default_grid(3.0);
    g.points[2] = {0.5, 3.2};
    CHECK_THROWS_AS(grid_posterior(model, g), UsageError);
    g.points[2] = {0.5, 0.4};
    CHECK_THROWS_AS(grid_posterior(model, g), UsageError);
    const Model ma(make_model_spec(Variant::MetaAnalytic, dm), dm);
    CHECK_THROWS_AS(grid_posterior(ma, default_grid(3.0)), UsageError);
  }
}
