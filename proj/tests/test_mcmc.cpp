#include "mblr/errors.hpp"
#include "mblr/laplace.hpp"
#include "mblr/mcmc.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <random>
#include <set>

using namespace mblr;
using mblr::testing::random_dataset;

namespace {

/// Independent Gaussian coordinates with the given means and sds.
class GaussianTarget final : public SamplerTarget {
 public:
  GaussianTarget(Eigen::VectorXd mean, Eigen::VectorXd sd) : mean_(std::move(mean)), sd_(std::move(sd)) {}
  double reset(const Eigen::VectorXd& u) override {
    u_ = u;
    return value(u_);
  }
  double propose(const std::vector<Eigen::Index>& coords, const Eigen::VectorXd& values) override {
    prop_ = u_;
    for (std::size_t a = 0; a < coords.size(); ++a) prop_(coords[a]) = values(static_cast<Eigen::Index>(a));
    return value(prop_);
  }
  void accept() override { u_ = prop_; }

 private:
  double value(const Eigen::VectorXd& u) const {
    return -0.5 * ((u - mean_).array() / sd_.array()).square().sum();
  }
  Eigen::VectorXd mean_, sd_, u_, prop_;
};

SamplerSetup gaussian_setup(const Eigen::VectorXd& mean, const Eigen::VectorXd& sd) {
  SamplerSetup s;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    s.names.push_back("x" + std::to_string(i));
    s.blocks.push_back({i});
  }
  s.start = mean;
  s.scale = 2.4 * sd;
  s.make_target = [mean, sd] { return std::make_unique<GaussianTarget>(mean, sd); };
  s.to_constrained = [](const Eigen::VectorXd& u) { return u; };
  return s;
}

Eigen::MatrixXd iid_normal(std::mt19937_64& rng, Eigen::Index n, Eigen::Index cols) {
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::MatrixXd m(n, cols);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = z(rng);
  return m;
}

}  // namespace

TEST_CASE("standard normal target") {
  const auto setup = gaussian_setup(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
  McmcConfig cfg;
  cfg.chains = 4;
  cfg.warmup = 1000;
  cfg.samples = 5000;
  cfg.seed = 11;
  const auto chains = run_chains(setup, cfg);
  const auto s = summarize_chains(chains, setup.names);
  CHECK(std::abs(s.rows[0].mean) < 0.05);
  CHECK(std::abs(s.rows[0].sd - 1.0) < 0.05);
  for (const auto& c : chains) {
    CHECK(c.acceptance[0] > 0.15);
    CHECK(c.acceptance[0] < 0.6);
  }
}

TEST_CASE("conjugate Gaussian mean matches the closed form within Monte Carlo error") {
  // x_i ~ N(mu, 1), mu ~ N(0, 10^2): posterior N(m, v).
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.7, 1.0);
  const int n = 25;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += z(rng);
  const double v = 1.0 / (n + 0.01);
  const double m = v * sum;
  const auto setup =
      gaussian_setup(Eigen::VectorXd::Constant(1, m), Eigen::VectorXd::Constant(1, std::sqrt(v)));
  McmcConfig cfg;
  cfg.chains = 4;
  cfg.warmup = 500;
  cfg.samples = 3000;
  cfg.seed = 3;
  const auto chains = run_chains(setup, cfg);
  const auto s = summarize_chains(chains, setup.names);
  const double ess = s.rows[0].ess;
  REQUIRE(ess > 100);
  const double mc = 3.0 * std::sqrt(v) / std::sqrt(ess);
  CHECK(std::abs(s.rows[0].mean - m) < mc);
  CHECK(std::abs(s.rows[0].sd - std::sqrt(v)) < mc);
}

TEST_CASE("Metropolis rule") {
  for (double u : {0.0, 0.3, 0.999999}) {
    CHECK(metropolis_accept(0.0, u));
    CHECK(metropolis_accept(2.5, u));
  }
  const double delta = std::log(0.3);
  CHECK(metropolis_accept(delta, 0.2999));
  CHECK_FALSE(metropolis_accept(delta, 0.3001));
  CHECK_FALSE(metropolis_accept(-std::numeric_limits<double>::infinity(), 0.0));
}

TEST_CASE("configuration checks") {
  McmcConfig cfg;
  cfg.warmup = 50;
  CHECK_THROWS_AS(cfg.check(), UsageError);
  cfg = {};
  cfg.samples = 99;
  CHECK_THROWS_AS(cfg.check(), UsageError);
  cfg = {};
  cfg.thin = 0;
  CHECK_THROWS_AS(cfg.check(), UsageError);
  CHECK(parse_block_scheme("per-block") == BlockScheme::PerBlock);
  CHECK_THROWS_AS(parse_block_scheme("gibbs"), UsageError);
}

TEST_CASE("diagnostics") {
  std::mt19937_64 rng(99);
  const std::vector<std::string> names{"a", "b"};
  std::vector<Eigen::MatrixXd> draws;
  for (int c = 0; c < 4; ++c) draws.push_back(iid_normal(rng, 1000, 2));

  SUBCASE("i.i.d. chains") {
    const auto d = diagnostics(draws, names);
    CHECK(d.rhat(0) < 1.01);
    CHECK(d.rhat(1) < 1.01);
    CHECK(d.rhat.minCoeff() >= 1.0 - 1e-3);
    CHECK(d.ess(0) > 2000);
    CHECK(d.ok);
  }
  SUBCASE("offset chain") {
    draws[2].array() += 10.0;
    const auto d = diagnostics(draws, names);
    CHECK(d.rhat(0) > 1.2);
    CHECK_FALSE(d.ok);
  }
  SUBCASE("constant chain") {
    for (auto& m : draws) m.col(1).setConstant(2.0);
    Diagnostics d;
    CHECK_NOTHROW(d = diagnostics(draws, names));
    CHECK(d.ess(1) == 0.0);
    CHECK_FALSE(d.warnings.empty());
    CHECK_FALSE(d.ok);
  }
  SUBCASE("autocorrelated chains have smaller ESS") {
    std::vector<Eigen::MatrixXd> ar;
    for (int c = 0; c < 4; ++c) {
      Eigen::MatrixXd m = iid_normal(rng, 1000, 2);
      for (Eigen::Index i = 1; i < m.rows(); ++i) m.row(i) = 0.9 * m.row(i - 1) + std::sqrt(1 - 0.81) * m.row(i);
      ar.push_back(m);
    }
    const auto d = diagnostics(ar, names);
    // AR(1) with phi = 0.9: ESS / N is about (1 - phi) / (1 + phi).
    CHECK(d.ess(0) / 4000.0 == doctest::Approx(0.1 / 1.9).epsilon(0.5));
  }
  CHECK_THROWS_AS(diagnostics({draws[0]}, names), UsageError);
}

TEST_CASE("summaries of chains") {
  Chain c;
  c.constrained = Eigen::MatrixXd::Constant(200, 1, 0.1 + 0.2);
  const auto s = summarize_chains({c, c}, {"c"});
  CHECK(s.rows[0].mean == 0.1 + 0.2);
  CHECK(s.rows[0].sd == 0.0);
  CHECK(s.rows[0].degenerate);
  CHECK(s.method == Method::Mcmc);

  std::mt19937_64 rng(1);
  Chain a, b;
  a.constrained = iid_normal(rng, 500, 3);
  b.constrained = iid_normal(rng, 500, 3);
  a.constrained.col(0).array() += 3.0;
  b.constrained.col(0).array() += 3.0;
  const auto t = summarize_chains({a, b}, {"x", "y", "z"});
  for (const auto& r : t.rows) {
    CHECK(r.z == r.mean / r.sd);
    CHECK(r.lo90 < r.mean);
    CHECK(r.hi90 > r.mean);
  }
}

TEST_CASE("model sampler") {
  const auto dm = build_design(random_dataset(41, 600, 3, 3, {2, 3}, 0.2));
  const Model model(make_model_spec(Variant::MetaAnalytic, dm), dm);
  McmcConfig cfg;
  cfg.chains = 2;
  cfg.warmup = 400;
  cfg.samples = 300;
  cfg.seed = 77;

  SUBCASE("incremental target agrees with full evaluation") {
    auto target = model_target(model);
    const MapResult map = find_map(model);
    Eigen::VectorXd u = map.u.values;
    double lp = target->reset(u);
    CHECK(lp == doctest::Approx(model.target(u, Order::Value).value).epsilon(1e-12));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> z(0.0, 0.3);
    const auto& lay = model.layout();
    for (int step = 0; step < 300; ++step) {
      std::vector<Eigen::Index> coords;
      for (std::size_t i = 0; i < lay.dim(); ++i)
        if (!lay.is_derived(i) && rng() % 7 == 0) coords.push_back(static_cast<Eigen::Index>(i));
      Eigen::VectorXd vals(static_cast<Eigen::Index>(coords.size()));
      Eigen::VectorXd w = u;
      for (std::size_t a = 0; a < coords.size(); ++a) {
        vals(static_cast<Eigen::Index>(a)) = u(coords[a]) + z(rng);
        w(coords[a]) = vals(static_cast<Eigen::Index>(a));
      }
      const double prop = target->propose(coords, vals);
      lay.canonicalize(w);
      CHECK(prop == doctest::Approx(model.target(w, Order::Value).value).epsilon(1e-10));
      if (step % 2 == 0) {
        target->accept();
        u = w;
      }
    }
  }

  SUBCASE("deterministic and independent of the worker count") {
    ::setenv("MBLR_THREADS", "1", 1);
    const auto a = run_chains(model, cfg);
    ::setenv("MBLR_THREADS", "2", 1);
    const auto b = run_chains(model, cfg);
    ::unsetenv("MBLR_THREADS");
    REQUIRE(a.size() == 2);
    for (std::size_t c = 0; c < 2; ++c) CHECK(a[c].draws == b[c].draws);
    CHECK(a[0].draws != a[1].draws);
  }

  SUBCASE("support is preserved and acceptance is moderate") {
    const auto chains = run_chains(model, cfg);
    const auto& lay = model.layout();
    for (const auto& c : chains) {
      for (std::size_t i : lay.sd_indices()) {
        const auto col = c.constrained.col(static_cast<Eigen::Index>(i));
        CHECK(col.minCoeff() > 0.0);
        CHECK(col.maxCoeff() < lay.upper());
      }
      for (const auto& grp : lay.zero_sum_groups()) {
        Eigen::VectorXd s = c.constrained.col(static_cast<Eigen::Index>(grp.derived));
        for (std::size_t f : grp.free) s += c.constrained.col(static_cast<Eigen::Index>(f));
        CHECK(s.cwiseAbs().maxCoeff() < 1e-12);
      }
      double mean_acc = 0.0;
      for (double a : c.acceptance) mean_acc += a / static_cast<double>(c.acceptance.size());
      CHECK(mean_acc > 0.15);
      CHECK(mean_acc < 0.6);
    }
  }

  SUBCASE("preconditioned directions") {
    const MapResult map = find_map(model);
    const auto& lay = model.layout();
    std::size_t nfree = 0;
    for (std::size_t i = 0; i < lay.dim(); ++i) nfree += !lay.is_derived(i);

    const auto plain = model_setup(model, map, BlockScheme::Componentwise, false);
    CHECK(plain.directions.size() == 0);
    CHECK(plain.blocks.size() == nfree);

    const auto cw = model_setup(model, map, BlockScheme::Componentwise, true);
    REQUIRE(cw.directions.cols() == static_cast<Eigen::Index>(nfree));
    CHECK(cw.blocks.size() == nfree);
    const Eigen::MatrixXd gram = cw.directions.transpose() * cw.directions;
    CHECK((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() < 1e-10);
    for (std::size_t i = 0; i < lay.dim(); ++i)
      if (lay.is_derived(i)) CHECK(cw.directions.row(static_cast<Eigen::Index>(i)).cwiseAbs().maxCoeff() == 0.0);
    for (Eigen::Index j = 0; j < cw.scale.size(); ++j) {
      CHECK(cw.scale(j) >= 1e-4);
      CHECK(cw.scale(j) <= 5.0);
    }

    // Per-block directions stay inside their parameter block.
    const auto pb = model_setup(model, map, BlockScheme::PerBlock, true);
    for (const auto& b : pb.blocks) {
      std::set<Block> owners;
      for (Eigen::Index j : b)
        for (Eigen::Index i = 0; i < pb.directions.rows(); ++i)
          if (pb.directions(i, j) != 0.0) owners.insert(lay.block_of(static_cast<std::size_t>(i)));
      CHECK(owners.size() == 1);
    }
  }

  SUBCASE("frozen kernel without adaptation") {
    cfg.adapt = false;
    cfg.scheme = BlockScheme::PerBlock;
    const auto chains = run_chains(model, cfg);
    for (const auto& c : chains)
      for (double s : c.log_scale) CHECK(s == 0.0);
  }
}

TEST_CASE("grid means agree with the sampler") {
  const auto dm = build_design(random_dataset(42, 200, 2, 1, {}, 0.3));
  const Model model(make_model_spec(Variant::Pooled, dm), dm);
  const auto grid = grid_posterior(model, default_grid(3.0));
  McmcConfig cfg;
  cfg.chains = 4;
  cfg.warmup = 1000;
  cfg.samples = 4000;
  cfg.seed = 5;
  const auto fit = fit_mcmc(model, cfg);
  for (const char* name : {"beta0[ae0]", "beta0[ae1]"}) {
    CAPTURE(name);
    CHECK(std::abs(grid.summary.at(name).mean - fit.summary.at(name).mean) < 0.1);
  }
}
