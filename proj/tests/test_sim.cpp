#include "mblr/errors.hpp"
#include "mblr/numeric.hpp"
#include "mblr/sim.hpp"

#include <doctest.h>

#include <cmath>

using namespace mblr;

namespace {

SimSpec one_issue(double alpha0, std::size_t n) {
  SimSpec s;
  s.name = "flat";
  s.issues = {"ae"};
  s.trials = {{"T", n / 2, n / 2}};
  if (alpha0 != 0.0) s.truth["alpha0[ae]"] = alpha0;
  s.seed = 7;
  return s;
}

double event_rate(const SafetyDataset& d, std::size_t k) {
  double s = 0.0;
  for (const auto& r : d.records) s += r.outcomes[k];
  return s / static_cast<double>(d.records.size());
}

double log_or(double et, double nt, double ec, double nc) {
  return std::log(et / (nt - et)) - std::log(ec / (nc - ec));
}

}  // namespace

TEST_CASE("all-zero truth gives event rate one half") {
  const auto d = generate_dataset(one_issue(0.0, 10000));
  CHECK(d.size() == 10000);
  const double p = event_rate(d, 0);
  CHECK(p >= 0.49);
  CHECK(p <= 0.51);
}

TEST_CASE("intercept ln 9 gives event rate 0.9") {
  const auto d = generate_dataset(one_issue(std::log(9.0), 10000));
  CHECK(std::abs(event_rate(d, 0) - 0.9) <= 0.01);
}

TEST_CASE("covariate levels follow their probabilities") {
  const auto s = builtin_scenario("default");
  const auto d = generate_dataset(s);
  CHECK(d.size() == 2000);
  std::vector<double> age(3, 0.0);
  for (const auto& r : d.records) age[static_cast<std::size_t>(r.levels[1])] += 1.0;
  for (std::size_t v = 0; v < 3; ++v) CHECK(std::abs(age[v] / 2000.0 - s.covariates[1].probs[v]) < 0.04);
}

TEST_CASE("generation is deterministic in the seed") {
  const auto s = builtin_scenario("null");
  CHECK(generate_dataset(s, 11) == generate_dataset(s, 11));
  CHECK_FALSE(generate_dataset(s, 11) == generate_dataset(s, 12));
  CHECK(replication_seed(1, 0) != replication_seed(1, 1));
  CHECK(replication_seed(1, 0) != replication_seed(2, 0));
  CHECK(replication_seed(5, 3) == replication_seed(5, 3));
}

TEST_CASE("arm structure follows the trial sizes") {
  const auto s = builtin_scenario("default");
  const auto d = generate_dataset(s);
  std::vector<std::array<std::size_t, 2>> counts(3, {0, 0});
  for (const auto& r : d.records) ++counts[r.trial][static_cast<std::size_t>(r.treatment)];
  for (std::size_t l = 0; l < 3; ++l) {
    CHECK(counts[l][0] == s.trials[l].control);
    CHECK(counts[l][1] == s.trials[l].treated);
  }
}

TEST_CASE("meta-analytic truth inherits trial-level values") {
  const auto s = builtin_scenario("default");
  const auto p = truth_parameters(s);
  const auto& lay = *p.layout;
  CHECK(p.values(static_cast<Eigen::Index>(*lay.find("alpha0[nausea][T2]"))) == doctest::Approx(-2.0));
  CHECK(p.values(static_cast<Eigen::Index>(*lay.find("alpha0[nausea][T1]"))) == doctest::Approx(-1.8));
  CHECK(p.values(static_cast<Eigen::Index>(*lay.find("beta0[rash][T3]"))) == doctest::Approx(0.7));
}

TEST_CASE("scenario validation") {
  auto s = one_issue(0.0, 10);
  s.truth["gamma[ae]"] = 1.0;
  CHECK_THROWS_AS(s.check(), UsageError);

  s = builtin_scenario("default");
  s.covariates[0].probs = {0.5, 0.6};
  CHECK_THROWS_AS(s.check(), UsageError);

  s = builtin_scenario("null");
  s.trials[0].treated = 0;
  CHECK_THROWS_AS(s.check(), UsageError);

  CHECK_THROWS_AS(builtin_scenario("nope"), UsageError);
  CHECK_THROWS_AS(parse_sim_spec("{"), UsageError);
}

TEST_CASE("scenario JSON round trip") {
  for (const auto& name : builtin_scenario_names()) {
    const auto s = builtin_scenario(name);
    const auto text = sim_spec_to_json(s);
    const auto back = parse_sim_spec(text);
    CHECK(sim_spec_to_json(back) == text);
    CHECK(generate_dataset(back) == generate_dataset(s));
  }
}

TEST_CASE("decision rules") {
  CHECK(reject_z(1.7, 0.10));
  CHECK_FALSE(reject_z(1.6, 0.10));
  CHECK(reject_z(-1.7, 0.10));
  CHECK_FALSE(reject_z(1.9, 0.05));
  CHECK(reject_z(2.0, 0.05));
  CHECK(reject_interval(0.1, 0.5));
  CHECK(reject_interval(-0.5, -0.1));
  CHECK_FALSE(reject_interval(-0.1, 0.5));
}

TEST_CASE("Simpson manifest reverses the sign") {
  const auto s = SimpsonSpec::default_spec();
  const auto m = simpson_manifest(s);
  CHECK(m.within_log_or == 0.4);
  CHECK(m.pooled_log_or < 0.0);

  // Arm-pooled log-OR from a large draw agrees with the analytic value.
  auto big = s;
  big.sizes = {400000, 400000};
  const auto d = generate_simpson(big, 3).data;
  double et = 0, nt = 0, ec = 0, nc = 0;
  for (const auto& r : d.records) (r.treatment ? et : ec) += r.outcomes[0], (r.treatment ? nt : nc) += 1;
  CHECK(std::abs(log_or(et, nt, ec, nc) - m.pooled_log_or) < 0.03);

  auto flat = s;
  flat.allocations = {0.5, 0.5};
  CHECK_THROWS_AS(simpson_manifest(flat), UsageError);

  CHECK(simpson_spec_to_json(parse_simpson_spec(simpson_spec_to_json(s))) == simpson_spec_to_json(s));
}

TEST_CASE("Simpson data keeps the within-trial odds ratio") {
  const auto s = SimpsonSpec::default_spec();
  const auto d = generate_simpson(s).data;
  for (std::size_t l = 0; l < 2; ++l) {
    double et = 0, nt = 0, ec = 0, nc = 0;
    for (const auto& r : d.records) {
      if (r.trial != l) continue;
      (r.treatment ? et : ec) += r.outcomes[0];
      (r.treatment ? nt : nc) += 1;
    }
    const double se = std::sqrt(1 / et + 1 / (nt - et) + 1 / ec + 1 / (nc - ec));
    CHECK(std::abs(log_or(et, nt, ec, nc) - 0.4) < 3 * se);
  }
}

TEST_CASE("type-I configuration checks") {
  Type1Config c;
  c.methods = {Method::Grid};
  c.variant = Variant::MetaAnalytic;
  CHECK_THROWS_AS(c.check(), UsageError);
  c = Type1Config{};
  c.replications = 10;
  CHECK_THROWS_AS(c.check(), UsageError);
  c = Type1Config{};
  c.level = 1.5;
  CHECK_THROWS_AS(c.check(), UsageError);

  c = Type1Config{};
  c.methods = {Method::Laplace};
  c.replications = 50;
  CHECK_THROWS_AS(run_type1(builtin_scenario("borrowing"), c), UsageError);
}

TEST_CASE("type-I study with laplace on the null scenario") {
  Type1Config c;
  c.methods = {Method::Laplace};
  c.replications = 50;
  c.seed = 3;
  const auto r = run_type1(builtin_scenario("null"), c);
  const auto& m = r.at(Method::Laplace);
  CHECK(m.failures == 0);
  CHECK(m.decisions == 100);
  CHECK(m.rate >= 0.0);
  CHECK(m.rate <= 0.3);
  CHECK(m.paired_rate == m.rate);

  c.target = Type1Target::Interactions;
  CHECK_THROWS_AS(run_type1(builtin_scenario("null"), c), UsageError);
  auto with_sex = builtin_scenario("null");
  with_sex.covariates = {{"sex", {"F", "M"}, {0.5, 0.5}}};
  const auto ri = run_type1(with_sex, c);
  CHECK(ri.at(Method::Laplace).decisions == 200);
}

TEST_CASE("Simpson and borrowing studies run") {
  const auto ss = run_simpson_study(SimpsonSpec::default_spec(), 3, 5);
  CHECK(ss.replicates.size() == 3);
  CHECK(ss.failures == 0);
  CHECK(ss.pooled_wrong_sign == 1.0);

  const auto bs = run_borrowing_study(builtin_scenario("borrowing"), "severe", 2, 5);
  CHECK(bs.replicates.size() == 2);
  CHECK(bs.failures == 0);
  CHECK_THROWS_AS(run_borrowing_study(builtin_scenario("borrowing"), "nope", 2, 5), UsageError);
}
