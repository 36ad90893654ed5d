#include "mblr/errors.hpp"
#include "mblr/report.hpp"

#include <doctest.h>

#include <cmath>

using namespace mblr;

namespace {

PosteriorSummary summary_of(const std::vector<std::pair<std::string, std::pair<double, double>>>& rows,
                            Variant v = Variant::Pooled) {
  PosteriorSummary s;
  s.variant = v;
  for (const auto& [n, ms] : rows) s.rows.push_back(normal_row(n, ms.first, ms.second));
  return s;
}

std::size_t count(const std::string& text, const std::string& what) {
  std::size_t n = 0;
  for (auto p = text.find(what); p != std::string::npos; p = text.find(what, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("identical summaries compare perfectly") {
  const auto a = summary_of({{"alpha0[x]", {-1.0, 0.2}}, {"beta0[x]", {0.5, 0.3}}, {"beta0[y]", {0.1, 0.4}}});
  const auto r = compare_estimates(a, a);
  CHECK(r.pairs.size() == 3);
  CHECK(r.pairs[0].name == "alpha0[x]");
  CHECK(r.only_a.empty());
  CHECK(r.only_b.empty());
  for (const auto& p : r.pairs) CHECK(p.sd_ratio == 1.0);
  CHECK(r.value_correlation == doctest::Approx(1.0));
  CHECK(r.z_correlation == doctest::Approx(1.0));
  CHECK(r.z_ratio == doctest::Approx(1.0));
  CHECK(r.mean_sd_ratio == doctest::Approx(1.0));
  CHECK(r.median_sd_ratio == doctest::Approx(1.0));
}

TEST_CASE("anticorrelated estimates") {
  const auto a = summary_of({{"p[a]", {1.0, 1.0}}, {"p[b]", {2.0, 1.0}}, {"p[c]", {3.0, 1.0}}});
  const auto b = summary_of({{"p[a]", {3.0, 2.0}}, {"p[b]", {2.0, 2.0}}, {"p[c]", {1.0, 2.0}}});
  const auto r = compare_estimates(a, b);
  CHECK(r.value_correlation == doctest::Approx(-1.0));
  CHECK(r.mean_sd_ratio == doctest::Approx(2.0));
  CHECK(r.z_ratio == doctest::Approx(2.0));
}

TEST_CASE("comparison CSV has one row per match") {
  const auto a = summary_of({{"p[a]", {1.0, 1.0}}, {"p[b]", {2.0, 1.0}}, {"p[c]", {3.0, 1.0}}, {"q", {0.0, 1.0}}});
  const auto b = summary_of({{"p[a]", {1.5, 1.0}}, {"p[b]", {2.0, 1.0}}, {"p[c]", {2.5, 1.0}}, {"r", {0.0, 1.0}}});
  const auto r = compare_estimates(a, b);
  const auto csv = comparison_to_csv(r);
  CHECK(count(csv, "\n") == 4);
  CHECK(csv.rfind("name,value_a,value_b,sd_a,sd_b,z_a,z_b,sd_ratio\n", 0) == 0);
  CHECK(r.only_a == std::vector<std::string>{"q"});
  CHECK(r.only_b == std::vector<std::string>{"r"});
  CHECK(comparison_to_csv(compare_estimates(a, b)) == csv);
  CHECK(comparison_to_json(compare_estimates(a, b)) == comparison_to_json(r));
}

TEST_CASE("too few matches is a usage error") {
  const auto a = summary_of({{"p[a]", {1.0, 1.0}}});
  CHECK_THROWS_AS(compare_estimates(a, a), UsageError);
}

TEST_CASE("scopes") {
  const auto pooled = summary_of({{"alpha0[x]", {-1, 1}},
                                  {"beta0[x]", {0.2, 1}},
                                  {"alpha[x][s=F]", {0.1, 1}},
                                  {"beta[x][s=F]", {0.3, 1}},
                                  {"sigma_0", {1, 0.2}}});
  const auto ma = summary_of({{"alpha0[x]", {-1, 1}},
                              {"alpha0[x][T]", {-1, 1}},
                              {"beta0[x]", {0.1, 1}},
                              {"beta0[x][T]", {0.1, 1}},
                              {"alpha[x][s=F]", {0.2, 1}},
                              {"beta[x][s=F]", {0.3, 1}},
                              {"sigma_0", {1, 0.2}}},
                             Variant::MetaAnalytic);
  const auto shared = compare_estimates(ma, pooled);
  CHECK(shared.scope == MatchScope::Shared);
  CHECK(shared.pairs.size() == 3);
  CHECK(compare_estimates(pooled, pooled, MatchScope::Locations).pairs.size() == 4);
  CHECK(compare_estimates(pooled, pooled).pairs.size() == 5);
  CHECK(parse_match_scope("shared") == MatchScope::Shared);
  CHECK_THROWS_AS(parse_match_scope("some"), UsageError);
}

TEST_CASE("SVG structure") {
  const auto a = summary_of({{"p[a]", {1.0, 1.0}}, {"p[b]", {2.0, 1.0}}, {"p[c]", {3.0, 1.0}}});
  const auto b = summary_of({{"p[a]", {1.5, 1.0}}, {"p[b]", {2.0, 1.0}}, {"p[c]", {2.5, 1.0}}});
  for (auto f : {PlotFamily::Estimates, PlotFamily::ZValues}) {
    const auto svg = comparison_to_svg(compare_estimates(a, b), f);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(count(svg, "class=\"identity\"") == 1);
    CHECK(count(svg, "<circle class=\"point\"") == 3);
    CHECK(count(svg, "<title>p[b]</title>") == 1);
    CHECK(svg == comparison_to_svg(compare_estimates(a, b), f));
  }
}

TEST_CASE("shrinkage table") {
  std::vector<PosteriorSummary> ind{summary_of({{"beta0[a]", {0.0, 1}}, {"alpha0[a]", {-1, 1}}}),
                                    summary_of({{"beta0[b]", {1.0, 1}}}), summary_of({{"beta0[c]", {2.0, 1}}})};
  const auto same = summary_of({{"beta0[a]", {0.0, 1}}, {"beta0[b]", {1.0, 1}}, {"beta0[c]", {2.0, 1}}});
  const auto rows = shrinkage_table(ind, same);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].issue == "a");
  for (const auto& r : rows) CHECK(r.shrinkage == 0.0);

  const auto toward = summary_of({{"beta0[a]", {0.5, 1}}, {"beta0[b]", {1.0, 1}}, {"beta0[c]", {1.8, 1}}});
  const auto t = shrinkage_table(ind, toward);
  CHECK(t[0].shrinkage == doctest::Approx(0.5));
  CHECK(t[1].shrinkage == 0.0);
  CHECK(t[2].shrinkage == doctest::Approx(0.2));

  const auto away = summary_of({{"beta0[a]", {-0.5, 1}}, {"beta0[b]", {1.0, 1}}, {"beta0[c]", {2.0, 1}}});
  CHECK(shrinkage_table(ind, away)[0].shrinkage == doctest::Approx(-0.5));
  CHECK(count(shrinkage_to_csv(t), "\n") == 4);

  CHECK_THROWS_AS(shrinkage_table(ind, summary_of({{"beta0[a]", {0, 1}}})), UsageError);
}
