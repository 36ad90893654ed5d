#pragma once

#include "mblr/sim.hpp"
#include "mblr/summary.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mblr {

/// Which parameters two summaries are matched on.
///  - All: every name present in both.
///  - Locations: names present in both, excluding standard deviations.
///  - Shared: alpha[k][g], beta[k][g] and the issue-level beta0[k], the
///    subset with a common meaning under both variants.
///  - Auto: Shared when the variants differ, else All.
enum class MatchScope { Auto, All, Locations, Shared };

MatchScope parse_match_scope(std::string_view text);

struct MatchedPair {
  std::string name;
  double value_a = 0.0;
  double value_b = 0.0;
  double sd_a = 0.0;
  double sd_b = 0.0;
  double z_a = 0.0;
  double z_b = 0.0;
  double sd_ratio = 0.0;  // sd_b / sd_a; NaN when sd_a is 0
};

struct ComparisonReport {
  std::string label_a = "a";
  std::string label_b = "b";
  MatchScope scope = MatchScope::All;
  std::vector<MatchedPair> pairs;
  std::vector<std::string> only_a;
  std::vector<std::string> only_b;
  double value_correlation = 0.0;
  double z_correlation = 0.0;
  /// mean |z_a| / mean |z_b|.
  double z_ratio = 0.0;
  /// Over pairs with finite sd_ratio.
  double mean_sd_ratio = 0.0;
  double median_sd_ratio = 0.0;
};

/// Pairs and unmatched lists are sorted by name. Throws UsageError when fewer
/// than two parameters match.
ComparisonReport compare_estimates(const PosteriorSummary& a, const PosteriorSummary& b,
                                   MatchScope scope = MatchScope::Auto, std::string label_a = "a",
                                   std::string label_b = "b");

/// Pearson correlation; NaN when either side is constant.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Columns: name,value_a,value_b,sd_a,sd_b,z_a,z_b,sd_ratio.
std::string comparison_to_csv(const ComparisonReport& r);
std::string comparison_to_json(const ComparisonReport& r);
enum class PlotFamily { Estimates, ZValues };
/// Scatter of b against a with one identity line and one titled point per pair.
std::string comparison_to_svg(const ComparisonReport& r, PlotFamily family = PlotFamily::Estimates);

struct ShrinkageRow {
  std::string issue;
  double independent = 0.0;
  double joint = 0.0;
  double sd_independent = 0.0;
  double sd_joint = 0.0;
  /// (joint - independent) * sign(mean of independent estimates - independent).
  double shrinkage = 0.0;
};

/// `independent` holds one single-issue fit per issue; rows follow that
/// order. Compares beta0[issue].
std::vector<ShrinkageRow> shrinkage_table(const std::vector<PosteriorSummary>& independent,
                                          const PosteriorSummary& joint, std::string_view stem = "beta0");
std::string shrinkage_to_csv(const std::vector<ShrinkageRow>& rows);

/// Location means with 90% intervals and a zero line.
std::string summary_to_svg(const PosteriorSummary& s);

std::string type1_to_csv(const Type1Report& r);
/// Rejection rate bars with a line at the nominal level.
std::string type1_to_svg(const Type1Report& r);
std::string type1_to_json(const Type1Report& r);

std::string simpson_study_to_json(const SimpsonStudy& s);
std::string borrowing_study_to_json(const BorrowingStudy& s);

/// Writes text to a file, creating parent directories. Throws UsageError.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace mblr
