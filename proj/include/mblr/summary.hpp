#pragma once

#include "mblr/model.hpp"

#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mblr {

enum class Method { Laplace, Grid, Mcmc };

std::string_view method_name(Method m);
Method parse_method(std::string_view text);

struct SummaryRow {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double z = 0.0;
  double lo90 = 0.0;
  double hi90 = 0.0;
  bool degenerate = false;  // sd == 0 (pinned coordinate or constant draws)
  double ess = std::numeric_limits<double>::quiet_NaN();
  double rhat = std::numeric_limits<double>::quiet_NaN();
};

/// Per-parameter posterior summary. z is mean / sd exactly; for laplace and
/// grid the interval is mean -/+ 1.6449 sd, for mcmc the empirical 5%/95%
/// quantiles.
struct PosteriorSummary {
  Method method = Method::Laplace;
  Variant variant = Variant::Pooled;
  std::string fingerprint;
  std::vector<SummaryRow> rows;
  std::vector<std::string> warnings;

  const SummaryRow* find(std::string_view name) const;
  const SummaryRow& at(std::string_view name) const;
};

/// Fills z and the normal-approximation interval; marks sd <= 0 degenerate.
SummaryRow normal_row(std::string name, double mean, double sd);

/// Columns: name,mean,sd,z,lo90,hi90.
std::string summary_to_csv(const PosteriorSummary& s);
std::string summary_to_json(const PosteriorSummary& s);

/// Reads a summary CSV. The variant is inferred from parameter names
/// (trial-level intercepts imply ma-mblr); the method is unknown and left as
/// the supplied default.
PosteriorSummary parse_summary_csv(const std::string& text, Method method = Method::Laplace);

/// ma-mblr iff any name has the two-index alpha0[..][..] form.
Variant infer_variant(const std::vector<SummaryRow>& rows);

/// Block stem of a parameter name: "beta0[x][y]" -> "beta0", index count 2.
struct NameParts {
  std::string stem;
  std::size_t indices = 0;
};
NameParts split_name(std::string_view name);
bool is_sd_name(std::string_view name);

}  // namespace mblr
