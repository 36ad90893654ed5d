#include "mblr/report.hpp"

#include "mblr/errors.hpp"
#include "mblr/numeric.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace mblr {

namespace {

using json = nlohmann::ordered_json;

json number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

bool in_scope(const std::string& name, MatchScope scope) {
  if (scope == MatchScope::All) return true;
  if (scope == MatchScope::Locations) return !is_sd_name(name);
  const auto p = split_name(name);
  return ((p.stem == "alpha" || p.stem == "beta") && p.indices == 2) || (p.stem == "beta0" && p.indices == 1);
}

double median(std::vector<double> x) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fmt(double x) {
  // Fixed precision keeps SVG coordinates short and stable.
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", x);
  return buf;
}

void scatter(std::ostringstream& o, double x0, const std::string& title, const std::string& xlab,
             const std::string& ylab, const std::vector<std::pair<std::string, std::pair<double, double>>>& pts) {
  const double size = 360.0, pad = 40.0;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& [n, p] : pts) {
    for (double v : {p.first, p.second}) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) lo = -1.0, hi = 1.0;
  if (hi - lo < 1e-12) lo -= 1.0, hi += 1.0;
  const double span = hi - lo;
  lo -= 0.05 * span;
  hi += 0.05 * span;
  const auto px = [&](double v) { return x0 + pad + (v - lo) / (hi - lo) * (size - 2 * pad); };
  const auto py = [&](double v) { return size - pad - (v - lo) / (hi - lo) * (size - 2 * pad); };

  o << "<g class=\"panel\">\n";
  o << "<text x=\"" << fmt(x0 + size / 2) << "\" y=\"20\" text-anchor=\"middle\">" << esc(title) << "</text>\n";
  o << "<rect x=\"" << fmt(x0 + pad) << "\" y=\"" << fmt(pad) << "\" width=\"" << fmt(size - 2 * pad)
    << "\" height=\"" << fmt(size - 2 * pad) << "\" fill=\"none\" stroke=\"#888\"/>\n";
  o << "<line class=\"identity\" x1=\"" << fmt(px(lo)) << "\" y1=\"" << fmt(py(lo)) << "\" x2=\"" << fmt(px(hi))
    << "\" y2=\"" << fmt(py(hi)) << "\" stroke=\"#c33\" stroke-dasharray=\"4 3\"/>\n";
  o << "<text x=\"" << fmt(x0 + size / 2) << "\" y=\"" << fmt(size - 8) << "\" text-anchor=\"middle\">" << esc(xlab)
    << "</text>\n";
  o << "<text x=\"" << fmt(x0 + 12) << "\" y=\"" << fmt(size / 2) << "\" transform=\"rotate(-90 " << fmt(x0 + 12)
    << " " << fmt(size / 2) << ")\" text-anchor=\"middle\">" << esc(ylab) << "</text>\n";
  for (const auto& [n, p] : pts) {
    if (!std::isfinite(p.first) || !std::isfinite(p.second)) continue;
    o << "<circle class=\"point\" cx=\"" << fmt(px(p.first)) << "\" cy=\"" << fmt(py(p.second))
      << "\" r=\"3\" fill=\"#247\"><title>" << esc(n) << "</title></circle>\n";
  }
  o << "</g>\n";
}

}  // namespace

MatchScope parse_match_scope(std::string_view text) {
  if (text == "auto") return MatchScope::Auto;
  if (text == "all") return MatchScope::All;
  if (text == "locations") return MatchScope::Locations;
  if (text == "shared") return MatchScope::Shared;
  throw UsageError("unknown match scope '" + std::string(text) + "' (auto, all, locations, shared)");
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

ComparisonReport compare_estimates(const PosteriorSummary& a, const PosteriorSummary& b, MatchScope scope,
                                   std::string label_a, std::string label_b) {
  if (scope == MatchScope::Auto) scope = a.variant == b.variant ? MatchScope::All : MatchScope::Shared;
  ComparisonReport r;
  r.label_a = std::move(label_a);
  r.label_b = std::move(label_b);
  r.scope = scope;
  for (const auto& ra : a.rows) {
    if (!in_scope(ra.name, scope)) continue;
    const SummaryRow* rb = b.find(ra.name);
    if (!rb) {
      r.only_a.push_back(ra.name);
      continue;
    }
    MatchedPair p{ra.name, ra.mean, rb->mean, ra.sd, rb->sd, ra.z, rb->z,
                  ra.sd > 0.0 ? rb->sd / ra.sd : std::numeric_limits<double>::quiet_NaN()};
    r.pairs.push_back(std::move(p));
  }
  for (const auto& rb : b.rows)
    if (in_scope(rb.name, scope) && !a.find(rb.name)) r.only_b.push_back(rb.name);
  std::sort(r.pairs.begin(), r.pairs.end(), [](const auto& x, const auto& y) { return x.name < y.name; });
  std::sort(r.only_a.begin(), r.only_a.end());
  std::sort(r.only_b.begin(), r.only_b.end());
  if (r.pairs.size() < 2) throw UsageError("fewer than two parameters match between the summaries");

  std::vector<double> va, vb, za, zb, ratios;
  double sza = 0.0, szb = 0.0;
  for (const auto& p : r.pairs) {
    va.push_back(p.value_a);
    vb.push_back(p.value_b);
    if (std::isfinite(p.z_a) && std::isfinite(p.z_b)) {
      za.push_back(p.z_a);
      zb.push_back(p.z_b);
      sza += std::abs(p.z_a);
      szb += std::abs(p.z_b);
    }
    if (std::isfinite(p.sd_ratio)) ratios.push_back(p.sd_ratio);
  }
  r.value_correlation = pearson(va, vb);
  r.z_correlation = pearson(za, zb);
  r.z_ratio = szb > 0.0 ? sza / szb : std::numeric_limits<double>::quiet_NaN();
  if (ratios.empty()) {
    r.mean_sd_ratio = r.median_sd_ratio = std::numeric_limits<double>::quiet_NaN();
  } else {
    double s = 0.0;
    for (double x : ratios) s += x;
    r.mean_sd_ratio = s / static_cast<double>(ratios.size());
    r.median_sd_ratio = median(ratios);
  }
  return r;
}

std::string comparison_to_csv(const ComparisonReport& r) {
  std::ostringstream o;
  o << "name,value_a,value_b,sd_a,sd_b,z_a,z_b,sd_ratio\n";
  for (const auto& p : r.pairs)
    o << p.name << ',' << format_double(p.value_a) << ',' << format_double(p.value_b) << ','
      << format_double(p.sd_a) << ',' << format_double(p.sd_b) << ',' << format_double(p.z_a) << ','
      << format_double(p.z_b) << ',' << format_double(p.sd_ratio) << '\n';
  return o.str();
}

std::string comparison_to_json(const ComparisonReport& r) {
  static constexpr const char* scopes[] = {"auto", "all", "locations", "shared"};
  json j;
  j["a"] = r.label_a;
  j["b"] = r.label_b;
  j["scope"] = scopes[static_cast<int>(r.scope)];
  j["matched"] = r.pairs.size();
  j["value_correlation"] = number(r.value_correlation);
  j["z_correlation"] = number(r.z_correlation);
  j["z_ratio"] = number(r.z_ratio);
  j["mean_sd_ratio"] = number(r.mean_sd_ratio);
  j["median_sd_ratio"] = number(r.median_sd_ratio);
  j["only_a"] = r.only_a;
  j["only_b"] = r.only_b;
  auto& pairs = j["pairs"] = json::array();
  for (const auto& p : r.pairs)
    pairs.push_back({{"name", p.name},
                     {"value_a", number(p.value_a)},
                     {"value_b", number(p.value_b)},
                     {"sd_a", number(p.sd_a)},
                     {"sd_b", number(p.sd_b)},
                     {"z_a", number(p.z_a)},
                     {"z_b", number(p.z_b)},
                     {"sd_ratio", number(p.sd_ratio)}});
  return j.dump(2) + "\n";
}

std::string comparison_to_svg(const ComparisonReport& r, PlotFamily family) {
  std::vector<std::pair<std::string, std::pair<double, double>>> pts;
  for (const auto& p : r.pairs)
    pts.push_back({p.name, family == PlotFamily::Estimates ? std::pair{p.value_a, p.value_b} : std::pair{p.z_a, p.z_b}});
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"360\" height=\"360\" viewBox=\"0 0 360 360\" "
       "font-family=\"sans-serif\" font-size=\"11\">\n";
  scatter(o, 0.0, family == PlotFamily::Estimates ? "estimates" : "z-values", r.label_a, r.label_b, pts);
  o << "</svg>\n";
  return o.str();
}

std::string summary_to_svg(const PosteriorSummary& s) {
  std::vector<const SummaryRow*> rows;
  for (const auto& r : s.rows)
    if (!is_sd_name(r.name) && std::isfinite(r.lo90) && std::isfinite(r.hi90)) rows.push_back(&r);
  double lo = 0.0, hi = 0.0;
  for (const auto* r : rows) lo = std::min(lo, r->lo90), hi = std::max(hi, r->hi90);
  if (hi - lo < 1e-12) lo -= 1.0, hi += 1.0;
  const double left = 180.0, width = 360.0, step = 14.0;
  const double height = 40.0 + step * static_cast<double>(rows.size());
  const auto px = [&](double v) { return left + (v - lo) / (hi - lo) * width; };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(left + width + 20) << "\" height=\""
    << fmt(height) << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  o << "<line class=\"zero\" x1=\"" << fmt(px(0)) << "\" y1=\"10\" x2=\"" << fmt(px(0)) << "\" y2=\""
    << fmt(height - 10) << "\" stroke=\"#c33\" stroke-dasharray=\"4 3\"/>\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = *rows[i];
    const double y = 25.0 + step * static_cast<double>(i);
    o << "<text x=\"" << fmt(left - 6) << "\" y=\"" << fmt(y + 3) << "\" text-anchor=\"end\">" << esc(r.name)
      << "</text>\n";
    o << "<line class=\"interval\" x1=\"" << fmt(px(r.lo90)) << "\" y1=\"" << fmt(y) << "\" x2=\""
      << fmt(px(r.hi90)) << "\" y2=\"" << fmt(y) << "\" stroke=\"#247\"/>\n";
    o << "<circle class=\"point\" cx=\"" << fmt(px(r.mean)) << "\" cy=\"" << fmt(y)
      << "\" r=\"3\" fill=\"#247\"><title>" << esc(r.name) << "</title></circle>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string type1_to_svg(const Type1Report& r) {
  const double bar = 60.0, gap = 40.0, height = 240.0, base = 200.0, scale = 160.0 / 0.5;
  const double width = gap + (bar + gap) * static_cast<double>(r.methods.size());
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\"" << fmt(height)
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  for (std::size_t i = 0; i < r.methods.size(); ++i) {
    const auto& m = r.methods[i];
    const double x = gap + (bar + gap) * static_cast<double>(i);
    const double h = std::min(m.rate, 0.5) * scale;
    o << "<rect class=\"rate\" x=\"" << fmt(x) << "\" y=\"" << fmt(base - h) << "\" width=\"" << fmt(bar)
      << "\" height=\"" << fmt(h) << "\" fill=\"#247\"><title>" << method_name(m.method) << " "
      << format_double(m.rate) << "</title></rect>\n";
    o << "<text x=\"" << fmt(x + bar / 2) << "\" y=\"" << fmt(base + 16) << "\" text-anchor=\"middle\">"
      << method_name(m.method) << "</text>\n";
  }
  o << "<line class=\"nominal\" x1=\"0\" y1=\"" << fmt(base - r.level * scale) << "\" x2=\"" << fmt(width)
    << "\" y2=\"" << fmt(base - r.level * scale) << "\" stroke=\"#c33\" stroke-dasharray=\"4 3\"/>\n";
  o << "</svg>\n";
  return o.str();
}

std::vector<ShrinkageRow> shrinkage_table(const std::vector<PosteriorSummary>& independent,
                                          const PosteriorSummary& joint, std::string_view stem) {
  if (independent.size() < 2) throw UsageError("shrinkage needs at least two independent fits");
  std::vector<ShrinkageRow> rows;
  for (const auto& s : independent) {
    const SummaryRow* hit = nullptr;
    for (const auto& r : s.rows) {
      const auto p = split_name(r.name);
      if (p.stem == stem && p.indices == 1) {
        if (hit) throw UsageError("independent fit has more than one " + std::string(stem) + " entry");
        hit = &r;
      }
    }
    if (!hit) throw UsageError("independent fit has no " + std::string(stem) + " entry");
    const SummaryRow* j = joint.find(hit->name);
    if (!j) throw UsageError("joint fit has no " + hit->name);
    ShrinkageRow row;
    row.issue = hit->name.substr(stem.size() + 1, hit->name.size() - stem.size() - 2);
    row.independent = hit->mean;
    row.sd_independent = hit->sd;
    row.joint = j->mean;
    row.sd_joint = j->sd;
    rows.push_back(row);
  }
  double centre = 0.0;
  for (const auto& r : rows) centre += r.independent;
  centre /= static_cast<double>(rows.size());
  for (auto& r : rows) {
    const double d = centre - r.independent;
    const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    r.shrinkage = (r.joint - r.independent) * sign;
  }
  return rows;
}

std::string shrinkage_to_csv(const std::vector<ShrinkageRow>& rows) {
  std::ostringstream o;
  o << "issue,independent,joint,sd_independent,sd_joint,shrinkage\n";
  for (const auto& r : rows)
    o << r.issue << ',' << format_double(r.independent) << ',' << format_double(r.joint) << ','
      << format_double(r.sd_independent) << ',' << format_double(r.sd_joint) << ',' << format_double(r.shrinkage)
      << '\n';
  return o.str();
}

std::string type1_to_csv(const Type1Report& r) {
  std::ostringstream o;
  o << "method,replications,failures,decisions,rejections,rate,mc_se,paired_decisions,paired_rejections,paired_rate\n";
  for (const auto& m : r.methods)
    o << method_name(m.method) << ',' << m.replications << ',' << m.failures << ',' << m.decisions << ','
      << m.rejections << ',' << format_double(m.rate) << ',' << format_double(m.mc_se) << ','
      << m.paired_decisions << ',' << m.paired_rejections << ',' << format_double(m.paired_rate) << '\n';
  return o.str();
}

std::string type1_to_json(const Type1Report& r) {
  json j;
  j["scenario"] = r.scenario;
  j["level"] = r.level;
  j["replications"] = r.replications;
  j["paired_replications"] = r.paired_replications;
  auto& ms = j["methods"] = json::array();
  for (const auto& m : r.methods)
    ms.push_back({{"method", std::string(method_name(m.method))},
                  {"failures", m.failures},
                  {"decisions", m.decisions},
                  {"rejections", m.rejections},
                  {"rate", number(m.rate)},
                  {"mc_se", number(m.mc_se)},
                  {"paired_decisions", m.paired_decisions},
                  {"paired_rejections", m.paired_rejections},
                  {"paired_rate", number(m.paired_rate)}});
  j["warnings"] = r.warnings;
  return j.dump(2) + "\n";
}

std::string simpson_study_to_json(const SimpsonStudy& s) {
  json j;
  j["within_log_or"] = s.manifest.within_log_or;
  j["pooled_log_or"] = s.manifest.pooled_log_or;
  j["replications"] = s.replicates.size();
  j["failures"] = s.failures;
  j["pooled_wrong_sign"] = s.pooled_wrong_sign;
  j["ma_correct_sign"] = s.ma_correct_sign;
  j["both"] = s.both;
  auto& reps = j["replicates"] = json::array();
  for (const auto& r : s.replicates)
    reps.push_back({{"seed", r.seed},
                    {"failed", r.failed},
                    {"pooled_estimate", number(r.pooled_estimate)},
                    {"ma_estimate", number(r.ma_estimate)}});
  return j.dump(2) + "\n";
}

std::string borrowing_study_to_json(const BorrowingStudy& s) {
  json j;
  j["rare_issue"] = s.rare_issue;
  j["replications"] = s.replicates.size();
  j["failures"] = s.failures;
  j["positive_fraction"] = s.positive_fraction;
  j["largest_fraction"] = s.largest_fraction;
  auto& reps = j["replicates"] = json::array();
  for (const auto& r : s.replicates)
    reps.push_back({{"seed", r.seed},
                    {"failed", r.failed},
                    {"independent", number(r.independent)},
                    {"joint", number(r.joint)},
                    {"shrinkage", number(r.shrinkage)},
                    {"largest", r.largest}});
  return j.dump(2) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
  if (!out) throw UsageError("cannot write " + path.string());
}

}  // namespace mblr
